#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "df/config.hpp"
#include "df/numerics.hpp"
#include "df/session.hpp"

namespace df {

struct ToyModelSpec {
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t head_dim = 8;
  std::size_t hw = 16;
  std::size_t denoise_steps = 2;
  std::uint64_t seed = 0;
  double weight_scale = 1.0;

  void validate() const;
  /// Shape of a session driven by this model; window and N stay default.
  SessionConfig session_shape() const;
};

/// Seeded multi-layer multi-head attention stack. Each layer projects the
/// hidden frame to per-head Q/K/V, attends, projects back and adds the
/// residual followed by RMS normalization. Weights are uniform in
/// [-1, 1) * weight_scale / sqrt(model_dim); no training.
class ToyModel final : public Workload {
 public:
  explicit ToyModel(ToyModelSpec spec);

  const ToyModelSpec& spec() const noexcept { return spec_; }
  std::size_t model_dim() const noexcept { return spec_.num_heads * spec_.head_dim; }

  const Matrix& wq(std::size_t layer) const { return layers_.at(layer).wq; }
  const Matrix& wk(std::size_t layer) const { return layers_.at(layer).wk; }
  const Matrix& wv(std::size_t layer) const { return layers_.at(layer).wv; }
  const Matrix& wo(std::size_t layer) const { return layers_.at(layer).wo; }

  /// Cache-free forward of one frame through every layer (self-attention
  /// within the frame only).
  Matrix forward(const Matrix& frame) const;

  void check_compatible(const SessionConfig& config) const override;
  Matrix initial_frame(std::size_t ar_step) const override;
  Matrix denoise_input(const Matrix& frame, std::size_t ar_step,
                       std::size_t denoise_step) const override;
  std::vector<HeadQKV> project(std::size_t layer, const Matrix& hidden, std::size_t ar_step,
                               std::size_t denoise_step) const override;
  Matrix combine(std::size_t layer, const Matrix& hidden,
                 std::span<const Matrix> head_outputs) const override;

 private:
  struct Layer {
    Matrix wq, wk, wv, wo;
  };
  ToyModelSpec spec_;
  std::vector<Layer> layers_;
};

ToyModel build_toy_model(const ToyModelSpec& spec);

/// Region a planted head is biased toward.
enum class PlantedLabel { sink, neighbor, current };

std::string_view to_string(PlantedLabel label) noexcept;
std::optional<PlantedLabel> planted_label_from_string(std::string_view s) noexcept;

/// Axis along which stability conditions vary.
enum class ConditionKind { prompt_seed, ar_step, denoise_step };

std::string_view to_string(ConditionKind kind) noexcept;
std::optional<ConditionKind> condition_kind_from_string(std::string_view s) noexcept;

struct Perturbation {
  ConditionKind kind = ConditionKind::prompt_seed;
  std::uint64_t index = 0;
  double strength = 0.0;
};

struct PlantedSpec {
  std::vector<PlantedLabel> labels;  // one per flat head
  double margin = 0.0;               // additive logit offset toward the label
  std::uint64_t noise_seed = 0;
  double content_scale = 1.0;        // amplitude of the random Q/K/V content
  std::optional<Perturbation> perturbation;

  void validate(std::size_t total_heads) const;
  std::size_t count(PlantedLabel label) const noexcept;
};

/// Labels with the given counts per class, shuffled deterministically by
/// `seed`.
std::vector<PlantedLabel> planted_labels(std::size_t sink, std::size_t neighbor,
                                         std::size_t current, std::uint64_t seed);

/// Q/K/V streams with planted frame preferences. Head dims are laid out as
/// [window_len frame slots | sink flag | content]. A key of frame f sets
/// slot f mod window_len (or the sink flag for the sink frame); a query at
/// step i puts `margin` logits on the slots of its labeled region, so the
/// labeled region gains exactly `margin` in every logit it owns. The
/// hidden state is ignored; combine concatenates the head outputs.
class PlantedWorkload final : public Workload {
 public:
  PlantedWorkload(PlantedSpec spec, const SessionConfig& shape);

  const PlantedSpec& spec() const noexcept { return spec_; }

  void check_compatible(const SessionConfig& config) const override;
  Matrix initial_frame(std::size_t ar_step) const override;
  Matrix denoise_input(const Matrix& frame, std::size_t ar_step,
                       std::size_t denoise_step) const override;
  std::vector<HeadQKV> project(std::size_t layer, const Matrix& hidden, std::size_t ar_step,
                               std::size_t denoise_step) const override;
  Matrix combine(std::size_t layer, const Matrix& hidden,
                 std::span<const Matrix> head_outputs) const override;

  /// Smallest head_dim that fits the slot layout for `window_len`.
  static std::size_t min_head_dim(std::size_t window_len) noexcept { return window_len + 2; }

 private:
  PlantedSpec spec_;
  SessionConfig shape_;
};

PlantedWorkload planted_stream(const PlantedSpec& spec, const SessionConfig& config);

/// Copy of `spec` whose queries carry condition-specific logit noise of the
/// given strength on each region. strength = 0 leaves the streams unchanged.
PlantedSpec stability_perturb(const PlantedSpec& spec, ConditionKind kind,
                              std::uint64_t condition_index, double strength);

/// FNV-1a over the raw bytes of the matrix entries.
std::uint64_t matrix_hash(const Matrix& m) noexcept;

}  // namespace df
