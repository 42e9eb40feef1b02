#include "df/scenario.hpp"

#include <bit>
#include <cmath>
#include <string>
#include <utility>

#include "df/rng.hpp"

namespace df {

namespace {

// Sub-stream tags; changing any of these changes every golden.
constexpr std::uint64_t kWeightTag = 0x5745'4947'4854ULL;
constexpr std::uint64_t kFrameTag = 0x4652'414DULL;
constexpr std::uint64_t kDenoiseTag = 0x444E'4F49'5345ULL;
constexpr std::uint64_t kQueryTag = 0x51ULL;
constexpr std::uint64_t kKeyTag = 0x4BULL;
constexpr std::uint64_t kValueTag = 0x56ULL;
constexpr std::uint64_t kPerturbTag = 0x5045'5254ULL;
constexpr std::uint64_t kShuffleTag = 0x5348'5546ULL;

Matrix uniform_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double amplitude) {
  Xoshiro256 rng(seed);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = amplitude * rng.uniform(-1.0, 1.0);
  return m;
}

Matrix column_block(const Matrix& m, std::size_t first, std::size_t count) {
  Matrix out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = m(r, first + c);
  return out;
}

Matrix concat_columns(std::span<const Matrix> blocks) {
  if (blocks.empty()) return {};
  std::size_t cols = 0;
  for (const auto& b : blocks) cols += b.cols();
  Matrix out(blocks.front().rows(), cols);
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    if (b.rows() != out.rows()) throw ShapeError("concat_columns: row mismatch");
    for (std::size_t r = 0; r < b.rows(); ++r)
      for (std::size_t c = 0; c < b.cols(); ++c) out(r, offset + c) = b(r, c);
    offset += b.cols();
  }
  return out;
}

void rms_normalize_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    double ss = 0.0;
    for (double x : row) ss += x * x;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(row.size()) + 1e-6);
    for (double& x : row) x *= inv;
  }
}

void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("workload/session mismatch: " + what);
}

}  // namespace

void ToyModelSpec::validate() const {
  if (num_layers == 0 || num_heads == 0 || head_dim == 0 || hw == 0 || denoise_steps == 0) {
    throw ConfigError("toy model spec: all counts must be >= 1");
  }
  if (!(weight_scale >= 0.0) || !std::isfinite(weight_scale)) {
    throw ConfigError("toy model spec: weight_scale must be finite and >= 0");
  }
}

SessionConfig ToyModelSpec::session_shape() const {
  SessionConfig c;
  c.num_layers = num_layers;
  c.num_heads = num_heads;
  c.head_dim = head_dim;
  c.hw = hw;
  c.denoise_steps = denoise_steps;
  return c;
}

ToyModel::ToyModel(ToyModelSpec spec) : spec_(spec) {
  spec_.validate();
  const std::size_t d = model_dim();
  const double amp = spec_.weight_scale / std::sqrt(static_cast<double>(d));
  layers_.reserve(spec_.num_layers);
  for (std::size_t l = 0; l < spec_.num_layers; ++l) {
    Layer layer;
    layer.wq = uniform_matrix(d, d, derive_seed(spec_.seed, {kWeightTag, l, 0}), amp);
    layer.wk = uniform_matrix(d, d, derive_seed(spec_.seed, {kWeightTag, l, 1}), amp);
    layer.wv = uniform_matrix(d, d, derive_seed(spec_.seed, {kWeightTag, l, 2}), amp);
    layer.wo = uniform_matrix(d, d, derive_seed(spec_.seed, {kWeightTag, l, 3}), amp);
    layers_.push_back(std::move(layer));
  }
}

ToyModel build_toy_model(const ToyModelSpec& spec) { return ToyModel(spec); }

void ToyModel::check_compatible(const SessionConfig& c) const {
  check_shape(c.num_layers == spec_.num_layers, "num_layers");
  check_shape(c.num_heads == spec_.num_heads, "num_heads");
  check_shape(c.head_dim == spec_.head_dim, "head_dim");
  check_shape(c.hw == spec_.hw, "hw");
}

Matrix ToyModel::initial_frame(std::size_t ar_step) const {
  return uniform_matrix(spec_.hw, model_dim(), derive_seed(spec_.seed, {kFrameTag, ar_step}), 1.0);
}

Matrix ToyModel::denoise_input(const Matrix& frame, std::size_t ar_step,
                               std::size_t denoise_step) const {
  const double sigma = 0.5 / static_cast<double>(denoise_step + 1);
  Matrix noise = uniform_matrix(frame.rows(), frame.cols(),
                                derive_seed(spec_.seed, {kDenoiseTag, ar_step, denoise_step}),
                                sigma);
  Matrix out = frame;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += noise.data()[i];
  return out;
}

std::vector<HeadQKV> ToyModel::project(std::size_t layer, const Matrix& hidden, std::size_t,
                                       std::size_t) const {
  const auto& w = layers_.at(layer);
  const Matrix q = matmul(hidden, w.wq);
  const Matrix k = matmul(hidden, w.wk);
  const Matrix v = matmul(hidden, w.wv);
  std::vector<HeadQKV> heads(spec_.num_heads);
  for (std::size_t h = 0; h < spec_.num_heads; ++h) {
    const std::size_t off = h * spec_.head_dim;
    heads[h] = {column_block(q, off, spec_.head_dim), column_block(k, off, spec_.head_dim),
                column_block(v, off, spec_.head_dim)};
  }
  return heads;
}

Matrix ToyModel::combine(std::size_t layer, const Matrix& hidden,
                         std::span<const Matrix> head_outputs) const {
  Matrix mixed = matmul(concat_columns(head_outputs), layers_.at(layer).wo);
  for (std::size_t i = 0; i < mixed.size(); ++i) mixed.data()[i] += hidden.data()[i];
  rms_normalize_rows(mixed);
  return mixed;
}

Matrix ToyModel::forward(const Matrix& frame) const {
  Matrix h = frame;
  for (std::size_t l = 0; l < spec_.num_layers; ++l) {
    const auto qkv = project(l, h, 0, 0);
    std::vector<Matrix> outs;
    outs.reserve(qkv.size());
    for (const auto& head : qkv) outs.push_back(attention(head.q, head.k, head.v).output);
    h = combine(l, h, outs);
  }
  return h;
}

std::string_view to_string(PlantedLabel label) noexcept {
  switch (label) {
    case PlantedLabel::sink: return "sink";
    case PlantedLabel::neighbor: return "neighbor";
    case PlantedLabel::current: return "current";
  }
  return "?";
}

std::optional<PlantedLabel> planted_label_from_string(std::string_view s) noexcept {
  if (s == "sink") return PlantedLabel::sink;
  if (s == "neighbor") return PlantedLabel::neighbor;
  if (s == "current") return PlantedLabel::current;
  return std::nullopt;
}

std::string_view to_string(ConditionKind kind) noexcept {
  switch (kind) {
    case ConditionKind::prompt_seed: return "prompt_seed";
    case ConditionKind::ar_step: return "ar_step";
    case ConditionKind::denoise_step: return "denoise_step";
  }
  return "?";
}

std::optional<ConditionKind> condition_kind_from_string(std::string_view s) noexcept {
  if (s == "prompt_seed") return ConditionKind::prompt_seed;
  if (s == "ar_step") return ConditionKind::ar_step;
  if (s == "denoise_step") return ConditionKind::denoise_step;
  return std::nullopt;
}

void PlantedSpec::validate(std::size_t total_heads) const {
  if (labels.size() != total_heads) {
    throw ConfigError("planted spec: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(total_heads) + " heads");
  }
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw ConfigError("planted margin must be >= 0");
  if (!(content_scale >= 0.0) || !std::isfinite(content_scale)) {
    throw ConfigError("planted content_scale must be >= 0");
  }
  if (perturbation && !(perturbation->strength >= 0.0)) {
    throw ConfigError("perturbation strength must be >= 0");
  }
}

std::size_t PlantedSpec::count(PlantedLabel label) const noexcept {
  std::size_t n = 0;
  for (auto l : labels) n += l == label;
  return n;
}

std::vector<PlantedLabel> planted_labels(std::size_t sink, std::size_t neighbor,
                                         std::size_t current, std::uint64_t seed) {
  std::vector<PlantedLabel> out;
  out.insert(out.end(), sink, PlantedLabel::sink);
  out.insert(out.end(), neighbor, PlantedLabel::neighbor);
  out.insert(out.end(), current, PlantedLabel::current);
  Xoshiro256 rng(derive_seed(seed, {kShuffleTag}));
  for (std::size_t i = out.size(); i > 1; --i) {
    std::swap(out[i - 1], out[static_cast<std::size_t>(rng.below(i))]);
  }
  return out;
}

PlantedWorkload::PlantedWorkload(PlantedSpec spec, const SessionConfig& shape)
    : spec_(std::move(spec)), shape_(shape) {
  spec_.validate(shape_.total_heads());
  if (shape_.head_dim < min_head_dim(shape_.window_len)) {
    throw ConfigError("planted workload needs head_dim >= window_len + 2 (got " +
                      std::to_string(shape_.head_dim) + ")");
  }
}

PlantedWorkload planted_stream(const PlantedSpec& spec, const SessionConfig& config) {
  return PlantedWorkload(spec, config);
}

void PlantedWorkload::check_compatible(const SessionConfig& c) const {
  check_shape(c.num_layers == shape_.num_layers, "num_layers");
  check_shape(c.num_heads == shape_.num_heads, "num_heads");
  check_shape(c.head_dim == shape_.head_dim, "head_dim");
  check_shape(c.hw == shape_.hw, "hw");
  check_shape(c.window_len == shape_.window_len, "window_len");
  check_shape(c.sink_frame == shape_.sink_frame, "sink_frame");
}

Matrix PlantedWorkload::initial_frame(std::size_t) const {
  return Matrix(shape_.hw, shape_.num_heads * shape_.head_dim);
}

Matrix PlantedWorkload::denoise_input(const Matrix& frame, std::size_t, std::size_t) const {
  return frame;
}

std::vector<HeadQKV> PlantedWorkload::project(std::size_t layer, const Matrix&,
                                              std::size_t ar_step,
                                              std::size_t denoise_step) const {
  const std::size_t slots = shape_.window_len;
  const std::size_t flag = slots;
  const std::size_t d = shape_.head_dim;
  const std::size_t hw = shape_.hw;
  const std::size_t sink = shape_.sink_frame;
  // A query entry of offset * unit adds `offset` to the logit under the
  // default 1/sqrt(head_dim) scale.
  const double unit = std::sqrt(static_cast<double>(d));
  const std::size_t i = ar_step;

  std::vector<HeadQKV> heads(shape_.num_heads);
  for (std::size_t h = 0; h < shape_.num_heads; ++h) {
    const std::size_t flat = layer * shape_.num_heads + h;
    const auto label = spec_.labels[flat];

    Xoshiro256 krng(derive_seed(spec_.noise_seed, {kKeyTag, layer, h, i, denoise_step}));
    Xoshiro256 qrng(derive_seed(spec_.noise_seed, {kQueryTag, layer, h, i, denoise_step}));
    Xoshiro256 vrng(derive_seed(spec_.noise_seed, {kValueTag, layer, h, i, denoise_step}));

    double offset[3] = {0.0, 0.0, 0.0};
    offset[static_cast<int>(label)] = spec_.margin;
    if (spec_.perturbation && spec_.perturbation->strength > 0.0) {
      const auto& p = *spec_.perturbation;
      for (std::uint64_t r = 0; r < 3; ++r) {
        Xoshiro256 prng(derive_seed(spec_.noise_seed,
                                    {kPerturbTag, static_cast<std::uint64_t>(p.kind), p.index,
                                     layer, h, r}));
        offset[r] += p.strength * prng.approx_normal();
      }
    }

    HeadQKV out{Matrix(hw, d), Matrix(hw, d), Matrix(hw, d)};
    for (std::size_t t = 0; t < hw; ++t) {
      auto k = out.k.row(t);
      auto q = out.q.row(t);
      for (std::size_t c = flag + 1; c < d; ++c) {
        k[c] = spec_.content_scale * krng.uniform(-1.0, 1.0);
        q[c] = spec_.content_scale * qrng.uniform(-1.0, 1.0);
      }
      if (i == sink) {
        k[flag] = 1.0;
      } else {
        k[i % slots] = 1.0;
      }
      q[flag] = offset[0] * unit;
      for (std::size_t back = 1; back < slots && back <= i; ++back) {
        if (i - back != sink) q[(i - back) % slots] = offset[1] * unit;
      }
      if (i != sink) q[i % slots] = offset[2] * unit;
      for (double& x : out.v.row(t)) x = vrng.uniform(-1.0, 1.0);
    }
    heads[h] = std::move(out);
  }
  return heads;
}

Matrix PlantedWorkload::combine(std::size_t, const Matrix&,
                                std::span<const Matrix> head_outputs) const {
  return concat_columns(head_outputs);
}

PlantedSpec stability_perturb(const PlantedSpec& spec, ConditionKind kind,
                              std::uint64_t condition_index, double strength) {
  if (!(strength >= 0.0)) throw ConfigError("perturbation strength must be >= 0");
  PlantedSpec out = spec;
  out.perturbation = Perturbation{kind, condition_index, strength};
  return out;
}

std::uint64_t matrix_hash(const Matrix& m) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  };
  mix(m.rows());
  mix(m.cols());
  for (double x : m.data()) mix(std::bit_cast<std::uint64_t>(x));
  return h;
}

}  // namespace df
