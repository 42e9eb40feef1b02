#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "df/attention_engine.hpp"
#include "df/config.hpp"
#include "df/scenario.hpp"

namespace df::cli {

inline constexpr int kSchemaVersion = 1;

enum class WorkloadKind { toy, planted };

struct SweepSpec {
  std::vector<std::size_t> context_frames{5, 9, 15};  // baseline context incl. current
  std::vector<double> dummy_ratios{0.0, 0.5, 1.0};
  std::vector<Mode> modes{Mode::hma, Mode::packed};
};

/// Everything a CLI invocation needs, resolved from one JSON document.
struct RunConfig {
  std::uint64_t seed = 0;
  WorkloadKind workload = WorkloadKind::toy;
  double weight_scale = 1.0;
  PlantedSpec planted;  // labels resolved; noise_seed == seed
  SessionConfig session;
  std::size_t reps = 5;
  SweepSpec sweep;
};

/// Reads and validates a config document. Unknown keys at any level are
/// rejected. Throws ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved form; to_json(parse_config(to_json(c))) == to_json(c).
nlohmann::json to_json(const RunConfig& config);

/// Re-seeds a resolved config: workload seed, noise seed and label shuffle.
void apply_seed(RunConfig& config, std::uint64_t seed, bool reshuffle_labels);

nlohmann::json to_json(const SessionConfig& c);
nlohmann::json to_json(const ToyModelSpec& s);
nlohmann::json to_json(const PlantedSpec& s);
SessionConfig session_from_json(const nlohmann::json& j);
ToyModelSpec toy_spec_from_json(const nlohmann::json& j);
PlantedSpec planted_spec_from_json(const nlohmann::json& j);

ToyModelSpec toy_spec(const RunConfig& config);

std::unique_ptr<Workload> make_workload(const RunConfig& config);

}  // namespace df::cli
