#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "config_io.hpp"
#include "df/session.hpp"

namespace df::cli {

/// Hex FNV-1a over the hashes of every generated frame.
std::string output_checksum(const std::vector<Matrix>& frames);

nlohmann::json assignment_summary(const HeadAssignment& assignment, const SessionConfig& config,
                                  double objective);

/// RunReport of `runs` (repetitions of one configuration). Non-timing
/// fields come from the first run; every key holding timing data contains
/// "wall_time".
nlohmann::json build_run_report(const RunConfig& config, Mode mode,
                                const std::vector<SessionResult>& runs);

/// Runs config.reps sessions and reports them.
nlohmann::json run_report(const RunConfig& config, Mode mode);

/// Copy of `report` with every "wall_time" key removed, at any depth.
nlohmann::json strip_timing(const nlohmann::json& report);

}  // namespace df::cli
