#include "report.hpp"

#include <algorithm>
#include <cstdio>

#include "df/scenario.hpp"

namespace df::cli {

namespace {

using nlohmann::json;

std::uint64_t median(std::vector<std::uint64_t> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2;
}

json counts_json(const ClassCounts& c) {
  return {{"sink", c.sink}, {"neighbor", c.neighbor}, {"dummy", c.dummy}};
}

}  // namespace

std::string output_checksum(const std::vector<Matrix>& frames) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : frames) {
    std::uint64_t v = matrix_hash(f);
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json assignment_summary(const HeadAssignment& assignment, const SessionConfig& config,
                        double objective) {
  json per_layer = json::array();
  std::size_t l = 0;
  for (const auto& c : assignment.per_layer_counts(config.num_heads)) {
    json row = counts_json(c);
    row["layer"] = l++;
    per_layer.push_back(row);
  }
  json classes = json::array();
  for (auto c : assignment.classes()) classes.push_back(std::string(to_string(c)));
  return {{"dummy_count", assignment.dummy_count()},
          {"objective", objective},
          {"counts", counts_json(assignment.counts())},
          {"per_layer", per_layer},
          {"classes", classes}};
}

json build_run_report(const RunConfig& config, Mode mode, const std::vector<SessionResult>& runs) {
  if (runs.empty()) throw ConfigError("run report needs at least one run");
  const auto& first = runs.front();
  const auto& session = config.session;

  json report;
  report["schema_version"] = kSchemaVersion;
  report["seed"] = config.seed;
  report["mode"] = std::string(to_string(mode));
  report["config"] = to_json(config);

  // Accounting from the assignment, plus what the caches actually held.
  const CacheStats stats = first.assignment ? cache_stats(*first.assignment, session)
                                            : cache_stats(first.final_policies, session);
  std::vector<double> held(first.final_cached_frames.begin(), first.final_cached_frames.end());
  bool warm = true;
  for (std::size_t i = 0; i < held.size(); ++i) {
    warm = warm && first.final_cached_frames[i] == first.final_policies[i].past_capacity();
  }
  report["cache_reduction_ratio"] = stats.reduction_ratio;
  report["cache"] = {{"baseline_past_frames", stats.baseline_past_frames},
                     {"past_frames_per_head", stats.past_frames_per_head},
                     {"total_cached_tokens", stats.total_cached_tokens},
                     {"measured_ratio", reduction_ratio(held, stats.baseline_past_frames)},
                     {"measured_frames_per_head", first.final_cached_frames},
                     {"warm", warm}};

  report["assignment"] =
      first.assignment ? assignment_summary(*first.assignment, session, first.objective) : json(nullptr);

  json steps = json::array();
  std::uint64_t total_macs = 0;
  std::size_t total_calls = 0;
  for (std::size_t s = 0; s < first.steps.size(); ++s) {
    const auto& rec = first.steps[s];
    std::vector<std::uint64_t> step_totals;
    std::vector<std::uint64_t> per_call(rec.attention_ns.size());
    for (std::size_t i = 0; i < per_call.size(); ++i) {
      std::vector<std::uint64_t> samples;
      for (const auto& run : runs) samples.push_back(run.steps.at(s).attention_ns.at(i));
      per_call[i] = median(samples);
    }
    for (const auto& run : runs) {
      std::uint64_t sum = 0;
      for (auto ns : run.steps.at(s).attention_ns) sum += ns;
      step_totals.push_back(sum);
    }
    std::size_t calls = 0;
    for (auto c : rec.kernel_calls_per_layer) calls += c;
    total_calls += calls * session.denoise_steps;
    total_macs += rec.key_token_macs;
    steps.push_back({{"ar_step", rec.ar_step},
                     {"path", std::string(to_string(rec.path))},
                     {"key_token_macs", rec.key_token_macs},
                     {"kernel_calls_per_layer", rec.kernel_calls_per_layer},
                     {"median_wall_time_ns", median(step_totals)},
                     {"wall_time_ns_samples", step_totals},
                     {"median_wall_time_ns_per_invocation", per_call}});
  }
  report["steps"] = steps;
  report["totals"] = {{"key_token_macs", total_macs}, {"kernel_calls", total_calls}};
  report["timing"] = {{"reps", runs.size()}, {"scope", "attention and cache maintenance"}};
  report["output_checksum"] = output_checksum(first.frames);
  return report;
}

json run_report(const RunConfig& config, Mode mode) {
  auto workload = make_workload(config);
  std::vector<SessionResult> runs;
  runs.reserve(config.reps);
  for (std::size_t r = 0; r < config.reps; ++r) {
    runs.push_back(generate_session(*workload, config.session, mode));
  }
  return build_run_report(config, mode, runs);
}

json strip_timing(const json& report) {
  if (report.is_object()) {
    json out = json::object();
    for (const auto& [key, value] : report.items()) {
      if (key.find("wall_time") != std::string::npos) continue;
      out[key] = strip_timing(value);
    }
    return out;
  }
  if (report.is_array()) {
    json out = json::array();
    for (const auto& v : report) out.push_back(strip_timing(v));
    return out;
  }
  return report;
}

}  // namespace df::cli
