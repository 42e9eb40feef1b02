#include "commands.hpp"

#include <filesystem>
#include <functional>
#include <ostream>
#include <sstream>

#include "config_io.hpp"
#include "df/head_programming.hpp"
#include "df/tensor_container.hpp"
#include "report.hpp"
#include "sweep.hpp"
#include "verify.hpp"

namespace df::cli {

namespace {

using nlohmann::json;

/// Maps exceptions onto the documented exit codes.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    // ConfigError, AssignmentError, ShapeError
    err << "config error: " << e.what() << '\n';
    return kExitBadConfig;
  } catch (const std::logic_error& e) {
    // PackingError, OrderingError: the configuration asks for something the
    // chosen path cannot do.
    err << "config error: " << e.what() << '\n';
    return kExitBadConfig;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitBadConfig;
  }
}

RunConfig load(const CommandOptions& opts) {
  if (opts.config.empty()) throw ConfigError("--config is required");
  RunConfig rc = load_config(opts.config);
  if (opts.seed) apply_seed(rc, *opts.seed, rc.workload == WorkloadKind::planted);
  if (opts.reps) {
    if (*opts.reps == 0) throw ConfigError("--reps must be >= 1");
    rc.reps = *opts.reps;
  }
  return rc;
}

Mode parse_mode(const std::string& s) {
  auto m = mode_from_string(s);
  if (!m) throw ConfigError("unknown mode '" + s + "' (expected baseline, hma or packed)");
  return *m;
}

void emit(const std::filesystem::path& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_file_atomic(path, text);
  }
}

}  // namespace

int cmd_profile(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig rc = load(opts);
    if (opts.out.empty()) throw ConfigError("profile needs --out <directory>");
    std::filesystem::create_directories(opts.out);

    const auto& c = rc.session;
    auto workload = make_workload(rc);
    const auto scores = global_scores(*workload, c, c.probe, c.subsample_ratio);
    const auto classification = greedy_classify(scores, c.dummy_count);
    const auto top = top_n_current(scores, c.dummy_count);

    std::ostringstream csv;
    csv.precision(17);
    csv << "layer,head,sink,neighbor,current\n";
    json heads = json::array();
    for (std::size_t f = 0; f < scores.total_heads(); ++f) {
      const auto s = scores.row(f);
      const std::size_t layer = f / c.num_heads;
      const std::size_t head = f % c.num_heads;
      csv << layer << ',' << head << ',' << s.sink << ',' << s.neighbor << ',' << s.current << '\n';
      heads.push_back({{"layer", layer},
                       {"head", head},
                       {"sink", s.sink},
                       {"neighbor", s.neighbor},
                       {"current", s.current},
                       {"class", std::string(to_string(classification.assignment[f]))}});
    }

    TensorContainer container;
    container.add("frame_scores", scores.matrix());
    std::vector<double> top_values(top.flat().begin(), top.flat().end());
    container.add("top_n", {top_values.size()}, top_values);

    json summary;
    summary["schema_version"] = kSchemaVersion;
    summary["seed"] = rc.seed;
    summary["config"] = to_json(rc);
    summary["probe"] = {{"ar_step", c.probe.ar_step}, {"denoise_step", c.probe_denoise_step()}};
    summary["subsample_ratio"] = c.subsample_ratio;
    summary["rows_normalized"] = scores.rows_normalized();
    summary["heads"] = heads;
    summary["top_n"] = top.flat();
    summary["assignment"] = assignment_summary(classification.assignment, c, classification.objective);

    write_file_atomic(opts.out / "scores.csv", csv.str());
    container.save(opts.out / "scores.dftc");
    write_file_atomic(opts.out / "profile.json", summary.dump(2) + "\n");
    out << "wrote " << (opts.out / "profile.json").string() << '\n';
    return kExitOk;
  });
}

int cmd_run(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig rc = load(opts);
    const Mode mode = parse_mode(opts.mode);
    emit(opts.out, run_report(rc, mode).dump(2) + "\n", out);
    return kExitOk;
  });
}

int cmd_verify(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto results = run_suite(opts.suite, opts.seed.value_or(0));
    return print_results(out, results) ? kExitOk : kExitVerifyFailed;
  });
}

int cmd_sweep(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig rc = load(opts);
    emit(opts.out, sweep_csv(run_sweep(rc, opts.axis)), out);
    return kExitOk;
  });
}

}  // namespace df::cli
