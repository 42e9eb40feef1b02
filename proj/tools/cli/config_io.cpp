#include "config_io.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <string>
#include <type_traits>

#include "df/tensor_container.hpp"

namespace df::cli {

namespace {

using nlohmann::json;

void require_object(const json& j, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
}

/// Rejects any key of `j` outside `allowed`.
void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  require_object(j, where);
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown field '" + key + "' in " + std::string(where));
  }
}

template <typename T>
void read(const json& j, std::string_view key, T& out, std::string_view where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0)) {
      throw ConfigError(std::string(where) + "." + std::string(key) + " must be a non-negative integer");
    }
  }
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(where) + "." + std::string(key) + " has the wrong type");
  }
}

std::size_t read_count(const json& j, std::string_view key, std::size_t fallback,
                       std::string_view where) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  const bool ok = it->is_number_unsigned() || (it->is_number_integer() && it->get<std::int64_t>() >= 0);
  if (!ok) {
    throw ConfigError(std::string(where) + "." + std::string(key) + " must be a non-negative integer");
  }
  return it->get<std::size_t>();
}

Mode parse_mode(const json& j) {
  if (!j.is_string()) throw ConfigError("mode must be a string");
  auto m = mode_from_string(j.get<std::string>());
  if (!m) throw ConfigError("unknown mode '" + j.get<std::string>() + "'");
  return *m;
}

PlantedLabel parse_label(const json& j) {
  if (!j.is_string()) throw ConfigError("planted label must be a string");
  auto l = planted_label_from_string(j.get<std::string>());
  if (!l) throw ConfigError("unknown planted label '" + j.get<std::string>() + "'");
  return *l;
}

Perturbation parse_perturbation(const json& j) {
  check_keys(j, "planted.perturbation", {"kind", "index", "strength"});
  Perturbation p;
  std::string kind = "prompt_seed";
  read(j, "kind", kind, "planted.perturbation");
  auto k = condition_kind_from_string(kind);
  if (!k) throw ConfigError("unknown perturbation kind '" + kind + "'");
  p.kind = *k;
  p.index = read_count(j, "index", 0, "planted.perturbation");
  read(j, "strength", p.strength, "planted.perturbation");
  return p;
}

json perturbation_json(const Perturbation& p) {
  return {{"kind", std::string(to_string(p.kind))}, {"index", p.index}, {"strength", p.strength}};
}

}  // namespace

json to_json(const SessionConfig& c) {
  json j{{"num_layers", c.num_layers},
         {"num_heads", c.num_heads},
         {"head_dim", c.head_dim},
         {"hw", c.hw},
         {"window_len", c.window_len},
         {"sink_frame", c.sink_frame},
         {"dummy_count", c.dummy_count},
         {"packing_enabled", c.packing_enabled},
         {"denoise_steps", c.denoise_steps},
         {"ar_steps", c.ar_steps},
         {"context_extension", c.context_extension},
         {"subsample_ratio", c.subsample_ratio}};
  j["merged_window"] = c.merged_window ? json(*c.merged_window) : json(nullptr);
  json probe{{"ar_step", c.probe.ar_step}};
  probe["denoise_step"] = c.probe.denoise_step ? json(*c.probe.denoise_step) : json(nullptr);
  j["probe"] = probe;
  return j;
}

SessionConfig session_from_json(const json& j) {
  check_keys(j, "session",
             {"num_layers", "num_heads", "head_dim", "hw", "window_len", "sink_frame",
              "dummy_count", "packing_enabled", "denoise_steps", "ar_steps", "context_extension",
              "merged_window", "probe", "subsample_ratio"});
  SessionConfig c;
  c.num_layers = read_count(j, "num_layers", c.num_layers, "session");
  c.num_heads = read_count(j, "num_heads", c.num_heads, "session");
  c.head_dim = read_count(j, "head_dim", c.head_dim, "session");
  c.hw = read_count(j, "hw", c.hw, "session");
  c.window_len = read_count(j, "window_len", c.window_len, "session");
  c.sink_frame = read_count(j, "sink_frame", c.sink_frame, "session");
  c.dummy_count = read_count(j, "dummy_count", c.dummy_count, "session");
  read(j, "packing_enabled", c.packing_enabled, "session");
  c.denoise_steps = read_count(j, "denoise_steps", c.denoise_steps, "session");
  c.ar_steps = read_count(j, "ar_steps", c.ar_steps, "session");
  read(j, "context_extension", c.context_extension, "session");
  if (auto it = j.find("merged_window"); it != j.end() && !it->is_null()) {
    c.merged_window = read_count(j, "merged_window", 0, "session");
  }
  if (auto it = j.find("probe"); it != j.end()) {
    check_keys(*it, "session.probe", {"ar_step", "denoise_step"});
    c.probe.ar_step = read_count(*it, "ar_step", c.probe.ar_step, "session.probe");
    if (auto d = it->find("denoise_step"); d != it->end() && !d->is_null()) {
      c.probe.denoise_step = read_count(*it, "denoise_step", 0, "session.probe");
    }
  }
  read(j, "subsample_ratio", c.subsample_ratio, "session");
  return c;
}

json to_json(const ToyModelSpec& s) {
  return {{"num_layers", s.num_layers}, {"num_heads", s.num_heads},
          {"head_dim", s.head_dim},     {"hw", s.hw},
          {"denoise_steps", s.denoise_steps}, {"seed", s.seed},
          {"weight_scale", s.weight_scale}};
}

ToyModelSpec toy_spec_from_json(const json& j) {
  check_keys(j, "toy model",
             {"num_layers", "num_heads", "head_dim", "hw", "denoise_steps", "seed", "weight_scale"});
  ToyModelSpec s;
  s.num_layers = read_count(j, "num_layers", s.num_layers, "toy model");
  s.num_heads = read_count(j, "num_heads", s.num_heads, "toy model");
  s.head_dim = read_count(j, "head_dim", s.head_dim, "toy model");
  s.hw = read_count(j, "hw", s.hw, "toy model");
  s.denoise_steps = read_count(j, "denoise_steps", s.denoise_steps, "toy model");
  read(j, "seed", s.seed, "toy model");
  read(j, "weight_scale", s.weight_scale, "toy model");
  s.validate();
  return s;
}

json to_json(const PlantedSpec& s) {
  json labels = json::array();
  for (auto l : s.labels) labels.push_back(std::string(to_string(l)));
  json j{{"labels", labels},
         {"margin", s.margin},
         {"noise_seed", s.noise_seed},
         {"content_scale", s.content_scale}};
  j["perturbation"] = s.perturbation ? perturbation_json(*s.perturbation) : json(nullptr);
  return j;
}

PlantedSpec planted_spec_from_json(const json& j) {
  check_keys(j, "planted spec", {"labels", "margin", "noise_seed", "content_scale", "perturbation"});
  PlantedSpec s;
  if (auto it = j.find("labels"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("planted spec labels must be an array");
    for (const auto& l : *it) s.labels.push_back(parse_label(l));
  }
  read(j, "margin", s.margin, "planted spec");
  read(j, "noise_seed", s.noise_seed, "planted spec");
  read(j, "content_scale", s.content_scale, "planted spec");
  if (auto it = j.find("perturbation"); it != j.end() && !it->is_null()) {
    s.perturbation = parse_perturbation(*it);
  }
  return s;
}

ToyModelSpec toy_spec(const RunConfig& config) {
  const auto& c = config.session;
  ToyModelSpec s;
  s.num_layers = c.num_layers;
  s.num_heads = c.num_heads;
  s.head_dim = c.head_dim;
  s.hw = c.hw;
  s.denoise_steps = c.denoise_steps;
  s.seed = config.seed;
  s.weight_scale = config.weight_scale;
  return s;
}

RunConfig parse_config(const json& doc) {
  check_keys(doc, "config",
             {"schema_version", "seed", "workload", "model", "session", "planted", "timing", "sweep"});
  auto version = doc.find("schema_version");
  if (version == doc.end()) throw ConfigError("config: missing schema_version");
  if (!version->is_number_integer() || version->get<int>() != kSchemaVersion) {
    throw ConfigError("config: unsupported schema_version " + version->dump());
  }

  RunConfig rc;
  read(doc, "seed", rc.seed, "config");

  std::string workload = "toy";
  read(doc, "workload", workload, "config");
  if (workload == "toy") {
    rc.workload = WorkloadKind::toy;
  } else if (workload == "planted") {
    rc.workload = WorkloadKind::planted;
  } else {
    throw ConfigError("config: unknown workload '" + workload + "'");
  }

  // Model shape defaults follow the toy model; the session section adds the
  // cache and schedule settings.
  ToyModelSpec model;
  if (auto it = doc.find("model"); it != doc.end()) {
    check_keys(*it, "model", {"num_layers", "num_heads", "head_dim", "hw", "denoise_steps", "weight_scale"});
    model.num_layers = read_count(*it, "num_layers", model.num_layers, "model");
    model.num_heads = read_count(*it, "num_heads", model.num_heads, "model");
    model.head_dim = read_count(*it, "head_dim", model.head_dim, "model");
    model.hw = read_count(*it, "hw", model.hw, "model");
    model.denoise_steps = read_count(*it, "denoise_steps", model.denoise_steps, "model");
    read(*it, "weight_scale", model.weight_scale, "model");
  }
  rc.weight_scale = model.weight_scale;
  rc.session = model.session_shape();

  std::optional<double> dummy_ratio;
  if (auto it = doc.find("session"); it != doc.end()) {
    check_keys(*it, "session",
               {"window_len", "sink_frame", "dummy_count", "dummy_ratio", "packing_enabled",
                "ar_steps", "context_extension", "merged_window", "probe", "subsample_ratio"});
    json merged = *it;
    merged.erase("dummy_ratio");
    for (auto key : {"num_layers", "num_heads", "head_dim", "hw", "denoise_steps"}) {
      merged[key] = to_json(rc.session)[key];
    }
    rc.session = session_from_json(merged);
    if (it->contains("dummy_ratio")) {
      if (it->contains("dummy_count")) {
        throw ConfigError("session: dummy_count and dummy_ratio are mutually exclusive");
      }
      double r = 0.0;
      read(*it, "dummy_ratio", r, "session");
      dummy_ratio = r;
    }
  }
  if (dummy_ratio) {
    if (!(*dummy_ratio >= 0.0 && *dummy_ratio <= 1.0)) {
      throw ConfigError("session.dummy_ratio must be in [0, 1]");
    }
    rc.session.dummy_count = static_cast<std::size_t>(
        std::floor(*dummy_ratio * static_cast<double>(rc.session.total_heads()) + 1e-9));
  }

  if (auto it = doc.find("planted"); it != doc.end()) {
    if (rc.workload != WorkloadKind::planted) {
      throw ConfigError("config: planted section requires workload \"planted\"");
    }
    check_keys(*it, "planted", {"margin", "content_scale", "labels", "label_counts", "perturbation"});
    read(*it, "margin", rc.planted.margin, "planted");
    read(*it, "content_scale", rc.planted.content_scale, "planted");
    if (auto p = it->find("perturbation"); p != it->end() && !p->is_null()) {
      rc.planted.perturbation = parse_perturbation(*p);
    }
    const bool has_labels = it->contains("labels");
    const bool has_counts = it->contains("label_counts");
    if (has_labels == has_counts) {
      throw ConfigError("planted: give exactly one of labels or label_counts");
    }
    if (has_labels) {
      const auto& labels = (*it)["labels"];
      if (!labels.is_array()) throw ConfigError("planted.labels must be an array");
      for (const auto& l : labels) rc.planted.labels.push_back(parse_label(l));
    } else {
      const auto& counts = (*it)["label_counts"];
      check_keys(counts, "planted.label_counts", {"sink", "neighbor", "current"});
      rc.planted.labels = planted_labels(read_count(counts, "sink", 0, "planted.label_counts"),
                                         read_count(counts, "neighbor", 0, "planted.label_counts"),
                                         read_count(counts, "current", 0, "planted.label_counts"),
                                         rc.seed);
    }
  } else if (rc.workload == WorkloadKind::planted) {
    throw ConfigError("config: workload \"planted\" needs a planted section");
  }
  rc.planted.noise_seed = rc.seed;

  if (auto it = doc.find("timing"); it != doc.end()) {
    check_keys(*it, "timing", {"reps"});
    rc.reps = read_count(*it, "reps", rc.reps, "timing");
    if (rc.reps == 0) throw ConfigError("timing.reps must be >= 1");
  }

  if (auto it = doc.find("sweep"); it != doc.end()) {
    check_keys(*it, "sweep", {"context_frames", "dummy_ratios", "modes"});
    read(*it, "context_frames", rc.sweep.context_frames, "sweep");
    read(*it, "dummy_ratios", rc.sweep.dummy_ratios, "sweep");
    if (auto m = it->find("modes"); m != it->end()) {
      if (!m->is_array()) throw ConfigError("sweep.modes must be an array");
      rc.sweep.modes.clear();
      for (const auto& mode : *m) rc.sweep.modes.push_back(parse_mode(mode));
    }
    for (auto f : rc.sweep.context_frames) {
      if (f < 3) throw ConfigError("sweep.context_frames entries must be >= 3");
    }
    for (auto r : rc.sweep.dummy_ratios) {
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("sweep.dummy_ratios entries must be in [0, 1]");
    }
  }

  rc.session.validate();
  if (rc.workload == WorkloadKind::toy) {
    toy_spec(rc).validate();
  } else {
    rc.planted.validate(rc.session.total_heads());
    if (rc.session.head_dim < PlantedWorkload::min_head_dim(rc.session.window_len)) {
      throw ConfigError("planted workload needs head_dim >= window_len + 2");
    }
  }
  return rc;
}

RunConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const RunConfig& config) {
  const auto& c = config.session;
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["seed"] = config.seed;
  doc["workload"] = config.workload == WorkloadKind::toy ? "toy" : "planted";
  doc["model"] = {{"num_layers", c.num_layers}, {"num_heads", c.num_heads},
                  {"head_dim", c.head_dim},     {"hw", c.hw},
                  {"denoise_steps", c.denoise_steps}, {"weight_scale", config.weight_scale}};
  json session = to_json(c);
  for (auto key : {"num_layers", "num_heads", "head_dim", "hw", "denoise_steps"}) session.erase(key);
  doc["session"] = session;
  if (config.workload == WorkloadKind::planted) {
    json planted = to_json(config.planted);
    planted.erase("noise_seed");
    doc["planted"] = planted;
  }
  doc["timing"] = {{"reps", config.reps}};
  json modes = json::array();
  for (auto m : config.sweep.modes) modes.push_back(std::string(to_string(m)));
  doc["sweep"] = {{"context_frames", config.sweep.context_frames},
                  {"dummy_ratios", config.sweep.dummy_ratios},
                  {"modes", modes}};
  return doc;
}

void apply_seed(RunConfig& config, std::uint64_t seed, bool reshuffle_labels) {
  config.seed = seed;
  config.planted.noise_seed = seed;
  if (reshuffle_labels && !config.planted.labels.empty()) {
    const auto& p = config.planted;
    config.planted.labels = planted_labels(p.count(PlantedLabel::sink), p.count(PlantedLabel::neighbor),
                                           p.count(PlantedLabel::current), seed);
  }
}

std::unique_ptr<Workload> make_workload(const RunConfig& config) {
  if (config.workload == WorkloadKind::toy) {
    return std::make_unique<ToyModel>(toy_spec(config));
  }
  return std::make_unique<PlantedWorkload>(config.planted, config.session);
}

}  // namespace df::cli
