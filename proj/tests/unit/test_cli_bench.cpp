#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "config_io.hpp"
#include "df/head_programming.hpp"
#include "df/kv_cache.hpp"
#include "df/tensor_container.hpp"
#include "report.hpp"
#include "sweep.hpp"
#include "verify.hpp"

using namespace df;
using namespace df::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = DF_CONFIG_DIR;

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("df_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

json read_json(const fs::path& p) {
  std::ifstream f(p);
  return json::parse(f);
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

json toy_doc() {
  return json{{"schema_version", 1},
              {"seed", 5},
              {"workload", "toy"},
              {"model", {{"num_layers", 2}, {"num_heads", 4}, {"head_dim", 8}, {"hw", 8}, {"denoise_steps", 1}}},
              {"session", {{"window_len", 3}, {"ar_steps", 6}, {"dummy_count", 3}}},
              {"timing", {{"reps", 1}}}};
}

struct Invocation {
  int code;
  std::string out;
  std::string err;
};

template <class Fn>
Invocation invoke(Fn fn, const CommandOptions& opts) {
  std::ostringstream out, err;
  const int code = fn(opts, out, err);
  return {code, out.str(), err.str()};
}

json run_doc(const json& doc, const std::string& mode, const TempDir& dir) {
  const auto cfg = dir.path / ("cfg_" + mode + ".json");
  write_json(cfg, doc);
  CommandOptions o;
  o.config = cfg;
  o.mode = mode;
  const auto r = invoke(cmd_run, o);
  REQUIRE(r.code == kExitOk);
  return json::parse(r.out);
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::vector<std::uint8_t> container_bytes(const std::string& header, std::size_t payload) {
  std::vector<std::uint8_t> b{'D', 'F', 'T', 'C', 1, 0, 0, 0};
  const std::uint64_t n = header.size();
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  b.insert(b.end(), header.begin(), header.end());
  b.insert(b.end(), payload, 0);
  return b;
}

}  // namespace

TEST_CASE("tensor container round trip") {
  TensorContainer c;
  c.add("a", Matrix::from_rows({{1.5, -2.0}, {3.25, 4.0}}));
  c.add("b", Matrix::from_rows({{0.1, 0.2, 0.3}}), DType::f32);
  const std::vector<double> v{1, 2, 3};
  c.add("vec", {3}, v);
  const auto back = TensorContainer::parse(c.serialize());
  CHECK(back.matrix("a") == c.matrix("a"));
  CHECK(back.values("vec") == v);
  CHECK(back.info("b").dtype == DType::f32);
  CHECK(back.matrix("b")(0, 1) == static_cast<double>(0.2f));
  CHECK(back.matrix("vec").rows() == 1);
  CHECK_THROWS_AS(c.add("a", Matrix(1, 1)), FormatError);
  CHECK_THROWS_AS(back.matrix("missing"), FormatError);

  TempDir dir;
  c.save(dir.path / "t.dftc");
  CHECK(TensorContainer::load(dir.path / "t.dftc").values("vec") == v);
  CHECK_THROWS_AS(TensorContainer::load(dir.path / "absent.dftc"), IoError);
}

TEST_CASE("tensor container byte layout") {
  TensorContainer c;
  c.add("x", Matrix::from_rows({{1.0, 2.0}}));
  const auto b = c.serialize();
  REQUIRE(b.size() > 16);
  CHECK(std::memcmp(b.data(), "DFTC", 4) == 0);
  CHECK(b[4] == 1);
  CHECK(b[5] == 0);
  std::uint64_t h = 0;
  for (int i = 7; i >= 0; --i) h = (h << 8) | b[8 + i];
  CHECK(b.size() == 16 + h + 16);
  const auto header = json::parse(b.begin() + 16, b.begin() + 16 + static_cast<long>(h));
  CHECK(header[0]["name"] == "x");
  CHECK(header[0]["dtype"] == "f64");
  CHECK(header[0]["shape"] == json::array({1, 2}));
  CHECK(header[0]["byte_offset"] == 0);
  double second = 0.0;
  std::memcpy(&second, b.data() + 16 + h + 8, 8);
  CHECK(second == 2.0);
}

TEST_CASE("tensor container rejects malformed input") {
  TensorContainer c;
  c.add("x", Matrix::from_rows({{1.0, 2.0}}));
  const auto good = c.serialize();

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(TensorContainer::parse(bad_magic), FormatError);

  auto bad_version = good;
  put_u32(bad_version, 4, 2);
  CHECK_THROWS_AS(TensorContainer::parse(bad_version), FormatError);

  CHECK_THROWS_AS(TensorContainer::parse(std::span(good).first(good.size() - 1)), FormatError);
  CHECK_THROWS_AS(TensorContainer::parse(std::span(good).first(10)), FormatError);

  const std::string gap = R"([{"name":"x","dtype":"f64","shape":[1],"byte_offset":8}])";
  CHECK_THROWS_AS(TensorContainer::parse(container_bytes(gap, 16)), FormatError);
  CHECK_THROWS_AS(TensorContainer::parse(container_bytes("{not json", 0)), FormatError);
  const std::string ok = R"([{"name":"x","dtype":"f64","shape":[2],"byte_offset":0}])";
  CHECK_NOTHROW(TensorContainer::parse(container_bytes(ok, 16)));
}

TEST_CASE("cache snapshots name every block") {
  SessionConfig cfg;
  cfg.window_len = 3;
  HeadKVCache cache(baseline_policy(cfg));
  for (std::size_t f = 0; f < 5; ++f) cache.append_and_evict({f, Matrix(2, 3), Matrix(2, 3)});
  TensorContainer c;
  add_cache_snapshot(c, "l0/h1", cache);
  CHECK(c.tensors().size() == 2 * cache.cached_frames());
  CHECK(c.contains("l0/h1/frame_0/keys"));
  CHECK(c.contains("l0/h1/frame_4/values"));
  CHECK_FALSE(c.contains("l0/h1/frame_2/keys"));
}

TEST_CASE("config parsing") {
  const auto rc = parse_config(toy_doc());
  CHECK(rc.seed == 5);
  CHECK(rc.session.num_heads == 4);
  CHECK(rc.session.dummy_count == 3);
  CHECK(to_json(parse_config(to_json(rc))) == to_json(rc));

  for (const auto& name : {"toy.json", "planted.json", "accounting.json", "sweep.json"}) {
    const auto c = load_config(kConfigs / name);
    CHECK(to_json(parse_config(to_json(c))) == to_json(c));
  }

  auto ratio = toy_doc();
  ratio["session"].erase("dummy_count");
  ratio["session"]["dummy_ratio"] = 0.5;
  CHECK(parse_config(ratio).session.dummy_count == 4);
  ratio["session"]["dummy_ratio"] = 0.3;
  CHECK(parse_config(ratio).session.dummy_count == 2);

  auto both = toy_doc();
  both["session"]["dummy_ratio"] = 0.5;
  CHECK_THROWS_AS(parse_config(both), ConfigError);

  auto unknown = toy_doc();
  unknown["session"]["windw_len"] = 3;
  CHECK_THROWS_AS(parse_config(unknown), ConfigError);
  auto top = toy_doc();
  top["extra"] = 1;
  CHECK_THROWS_AS(parse_config(top), ConfigError);
  auto version = toy_doc();
  version["schema_version"] = 2;
  CHECK_THROWS_AS(parse_config(version), ConfigError);
  auto negative = toy_doc();
  negative["seed"] = -1;
  CHECK_THROWS_AS(parse_config(negative), ConfigError);
  negative = toy_doc();
  negative["model"]["hw"] = -4;
  CHECK_THROWS_AS(parse_config(negative), ConfigError);
  auto too_many = toy_doc();
  too_many["session"]["dummy_count"] = 9;
  CHECK_THROWS_AS(parse_config(too_many), ConfigError);
}

TEST_CASE("run report accounting") {
  TempDir dir;
  CommandOptions o;
  o.config = kConfigs / "accounting.json";
  o.out = dir.path / "report.json";
  REQUIRE(invoke(cmd_run, o).code == kExitOk);
  const auto report = read_json(o.out);
  CHECK(report["cache_reduction_ratio"].get<double>() == doctest::Approx(0.2778).epsilon(1e-4));

  const auto rc = load_config(o.config);
  const auto a = report["assignment"];
  CHECK(a["dummy_count"] == rc.session.dummy_count);
  CHECK(report["totals"]["key_token_macs"].get<std::uint64_t>() > 0);
}

TEST_CASE("packed run makes two calls per mixed layer") {
  TempDir dir;
  const auto doc = toy_doc();
  const auto packed = run_doc(doc, "packed", dir);
  const auto hma = run_doc(doc, "hma", dir);
  const auto base = run_doc(doc, "baseline", dir);
  const auto last = [](const json& r) { return r["steps"].back()["kernel_calls_per_layer"]; };
  for (std::size_t l = 0; l < 2; ++l) {
    const auto counts = packed["assignment"]["per_layer"][l];
    const bool mixed = counts["sink"] > 0 && counts["neighbor"] > 0 && counts["dummy"] > 0;
    if (mixed) {
      CHECK(last(packed)[l] == 2);
      CHECK(last(hma)[l] == 3);
    }
    CHECK(last(base)[l] == 1);
  }
  // Reports agree on what is cached.
  const auto rc = parse_config(doc);
  std::vector<HeadClass> cls;
  for (const auto& c : packed["assignment"]["classes"]) cls.push_back(*head_class_from_string(c.get<std::string>()));
  const HeadAssignment assignment(cls, rc.session.dummy_count);
  CHECK(packed["cache_reduction_ratio"].get<double>() ==
        doctest::Approx(cache_stats(assignment, rc.session).reduction_ratio).epsilon(1e-12));
}

TEST_CASE("merged window without dummies reproduces baseline output") {
  TempDir dir;
  auto doc = toy_doc();
  doc["session"]["dummy_count"] = 0;
  doc["session"]["merged_window"] = 3;
  CHECK(run_doc(doc, "hma", dir)["output_checksum"] == run_doc(doc, "baseline", dir)["output_checksum"]);
}

TEST_CASE("run reports are deterministic apart from timing") {
  TempDir dir;
  for (const char* name : {"toy.json", "planted.json"}) {
    CommandOptions o;
    o.config = kConfigs / name;
    o.mode = "packed";
    o.reps = 2;
    o.out = dir.path / "a.json";
    REQUIRE(invoke(cmd_run, o).code == kExitOk);
    o.out = dir.path / "b.json";
    REQUIRE(invoke(cmd_run, o).code == kExitOk);
    CHECK(strip_timing(read_json(dir.path / "a.json")).dump() == strip_timing(read_json(dir.path / "b.json")).dump());
    CHECK(strip_timing(read_json(dir.path / "a.json")).dump().find("wall_time") == std::string::npos);
  }
  const json nested{{"a", {{"wall_time_ns", 1}, {"b", json::array({json{{"median_wall_time_ns", 2}, {"c", 3}}})}}}};
  CHECK(strip_timing(nested) == json{{"a", {{"b", json::array({json{{"c", 3}}})}}}});
}

TEST_CASE("seed override changes the output") {
  CommandOptions o;
  o.config = kConfigs / "toy.json";
  o.reps = 1;
  const auto a = invoke(cmd_run, o);
  o.seed = 99;
  const auto b = invoke(cmd_run, o);
  REQUIRE(a.code == kExitOk);
  REQUIRE(b.code == kExitOk);
  CHECK(json::parse(a.out)["output_checksum"] != json::parse(b.out)["output_checksum"]);
  CHECK(json::parse(b.out)["seed"] == 99);
}

TEST_CASE("exit codes") {
  TempDir dir;
  CommandOptions o;
  o.config = dir.path / "missing.json";
  CHECK(invoke(cmd_run, o).code == kExitIo);

  std::ofstream(dir.path / "broken.json") << "{ nope";
  o.config = dir.path / "broken.json";
  CHECK(invoke(cmd_run, o).code == kExitBadConfig);

  auto doc = toy_doc();
  doc["model"]["num_heads"] = 0;
  write_json(dir.path / "invalid.json", doc);
  o.config = dir.path / "invalid.json";
  const auto r = invoke(cmd_run, o);
  CHECK(r.code == kExitBadConfig);
  CHECK_FALSE(r.err.empty());

  o.config = kConfigs / "toy.json";
  o.mode = "fast";
  CHECK(invoke(cmd_run, o).code == kExitBadConfig);

  o.mode = "hma";
  o.out = dir.path / "no" / "such" / "dir" / "r.json";
  CHECK(invoke(cmd_run, o).code == kExitIo);

  o.out.clear();
  o.suite = "everything";
  CHECK(invoke(cmd_verify, o).code == kExitBadConfig);
  o.axis = "depth";
  CHECK(invoke(cmd_sweep, o).code == kExitBadConfig);
  CHECK(invoke(cmd_profile, o).code == kExitBadConfig);
}

TEST_CASE("profile writes scores, container and summary") {
  TempDir dir;
  CommandOptions o;
  o.config = kConfigs / "planted.json";
  o.out = dir.path / "prof";
  REQUIRE(invoke(cmd_profile, o).code == kExitOk);

  const auto rc = load_config(o.config);
  const auto summary = read_json(o.out / "profile.json");
  CHECK(summary["rows_normalized"] == true);
  CHECK(summary["heads"].size() == rc.session.total_heads());
  CHECK(summary["top_n"].size() == rc.session.dummy_count);

  const auto c = TensorContainer::load(o.out / "scores.dftc");
  const Matrix f = c.matrix("frame_scores");
  CHECK(f.rows() == rc.session.total_heads());
  CHECK(f.cols() == 3);
  for (std::size_t h = 0; h < f.rows(); ++h) CHECK(std::abs(f(h, 0) + f(h, 1) + f(h, 2) - 1.0) < 1e-6);

  // The TopN set is exactly the planted current heads.
  std::vector<std::size_t> planted;
  for (std::size_t h = 0; h < rc.planted.labels.size(); ++h)
    if (rc.planted.labels[h] == PlantedLabel::current) planted.push_back(h);
  std::vector<std::size_t> top;
  for (double x : c.values("top_n")) top.push_back(static_cast<std::size_t>(x));
  std::sort(top.begin(), top.end());
  CHECK(top == planted);

  std::ifstream csv(o.out / "scores.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "layer,head,sink,neighbor,current");
}

TEST_CASE("verify suites pass") {
  for (const char* suite : {"greedy", "cache", "scores"}) {
    CommandOptions o;
    o.config = kConfigs / "toy.json";
    o.suite = suite;
    const auto r = invoke(cmd_verify, o);
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("FAIL") == std::string::npos);
    CHECK(r.out.find("PASS") != std::string::npos);
  }
  const auto eq = verify_equivalence(3, 10);
  for (const auto& c : eq) CHECK_MESSAGE(c.passed, c.name << ": " << c.detail);

  std::ostringstream out;
  CHECK_FALSE(print_results(out, {{"x", true, "ok"}, {"y", false, "bad"}}));
  CHECK(out.str() == "PASS x: ok\nFAIL y: bad\n");
}

TEST_CASE("masked oracle observer notices a corrupted output") {
  SessionConfig c;
  c.num_heads = 1;
  c.hw = 2;
  c.head_dim = 2;
  MaskedOracleObserver obs(c);
  const FrameBlock f0{0, Matrix::from_rows({{1, 0}, {0, 1}}), Matrix::from_rows({{1, 2}, {3, 4}})};
  obs.on_cache_write(0, 0, f0);
  const FrameBlock cur{1, Matrix::from_rows({{0.5, 0}, {0, 0.5}}), Matrix::from_rows({{-1, 0}, {0, 2}})};
  HeadKVCache cache(baseline_policy(c));
  cache.append_and_evict(f0);
  const auto ctx = cache.gather_context(cur);
  const Matrix q = Matrix::from_rows({{1, 1}, {0.5, -1}});
  const Matrix good = attention(q, ctx.keys, ctx.values).output;
  obs.on_attention({1, 0, 0, 0, Mode::baseline, q, ctx, good});
  CHECK(obs.max_abs_error() < 1e-12);
  Matrix bad = good;
  bad(1, 0) += 1e-3;
  obs.on_attention({1, 0, 0, 0, Mode::baseline, q, ctx, bad});
  CHECK(obs.max_abs_error() == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(obs.events() == 2);
}

TEST_CASE("closed-form layer MACs") {
  SessionConfig c;
  c.num_heads = 8;
  c.hw = 4;
  c.head_dim = 2;
  c.window_len = 4;
  const ClassCounts layer{2, 2, 4};
  const std::uint64_t unit = 4 * 4 * 2;
  CHECK(closed_form_layer_macs(Mode::baseline, layer, layer, c) == 8 * 5 * unit);
  CHECK(closed_form_layer_macs(Mode::hma, layer, layer, c) == (2 * 2 + 2 * 4 + 4 * 2) * unit);
  c.packing_enabled = false;
  CHECK(closed_form_layer_macs(Mode::hma, layer, layer, c) == (2 * 2 + 2 * 4 + 4 * 1) * unit);
}

TEST_CASE("warm layer bench matches the closed form") {
  auto rc = load_config(kConfigs / "sweep.json");
  rc.session.hw = 16;
  rc.session.head_dim = 8;
  auto w = make_workload(rc);
  const auto scores = global_scores(*w, rc.session, rc.session.probe, rc.session.subsample_ratio);
  const auto a = greedy_classify(scores, rc.session.dummy_count).assignment;
  const auto counts = a.per_layer_counts(rc.session.num_heads)[0];
  for (Mode mode : {Mode::baseline, Mode::hma, Mode::packed}) {
    const auto b = bench_warm_layer(*w, rc.session, mode, a, 2);
    CHECK(b.result.key_token_macs == closed_form_layer_macs(mode, counts, a.counts(), rc.session));
  }
}

TEST_CASE("sweeps") {
  auto rc = load_config(kConfigs / "sweep.json");
  rc.session.hw = 16;
  rc.reps = 1;

  const auto ctx = run_sweep(rc, "context_len");
  CHECK(ctx.size() == 3 * 3);
  std::map<std::size_t, std::map<Mode, SweepRow>> by;
  for (const auto& r : ctx) {
    CHECK(r.key_token_macs == r.closed_form_macs);
    by[r.context_frames][r.mode] = r;
  }
  // The saving over baseline grows linearly in the context length.
  std::vector<double> gaps;
  for (auto& [frames, rows] : by) {
    CHECK(rows[Mode::baseline].kernel_calls == 1);
    CHECK(rows[Mode::hma].key_token_macs < rows[Mode::baseline].key_token_macs);
    gaps.push_back(static_cast<double>(rows[Mode::baseline].key_token_macs - rows[Mode::hma].key_token_macs));
  }
  const std::vector<double> frames{5, 9, 15};
  const double slope = (gaps[1] - gaps[0]) / (frames[1] - frames[0]);
  CHECK(gaps[2] == doctest::Approx(gaps[0] + slope * (frames[2] - frames[0])).epsilon(1e-12));

  const auto ratios = run_sweep(rc, "dummy_ratio");
  double prev = 2.0;
  for (const auto& r : ratios) {
    if (r.mode != Mode::hma) continue;
    CHECK(r.cache_ratio < prev);
    prev = r.cache_ratio;
  }

  const auto csv = sweep_csv(ratios);
  CHECK(csv.rfind("axis,axis_value,mode,context_frames,dummy_count,key_token_macs,closed_form_macs,kernel_calls,"
                  "median_wall_time_ns,cache_ratio\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(ratios.size() + 1));
  CHECK_THROWS_AS(run_sweep(rc, "depth"), ConfigError);
}
