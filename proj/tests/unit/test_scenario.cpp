#include <doctest.h>

#include <cmath>

#include "df/profiler.hpp"
#include "df/scenario.hpp"
#include "df/session.hpp"
#include "planted_fixture.hpp"

using namespace df;

namespace {

ToyModelSpec toy(std::uint64_t seed = 0, double weight_scale = 1.0) {
  ToyModelSpec s;
  s.num_layers = 2;
  s.num_heads = 4;
  s.head_dim = 8;
  s.hw = 16;
  s.denoise_steps = 2;
  s.seed = seed;
  s.weight_scale = weight_scale;
  return s;
}

std::uint64_t weight_checksum(const ToyModel& m) {
  std::uint64_t h = 0;
  for (std::size_t l = 0; l < m.spec().num_layers; ++l) {
    for (const Matrix* w : {&m.wq(l), &m.wk(l), &m.wv(l), &m.wo(l)}) h = h * 31 + matrix_hash(*w);
  }
  return h;
}

std::uint64_t session_hash(const SessionResult& r) {
  std::uint64_t h = 0;
  for (const auto& f : r.frames) h = h * 31 + matrix_hash(f);
  return h;
}

}  // namespace

TEST_CASE("toy weights are a function of the seed") {
  CHECK(weight_checksum(ToyModel(toy(1))) == weight_checksum(build_toy_model(toy(1))));
  CHECK(weight_checksum(ToyModel(toy(1))) != weight_checksum(ToyModel(toy(2))));
  const ToyModel m(toy(3));
  CHECK(m.wq(0).rows() == m.model_dim());
  CHECK(m.wq(0).cols() == m.model_dim());
  const double bound = 1.0 / std::sqrt(static_cast<double>(m.model_dim()));
  for (double x : m.wk(1).data()) CHECK(std::abs(x) <= bound);
}

TEST_CASE("toy spec validation") {
  ToyModelSpec s = toy();
  s.num_heads = 0;
  CHECK_THROWS_AS(ToyModel{s}, ConfigError);
  const ToyModel m(toy());
  SessionConfig c = m.spec().session_shape();
  c.hw = 8;
  CHECK_THROWS_AS(m.check_compatible(c), ConfigError);
}

TEST_CASE("zero weights give uniform attention") {
  const ToyModel m(toy(5, 0.0));
  SessionConfig c = m.spec().session_shape();
  c.window_len = 3;
  c.ar_steps = 6;
  const auto early = global_scores(m, c, c.probe, 0.25);
  for (std::size_t h = 0; h < c.total_heads(); ++h) {
    const auto s = early.row(h);
    CHECK(s.sink == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(s.neighbor == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(s.current == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  const auto warm = global_scores(m, c, ProbePoint{4, std::nullopt}, 0.25);
  for (std::size_t h = 0; h < c.total_heads(); ++h) {
    const auto s = warm.row(h);
    CHECK(s.sink == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s.neighbor == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.current == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("toy baseline session golden hash") {
  const ToyModel m(toy(0));
  SessionConfig c = m.spec().session_shape();
  c.window_len = 3;
  c.ar_steps = 4;
  const auto r = generate_session(m, c, Mode::baseline);
  CHECK(session_hash(r) == session_hash(generate_session(m, c, Mode::baseline)));
  CHECK(session_hash(r) == 16918732602348232876ULL);
}

TEST_CASE("toy forward keeps the frame shape and is deterministic") {
  const ToyModel m(toy(4));
  const Matrix f = m.initial_frame(0);
  CHECK(f.rows() == 16);
  CHECK(f.cols() == m.model_dim());
  CHECK(m.forward(f) == m.forward(f));
  CHECK(m.initial_frame(1) != f);
}

TEST_CASE("planted labels") {
  const auto a = planted_labels(3, 2, 3, 9);
  CHECK(a == planted_labels(3, 2, 3, 9));
  PlantedSpec s;
  s.labels = a;
  CHECK(s.count(PlantedLabel::sink) == 3);
  CHECK(s.count(PlantedLabel::neighbor) == 2);
  CHECK(s.count(PlantedLabel::current) == 3);
  CHECK_NOTHROW(s.validate(8));
  CHECK_THROWS_AS(s.validate(7), ConfigError);
}

TEST_CASE("planted streams need room for the slot layout") {
  SessionConfig c = fixture::recovery_shape();
  c.window_len = 7;
  CHECK(PlantedWorkload::min_head_dim(7) == 9);
  CHECK_THROWS_AS(planted_stream(fixture::recovery_spec(1.0, 0), c), ConfigError);
}

TEST_CASE("planted projections are deterministic") {
  const auto c = fixture::recovery_shape();
  const auto w = planted_stream(fixture::recovery_spec(1.0, 3), c);
  const auto a = w.project(1, Matrix(), 2, 0);
  const auto b = w.project(1, Matrix(), 2, 0);
  REQUIRE(a.size() == 4);
  for (std::size_t h = 0; h < 4; ++h) {
    CHECK(a[h].q == b[h].q);
    CHECK(a[h].k == b[h].k);
    CHECK(a[h].v == b[h].v);
  }
  CHECK(w.project(1, Matrix(), 3, 0)[0].k != a[0].k);
}

TEST_CASE("margin controls how sharply a planted head prefers its region") {
  const auto c = fixture::recovery_shape();
  const auto strong = fixture::recovery_spec(10.0, 1);
  const auto s = global_scores(planted_stream(strong, c), c, c.probe, 0.25);
  for (std::size_t h = 0; h < c.total_heads(); ++h) {
    CHECK(s.row(h).as_array()[static_cast<int>(strong.labels[h])] > 0.99);
  }
  const auto flat = global_scores(planted_stream(fixture::recovery_spec(0.0, 1), c), c, c.probe, 0.25);
  for (std::size_t h = 0; h < c.total_heads(); ++h) {
    for (double x : flat.row(h).as_array()) CHECK(std::abs(x - 1.0 / 3.0) < 0.15);
  }
}

TEST_CASE("recovery margin is the smallest with full recovery") {
  CHECK(fixture::recovered_seeds(fixture::kRecoveryMargin) == fixture::kRecoverySeeds);
  CHECK(fixture::recovered_seeds(fixture::kRecoveryMargin - 0.01) < fixture::kRecoverySeeds);
  CHECK(fixture::recovered_seeds(0.0) < fixture::kRecoverySeeds / 2);
}

TEST_CASE("unperturbed conditions share every top-N head") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(fixture::stability_ratio(0.0, 0.0, 5, seed) == 1.0);
    CHECK(fixture::stability_ratio(2.0, 0.0, 5, seed) == 1.0);
  }
}

TEST_CASE("strong perturbation makes top-N sets look random") {
  // Two independent uniformly random N-subsets of T heads overlap in N/T of
  // their entries on average.
  const auto c = fixture::recovery_shape();
  const double expected = static_cast<double>(c.dummy_count) / static_cast<double>(c.total_heads());
  double strong = 0.0, moderate = 0.0;
  const int trials = 150;
  for (int t = 0; t < trials; ++t) {
    strong += fixture::stability_ratio(0.0, 50.0, 2, 1000 + t);
    moderate += fixture::stability_ratio(2.0, 1.0, 2, 1000 + t);
  }
  strong /= trials;
  moderate /= trials;
  CHECK(std::abs(strong - expected) < 0.08);
  CHECK(moderate > strong);
  CHECK(moderate < 1.0);
}

TEST_CASE("perturbation strength must be non-negative") {
  CHECK_THROWS_AS(stability_perturb(fixture::recovery_spec(1.0, 0), ConditionKind::ar_step, 0, -1.0), ConfigError);
}
