#include <cmath>
#include <set>

#include "doctest.h"
#include "pcnet/config.hpp"
#include "pcnet/simulate.hpp"
#include "synth.hpp"
#include "test_util.hpp"

using namespace pcnet;
using namespace test;

namespace {

SimConfig quiet(std::uint64_t seed) {
  SimConfig c;
  c.seed = seed;
  c.noise_sigma = 0.0;
  c.nlos_probability = 0.0;
  c.epochs = 20;
  return c;
}

}  // namespace

TEST_CASE("noiseless traces are solved exactly") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (auto path : {PathKind::Static, PathKind::Polyline}) {
      auto c = quiet(seed);
      c.path = path;
      c.waypoints = {{0.0, 0.0}, {200.0, 50.0}, {300.0, -100.0}};
      const auto [trace, truth] = gen_trace(c);
      REQUIRE(trace.epochs.size() == 20);
      for (std::size_t k = 0; k < trace.epochs.size(); ++k) {
        const auto& e = trace.epochs[k];
        CHECK(e.measurements.size() >= 4);
        const auto fix = wls_solve(e);
        CHECK(dist(fix.position, truth.epochs[k].position) < 1e-6);
        // residuals at the truth vanish
        for (const auto& m : usable_measurements(e)) {
          const double r = m.value - (geometric_range(truth.epochs[k].position, m.sat_pos) +
                                      truth.epochs[k].clock_bias);
          CHECK(std::abs(r) < 1e-9);
        }
      }
    }
  }
}

TEST_CASE("generation is deterministic") {
  SimConfig c;
  c.seed = 99;
  c.epochs = 30;
  const auto a = gen_trace(c);
  const auto b = gen_trace(c);
  CHECK(a.first == b.first);
  c.seed = 100;
  CHECK_FALSE(gen_trace(c).first == a.first);
}

TEST_CASE("trace structure") {
  SimConfig c;
  c.seed = 5;
  c.epochs = 50;
  c.nlos_probability = 0.5;
  const auto [trace, truth] = gen_trace(c);
  REQUIRE(trace.ground_truth.has_value());
  REQUIRE(trace.ground_truth->size() == trace.epochs.size());
  REQUIRE(truth.epochs.size() == trace.epochs.size());
  std::size_t nlos = 0, total = 0;
  for (std::size_t k = 0; k < trace.epochs.size(); ++k) {
    const auto& e = trace.epochs[k];
    const auto& t = truth.epochs[k];
    CHECK(e.time_ms == c.start_time_ms + static_cast<std::int64_t>(k) * c.cadence_ms);
    CHECK((*trace.ground_truth)[k].time_ms == e.time_ms);
    REQUIRE(t.sat_ids.size() == e.measurements.size());
    std::set<std::string> ids;
    const auto rx = (*trace.ground_truth)[k].position;
    for (std::size_t i = 0; i < e.measurements.size(); ++i) {
      const auto& m = e.measurements[i];
      CHECK(m.sat_id == t.sat_ids[i]);
      ids.insert(m.sat_id);
      if (i > 0) CHECK(e.measurements[i - 1].sat_id < m.sat_id);
      CHECK(t.bias[i] >= 0.0);
      CHECK((t.bias[i] > 0.0) == static_cast<bool>(t.nlos[i]));
      REQUIRE(m.elevation.has_value());
      CHECK(*m.elevation >= c.elevation_mask);
      CHECK(std::abs(*m.elevation - elevation_azimuth(m.sat_pos, rx).first) < 1e-6);
      CHECK(m.sat_pos.vec().norm() == doctest::Approx(c.orbit_radius).epsilon(1e-9));
      CHECK(m.cn0 >= 1.0);
      CHECK(m.cn0 <= 65.0);
      nlos += t.nlos[i] ? 1 : 0;
      ++total;
    }
    CHECK(ids.size() == e.measurements.size());
  }
  CHECK(nlos > 0);
  CHECK(nlos < total);
}

TEST_CASE("NLOS biases hurt even the robust solver") {
  double clean = 0.0, biased = 0.0;
  int n = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SimConfig c;
    c.seed = seed;
    c.epochs = 20;
    c.nlos_probability = 0.0;
    const auto [t0, truth0] = gen_trace(c);
    c.nlos_probability = 1.0;
    const auto [t1, truth1] = gen_trace(c);
    for (std::size_t k = 0; k < t0.epochs.size(); ++k) {
      clean += dist(rwls_solve(t0.epochs[k]).position, truth0.epochs[k].position);
      biased += dist(rwls_solve(t1.epochs[k]).position, truth1.epochs[k].position);
      ++n;
    }
  }
  CHECK(biased / n > clean / n + 1.0);
}

TEST_CASE("config validation and parsing") {
  SimConfig c;
  CHECK_NOTHROW(validate(c));
  auto bad = c;
  bad.nlos_probability = 1.5;
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::ConfigError);
  bad = c;
  bad.noise_sigma = -1.0;
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::ConfigError);
  bad = c;
  bad.min_satellites = 0;
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::ConfigError);
  bad = c;
  bad.epochs = -1;
  CHECK(code_of([&] { (void)gen_trace(bad); }) == ErrorCode::ConfigError);

  const auto kv = KeyValueConfig::parse(
      "noise_sigma = 0.25\nnlos_probability = 0.4\npath = polyline\nwaypoints = 0:0;100:50\n"
      "speed = 5\nepochs = 7\norigin_lat = 48.1\n");
  apply_config(kv, c);
  CHECK(c.noise_sigma == 0.25);
  CHECK(c.nlos_probability == 0.4);
  CHECK(c.path == PathKind::Polyline);
  REQUIRE(c.waypoints.size() == 2);
  CHECK(c.waypoints[1] == std::pair<double, double>{100.0, 50.0});
  CHECK(c.speed == 5.0);
  CHECK(c.epochs == 7);
  CHECK(c.origin.latitude == 48.1);
  CHECK(code_of([&] { apply_config(KeyValueConfig::parse("path = zigzag\n"), c); }) ==
        ErrorCode::ConfigError);
}

TEST_CASE("polyline receiver moves at the configured speed") {
  auto c = quiet(4);
  c.path = PathKind::Polyline;
  c.waypoints = {{0.0, 0.0}, {1000.0, 0.0}};
  c.speed = 10.0;
  const auto [trace, truth] = gen_trace(c);
  for (std::size_t k = 1; k < truth.epochs.size(); ++k) {
    CHECK(dist(truth.epochs[k].position, truth.epochs[k - 1].position) ==
          doctest::Approx(10.0).epsilon(1e-3));
  }
  const auto start = ecef_to_ned(truth.epochs.back().position, (*trace.ground_truth)[0].position);
  CHECK(start.north == doctest::Approx(190.0).epsilon(1e-3));
}

TEST_CASE("corpus generation") {
  SimConfig base;
  base.epochs = 10;
  const auto configs = corpus_configs(base, 20, 7);
  REQUIRE(configs.size() == 20);
  std::set<std::uint64_t> seeds;
  std::set<std::string> ids;
  for (const auto& c : configs) {
    seeds.insert(c.seed);
    ids.insert(c.trace_id);
  }
  CHECK(seeds.size() == 20);
  CHECK(ids.size() == 20);
  CHECK(configs[0].trace_id == "trace_000");
  CHECK(derive_seed(7, 0) != derive_seed(7, 1));
  CHECK(derive_seed(7, 0) != derive_seed(8, 0));
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));

  const auto dir = scratch("corpus");
  const auto split = gen_corpus(configs, dir, 11);
  CHECK(split.size() == 20);
  CHECK(read_splits(dir / "splits.csv") == split);

  const auto traces = load_corpus(dir);
  REQUIRE(traces.size() == 20);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    const auto expect = gen_trace(configs[i]).first;
    CHECK(t.trace_id == expect.trace_id);
    REQUIRE(t.ground_truth.has_value());
    CHECK(t.ground_truth->size() == t.epochs.size());
    CHECK(t.epochs.size() == expect.epochs.size());
    // measurement values survive the CSV round trip
    CHECK(t.epochs == expect.epochs);
  }

  CHECK(code_of([&] { (void)gen_corpus({}, dir / "empty", 1); }) == ErrorCode::ConfigError);
}
