#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "pcnet/eval.hpp"
#include "pcnet/simulate.hpp"
#include "synth.hpp"
#include "test_util.hpp"

using namespace pcnet;
using namespace test;

namespace {

std::vector<double> one_to(int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 1.0);
  return v;
}

std::vector<Trace> sim_traces(int count, double noise, double nlos, std::uint64_t seed) {
  SimConfig base;
  base.epochs = 20;
  base.noise_sigma = noise;
  base.nlos_probability = nlos;
  std::vector<Trace> out;
  for (const auto& c : corpus_configs(base, count, seed)) out.push_back(gen_trace(c).first);
  return out;
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("horizontal_error") {
  const GeodeticPosition a{10.0, 20.0, 0.0};
  CHECK(horizontal_error(a, a) == 0.0);
  CHECK(std::abs(horizontal_error({0.0, 1.0, 0.0}, {0.0, 0.0, 0.0}) - 111319.4908) < 1e-3);
  CHECK(horizontal_error({10.0, 20.0, 500.0}, a) == 0.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e-4, 1e-4), h(-100.0, 100.0);
  for (int k = 0; k < 50; ++k) {
    const GeodeticPosition est{a.latitude + u(rng), a.longitude + u(rng), 0.0};
    const double d = horizontal_error(est, a);
    CHECK(horizontal_error({est.latitude, est.longitude, h(rng)}, {a.latitude, a.longitude, h(rng)}) == d);
  }
}

TEST_CASE("percentile") {
  const auto v = one_to(100);
  CHECK(percentile(v, 50) == doctest::Approx(50.5).epsilon(1e-15));
  CHECK(percentile(v, 95) == doctest::Approx(95.05).epsilon(1e-15));
  CHECK(percentile(v, 100) == 100.0);
  CHECK(percentile(v, 0) == 1.0);
  const std::vector<double> c(7, 3.25);
  for (double p : {0.0, 13.0, 50.0, 99.0, 100.0}) CHECK(percentile(c, p) == 3.25);
  // matches a sort-and-interpolate oracle on unsorted data
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::vector<double> r(37);
  for (auto& x : r) x = n(rng);
  auto sorted = r;
  std::sort(sorted.begin(), sorted.end());
  for (double p : {5.0, 33.3, 50.0, 95.0}) {
    const double h = (sorted.size() - 1) * p / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double expect = sorted[lo] + (h - lo) * (sorted[std::min(lo + 1, sorted.size() - 1)] - sorted[lo]);
    CHECK(percentile(r, p) == doctest::Approx(expect).epsilon(1e-14));
  }
  CHECK(code_of([] { (void)percentile(std::vector<double>{}, 50); }) == ErrorCode::EmptyInput);
  CHECK(code_of([&] { (void)percentile(v, 101); }) == ErrorCode::UsageError);
}

TEST_CASE("score") {
  const std::vector<std::vector<double>> five{std::vector<double>(10, 5.0)};
  CHECK(score(five) == 5.0);
  const std::vector<std::vector<double>> ramp{one_to(100)};
  CHECK(score(ramp) == doctest::Approx(72.775).epsilon(1e-14));
  const std::vector<std::vector<double>> two{std::vector<double>(4, 4.0), std::vector<double>(9, 6.0)};
  CHECK(score(two) == 5.0);
  CHECK(code_of([] { (void)score(std::vector<std::vector<double>>{}); }) == ErrorCode::EmptyInput);
  const std::vector<std::vector<double>> hole{one_to(3), {}};
  CHECK(code_of([&] { (void)score(hole); }) == ErrorCode::EmptyInput);

  std::mt19937_64 rng(3);
  std::exponential_distribution<double> e(0.2);
  for (int k = 0; k < 20; ++k) {
    std::vector<double> d(50);
    for (auto& x : d) x = e(rng);
    const double s = score(std::vector<std::vector<double>>{d});
    CHECK(percentile(d, 50) <= s);
    CHECK(s <= percentile(d, 95));
    std::shuffle(d.begin(), d.end(), rng);
    CHECK(score(std::vector<std::vector<double>>{d}) == s);
  }
}

TEST_CASE("ned statistics") {
  std::vector<NedVector> zero(5);
  const auto z = ned_errors(zero);
  for (int a = 0; a < 3; ++a) {
    CHECK(z.mae[a] == 0.0);
    CHECK(z.ci_lo[a] == z.ci_hi[a]);
  }
  const std::vector<NedVector> north(8, NedVector{3.0, 0.0, 0.0});
  const auto n3 = ned_errors(north);
  CHECK(n3.mae[0] == 3.0);
  CHECK(n3.std[0] == 0.0);
  CHECK(n3.count == 8);

  // independent statistics oracle
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.5, 2.0);
  std::vector<NedVector> v(40);
  for (auto& x : v) x = {n(rng), n(rng), n(rng)};
  const auto s = ned_errors(v);
  for (int a = 0; a < 3; ++a) {
    double sum = 0.0;
    for (const auto& x : v) sum += std::abs(x.vec()[a]);
    const double mean = sum / 40.0;
    double ss = 0.0;
    for (const auto& x : v) ss += std::pow(std::abs(x.vec()[a]) - mean, 2);
    const double sd = std::sqrt(ss / 40.0);
    CHECK(std::abs(s.mae[a] - mean) < 1e-9);
    CHECK(std::abs(s.std[a] - sd) < 1e-9);
    CHECK(std::abs(s.ci_lo[a] - (mean - 1.96 * sd / std::sqrt(40.0))) < 1e-9);
    CHECK(std::abs(s.ci_hi[a] - (mean + 1.96 * sd / std::sqrt(40.0))) < 1e-9);
  }
  CHECK(code_of([] { (void)ned_errors(std::vector<NedVector>{}); }) == ErrorCode::EmptyInput);
}

TEST_CASE("error series") {
  const auto truth = geodetic_to_ecef(kRx);
  Trace t;
  t.trace_id = "x";
  std::vector<GroundTruthSample> gt;
  std::vector<std::optional<EcefPosition>> est;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int k = 0; k < 12; ++k) {
    t.epochs.push_back(Epoch{k * 1000, {}});
    gt.push_back({k * 1000, kRx});
    if (k == 4) {
      est.emplace_back(std::nullopt);
    } else {
      est.emplace_back(EcefPosition::from(truth.vec() + Eigen::Vector3d(n(rng), n(rng), n(rng))));
    }
  }
  CHECK(code_of([&] { (void)error_series("m", t, est); }) == ErrorCode::MissingGroundTruth);
  t.ground_truth = gt;
  const auto s = error_series("m", t, est);
  CHECK(s.size() == 11);
  CHECK(s.missing == 1);
  CHECK(s.method == "m");
  CHECK(std::find(s.time_ms.begin(), s.time_ms.end(), 4000) == s.time_ms.end());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto k = static_cast<std::size_t>(s.time_ms[i] / 1000);
    const double ecef = (est[k]->vec() - truth.vec()).norm();
    CHECK(std::abs(s.ned[i].norm() - ecef) <= 1e-9 * ecef);
    CHECK(s.horizontal[i] <= ecef + 1e-6);
  }
  est.pop_back();
  CHECK(code_of([&] { (void)error_series("m", t, est); }) == ErrorCode::AlignmentError);
}

TEST_CASE("method names") {
  for (auto m : {Method::Wls, Method::Rwls, Method::Kf, Method::PcDeepNet}) {
    CHECK(parse_method(std::string(to_string(m))) == m);
  }
  CHECK(code_of([] { (void)parse_method("magic"); }) == ErrorCode::UsageError);
}

TEST_CASE("noiseless comparison reports zero error") {
  const auto traces = sim_traces(3, 0.0, 0.0, 1);
  const std::vector<Method> methods{Method::Wls, Method::Rwls, Method::Kf};
  const auto cmp = compare_methods(traces, methods);
  REQUIRE(cmp.reports.size() == 3);
  CHECK(cmp.series.size() == 9);
  for (const auto& r : cmp.reports) {
    CHECK(r.traces.size() == 3);
    CHECK(r.score < 1e-3);
  }
  auto pc = [&] { (void)compare_methods(traces, std::vector<Method>{Method::PcDeepNet}); };
  CHECK(code_of(pc) == ErrorCode::UsageError);
}

TEST_CASE("robust solver beats plain least squares under NLOS") {
  const auto traces = sim_traces(6, 0.5, 0.3, 2);
  const std::vector<Method> methods{Method::Wls, Method::Rwls};
  const auto cmp = compare_methods(traces, methods, nullptr, {}, 3);
  CHECK(cmp.reports[0].score >= cmp.reports[1].score);
  for (const auto& r : cmp.reports) {
    for (const auto& t : r.traces) {
      CHECK(t.p50 <= t.score);
      CHECK(t.score <= t.p95);
    }
  }
  // threads do not change the result
  const auto single = compare_methods(traces, methods, nullptr, {}, 1);
  for (std::size_t i = 0; i < methods.size(); ++i) {
    CHECK(single.reports[i].score == cmp.reports[i].score);
  }
}

TEST_CASE("pcdeepnet with a zero model equals rwls") {
  const auto traces = sim_traces(2, 0.5, 0.2, 3);
  const auto model = zero_model(Architecture{});
  const auto pc = estimate_positions(traces[0], Method::PcDeepNet, &model);
  const auto rw = estimate_positions(traces[0], Method::Rwls);
  REQUIRE(pc.size() == rw.size());
  for (std::size_t k = 0; k < pc.size(); ++k) {
    REQUIRE(pc[k].has_value() == rw[k].has_value());
    if (pc[k]) CHECK(*pc[k] == *rw[k]);
  }
}

TEST_CASE("report files") {
  const auto traces = sim_traces(2, 0.5, 0.2, 4);
  const std::vector<Method> methods{Method::Wls, Method::Rwls, Method::Kf};
  const auto cmp = compare_methods(traces, methods);
  const auto dir = scratch("eval_reports");
  write_summary_csv(cmp.reports, dir / "summary.csv");
  write_scores_csv(cmp.reports, dir / "scores.csv");
  write_timeseries_csv(cmp.series, dir / "timeseries.csv");
  write_geojson(cmp.series, dir / "tracks.geojson");

  const auto summary = read_file(dir / "summary.csv");
  CHECK(summary.rfind("method,trace_id,p50_m,p95_m,score_m,mae_n_m,mae_e_m,mae_d_m,std_n_m,std_e_m,std_d_m,", 0) == 0);
  CHECK(count_lines(summary) == 1 + methods.size() * traces.size());
  CHECK(count_lines(read_file(dir / "scores.csv")) == 1 + methods.size());
  std::size_t epochs = 0;
  for (const auto& s : cmp.series) epochs += s.size();
  const auto ts = read_file(dir / "timeseries.csv");
  CHECK(ts.rfind("trace_id,time_ms,method,d_m,n_m,e_m,d_ned_m\n", 0) == 0);
  CHECK(count_lines(ts) == 1 + epochs);

  const auto gj = nlohmann::json::parse(read_file(dir / "tracks.geojson"));
  CHECK(gj["type"] == "FeatureCollection");
  CHECK(gj["features"].size() == cmp.series.size() + traces.size());
  const auto& first = gj["features"][0];
  CHECK(first["geometry"]["type"] == "LineString");
  const double lon = first["geometry"]["coordinates"][0][0];
  const double lat = first["geometry"]["coordinates"][0][1];
  CHECK(std::abs(lon - cmp.series[0].estimate[0].longitude) < 1e-9);
  CHECK(std::abs(lat - cmp.series[0].estimate[0].latitude) < 1e-9);
}
