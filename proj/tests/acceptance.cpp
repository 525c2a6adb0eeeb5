// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exits nonzero when
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pcnet/cli.hpp"
#include "pcnet/error.hpp"
#include "pcnet/eval.hpp"
#include "pcnet/features.hpp"
#include "pcnet/geodesy.hpp"
#include "pcnet/pinet.hpp"
#include "pcnet/simulate.hpp"
#include "pcnet/solver.hpp"
#include "test_util.hpp"

using namespace pcnet;
namespace fs = std::filesystem;

namespace {

enum class Outcome { Pass, Fail, Skip };

struct Result {
  Outcome outcome = Outcome::Fail;
  std::string detail;
};

Result verdict(bool ok, std::string detail) {
  return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)};
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1. permutation invariance ------------------------------------------

Result permutation_invariance() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_int_distribution<int> sizes(4, 14);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto model = init_model(Architecture{}, rng());
    const int m = sizes(rng);
    Eigen::MatrixXd x(m, kFeatureCount);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    std::vector<int> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd px(m, kFeatureCount);
    for (int i = 0; i < m; ++i) px.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    worst = std::max(worst, (infer(model, x) - infer(model, px)).cwiseAbs().maxCoeff());
  }
  return verdict(worst < 1e-9, fmt("1000 triples, max deviation %.3g m", worst));
}

// ---- 2. parameter accounting --------------------------------------------

Result parameter_accounting() {
  Architecture one;
  one.output_dim = 1;
  const auto layers = layer_param_counts(init_model(one, 0));
  const std::vector<Eigen::Index> expect{256, 2112, 8320, 33024, 32896, 8256, 2080, 1056, 33};
  const auto total1 = param_count(init_model(one, 0));
  const auto total3 = param_count(init_model(Architecture{}, 0));
  return verdict(layers == expect && total1 == 88033 && total3 == 88099,
                 fmt("output_dim=1: %lld, output_dim=3: %lld", static_cast<long long>(total1),
                     static_cast<long long>(total3)));
}

// ---- 3. gradient correctness --------------------------------------------

Result gradient_correctness() {
  double worst = 0.0;
  std::size_t checked = 0;
  for (int out : {1, 3}) {
    auto model = init_model(Architecture::reduced(out), 42);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    Eigen::MatrixXd x(3, kFeatureCount);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    Eigen::VectorXd label(out);
    for (int i = 0; i < out; ++i) label[i] = n(rng);
    const std::uint64_t mask_seed = 9;
    auto loss = [&] {
      std::mt19937_64 r(mask_seed);
      return mse_loss(forward(model, x, Mode::Train, r).output, label);
    };
    std::mt19937_64 r(mask_seed);
    const auto res = forward(model, x, Mode::Train, r);
    const auto grads = backward(model, res.cache, mse_gradient(res.output, label));
    const double h = 1e-5;
    auto probe = [&](double& theta, double analytic) {
      const double keep = theta;
      theta = keep + h;
      const double up = loss();
      theta = keep - h;
      const double down = loss();
      theta = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - analytic) /
                                  std::max({std::abs(fd), std::abs(analytic), 1e-6}));
      ++checked;
    };
    auto params = model.params.layers();
    const auto g = grads.layers();
    for (std::size_t l = 0; l < params.size(); ++l) {
      for (Eigen::Index i = 0; i < params[l]->weight.size(); ++i) {
        probe(params[l]->weight.data()[i], g[l]->weight.data()[i]);
      }
      for (Eigen::Index i = 0; i < params[l]->bias.size(); ++i) {
        probe(params[l]->bias[i], g[l]->bias[i]);
      }
    }
  }
  return verdict(worst < 1e-5,
                 fmt("%zu parameters, max relative error %.3g", checked, worst));
}

// ---- 4. solver recovery --------------------------------------------------

Result solver_recovery() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lat(-70.0, 70.0), lon(-180.0, 180.0), az(0.0, 360.0),
      el(10.0, 85.0), clk(-1e5, 1e5);
  int ok = 0;
  double worst_pos = 0.0, worst_clk = 0.0, worst_gdop = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    const GeodeticPosition rx{lat(rng), lon(rng), 50.0};
    const auto truth = geodetic_to_ecef(rx);
    const Eigen::Matrix3d r = ecef_to_ned_rotation(rx);
    std::vector<CorrectedPseudorange> ms;
    double g = 0.0;
    do {
      ms.clear();
      for (int i = 0; i < 8; ++i) {
        const double e = deg2rad(el(rng)), a = deg2rad(az(rng));
        const Eigen::Vector3d d =
            r.transpose() * Eigen::Vector3d(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a),
                                            -std::sin(e));
        const double b = truth.vec().dot(d);
        const double t = -b + std::sqrt(b * b - truth.vec().squaredNorm() + 2.656e7 * 2.656e7);
        CorrectedPseudorange m;
        m.sat_id = fmt("G%02d", i + 1);
        m.sat_pos = EcefPosition::from(truth.vec() + t * d);
        ms.push_back(m);
      }
      std::vector<EcefPosition> sats;
      for (const auto& m : ms) sats.push_back(m.sat_pos);
      try {
        g = gdop(geometry_matrix(sats, truth));
      } catch (const Error&) {
        g = 1e9;
      }
    } while (!(g < 3.0));
    const double b = clk(rng);
    for (auto& m : ms) m.value = geometric_range(truth, m.sat_pos) + b;
    worst_gdop = std::max(worst_gdop, g);
    bool good = true;
    for (const auto& fix : {wls_solve(ms), rwls_solve(ms)}) {
      const double dp = (fix.position.vec() - truth.vec()).norm();
      const double dc = std::abs(fix.clock_bias - b);
      worst_pos = std::max(worst_pos, dp);
      worst_clk = std::max(worst_clk, dc);
      good = good && fix.converged && dp < 1e-6 && dc < 1e-6;
    }
    ok += good ? 1 : 0;
  }
  return verdict(ok == 100, fmt("%d/100 seeds (GDOP <= %.2f), max position error %.3g m, max clock "
                                "error %.3g m",
                                ok, worst_gdop, worst_pos, worst_clk));
}

// ---- 5. robustness ordering ---------------------------------------------

Result robustness_ordering() {
  SimConfig base;
  base.epochs = 50;
  base.nlos_probability = 0.2;
  base.nlos_bias_mean = 15.0;
  std::vector<Trace> traces;
  for (const auto& c : corpus_configs(base, 50, 5)) traces.push_back(gen_trace(c).first);
  const std::vector<Method> methods{Method::Wls, Method::Rwls};
  const auto cmp = compare_methods(traces, methods, nullptr, {}, thread_budget());
  const auto& wls = cmp.reports[0];
  const auto& rwls = cmp.reports[1];
  int wins = 0;
  for (std::size_t i = 0; i < wls.traces.size(); ++i) {
    wins += rwls.traces[i].mean_horizontal < wls.traces[i].mean_horizontal ? 1 : 0;
  }
  const bool ok = wls.mean_horizontal > rwls.mean_horizontal && wins >= 45;
  return verdict(ok, fmt("mean horizontal WLS %.3f m, r-WLS %.3f m; r-WLS better on %d/50 traces",
                         wls.mean_horizontal, rwls.mean_horizontal, wins));
}

// ---- 6. end-to-end learning gain -----------------------------------------

Result learning_gain() {
  SimConfig base;
  base.epochs = 100;
  std::vector<Trace> traces;
  std::vector<std::string> ids;
  for (const auto& c : corpus_configs(base, 40, 7)) {
    traces.push_back(gen_trace(c).first);
    ids.push_back(traces.back().trace_id);
  }
  const auto split = split_by_trace(ids, 7);
  const std::map<std::string, Split> role(split.begin(), split.end());
  std::vector<FeatureSet> train_sets, val_sets;
  std::vector<Trace> test;
  for (const auto& t : traces) {
    const auto s = role.at(t.trace_id);
    if (s == Split::Test) {
      test.push_back(t);
      continue;
    }
    auto ds = build_dataset(t);
    auto& dst = s == Split::Train ? train_sets : val_sets;
    dst.insert(dst.end(), ds.begin(), ds.end());
  }
  TrainConfig tc;
  tc.max_epochs = 100;
  tc.batch_size = 8;
  tc.seed = 7;
  tc.threads = thread_budget();
  const auto res = train_on(train_sets, val_sets, tc);
  const std::vector<Method> methods{Method::Rwls, Method::PcDeepNet};
  const auto cmp = compare_methods(test, methods, &res.model, {}, thread_budget());
  const auto& rw = cmp.reports[0];
  const auto& pc = cmp.reports[1];
  const double gain = 1.0 - pc.mean_horizontal / rw.mean_horizontal;
  const bool ok = gain >= 0.30 && pc.score < rw.score;
  return verdict(ok, fmt("%zu test traces, best epoch %d/%zu: horizontal MAE r-WLS %.3f m -> "
                         "%.3f m (%.1f%% lower), score %.3f -> %.3f m",
                         test.size(), res.best_epoch, res.history.size(), rw.mean_horizontal,
                         pc.mean_horizontal, 100.0 * gain, rw.score, pc.score));
}

// ---- 7. metric fidelity ---------------------------------------------------

double tau_brute(const std::vector<double>& a, const std::vector<double>& b) {
  long long conc = 0, disc = 0, ta = 0, tb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0 && db == 0) continue;
      if (da == 0) {
        ++ta;
      } else if (db == 0) {
        ++tb;
      } else if ((da > 0) == (db > 0)) {
        ++conc;
      } else {
        ++disc;
      }
    }
  }
  return static_cast<double>(conc - disc) /
         std::sqrt(static_cast<double>(conc + disc + ta) * static_cast<double>(conc + disc + tb));
}

Result metric_fidelity() {
  std::vector<double> ramp(100);
  std::iota(ramp.begin(), ramp.end(), 1.0);
  const double s_ramp = score(std::vector<std::vector<double>>{ramp});
  const double s_five = score(std::vector<std::vector<double>>{std::vector<double>(20, 5.0)});
  const double eq = horizontal_error({0.0, 1.0, 0.0}, {0.0, 0.0, 0.0});
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> small(0, 5);
  int tau_exact = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(50), b(50);
    for (std::size_t i = 0; i < 50; ++i) {
      a[i] = trial % 2 ? small(rng) : n(rng);
      b[i] = trial % 2 ? small(rng) : a[i] + n(rng);
    }
    tau_exact += kendall_tau(a, b) == tau_brute(a, b) ? 1 : 0;
  }
  const bool ok = s_ramp == 72.775 && s_five == 5.0 &&
                  std::abs(eq - 111319.4908) < 1e-3 && tau_exact == 20;
  return verdict(ok, fmt("score([1..100]) = %.12g, score(5) = %g, equator 1 deg = %.4f m, "
                         "tau exact on %d/20 inputs",
                         s_ramp, s_five, eq, tau_exact));
}

// ---- 8. determinism --------------------------------------------------------

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pcnet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

bool run_pipeline(const fs::path& dir) {
  const auto corpus = (dir / "corpus").string();
  test::write_file(dir / "sim.cfg", "epochs = 30\n");
  test::write_file(dir / "train.cfg", "max_epochs = 5\n");
  return cli({"simulate", "-o", corpus, "--config", (dir / "sim.cfg").string(), "--seed", "11",
              "--traces", "8"}) == 0 &&
         cli({"extract", "-i", corpus, "-o", (dir / "all.features.csv").string()}) == 0 &&
         cli({"train", "-i", (dir / "all.features.csv").string(), "--splits",
              corpus + "/splits.csv", "--seed", "11", "--config", (dir / "train.cfg").string(),
              "-o", (dir / "model.pcdn").string()}) == 0 &&
         cli({"predict", "-i", corpus, "--model", (dir / "model.pcdn").string(), "-o",
              (dir / "pred.csv").string()}) == 0 &&
         cli({"evaluate", "-i", corpus, "--model", (dir / "model.pcdn").string(), "-o",
              (dir / "report").string()}) == 0;
}

Result determinism() {
  const auto a = test::scratch("acceptance_run_a");
  const auto b = test::scratch("acceptance_run_b");
  if (!run_pipeline(a) || !run_pipeline(b)) return verdict(false, "pipeline failed");
  const std::vector<std::string> files{"model.pcdn",         "model.history.csv",
                                       "pred.csv",           "report/summary.csv",
                                       "report/scores.csv",  "report/timeseries.csv",
                                       "report/tracks.geojson"};
  std::size_t same = 0;
  for (const auto& f : files) {
    const auto x = test::read_file(a / f);
    same += !x.empty() && x == test::read_file(b / f) ? 1 : 0;
  }
  return verdict(same == files.size(),
                 fmt("%zu/%zu output files byte-identical across runs", same, files.size()));
}

// ---- 9. feature diagnostic on real data ----------------------------------

Result feature_diagnostic() {
  const char* dir = std::getenv("PCNET_REAL_DATA");
  if (!dir || !*dir) {
    return {Outcome::Skip, "no real-data traces supplied (set PCNET_REAL_DATA to a corpus directory)"};
  }
  std::vector<std::vector<double>> cols(kFeatureCount);
  for (const auto& t : load_corpus(dir)) {
    for (const auto& s : build_dataset(t)) {
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        for (int c = 0; c < kFeatureCount; ++c) cols[static_cast<std::size_t>(c)].push_back(s.rows(i, c));
      }
    }
  }
  if (cols[0].size() < 2) return verdict(false, "real-data set yields no feature rows");
  double best = -1.0;
  int bi = -1, bj = -1;
  for (int i = 0; i < kFeatureCount; ++i) {
    for (int j = i + 1; j < kFeatureCount; ++j) {
      double tau = 0.0;
      try {
        tau = std::abs(kendall_tau(cols[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]));
      } catch (const Error&) {
        continue;  // constant column
      }
      if (tau > best) {
        best = tau;
        bi = i;
        bj = j;
      }
    }
  }
  const bool ok = bi == kElevation && bj == kCn0;
  return verdict(ok, fmt("%zu rows; max |tau| %.3f between %s and %s", cols[0].size(), best,
                         bi < 0 ? "?" : std::string(feature_name(bi)).c_str(),
                         bj < 0 ? "?" : std::string(feature_name(bj)).c_str()));
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Result()> run;
    double limit_s;  // 0: no runtime bound
  };
  const std::vector<Criterion> criteria{
      {1, "permutation invariance", permutation_invariance, 10.0},
      {2, "parameter accounting", parameter_accounting, 0.0},
      {3, "gradient correctness", gradient_correctness, 30.0},
      {4, "solver recovery", solver_recovery, 5.0},
      {5, "robustness ordering", robustness_ordering, 0.0},
      {6, "end-to-end learning gain", learning_gain, 1800.0},
      {7, "metric fidelity", metric_fidelity, 0.0},
      {8, "determinism", determinism, 0.0},
      {9, "feature diagnostic on real data", feature_diagnostic, 0.0},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = verdict(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.outcome == Outcome::Pass && c.limit_s > 0.0 && secs > c.limit_s) {
      r = verdict(false, r.detail + fmt("; exceeded %.0f s limit", c.limit_s));
    }
    const char* tag = r.outcome == Outcome::Pass ? "PASS" : r.outcome == Outcome::Skip ? "SKIP" : "FAIL";
    std::printf("criterion %d (%s): %s - %s [%.2f s]\n", c.id, c.name, tag, r.detail.c_str(), secs);
    std::fflush(stdout);
    failures += r.outcome == Outcome::Fail ? 1 : 0;
  }
  return failures == 0 ? 0 : 1;
}
