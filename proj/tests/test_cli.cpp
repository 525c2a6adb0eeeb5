#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pcnet/cli.hpp"
#include "pcnet/gnss_model.hpp"
#include "synth.hpp"
#include "test_util.hpp"

using namespace pcnet;
using namespace test;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "pcnet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// simulate -> solve -> extract -> train -> predict -> evaluate in `dir`
void pipeline(const std::filesystem::path& dir) {
  const auto corpus = (dir / "corpus").string();
  write_file(dir / "sim.cfg", "epochs = 15\nnlos_probability = 0.3\n");
  write_file(dir / "train.cfg", "max_epochs = 3\nbatch_size = 8\n");
  REQUIRE(run({"simulate", "-o", corpus, "--config", (dir / "sim.cfg").string(), "--seed", "5",
               "--traces", "5"})
              .code == 0);
  REQUIRE(run({"solve", "-i", corpus, "-o", (dir / "rwls.csv").string()}).code == 0);
  REQUIRE(run({"solve", "-i", corpus, "--method", "wls", "-o", (dir / "wls.csv").string()}).code ==
          0);
  REQUIRE(run({"extract", "-i", corpus, "--fixes", (dir / "rwls.csv").string(), "-o",
               (dir / "all.features.csv").string()})
              .code == 0);
  const auto t = run({"train", "-i", (dir / "all.features.csv").string(), "--splits",
                      corpus + "/splits.csv", "--seed", "3", "--config",
                      (dir / "train.cfg").string(), "-o", (dir / "model.pcdn").string()});
  REQUIRE_MESSAGE(t.code == 0, t.err);
  REQUIRE(run({"predict", "-i", corpus, "--model", (dir / "model.pcdn").string(), "-o",
               (dir / "pred.csv").string()})
              .code == 0);
  const auto e = run({"evaluate", "-i", corpus, "--model", (dir / "model.pcdn").string(),
                      "--fixes", "saved=" + (dir / "wls.csv").string(), "-o",
                      (dir / "report").string()});
  REQUIRE_MESSAGE(e.code == 0, e.err);
}

}  // namespace

TEST_CASE("full pipeline on a small corpus") {
  const auto dir = scratch("cli_pipeline");
  pipeline(dir);
  // wls, rwls, kf, pcdeepnet and the saved fixes, each over 5 traces
  CHECK(count_lines(read_file(dir / "report" / "summary.csv")) == 1 + 5 * 5);
  CHECK(count_lines(read_file(dir / "report" / "scores.csv")) == 1 + 5);
  CHECK(std::filesystem::exists(dir / "report" / "timeseries.csv"));
  CHECK(std::filesystem::exists(dir / "report" / "tracks.geojson"));
  CHECK(std::filesystem::exists(dir / "model.history.csv"));
  CHECK(count_lines(read_file(dir / "model.history.csv")) == 1 + 3);

  const auto fixes = read_fixes_csv(dir / "rwls.csv");
  CHECK(fixes.size() == 5 * 15);
  CHECK(read_file(dir / "rwls.csv").rfind(
            "trace_id,time_ms,x_m,y_m,z_m,clk_m,gdop,converged,n_sats\n", 0) == 0);
  CHECK(read_fixes_csv(dir / "pred.csv").size() == fixes.size());
}

TEST_CASE("identical seeds give identical outputs") {
  const auto a = scratch("cli_det_a");
  const auto b = scratch("cli_det_b");
  pipeline(a);
  pipeline(b);
  for (const auto* f : {"model.pcdn", "model.history.csv", "rwls.csv", "pred.csv",
                        "all.features.csv", "report/summary.csv", "report/scores.csv",
                        "report/timeseries.csv", "report/tracks.geojson", "corpus/splits.csv",
                        "corpus/trace_000.epochs.csv"}) {
    CAPTURE(f);
    CHECK(read_file(a / f) == read_file(b / f));
  }
}

TEST_CASE("fixes CSV round trip keeps unsolved rows") {
  PositionFix f;
  f.position = {1.5, -2.25, 3e6};
  f.clock_bias = 12.0;
  f.gdop = 1.75;
  f.converged = true;
  f.sat_ids = {"G01", "G02", "G03", "G04"};
  const std::vector<FixRecord> recs{{"a", 0, f}, {"a", 1000, std::nullopt}, {"b", 5, f}};
  const auto dir = scratch("cli_fixes");
  write_fixes_csv(recs, dir / "f.csv");
  const auto back = read_fixes_csv(dir / "f.csv");
  REQUIRE(back.size() == 3);
  CHECK(back[0].trace_id == "a");
  CHECK(back[0].fix->position == f.position);
  CHECK(back[0].fix->clock_bias == 12.0);
  CHECK(back[0].fix->converged);
  CHECK_FALSE(back[1].fix.has_value());
  CHECK(back[2].time_ms == 5);
}

TEST_CASE("errors are reported as one line with a code") {
  const auto dir = scratch("cli_errors");
  write_file(dir / "empty.csv", "");
  auto r = run({"solve", "-i", (dir / "empty.csv").string(), "-o", (dir / "x.csv").string()});
  CHECK(r.code != 0);
  CHECK(r.err.rfind("error: ParseError", 0) == 0);
  CHECK(count_lines(r.err) == 1);

  r = run({"solve", "-o", (dir / "x.csv").string()});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: UsageError", 0) == 0);

  r = run({"solve", "-i", (dir / "missing.csv").string(), "-o", (dir / "x.csv").string()});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: IoError", 0) == 0);

  r = run({"solve", "-i", (dir / "empty.csv").string(), "--method", "pcdeepnet", "-o",
           (dir / "x.csv").string()});
  CHECK(r.code != 0);
  CHECK(r.err.rfind("error: UsageError", 0) == 0);

  write_file(dir / "bad.cfg", "no_such_key = 1\n");
  r = run({"simulate", "-o", (dir / "c").string(), "--config", (dir / "bad.cfg").string()});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: ConfigError", 0) == 0);

  r = run({});
  CHECK(r.code == 2);
}
