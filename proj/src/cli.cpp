#include "pcnet/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <map>
#include <ostream>
#include <thread>

#include "CLI11.hpp"

#include "pcnet/config.hpp"
#include "pcnet/csv.hpp"
#include "pcnet/error.hpp"
#include "pcnet/eval.hpp"
#include "pcnet/features.hpp"
#include "pcnet/pinet.hpp"
#include "pcnet/simulate.hpp"

namespace pcnet {

void write_fixes_csv(std::span<const FixRecord> fixes, const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << "trace_id,time_ms,x_m,y_m,z_m,clk_m,gdop,converged,n_sats\n";
  for (const auto& r : fixes) {
    out << r.trace_id << ',' << r.time_ms << ',';
    if (r.fix) {
      const auto& f = *r.fix;
      out << csv::format(f.position.x) << ',' << csv::format(f.position.y) << ','
          << csv::format(f.position.z) << ',' << csv::format(f.clock_bias) << ','
          << csv::format(f.gdop) << ',' << (f.converged ? 1 : 0) << ',' << f.sat_ids.size();
    } else {
      out << ",,,,,0,0";
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<FixRecord> read_fixes_csv(const std::filesystem::path& path) {
  csv::Reader r(path);
  r.require({"trace_id", "time_ms", "x_m", "y_m", "z_m", "clk_m", "gdop", "converged", "n_sats"});
  std::vector<FixRecord> out;
  while (r.next()) {
    FixRecord rec;
    rec.trace_id = std::string(r.cell("trace_id"));
    rec.time_ms = r.integer("time_ms");
    if (const auto x = r.optional_number("x_m")) {
      PositionFix f;
      f.position = {*x, r.number("y_m"), r.number("z_m")};
      f.clock_bias = r.number("clk_m");
      f.gdop = r.number("gdop");
      f.converged = r.integer("converged") != 0;
      rec.fix = std::move(f);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

int thread_budget() {
  int n = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("PCNET_THREADS"); env != nullptr && *env != '\0') {
    int cap = 0;
    const std::string_view s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), cap);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || cap < 1) {
      throw Error(ErrorCode::ConfigError, "PCNET_THREADS must be a positive integer");
    }
    n = std::min(n, cap);
  }
  return n;
}

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string input;
  std::string output;
  std::string format = "canonical_csv";
  std::vector<std::string> methods;
  std::string model;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string ground_truth;
  std::string fixes;
  std::vector<std::string> fix_sets;
  std::string splits;
  std::string history;
  std::optional<int> traces;
};

void require_exists(const std::string& path, const std::string& what) {
  if (path.empty()) throw Error(ErrorCode::UsageError, what + " is required");
  if (!fs::exists(path)) throw Error(ErrorCode::IoError, what + " not found: " + path);
}

KeyValueConfig load_config(const Options& o) {
  if (o.config.empty()) return {};
  require_exists(o.config, "--config");
  return KeyValueConfig::load(o.config);
}

SolverConfig solver_config(const KeyValueConfig& kv) {
  SolverConfig c;
  c.max_iterations = static_cast<int>(kv.get_int("max_iterations", c.max_iterations));
  c.step_tolerance = kv.get_double("step_tolerance", c.step_tolerance);
  c.robust_delta = kv.get_double("robust_delta", c.robust_delta);
  c.weight_floor = kv.get_double("weight_floor", c.weight_floor);
  if (c.max_iterations < 1 || !(c.step_tolerance > 0) || !(c.robust_delta > 0) ||
      !(c.weight_floor > 0)) {
    throw Error(ErrorCode::ConfigError, "solver settings must be positive");
  }
  return c;
}

KalmanConfig kalman_config(const KeyValueConfig& kv) {
  KalmanConfig k;
  k.sigma0 = kv.get_double("kf_sigma0", k.sigma0);
  k.accel_psd = kv.get_double("kf_accel_psd", k.accel_psd);
  k.clock_psd = kv.get_double("kf_clock_psd", k.clock_psd);
  return k;
}

std::vector<Trace> load_inputs(const Options& o) {
  require_exists(o.input, "--input");
  const auto format = parse_trace_format(o.format);
  std::vector<Trace> traces;
  if (fs::is_directory(o.input)) {
    if (format != TraceFormat::CanonicalCsv) {
      throw Error(ErrorCode::UsageError, "directory input requires --format canonical_csv");
    }
    traces = load_corpus(o.input);
  } else {
    LoadOptions lo;
    if (!o.ground_truth.empty()) {
      require_exists(o.ground_truth, "--ground-truth");
      lo.ground_truth = fs::path(o.ground_truth);
    }
    traces = load_traces(o.input, format, lo);
  }
  std::size_t epochs = 0;
  for (const auto& t : traces) epochs += t.epochs.size();
  if (epochs == 0) throw Error(ErrorCode::ParseError, o.input + ": no epochs");
  return traces;
}

void require_output(const Options& o) {
  if (o.output.empty()) throw Error(ErrorCode::UsageError, "--output is required");
}

std::vector<FixRecord> to_records(const Trace& t, const std::vector<std::optional<PositionFix>>& fixes) {
  std::vector<FixRecord> out;
  for (std::size_t i = 0; i < fixes.size(); ++i) {
    out.push_back({t.trace_id, t.epochs[i].time_ms, fixes[i]});
  }
  return out;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  require_output(o);
  auto kv = load_config(o);
  if (o.seed) kv.set("seed", std::to_string(*o.seed));
  if (o.traces) kv.set("traces", std::to_string(*o.traces));
  const auto seed = kv.get_uint("seed", 1);
  const auto count = kv.get_int("traces", 20);
  SimConfig base;
  apply_config(kv, base);
  kv.reject_unused();
  validate(base);
  if (count < 1) throw Error(ErrorCode::ConfigError, "traces must be >= 1");
  const auto split = gen_corpus(corpus_configs(base, static_cast<int>(count), seed), o.output, seed);
  std::map<Split, int> n;
  for (const auto& [id, s] : split) ++n[s];
  out << "simulated " << split.size() << " traces into " << o.output << " (train "
      << n[Split::Train] << ", val " << n[Split::Validation] << ", test " << n[Split::Test]
      << ")\n";
  return 0;
}

int cmd_solve(const Options& o, std::ostream& out) {
  require_output(o);
  const auto kv = load_config(o);
  const auto cfg = solver_config(kv);
  const auto kf = kalman_config(kv);
  kv.reject_unused();
  const auto method = parse_method(o.methods.empty() ? "rwls" : o.methods.front());
  if (method == Method::PcDeepNet) {
    throw Error(ErrorCode::UsageError, "solve: use `predict` for pcdeepnet");
  }
  const auto traces = load_inputs(o);
  std::vector<FixRecord> records;
  std::size_t solved = 0;
  for (const auto& t : traces) {
    const auto fixes = method == Method::Kf ? kf_track(t, cfg, kf)
                                            : solve_trace(t, method == Method::Rwls, cfg);
    for (const auto& f : fixes) solved += f && f->converged;
    const auto r = to_records(t, fixes);
    records.insert(records.end(), r.begin(), r.end());
  }
  write_fixes_csv(records, o.output);
  out << "solved " << solved << "/" << records.size() << " epochs with " << to_string(method)
      << '\n';
  return 0;
}

int cmd_extract(const Options& o, std::ostream& out) {
  require_output(o);
  const auto kv = load_config(o);
  const auto cfg = solver_config(kv);
  const double bound = kv.get_double("label_bound", kDefaultLabelBound);
  kv.reject_unused();
  const auto traces = load_inputs(o);
  std::map<std::string, std::vector<std::optional<PositionFix>>> given;
  if (!o.fixes.empty()) {
    require_exists(o.fixes, "--fixes");
    for (auto& r : read_fixes_csv(o.fixes)) given[r.trace_id].push_back(std::move(r.fix));
  }
  std::vector<FeatureSet> sets;
  ExtractionStats stats;
  for (const auto& t : traces) {
    std::vector<FeatureSet> ds;
    if (o.fixes.empty()) {
      ds = build_dataset(t, cfg, bound, &stats);
    } else {
      const auto it = given.find(t.trace_id);
      if (it == given.end()) {
        throw Error(ErrorCode::AlignmentError, o.fixes + ": no fixes for trace " + t.trace_id);
      }
      ds = build_dataset(t, it->second, bound, &stats);
    }
    sets.insert(sets.end(), std::make_move_iterator(ds.begin()), std::make_move_iterator(ds.end()));
  }
  write_features_csv(sets, o.output);
  out << "extracted " << sets.size() << " feature sets from " << stats.epochs << " epochs ("
      << stats.unsolved << " unsolved, " << stats.out_of_bound << " out of bound)\n";
  return 0;
}

std::vector<FeatureSet> load_features(const std::string& input) {
  require_exists(input, "--input");
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      const auto name = e.path().filename().string();
      if (e.is_regular_file() && name.ends_with(".features.csv")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorCode::EmptyDataset, input + ": no *.features.csv files");
  } else {
    files.emplace_back(input);
  }
  std::vector<FeatureSet> sets;
  for (const auto& f : files) {
    auto part = read_features_csv(f);
    sets.insert(sets.end(), std::make_move_iterator(part.begin()),
                std::make_move_iterator(part.end()));
  }
  return sets;
}

int cmd_train(const Options& o, std::ostream& out) {
  require_output(o);
  auto kv = load_config(o);
  if (o.seed) kv.set("seed", std::to_string(*o.seed));
  TrainConfig tc;
  tc.seed = kv.get_uint("seed", 1);
  tc.max_epochs = static_cast<int>(kv.get_int("max_epochs", tc.max_epochs));
  tc.batch_size = static_cast<int>(kv.get_int("batch_size", tc.batch_size));
  tc.learning_rate = kv.get_double("learning_rate", tc.learning_rate);
  tc.beta1 = kv.get_double("beta1", tc.beta1);
  tc.beta2 = kv.get_double("beta2", tc.beta2);
  tc.epsilon = kv.get_double("epsilon", tc.epsilon);
  tc.train_fraction = kv.get_double("train_fraction", tc.train_fraction);
  tc.val_fraction = kv.get_double("val_fraction", tc.val_fraction);
  tc.patience = static_cast<int>(kv.get_int("patience", tc.patience));
  Architecture arch;
  arch.output_dim = static_cast<int>(kv.get_int("output_dim", arch.output_dim));
  arch.dropout_rate = kv.get_double("dropout_rate", arch.dropout_rate);
  kv.reject_unused();
  if (arch.output_dim != 1 && arch.output_dim != 3) {
    throw Error(ErrorCode::ConfigError, "output_dim must be 1 or 3");
  }
  tc.threads = thread_budget();

  const auto sets = load_features(o.input);
  TrainResult result;
  if (!o.splits.empty()) {
    require_exists(o.splits, "--splits");
    const auto split = read_splits(o.splits);
    const std::map<std::string, Split> lookup(split.begin(), split.end());
    std::vector<FeatureSet> train_sets, val_sets;
    for (const auto& s : sets) {
      const auto it = lookup.find(s.trace_id);
      if (it == lookup.end()) continue;
      if (it->second == Split::Train) train_sets.push_back(s);
      if (it->second == Split::Validation) val_sets.push_back(s);
    }
    result = train_on(train_sets, val_sets, tc, arch);
    result.split = split;
  } else {
    result = train(sets, tc, arch);
  }
  save_model(result.model, o.output);
  const fs::path history =
      o.history.empty() ? fs::path(o.output).replace_extension(".history.csv") : fs::path(o.history);
  write_history_csv(result.history, history);
  const auto& best = result.history[static_cast<std::size_t>(result.best_epoch - 1)];
  out << "trained " << param_count(result.model) << " parameters for " << result.history.size()
      << " epochs; best epoch " << result.best_epoch << " (train mse " << csv::format(best.train_mse)
      << ", val mse " << csv::format(best.val_mse) << ")\n";
  return 0;
}

int cmd_predict(const Options& o, std::ostream& out) {
  require_output(o);
  require_exists(o.model, "--model");
  const auto kv = load_config(o);
  const auto cfg = solver_config(kv);
  kv.reject_unused();
  const auto model = load_model(o.model);
  const auto traces = load_inputs(o);
  std::vector<FixRecord> records;
  std::size_t corrected = 0;
  for (const auto& t : traces) {
    auto fixes = solve_trace(t, true, cfg);
    for (std::size_t i = 0; i < fixes.size(); ++i) {
      auto& f = fixes[i];
      if (!f || !f->converged) continue;
      f->position = correct_position(*f, predict_correction(model, t.epochs[i], *f));
      ++corrected;
    }
    const auto r = to_records(t, fixes);
    records.insert(records.end(), r.begin(), r.end());
  }
  write_fixes_csv(records, o.output);
  out << "corrected " << corrected << "/" << records.size() << " epochs\n";
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  require_output(o);
  const auto kv = load_config(o);
  const auto cfg = solver_config(kv);
  kv.reject_unused();
  std::vector<Method> methods;
  for (const auto& m : o.methods) methods.push_back(parse_method(m));
  if (methods.empty()) {
    methods = {Method::Wls, Method::Rwls, Method::Kf};
    if (!o.model.empty()) methods.push_back(Method::PcDeepNet);
  }
  std::optional<PiDnnModel> model;
  if (std::find(methods.begin(), methods.end(), Method::PcDeepNet) != methods.end()) {
    require_exists(o.model, "--model");
    model = load_model(o.model);
  }
  std::vector<std::pair<std::string, fs::path>> fix_sets;
  for (const auto& spec : o.fix_sets) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::UsageError, "--fixes expects label=path, got '" + spec + "'");
    }
    fix_sets.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
    require_exists(fix_sets.back().second.string(), "--fixes " + fix_sets.back().first);
  }
  const auto traces = load_inputs(o);

  auto cmp = compare_methods(traces, methods, model ? &*model : nullptr, cfg, thread_budget());
  for (const auto& [label, path] : fix_sets) {
    std::map<std::pair<std::string, std::int64_t>, EcefPosition> lookup;
    for (const auto& r : read_fixes_csv(path)) {
      if (r.fix) lookup[{r.trace_id, r.time_ms}] = r.fix->position;
    }
    std::vector<ErrorSeries> series;
    for (const auto& t : traces) {
      std::vector<std::optional<EcefPosition>> est(t.epochs.size());
      for (std::size_t i = 0; i < est.size(); ++i) {
        if (const auto it = lookup.find({t.trace_id, t.epochs[i].time_ms}); it != lookup.end()) {
          est[i] = it->second;
        }
      }
      series.push_back(error_series(label, t, est));
    }
    cmp.reports.push_back(make_report(label, series));
    cmp.series.insert(cmp.series.end(), series.begin(), series.end());
  }

  const fs::path dir(o.output);
  write_summary_csv(cmp.reports, dir / "summary.csv");
  write_scores_csv(cmp.reports, dir / "scores.csv");
  write_timeseries_csv(cmp.series, dir / "timeseries.csv");
  write_geojson(cmp.series, dir / "tracks.geojson");
  for (const auto& r : cmp.reports) {
    out << r.method << ": score " << csv::format(r.score) << " m, mean horizontal "
        << csv::format(r.mean_horizontal) << " m\n";
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"GNSS positioning toolkit: classical fixes, set-network corrections, evaluation"};
  app.require_subcommand(1);
  Options o;

  auto input = [&](CLI::App* sub, const std::string& what) {
    sub->add_option("-i,--input", o.input, what)->required();
  };
  auto format = [&](CLI::App* sub) {
    sub->add_option("--format", o.format, "trace layout")
        ->check(CLI::IsMember({"canonical_csv", "gsdc_derived"}));
    sub->add_option("--ground-truth", o.ground_truth, "ground-truth CSV for a single input file");
  };
  auto common = [&](CLI::App* sub) {
    sub->add_option("-o,--output", o.output, "output path")->required();
    sub->add_option("--config", o.config, "key=value config file");
  };

  auto* sim = app.add_subcommand("simulate", "generate a synthetic corpus");
  common(sim);
  sim->add_option("--seed", o.seed, "master seed");
  sim->add_option("--traces", o.traces, "number of traces");

  auto* solve = app.add_subcommand("solve", "per-epoch position fixes");
  input(solve, "epochs CSV or corpus directory");
  format(solve);
  common(solve);
  solve->add_option("--method", o.methods, "wls, rwls or kf")->expected(1);

  auto* extract = app.add_subcommand("extract", "feature sets and labels");
  input(extract, "epochs CSV or corpus directory");
  format(extract);
  common(extract);
  extract->add_option("--fixes", o.fixes, "fixes CSV to linearize at (default: r-WLS)");

  auto* trn = app.add_subcommand("train", "train the correction network");
  input(trn, "features CSV or directory of *.features.csv");
  common(trn);
  trn->add_option("--seed", o.seed, "training seed");
  trn->add_option("--splits", o.splits, "splits.csv naming train/val traces");
  trn->add_option("--history", o.history, "history CSV (default: model path with a .history.csv extension)");

  auto* pred = app.add_subcommand("predict", "corrected fixes from a trained model");
  input(pred, "epochs CSV or corpus directory");
  format(pred);
  common(pred);
  pred->add_option("--model", o.model, "model file")->required();

  auto* ev = app.add_subcommand("evaluate", "error reports against ground truth");
  input(ev, "epochs CSV or corpus directory with ground truth");
  format(ev);
  common(ev);
  ev->add_option("--method", o.methods, "methods to run (wls, rwls, kf, pcdeepnet)")
      ->delimiter(',');
  ev->add_option("--model", o.model, "model file for pcdeepnet");
  ev->add_option("--fixes", o.fix_sets, "label=fixes.csv to score as an extra method");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: UsageError: " << e.what() << '\n';
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o, out);
    if (solve->parsed()) return cmd_solve(o, out);
    if (extract->parsed()) return cmd_extract(o, out);
    if (trn->parsed()) return cmd_train(o, out);
    if (pred->parsed()) return cmd_predict(o, out);
    return cmd_evaluate(o, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: IoError: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace pcnet
