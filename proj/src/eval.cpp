#include "pcnet/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "json.hpp"

#include "pcnet/csv.hpp"
#include "pcnet/error.hpp"

namespace pcnet {

double horizontal_error(const GeodeticPosition& est, const GeodeticPosition& gt) {
  return vincenty_distance({est.latitude, est.longitude, 0.0}, {gt.latitude, gt.longitude, 0.0});
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "percentile: no values");
  if (!(p >= 0.0 && p <= 100.0)) throw Error(ErrorCode::UsageError, "percentile: p outside [0, 100]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(v.size() - 1) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

ErrorSeries error_series(const std::string& method, const Trace& trace,
                         std::span<const std::optional<EcefPosition>> estimates) {
  if (!trace.ground_truth) {
    throw Error(ErrorCode::MissingGroundTruth, "evaluate: trace " + trace.trace_id + " has no ground truth");
  }
  const auto& gt = *trace.ground_truth;
  if (estimates.size() != trace.epochs.size() || gt.size() != trace.epochs.size()) {
    throw Error(ErrorCode::AlignmentError, "evaluate: estimates not aligned with trace " + trace.trace_id);
  }
  ErrorSeries s;
  s.method = method;
  s.trace_id = trace.trace_id;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (!estimates[i]) {
      ++s.missing;
      continue;
    }
    const auto est = ecef_to_geodetic(*estimates[i]);
    s.time_ms.push_back(trace.epochs[i].time_ms);
    s.horizontal.push_back(horizontal_error(est, gt[i].position));
    s.ned.push_back(ecef_to_ned(*estimates[i], gt[i].position));
    s.estimate.push_back(est);
    s.truth.push_back(gt[i].position);
  }
  return s;
}

namespace {

double trace_score(std::span<const double> d) {
  return (percentile(d, 50.0) + percentile(d, 95.0)) / 2.0;
}

}  // namespace

double score(std::span<const std::vector<double>> traces) {
  if (traces.empty()) throw Error(ErrorCode::EmptyInput, "score: no traces");
  double total = 0.0;
  for (const auto& t : traces) total += trace_score(t);
  return total / static_cast<double>(traces.size());
}

double score(std::span<const ErrorSeries> traces) {
  std::vector<std::vector<double>> d;
  for (const auto& t : traces) d.push_back(t.horizontal);
  return score(d);
}

NedStats ned_errors(std::span<const NedVector> errors) {
  if (errors.empty()) throw Error(ErrorCode::EmptyInput, "ned_errors: no epochs");
  NedStats s;
  s.count = errors.size();
  const double k = static_cast<double>(errors.size());
  for (int axis = 0; axis < 3; ++axis) {
    double sum = 0.0;
    for (const auto& e : errors) sum += std::abs(e.vec()[axis]);
    const double mean = sum / k;
    double ss = 0.0;
    for (const auto& e : errors) {
      const double dev = std::abs(e.vec()[axis]) - mean;
      ss += dev * dev;
    }
    const double sd = std::sqrt(ss / k);
    const double half = 1.96 * sd / std::sqrt(k);
    s.mae[axis] = mean;
    s.std[axis] = sd;
    s.ci_lo[axis] = mean - half;
    s.ci_hi[axis] = mean + half;
  }
  return s;
}

NedStats ned_errors(std::span<const EcefPosition> est, std::span<const GeodeticPosition> gt) {
  if (est.size() != gt.size()) throw Error(ErrorCode::AlignmentError, "ned_errors: length mismatch");
  std::vector<NedVector> e;
  e.reserve(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) e.push_back(ecef_to_ned(est[i], gt[i]));
  return ned_errors(e);
}

EvalReport make_report(const std::string& method, std::span<const ErrorSeries> series) {
  EvalReport r;
  r.method = method;
  std::vector<NedVector> pooled;
  double sum = 0.0;
  for (const auto& s : series) {
    if (s.size() == 0) {
      throw Error(ErrorCode::EmptyInput, "evaluate: " + method + " has no estimates on " + s.trace_id);
    }
    TraceReport t;
    t.trace_id = s.trace_id;
    t.p50 = percentile(s.horizontal, 50.0);
    t.p95 = percentile(s.horizontal, 95.0);
    t.score = (t.p50 + t.p95) / 2.0;
    double ts = 0.0;
    for (const double d : s.horizontal) ts += d;
    t.mean_horizontal = ts / static_cast<double>(s.size());
    t.ned = ned_errors(s.ned);
    t.missing = s.missing;
    r.traces.push_back(t);
    sum += ts;
    pooled.insert(pooled.end(), s.ned.begin(), s.ned.end());
  }
  r.score = score(series);
  r.mean_horizontal = sum / static_cast<double>(pooled.size());
  r.ned = ned_errors(pooled);
  return r;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Wls:
      return "wls";
    case Method::Rwls:
      return "rwls";
    case Method::Kf:
      return "kf";
    case Method::PcDeepNet:
      return "pcdeepnet";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (const auto m : {Method::Wls, Method::Rwls, Method::Kf, Method::PcDeepNet}) {
    if (name == to_string(m)) return m;
  }
  throw Error(ErrorCode::UsageError, "unknown method '" + name + "' (wls, rwls, kf, pcdeepnet)");
}

std::vector<std::optional<EcefPosition>> estimate_positions(const Trace& trace, Method method,
                                                            const PiDnnModel* model,
                                                            const SolverConfig& config) {
  if (method == Method::PcDeepNet && model == nullptr) {
    throw Error(ErrorCode::UsageError, "pcdeepnet requires a model");
  }
  const auto fixes = method == Method::Kf ? kf_track(trace, config)
                                          : solve_trace(trace, method != Method::Wls, config);
  std::vector<std::optional<EcefPosition>> out(fixes.size());
  for (std::size_t i = 0; i < fixes.size(); ++i) {
    if (!fixes[i]) continue;
    out[i] = fixes[i]->position;
    if (method == Method::PcDeepNet && fixes[i]->converged) {
      out[i] = correct_position(*fixes[i], predict_correction(*model, trace.epochs[i], *fixes[i]));
    }
  }
  return out;
}

Comparison compare_methods(std::span<const Trace> traces, std::span<const Method> methods,
                           const PiDnnModel* model, const SolverConfig& config, int threads) {
  if (traces.empty()) throw Error(ErrorCode::EmptyInput, "evaluate: no traces");
  for (const auto m : methods) {
    if (m == Method::PcDeepNet && model == nullptr) {
      throw Error(ErrorCode::UsageError, "pcdeepnet requires a model");
    }
  }
  for (const auto& t : traces) {
    if (!t.ground_truth) {
      throw Error(ErrorCode::MissingGroundTruth, "evaluate: trace " + t.trace_id + " has no ground truth");
    }
  }
  const std::size_t n = traces.size() * methods.size();
  std::vector<ErrorSeries> series(n);
  std::vector<std::exception_ptr> failures(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t job; (job = next++) < n;) {
      const auto m = methods[job / traces.size()];
      const auto& trace = traces[job % traces.size()];
      try {
        series[job] = error_series(std::string(to_string(m)), trace,
                                   estimate_positions(trace, m, model, config));
      } catch (...) {
        failures[job] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), n);
    for (std::size_t t = 1; t < k; ++t) pool.emplace_back(work);
    work();
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  Comparison out;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const std::span<const ErrorSeries> block(series.data() + mi * traces.size(), traces.size());
    out.reports.push_back(make_report(std::string(to_string(methods[mi])), block));
  }
  out.series = std::move(series);
  return out;
}

void write_summary_csv(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << "method,trace_id,p50_m,p95_m,score_m,mae_n_m,mae_e_m,mae_d_m,std_n_m,std_e_m,std_d_m,"
         "ci_lo_n_m,ci_hi_n_m,ci_lo_e_m,ci_hi_e_m,ci_lo_d_m,ci_hi_d_m,n_epochs,missing\n";
  for (const auto& r : reports) {
    for (const auto& t : r.traces) {
      out << r.method << ',' << t.trace_id << ',' << csv::format(t.p50) << ','
          << csv::format(t.p95) << ',' << csv::format(t.score);
      for (const double v : t.ned.mae) out << ',' << csv::format(v);
      for (const double v : t.ned.std) out << ',' << csv::format(v);
      for (int a = 0; a < 3; ++a) {
        out << ',' << csv::format(t.ned.ci_lo[a]) << ',' << csv::format(t.ned.ci_hi[a]);
      }
      out << ',' << t.ned.count << ',' << t.missing << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

void write_scores_csv(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << "method,score_m,mean_horizontal_m,mae_n_m,mae_e_m,mae_d_m,std_n_m,std_e_m,std_d_m,"
         "n_epochs\n";
  for (const auto& r : reports) {
    out << r.method << ',' << csv::format(r.score) << ',' << csv::format(r.mean_horizontal);
    for (const double v : r.ned.mae) out << ',' << csv::format(v);
    for (const double v : r.ned.std) out << ',' << csv::format(v);
    out << ',' << r.ned.count << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

void write_timeseries_csv(std::span<const ErrorSeries> series, const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << "trace_id,time_ms,method,d_m,n_m,e_m,d_ned_m\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      out << s.trace_id << ',' << s.time_ms[i] << ',' << s.method << ','
          << csv::format(s.horizontal[i]) << ',' << csv::format(s.ned[i].north) << ','
          << csv::format(s.ned[i].east) << ',' << csv::format(s.ned[i].down) << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

void write_geojson(std::span<const ErrorSeries> series, const std::filesystem::path& path) {
  using nlohmann::json;
  auto line = [](const std::vector<GeodeticPosition>& pts) {
    json coords = json::array();
    for (const auto& p : pts) coords.push_back({p.longitude, p.latitude});
    return json{{"type", "LineString"}, {"coordinates", coords}};
  };
  json features = json::array();
  std::vector<std::string> seen;
  for (const auto& s : series) {
    features.push_back({{"type", "Feature"},
                        {"properties", {{"trace_id", s.trace_id}, {"method", s.method}}},
                        {"geometry", line(s.estimate)}});
    if (std::find(seen.begin(), seen.end(), s.trace_id) == seen.end()) {
      seen.push_back(s.trace_id);
      features.push_back({{"type", "Feature"},
                          {"properties", {{"trace_id", s.trace_id}, {"method", "truth"}}},
                          {"geometry", line(s.truth)}});
    }
  }
  auto out = csv::open_output(path);
  out << json{{"type", "FeatureCollection"}, {"features", features}}.dump(1) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace pcnet
