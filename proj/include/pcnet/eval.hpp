#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcnet/geodesy.hpp"
#include "pcnet/gnss_model.hpp"
#include "pcnet/pinet.hpp"
#include "pcnet/solver.hpp"

namespace pcnet {

/// Vincenty distance on (lat, lon); height is ignored.
double horizontal_error(const GeodeticPosition& est, const GeodeticPosition& gt);

/// Linear interpolation between order statistics, inclusive (C = 1): rank
/// h = (n - 1) p / 100. Throws EmptyInput on an empty range.
double percentile(std::span<const double> values, double p);

/// Per-epoch errors of one method on one trace. Epochs without an estimate
/// are left out and counted in `missing`.
struct ErrorSeries {
  std::string method;
  std::string trace_id;
  std::vector<std::int64_t> time_ms;
  std::vector<double> horizontal;  // d_j, meters
  std::vector<NedVector> ned;      // estimate minus truth in the truth's NED frame
  std::vector<GeodeticPosition> estimate;
  std::vector<GeodeticPosition> truth;
  std::size_t missing = 0;

  std::size_t size() const { return horizontal.size(); }
};

ErrorSeries error_series(const std::string& method, const Trace& trace,
                         std::span<const std::optional<EcefPosition>> estimates);

/// Mean over traces of (p50 + p95) / 2. Throws EmptyInput when there are no
/// traces or any trace is empty.
double score(std::span<const ErrorSeries> traces);
double score(std::span<const std::vector<double>> traces);

/// Mean absolute error per NED axis, the population std of the absolute
/// errors, and a 95% normal-approximation interval on the mean.
struct NedStats {
  std::array<double, 3> mae{};
  std::array<double, 3> std{};
  std::array<double, 3> ci_lo{};
  std::array<double, 3> ci_hi{};
  std::size_t count = 0;
};

NedStats ned_errors(std::span<const NedVector> errors);
NedStats ned_errors(std::span<const EcefPosition> est, std::span<const GeodeticPosition> gt);

struct TraceReport {
  std::string trace_id;
  double p50 = 0.0;
  double p95 = 0.0;
  double score = 0.0;
  double mean_horizontal = 0.0;
  NedStats ned;
  std::size_t missing = 0;
};

struct EvalReport {
  std::string method;
  std::vector<TraceReport> traces;
  double score = 0.0;
  double mean_horizontal = 0.0;  // over all epochs of all traces
  NedStats ned;                  // pooled over all epochs
};

EvalReport make_report(const std::string& method, std::span<const ErrorSeries> series);

enum class Method { Wls, Rwls, Kf, PcDeepNet };
std::string_view to_string(Method m);
Method parse_method(const std::string& name);

/// Per-epoch position estimates of `method`. PcDeepNet corrects every
/// converged r-WLS fix and passes unconverged ones through unchanged.
std::vector<std::optional<EcefPosition>> estimate_positions(const Trace& trace, Method method,
                                                            const PiDnnModel* model = nullptr,
                                                            const SolverConfig& config = {});

struct Comparison {
  std::vector<EvalReport> reports;  // one per method, in request order
  std::vector<ErrorSeries> series;  // method-major, traces in input order
};

/// Runs each method over every trace. Traces need ground truth
/// (MissingGroundTruth); PcDeepNet needs a model (UsageError).
Comparison compare_methods(std::span<const Trace> traces, std::span<const Method> methods,
                           const PiDnnModel* model = nullptr, const SolverConfig& config = {},
                           int threads = 1);

/// method, trace_id, p50_m, p95_m, score_m, mae_{n,e,d}_m, std_{n,e,d}_m,
/// ci_lo_{n,e,d}_m, ci_hi_{n,e,d}_m, n_epochs, missing.
void write_summary_csv(std::span<const EvalReport> reports, const std::filesystem::path& path);
/// method, score_m, mean_horizontal_m, mae_{n,e,d}_m, std_{n,e,d}_m, n_epochs.
void write_scores_csv(std::span<const EvalReport> reports, const std::filesystem::path& path);
/// trace_id, time_ms, method, d_m, n_m, e_m, d_ned_m.
void write_timeseries_csv(std::span<const ErrorSeries> series, const std::filesystem::path& path);
/// LineStrings of estimated tracks and one truth track per trace, (lon, lat).
void write_geojson(std::span<const ErrorSeries> series, const std::filesystem::path& path);

}  // namespace pcnet
