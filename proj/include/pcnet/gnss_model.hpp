#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pcnet/geodesy.hpp"

namespace pcnet {

/// One pseudorange observation. Corrections are stored the way the
/// Android derived files carry them: `sat_clock_bias` is added to the raw
/// range, the atmospheric delays are positive path delays to subtract.
struct SatelliteMeasurement {
  std::string sat_id;  // constellation letter + PRN, e.g. "G05"
  EcefPosition sat_pos;
  double raw_pseudorange = 0.0;
  double sat_clock_bias = 0.0;
  double iono_delay = 0.0;
  double tropo_delay = 0.0;
  double cn0 = 0.0;
  std::optional<double> elevation;

  bool operator==(const SatelliteMeasurement&) const = default;
};

struct Epoch {
  std::int64_t time_ms = 0;  // GPS milliseconds
  std::vector<SatelliteMeasurement> measurements;

  bool operator==(const Epoch&) const = default;
};

struct GroundTruthSample {
  std::int64_t time_ms = 0;
  GeodeticPosition position;

  bool operator==(const GroundTruthSample&) const = default;
};

/// When present, `ground_truth` is aligned index-for-index with `epochs`.
struct Trace {
  std::string trace_id;
  std::vector<Epoch> epochs;
  std::optional<std::vector<GroundTruthSample>> ground_truth;

  bool operator==(const Trace&) const = default;
};

struct CorrectedPseudorange {
  std::string sat_id;
  double value = 0.0;
  EcefPosition sat_pos;
  double cn0 = 0.0;
  std::optional<double> elevation;
};

inline constexpr double kMinPseudorange = 1e7;
inline constexpr double kMaxPseudorange = 5e7;

/// raw + sat_clock_bias - iono - tropo. Throws InvalidMeasurement when the
/// result falls outside (1e7, 5e7) m.
CorrectedPseudorange correct_pseudorange(const SatelliteMeasurement& m);

/// Corrects every measurement of an epoch, silently skipping the ones
/// correct_pseudorange rejects. Order is preserved.
std::vector<CorrectedPseudorange> usable_measurements(const Epoch& epoch);

/// Elevation and azimuth (degrees) of `sat_pos` seen from `rx`. Azimuth is
/// clockwise from north in [0, 360).
std::pair<double, double> elevation_azimuth(const EcefPosition& sat_pos,
                                            const GeodeticPosition& rx);

enum class TraceFormat { CanonicalCsv, GsdcDerived };

TraceFormat parse_trace_format(const std::string& name);

struct LoadOptions {
  std::optional<std::filesystem::path> ground_truth;
  bool gps_only = true;
};

struct IngestStats {
  std::size_t rows = 0;
  std::size_t dropped_zero_cn0 = 0;
  std::size_t dropped_missing_position = 0;
  std::size_t dropped_constellation = 0;
  std::size_t dropped_signal = 0;
};

/// Loads every trace found in an epochs file. Epochs are grouped by
/// timestamp in ascending order and measurements sorted by sat_id.
std::vector<Trace> load_traces(const std::filesystem::path& epochs, TraceFormat format,
                               const LoadOptions& options = {}, IngestStats* stats = nullptr);

/// As load_traces, but the file must hold exactly one trace. A header-only
/// canonical file yields an empty trace named after the file stem.
Trace load_trace(const std::filesystem::path& epochs, TraceFormat format,
                 const LoadOptions& options = {}, IngestStats* stats = nullptr);

/// Writes the canonical epochs CSV and, if the trace carries ground truth and
/// `ground_truth` is given, the canonical ground-truth CSV.
void write_trace(const Trace& trace, const std::filesystem::path& epochs,
                 const std::optional<std::filesystem::path>& ground_truth = std::nullopt);

/// Conventional corpus file names: `<id>.epochs.csv` and `<id>.gt.csv`.
std::filesystem::path epochs_file(const std::filesystem::path& dir, const std::string& trace_id);
std::filesystem::path ground_truth_file(const std::filesystem::path& dir,
                                        const std::string& trace_id);

/// Loads every `*.epochs.csv` in a corpus directory (with its `.gt.csv` when
/// present), sorted by trace id.
std::vector<Trace> load_corpus(const std::filesystem::path& dir, bool gps_only = true);

enum class Split { Train, Validation, Test };

std::string_view to_string(Split split);

/// Assigns whole traces to train/validation/test. The ids are sorted, then
/// shuffled with `seed`; the first round(train*n) go to training, the next
/// round(val*n) to validation, the rest to test.
std::vector<std::pair<std::string, Split>> split_by_trace(std::vector<std::string> trace_ids,
                                                          std::uint64_t seed,
                                                          double train_fraction = 0.75,
                                                          double val_fraction = 0.10);

}  // namespace pcnet
