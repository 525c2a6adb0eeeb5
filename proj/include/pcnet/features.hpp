#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pcnet/geodesy.hpp"
#include "pcnet/gnss_model.hpp"
#include "pcnet/solver.hpp"

namespace pcnet {

inline constexpr int kFeatureCount = 7;

/// Column order of a feature matrix.
enum FeatureColumn : int {
  kPrResidual = 0,
  kLosX = 1,
  kLosY = 2,
  kLosZ = 3,
  kGdop = 4,
  kElevation = 5,
  kCn0 = 6,
};

std::string_view feature_name(int column);

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, kFeatureCount, Eigen::RowMajor>;

/// Truth minus initial fix, ECEF meters.
struct CorrectionLabel {
  double dx = 0.0;
  double dy = 0.0;
  double dz = 0.0;

  Eigen::Vector3d vec() const { return {dx, dy, dz}; }
  bool operator==(const CorrectionLabel&) const = default;
};

struct FeatureSet {
  std::string trace_id;
  std::int64_t time_ms = 0;
  std::vector<std::string> sat_ids;  // row i belongs to sat_ids[i]
  FeatureMatrix rows;
  std::optional<CorrectionLabel> label;
  EcefPosition fix_position;  // the initial fix the rows were computed at

  Eigen::Index size() const { return rows.rows(); }
};

/// One row per usable measurement, in epoch order: residual against the
/// fix's position and clock, LOS at the fix, the fix's GDOP, elevation
/// (dataset value, else computed at the fix) and C/N0.
FeatureSet extract_features(const Epoch& epoch, const PositionFix& fix);

inline constexpr double kDefaultLabelBound = 1000.0;

/// ecef(gt) - fix.position. Throws SanityBound when any component exceeds
/// `bound` in magnitude.
CorrectionLabel make_label(const PositionFix& fix, const GeodeticPosition& gt,
                           double bound = kDefaultLabelBound);

struct ScalerStats {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> std{};

  /// Identity transform.
  static ScalerStats identity();
  bool operator==(const ScalerStats&) const = default;
};

inline constexpr double kStdFloor = 1e-12;

/// Per-column mean and population standard deviation, std floored at 1e-12.
ScalerStats fit_scaler(const FeatureMatrix& rows);
FeatureMatrix apply_scaler(const ScalerStats& stats, const FeatureMatrix& rows);

/// Tie-corrected Kendall tau-b, O(n log n). DegenerateInput when either
/// column is constant.
double kendall_tau(std::span<const double> a, std::span<const double> b);

/// Labeled feature sets for every epoch of a trace that has a converged r-WLS
/// fix and a label within bound.
struct ExtractionStats {
  std::size_t epochs = 0;
  std::size_t unsolved = 0;
  std::size_t out_of_bound = 0;
};
std::vector<FeatureSet> build_dataset(const Trace& trace, const SolverConfig& config = {},
                                      double label_bound = kDefaultLabelBound,
                                      ExtractionStats* stats = nullptr);
/// Same, from precomputed fixes aligned with the trace's epochs.
std::vector<FeatureSet> build_dataset(const Trace& trace,
                                      std::span<const std::optional<PositionFix>> fixes,
                                      double label_bound = kDefaultLabelBound,
                                      ExtractionStats* stats = nullptr);

/// Feature dump: trace_id, time_ms, sat_id, the seven feature columns, then
/// label_dx_m, label_dy_m, label_dz_m (repeated on every row of an epoch,
/// empty when unlabeled), then the initial fix as fix_x_m, fix_y_m, fix_z_m.
void write_features_csv(std::span<const FeatureSet> sets, const std::filesystem::path& path);
std::vector<FeatureSet> read_features_csv(const std::filesystem::path& path);

}  // namespace pcnet
