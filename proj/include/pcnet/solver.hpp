#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pcnet/geodesy.hpp"
#include "pcnet/gnss_model.hpp"

namespace pcnet {

/// M x 4 rows of [g_x, g_y, g_z, 1], with g the unit vector from the
/// satellite toward the linearization point.
struct GeometryMatrix {
  Eigen::Matrix<double, Eigen::Dynamic, 4> rows;

  Eigen::Index size() const { return rows.rows(); }
};

struct PositionFix {
  EcefPosition position;
  double clock_bias = 0.0;  // meters
  double gdop = 0.0;
  std::vector<std::string> sat_ids;
  std::vector<double> residuals;  // post-fit, meters, aligned with sat_ids
  std::vector<double> weights;    // final solver weights, aligned with sat_ids
  int iterations = 0;
  bool converged = false;
};

enum class InitialPosition { EarthCenter, Provided };

struct SolverConfig {
  int max_iterations = 20;
  double step_tolerance = 1e-4;  // meters
  double robust_delta = 1.0;     // meters
  double weight_floor = 1e-3;
  InitialPosition initial_policy = InitialPosition::EarthCenter;
  EcefPosition initial_position;
  double initial_clock_bias = 0.0;
};

/// Shared by the solver and the simulator so predicted and synthesized
/// ranges round identically.
double geometric_range(const EcefPosition& a, const EcefPosition& b);

Eigen::Vector3d los_vector(const EcefPosition& sat, const EcefPosition& x0);

GeometryMatrix geometry_matrix(std::span<const EcefPosition> sats, const EcefPosition& x0);

/// sqrt(trace((G^T G)^-1)); SingularGeometry when G^T G is rank deficient or
/// its condition number exceeds 1e12.
double gdop(const GeometryMatrix& g);

/// Gauss-Newton weighted least squares on corrected pseudoranges. `weights`
/// is empty for uniform weighting. A run that hits max_iterations returns
/// its lowest-cost iterate with `converged == false`.
PositionFix wls_solve(std::span<const CorrectedPseudorange> measurements,
                      const SolverConfig& config = {}, std::span<const double> weights = {});
PositionFix wls_solve(const Epoch& epoch, const SolverConfig& config = {},
                      std::span<const double> weights = {});

/// Iteratively reweighted least squares for the smooth-L1 (Huber) loss:
/// w = 1 inside robust_delta, delta/|r| outside, floored at weight_floor.
PositionFix rwls_solve(std::span<const CorrectedPseudorange> measurements,
                       const SolverConfig& config = {});
PositionFix rwls_solve(const Epoch& epoch, const SolverConfig& config = {});

struct KalmanConfig {
  double sigma0 = 5.0;       // meters; measurement sigma is gdop * sigma0
  double accel_psd = 1.0;    // m^2/s^3, per axis
  double clock_psd = 1.0;    // m^2/s^3, clock drift random walk
  double initial_velocity_sigma = 30.0;  // m/s
  double initial_drift_sigma = 100.0;    // m/s
};

/// Position-domain constant-velocity filter over per-epoch r-WLS fixes.
/// State: position, velocity, clock bias and drift. Epochs whose geometry
/// cannot be solved are predicted only and reported with converged = false;
/// epochs before the first solvable one have no estimate.
std::vector<std::optional<PositionFix>> kf_track(const Trace& trace,
                                                 const SolverConfig& config = {},
                                                 const KalmanConfig& kf = {});

/// r-WLS per epoch, each seeded from the previous converged fix. Unsolvable
/// epochs yield std::nullopt.
std::vector<std::optional<PositionFix>> solve_trace(const Trace& trace, bool robust,
                                                    const SolverConfig& config = {});

}  // namespace pcnet
