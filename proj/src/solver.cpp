#include "pcnet/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "pcnet/error.hpp"

namespace pcnet {

namespace {

constexpr double kMaxCondition = 1e12;

struct State {
  Eigen::Vector3d position;
  double clock = 0.0;
};

std::vector<EcefPosition> satellite_positions(std::span<const CorrectedPseudorange> ms) {
  std::vector<EcefPosition> out;
  out.reserve(ms.size());
  for (const auto& m : ms) out.push_back(m.sat_pos);
  return out;
}

Eigen::VectorXd residuals_at(std::span<const CorrectedPseudorange> ms, const State& s) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(ms.size()));
  const auto x = EcefPosition::from(s.position);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    r[static_cast<Eigen::Index>(i)] = ms[i].value - (geometric_range(x, ms[i].sat_pos) + s.clock);
  }
  return r;
}

/// Solves (G^T W G) d = G^T W r; Cholesky first, pivoted QR when the normal
/// matrix is badly conditioned.
Eigen::Vector4d solve_normal(const GeometryMatrix& g, const Eigen::VectorXd& w,
                             const Eigen::VectorXd& r) {
  const auto& G = g.rows;
  const Eigen::Matrix4d n = G.transpose() * w.asDiagonal() * G;
  const Eigen::Vector4d rhs = G.transpose() * (w.array() * r.array()).matrix();
  Eigen::LLT<Eigen::Matrix4d> llt(n);
  if (llt.info() == Eigen::Success && llt.rcond() > 1.0 / kMaxCondition) {
    return llt.solve(rhs);
  }
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd a = sw.asDiagonal() * G;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 4) {
    throw Error(ErrorCode::SingularGeometry, "wls: normal equations are rank deficient");
  }
  return qr.solve((sw.array() * r.array()).matrix());
}

PositionFix make_fix(std::span<const CorrectedPseudorange> ms, const State& s,
                     const Eigen::VectorXd& w, int iterations, bool converged) {
  PositionFix fix;
  fix.position = EcefPosition::from(s.position);
  fix.clock_bias = s.clock;
  const auto sats = satellite_positions(ms);
  fix.gdop = gdop(geometry_matrix(sats, fix.position));
  const Eigen::VectorXd r = residuals_at(ms, s);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    fix.sat_ids.push_back(ms[i].sat_id);
    fix.residuals.push_back(r[static_cast<Eigen::Index>(i)]);
    fix.weights.push_back(w[static_cast<Eigen::Index>(i)]);
  }
  fix.iterations = iterations;
  fix.converged = converged;
  return fix;
}

}  // namespace

double geometric_range(const EcefPosition& a, const EcefPosition& b) {
  return (a.vec() - b.vec()).norm();
}

Eigen::Vector3d los_vector(const EcefPosition& sat, const EcefPosition& x0) {
  const Eigen::Vector3d d = x0.vec() - sat.vec();
  const double n = d.norm();
  if (!(n > 0.0)) {
    throw Error(ErrorCode::DegenerateGeometry, "los_vector: satellite coincides with receiver");
  }
  return d / n;
}

GeometryMatrix geometry_matrix(std::span<const EcefPosition> sats, const EcefPosition& x0) {
  if (sats.empty()) {
    throw Error(ErrorCode::DegenerateGeometry, "geometry_matrix: no satellites");
  }
  GeometryMatrix g;
  g.rows.resize(static_cast<Eigen::Index>(sats.size()), 4);
  for (std::size_t i = 0; i < sats.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    g.rows.block<1, 3>(row, 0) = los_vector(sats[i], x0).transpose();
    g.rows(row, 3) = 1.0;
  }
  return g;
}

double gdop(const GeometryMatrix& g) {
  if (g.size() < 4) {
    throw Error(ErrorCode::SingularGeometry, "gdop: fewer than 4 rows");
  }
  const Eigen::Matrix4d gram = g.rows.transpose() * g.rows;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(gram);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxCondition) {
    throw Error(ErrorCode::SingularGeometry, "gdop: geometry is singular");
  }
  return std::sqrt(gram.ldlt().solve(Eigen::Matrix4d::Identity()).trace());
}

namespace {

/// Gauss-Newton on measurements already in canonical order.
PositionFix gauss_newton(std::span<const CorrectedPseudorange> ms, const SolverConfig& config,
                         const Eigen::VectorXd& w) {
  State s;
  if (config.initial_policy == InitialPosition::Provided) {
    s.position = config.initial_position.vec();
    s.clock = config.initial_clock_bias;
  } else {
    s.position.setZero();
  }
  const auto sats = satellite_positions(ms);

  State best = s;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    const Eigen::VectorXd r = residuals_at(ms, s);
    const double cost = (w.array() * r.array().square()).sum();
    if (cost < best_cost) {
      best_cost = cost;
      best = s;
    }
    const auto g = geometry_matrix(sats, EcefPosition::from(s.position));
    const Eigen::Vector4d step = solve_normal(g, w, r);
    s.position += step.head<3>();
    s.clock += step[3];
    if (step.head<3>().norm() < config.step_tolerance) {
      return make_fix(ms, s, w, iter, true);
    }
  }
  if ((w.array() * residuals_at(ms, s).array().square()).sum() < best_cost) best = s;
  return make_fix(ms, best, w, config.max_iterations, false);
}

}  // namespace

PositionFix wls_solve(std::span<const CorrectedPseudorange> ms, const SolverConfig& config,
                      std::span<const double> weights) {
  if (ms.size() < 4) {
    throw Error(ErrorCode::InsufficientSatellites,
                "wls: " + std::to_string(ms.size()) + " usable measurements, need 4");
  }
  if (!weights.empty() && weights.size() != ms.size()) {
    throw Error(ErrorCode::DegenerateInput, "wls: weight count does not match measurements");
  }
  // Sums run in a fixed satellite order so the result does not depend on
  // the input order down to the last bit.
  std::vector<std::size_t> order(ms.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto key = [&](std::size_t i) {
    const auto& m = ms[i];
    return std::tie(m.sat_id, m.value, m.sat_pos.x, m.sat_pos.y, m.sat_pos.z);
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  std::vector<CorrectedPseudorange> sorted;
  sorted.reserve(ms.size());
  Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(ms.size()));
  for (std::size_t k = 0; k < order.size(); ++k) {
    sorted.push_back(ms[order[k]]);
    if (!weights.empty()) w[static_cast<Eigen::Index>(k)] = weights[order[k]];
  }

  PositionFix fix = gauss_newton(sorted, config, w);
  PositionFix out = fix;
  for (std::size_t k = 0; k < order.size(); ++k) {
    out.sat_ids[order[k]] = fix.sat_ids[k];
    out.residuals[order[k]] = fix.residuals[k];
    out.weights[order[k]] = fix.weights[k];
  }
  return out;
}

PositionFix wls_solve(const Epoch& epoch, const SolverConfig& config,
                      std::span<const double> weights) {
  const auto ms = usable_measurements(epoch);
  return wls_solve(std::span<const CorrectedPseudorange>(ms), config, weights);
}

PositionFix rwls_solve(std::span<const CorrectedPseudorange> ms, const SolverConfig& config) {
  std::vector<double> w(ms.size(), 1.0);
  PositionFix fix = wls_solve(ms, config, w);
  SolverConfig warm = config;
  warm.initial_policy = InitialPosition::Provided;
  for (int outer = 0; outer < 10; ++outer) {
    double change = 0.0;
    std::vector<double> next(ms.size());
    for (std::size_t i = 0; i < ms.size(); ++i) {
      const double r = std::abs(fix.residuals[i]);
      const double wi = r <= config.robust_delta ? 1.0 : config.robust_delta / r;
      next[i] = std::max(wi, config.weight_floor);
      change = std::max(change, std::abs(next[i] - w[i]));
    }
    if (change < 1e-6) break;
    w = std::move(next);
    warm.initial_position = fix.position;
    warm.initial_clock_bias = fix.clock_bias;
    fix = wls_solve(ms, warm, w);
  }
  return fix;
}

PositionFix rwls_solve(const Epoch& epoch, const SolverConfig& config) {
  const auto ms = usable_measurements(epoch);
  return rwls_solve(std::span<const CorrectedPseudorange>(ms), config);
}

std::vector<std::optional<PositionFix>> solve_trace(const Trace& trace, bool robust,
                                                    const SolverConfig& config) {
  std::vector<std::optional<PositionFix>> out;
  out.reserve(trace.epochs.size());
  SolverConfig cfg = config;
  for (const auto& epoch : trace.epochs) {
    try {
      auto fix = robust ? rwls_solve(epoch, cfg) : wls_solve(epoch, cfg);
      if (fix.converged) {
        cfg.initial_policy = InitialPosition::Provided;
        cfg.initial_position = fix.position;
        cfg.initial_clock_bias = fix.clock_bias;
      }
      out.emplace_back(std::move(fix));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientSatellites &&
          e.code() != ErrorCode::SingularGeometry) {
        throw;
      }
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

std::vector<std::optional<PositionFix>> kf_track(const Trace& trace, const SolverConfig& config,
                                                const KalmanConfig& kf) {
  using Mat8 = Eigen::Matrix<double, 8, 8>;
  using Vec8 = Eigen::Matrix<double, 8, 1>;
  using Mat48 = Eigen::Matrix<double, 4, 8>;

  if (trace.epochs.empty()) {
    throw Error(ErrorCode::EmptyInput, "kf_track: trace has no epochs");
  }
  const auto measurements = solve_trace(trace, true, config);

  // State layout: px py pz vx vy vz b bdot.
  Mat48 h = Mat48::Zero();
  h(0, 0) = h(1, 1) = h(2, 2) = h(3, 6) = 1.0;

  Vec8 x = Vec8::Zero();
  Mat8 p = Mat8::Zero();
  bool initialized = false;
  std::int64_t last_time = 0;
  PositionFix last_fix;

  std::vector<std::optional<PositionFix>> out;
  out.reserve(trace.epochs.size());
  for (std::size_t k = 0; k < trace.epochs.size(); ++k) {
    const auto time = trace.epochs[k].time_ms;
    const auto& meas = measurements[k];
    const bool usable = meas && meas->converged;

    if (!initialized) {
      if (!usable) {
        out.emplace_back(std::nullopt);
        continue;
      }
      const double r = std::pow(meas->gdop * kf.sigma0, 2);
      x.head<3>() = meas->position.vec();
      x[6] = meas->clock_bias;
      p.diagonal() << r, r, r, std::pow(kf.initial_velocity_sigma, 2),
          std::pow(kf.initial_velocity_sigma, 2), std::pow(kf.initial_velocity_sigma, 2), r,
          std::pow(kf.initial_drift_sigma, 2);
      initialized = true;
      last_time = time;
      last_fix = *meas;
      out.emplace_back(*meas);
      continue;
    }

    const double dt = static_cast<double>(time - last_time) / 1000.0;
    last_time = time;
    Mat8 f = Mat8::Identity();
    Mat8 q = Mat8::Zero();
    const double dt2 = dt * dt, dt3 = dt2 * dt;
    for (int axis = 0; axis < 3; ++axis) {
      f(axis, axis + 3) = dt;
      q(axis, axis) = kf.accel_psd * dt3 / 3.0;
      q(axis, axis + 3) = q(axis + 3, axis) = kf.accel_psd * dt2 / 2.0;
      q(axis + 3, axis + 3) = kf.accel_psd * dt;
    }
    f(6, 7) = dt;
    q(6, 6) = kf.clock_psd * dt3 / 3.0;
    q(6, 7) = q(7, 6) = kf.clock_psd * dt2 / 2.0;
    q(7, 7) = kf.clock_psd * dt;
    x = f * x;
    p = f * p * f.transpose() + q;

    PositionFix fix;
    if (usable) {
      const double r = std::pow(meas->gdop * kf.sigma0, 2);
      Eigen::Vector4d z;
      z << meas->position.vec(), meas->clock_bias;
      const Eigen::Vector4d innovation = z - h * x;
      const Eigen::Matrix4d s = h * p * h.transpose() + r * Eigen::Matrix4d::Identity();
      const Eigen::Matrix<double, 8, 4> gain = p * h.transpose() * s.inverse();
      x += gain * innovation;
      const Mat8 ikh = Mat8::Identity() - gain * h;
      p = ikh * p * ikh.transpose() + r * gain * gain.transpose();
      fix = *meas;
      last_fix = *meas;
    } else {
      fix.gdop = last_fix.gdop;
      fix.converged = false;
    }
    fix.position = EcefPosition::from(x.head<3>());
    fix.clock_bias = x[6];
    out.emplace_back(std::move(fix));
  }
  return out;
}

}  // namespace pcnet
