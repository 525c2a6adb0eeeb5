#include "pcnet/geodesy.hpp"

#include <cmath>
#include <numbers>

#include "pcnet/error.hpp"

namespace pcnet {

using namespace wgs84;

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

EcefPosition geodetic_to_ecef(const GeodeticPosition& g) {
  const double lat = deg2rad(g.latitude);
  const double lon = deg2rad(g.longitude);
  const double s = std::sin(lat);
  const double c = std::cos(lat);
  const double n = kSemiMajor / std::sqrt(1.0 - kEccentricitySq * s * s);
  return {(n + g.height) * c * std::cos(lon), (n + g.height) * c * std::sin(lon),
          (n * (1.0 - kEccentricitySq) + g.height) * s};
}

GeodeticPosition ecef_to_geodetic(const EcefPosition& p) {
  const double rho = std::hypot(p.x, p.y);
  if (rho < 1.0 && std::abs(p.z) < 1.0) {
    throw Error(ErrorCode::DegenerateGeometry,
                "ecef_to_geodetic: point within 1 m of the Earth's center");
  }
  const double ep2 = kEccentricitySq / (1.0 - kEccentricitySq);

  // Bowring: start from the parametric latitude of the point scaled onto the
  // ellipsoid, then refine. Each pass converges roughly cubically.
  double beta = std::atan2(p.z * kSemiMajor, rho * kSemiMinor);
  double lat = 0.0;
  for (int i = 0; i < 6; ++i) {
    const double sb = std::sin(beta);
    const double cb = std::cos(beta);
    const double next = std::atan2(p.z + ep2 * kSemiMinor * sb * sb * sb,
                                   rho - kEccentricitySq * kSemiMajor * cb * cb * cb);
    const bool done = i > 0 && std::abs(next - lat) < 1e-15;
    lat = next;
    beta = std::atan2((1.0 - kFlattening) * std::sin(lat), std::cos(lat));
    if (done) break;
  }

  const double s = std::sin(lat);
  const double c = std::cos(lat);
  const double n = kSemiMajor / std::sqrt(1.0 - kEccentricitySq * s * s);
  const double h = rho * c + p.z * s - kSemiMajor * kSemiMajor / n;

  double lon = rad2deg(std::atan2(p.y, p.x));
  if (lon <= -180.0) lon += 360.0;
  return {rad2deg(lat), lon, h};
}

Eigen::Matrix3d ecef_to_ned_rotation(const GeodeticPosition& ref) {
  const double lat = deg2rad(ref.latitude);
  const double lon = deg2rad(ref.longitude);
  const double sl = std::sin(lat), cl = std::cos(lat);
  const double so = std::sin(lon), co = std::cos(lon);
  Eigen::Matrix3d r;
  r << -sl * co, -sl * so, cl,  //
      -so, co, 0.0,             //
      -cl * co, -cl * so, -sl;
  return r;
}

NedVector ecef_to_ned(const EcefPosition& p, const GeodeticPosition& ref) {
  const Eigen::Vector3d d = p.vec() - geodetic_to_ecef(ref).vec();
  const Eigen::Vector3d ned = ecef_to_ned_rotation(ref) * d;
  return {ned.x(), ned.y(), ned.z()};
}

double vincenty_distance(const GeodeticPosition& a, const GeodeticPosition& b) {
  constexpr double f = kFlattening;
  const double L = deg2rad(b.longitude - a.longitude);
  const double u1 = std::atan((1.0 - f) * std::tan(deg2rad(a.latitude)));
  const double u2 = std::atan((1.0 - f) * std::tan(deg2rad(b.latitude)));
  const double su1 = std::sin(u1), cu1 = std::cos(u1);
  const double su2 = std::sin(u2), cu2 = std::cos(u2);

  double lambda = L;
  double sin_sigma = 0, cos_sigma = 0, sigma = 0, cos2_alpha = 0, cos_2sm = 0;
  bool converged = false;
  for (int iter = 0; iter < 200; ++iter) {
    const double sl = std::sin(lambda), cl = std::cos(lambda);
    sin_sigma = std::hypot(cu2 * sl, cu1 * su2 - su1 * cu2 * cl);
    if (sin_sigma == 0.0) return 0.0;  // coincident points
    cos_sigma = su1 * su2 + cu1 * cu2 * cl;
    sigma = std::atan2(sin_sigma, cos_sigma);
    const double sin_alpha = cu1 * cu2 * sl / sin_sigma;
    cos2_alpha = 1.0 - sin_alpha * sin_alpha;
    // Equatorial line: cos2_alpha = 0 and the 2σm term vanishes.
    cos_2sm = cos2_alpha != 0.0 ? cos_sigma - 2.0 * su1 * su2 / cos2_alpha : 0.0;
    const double c = f / 16.0 * cos2_alpha * (4.0 + f * (4.0 - 3.0 * cos2_alpha));
    const double prev = lambda;
    lambda = L + (1.0 - c) * f * sin_alpha *
                     (sigma + c * sin_sigma *
                                  (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)));
    if (std::abs(lambda - prev) < 1e-12) {
      converged = true;
      break;
    }
  }
  if (!converged || !std::isfinite(lambda)) {
    throw Error(ErrorCode::NonConvergence, "vincenty_distance: iteration did not converge "
                                           "(nearly antipodal points)");
  }

  const double a2 = kSemiMajor * kSemiMajor;
  const double b2 = kSemiMinor * kSemiMinor;
  const double u_sq = cos2_alpha * (a2 - b2) / b2;
  const double big_a =
      1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
  const double big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
  const double delta_sigma =
      big_b * sin_sigma *
      (cos_2sm + big_b / 4.0 *
                     (cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm) -
                      big_b / 6.0 * cos_2sm * (-3.0 + 4.0 * sin_sigma * sin_sigma) *
                          (-3.0 + 4.0 * cos_2sm * cos_2sm)));
  return kSemiMinor * big_a * (sigma - delta_sigma);
}

}  // namespace pcnet
