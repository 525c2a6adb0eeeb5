#pragma once

#include <Eigen/Core>

namespace pcnet {

namespace wgs84 {
inline constexpr double kSemiMajor = 6378137.0;
inline constexpr double kInverseFlattening = 298.257223563;
inline constexpr double kFlattening = 1.0 / kInverseFlattening;
inline constexpr double kSemiMinor = kSemiMajor * (1.0 - kFlattening);
inline constexpr double kEccentricitySq = kFlattening * (2.0 - kFlattening);
}  // namespace wgs84

struct EcefPosition {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Eigen::Vector3d vec() const { return {x, y, z}; }
  static EcefPosition from(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

  bool operator==(const EcefPosition&) const = default;
};

/// Latitude/longitude in degrees, height in meters above the ellipsoid.
struct GeodeticPosition {
  double latitude = 0.0;
  double longitude = 0.0;
  double height = 0.0;

  bool operator==(const GeodeticPosition&) const = default;
};

struct NedVector {
  double north = 0.0;
  double east = 0.0;
  double down = 0.0;

  Eigen::Vector3d vec() const { return {north, east, down}; }
  double norm() const { return vec().norm(); }
};

EcefPosition geodetic_to_ecef(const GeodeticPosition& g);

/// Bowring's initial estimate followed by Newton refinement on the
/// parametric latitude. Throws DegenerateGeometry within 1 m of the
/// Earth's center.
GeodeticPosition ecef_to_geodetic(const EcefPosition& p);

/// Rows are the north, east and down unit vectors at `ref`, expressed in ECEF.
Eigen::Matrix3d ecef_to_ned_rotation(const GeodeticPosition& ref);

NedVector ecef_to_ned(const EcefPosition& p, const GeodeticPosition& ref);

/// Inverse geodesic distance on WGS-84 (meters). Heights are ignored.
///
/// Iterates the longitude on the auxiliary sphere until the update falls
/// below 1e-12 rad. Nearly antipodal pairs that need more than 200
/// iterations raise NonConvergence; there is no fallback formula.
double vincenty_distance(const GeodeticPosition& a, const GeodeticPosition& b);

double deg2rad(double deg);
double rad2deg(double rad);

}  // namespace pcnet
