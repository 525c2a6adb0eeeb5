#include "pcnet/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "pcnet/csv.hpp"
#include "pcnet/error.hpp"
#include "pcnet/solver.hpp"

namespace pcnet {

namespace {

struct LocalFrame {
  Eigen::Vector3d origin, east, north, up;

  explicit LocalFrame(const GeodeticPosition& g) {
    origin = geodetic_to_ecef(g).vec();
    const Eigen::Matrix3d r = ecef_to_ned_rotation(g);
    north = r.row(0).transpose();
    east = r.row(1).transpose();
    up = -r.row(2).transpose();
  }
};

struct SimSatellite {
  int prn = 0;
  double azimuth = 0.0;    // degrees at t = 0, seen from the origin
  double elevation = 0.0;  // degrees
  double azimuth_rate = 0.0;
  double elevation_rate = 0.0;
};

double quantize(double v) { return std::round(v * 1024.0) / 1024.0; }

Eigen::Vector3d satellite_position(const LocalFrame& f, double az_deg, double el_deg,
                                   double orbit_radius) {
  const double az = deg2rad(az_deg), el = deg2rad(el_deg);
  const Eigen::Vector3d d =
      (f.east * std::sin(az) + f.north * std::cos(az)) * std::cos(el) + f.up * std::sin(el);
  // |origin + r d| = orbit_radius, positive root
  const double od = f.origin.dot(d);
  const double r = -od + std::sqrt(od * od - f.origin.squaredNorm() + orbit_radius * orbit_radius);
  return f.origin + r * d;
}

Eigen::Vector3d receiver_position(const SimConfig& c, const LocalFrame& f, double t) {
  if (c.path == PathKind::Static || c.waypoints.empty()) return f.origin;
  double travel = c.speed * t;
  auto point = [&](const std::pair<double, double>& ne) {
    return f.origin + f.north * ne.first + f.east * ne.second;
  };
  for (std::size_t i = 0; i + 1 < c.waypoints.size(); ++i) {
    const Eigen::Vector3d a = point(c.waypoints[i]);
    const Eigen::Vector3d b = point(c.waypoints[i + 1]);
    const double len = (b - a).norm();
    if (travel <= len && len > 0.0) return a + (b - a) * (travel / len);
    travel -= len;
  }
  return point(c.waypoints.back());
}

std::vector<std::pair<double, double>> parse_waypoints(const std::string& text) {
  std::vector<std::pair<double, double>> out;
  if (text.empty()) return out;
  for (const auto item : csv::split(text, ';')) {
    const auto parts = csv::split(item, ':');
    if (parts.size() != 2) {
      throw Error(ErrorCode::ConfigError, "waypoints: expected north:east pairs");
    }
    const auto kv = KeyValueConfig::parse("n=" + std::string(parts[0]) + "\ne=" +
                                          std::string(parts[1]));
    out.emplace_back(kv.get_double("n", 0.0), kv.get_double("e", 0.0));
  }
  return out;
}

}  // namespace

void validate(const SimConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (c.min_satellites < 1 || c.max_satellites < c.min_satellites || c.max_satellites > 32) {
    fail("satellite count range must satisfy 1 <= min <= max <= 32");
  }
  if (!(c.orbit_radius > 1e7)) fail("orbit_radius must exceed 1e7 m");
  if (c.epochs < 0 || c.cadence_ms <= 0) fail("epochs must be >= 0 and cadence_ms > 0");
  if (!(c.noise_sigma >= 0.0) || !(c.nlos_bias_mean >= 0.0) || !(c.cn0_noise_sigma >= 0.0)) {
    fail("noise and bias scales must be non-negative");
  }
  if (!(c.nlos_probability >= 0.0 && c.nlos_probability <= 1.0)) {
    fail("nlos_probability must lie in [0, 1]");
  }
  if (!(c.elevation_mask >= 0.0 && c.elevation_mask < 80.0)) {
    fail("elevation_mask must lie in [0, 80)");
  }
  if (!(c.speed >= 0.0) || !(c.origin_spread_deg >= 0.0)) fail("speed and spread must be >= 0");
  if (std::abs(c.origin.latitude) > 85.0) fail("origin latitude must lie in [-85, 85]");
}

void apply_config(const KeyValueConfig& kv, SimConfig& c) {
  c.seed = kv.get_uint("seed", c.seed);
  c.trace_id = kv.get_string("trace_id", c.trace_id);
  c.min_satellites = static_cast<int>(kv.get_int("min_satellites", c.min_satellites));
  c.max_satellites = static_cast<int>(kv.get_int("max_satellites", c.max_satellites));
  c.orbit_radius = kv.get_double("orbit_radius", c.orbit_radius);
  c.origin.latitude = kv.get_double("origin_lat", c.origin.latitude);
  c.origin.longitude = kv.get_double("origin_lon", c.origin.longitude);
  c.origin.height = kv.get_double("origin_height", c.origin.height);
  c.origin_spread_deg = kv.get_double("origin_spread_deg", c.origin_spread_deg);
  const auto path = kv.get_string("path", c.path == PathKind::Static ? "static" : "polyline");
  if (path == "static") {
    c.path = PathKind::Static;
  } else if (path == "polyline") {
    c.path = PathKind::Polyline;
  } else {
    throw Error(ErrorCode::ConfigError, "path must be static or polyline");
  }
  if (kv.has("waypoints")) c.waypoints = parse_waypoints(kv.get_string("waypoints", ""));
  c.speed = kv.get_double("speed", c.speed);
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.cadence_ms = kv.get_int("cadence_ms", c.cadence_ms);
  c.start_time_ms = kv.get_int("start_time_ms", c.start_time_ms);
  c.noise_sigma = kv.get_double("noise_sigma", c.noise_sigma);
  c.nlos_probability = kv.get_double("nlos_probability", c.nlos_probability);
  c.nlos_bias_mean = kv.get_double("nlos_bias_mean", c.nlos_bias_mean);
  c.elevation_mask = kv.get_double("elevation_mask", c.elevation_mask);
  c.cn0_zenith = kv.get_double("cn0_zenith", c.cn0_zenith);
  c.cn0_horizon = kv.get_double("cn0_horizon", c.cn0_horizon);
  c.cn0_nlos_penalty = kv.get_double("cn0_nlos_penalty", c.cn0_nlos_penalty);
  c.cn0_noise_sigma = kv.get_double("cn0_noise_sigma", c.cn0_noise_sigma);
  c.clock_bias_max = kv.get_double("clock_bias_max", c.clock_bias_max);
  c.clock_drift_max = kv.get_double("clock_drift_max", c.clock_drift_max);
}

std::pair<Trace, SimTruth> gen_trace(const SimConfig& c) {
  validate(c);
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  GeodeticPosition origin = c.origin;
  if (c.origin_spread_deg > 0.0) {
    origin.latitude = std::clamp(origin.latitude + uniform(-1, 1) * c.origin_spread_deg, -80.0, 80.0);
    origin.longitude += uniform(-1, 1) * c.origin_spread_deg;
    origin.longitude = std::remainder(origin.longitude, 360.0);
    if (origin.longitude <= -180.0) origin.longitude += 360.0;
  }
  const LocalFrame frame(origin);

  const int n_sats = std::uniform_int_distribution<int>(c.min_satellites, c.max_satellites)(rng);
  std::vector<int> prns(32);
  std::iota(prns.begin(), prns.end(), 1);
  std::shuffle(prns.begin(), prns.end(), rng);

  // Azimuth sectors with jitter; elevations cycle through low/mid/high bands.
  const double lo = c.elevation_mask + 2.0;
  const std::array<std::pair<double, double>, 3> bands = {
      std::pair{lo, std::max(lo + 1.0, 35.0)}, std::pair{std::max(lo, 35.0), 60.0},
      std::pair{60.0, 85.0}};
  std::vector<int> band_of(static_cast<std::size_t>(n_sats));
  for (int i = 0; i < n_sats; ++i) band_of[static_cast<std::size_t>(i)] = i % 3;
  std::shuffle(band_of.begin(), band_of.end(), rng);
  std::vector<SimSatellite> sats;
  const double sector = 360.0 / n_sats;
  for (int i = 0; i < n_sats; ++i) {
    const auto& band = bands[static_cast<std::size_t>(band_of[static_cast<std::size_t>(i)])];
    SimSatellite s;
    s.prn = prns[static_cast<std::size_t>(i)];
    s.azimuth = (i + uniform(0.1, 0.9)) * sector;
    s.elevation = uniform(band.first, band.second);
    s.azimuth_rate = uniform(-0.01, 0.01);
    s.elevation_rate = uniform(-0.005, 0.005);
    sats.push_back(s);
  }

  const double clock0 = uniform(-c.clock_bias_max, c.clock_bias_max);
  const double drift = uniform(-c.clock_drift_max, c.clock_drift_max);
  std::vector<double> sat_clock(sats.size());
  for (auto& v : sat_clock) v = quantize(uniform(-2e5, 2e5));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::exponential_distribution<double> nlos_bias(1.0);

  Trace trace;
  trace.trace_id = c.trace_id;
  trace.ground_truth.emplace();
  SimTruth truth;
  for (int k = 0; k < c.epochs; ++k) {
    const double t = static_cast<double>(k) * static_cast<double>(c.cadence_ms) / 1000.0;
    const auto rx = EcefPosition::from(receiver_position(c, frame, t));
    const auto rx_geo = ecef_to_geodetic(rx);
    const double clock = clock0 + drift * t;

    Epoch epoch;
    epoch.time_ms = c.start_time_ms + k * c.cadence_ms;
    EpochTruth et;
    et.position = rx;
    et.clock_bias = clock;
    for (std::size_t i = 0; i < sats.size(); ++i) {
      const auto& s = sats[i];
      const double el0 = std::clamp(s.elevation + s.elevation_rate * t, 1.0, 89.0);
      const auto sat_pos = EcefPosition::from(
          satellite_position(frame, s.azimuth + s.azimuth_rate * t, el0, c.orbit_radius));
      const double elevation = elevation_azimuth(sat_pos, rx_geo).first;
      if (elevation < c.elevation_mask) continue;

      const double sin_el = std::sin(deg2rad(elevation));
      const double shape = 0.5 + 1.5 * std::cos(deg2rad(elevation));
      const bool nlos = unit(rng) < 1.0 - std::pow(1.0 - c.nlos_probability, shape);
      const double bias = nlos ? c.nlos_bias_mean * nlos_bias(rng) : 0.0;
      const double eps = c.noise_sigma * noise(rng);
      const double cn0 = std::clamp(c.cn0_horizon + (c.cn0_zenith - c.cn0_horizon) * sin_el -
                                        (nlos ? c.cn0_nlos_penalty : 0.0) +
                                        c.cn0_noise_sigma * noise(rng),
                                    1.0, 65.0);
      const double iono = quantize(uniform(2.0, 8.0) / std::sqrt(1.0 - 0.9 * (1.0 - sin_el * sin_el)));
      const double tropo = quantize(2.4 / std::max(sin_el, 0.1));

      double corrected = geometric_range(rx, sat_pos) + clock;
      if (bias != 0.0 || eps != 0.0) corrected = corrected + bias + eps;
      SatelliteMeasurement m;
      char id[8];
      std::snprintf(id, sizeof id, "G%02d", s.prn);
      m.sat_id = id;
      m.sat_pos = sat_pos;
      m.sat_clock_bias = sat_clock[i];
      m.iono_delay = iono;
      m.tropo_delay = tropo;
      // Inverse of correct_pseudorange's ((raw + clk) - iono) - tropo.
      m.raw_pseudorange = ((corrected - m.sat_clock_bias) + iono) + tropo;
      m.cn0 = cn0;
      m.elevation = elevation;
      epoch.measurements.push_back(std::move(m));
      et.sat_ids.emplace_back(id);
      et.bias.push_back(bias);
      et.nlos.push_back(nlos);
    }

    // Canonical order: by sat_id, truth vectors permuted alongside.
    std::vector<std::size_t> order(epoch.measurements.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return epoch.measurements[a].sat_id < epoch.measurements[b].sat_id;
    });
    Epoch sorted{epoch.time_ms, {}};
    EpochTruth st{et.position, et.clock_bias, {}, {}, {}};
    for (const auto i : order) {
      sorted.measurements.push_back(epoch.measurements[i]);
      st.sat_ids.push_back(et.sat_ids[i]);
      st.bias.push_back(et.bias[i]);
      st.nlos.push_back(et.nlos[i]);
    }
    trace.ground_truth->push_back({sorted.time_ms, rx_geo});
    trace.epochs.push_back(std::move(sorted));
    truth.epochs.push_back(std::move(st));
  }
  return {std::move(trace), std::move(truth)};
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<SimConfig> corpus_configs(const SimConfig& base, int count, std::uint64_t master_seed) {
  std::vector<SimConfig> out;
  for (int i = 0; i < count; ++i) {
    SimConfig c = base;
    c.seed = derive_seed(master_seed, static_cast<std::uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof id, "trace_%03d", i);
    c.trace_id = id;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<std::pair<std::string, Split>> gen_corpus(const std::vector<SimConfig>& configs,
                                                      const std::filesystem::path& dir,
                                                      std::uint64_t split_seed) {
  if (configs.empty()) throw Error(ErrorCode::ConfigError, "gen_corpus: no trace configs");
  std::vector<std::string> ids;
  for (const auto& c : configs) {
    const auto [trace, truth] = gen_trace(c);
    write_trace(trace, epochs_file(dir, trace.trace_id), ground_truth_file(dir, trace.trace_id));
    ids.push_back(trace.trace_id);
  }
  auto split = split_by_trace(ids, split_seed);
  auto out = csv::open_output(dir / "splits.csv");
  out << "trace_id,split\n";
  for (const auto& [id, s] : split) out << id << ',' << to_string(s) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed: splits.csv");
  return split;
}

std::vector<std::pair<std::string, Split>> read_splits(const std::filesystem::path& path) {
  csv::Reader r(path);
  r.require({"trace_id", "split"});
  std::vector<std::pair<std::string, Split>> out;
  while (r.next()) {
    const auto s = r.cell("split");
    Split which = Split::Train;
    if (s == "val") {
      which = Split::Validation;
    } else if (s == "test") {
      which = Split::Test;
    } else if (s != "train") {
      r.fail("unknown split '" + std::string(s) + "'");
    }
    out.emplace_back(std::string(r.cell("trace_id")), which);
  }
  return out;
}

}  // namespace pcnet
