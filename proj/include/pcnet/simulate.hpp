#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pcnet/config.hpp"
#include "pcnet/geodesy.hpp"
#include "pcnet/gnss_model.hpp"

namespace pcnet {

enum class PathKind { Static, Polyline };

struct SimConfig {
  std::uint64_t seed = 1;
  std::string trace_id = "sim";
  int min_satellites = 8;
  int max_satellites = 12;
  double orbit_radius = 2.656e7;  // meters
  GeodeticPosition origin{37.4220, -122.0841, 10.0};
  double origin_spread_deg = 0.0;  // uniform jitter of origin lat/lon
  PathKind path = PathKind::Static;
  std::vector<std::pair<double, double>> waypoints;  // (north, east) meters from origin
  double speed = 10.0;                               // m/s along the polyline
  int epochs = 100;
  std::int64_t cadence_ms = 1000;
  std::int64_t start_time_ms = 1'300'000'000'000;
  double noise_sigma = 0.5;        // meters
  double nlos_probability = 0.2;   // per satellite-epoch, before elevation shaping
  double nlos_bias_mean = 15.0;    // meters, exponential
  double elevation_mask = 10.0;    // degrees
  double cn0_zenith = 45.0;        // dB-Hz
  double cn0_horizon = 30.0;       // dB-Hz
  double cn0_nlos_penalty = 10.0;  // dB-Hz
  double cn0_noise_sigma = 1.0;    // dB-Hz
  double clock_bias_max = 1e5;     // meters, initial |b| bound
  double clock_drift_max = 10.0;   // m/s
};

/// Throws ConfigError on out-of-range fields.
void validate(const SimConfig& config);

/// Reads every SimConfig field from `kv` (keys match the field names;
/// origin as origin_lat/origin_lon/origin_height, waypoints as
/// "n:e;n:e;..."), leaving absent ones at their current values.
void apply_config(const KeyValueConfig& kv, SimConfig& config);

struct EpochTruth {
  EcefPosition position;
  double clock_bias = 0.0;
  std::vector<std::string> sat_ids;  // same order as the emitted epoch
  std::vector<double> bias;          // injected NLOS bias, meters (>= 0)
  std::vector<bool> nlos;
};

struct SimTruth {
  std::vector<EpochTruth> epochs;
};

/// Forward model per satellite: corrected range = |x - x_sat| + b + bias +
/// N(0, sigma^2). The raw pseudorange additionally carries a satellite clock
/// term and atmospheric delays, quantized to 2^-10 m so that correcting them
/// is exact in floating point. NLOS probability rises toward the horizon:
/// p_eff = 1 - (1 - p)^(0.5 + 1.5 cos(el)). C/N0 is linear in sin(el) minus
/// the NLOS penalty, plus Gaussian noise.
std::pair<Trace, SimTruth> gen_trace(const SimConfig& config);

/// Distinct per-trace seeds from one master seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// `count` configs cloned from `base`, named trace_000..., each with a seed
/// derived from `master_seed`.
std::vector<SimConfig> corpus_configs(const SimConfig& base, int count, std::uint64_t master_seed);

/// Writes `<id>.epochs.csv`, `<id>.gt.csv` per trace and `splits.csv`
/// (trace_id, split) partitioned with `split_seed`.
std::vector<std::pair<std::string, Split>> gen_corpus(const std::vector<SimConfig>& configs,
                                                      const std::filesystem::path& dir,
                                                      std::uint64_t split_seed);

std::vector<std::pair<std::string, Split>> read_splits(const std::filesystem::path& path);

}  // namespace pcnet
