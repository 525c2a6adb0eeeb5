#include "pcnet/gnss_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "ingest_internal.hpp"
#include "pcnet/csv.hpp"
#include "pcnet/error.hpp"

namespace pcnet {

namespace {

const std::vector<std::string> kEpochColumns = {
    "trace_id", "time_ms", "sat_id",   "sat_x_m",  "sat_y_m",  "sat_z_m",
    "raw_pr_m", "sat_clk_m", "iono_m", "tropo_m", "cn0_dbhz", "elevation_deg"};

const std::vector<std::string> kTruthColumns = {"trace_id", "time_ms", "lat_deg", "lng_deg",
                                                "height_m"};

std::vector<detail::MeasurementRow> read_canonical_rows(const std::filesystem::path& path) {
  csv::Reader r(path);
  r.require(kEpochColumns);
  std::vector<detail::MeasurementRow> rows;
  while (r.next()) {
    detail::MeasurementRow row;
    row.trace_id = std::string(r.cell("trace_id"));
    row.time_ms = r.integer("time_ms");
    row.line = r.line();
    if (r.cell("sat_id").empty()) {
      row.has_measurement = false;
      rows.push_back(std::move(row));
      continue;
    }
    auto& m = row.m;
    m.sat_id = std::string(r.cell("sat_id"));
    const auto x = r.optional_number("sat_x_m");
    const auto y = r.optional_number("sat_y_m");
    const auto z = r.optional_number("sat_z_m");
    // A missing coordinate is encoded as an all-zero position and dropped later.
    if (x && y && z) m.sat_pos = {*x, *y, *z};
    m.raw_pseudorange = r.number("raw_pr_m");
    m.sat_clock_bias = r.optional_number("sat_clk_m").value_or(0.0);
    m.iono_delay = r.optional_number("iono_m").value_or(0.0);
    m.tropo_delay = r.optional_number("tropo_m").value_or(0.0);
    m.cn0 = r.optional_number("cn0_dbhz").value_or(0.0);
    m.elevation = r.optional_number("elevation_deg");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<detail::TruthRow> read_canonical_truth(const std::filesystem::path& path) {
  csv::Reader r(path);
  r.require(kTruthColumns);
  std::vector<detail::TruthRow> rows;
  while (r.next()) {
    rows.push_back({std::string(r.cell("trace_id")), r.integer("time_ms"),
                    {r.number("lat_deg"), r.number("lng_deg"), r.number("height_m")}});
  }
  return rows;
}

}  // namespace

CorrectedPseudorange correct_pseudorange(const SatelliteMeasurement& m) {
  const double value = ((m.raw_pseudorange + m.sat_clock_bias) - m.iono_delay) - m.tropo_delay;
  if (!(value > kMinPseudorange && value < kMaxPseudorange)) {
    throw Error(ErrorCode::InvalidMeasurement,
                "corrected pseudorange of " + m.sat_id + " out of range: " + csv::format(value));
  }
  return {m.sat_id, value, m.sat_pos, m.cn0, m.elevation};
}

std::vector<CorrectedPseudorange> usable_measurements(const Epoch& epoch) {
  std::vector<CorrectedPseudorange> out;
  out.reserve(epoch.measurements.size());
  for (const auto& m : epoch.measurements) {
    try {
      out.push_back(correct_pseudorange(m));
    } catch (const Error&) {
    }
  }
  return out;
}

std::pair<double, double> elevation_azimuth(const EcefPosition& sat_pos,
                                            const GeodeticPosition& rx) {
  const Eigen::Vector3d d = sat_pos.vec() - geodetic_to_ecef(rx).vec();
  const double range = d.norm();
  if (!(range > 0.0)) {
    throw Error(ErrorCode::DegenerateGeometry, "elevation_azimuth: satellite at receiver");
  }
  const double lat = deg2rad(rx.latitude);
  const double lon = deg2rad(rx.longitude);
  const Eigen::Vector3d east(-std::sin(lon), std::cos(lon), 0.0);
  const Eigen::Vector3d north(-std::sin(lat) * std::cos(lon), -std::sin(lat) * std::sin(lon),
                              std::cos(lat));
  const Eigen::Vector3d up(std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon),
                           std::sin(lat));
  const double elevation = rad2deg(std::asin(std::clamp(up.dot(d) / range, -1.0, 1.0)));
  double azimuth = rad2deg(std::atan2(east.dot(d), north.dot(d)));
  if (azimuth < 0.0) azimuth += 360.0;
  if (azimuth >= 360.0) azimuth -= 360.0;
  return {elevation, azimuth};
}

TraceFormat parse_trace_format(const std::string& name) {
  if (name == "canonical_csv") return TraceFormat::CanonicalCsv;
  if (name == "gsdc_derived") return TraceFormat::GsdcDerived;
  throw Error(ErrorCode::UsageError, "unknown format '" + name + "'");
}

namespace detail {

std::string file_stem_id(const std::filesystem::path& path) {
  std::string stem = path.filename().string();
  if (const auto pos = stem.find('.'); pos != std::string::npos) stem.resize(pos);
  return stem;
}

std::vector<Trace> assemble_traces(std::vector<MeasurementRow> rows,
                                   const std::vector<TruthRow>* truth, bool gps_only,
                                   const std::string& source, IngestStats* stats) {
  IngestStats local;
  IngestStats& st = stats ? *stats : local;

  // trace_id -> time -> measurements
  std::map<std::string, std::map<std::int64_t, std::vector<MeasurementRow>>> grouped;
  for (auto& row : rows) {
    ++st.rows;
    auto& epoch = grouped[row.trace_id][row.time_ms];
    if (!row.has_measurement) continue;
    const auto& m = row.m;
    if (gps_only && (m.sat_id.empty() || m.sat_id.front() != 'G')) {
      ++st.dropped_constellation;
      continue;
    }
    if (m.sat_pos == EcefPosition{}) {
      ++st.dropped_missing_position;
      continue;
    }
    if (m.cn0 == 0.0) {
      ++st.dropped_zero_cn0;
      continue;
    }
    epoch.push_back(std::move(row));
  }

  std::map<std::string, std::map<std::int64_t, GeodeticPosition>> truth_index;
  if (truth) {
    for (const auto& t : *truth) truth_index[t.trace_id][t.time_ms] = t.position;
  }

  std::vector<Trace> traces;
  for (auto& [trace_id, epochs] : grouped) {
    Trace trace;
    trace.trace_id = trace_id;
    for (auto& [time, ms] : epochs) {
      std::sort(ms.begin(), ms.end(),
                [](const auto& a, const auto& b) { return a.m.sat_id < b.m.sat_id; });
      Epoch epoch{time, {}};
      for (std::size_t i = 0; i < ms.size(); ++i) {
        if (!epoch.measurements.empty() && ms[i].m.sat_id == epoch.measurements.back().sat_id) {
          throw Error(ErrorCode::ParseError,
                      source + ":" + std::to_string(ms[i].line) + ": duplicate satellite " +
                          ms[i].m.sat_id + " at time " + std::to_string(time));
        }
        epoch.measurements.push_back(std::move(ms[i].m));
      }
      trace.epochs.push_back(std::move(epoch));
    }
    if (truth) {
      const auto it = truth_index.find(trace_id);
      const auto* by_time = it == truth_index.end() ? nullptr : &it->second;
      std::vector<GroundTruthSample> gt;
      for (const auto& e : trace.epochs) {
        if (!by_time || !by_time->contains(e.time_ms)) {
          throw Error(ErrorCode::AlignmentError, "no ground truth for trace " + trace_id +
                                                     " at time " + std::to_string(e.time_ms));
        }
        gt.push_back({e.time_ms, by_time->at(e.time_ms)});
      }
      trace.ground_truth = std::move(gt);
    }
    traces.push_back(std::move(trace));
  }
  return traces;
}

}  // namespace detail

std::vector<Trace> load_traces(const std::filesystem::path& epochs, TraceFormat format,
                               const LoadOptions& options, IngestStats* stats) {
  std::vector<detail::MeasurementRow> rows;
  std::optional<std::vector<detail::TruthRow>> truth;
  if (format == TraceFormat::CanonicalCsv) {
    rows = read_canonical_rows(epochs);
    if (options.ground_truth) truth = read_canonical_truth(*options.ground_truth);
  } else {
    const auto id = detail::file_stem_id(epochs);
    rows = detail::read_gsdc_rows(epochs, id, stats);
    if (options.ground_truth) truth = detail::read_gsdc_truth(*options.ground_truth, id);
  }
  return detail::assemble_traces(std::move(rows), truth ? &*truth : nullptr, options.gps_only,
                                 epochs.string(), stats);
}

Trace load_trace(const std::filesystem::path& epochs, TraceFormat format,
                 const LoadOptions& options, IngestStats* stats) {
  auto traces = load_traces(epochs, format, options, stats);
  if (traces.empty()) {
    Trace t;
    t.trace_id = detail::file_stem_id(epochs);
    if (options.ground_truth) t.ground_truth.emplace();
    return t;
  }
  if (traces.size() > 1) {
    throw Error(ErrorCode::SchemaError, epochs.string() + ": holds " +
                                            std::to_string(traces.size()) +
                                            " traces, expected one");
  }
  return std::move(traces.front());
}

void write_trace(const Trace& trace, const std::filesystem::path& epochs,
                 const std::optional<std::filesystem::path>& ground_truth) {
  {
    auto out = csv::open_output(epochs);
    for (std::size_t i = 0; i < kEpochColumns.size(); ++i) {
      out << (i ? "," : "") << kEpochColumns[i];
    }
    out << '\n';
    for (const auto& e : trace.epochs) {
      if (e.measurements.empty()) {
        out << trace.trace_id << ',' << e.time_ms << ",,,,,,,,,,\n";
        continue;
      }
      for (const auto& m : e.measurements) {
        out << trace.trace_id << ',' << e.time_ms << ',' << m.sat_id << ','
            << csv::format(m.sat_pos.x) << ',' << csv::format(m.sat_pos.y) << ','
            << csv::format(m.sat_pos.z) << ',' << csv::format(m.raw_pseudorange) << ','
            << csv::format(m.sat_clock_bias) << ',' << csv::format(m.iono_delay) << ','
            << csv::format(m.tropo_delay) << ',' << csv::format(m.cn0) << ','
            << (m.elevation ? csv::format(*m.elevation) : "") << '\n';
      }
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + epochs.string());
  }
  if (ground_truth && trace.ground_truth) {
    auto out = csv::open_output(*ground_truth);
    for (std::size_t i = 0; i < kTruthColumns.size(); ++i) {
      out << (i ? "," : "") << kTruthColumns[i];
    }
    out << '\n';
    for (const auto& g : *trace.ground_truth) {
      out << trace.trace_id << ',' << g.time_ms << ',' << csv::format(g.position.latitude) << ','
          << csv::format(g.position.longitude) << ',' << csv::format(g.position.height) << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + ground_truth->string());
  }
}

std::filesystem::path epochs_file(const std::filesystem::path& dir, const std::string& trace_id) {
  return dir / (trace_id + ".epochs.csv");
}

std::filesystem::path ground_truth_file(const std::filesystem::path& dir,
                                        const std::string& trace_id) {
  return dir / (trace_id + ".gt.csv");
}

std::vector<Trace> load_corpus(const std::filesystem::path& dir, bool gps_only) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::IoError, "not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.ends_with(".epochs.csv")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Trace> traces;
  for (const auto& f : files) {
    const auto id = f.filename().string().substr(0, f.filename().string().size() - 11);
    LoadOptions opts;
    opts.gps_only = gps_only;
    if (const auto gt = ground_truth_file(dir, id); std::filesystem::exists(gt)) {
      opts.ground_truth = gt;
    }
    for (auto& t : load_traces(f, TraceFormat::CanonicalCsv, opts)) traces.push_back(std::move(t));
  }
  return traces;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<std::pair<std::string, Split>> split_by_trace(std::vector<std::string> trace_ids,
                                                          std::uint64_t seed,
                                                          double train_fraction,
                                                          double val_fraction) {
  std::sort(trace_ids.begin(), trace_ids.end());
  trace_ids.erase(std::unique(trace_ids.begin(), trace_ids.end()), trace_ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(trace_ids.begin(), trace_ids.end(), rng);
  const auto n = trace_ids.size();
  auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, n > 0 ? 1 : 0, n);
  const auto n_val = std::min(
      n - n_train, static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(n))));
  std::vector<std::pair<std::string, Split>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Split s = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Validation : Split::Test);
    out.emplace_back(trace_ids[i], s);
  }
  return out;
}

}  // namespace pcnet
