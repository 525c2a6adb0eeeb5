// Adapter for the Google Smartphone Decimeter Challenge "derived" and
// "ground_truth" CSV files. All dataset-specific column names live here.
//
//   derived column                  canonical field
//   ------------------------------  ----------------------------------------
//   collectionName + phoneName      trace_id ("<collection>_<phone>"); when
//                                   absent, the file stem
//   millisSinceGpsEpoch             time_ms
//   constellationType, svid         sat_id: letter (1 G, 2 S, 3 R, 4 J, 5 C,
//                                   6 E) + two-digit PRN
//   signalType (optional)           only the primary band per constellation
//                                   is kept (GPS_L1, GLO_G1, GAL_E1, BDS_B1I,
//                                   QZS_J1, SBS_L1)
//   xSatPosM, ySatPosM, zSatPosM    sat_x_m, sat_y_m, sat_z_m
//   rawPrM                          raw_pr_m
//   satClkBiasM - isrbM             sat_clk_m (isrbM optional, default 0)
//   ionoDelayM                      iono_m
//   tropoDelayM                     tropo_m
//   cn0DbHz                         cn0_dbhz
//   elevationDeg (optional)         elevation_deg
//
//   ground truth column             canonical field
//   ------------------------------  ----------------------------------------
//   millisSinceGpsEpoch             time_ms
//   latDeg, lngDeg                  lat_deg, lng_deg
//   heightAboveWgs84EllipsoidM      height_m

#include <array>
#include <cstdio>

#include "ingest_internal.hpp"
#include "pcnet/csv.hpp"
#include "pcnet/error.hpp"

namespace pcnet::detail {

namespace {

char constellation_letter(std::int64_t type) {
  static constexpr std::array<char, 7> kLetters = {'?', 'G', 'S', 'R', 'J', 'C', 'E'};
  return type >= 1 && type <= 6 ? kLetters[static_cast<std::size_t>(type)] : '?';
}

bool primary_signal(std::string_view signal) {
  return signal.empty() || signal == "GPS_L1" || signal == "GLO_G1" || signal == "GAL_E1" ||
         signal == "BDS_B1I" || signal == "QZS_J1" || signal == "SBS_L1";
}

std::string trace_id_for(const csv::Reader& r, const std::string& fallback) {
  const auto collection = r.cell_or_empty("collectionName");
  const auto phone = r.cell_or_empty("phoneName");
  if (!collection.empty() && !phone.empty()) {
    return std::string(collection) + "_" + std::string(phone);
  }
  return fallback;
}

}  // namespace

std::vector<MeasurementRow> read_gsdc_rows(const std::filesystem::path& path,
                                           const std::string& fallback_id, IngestStats* stats) {
  csv::Reader r(path);
  r.require({"millisSinceGpsEpoch", "constellationType", "svid", "xSatPosM", "ySatPosM",
             "zSatPosM", "rawPrM", "satClkBiasM", "ionoDelayM", "tropoDelayM", "cn0DbHz"});
  std::vector<MeasurementRow> rows;
  while (r.next()) {
    if (!primary_signal(r.cell_or_empty("signalType"))) {
      if (stats) ++stats->dropped_signal;
      continue;
    }
    MeasurementRow row;
    row.trace_id = trace_id_for(r, fallback_id);
    row.time_ms = r.integer("millisSinceGpsEpoch");
    row.line = r.line();
    const auto type = r.integer("constellationType");
    const auto svid = r.integer("svid");
    std::array<char, 16> id{};
    std::snprintf(id.data(), id.size(), "%c%02lld", constellation_letter(type),
                  static_cast<long long>(svid));
    auto& m = row.m;
    m.sat_id = id.data();
    const auto x = r.optional_number("xSatPosM");
    const auto y = r.optional_number("ySatPosM");
    const auto z = r.optional_number("zSatPosM");
    if (x && y && z) m.sat_pos = {*x, *y, *z};
    m.raw_pseudorange = r.number("rawPrM");
    m.sat_clock_bias = r.optional_number("satClkBiasM").value_or(0.0) -
                       r.optional_number("isrbM").value_or(0.0);
    m.iono_delay = r.optional_number("ionoDelayM").value_or(0.0);
    m.tropo_delay = r.optional_number("tropoDelayM").value_or(0.0);
    m.cn0 = r.optional_number("cn0DbHz").value_or(0.0);
    m.elevation = r.optional_number("elevationDeg");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<TruthRow> read_gsdc_truth(const std::filesystem::path& path,
                                      const std::string& fallback_id) {
  csv::Reader r(path);
  r.require({"millisSinceGpsEpoch", "latDeg", "lngDeg", "heightAboveWgs84EllipsoidM"});
  std::vector<TruthRow> rows;
  while (r.next()) {
    rows.push_back({trace_id_for(r, fallback_id), r.integer("millisSinceGpsEpoch"),
                    {r.number("latDeg"), r.number("lngDeg"),
                     r.number("heightAboveWgs84EllipsoidM")}});
  }
  return rows;
}

}  // namespace pcnet::detail
