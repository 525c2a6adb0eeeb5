#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pcnet/gnss_model.hpp"

namespace pcnet::detail {

struct MeasurementRow {
  std::string trace_id;
  std::int64_t time_ms = 0;
  std::size_t line = 0;
  bool has_measurement = true;  // false for the placeholder row of an empty epoch
  SatelliteMeasurement m;
};

struct TruthRow {
  std::string trace_id;
  std::int64_t time_ms = 0;
  GeodeticPosition position;
};

/// Applies the ingestion filters, groups rows into traces/epochs and
/// attaches ground truth by exact timestamp.
std::vector<Trace> assemble_traces(std::vector<MeasurementRow> rows,
                                   const std::vector<TruthRow>* truth, bool gps_only,
                                   const std::string& source, IngestStats* stats);

/// Rows without collectionName/phoneName columns are assigned `fallback_id`.
std::vector<MeasurementRow> read_gsdc_rows(const std::filesystem::path& path,
                                           const std::string& fallback_id, IngestStats* stats);
std::vector<TruthRow> read_gsdc_truth(const std::filesystem::path& path,
                                      const std::string& fallback_id);

std::string file_stem_id(const std::filesystem::path& path);

}  // namespace pcnet::detail
