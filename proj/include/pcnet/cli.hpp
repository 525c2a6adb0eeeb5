#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcnet/solver.hpp"

namespace pcnet {

/// One row of a fixes CSV: trace_id, time_ms, x_m, y_m, z_m, clk_m, gdop,
/// converged, n_sats. Epochs without a fix keep their row with empty
/// position fields so files stay aligned with the trace.
struct FixRecord {
  std::string trace_id;
  std::int64_t time_ms = 0;
  std::optional<PositionFix> fix;
};

void write_fixes_csv(std::span<const FixRecord> fixes, const std::filesystem::path& path);
/// Read-back fixes carry position, clock, gdop and the converged flag; the
/// satellite list is not stored.
std::vector<FixRecord> read_fixes_csv(const std::filesystem::path& path);

/// Worker count: hardware concurrency, capped by PCNET_THREADS when set.
int thread_budget();

/// Entry point of the `pcnet` tool. Returns the process exit code; failures
/// print one `error: <Code>: <message>` line to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pcnet
