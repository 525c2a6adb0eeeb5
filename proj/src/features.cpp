#include "pcnet/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcnet/csv.hpp"
#include "pcnet/error.hpp"

namespace pcnet {

namespace {

constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "pr_residual_m", "los_x", "los_y", "los_z", "gdop", "elevation_deg", "cn0_dbhz"};

std::int64_t tie_pairs(std::span<const double> sorted) {
  std::int64_t pairs = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      pairs += static_cast<std::int64_t>(run * (run - 1) / 2);
      run = 1;
    }
  }
  return pairs;
}

// Merge sort that counts the inversions it removes.
std::int64_t sort_counting_swaps(std::vector<double>& v, std::vector<double>& scratch,
                                 std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = sort_counting_swaps(v, scratch, lo, mid) +
                       sort_counting_swaps(v, scratch, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      scratch[k++] = v[j++];
    } else {
      scratch[k++] = v[i++];
    }
  }
  while (i < mid) scratch[k++] = v[i++];
  while (j < hi) scratch[k++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo),
            scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

std::string_view feature_name(int column) {
  return kFeatureNames.at(static_cast<std::size_t>(column));
}

FeatureSet extract_features(const Epoch& epoch, const PositionFix& fix) {
  if (!fix.converged) {
    throw Error(ErrorCode::UnconvergedFix, "extract_features: fix did not converge");
  }
  const auto ms = usable_measurements(epoch);
  if (ms.empty()) {
    throw Error(ErrorCode::EmptySet, "extract_features: epoch has no usable measurements");
  }
  std::optional<GeodeticPosition> rx;
  FeatureSet set;
  set.time_ms = epoch.time_ms;
  set.fix_position = fix.position;
  set.rows.resize(static_cast<Eigen::Index>(ms.size()), kFeatureCount);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const auto& m = ms[i];
    const auto row = static_cast<Eigen::Index>(i);
    const Eigen::Vector3d g = los_vector(m.sat_pos, fix.position);
    double elevation = 0.0;
    if (m.elevation) {
      elevation = *m.elevation;
    } else {
      if (!rx) rx = ecef_to_geodetic(fix.position);
      elevation = elevation_azimuth(m.sat_pos, *rx).first;
    }
    set.rows(row, kPrResidual) =
        m.value - (geometric_range(fix.position, m.sat_pos) + fix.clock_bias);
    set.rows(row, kLosX) = g.x();
    set.rows(row, kLosY) = g.y();
    set.rows(row, kLosZ) = g.z();
    set.rows(row, kGdop) = fix.gdop;
    set.rows(row, kElevation) = elevation;
    set.rows(row, kCn0) = m.cn0;
    set.sat_ids.push_back(m.sat_id);
  }
  return set;
}

CorrectionLabel make_label(const PositionFix& fix, const GeodeticPosition& gt, double bound) {
  const Eigen::Vector3d d = geodetic_to_ecef(gt).vec() - fix.position.vec();
  if (!d.allFinite() || d.cwiseAbs().maxCoeff() >= bound) {
    throw Error(ErrorCode::SanityBound, "make_label: correction exceeds sanity bound");
  }
  return {d.x(), d.y(), d.z()};
}

ScalerStats ScalerStats::identity() {
  ScalerStats s;
  s.mean.fill(0.0);
  s.std.fill(1.0);
  return s;
}

ScalerStats fit_scaler(const FeatureMatrix& rows) {
  if (rows.rows() < 2) {
    throw Error(ErrorCode::DegenerateInput, "fit_scaler: need at least 2 rows");
  }
  ScalerStats s;
  const double n = static_cast<double>(rows.rows());
  for (int c = 0; c < kFeatureCount; ++c) {
    // a constant column keeps its exact value so it scales to zeros
    const bool constant = rows.col(c).minCoeff() == rows.col(c).maxCoeff();
    const double mean = constant ? rows(0, c) : rows.col(c).sum() / n;
    const double var = (rows.col(c).array() - mean).square().sum() / n;
    s.mean[static_cast<std::size_t>(c)] = mean;
    s.std[static_cast<std::size_t>(c)] = std::max(std::sqrt(var), kStdFloor);
  }
  return s;
}

FeatureMatrix apply_scaler(const ScalerStats& stats, const FeatureMatrix& rows) {
  FeatureMatrix out(rows.rows(), kFeatureCount);
  for (int c = 0; c < kFeatureCount; ++c) {
    const auto k = static_cast<std::size_t>(c);
    out.col(c) = (rows.col(c).array() - stats.mean[k]) / stats.std[k];
  }
  return out;
}

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw Error(ErrorCode::DegenerateInput, "kendall_tau: need two equal-length columns, n >= 2");
  }
  const std::size_t n = a.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return a[i] < a[j] || (a[i] == a[j] && b[i] < b[j]);
  });

  std::vector<double> sa(n), sb(n);
  for (std::size_t i = 0; i < n; ++i) {
    sa[i] = a[order[i]];
    sb[i] = b[order[i]];
  }
  const std::int64_t ties_a = tie_pairs(sa);
  std::int64_t ties_joint = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && sa[i] == sa[i - 1] && sb[i] == sb[i - 1]) {
      ++run;
    } else {
      ties_joint += static_cast<std::int64_t>(run * (run - 1) / 2);
      run = 1;
    }
  }
  std::vector<double> scratch(n);
  const std::int64_t swaps = sort_counting_swaps(sb, scratch, 0, n);
  const std::int64_t ties_b = tie_pairs(sb);

  const auto total = static_cast<std::int64_t>(n * (n - 1) / 2);
  if (ties_a == total || ties_b == total) {
    throw Error(ErrorCode::DegenerateInput, "kendall_tau: constant column");
  }
  // concordant - discordant over pairs untied in both columns
  const std::int64_t numerator = total - ties_a - ties_b + ties_joint - 2 * swaps;
  return static_cast<double>(numerator) /
         std::sqrt(static_cast<double>(total - ties_a) * static_cast<double>(total - ties_b));
}

std::vector<FeatureSet> build_dataset(const Trace& trace, const SolverConfig& config,
                                      double label_bound, ExtractionStats* stats) {
  return build_dataset(trace, solve_trace(trace, true, config), label_bound, stats);
}

std::vector<FeatureSet> build_dataset(const Trace& trace,
                                      std::span<const std::optional<PositionFix>> fixes,
                                      double label_bound, ExtractionStats* stats) {
  if (fixes.size() != trace.epochs.size()) {
    throw Error(ErrorCode::AlignmentError,
                "build_dataset: " + std::to_string(fixes.size()) + " fixes for " +
                    std::to_string(trace.epochs.size()) + " epochs of " + trace.trace_id);
  }
  ExtractionStats local;
  ExtractionStats& st = stats ? *stats : local;
  std::vector<FeatureSet> out;
  for (std::size_t k = 0; k < trace.epochs.size(); ++k) {
    ++st.epochs;
    if (!fixes[k] || !fixes[k]->converged) {
      ++st.unsolved;
      continue;
    }
    auto set = extract_features(trace.epochs[k], *fixes[k]);
    set.trace_id = trace.trace_id;
    if (trace.ground_truth) {
      try {
        set.label = make_label(*fixes[k], (*trace.ground_truth)[k].position, label_bound);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::SanityBound) throw;
        ++st.out_of_bound;
        continue;
      }
    }
    out.push_back(std::move(set));
  }
  return out;
}

void write_features_csv(std::span<const FeatureSet> sets, const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << "trace_id,time_ms,sat_id";
  for (const auto name : kFeatureNames) out << ',' << name;
  out << ",label_dx_m,label_dy_m,label_dz_m,fix_x_m,fix_y_m,fix_z_m\n";
  for (const auto& s : sets) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      out << s.trace_id << ',' << s.time_ms << ',' << s.sat_ids[static_cast<std::size_t>(i)];
      for (int c = 0; c < kFeatureCount; ++c) out << ',' << csv::format(s.rows(i, c));
      if (s.label) {
        out << ',' << csv::format(s.label->dx) << ',' << csv::format(s.label->dy) << ','
            << csv::format(s.label->dz);
      } else {
        out << ",,,";
      }
      out << ',' << csv::format(s.fix_position.x) << ',' << csv::format(s.fix_position.y) << ','
          << csv::format(s.fix_position.z) << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<FeatureSet> read_features_csv(const std::filesystem::path& path) {
  csv::Reader r(path);
  std::vector<std::string> cols = {"trace_id", "time_ms", "sat_id"};
  for (const auto name : kFeatureNames) cols.emplace_back(name);
  cols.insert(cols.end(),
              {"label_dx_m", "label_dy_m", "label_dz_m", "fix_x_m", "fix_y_m", "fix_z_m"});
  r.require(cols);

  std::vector<FeatureSet> sets;
  std::vector<std::array<double, kFeatureCount>> pending;
  auto flush = [&] {
    if (sets.empty()) return;
    auto& s = sets.back();
    s.rows.resize(static_cast<Eigen::Index>(pending.size()), kFeatureCount);
    for (std::size_t i = 0; i < pending.size(); ++i) {
      for (int c = 0; c < kFeatureCount; ++c) {
        s.rows(static_cast<Eigen::Index>(i), c) = pending[i][static_cast<std::size_t>(c)];
      }
    }
    pending.clear();
  };
  while (r.next()) {
    const std::string trace_id(r.cell("trace_id"));
    const auto time = r.integer("time_ms");
    if (sets.empty() || sets.back().trace_id != trace_id || sets.back().time_ms != time) {
      flush();
      FeatureSet s;
      s.trace_id = trace_id;
      s.time_ms = time;
      const auto dx = r.optional_number("label_dx_m");
      if (dx) s.label = CorrectionLabel{*dx, r.number("label_dy_m"), r.number("label_dz_m")};
      s.fix_position = {r.number("fix_x_m"), r.number("fix_y_m"), r.number("fix_z_m")};
      sets.push_back(std::move(s));
    }
    sets.back().sat_ids.emplace_back(r.cell("sat_id"));
    std::array<double, kFeatureCount> row{};
    for (int c = 0; c < kFeatureCount; ++c) {
      row[static_cast<std::size_t>(c)] = r.number(std::string(kFeatureNames[static_cast<std::size_t>(c)]));
    }
    pending.push_back(row);
  }
  flush();
  return sets;
}

}  // namespace pcnet
