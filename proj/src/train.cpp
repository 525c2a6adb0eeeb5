#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <thread>

#include "pcnet/csv.hpp"
#include "pcnet/error.hpp"
#include "pcnet/pinet.hpp"

namespace pcnet {

namespace {

struct Sample {
  Eigen::MatrixXd x;  // scaled rows
  Eigen::VectorXd y;
};

Eigen::VectorXd target_of(const FeatureSet& set, int output_dim) {
  const Eigen::Vector3d label = set.label->vec();
  if (output_dim == 3) return label;
  const Eigen::Vector3d up =
      -ecef_to_ned_rotation(ecef_to_geodetic(set.fix_position)).row(2).transpose();
  Eigen::VectorXd y(1);
  y[0] = up.dot(label);
  return y;
}

std::vector<Sample> make_samples(std::span<const FeatureSet> sets, const ScalerStats& scaler,
                                 int output_dim) {
  std::vector<Sample> out;
  out.reserve(sets.size());
  for (const auto& s : sets) {
    out.push_back({apply_scaler(scaler, s.rows), target_of(s, output_dim)});
  }
  return out;
}

double mean_infer_loss(const PiDnnModel& model, const std::vector<Sample>& samples) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& s : samples) total += mse_loss(infer(model, s.x), s.y);
  return total / static_cast<double>(samples.size());
}

void add_into(NetworkParams& acc, const NetworkParams& g) {
  auto a = acc.layers();
  const auto b = g.layers();
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i]->weight += b[i]->weight;
    a[i]->bias += b[i]->bias;
  }
}

void scale(NetworkParams& p, double factor) {
  for (auto* l : p.layers()) {
    l->weight *= factor;
    l->bias *= factor;
  }
}

struct SampleGrad {
  NetworkParams grads;
  double loss = 0.0;
};

SampleGrad sample_gradient(const PiDnnModel& model, const Sample& s, std::uint64_t seed,
                           int epoch, std::size_t position) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(position),
                    static_cast<std::uint32_t>(position >> 32)};
  std::mt19937_64 rng(seq);
  auto fwd = forward(model, s.x, Mode::Train, rng);
  SampleGrad out;
  out.loss = mse_loss(fwd.output, s.y);
  out.grads = backward(model, fwd.cache, mse_gradient(fwd.output, s.y));
  return out;
}

}  // namespace

TrainResult train_on(std::span<const FeatureSet> train_sets, std::span<const FeatureSet> val_sets,
                     const TrainConfig& config, const Architecture& arch) {
  if (train_sets.empty()) throw Error(ErrorCode::EmptyDataset, "train: empty training split");
  for (const auto& s : train_sets) {
    if (!s.label) throw Error(ErrorCode::NoLabels, "train: training sample without label");
    if (s.size() == 0) throw Error(ErrorCode::EmptySet, "train: sample with no rows");
  }
  for (const auto& s : val_sets) {
    if (!s.label) throw Error(ErrorCode::NoLabels, "train: validation sample without label");
  }
  if (config.batch_size < 1 || config.max_epochs < 1) {
    throw Error(ErrorCode::ConfigError, "train: batch_size and max_epochs must be positive");
  }

  Eigen::Index total_rows = 0;
  for (const auto& s : train_sets) total_rows += s.size();
  FeatureMatrix all(total_rows, kFeatureCount);
  Eigen::Index at = 0;
  for (const auto& s : train_sets) {
    all.middleRows(at, s.size()) = s.rows;
    at += s.size();
  }

  TrainResult result;
  PiDnnModel model = init_model(arch, config.seed);
  model.scaler = total_rows >= 2 ? fit_scaler(all) : ScalerStats::identity();

  const auto train_samples = make_samples(train_sets, model.scaler, arch.output_dim);
  const auto val_samples = make_samples(val_sets, model.scaler, arch.output_dim);

  AdamState adam = AdamState::for_model(model);
  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  const auto batch = static_cast<std::size_t>(config.batch_size);
  const auto threads = static_cast<std::size_t>(std::max(1, config.threads));
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  result.model = model;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<SampleGrad> per(end - start);
      auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t j = first; j < per.size(); j += stride) {
          per[j] = sample_gradient(model, train_samples[order[start + j]], config.seed, epoch,
                                   start + j);
        }
      };
      if (threads > 1 && per.size() > 1) {
        std::vector<std::jthread> pool;
        const auto n = std::min(threads, per.size());
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work, t, n);
      } else {
        work(0, 1);
      }
      // Fixed reduction order keeps results independent of the thread count.
      NetworkParams grads = std::move(per.front().grads);
      loss_sum += per.front().loss;
      for (std::size_t j = 1; j < per.size(); ++j) {
        add_into(grads, per[j].grads);
        loss_sum += per[j].loss;
      }
      scale(grads, 1.0 / static_cast<double>(per.size()));
      adam_step(model, grads, adam, config);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = loss_sum / static_cast<double>(order.size());
    rec.val_mse = mean_infer_loss(model, val_samples);
    result.history.push_back(rec);

    const double criterion = val_samples.empty() ? rec.train_mse : rec.val_mse;
    if (criterion < best) {
      best = criterion;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

TrainResult train(std::span<const FeatureSet> dataset, const TrainConfig& config,
                  const Architecture& arch) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "train: empty dataset");
  std::vector<std::string> ids;
  for (const auto& s : dataset) ids.push_back(s.trace_id);
  auto split = split_by_trace(ids, config.seed, config.train_fraction, config.val_fraction);
  std::map<std::string, Split> lookup(split.begin(), split.end());

  std::vector<FeatureSet> train_sets, val_sets;
  for (const auto& s : dataset) {
    const Split which = lookup.at(s.trace_id);
    if (which == Split::Train) train_sets.push_back(s);
    if (which == Split::Validation) val_sets.push_back(s);
  }
  auto result = train_on(train_sets, val_sets, config, arch);
  result.split = std::move(split);
  return result;
}

void write_history_csv(std::span<const EpochRecord> history, const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << "epoch,train_mse,val_mse\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << csv::format(r.train_mse) << ','
        << (std::isnan(r.val_mse) ? "" : csv::format(r.val_mse)) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace pcnet
