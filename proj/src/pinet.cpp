#include "pcnet/pinet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcnet/error.hpp"

namespace pcnet {

namespace {

Eigen::MatrixXd linear(const Eigen::MatrixXd& in, const LayerParams& layer) {
  Eigen::MatrixXd out = in * layer.weight.transpose();
  out.rowwise() += layer.bias.transpose();
  return out;
}

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, double alpha) {
  return z.unaryExpr([alpha](double v) { return leaky_relu(v, alpha); });
}

Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& z, double alpha) {
  return z.unaryExpr([alpha](double v) { return leaky_relu_derivative(v, alpha); });
}

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate,
                             std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  Eigen::MatrixXd mask(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = keep(rng) ? scale : 0.0;
  }
  return mask;
}

std::vector<Eigen::Index> shapes_of(const PiDnnModel& model) {
  std::vector<Eigen::Index> shapes;
  for (const auto* l : model.params.layers()) {
    shapes.push_back(l->weight.rows());
    shapes.push_back(l->weight.cols());
  }
  return shapes;
}

Eigen::RowVectorXd pairwise_sum(const Eigen::MatrixXd& rows, Eigen::Index lo, Eigen::Index hi) {
  if (hi - lo == 1) return rows.row(lo);
  const Eigen::Index mid = lo + (hi - lo) / 2;
  return pairwise_sum(rows, lo, mid) + pairwise_sum(rows, mid, hi);
}

/// Row order of `x` sorted lexicographically.
Eigen::MatrixXd canonical_rows(const Eigen::MatrixXd& x) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&x](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (x(a, c) != x(b, c)) return x(a, c) < x(b, c);
    }
    return false;
  });
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(order[i]);
  return out;
}

}  // namespace

Architecture Architecture::reduced(int output_dim) {
  Architecture a;
  a.encoder_widths = {4, 3};
  a.decoder_widths = {3};
  a.output_dim = output_dim;
  a.encoder_dropout_layer = 0;
  a.decoder_dropout_layer = 0;
  return a;
}

NetworkParams NetworkParams::zeros_like(const NetworkParams& p) {
  NetworkParams z;
  for (const auto& l : p.encoder) {
    z.encoder.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                         Eigen::VectorXd::Zero(l.bias.size())});
  }
  for (const auto& l : p.decoder) {
    z.decoder.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                         Eigen::VectorXd::Zero(l.bias.size())});
  }
  return z;
}

std::vector<LayerParams*> NetworkParams::layers() {
  std::vector<LayerParams*> out;
  for (auto& l : encoder) out.push_back(&l);
  for (auto& l : decoder) out.push_back(&l);
  return out;
}

std::vector<const LayerParams*> NetworkParams::layers() const {
  std::vector<const LayerParams*> out;
  for (const auto& l : encoder) out.push_back(&l);
  for (const auto& l : decoder) out.push_back(&l);
  return out;
}

PiDnnModel zero_model(const Architecture& arch) {
  if (arch.encoder_widths.empty() || arch.input_dim < 1 || arch.output_dim < 1) {
    throw Error(ErrorCode::ConfigError, "architecture needs an encoder layer and positive dims");
  }
  PiDnnModel model;
  model.arch = arch;
  int in = arch.input_dim;
  for (const int w : arch.encoder_widths) {
    model.params.encoder.push_back({Eigen::MatrixXd::Zero(w, in), Eigen::VectorXd::Zero(w)});
    in = w;
  }
  std::vector<int> dec = arch.decoder_widths;
  dec.push_back(arch.output_dim);
  for (const int w : dec) {
    model.params.decoder.push_back({Eigen::MatrixXd::Zero(w, in), Eigen::VectorXd::Zero(w)});
    in = w;
  }
  return model;
}

PiDnnModel init_model(const Architecture& arch, std::uint64_t seed) {
  PiDnnModel model = zero_model(arch);
  model.seed = seed;
  std::mt19937_64 rng(seed);
  const double gain = std::sqrt(2.0 / (1.0 + arch.leaky_alpha * arch.leaky_alpha));
  for (auto* layer : model.params.layers()) {
    const double fan_in = static_cast<double>(layer->weight.cols());
    std::uniform_real_distribution<double> w(-gain * std::sqrt(3.0 / fan_in),
                                             gain * std::sqrt(3.0 / fan_in));
    std::uniform_real_distribution<double> b(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (Eigen::Index i = 0; i < layer->weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer->weight.cols(); ++j) layer->weight(i, j) = w(rng);
    }
    for (Eigen::Index i = 0; i < layer->bias.size(); ++i) layer->bias[i] = b(rng);
  }
  return model;
}

double leaky_relu(double x, double alpha) { return x > 0.0 ? x : alpha * x; }

double leaky_relu_derivative(double x, double alpha) { return x > 0.0 ? 1.0 : alpha; }

Eigen::RowVectorXd sum_pool(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) throw Error(ErrorCode::EmptySet, "sum_pool: empty set");
  return pairwise_sum(rows, 0, rows.rows());
}

ForwardResult forward(const PiDnnModel& model, const Eigen::MatrixXd& features, Mode mode,
                      std::mt19937_64& rng) {
  if (features.rows() == 0) throw Error(ErrorCode::EmptySet, "forward: empty measurement set");
  if (features.cols() != model.arch.input_dim) {
    throw Error(ErrorCode::DegenerateInput, "forward: feature width does not match the model");
  }
  const auto& arch = model.arch;
  const bool train = mode == Mode::Train && arch.dropout_rate > 0.0;
  ForwardResult res;
  auto& cache = res.cache;
  cache.layer_shapes = shapes_of(model);

  Eigen::MatrixXd a = canonical_rows(features);
  const auto& enc = model.params.encoder;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    cache.enc_inputs.push_back(a);
    Eigen::MatrixXd z = linear(a, enc[i]);
    if (train && static_cast<int>(i) == arch.encoder_dropout_layer) {
      Eigen::MatrixXd mask = dropout_mask(z.rows(), z.cols(), arch.dropout_rate, rng);
      z.array() *= mask.array();
      cache.enc_masks.push_back(std::move(mask));
    } else {
      cache.enc_masks.emplace_back();
    }
    a = i + 1 < enc.size() ? activate(z, arch.leaky_alpha) : z;
    cache.enc_pre.push_back(std::move(z));
  }

  a = sum_pool(a);
  const auto& dec = model.params.decoder;
  for (std::size_t i = 0; i < dec.size(); ++i) {
    cache.dec_inputs.push_back(a);
    Eigen::MatrixXd z = linear(a, dec[i]);
    if (train && static_cast<int>(i) == arch.decoder_dropout_layer) {
      Eigen::MatrixXd mask = dropout_mask(z.rows(), z.cols(), arch.dropout_rate, rng);
      z.array() *= mask.array();
      cache.dec_masks.push_back(std::move(mask));
    } else {
      cache.dec_masks.emplace_back();
    }
    a = i + 1 < dec.size() ? activate(z, arch.leaky_alpha) : z;
    cache.dec_pre.push_back(std::move(z));
  }
  res.output = a.row(0).transpose();
  return res;
}

Eigen::VectorXd infer(const PiDnnModel& model, const Eigen::MatrixXd& features) {
  std::mt19937_64 unused(0);
  return forward(model, features, Mode::Infer, unused).output;
}

double mse_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& label) {
  return (pred - label).squaredNorm() / static_cast<double>(pred.size());
}

Eigen::VectorXd mse_gradient(const Eigen::VectorXd& pred, const Eigen::VectorXd& label) {
  return 2.0 * (pred - label) / static_cast<double>(pred.size());
}

NetworkParams backward(const PiDnnModel& model, const ForwardCache& cache,
                       const Eigen::VectorXd& loss_grad) {
  const auto& enc = model.params.encoder;
  const auto& dec = model.params.decoder;
  if (cache.layer_shapes != shapes_of(model) || cache.enc_pre.size() != enc.size() ||
      cache.dec_pre.size() != dec.size() || loss_grad.size() != model.arch.output_dim) {
    throw Error(ErrorCode::CacheMismatch, "backward: cache does not belong to this model");
  }
  const double alpha = model.arch.leaky_alpha;
  NetworkParams grads = NetworkParams::zeros_like(model.params);

  Eigen::MatrixXd upstream = loss_grad.transpose();
  for (std::size_t k = dec.size(); k-- > 0;) {
    Eigen::MatrixXd dz = upstream;
    if (k + 1 < dec.size()) dz.array() *= activation_grad(cache.dec_pre[k], alpha).array();
    if (cache.dec_masks[k].size() > 0) dz.array() *= cache.dec_masks[k].array();
    grads.decoder[k].weight = dz.transpose() * cache.dec_inputs[k];
    grads.decoder[k].bias = dz.colwise().sum().transpose();
    upstream = dz * dec[k].weight;
  }

  // Sum pooling hands the same gradient to every set element.
  const Eigen::Index m = cache.enc_pre.back().rows();
  upstream = upstream.replicate(m, 1).eval();
  for (std::size_t k = enc.size(); k-- > 0;) {
    Eigen::MatrixXd dz = upstream;
    if (k + 1 < enc.size()) dz.array() *= activation_grad(cache.enc_pre[k], alpha).array();
    if (cache.enc_masks[k].size() > 0) dz.array() *= cache.enc_masks[k].array();
    grads.encoder[k].weight = dz.transpose() * cache.enc_inputs[k];
    grads.encoder[k].bias = dz.colwise().sum().transpose();
    if (k > 0) upstream = dz * enc[k].weight;
  }
  return grads;
}

AdamState AdamState::for_model(const PiDnnModel& model) {
  return {NetworkParams::zeros_like(model.params), NetworkParams::zeros_like(model.params), 0};
}

void adam_step(PiDnnModel& model, const NetworkParams& grads, AdamState& state,
               const TrainConfig& config) {
  state.t += 1;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  auto params = model.params.layers();
  const auto g = grads.layers();
  auto m = state.m.layers();
  auto v = state.v.layers();
  if (g.size() != params.size() || m.size() != params.size()) {
    throw Error(ErrorCode::CacheMismatch, "adam_step: gradient shape mismatch");
  }
  auto update = [&](auto& theta, const auto& grad, auto& mom, auto& vel) {
    mom = b1 * mom + (1.0 - b1) * grad;
    vel = b2 * vel + (1.0 - b2) * grad.cwiseProduct(grad);
    theta.array() -= config.learning_rate * (mom.array() / c1) /
                     ((vel.array() / c2).sqrt() + config.epsilon);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(params[i]->weight, g[i]->weight, m[i]->weight, v[i]->weight);
    update(params[i]->bias, g[i]->bias, m[i]->bias, v[i]->bias);
  }
}

Eigen::Index param_count(const PiDnnModel& model) {
  const auto counts = layer_param_counts(model);
  return std::accumulate(counts.begin(), counts.end(), Eigen::Index{0});
}

std::vector<Eigen::Index> layer_param_counts(const PiDnnModel& model) {
  std::vector<Eigen::Index> out;
  for (const auto* l : model.params.layers()) out.push_back(l->param_count());
  return out;
}

CorrectionLabel predict_correction(const PiDnnModel& model, const FeatureSet& set,
                                   const PositionFix& fix) {
  if (!fix.converged) {
    throw Error(ErrorCode::UnconvergedFix, "predict_correction: fix did not converge");
  }
  const Eigen::VectorXd out = infer(model, apply_scaler(model.scaler, set.rows));
  if (model.arch.output_dim == 3) return {out[0], out[1], out[2]};
  if (model.arch.output_dim == 1) {
    const Eigen::Vector3d up = -ecef_to_ned_rotation(ecef_to_geodetic(fix.position)).row(2);
    const Eigen::Vector3d d = out[0] * up;
    return {d.x(), d.y(), d.z()};
  }
  throw Error(ErrorCode::ConfigError, "predict_correction: output_dim must be 1 or 3");
}

CorrectionLabel predict_correction(const PiDnnModel& model, const Epoch& epoch,
                                   const PositionFix& fix) {
  return predict_correction(model, extract_features(epoch, fix), fix);
}

EcefPosition correct_position(const PositionFix& fix, const CorrectionLabel& correction) {
  return {fix.position.x + correction.dx, fix.position.y + correction.dy,
          fix.position.z + correction.dz};
}

}  // namespace pcnet
