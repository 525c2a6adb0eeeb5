#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pcnet/features.hpp"
#include "pcnet/solver.hpp"

namespace pcnet {

/// Layer widths and regularization of the set network. Encoder layer i maps
/// to encoder_widths[i]; its last layer has no activation. Decoder hidden
/// layers are followed by LeakyReLU, the output layer is linear. A dropout
/// index names the linear layer whose output is dropped before its
/// activation; -1 disables it.
struct Architecture {
  int input_dim = kFeatureCount;
  std::vector<int> encoder_widths = {32, 64, 128, 256};
  std::vector<int> decoder_widths = {128, 64, 32, 32};
  int output_dim = 3;
  int encoder_dropout_layer = 2;
  int decoder_dropout_layer = 2;
  double leaky_alpha = 0.1;
  double dropout_rate = 0.02;

  bool operator==(const Architecture&) const = default;

  /// 7 -> 4 -> 3 | sum | 3 -> 3 -> output, dropout on the first layer of each
  /// half. Small enough for exhaustive finite-difference checks.
  static Architecture reduced(int output_dim = 3);
};

struct LayerParams {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  Eigen::Index param_count() const { return weight.size() + bias.size(); }
};

/// Parameter-shaped container; also used for gradients and Adam moments.
struct NetworkParams {
  std::vector<LayerParams> encoder;
  std::vector<LayerParams> decoder;

  static NetworkParams zeros_like(const NetworkParams& p);
  /// Encoder layers followed by decoder layers.
  std::vector<LayerParams*> layers();
  std::vector<const LayerParams*> layers() const;
};

struct PiDnnModel {
  Architecture arch;
  NetworkParams params;
  ScalerStats scaler = ScalerStats::identity();
  std::uint64_t seed = 0;
};

/// Seeded uniform Kaiming (fan-in) initialization with the LeakyReLU gain.
PiDnnModel init_model(const Architecture& arch, std::uint64_t seed);

/// Copy of `arch`-shaped model with every parameter zero.
PiDnnModel zero_model(const Architecture& arch);

double leaky_relu(double x, double alpha = 0.1);
/// 1 for x > 0, alpha otherwise (including x = 0).
double leaky_relu_derivative(double x, double alpha = 0.1);

/// Column sums of `rows` by pairwise summation in row order.
Eigen::RowVectorXd sum_pool(const Eigen::MatrixXd& rows);

enum class Mode { Train, Infer };

struct ForwardCache {
  // Per layer: the layer input and the post-dropout pre-activation. Encoder
  // entries are M-row matrices, decoder entries single rows.
  std::vector<Eigen::MatrixXd> enc_inputs, enc_pre;
  std::vector<Eigen::MatrixXd> dec_inputs, dec_pre;
  std::vector<Eigen::MatrixXd> enc_masks, dec_masks;  // empty when no dropout applied
  std::vector<Eigen::Index> layer_shapes;              // fingerprint for CacheMismatch
};

struct ForwardResult {
  Eigen::VectorXd output;
  ForwardCache cache;
};

/// Runs the set network on already-scaled feature rows. Rows are put into a
/// canonical (lexicographic) order before encoding so the pooled sum, and
/// hence the output, does not depend on the input order. Dropout masks are
/// drawn from `rng` in train mode only (inverted dropout).
ForwardResult forward(const PiDnnModel& model, const Eigen::MatrixXd& features, Mode mode,
                      std::mt19937_64& rng);
Eigen::VectorXd infer(const PiDnnModel& model, const Eigen::MatrixXd& features);

/// Mean squared error over output components, with its gradient.
double mse_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& label);
Eigen::VectorXd mse_gradient(const Eigen::VectorXd& pred, const Eigen::VectorXd& label);

/// Reverse-mode gradients of a scalar loss given dLoss/dOutput.
NetworkParams backward(const PiDnnModel& model, const ForwardCache& cache,
                       const Eigen::VectorXd& loss_grad);

struct TrainConfig {
  int max_epochs = 100;
  int batch_size = 8;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double train_fraction = 0.75;
  double val_fraction = 0.10;
  int patience = 0;  // 0: no early stopping
  std::uint64_t seed = 0;
  int threads = 1;
};

struct AdamState {
  NetworkParams m;
  NetworkParams v;
  std::int64_t t = 0;

  static AdamState for_model(const PiDnnModel& model);
};

/// One bias-corrected Adam update of `model` in place.
void adam_step(PiDnnModel& model, const NetworkParams& grads, AdamState& state,
               const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;  // NaN when there is no validation split
};

struct TrainResult {
  PiDnnModel model;
  std::vector<EpochRecord> history;
  std::vector<std::pair<std::string, Split>> split;
  int best_epoch = 0;
};

/// Splits by trace, fits the scaler on training rows, then runs mini-batch
/// Adam. The returned model is the snapshot with the lowest validation MSE
/// (training MSE when there is no validation split).
TrainResult train(std::span<const FeatureSet> dataset, const TrainConfig& config,
                  const Architecture& arch = {});

/// Trains on exactly the given sets with a fixed validation list (may be empty).
TrainResult train_on(std::span<const FeatureSet> train_sets, std::span<const FeatureSet> val_sets,
                     const TrainConfig& config, const Architecture& arch = {});

Eigen::Index param_count(const PiDnnModel& model);
std::vector<Eigen::Index> layer_param_counts(const PiDnnModel& model);

/// Scaler + forward pass in infer mode. With output_dim 1 the scalar is
/// applied along the local up direction at the fix.
CorrectionLabel predict_correction(const PiDnnModel& model, const Epoch& epoch,
                                   const PositionFix& fix);
CorrectionLabel predict_correction(const PiDnnModel& model, const FeatureSet& set,
                                   const PositionFix& fix);
EcefPosition correct_position(const PositionFix& fix, const CorrectionLabel& correction);

inline constexpr std::uint16_t kModelFormatVersion = 1;

void save_model(const PiDnnModel& model, const std::filesystem::path& path);
PiDnnModel load_model(const std::filesystem::path& path);

bool bitwise_equal(const PiDnnModel& a, const PiDnnModel& b);

void write_history_csv(std::span<const EpochRecord> history, const std::filesystem::path& path);

}  // namespace pcnet
