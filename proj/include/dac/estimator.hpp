#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dac/cnn.hpp"
#include "dac/models.hpp"
#include "dac/spatial.hpp"

namespace dac {

/// Equally spaced Cartesian grid of training parameters around a center.
struct TrainingGridSpec {
  ParamVector center;
  std::array<double, kParamDim> halfwidth{0.5, 0.5};
  std::size_t t1 = 2;  // points along coordinate 1
  std::size_t t2 = 2;  // points along coordinate 2
};

/// T1 * T2 points with coordinate 1 varying fastest.
[[nodiscard]] std::vector<ParamVector> make_training_grid(const TrainingGridSpec& spec);

/// Per-coordinate min/range standardization of parameter targets.
struct OutputScaler {
  std::array<double, kParamDim> min{0.0, 0.0};
  std::array<double, kParamDim> range{1.0, 1.0};
  ModelTag model = ModelTag::gaussian;

  [[nodiscard]] static OutputScaler fit(std::span<const ParamVector> targets);
  [[nodiscard]] std::array<double, kParamDim> standardize(const ParamVector& theta) const;
  [[nodiscard]] ParamVector unstandardize(std::span<const double> z) const;
};

/// Transformed input images plus their raw targets and the scaler used for them.
struct Dataset {
  ModelTag model = ModelTag::gaussian;
  InputTransform transform = InputTransform::signed_log;
  std::size_t nx = 0;
  std::size_t ny = 0;
  nn::Mat inputs;                    // n x (nx*ny), already transformed
  std::vector<ParamVector> targets;  // estimation scale
  OutputScaler scaler;

  [[nodiscard]] std::size_t size() const noexcept { return targets.size(); }
  [[nodiscard]] nn::Mat standardized_targets() const;
};

/// Simulates one field per theta (sample t uses stream.child(t)), applies the
/// model's input transform and attaches `scaler`, or one fitted to thetas.
[[nodiscard]] Dataset generate_training_set(ModelTag model, std::span<const ParamVector> thetas,
                                            const GridDomain& domain, const Stream& stream,
                                            std::optional<OutputScaler> scaler = std::nullopt,
                                            std::size_t workers = 0);

/// Binary dataset cache ("DACT" magic, little-endian, binary64 payload).
void write_dataset(const Dataset& data, const std::filesystem::path& path);
[[nodiscard]] Dataset read_dataset(const std::filesystem::path& path);

struct TrainingConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 200;
  int max_epochs = 300;
  int patience = 50;
};

struct TrainingReport {
  double final_train_loss = 0.0;
  double best_val_loss = 0.0;
  int epochs_run = 0;
  int best_epoch = 0;
  std::uint64_t seed = 0;
  std::vector<double> train_loss;  // per epoch, mean over batches
  std::vector<double> val_loss;
};

/// Network weights plus everything needed to map a raw field to theta-hat.
struct TrainedNetwork {
  nn::ConvNet net;
  InputTransform transform = InputTransform::signed_log;
  OutputScaler scaler;
  TrainingReport report;

  [[nodiscard]] ModelTag model() const noexcept { return scaler.model; }
  [[nodiscard]] std::size_t input_nx() const { return net.layers().front().shape.in_w; }
  [[nodiscard]] std::size_t input_ny() const { return net.layers().front().shape.in_h; }
};

/*!
 * Mini-batch Adam on MSE with early stopping on validation loss; the best
 * validation checkpoint is restored. Batches are reshuffled every epoch from
 * a stream derived from `seed`, so results depend only on data and seed.
 * Throws TrainingError if a loss becomes non-finite.
 */
[[nodiscard]] TrainedNetwork train_cnn(const Dataset& train, const Dataset& val,
                                       const nn::ArchitectureSpec& arch,
                                       const TrainingConfig& config, std::uint64_t seed);

/// Trains one candidate per seed (in parallel across workers).
[[nodiscard]] std::vector<TrainedNetwork> train_candidates(const Dataset& train, const Dataset& val,
                                                           const nn::ArchitectureSpec& arch,
                                                           const TrainingConfig& config,
                                                           std::span<const std::uint64_t> seeds,
                                                           std::size_t workers = 0);

[[nodiscard]] ParamVector predict(const TrainedNetwork& net, const Field& field);
[[nodiscard]] std::vector<ParamVector> predict_batch(const TrainedNetwork& net,
                                                     std::span<const Field> fields);
/// Predictions for already-transformed inputs (rows of a dataset).
[[nodiscard]] std::vector<ParamVector> predict_inputs(const TrainedNetwork& net, const nn::Mat& inputs);

/// Mean of (prediction - target) per coordinate on the estimation scale.
[[nodiscard]] std::array<double, kParamDim> avg_validation_bias(const TrainedNetwork& net,
                                                                const Dataset& val);

enum class SelectionCriterion { min_val_loss, min_abs_avb };

/// argmin under the criterion, ties to the lowest seed. min_abs_avb ranks by
/// the sum of absolute per-coordinate AVB.
[[nodiscard]] const TrainedNetwork& select_network(std::span<const TrainedNetwork> candidates,
                                                   SelectionCriterion criterion, const Dataset& val);

/// Everything needed to simulate data, train candidates and pick one.
struct NetworkPlan {
  ModelTag model = ModelTag::gaussian;
  std::size_t block_nx = 20;
  std::size_t block_ny = 20;
  double spacing = 1.0;
  TrainingGridSpec train_grid;
  std::size_t val_t1 = 16;  // validation grid shares center and halfwidth
  std::size_t val_t2 = 16;
  nn::ArchitectureSpec arch;
  TrainingConfig training;
  std::size_t seeds = 1;
  SelectionCriterion selection = SelectionCriterion::min_val_loss;
  std::uint64_t master_seed = 1;
  std::size_t workers = 0;
  std::filesystem::path cache_dir;  // empty: no dataset cache
};

struct SelectedNetwork {
  TrainedNetwork net;
  std::vector<TrainingReport> candidates;
  double train_seconds = 0.0;
};

/// Training data from substream (1, 0), validation from (1, 1), candidate s
/// trained with seed substream_seed(master, 2, s).
[[nodiscard]] SelectedNetwork train_and_select(const NetworkPlan& plan);

[[nodiscard]] SelectionCriterion parse_selection(std::string_view name);

/*!
 * DACN v1 network file, little-endian:
 *   "DACN" | u32 version = 1 | u32 layer count
 *   per layer: u8 kind, then u32 dims
 *     conv2d_leaky: in_h in_w in_c filters kernel
 *     maxpool2d:    in_h in_w channels pool
 *     dense_*:      inputs units
 *   u8 input transform | 2q f64 scaler (q mins, then q ranges)
 *   per weighted layer: weights (fan_in x units, row-major) then bias, f64
 * The model is implied by the input transform (signed-log: Gaussian, log: Brown-Resnick).
 */
void write_network(const TrainedNetwork& net, const std::filesystem::path& path);
[[nodiscard]] TrainedNetwork read_network(const std::filesystem::path& path);

}  // namespace dac
