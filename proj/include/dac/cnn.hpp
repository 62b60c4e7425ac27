#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "dac/rng.hpp"

namespace dac::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::RowVectorXd;

/// Layer kind codes; these values are part of the DACN file format.
enum class LayerKind : std::uint8_t {
  conv2d_leaky = 1,  // 'same' zero padding, stride 1, leaky ReLU
  maxpool2d = 2,     // 'same' padding, stride = pool size
  dense_relu = 3,
  dense_linear = 4,
};

/// Geometry of one layer. Spatial layers read (in_h, in_w, in_c); dense
/// layers use in_c as the input width and out_c as the unit count.
struct LayerShape {
  LayerKind kind = LayerKind::dense_linear;
  std::uint32_t in_h = 1, in_w = 1, in_c = 1;
  std::uint32_t out_h = 1, out_w = 1, out_c = 1;
  std::uint32_t kernel = 1;  // conv kernel side or pool size

  [[nodiscard]] std::size_t fan_in() const;
  [[nodiscard]] std::size_t weight_rows() const;  // 0 for pooling
  [[nodiscard]] std::size_t weight_count() const;

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Conv stack -> dense -> linear head. Defaults are the 128/128/128 filter,
/// 10/5/3 kernel, 2x2 pool, 500-unit design.
struct ArchitectureSpec {
  std::size_t input_h = 10;
  std::size_t input_w = 10;
  std::vector<std::size_t> conv_filters{128, 128, 128};
  std::vector<std::size_t> conv_kernels{10, 5, 3};
  std::size_t pool = 2;
  std::size_t dense_units = 500;
  std::size_t outputs = 2;
};

inline constexpr double kLeak = 0.1;

/// Expands a spec into per-layer shapes and checks the shape algebra.
[[nodiscard]] std::vector<LayerShape> build_layers(const ArchitectureSpec& spec);

struct Layer {
  LayerShape shape;
  Mat weights;  // fan_in x out_c (row index (ky * k + kx) * in_c + ci for conv)
  RowVec bias;
};

struct Gradients {
  std::vector<Mat> weights;
  std::vector<RowVec> bias;
};

class ConvNet {
 public:
  explicit ConvNet(std::vector<LayerShape> shapes);
  explicit ConvNet(const ArchitectureSpec& spec) : ConvNet(build_layers(spec)) {}

  /// Glorot uniform weights, +-sqrt(6 / (fan_in + fan_out)); zero biases.
  void initialize(Stream& stream);

  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] std::size_t input_size() const;
  [[nodiscard]] std::size_t output_size() const;

  [[nodiscard]] const std::vector<Layer>& layers() const noexcept { return layers_; }
  [[nodiscard]] std::vector<Layer>& layers() noexcept { return layers_; }

  /// inputs: n x (h*w) single-channel images, row-major within each image.
  [[nodiscard]] Mat forward(const Mat& inputs) const;

  /// Mean squared error over all n*q outputs and its gradient.
  double loss_and_gradients(const Mat& inputs, const Mat& targets, Gradients& grads) const;

  [[nodiscard]] Gradients zero_gradients() const;

 private:
  void forward_chunk(const double* x, std::size_t n, std::vector<Mat>& acts,
                     std::vector<std::vector<Eigen::Index>>* argmax) const;
  void backward_chunk(std::size_t n, const std::vector<Mat>& acts,
                      const std::vector<std::vector<Eigen::Index>>& argmax, Mat g,
                      Gradients& grads) const;

  std::vector<Layer> layers_;
};

/// Adam with bias correction (defaults beta1 0.9, beta2 0.999, eps 1e-7).
class Adam {
 public:
  Adam(const ConvNet& net, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-7);

  void step(ConvNet& net, const Gradients& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  Gradients m_, v_;
};

/// Keeps large activation buffers on the heap between batches instead of
/// returning them to the OS (glibc only; a no-op elsewhere). Call once from main.
void retain_large_buffers() noexcept;

}  // namespace dac::nn
