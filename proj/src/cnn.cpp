#include "dac/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dac/error.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dac::nn {

namespace {

// Upper bound on im2col scratch, in doubles.
constexpr std::size_t kPatchBudget = std::size_t{1} << 22;
// Samples per forward/backward sweep; keeps scratch buffers cache-sized.
constexpr std::size_t kMicroBatch = 32;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

bool is_dense(LayerKind k) { return k == LayerKind::dense_relu || k == LayerKind::dense_linear; }

// Builds im2col rows for samples [s0, s0 + m) of a single conv layer.
void im2col(const LayerShape& s, const double* x, std::size_t s0, std::size_t m, Mat& patches) {
  const std::size_t h = s.in_h, w = s.in_w, c = s.in_c, k = s.kernel;
  const long pad = static_cast<long>((k - 1) / 2);
  patches.setZero(static_cast<Eigen::Index>(m * h * w), static_cast<Eigen::Index>(k * k * c));
  for (std::size_t si = 0; si < m; ++si) {
    const double* img = x + (s0 + si) * h * w * c;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        double* row = patches.data() + ((si * h + y) * w + xx) * k * k * c;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(y + ky) - pad;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(xx + kx) - pad;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const double* src = img + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
            std::copy(src, src + c, row + (ky * k + kx) * c);
          }
        }
      }
    }
  }
}

// Scatter-add of patch gradients back onto the input gradient.
void col2im(const LayerShape& s, const Mat& dpatches, std::size_t s0, std::size_t m, double* dx) {
  const std::size_t h = s.in_h, w = s.in_w, c = s.in_c, k = s.kernel;
  const long pad = static_cast<long>((k - 1) / 2);
  for (std::size_t si = 0; si < m; ++si) {
    double* img = dx + (s0 + si) * h * w * c;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        const double* row = dpatches.data() + ((si * h + y) * w + xx) * k * k * c;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(y + ky) - pad;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(xx + kx) - pad;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            double* dst = img + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
            const double* src = row + (ky * k + kx) * c;
            for (std::size_t ci = 0; ci < c; ++ci) dst[ci] += src[ci];
          }
        }
      }
    }
  }
}

std::size_t chunk_samples(const LayerShape& s) {
  const std::size_t per = static_cast<std::size_t>(s.in_h) * s.in_w * s.kernel * s.kernel * s.in_c;
  return std::max<std::size_t>(1, kPatchBudget / std::max<std::size_t>(per, 1));
}

// x: n*h*w x in_c, returns pre-activation n*h*w x out_c.
Mat conv_forward(const Layer& layer, const Mat& x, std::size_t n) {
  const LayerShape& s = layer.shape;
  const std::size_t hw = static_cast<std::size_t>(s.in_h) * s.in_w;
  Mat z(static_cast<Eigen::Index>(n * hw), static_cast<Eigen::Index>(s.out_c));
  Mat patches;
  const std::size_t chunk = chunk_samples(s);
  for (std::size_t s0 = 0; s0 < n; s0 += chunk) {
    const std::size_t m = std::min(chunk, n - s0);
    im2col(s, x.data(), s0, m, patches);
    z.middleRows(static_cast<Eigen::Index>(s0 * hw), static_cast<Eigen::Index>(m * hw)).noalias() =
        patches * layer.weights;
  }
  z.rowwise() += layer.bias;
  return z;
}

void conv_backward(const Layer& layer, const Mat& x, const Mat& dz, std::size_t n, Mat& dw,
                   RowVec& db, Mat* dx) {
  const LayerShape& s = layer.shape;
  const std::size_t hw = static_cast<std::size_t>(s.in_h) * s.in_w;
  Mat patches, dpatches;
  const std::size_t chunk = chunk_samples(s);
  if (dx) dx->setZero(static_cast<Eigen::Index>(n * hw), static_cast<Eigen::Index>(s.in_c));
  for (std::size_t s0 = 0; s0 < n; s0 += chunk) {
    const std::size_t m = std::min(chunk, n - s0);
    im2col(s, x.data(), s0, m, patches);
    const auto dz_chunk =
        dz.middleRows(static_cast<Eigen::Index>(s0 * hw), static_cast<Eigen::Index>(m * hw));
    dw.noalias() += patches.transpose() * dz_chunk;
    if (dx) {
      dpatches.noalias() = dz_chunk * layer.weights.transpose();
      col2im(s, dpatches, s0, m, dx->data());
    }
  }
  db += dz.colwise().sum();
}

Mat pool_forward(const LayerShape& s, const Mat& x, std::size_t n, std::vector<Eigen::Index>* argmax) {
  const std::size_t h = s.in_h, w = s.in_w, c = s.in_c, p = s.kernel;
  const std::size_t ho = s.out_h, wo = s.out_w;
  Mat y(static_cast<Eigen::Index>(n * ho * wo), static_cast<Eigen::Index>(c));
  if (argmax) argmax->assign(static_cast<std::size_t>(y.size()), 0);
  for (std::size_t si = 0; si < n; ++si) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const std::size_t out_row = (si * ho + oy) * wo + ox;
        for (std::size_t ci = 0; ci < c; ++ci) {
          double best = -std::numeric_limits<double>::infinity();
          Eigen::Index best_at = 0;
          for (std::size_t dy = 0; dy < p; ++dy) {
            const std::size_t iy = oy * p + dy;
            if (iy >= h) break;
            for (std::size_t dxx = 0; dxx < p; ++dxx) {
              const std::size_t ix = ox * p + dxx;
              if (ix >= w) break;
              const auto flat = static_cast<Eigen::Index>(((si * h + iy) * w + ix) * c + ci);
              const double v = x.data()[flat];
              if (v > best) {
                best = v;
                best_at = flat;
              }
            }
          }
          y.data()[out_row * c + ci] = best;
          if (argmax) (*argmax)[out_row * c + ci] = best_at;
        }
      }
    }
  }
  return y;
}

void leaky_inplace(Mat& z) {
  z = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeak * v; });
}

void relu_inplace(Mat& z) { z = z.cwiseMax(0.0); }

}  // namespace

std::size_t LayerShape::fan_in() const {
  switch (kind) {
    case LayerKind::conv2d_leaky:
      return static_cast<std::size_t>(kernel) * kernel * in_c;
    case LayerKind::dense_relu:
    case LayerKind::dense_linear:
      return in_c;
    case LayerKind::maxpool2d:
      return 0;
  }
  return 0;
}

std::size_t LayerShape::weight_rows() const { return fan_in(); }

std::size_t LayerShape::weight_count() const {
  if (kind == LayerKind::maxpool2d) return 0;
  return fan_in() * out_c + out_c;
}

std::vector<LayerShape> build_layers(const ArchitectureSpec& spec) {
  if (spec.input_h == 0 || spec.input_w == 0) throw InvalidArgument("network input must be nonempty");
  if (spec.conv_filters.size() != spec.conv_kernels.size())
    throw InvalidArgument("conv filter and kernel lists differ in length");
  if (spec.pool == 0 || spec.dense_units == 0 || spec.outputs == 0)
    throw InvalidArgument("pool size, dense units and outputs must be positive");

  std::vector<LayerShape> layers;
  std::size_t h = spec.input_h, w = spec.input_w, c = 1;
  for (std::size_t i = 0; i < spec.conv_filters.size(); ++i) {
    if (spec.conv_filters[i] == 0 || spec.conv_kernels[i] == 0)
      throw InvalidArgument("conv filters and kernels must be positive");
    LayerShape conv;
    conv.kind = LayerKind::conv2d_leaky;
    conv.in_h = static_cast<std::uint32_t>(h);
    conv.in_w = static_cast<std::uint32_t>(w);
    conv.in_c = static_cast<std::uint32_t>(c);
    conv.out_h = conv.in_h;
    conv.out_w = conv.in_w;
    conv.out_c = static_cast<std::uint32_t>(spec.conv_filters[i]);
    conv.kernel = static_cast<std::uint32_t>(spec.conv_kernels[i]);
    layers.push_back(conv);
    c = spec.conv_filters[i];

    LayerShape pool;
    pool.kind = LayerKind::maxpool2d;
    pool.in_h = static_cast<std::uint32_t>(h);
    pool.in_w = static_cast<std::uint32_t>(w);
    pool.in_c = static_cast<std::uint32_t>(c);
    h = ceil_div(h, spec.pool);
    w = ceil_div(w, spec.pool);
    pool.out_h = static_cast<std::uint32_t>(h);
    pool.out_w = static_cast<std::uint32_t>(w);
    pool.out_c = static_cast<std::uint32_t>(c);
    pool.kernel = static_cast<std::uint32_t>(spec.pool);
    layers.push_back(pool);
  }
  LayerShape hidden;
  hidden.kind = LayerKind::dense_relu;
  hidden.in_c = static_cast<std::uint32_t>(h * w * c);
  hidden.out_c = static_cast<std::uint32_t>(spec.dense_units);
  layers.push_back(hidden);

  LayerShape head;
  head.kind = LayerKind::dense_linear;
  head.in_c = hidden.out_c;
  head.out_c = static_cast<std::uint32_t>(spec.outputs);
  layers.push_back(head);
  return layers;
}

ConvNet::ConvNet(std::vector<LayerShape> shapes) {
  if (shapes.empty()) throw InvalidArgument("network needs at least one layer");
  // Shape algebra: every layer must consume exactly what the previous one emits.
  std::size_t flat = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const LayerShape& s = shapes[i];
    if (s.kind == LayerKind::conv2d_leaky) {
      if (s.out_h != s.in_h || s.out_w != s.in_w || s.kernel == 0)
        throw InvalidArgument("conv layer " + std::to_string(i) + " breaks 'same' padding");
    } else if (s.kind == LayerKind::maxpool2d) {
      if (s.kernel == 0 || s.out_h != ceil_div(s.in_h, s.kernel) ||
          s.out_w != ceil_div(s.in_w, s.kernel) || s.out_c != s.in_c)
        throw InvalidArgument("pool layer " + std::to_string(i) + " has inconsistent shape");
    } else if (!is_dense(s.kind)) {
      throw InvalidArgument("unknown layer kind in layer " + std::to_string(i));
    }
    if (i == 0) {
      if (is_dense(s.kind) || s.in_c != 1)
        throw InvalidArgument("first layer must be a single-channel conv or pool layer");
    } else {
      const LayerShape& prev = shapes[i - 1];
      if (is_dense(s.kind)) {
        flat = is_dense(prev.kind) ? prev.out_c
                                   : static_cast<std::size_t>(prev.out_h) * prev.out_w * prev.out_c;
        if (s.in_c != flat)
          throw InvalidArgument("dense layer " + std::to_string(i) + " expects " +
                                std::to_string(s.in_c) + " inputs but receives " + std::to_string(flat));
      } else if (is_dense(prev.kind) || s.in_h != prev.out_h || s.in_w != prev.out_w ||
                 s.in_c != prev.out_c) {
        throw InvalidArgument("layer " + std::to_string(i) + " input does not match layer " +
                              std::to_string(i - 1) + " output");
      }
    }
  }
  if (!is_dense(shapes.back().kind)) throw InvalidArgument("last layer must be dense");

  for (const LayerShape& s : shapes) {
    Layer layer;
    layer.shape = s;
    if (s.kind != LayerKind::maxpool2d) {
      layer.weights = Mat::Zero(static_cast<Eigen::Index>(s.weight_rows()), s.out_c);
      layer.bias = RowVec::Zero(s.out_c);
    }
    layers_.push_back(std::move(layer));
  }
}

void ConvNet::initialize(Stream& stream) {
  for (Layer& layer : layers_) {
    if (layer.shape.kind == LayerKind::maxpool2d) continue;
    // Glorot uniform: fan-in plus fan-out, the receptive field counted on both sides for convs.
    double fan_out = layer.shape.out_c;
    if (layer.shape.kind == LayerKind::conv2d_leaky) fan_out *= static_cast<double>(layer.shape.kernel) * layer.shape.kernel;
    const double limit = std::sqrt(6.0 / (static_cast<double>(layer.shape.fan_in()) + fan_out));
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i)
      layer.weights.data()[i] = limit * (2.0 * stream.uniform() - 1.0);
    layer.bias.setZero();
  }
}

std::size_t ConvNet::parameter_count() const {
  std::size_t total = 0;
  for (const Layer& l : layers_) total += l.shape.weight_count();
  return total;
}

std::size_t ConvNet::input_size() const {
  const LayerShape& s = layers_.front().shape;
  return static_cast<std::size_t>(s.in_h) * s.in_w;
}

std::size_t ConvNet::output_size() const { return layers_.back().shape.out_c; }

Mat ConvNet::forward(const Mat& inputs) const {
  if (static_cast<std::size_t>(inputs.cols()) != input_size())
    throw InvalidArgument("network expects " + std::to_string(input_size()) + " inputs, got " +
                          std::to_string(inputs.cols()));
  const auto n = static_cast<std::size_t>(inputs.rows());
  Mat out(inputs.rows(), static_cast<Eigen::Index>(output_size()));
  std::vector<Mat> acts;
  for (std::size_t s0 = 0; s0 < n; s0 += kMicroBatch) {
    const std::size_t m = std::min(kMicroBatch, n - s0);
    forward_chunk(inputs.data() + s0 * input_size(), m, acts, nullptr);
    out.middleRows(static_cast<Eigen::Index>(s0), static_cast<Eigen::Index>(m)) = acts.back();
  }
  return out;
}

// acts[i] is the input of layer i; acts.back() is the prediction. Only the
// last two entries are kept when argmax is null (inference).
void ConvNet::forward_chunk(const double* x, std::size_t n, std::vector<Mat>& acts,
                            std::vector<std::vector<Eigen::Index>>* argmax) const {
  const bool keep = argmax != nullptr;
  acts.resize(keep ? layers_.size() + 1 : 2);
  acts[0] = Eigen::Map<const Mat>(x, static_cast<Eigen::Index>(n * input_size()), 1);
  if (keep) argmax->resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& layer = layers_[i];
    const std::size_t src = keep ? i : 0;
    Mat& dst = acts[keep ? i + 1 : 1];
    const Mat& a = acts[src];
    switch (layer.shape.kind) {
      case LayerKind::conv2d_leaky:
        dst = conv_forward(layer, a, n);
        leaky_inplace(dst);
        break;
      case LayerKind::maxpool2d:
        dst = pool_forward(layer.shape, a, n, keep ? &(*argmax)[i] : nullptr);
        break;
      case LayerKind::dense_relu:
      case LayerKind::dense_linear: {
        const Eigen::Map<const Mat> flat(a.data(), static_cast<Eigen::Index>(n),
                                         static_cast<Eigen::Index>(layer.shape.in_c));
        Mat z = flat * layer.weights;
        z.rowwise() += layer.bias;
        if (layer.shape.kind == LayerKind::dense_relu) relu_inplace(z);
        dst = std::move(z);
        break;
      }
    }
    if (!keep) std::swap(acts[0], acts[1]);
  }
  if (!keep) std::swap(acts[0], acts[1]);
}

Gradients ConvNet::zero_gradients() const {
  Gradients g;
  for (const Layer& l : layers_) {
    g.weights.push_back(Mat::Zero(l.weights.rows(), l.weights.cols()));
    g.bias.push_back(RowVec::Zero(l.bias.size()));
  }
  return g;
}

double ConvNet::loss_and_gradients(const Mat& inputs, const Mat& targets, Gradients& grads) const {
  const auto n = static_cast<std::size_t>(inputs.rows());
  if (static_cast<std::size_t>(inputs.cols()) != input_size())
    throw InvalidArgument("network input width mismatch");
  if (targets.rows() != inputs.rows() || static_cast<std::size_t>(targets.cols()) != output_size())
    throw InvalidArgument("target shape mismatch");
  if (grads.weights.size() != layers_.size()) grads = zero_gradients();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    grads.weights[i].setZero();
    grads.bias[i].setZero();
  }
  const double count = static_cast<double>(targets.size());
  double sse = 0.0;
  std::vector<Mat> acts;
  std::vector<std::vector<Eigen::Index>> argmax;
  for (std::size_t s0 = 0; s0 < n; s0 += kMicroBatch) {
    const std::size_t m = std::min(kMicroBatch, n - s0);
    forward_chunk(inputs.data() + s0 * input_size(), m, acts, &argmax);
    const Mat diff = acts.back() - targets.middleRows(static_cast<Eigen::Index>(s0),
                                                      static_cast<Eigen::Index>(m));
    sse += diff.squaredNorm();
    backward_chunk(m, acts, argmax, (2.0 / count) * diff, grads);
  }
  return sse / count;
}

void ConvNet::backward_chunk(std::size_t n, const std::vector<Mat>& acts,
                             const std::vector<std::vector<Eigen::Index>>& argmax, Mat g,
                             Gradients& grads) const {
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const Layer& layer = layers_[i];
    const Mat& in = acts[i];
    const Mat& out = acts[i + 1];
    switch (layer.shape.kind) {
      case LayerKind::dense_linear:
      case LayerKind::dense_relu: {
        if (layer.shape.kind == LayerKind::dense_relu)
          g = g.cwiseProduct((out.array() > 0.0).cast<double>().matrix());
        const Eigen::Map<const Mat> flat(in.data(), static_cast<Eigen::Index>(n),
                                         static_cast<Eigen::Index>(layer.shape.in_c));
        grads.weights[i].noalias() += flat.transpose() * g;
        grads.bias[i] += g.colwise().sum();
        if (i > 0) {
          Mat gin = g * layer.weights.transpose();
          // Reinterpret n x flat back to the previous layer's row layout.
          g = Eigen::Map<const Mat>(gin.data(), in.rows(), in.cols());
        }
        break;
      }
      case LayerKind::maxpool2d: {
        Mat gin = Mat::Zero(in.rows(), in.cols());
        const auto& am = argmax[i];
        for (std::size_t j = 0; j < am.size(); ++j) gin.data()[am[j]] += g.data()[j];
        g = std::move(gin);
        break;
      }
      case LayerKind::conv2d_leaky: {
        g = g.cwiseProduct(out.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeak; }));
        Mat gin;
        conv_backward(layer, in, g, n, grads.weights[i], grads.bias[i], i > 0 ? &gin : nullptr);
        if (i > 0) g = std::move(gin);
        break;
      }
    }
  }
}

Adam::Adam(const ConvNet& net, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon),
      m_(net.zero_gradients()), v_(net.zero_gradients()) {}

void Adam::step(ConvNet& net, const Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const double step = lr_ * std::sqrt(c2) / c1;
  auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].shape.kind == LayerKind::maxpool2d) continue;
    m_.weights[i] = beta1_ * m_.weights[i] + (1.0 - beta1_) * grads.weights[i];
    v_.weights[i] = beta2_ * v_.weights[i] + (1.0 - beta2_) * grads.weights[i].cwiseAbs2();
    layers[i].weights.array() -=
        step * m_.weights[i].array() / (v_.weights[i].array().sqrt() + eps_ * std::sqrt(c2));
    m_.bias[i] = beta1_ * m_.bias[i] + (1.0 - beta1_) * grads.bias[i];
    v_.bias[i] = beta2_ * v_.bias[i] + (1.0 - beta2_) * grads.bias[i].cwiseAbs2();
    layers[i].bias.array() -=
        step * m_.bias[i].array() / (v_.bias[i].array().sqrt() + eps_ * std::sqrt(c2));
  }
}

void retain_large_buffers() noexcept {
#if defined(__GLIBC__)
  // im2col buffers for a 200-sample batch exceed the dynamic mmap ceiling,
  // so each batch would map and unmap them again.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace dac::nn
