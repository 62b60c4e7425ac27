#include "dac/estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dac/binary_io.hpp"
#include "dac/error.hpp"
#include "dac/parallel.hpp"

namespace dac {

namespace {

constexpr std::uint32_t kNetworkVersion = 1;
constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::size_t kPredictChunk = 256;

ModelTag model_for_transform(InputTransform t) {
  return t == InputTransform::signed_log ? ModelTag::gaussian : ModelTag::brown_resnick;
}

double mse_on(const nn::ConvNet& net, const nn::Mat& inputs, const nn::Mat& targets) {
  double sum = 0.0;
  const Eigen::Index n = inputs.rows();
  for (Eigen::Index s0 = 0; s0 < n; s0 += static_cast<Eigen::Index>(kPredictChunk)) {
    const Eigen::Index m = std::min<Eigen::Index>(static_cast<Eigen::Index>(kPredictChunk), n - s0);
    const nn::Mat pred = net.forward(inputs.middleRows(s0, m));
    sum += (pred - targets.middleRows(s0, m)).squaredNorm();
  }
  return sum / static_cast<double>(targets.size());
}

}  // namespace

std::vector<ParamVector> make_training_grid(const TrainingGridSpec& spec) {
  if (spec.t1 < 2 || spec.t2 < 2) throw InvalidArgument("training grid needs at least 2 points per axis");
  for (double h : spec.halfwidth)
    if (!(h > 0.0)) throw InvalidArgument("training grid halfwidth must be positive");
  const std::array<std::size_t, kParamDim> counts{spec.t1, spec.t2};
  std::array<std::vector<double>, kParamDim> axes;
  for (std::size_t i = 0; i < kParamDim; ++i) {
    const double lo = spec.center[i] - spec.halfwidth[i];
    const double step = 2.0 * spec.halfwidth[i] / static_cast<double>(counts[i] - 1);
    for (std::size_t t = 0; t < counts[i]; ++t) axes[i].push_back(lo + step * static_cast<double>(t));
  }
  std::vector<ParamVector> grid;
  grid.reserve(spec.t1 * spec.t2);
  for (double b : axes[1])
    for (double a : axes[0]) grid.push_back(ParamVector{{a, b}, spec.center.model});
  return grid;
}

OutputScaler OutputScaler::fit(std::span<const ParamVector> targets) {
  if (targets.empty()) throw InvalidArgument("cannot fit a scaler to no targets");
  OutputScaler s;
  s.model = targets.front().model;
  for (std::size_t i = 0; i < kParamDim; ++i) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const ParamVector& t : targets) {
      lo = std::min(lo, t[i]);
      hi = std::max(hi, t[i]);
    }
    if (!(hi > lo)) throw InvalidArgument("training targets have zero range in coordinate " + std::to_string(i));
    s.min[i] = lo;
    s.range[i] = hi - lo;
  }
  return s;
}

std::array<double, kParamDim> OutputScaler::standardize(const ParamVector& theta) const {
  std::array<double, kParamDim> z{};
  for (std::size_t i = 0; i < kParamDim; ++i) z[i] = (theta[i] - min[i]) / range[i];
  return z;
}

ParamVector OutputScaler::unstandardize(std::span<const double> z) const {
  if (z.size() != kParamDim) throw InvalidArgument("scaler expects " + std::to_string(kParamDim) + " outputs");
  ParamVector theta;
  theta.model = model;
  for (std::size_t i = 0; i < kParamDim; ++i) theta[i] = z[i] * range[i] + min[i];
  return theta;
}

nn::Mat Dataset::standardized_targets() const {
  nn::Mat y(static_cast<Eigen::Index>(targets.size()), static_cast<Eigen::Index>(kParamDim));
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto z = scaler.standardize(targets[t]);
    for (std::size_t i = 0; i < kParamDim; ++i) y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = z[i];
  }
  return y;
}

Dataset generate_training_set(ModelTag model, std::span<const ParamVector> thetas,
                              const GridDomain& domain, const Stream& stream,
                              std::optional<OutputScaler> scaler, std::size_t workers) {
  if (thetas.empty()) throw InvalidArgument("training set needs at least one parameter value");
  Dataset data;
  data.model = model;
  data.transform = default_transform(model);
  data.nx = domain.nx();
  data.ny = domain.ny();
  data.targets.assign(thetas.begin(), thetas.end());
  data.scaler = scaler ? *scaler : OutputScaler::fit(thetas);
  const std::size_t d = domain.size();
  data.inputs.resize(static_cast<Eigen::Index>(thetas.size()), static_cast<Eigen::Index>(d));

  parallel_for(thetas.size(), workers, [&](std::size_t t) {
    Stream s = stream.child(t);
    const Field f = make_sampler_with_retry(model, domain, thetas[t]).draw(s);
    for (std::size_t j = 0; j < d; ++j)
      data.inputs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
          transform_value(data.transform, f[j]);
  });
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  io::Writer w(path);
  w.magic("DACT");
  w.u32(kDatasetVersion);
  w.u8(static_cast<std::uint8_t>(data.model));
  w.u8(static_cast<std::uint8_t>(data.transform));
  w.u32(static_cast<std::uint32_t>(data.nx));
  w.u32(static_cast<std::uint32_t>(data.ny));
  w.u64(data.size());
  w.u32(static_cast<std::uint32_t>(kParamDim));
  for (double v : data.scaler.min) w.f64(v);
  for (double v : data.scaler.range) w.f64(v);
  for (Eigen::Index i = 0; i < data.inputs.size(); ++i) w.f64(data.inputs.data()[i]);
  for (const ParamVector& t : data.targets)
    for (double v : t.values) w.f64(v);
  w.close();
}

Dataset read_dataset(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("DACT");
  if (r.u32() != kDatasetVersion) throw IoError(path.string() + ": unsupported DACT version");
  Dataset data;
  data.model = static_cast<ModelTag>(r.u8());
  data.transform = static_cast<InputTransform>(r.u8());
  data.nx = r.u32();
  data.ny = r.u32();
  const std::uint64_t n = r.u64();
  if (r.u32() != kParamDim) throw IoError(path.string() + ": parameter dimension mismatch");
  data.scaler.model = data.model;
  for (double& v : data.scaler.min) v = r.f64();
  for (double& v : data.scaler.range) v = r.f64();
  data.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(data.nx * data.ny));
  for (Eigen::Index i = 0; i < data.inputs.size(); ++i) data.inputs.data()[i] = r.f64();
  data.targets.resize(n);
  for (ParamVector& t : data.targets) {
    t.model = data.model;
    for (double& v : t.values) v = r.f64();
  }
  r.expect_end();
  return data;
}

TrainedNetwork train_cnn(const Dataset& train, const Dataset& val, const nn::ArchitectureSpec& arch,
                         const TrainingConfig& config, std::uint64_t seed) {
  if (train.size() == 0 || val.size() == 0) throw InvalidArgument("training and validation sets must be nonempty");
  if (train.nx != val.nx || train.ny != val.ny)
    throw InvalidArgument("training and validation inputs differ in shape");
  if (train.model != val.model || train.transform != val.transform)
    throw InvalidArgument("training and validation sets come from different models");
  if (config.batch_size == 0 || config.max_epochs <= 0 || config.patience <= 0)
    throw InvalidArgument("batch size, epochs and patience must be positive");

  nn::ArchitectureSpec spec = arch;
  spec.input_h = train.ny;
  spec.input_w = train.nx;
  spec.outputs = kParamDim;

  TrainedNetwork out{nn::ConvNet(spec), train.transform, train.scaler, {}};
  out.report.seed = seed;
  Stream init(substream_seed(seed, 0, 0));
  out.net.initialize(init);

  const nn::Mat y_train = train.standardized_targets();
  Dataset val_scaled = val;
  val_scaled.scaler = train.scaler;
  const nn::Mat y_val = val_scaled.standardized_targets();

  nn::Adam adam(out.net, config.learning_rate);
  nn::Gradients grads = out.net.zero_gradients();
  std::vector<nn::Layer> best_layers = out.net.layers();
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  const std::size_t n = train.size();
  const auto d = train.inputs.cols();
  std::vector<std::size_t> order(n);
  nn::Mat xb, yb;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Stream shuffle(substream_seed(seed, static_cast<std::uint64_t>(epoch), 1));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t s0 = 0; s0 < n; s0 += config.batch_size) {
      const std::size_t m = std::min(config.batch_size, n - s0);
      xb.resize(static_cast<Eigen::Index>(m), d);
      yb.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(kParamDim));
      for (std::size_t i = 0; i < m; ++i) {
        xb.row(static_cast<Eigen::Index>(i)) = train.inputs.row(static_cast<Eigen::Index>(order[s0 + i]));
        yb.row(static_cast<Eigen::Index>(i)) = y_train.row(static_cast<Eigen::Index>(order[s0 + i]));
      }
      const double loss = out.net.loss_and_gradients(xb, yb, grads);
      if (!std::isfinite(loss)) throw TrainingError("training loss became non-finite", epoch);
      adam.step(out.net, grads);
      epoch_loss += loss * static_cast<double>(m);
    }
    epoch_loss /= static_cast<double>(n);
    const double val_loss = mse_on(out.net, val.inputs, y_val);
    if (!std::isfinite(val_loss)) throw TrainingError("validation loss became non-finite", epoch);

    out.report.train_loss.push_back(epoch_loss);
    out.report.val_loss.push_back(val_loss);
    out.report.epochs_run = epoch;
    out.report.final_train_loss = epoch_loss;
    if (val_loss < best_val) {
      best_val = val_loss;
      out.report.best_epoch = epoch;
      best_layers = out.net.layers();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  out.net.layers() = std::move(best_layers);
  out.report.best_val_loss = best_val;
  return out;
}

std::vector<TrainedNetwork> train_candidates(const Dataset& train, const Dataset& val,
                                             const nn::ArchitectureSpec& arch,
                                             const TrainingConfig& config,
                                             std::span<const std::uint64_t> seeds,
                                             std::size_t workers) {
  std::vector<std::optional<TrainedNetwork>> slots(seeds.size());
  parallel_for(seeds.size(), workers,
               [&](std::size_t i) { slots[i] = train_cnn(train, val, arch, config, seeds[i]); });
  std::vector<TrainedNetwork> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::vector<ParamVector> predict_inputs(const TrainedNetwork& net, const nn::Mat& inputs) {
  std::vector<ParamVector> out;
  out.reserve(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index s0 = 0; s0 < inputs.rows(); s0 += static_cast<Eigen::Index>(kPredictChunk)) {
    const Eigen::Index m = std::min<Eigen::Index>(static_cast<Eigen::Index>(kPredictChunk), inputs.rows() - s0);
    const nn::Mat pred = net.net.forward(inputs.middleRows(s0, m));
    for (Eigen::Index i = 0; i < m; ++i)
      out.push_back(net.scaler.unstandardize(std::span<const double>(pred.row(i).data(), kParamDim)));
  }
  return out;
}

std::vector<ParamVector> predict_batch(const TrainedNetwork& net, std::span<const Field> fields) {
  const std::size_t nx = net.input_nx(), ny = net.input_ny();
  nn::Mat inputs(static_cast<Eigen::Index>(fields.size()), static_cast<Eigen::Index>(nx * ny));
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const Field& f = fields[i];
    if (f.domain().nx() != nx || f.domain().ny() != ny)
      throw InvalidArgument("field is " + std::to_string(f.domain().nx()) + "x" +
                            std::to_string(f.domain().ny()) + " but the network expects " +
                            std::to_string(nx) + "x" + std::to_string(ny));
    for (std::size_t j = 0; j < nx * ny; ++j)
      inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = transform_value(net.transform, f[j]);
  }
  return predict_inputs(net, inputs);
}

ParamVector predict(const TrainedNetwork& net, const Field& field) {
  return predict_batch(net, std::span<const Field>(&field, 1)).front();
}

std::array<double, kParamDim> avg_validation_bias(const TrainedNetwork& net, const Dataset& val) {
  if (val.size() == 0) throw InvalidArgument("validation set is empty");
  const auto pred = predict_inputs(net, val.inputs);
  std::array<double, kParamDim> bias{};
  for (std::size_t t = 0; t < pred.size(); ++t)
    for (std::size_t i = 0; i < kParamDim; ++i) bias[i] += pred[t][i] - val.targets[t][i];
  for (double& b : bias) b /= static_cast<double>(pred.size());
  return bias;
}

const TrainedNetwork& select_network(std::span<const TrainedNetwork> candidates,
                                     SelectionCriterion criterion, const Dataset& val) {
  if (candidates.empty()) throw InvalidArgument("no candidate networks to select from");
  std::vector<double> score(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (criterion == SelectionCriterion::min_val_loss) {
      score[i] = candidates[i].report.best_val_loss;
    } else {
      const auto avb = avg_validation_bias(candidates[i], val);
      score[i] = std::abs(avb[0]) + std::abs(avb[1]);
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (score[i] < score[best] ||
        (score[i] == score[best] && candidates[i].report.seed < candidates[best].report.seed))
      best = i;
  }
  return candidates[best];
}

SelectionCriterion parse_selection(std::string_view name) {
  if (name == "val-loss" || name == "min-val-loss") return SelectionCriterion::min_val_loss;
  if (name == "avb" || name == "min-abs-avb") return SelectionCriterion::min_abs_avb;
  throw InvalidArgument("unknown selection criterion \"" + std::string(name) + "\"");
}

namespace {

std::uint64_t hash_double(std::uint64_t h, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  return mix64(h ^ bits);
}

Dataset cached_set(const NetworkPlan& plan, const std::vector<ParamVector>& thetas,
                   const GridDomain& domain, const Stream& stream,
                   std::optional<OutputScaler> scaler) {
  if (plan.cache_dir.empty())
    return generate_training_set(plan.model, thetas, domain, stream, scaler, plan.workers);
  std::uint64_t h = mix64(static_cast<std::uint64_t>(plan.model) + 0x9e37);
  h = mix64(h ^ domain.nx());
  h = mix64(h ^ domain.ny());
  h = hash_double(h, domain.spacing());
  h = mix64(h ^ stream.seed());
  for (const ParamVector& t : thetas)
    for (double v : t.values) h = hash_double(h, v);
  if (scaler)
    for (std::size_t i = 0; i < kParamDim; ++i) h = hash_double(hash_double(h, scaler->min[i]), scaler->range[i]);
  char name[64];
  std::snprintf(name, sizeof name, "%016llx.dact", static_cast<unsigned long long>(h));
  const std::filesystem::path path = plan.cache_dir / name;
  if (std::filesystem::exists(path)) return read_dataset(path);
  Dataset data = generate_training_set(plan.model, thetas, domain, stream, scaler, plan.workers);
  std::filesystem::create_directories(plan.cache_dir);
  const std::filesystem::path tmp = path.string() + ".tmp";
  write_dataset(data, tmp);
  std::filesystem::rename(tmp, path);
  return data;
}

}  // namespace

SelectedNetwork train_and_select(const NetworkPlan& plan) {
  if (plan.seeds == 0) throw InvalidArgument("need at least one training seed");
  const auto t0 = std::chrono::steady_clock::now();
  const GridDomain block = make_grid(plan.block_nx, plan.block_ny, plan.spacing);
  TrainingGridSpec grid = plan.train_grid;
  grid.center.model = plan.model;
  const auto train_thetas = make_training_grid(grid);
  grid.t1 = plan.val_t1;
  grid.t2 = plan.val_t2;
  const auto val_thetas = make_training_grid(grid);

  const Dataset train = cached_set(plan, train_thetas, block, Stream(substream_seed(plan.master_seed, 1, 0)),
                                   std::nullopt);
  const Dataset val = cached_set(plan, val_thetas, block, Stream(substream_seed(plan.master_seed, 1, 1)),
                                 train.scaler);

  std::vector<std::uint64_t> seeds(plan.seeds);
  for (std::size_t s = 0; s < plan.seeds; ++s) seeds[s] = substream_seed(plan.master_seed, 2, s);
  std::vector<TrainedNetwork> candidates =
      train_candidates(train, val, plan.arch, plan.training, seeds, plan.workers);
  const TrainedNetwork& best = select_network(candidates, plan.selection, val);

  SelectedNetwork out{best, {}, 0.0};
  for (const TrainedNetwork& c : candidates) out.candidates.push_back(c.report);
  out.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void write_network(const TrainedNetwork& net, const std::filesystem::path& path) {
  io::Writer w(path);
  w.magic("DACN");
  w.u32(kNetworkVersion);
  const auto& layers = net.net.layers();
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const nn::Layer& l : layers) {
    const nn::LayerShape& s = l.shape;
    w.u8(static_cast<std::uint8_t>(s.kind));
    switch (s.kind) {
      case nn::LayerKind::conv2d_leaky:
        for (std::uint32_t v : {s.in_h, s.in_w, s.in_c, s.out_c, s.kernel}) w.u32(v);
        break;
      case nn::LayerKind::maxpool2d:
        for (std::uint32_t v : {s.in_h, s.in_w, s.in_c, s.kernel}) w.u32(v);
        break;
      case nn::LayerKind::dense_relu:
      case nn::LayerKind::dense_linear:
        w.u32(s.in_c);
        w.u32(s.out_c);
        break;
    }
  }
  w.u8(static_cast<std::uint8_t>(net.transform));
  for (double v : net.scaler.min) w.f64(v);
  for (double v : net.scaler.range) w.f64(v);
  for (const nn::Layer& l : layers) {
    if (l.shape.kind == nn::LayerKind::maxpool2d) continue;
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) w.f64(l.weights.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) w.f64(l.bias[i]);
  }
  w.close();
}

TrainedNetwork read_network(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("DACN");
  if (r.u32() != kNetworkVersion) throw IoError(path.string() + ": unsupported DACN version");
  const std::uint32_t count = r.u32();
  if (count == 0 || count > 1024) throw IoError(path.string() + ": implausible layer count");
  std::vector<nn::LayerShape> shapes;
  for (std::uint32_t i = 0; i < count; ++i) {
    nn::LayerShape s;
    s.kind = static_cast<nn::LayerKind>(r.u8());
    switch (s.kind) {
      case nn::LayerKind::conv2d_leaky:
        s.in_h = r.u32();
        s.in_w = r.u32();
        s.in_c = r.u32();
        s.out_c = r.u32();
        s.kernel = r.u32();
        s.out_h = s.in_h;
        s.out_w = s.in_w;
        break;
      case nn::LayerKind::maxpool2d:
        s.in_h = r.u32();
        s.in_w = r.u32();
        s.in_c = r.u32();
        s.kernel = r.u32();
        if (s.kernel == 0) throw IoError(path.string() + ": zero pool size");
        s.out_h = (s.in_h + s.kernel - 1) / s.kernel;
        s.out_w = (s.in_w + s.kernel - 1) / s.kernel;
        s.out_c = s.in_c;
        break;
      case nn::LayerKind::dense_relu:
      case nn::LayerKind::dense_linear:
        s.in_c = r.u32();
        s.out_c = r.u32();
        break;
      default:
        throw IoError(path.string() + ": unknown layer kind " + std::to_string(static_cast<int>(s.kind)));
    }
    shapes.push_back(s);
  }
  const auto transform = static_cast<InputTransform>(r.u8());
  if (transform != InputTransform::signed_log && transform != InputTransform::log)
    throw IoError(path.string() + ": unknown input transform");

  TrainedNetwork net{[&] {
                       try {
                         return nn::ConvNet(shapes);
                       } catch (const InvalidArgument& e) {
                         throw IoError(path.string() + ": " + e.what());
                       }
                     }(),
                     transform, {}, {}};
  if (net.net.output_size() != kParamDim) throw IoError(path.string() + ": network output size is not 2");
  net.scaler.model = model_for_transform(transform);
  for (double& v : net.scaler.min) v = r.f64();
  for (double& v : net.scaler.range) {
    v = r.f64();
    if (!(v > 0.0)) throw IoError(path.string() + ": output scaler range must be positive");
  }
  for (nn::Layer& l : net.net.layers()) {
    if (l.shape.kind == nn::LayerKind::maxpool2d) continue;
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = r.f64();
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = r.f64();
  }
  r.expect_end();
  return net;
}

}  // namespace dac
