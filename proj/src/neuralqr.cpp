#include "probts/neuralqr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace probts {

// Configuration -------------------------------------------------------------

void MlpQrConfig::validate() const {
  if (context_length < 1) throw ConfigError("mlpqr: context_length must be positive");
  if (prediction_length < 1) throw ConfigError("mlpqr: prediction_length must be positive");
  for (int c : hidden_cells) {
    if (c < 1) throw ConfigError("mlpqr: hidden cell counts must be positive");
  }
  if (quantiles.empty()) throw ConfigError("mlpqr: need at least one quantile");
  for (std::size_t i = 0; i < quantiles.size(); ++i) {
    if (!(quantiles[i] > 0 && quantiles[i] < 1)) throw ConfigError("mlpqr: quantiles must lie in (0, 1)");
    if (i > 0 && !(quantiles[i] > quantiles[i - 1])) {
      throw ConfigError("mlpqr: quantiles must be strictly ascending");
    }
  }
  if (!(instances_per_series > 0)) throw ConfigError("mlpqr: instances_per_series must be positive");
}

void TrainerConfig::validate() const {
  if (batch_size < 1 || num_batches < 1 || lr_patience_batches < 1) {
    throw ConfigError("trainer: batch_size, num_batches and lr_patience_batches must be positive");
  }
  if (!(initial_lr > 0) || !(min_lr > 0) || !(clip_gradient > 0)) {
    throw ConfigError("trainer: learning rates and clip_gradient must be positive");
  }
  if (min_lr > initial_lr) throw ConfigError("trainer: min_lr must not exceed initial_lr");
  if (!(lr_decay_factor > 0 && lr_decay_factor < 1)) throw ConfigError("trainer: lr_decay_factor must be in (0, 1)");
}

ConfigNode TrainerConfig::to_config() const {
  ConfigNode node("Trainer");
  node.set("batch_size", batch_size)
      .set("num_batches", num_batches)
      .set("initial_lr", initial_lr)
      .set("lr_decay_factor", lr_decay_factor)
      .set("lr_patience_batches", lr_patience_batches)
      .set("min_lr", min_lr)
      .set("clip_gradient", clip_gradient)
      .set("seed", static_cast<std::int64_t>(seed));
  return node;
}

TrainerConfig TrainerConfig::from_config(const ConfigNode& node) {
  if (node.type != "Trainer") throw ConfigError("expected Trainer, got " + node.type);
  TrainerConfig t;
  t.batch_size = static_cast<int>(node.at("batch_size").as_int());
  t.num_batches = static_cast<int>(node.at("num_batches").as_int());
  t.initial_lr = node.at("initial_lr").as_double();
  t.lr_decay_factor = node.at("lr_decay_factor").as_double();
  t.lr_patience_batches = static_cast<int>(node.at("lr_patience_batches").as_int());
  t.min_lr = node.at("min_lr").as_double();
  t.clip_gradient = node.at("clip_gradient").as_double();
  t.seed = static_cast<std::uint64_t>(node.at("seed").as_int());
  t.validate();
  return t;
}

// Parameters ----------------------------------------------------------------

MlpParameters MlpParameters::initialize(const MlpQrConfig& config, Rng& rng) {
  config.validate();
  MlpParameters p;
  int fan_in = config.context_length;
  std::vector<int> widths = config.hidden_cells;
  widths.push_back(config.output_size());
  for (int width : widths) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer{Eigen::MatrixXd(width, fan_in), Eigen::VectorXd(width)};
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = u(rng);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = u(rng);
    p.layers.push_back(std::move(layer));
    fan_in = width;
  }
  return p;
}

MlpParameters MlpParameters::zeros_like(const MlpParameters& other) {
  MlpParameters p;
  for (const auto& l : other.layers) {
    p.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  }
  return p;
}

std::size_t MlpParameters::num_values() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<double> MlpParameters::flatten() const {
  std::vector<double> out;
  out.reserve(num_values());
  for (const auto& l : layers) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

void MlpParameters::assign(std::span<const double> flat) {
  if (flat.size() != num_values()) throw ConfigError("parameter count mismatch");
  std::size_t k = 0;
  for (auto& l : layers) {
    std::copy_n(flat.begin() + k, l.weight.size(), l.weight.data());
    k += l.weight.size();
    std::copy_n(flat.begin() + k, l.bias.size(), l.bias.data());
    k += l.bias.size();
  }
}

bool MlpParameters::operator==(const MlpParameters& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.bias.size() != b.bias.size()) {
      return false;
    }
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

// Forward / backward --------------------------------------------------------

namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& pre, Activation act) {
  if (act == Activation::relu) return pre.cwiseMax(0.0);
  return pre.array().tanh().matrix();
}

/// Derivative of the activation expressed through its input and output.
Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post, Activation act) {
  if (act == Activation::relu) return (pre.array() > 0).cast<double>().matrix();
  return (1.0 - post.array().square()).matrix();
}

void check_input_shape(const MlpParameters& params, Eigen::Index rows) {
  if (params.layers.empty()) throw ConfigError("mlp: no layers");
  if (params.layers.front().weight.cols() != rows) {
    throw ConfigError("mlp: input has " + std::to_string(rows) + " rows, network expects " +
                      std::to_string(params.layers.front().weight.cols()));
  }
}

}  // namespace

Eigen::MatrixXd mlp_forward(const MlpParameters& params, Activation activation, const Eigen::MatrixXd& inputs) {
  check_input_shape(params, inputs.rows());
  Eigen::MatrixXd h = inputs;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    Eigen::MatrixXd pre = (l.weight * h).colwise() + l.bias;
    h = (i + 1 < params.layers.size()) ? activate(pre, activation) : std::move(pre);
  }
  return h;
}

Eigen::MatrixXd mlp_forward(const MlpParameters& params, const MlpQrConfig& config,
                            std::span<const double> past_scaled) {
  if (static_cast<int>(past_scaled.size()) != config.context_length) {
    throw ConfigError("mlp: expected " + std::to_string(config.context_length) + " inputs, got " +
                      std::to_string(past_scaled.size()));
  }
  const Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(past_scaled.data(), past_scaled.size());
  const Eigen::VectorXd out = mlp_forward(params, config.activation, x).col(0);
  const auto nq = static_cast<Eigen::Index>(config.quantiles.size());
  if (out.size() != config.prediction_length * nq) throw ConfigError("mlp: output size mismatch");
  Eigen::MatrixXd grid(config.prediction_length, nq);
  for (int k = 0; k < config.prediction_length; ++k) {
    for (Eigen::Index j = 0; j < nq; ++j) grid(k, j) = out(k * nq + j);
  }
  return grid;
}

LossAndGradient quantile_loss_gradient(const MlpParameters& params, const MlpQrConfig& config,
                                       const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
  check_input_shape(params, inputs.rows());
  const auto batch = inputs.cols();
  const auto nq = static_cast<Eigen::Index>(config.quantiles.size());
  if (targets.rows() != config.prediction_length || targets.cols() != batch) {
    throw ConfigError("mlp: target shape mismatch");
  }

  // Forward pass, keeping pre- and post-activations.
  const std::size_t n_layers = params.layers.size();
  std::vector<Eigen::MatrixXd> pre(n_layers), post(n_layers + 1);
  post[0] = inputs;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& l = params.layers[i];
    pre[i] = (l.weight * post[i]).colwise() + l.bias;
    post[i + 1] = (i + 1 < n_layers) ? activate(pre[i], config.activation) : pre[i];
  }
  const Eigen::MatrixXd& out = post[n_layers];
  if (out.rows() != config.prediction_length * nq) throw ConfigError("mlp: output size mismatch");

  const double norm = 1.0 / static_cast<double>(batch * config.prediction_length * nq);
  LossAndGradient result;
  Eigen::MatrixXd delta(out.rows(), batch);
  double loss = 0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int k = 0; k < config.prediction_length; ++k) {
      const double y = targets(k, b);
      for (Eigen::Index j = 0; j < nq; ++j) {
        const Eigen::Index r = k * nq + j;
        const double q = config.quantiles[j];
        const double yhat = out(r, b);
        loss += pinball_loss(y, yhat, q);
        delta(r, b) = (y > yhat ? -q : y < yhat ? 1 - q : 0.0) * norm;
      }
    }
  }
  result.loss = loss * norm;

  result.gradient = MlpParameters::zeros_like(params);
  for (std::size_t i = n_layers; i-- > 0;) {
    auto& g = result.gradient.layers[i];
    g.weight = delta * post[i].transpose();
    g.bias = delta.rowwise().sum();
    if (i > 0) {
      const Eigen::MatrixXd back = params.layers[i].weight.transpose() * delta;
      delta = back.cwiseProduct(activation_grad(pre[i - 1], post[i], config.activation));
    }
  }
  return result;
}

// Optimization --------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const MlpParameters& shape, double beta1, double beta2, double eps)
    : m_(MlpParameters::zeros_like(shape)),
      v_(MlpParameters::zeros_like(shape)),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

void AdamOptimizer::step(MlpParameters& params, const MlpParameters& gradient, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
    m = beta1_ * m + (1 - beta1_) * g;
    v = beta2_ * v + (1 - beta2_) * g.cwiseProduct(g);
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    update(params.layers[i].weight, gradient.layers[i].weight, m_.layers[i].weight, v_.layers[i].weight);
    update(params.layers[i].bias, gradient.layers[i].bias, m_.layers[i].bias, v_.layers[i].bias);
  }
}

double clip_global_norm(MlpParameters& gradient, double max_norm) {
  double sq = 0;
  for (const auto& l : gradient.layers) sq += l.weight.squaredNorm() + l.bias.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& l : gradient.layers) {
      l.weight *= s;
      l.bias *= s;
    }
  }
  return norm;
}

PlateauSchedule::PlateauSchedule(const TrainerConfig& config) : config_(config), lr_(config.initial_lr) {}

void PlateauSchedule::observe(double loss) {
  if (loss < best_ - 1e-6 * std::abs(best_) || !std::isfinite(best_)) {
    best_ = loss;
    since_best_ = 0;
    return;
  }
  if (++since_best_ >= config_.lr_patience_batches) {
    lr_ = std::max(lr_ * config_.lr_decay_factor, config_.min_lr);
    since_best_ = 0;
  }
}

double instance_scale(std::span<const double> past, std::span<const std::uint8_t> observed) {
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < past.size(); ++i) {
    if (i < observed.size() && !observed[i]) continue;
    sum += std::abs(past[i]);
    ++n;
  }
  return 1.0 + (n ? sum / static_cast<double>(n) : 0.0);
}

// Training loop -------------------------------------------------------------

namespace {

/// Cycles a re-openable instance source through a fixed-size shuffle buffer.
class InstanceFeed {
 public:
  InstanceFeed(const Source<TrainingInstance>& source, std::uint64_t seed, std::size_t buffer)
      : source_(source), rng_(seed), capacity_(buffer) {
    open();
  }

  TrainingInstance next() {
    while (buffer_.size() < capacity_) {
      auto item = pull();
      if (!item) break;
      buffer_.push_back(std::move(*item));
    }
    if (buffer_.empty()) throw DomainError("training: data source yields no instances");
    std::uniform_int_distribution<std::size_t> pick(0, buffer_.size() - 1);
    const std::size_t i = pick(rng_);
    TrainingInstance out = std::move(buffer_[i]);
    buffer_[i] = std::move(buffer_.back());
    buffer_.pop_back();
    return out;
  }

 private:
  void open() {
    stream_ = source_();
    yielded_this_pass_ = 0;
  }

  std::optional<TrainingInstance> pull() {
    for (int attempt = 0; attempt < 2; ++attempt) {
      if (auto item = stream_.next()) {
        ++yielded_this_pass_;
        return item;
      }
      const bool empty_pass = yielded_this_pass_ == 0;
      open();
      if (empty_pass && attempt == 0 && passes_++ > 0) return std::nullopt;
    }
    return std::nullopt;
  }

  const Source<TrainingInstance>& source_;
  Stream<TrainingInstance> stream_;
  Rng rng_;
  std::size_t capacity_;
  std::vector<TrainingInstance> buffer_;
  std::size_t yielded_this_pass_ = 0;
  int passes_ = 0;
};

}  // namespace

MlpParameters train_mlp(const MlpQrConfig& config, const TrainerConfig& trainer,
                        const Source<TrainingInstance>& source, TrainingReport* report) {
  config.validate();
  trainer.validate();
  Rng init_rng(derive_seed(trainer.seed, "init"));
  MlpParameters params = MlpParameters::initialize(config, init_rng);
  AdamOptimizer adam(params);
  PlateauSchedule schedule(trainer);
  InstanceFeed feed(source, derive_seed(trainer.seed, "shuffle"), 256);

  const int C = config.context_length;
  const int P = config.prediction_length;
  Eigen::MatrixXd inputs(C, trainer.batch_size);
  Eigen::MatrixXd targets(P, trainer.batch_size);
  for (int batch = 0; batch < trainer.num_batches; ++batch) {
    for (int b = 0; b < trainer.batch_size; ++b) {
      const auto inst = feed.next();
      if (static_cast<int>(inst.past_target.size()) != C || static_cast<int>(inst.future_target.size()) != P) {
        throw ConfigError("training: instance shape does not match the network");
      }
      const double s = instance_scale(inst.past_target, inst.past_observed);
      for (int i = 0; i < C; ++i) inputs(i, b) = inst.past_target[i] / s;
      for (int k = 0; k < P; ++k) targets(k, b) = inst.future_target[k] / s;
    }
    auto lg = quantile_loss_gradient(params, config, inputs, targets);
    if (!std::isfinite(lg.loss)) throw NumericalError("training: non-finite loss at batch " + std::to_string(batch));
    clip_global_norm(lg.gradient, trainer.clip_gradient);
    adam.step(params, lg.gradient, schedule.rate());
    if (report) {
      report->batch_losses.push_back(lg.loss);
      report->learning_rates.push_back(schedule.rate());
    }
    schedule.observe(lg.loss);
  }
  return params;
}

// Predictor -----------------------------------------------------------------

MlpQrPredictor::MlpQrPredictor(MlpQrConfig config, TrainerConfig trainer, MlpParameters params)
    : config_(std::move(config)), trainer_(trainer), params_(std::move(params)) {
  config_.validate();
  Rng rng(0);
  const auto expected = MlpParameters::initialize(config_, rng);
  if (expected.num_values() != params_.num_values() || expected.layers.size() != params_.layers.size()) {
    throw ConfigError("MlpQrPredictor: parameters do not match the configuration");
  }
}

Forecast MlpQrPredictor::predict(const TimeSeriesRecord& record, int horizon) const {
  if (horizon < 1 || horizon > config_.prediction_length) {
    throw ConfigError("mlpqr: horizon " + std::to_string(horizon) + " outside [1, " +
                      std::to_string(config_.prediction_length) + "]");
  }
  const int C = config_.context_length;
  const auto T = static_cast<int>(record.length());
  std::vector<double> past(C, 0.0);
  std::vector<std::uint8_t> observed(C, 0);
  for (int i = 0; i < C; ++i) {
    const int idx = T - C + i;
    if (idx >= 0 && record.target[idx]) {
      past[i] = *record.target[idx];
      observed[i] = 1;
    }
  }
  const double s = instance_scale(past, observed);
  for (double& x : past) x /= s;
  Eigen::MatrixXd grid = mlp_forward(params_, config_, past) * s;
  for (Eigen::Index k = 0; k < grid.rows(); ++k) {
    std::sort(grid.row(k).begin(), grid.row(k).end());
  }
  QuantileGrid q{config_.quantiles, grid.topRows(horizon)};
  return Forecast(std::move(q), add_steps(record.start, record.freq, T), record.freq, record.item_id);
}

ConfigNode MlpQrPredictor::config() const { return MlpQrEstimator(config_, trainer_).config(); }

namespace {

constexpr char kMagic[8] = {'P', 'T', 'S', 'M', 'L', 'P', '0', '1'};

void write_le(std::ostream& out, std::uint64_t bits) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t read_le(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw DatasetError("model file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return bits;
}

}  // namespace

void MlpQrPredictor::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir / "model.bin", std::ios::binary);
  if (!bin) throw DatasetError("cannot write '" + (dir / "model.bin").string() + "'");
  bin.write(kMagic, sizeof kMagic);
  const auto flat = params_.flatten();
  write_le(bin, flat.size());
  for (double x : flat) write_le(bin, std::bit_cast<std::uint64_t>(x));
  std::ofstream txt(dir / "model_config.txt");
  txt << to_text(config());
  if (!bin || !txt) throw DatasetError("failed writing model to '" + dir.string() + "'");
}

MlpQrPredictor MlpQrPredictor::load(const std::filesystem::path& dir) {
  std::ifstream txt(dir / "model_config.txt");
  if (!txt) throw DatasetError("cannot read '" + (dir / "model_config.txt").string() + "'");
  std::stringstream ss;
  ss << txt.rdbuf();
  const auto estimator = MlpQrEstimator::from_config(parse_text(ss.str()));

  std::ifstream bin(dir / "model.bin", std::ios::binary);
  if (!bin) throw DatasetError("cannot read '" + (dir / "model.bin").string() + "'");
  char magic[8];
  bin.read(magic, 8);
  if (!bin || std::memcmp(magic, kMagic, 8) != 0) throw DatasetError("model.bin: bad magic");
  const std::uint64_t n = read_le(bin);
  std::vector<double> flat(n);
  for (auto& x : flat) x = std::bit_cast<double>(read_le(bin));

  Rng rng(0);
  auto params = MlpParameters::initialize(estimator.model_config(), rng);
  params.assign(flat);
  return MlpQrPredictor(estimator.model_config(), estimator.trainer_config(), std::move(params));
}

// Estimator -----------------------------------------------------------------

MlpQrEstimator::MlpQrEstimator(MlpQrConfig config, TrainerConfig trainer)
    : config_(std::move(config)), trainer_(trainer) {
  config_.validate();
  trainer_.validate();
}

MlpQrPredictor MlpQrEstimator::train_predictor(const Source<TimeSeriesRecord>& data, TrainingReport* report) const {
  auto pass = std::make_shared<std::uint64_t>(0);
  const MlpQrConfig cfg = config_;
  const std::uint64_t seed = trainer_.seed;
  Source<TrainingInstance> instances = [data, cfg, seed, pass]() {
    auto splitter = std::make_shared<InstanceSplitter>(
        cfg.context_length, cfg.prediction_length, TrainSampling{cfg.instances_per_series},
        derive_seed(seed, "sampler/" + std::to_string((*pass)++)));
    auto stream = std::make_shared<Stream<TrainingInstance>>(splitter->apply(data()));
    // The splitter must outlive the stream that refers to it.
    return Stream<TrainingInstance>([splitter, stream] { return stream->next(); });
  };
  auto params = train_mlp(config_, trainer_, instances, report);
  return MlpQrPredictor(config_, trainer_, std::move(params));
}

std::unique_ptr<Predictor> MlpQrEstimator::train(const Source<TimeSeriesRecord>& data) const {
  return std::make_unique<MlpQrPredictor>(train_predictor(data));
}

ConfigNode MlpQrEstimator::config() const {
  ConfigNode node("MlpQrEstimator");
  node.set("context_length", config_.context_length)
      .set("prediction_length", config_.prediction_length)
      .set("hidden_cells", ConfigValue::list_of(config_.hidden_cells))
      .set("activation", config_.activation == Activation::relu ? "relu" : "tanh")
      .set("quantiles", ConfigValue::list_of(config_.quantiles))
      .set("instances_per_series", config_.instances_per_series)
      .set("trainer", trainer_.to_config());
  return node;
}

MlpQrEstimator MlpQrEstimator::from_config(const ConfigNode& node) {
  if (node.type != "MlpQrEstimator") throw ConfigError("expected MlpQrEstimator, got " + node.type);
  MlpQrConfig c;
  c.context_length = static_cast<int>(node.at("context_length").as_int());
  c.prediction_length = static_cast<int>(node.at("prediction_length").as_int());
  c.hidden_cells = node.at("hidden_cells").as_int_list();
  const auto& act = node.at("activation").as_string();
  if (act == "relu") {
    c.activation = Activation::relu;
  } else if (act == "tanh") {
    c.activation = Activation::tanh;
  } else {
    throw ConfigError("mlpqr: unknown activation '" + act + "'");
  }
  c.quantiles = node.at("quantiles").as_double_list();
  c.instances_per_series = node.at("instances_per_series").as_double();
  return MlpQrEstimator(c, TrainerConfig::from_config(node.at("trainer").as_node()));
}

}  // namespace probts
