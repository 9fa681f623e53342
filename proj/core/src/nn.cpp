#include "rulsurv/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "rulsurv/error.hpp"
#include "rulsurv/text.hpp"

namespace rulsurv::nn {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
constexpr std::size_t kMaxCheckedParams = 5000;

}  // namespace

void MlpSpec::validate() const {
  if (input_dim == 0) throw Error(ErrorCode::InvalidArgument, "network input_dim must be positive");
  if (output_dim == 0) throw Error(ErrorCode::InvalidArgument, "network output_dim must be positive");
  for (std::size_t w : hidden) {
    if (w == 0) throw Error(ErrorCode::InvalidArgument, "hidden layer widths must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::InvalidArgument, "dropout must lie in [0,1)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive");
  if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch_size must be positive");
  if (patience == 0) throw Error(ErrorCode::InvalidArgument, "patience must be at least 1");
  if (!(l2_penalty >= 0.0)) throw Error(ErrorCode::InvalidArgument, "l2_penalty must be non-negative");
}

// ---------------------------------------------------------------------------
// Network

Network::Network(const MlpSpec& spec, std::uint64_t init_seed) : spec_(spec) {
  spec_.validate();
  std::size_t offset = 0;
  std::size_t in = spec_.input_dim;
  for (std::size_t width : spec_.hidden) {
    Hidden h;
    h.in = in;
    h.out = width;
    h.w = offset;
    offset += in * width;
    h.b = offset;
    offset += width;
    if (spec_.batch_norm) {
      h.gamma = offset;
      offset += width;
      h.beta = offset;
      offset += width;
      h.running_mean = Vector::Zero(static_cast<Eigen::Index>(width));
      h.running_var = Vector::Ones(static_cast<Eigen::Index>(width));
    }
    hidden_.push_back(std::move(h));
    in = width;
  }
  out_in_ = in;
  out_w_ = offset;
  offset += in * spec_.output_dim;
  out_b_ = offset;
  offset += spec_.output_dim;

  params_ = Vector::Zero(static_cast<Eigen::Index>(offset));
  Rng rng(init_seed);
  const auto init_linear = [&](std::size_t w, std::size_t b, std::size_t fan_in, std::size_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) params_[static_cast<Eigen::Index>(w + i)] = rng.uniform(-bound, bound);
    for (std::size_t i = 0; i < fan_out; ++i) params_[static_cast<Eigen::Index>(b + i)] = rng.uniform(-bound, bound);
  };
  for (const auto& h : hidden_) {
    init_linear(h.w, h.b, h.in, h.out);
    if (spec_.batch_norm) params_.segment(static_cast<Eigen::Index>(h.gamma), static_cast<Eigen::Index>(h.out)).setOnes();
  }
  init_linear(out_w_, out_b_, out_in_, spec_.output_dim);
}

Eigen::Map<const Matrix> Network::weight(std::size_t offset, std::size_t in, std::size_t out) const {
  return {params_.data() + offset, static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out)};
}

void Network::set_parameters(const Vector& params) {
  if (params.size() != params_.size()) throw Error(ErrorCode::ShapeMismatch, "parameter vector has wrong length");
  params_ = params;
}

Vector Network::weight_mask() const {
  Vector mask = Vector::Zero(params_.size());
  for (const auto& v : linear_layers()) {
    mask.segment(static_cast<Eigen::Index>(v.weight_offset), static_cast<Eigen::Index>(v.in * v.out)).setOnes();
  }
  return mask;
}

std::vector<Network::LinearView> Network::linear_layers() const {
  std::vector<LinearView> out;
  for (const auto& h : hidden_) out.push_back({h.w, h.b, h.in, h.out});
  out.push_back({out_w_, out_b_, out_in_, spec_.output_dim});
  return out;
}

void Network::zero_output_layer() {
  params_.segment(static_cast<Eigen::Index>(out_w_), static_cast<Eigen::Index>(out_in_ * spec_.output_dim + spec_.output_dim))
      .setZero();
}

Matrix Network::forward(const Matrix& x, Rng* rng) {
  const bool train = mode_ == Mode::Train;
  if (train && spec_.dropout > 0.0 && !hidden_.empty() && rng == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "train-mode forward with dropout needs a random stream");
  }
  return run(x, train, rng, false, true);
}

Matrix Network::forward_fixed(const Matrix& x) { return run(x, true, nullptr, true, false); }

Matrix Network::infer(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != spec_.input_dim) {
    throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(x.cols()) + " columns, network expects " +
                                              std::to_string(spec_.input_dim));
  }
  Matrix h = x;
  for (const Hidden& layer : hidden_) {
    const auto b = params_.segment(static_cast<Eigen::Index>(layer.b), static_cast<Eigen::Index>(layer.out));
    Matrix a = ((h * weight(layer.w, layer.in, layer.out)).rowwise() + b.transpose()).cwiseMax(0.0);
    if (spec_.batch_norm) {
      const auto gamma = params_.segment(static_cast<Eigen::Index>(layer.gamma), static_cast<Eigen::Index>(layer.out));
      const auto beta = params_.segment(static_cast<Eigen::Index>(layer.beta), static_cast<Eigen::Index>(layer.out));
      const Vector inv_std = (layer.running_var.array() + kBnEps).rsqrt().matrix();
      const Matrix xhat = (a.rowwise() - layer.running_mean.transpose()) * inv_std.asDiagonal();
      a = (xhat * gamma.asDiagonal()).rowwise() + beta.transpose();
    }
    h = std::move(a);
  }
  const auto b = params_.segment(static_cast<Eigen::Index>(out_b_), static_cast<Eigen::Index>(spec_.output_dim));
  return (h * weight(out_w_, out_in_, spec_.output_dim)).rowwise() + b.transpose();
}

Matrix Network::run(const Matrix& x, bool train, Rng* rng, bool reuse_masks, bool update_stats) {
  if (static_cast<std::size_t>(x.cols()) != spec_.input_dim) {
    throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(x.cols()) + " columns, network expects " +
                                              std::to_string(spec_.input_dim));
  }
  const Eigen::Index n = x.rows();
  if (tape_.size() != hidden_.size()) tape_.assign(hidden_.size(), Tape{});
  Matrix h = x;
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    Hidden& layer = hidden_[l];
    Tape& t = tape_[l];
    const auto w = weight(layer.w, layer.in, layer.out);
    const auto b = params_.segment(static_cast<Eigen::Index>(layer.b), static_cast<Eigen::Index>(layer.out));
    t.input = h;
    t.pre = (h * w).rowwise() + b.transpose();
    Matrix a = t.pre.cwiseMax(0.0);
    if (spec_.batch_norm) {
      const auto gamma = params_.segment(static_cast<Eigen::Index>(layer.gamma), static_cast<Eigen::Index>(layer.out));
      const auto beta = params_.segment(static_cast<Eigen::Index>(layer.beta), static_cast<Eigen::Index>(layer.out));
      if (train) {
        const Vector mean = a.colwise().mean().transpose();
        const Matrix centered = a.rowwise() - mean.transpose();
        const Vector var = centered.colwise().squaredNorm().transpose() / static_cast<double>(n);
        t.inv_std = (var.array() + kBnEps).rsqrt().matrix();
        t.xhat = centered * t.inv_std.asDiagonal();
        t.batch_stats = true;
        if (update_stats) {
          const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
          layer.running_mean = kBnMomentum * layer.running_mean + (1.0 - kBnMomentum) * mean;
          layer.running_var = kBnMomentum * layer.running_var + (1.0 - kBnMomentum) * unbias * var;
        }
      } else {
        t.inv_std = (layer.running_var.array() + kBnEps).rsqrt().matrix();
        t.xhat = (a.rowwise() - layer.running_mean.transpose()) * t.inv_std.asDiagonal();
        t.batch_stats = false;
      }
      a = (t.xhat * gamma.asDiagonal()).rowwise() + beta.transpose();
    }
    if (train && spec_.dropout > 0.0) {
      if (reuse_masks) {
        if (t.mask.rows() != a.rows() || t.mask.cols() != a.cols()) {
          throw Error(ErrorCode::ShapeMismatch, "fixed dropout mask does not match the batch");
        }
      } else {
        const double keep_scale = 1.0 / (1.0 - spec_.dropout);
        t.mask.resize(a.rows(), a.cols());
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
          for (Eigen::Index r = 0; r < a.rows(); ++r) t.mask(r, c) = rng->uniform() >= spec_.dropout ? keep_scale : 0.0;
        }
      }
      a = a.cwiseProduct(t.mask);
    } else {
      t.mask.resize(0, 0);
    }
    h = std::move(a);
  }
  out_input_ = h;
  const auto w = weight(out_w_, out_in_, spec_.output_dim);
  const auto b = params_.segment(static_cast<Eigen::Index>(out_b_), static_cast<Eigen::Index>(spec_.output_dim));
  return (h * w).rowwise() + b.transpose();
}

std::vector<bool> Network::relu_pattern() const {
  std::vector<bool> out;
  for (const Tape& t : tape_) {
    for (Eigen::Index i = 0; i < t.pre.size(); ++i) out.push_back(t.pre.data()[i] > 0.0);
  }
  return out;
}

Vector Network::backward(const Matrix& grad_output) const {
  if (grad_output.rows() != out_input_.rows() || static_cast<std::size_t>(grad_output.cols()) != spec_.output_dim) {
    throw Error(ErrorCode::ShapeMismatch, "output gradient does not match the last forward pass");
  }
  Vector grad = Vector::Zero(params_.size());
  const auto seg = [&grad](std::size_t off, std::size_t len) {
    return grad.segment(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(len));
  };
  const auto wmap = [&grad](std::size_t off, std::size_t in, std::size_t out) {
    return Eigen::Map<Matrix>(grad.data() + off, static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
  };

  wmap(out_w_, out_in_, spec_.output_dim) = out_input_.transpose() * grad_output;
  seg(out_b_, spec_.output_dim) = grad_output.colwise().sum().transpose();
  Matrix dh = grad_output * weight(out_w_, out_in_, spec_.output_dim).transpose();

  for (std::size_t l = hidden_.size(); l-- > 0;) {
    const Hidden& layer = hidden_[l];
    const Tape& t = tape_[l];
    if (t.mask.size() > 0) dh = dh.cwiseProduct(t.mask);
    Matrix da;
    if (spec_.batch_norm) {
      const auto gamma = params_.segment(static_cast<Eigen::Index>(layer.gamma), static_cast<Eigen::Index>(layer.out));
      seg(layer.gamma, layer.out) = dh.cwiseProduct(t.xhat).colwise().sum().transpose();
      seg(layer.beta, layer.out) = dh.colwise().sum().transpose();
      const Matrix dxhat = dh * gamma.asDiagonal();
      if (t.batch_stats) {
        const double n = static_cast<double>(dxhat.rows());
        const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
        const Eigen::RowVectorXd sum_dx = dxhat.cwiseProduct(t.xhat).colwise().sum();
        Matrix inner = (n * dxhat).rowwise() - sum_d;
        inner -= t.xhat * sum_dx.asDiagonal();
        da = inner * (t.inv_std / n).asDiagonal();
      } else {
        da = dxhat * t.inv_std.asDiagonal();
      }
    } else {
      da = std::move(dh);
    }
    const Matrix dz = da.cwiseProduct((t.pre.array() > 0.0).cast<double>().matrix());
    wmap(layer.w, layer.in, layer.out) = t.input.transpose() * dz;
    seg(layer.b, layer.out) = dz.colwise().sum().transpose();
    dh = dz * weight(layer.w, layer.in, layer.out).transpose();
  }
  return grad;
}

void Network::save(std::ostream& os) const {
  os << "rulsurv-net 1\n";
  os << "spec " << spec_.input_dim << ' ' << spec_.output_dim << ' ' << (spec_.batch_norm ? 1 : 0) << ' '
     << format_double(spec_.dropout) << ' ' << spec_.hidden.size();
  for (std::size_t w : spec_.hidden) os << ' ' << w;
  os << '\n';
  os << "params " << params_.size() << '\n';
  for (Eigen::Index i = 0; i < params_.size(); ++i) os << format_double(params_[i]) << (i + 1 == params_.size() ? "" : " ");
  os << '\n';
  for (const auto& h : hidden_) {
    if (!spec_.batch_norm) break;
    os << "running";
    for (Eigen::Index i = 0; i < h.running_mean.size(); ++i) os << ' ' << format_double(h.running_mean[i]);
    for (Eigen::Index i = 0; i < h.running_var.size(); ++i) os << ' ' << format_double(h.running_var[i]);
    os << '\n';
  }
}

namespace {

std::string next_token(std::istream& is) {
  std::string tok;
  if (!(is >> tok)) throw Error(ErrorCode::FormatError, "truncated network blob");
  return tok;
}

double next_double(std::istream& is) {
  const auto v = parse_double(next_token(is));
  if (!v) throw Error(ErrorCode::FormatError, "bad number in network blob");
  return *v;
}

std::size_t next_size(std::istream& is) {
  const auto v = parse_int(next_token(is));
  if (!v || *v < 0) throw Error(ErrorCode::FormatError, "bad integer in network blob");
  return static_cast<std::size_t>(*v);
}

void expect(std::istream& is, const char* word) {
  if (next_token(is) != word) throw Error(ErrorCode::FormatError, std::string("network blob: expected '") + word + "'");
}

}  // namespace

Network Network::load(std::istream& is) {
  expect(is, "rulsurv-net");
  if (next_size(is) != 1) throw Error(ErrorCode::FormatError, "unsupported network blob version");
  expect(is, "spec");
  MlpSpec spec;
  spec.input_dim = next_size(is);
  spec.output_dim = next_size(is);
  spec.batch_norm = next_size(is) == 1;
  spec.dropout = next_double(is);
  spec.hidden.resize(next_size(is));
  for (auto& w : spec.hidden) w = next_size(is);
  Network net(spec, 0);
  expect(is, "params");
  if (next_size(is) != net.parameter_count()) throw Error(ErrorCode::FormatError, "parameter count mismatch");
  for (Eigen::Index i = 0; i < net.params_.size(); ++i) net.params_[i] = next_double(is);
  if (spec.batch_norm) {
    for (auto& h : net.hidden_) {
      expect(is, "running");
      for (Eigen::Index i = 0; i < h.running_mean.size(); ++i) h.running_mean[i] = next_double(is);
      for (Eigen::Index i = 0; i < h.running_var.size(); ++i) h.running_var[i] = next_double(is);
    }
  }
  return net;
}

bool operator==(const Network& a, const Network& b) {
  if (a.spec_.input_dim != b.spec_.input_dim || a.spec_.output_dim != b.spec_.output_dim ||
      a.spec_.hidden != b.spec_.hidden || a.spec_.batch_norm != b.spec_.batch_norm ||
      a.spec_.dropout != b.spec_.dropout || a.params_ != b.params_ || a.hidden_.size() != b.hidden_.size()) {
    return false;
  }
  for (std::size_t l = 0; l < a.hidden_.size(); ++l) {
    if (a.hidden_[l].running_mean != b.hidden_[l].running_mean || a.hidden_[l].running_var != b.hidden_[l].running_var) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::size_t n, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps),
      m_(Vector::Zero(static_cast<Eigen::Index>(n))), v_(Vector::Zero(static_cast<Eigen::Index>(n))) {}

void Adam::step(Vector& params, const Vector& grad) {
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

// ---------------------------------------------------------------------------
// training

namespace {

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

std::optional<double> evaluate_loss(Network& net, const Objective& objective, std::span<const std::size_t> batch) {
  net.set_mode(Mode::Eval);
  const Matrix out = net.forward(objective.inputs(batch));
  return objective.evaluate(batch, out, nullptr);
}

FitResult fit(const MlpSpec& spec, const TrainConfig& config, const Objective& train, const Objective* val,
              const ParameterPenalty& penalty) {
  return fit(Network(spec, derive_seed(config.seed, 1)), config, train, val, penalty);
}

FitResult fit(Network initial, const TrainConfig& config, const Objective& train, const Objective* val,
              const ParameterPenalty& penalty) {
  config.validate();
  if (train.size() == 0) throw Error(ErrorCode::InvalidArgument, "training objective has no records");
  Network net = std::move(initial);
  Rng rng(derive_seed(config.seed, 2));
  Adam adam(net.parameter_count(), config.learning_rate);
  const Vector l2_mask = config.l2_penalty > 0.0 ? net.weight_mask() : Vector();

  std::vector<std::size_t> order = all_indices(train.size());
  const std::vector<std::size_t> train_all = order;
  const std::vector<std::size_t> val_all = val ? all_indices(val->size()) : std::vector<std::size_t>{};

  FitResult result;
  double best = std::numeric_limits<double>::infinity();
  Network best_net = net;
  std::size_t bad_epochs = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    net.set_mode(Mode::Train);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const Matrix out = net.forward(train.inputs(batch), &rng);
      Matrix g = Matrix::Zero(out.rows(), out.cols());
      auto loss = train.evaluate(batch, out, &g);
      if (!loss) continue;
      Vector grad = net.backward(g);
      double total = *loss;
      if (config.l2_penalty > 0.0) {
        const Vector w = net.parameters().cwiseProduct(l2_mask);
        total += config.l2_penalty * w.squaredNorm();
        grad += 2.0 * config.l2_penalty * w;
      }
      if (penalty) total += penalty(net.parameters(), &grad);
      if (!std::isfinite(total) || !grad.allFinite()) {
        throw Error(ErrorCode::NonFiniteLoss, "non-finite loss or gradient at epoch " + std::to_string(epoch) +
                                                  ", batch starting at " + std::to_string(start));
      }
      Vector p = net.parameters();
      adam.step(p, grad);
      net.set_parameters(p);
      loss_sum += total;
      ++steps;
    }
    const double epoch_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
    result.train_loss.push_back(epoch_loss);

    std::optional<double> monitored;
    if (val) monitored = evaluate_loss(net, *val, val_all);
    if (!monitored) monitored = evaluate_loss(net, train, train_all);
    if (monitored && penalty) *monitored += penalty(net.parameters(), nullptr);
    if (!monitored) monitored = epoch_loss;
    if (!std::isfinite(*monitored)) {
      throw Error(ErrorCode::NonFiniteLoss, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.val_loss.push_back(*monitored);
    result.epochs_run = epoch;
    if (*monitored < best) {
      best = *monitored;
      best_net = net;
      result.best_epoch = epoch;
      bad_epochs = 0;
    } else if (++bad_epochs >= config.patience) {
      break;
    }
  }
  best_net.set_mode(Mode::Eval);
  result.network = std::move(best_net);
  return result;
}

double grad_check(Network net, const Objective& objective, std::span<const std::size_t> batch, double epsilon,
                  CheckMode mode, std::uint64_t seed, const ParameterPenalty& penalty) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) throw Error(ErrorCode::InvalidArgument, "epsilon must lie in (0, 1e-2]");
  Rng rng(seed);
  const Matrix x = objective.inputs(batch);
  if (mode == CheckMode::TrainFixedMask) {
    net.set_mode(Mode::Train);
    net.forward(x, &rng);
  } else {
    net.set_mode(Mode::Eval);
  }
  const auto loss_at = [&](Vector* grad) {
    const Matrix out = mode == CheckMode::Eval ? net.forward(x) : net.forward_fixed(x);
    Matrix g = Matrix::Zero(out.rows(), out.cols());
    const auto loss = objective.evaluate(batch, out, grad ? &g : nullptr);
    if (!loss) throw Error(ErrorCode::InvalidArgument, "gradient check batch carries no signal");
    double total = *loss;
    if (grad) *grad = net.backward(g);
    if (penalty) total += penalty(net.parameters(), grad);
    return total;
  };

  Vector analytic;
  loss_at(&analytic);
  const std::vector<bool> pattern = net.relu_pattern();
  std::vector<std::size_t> which = all_indices(net.parameter_count());
  if (which.size() > kMaxCheckedParams) {
    rng.shuffle(which);
    which.resize(kMaxCheckedParams);
    std::sort(which.begin(), which.end());
  }
  const Vector base = net.parameters();
  double worst = 0.0;
  for (std::size_t i : which) {
    const auto k = static_cast<Eigen::Index>(i);
    Vector p = base;
    double h = epsilon;
    double numeric = 0.0;
    for (int shrink = 0; shrink <= 4; ++shrink, h /= 10.0) {
      p[k] = base[k] + h;
      net.set_parameters(p);
      const double up = loss_at(nullptr);
      bool smooth = net.relu_pattern() == pattern;
      p[k] = base[k] - h;
      net.set_parameters(p);
      const double down = loss_at(nullptr);
      smooth = smooth && net.relu_pattern() == pattern;
      numeric = (up - down) / (2.0 * h);
      if (smooth) break;
    }
    const double a = analytic[k];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace rulsurv::nn
