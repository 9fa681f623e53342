#include "rulsurv/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rulsurv/error.hpp"
#include "rulsurv/losses.hpp"

namespace rulsurv {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

nn::Matrix row_matrix(std::span<const double> x) {
  nn::Matrix m(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t k = 0; k < x.size(); ++k) m(0, static_cast<Eigen::Index>(k)) = x[k];
  return m;
}

void require_events(const SurvivalDataset& train, const char* model) {
  if (train.event_count() == 0) {
    throw Error(ErrorCode::NoEvents, std::string(model) + ": training data has no events");
  }
}

void check_feature_dim(std::size_t expected, std::size_t got) {
  if (expected != got) {
    throw Error(ErrorCode::ShapeMismatch, "feature vector has dimension " + std::to_string(got) + ", model expects " +
                                              std::to_string(expected));
  }
}

void require_increasing(std::span<const double> times) {
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw Error(ErrorCode::InvalidArgument, "evaluation times must increase");
  }
}

SurvivalCurve finish_curve(std::span<const double> times, std::vector<double> values) {
  double running = 1.0;
  for (double& v : values) {
    if (std::isnan(v)) throw Error(ErrorCode::NonFiniteLoss, "model produced a NaN survival probability");
    v = std::clamp(v, 0.0, 1.0);
    running = std::min(running, v);
    v = running;
  }
  return {std::vector<double>(times.begin(), times.end()), std::move(values)};
}

double time_scale_of(const std::vector<double>& tau, double mean) {
  double acc = 0.0;
  for (double t : tau) acc += (t - mean) * (t - mean);
  const double sd = std::sqrt(acc / static_cast<double>(tau.size()));
  return sd > 0.0 ? sd : 1.0;
}

}  // namespace

double StepFunction::at(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

const char* to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::LinearCox: return "cox";
    case ModelKind::CoxPH: return "coxph";
    case ModelKind::CoxTime: return "coxtime";
    case ModelKind::DeepHit: return "deephit";
    case ModelKind::Mtlr: return "mtlr";
  }
  return "cox";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "cox" || name == "linearcox") return ModelKind::LinearCox;
  if (name == "coxph") return ModelKind::CoxPH;
  if (name == "coxtime") return ModelKind::CoxTime;
  if (name == "deephit") return ModelKind::DeepHit;
  if (name == "mtlr") return ModelKind::Mtlr;
  throw Error(ErrorCode::ConfigError, "unknown model '" + std::string(name) + "'");
}

ModelKind kind_of(const FittedModel& model) {
  return std::visit(Overloaded{
                        [](const std::monostate&) -> ModelKind {
                          throw Error(ErrorCode::UnfittedModel, "model has not been fitted");
                        },
                        [](const LinearCox&) { return ModelKind::LinearCox; },
                        [](const NeuralCoxPH&) { return ModelKind::CoxPH; },
                        [](const CoxTime&) { return ModelKind::CoxTime; },
                        [](const DeepHit&) { return ModelKind::DeepHit; },
                        [](const Mtlr&) { return ModelKind::Mtlr; },
                    },
                    model);
}

// ---------------------------------------------------------------------------
// Linear Cox

namespace {

struct CoxTerms {
  double value;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

// Penalized Breslow log partial likelihood with gradient and Hessian.
CoxTerms cox_terms(const nn::Matrix& x, const std::vector<double>& tau, const std::vector<bool>& event,
                   const std::vector<std::size_t>& desc, const Eigen::VectorXd& beta, double ridge, bool derivatives) {
  const Eigen::Index d = x.cols();
  const Eigen::VectorXd eta = x * beta;
  const double shift = eta.maxCoeff();
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(d, d);
  CoxTerms out{0.0, Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
  std::size_t i = 0;
  while (i < desc.size()) {
    const double t = tau[desc[i]];
    std::size_t j = i;
    // Absorb the whole tie group into the risk set first.
    while (j < desc.size() && tau[desc[j]] == t) {
      const auto r = static_cast<Eigen::Index>(desc[j]);
      const double w = std::exp(eta[r] - shift);
      s0 += w;
      if (derivatives) {
        s1 += w * x.row(r).transpose();
        s2 += w * x.row(r).transpose() * x.row(r);
      }
      ++j;
    }
    double events = 0.0;
    for (std::size_t m = i; m < j; ++m) {
      const auto r = static_cast<Eigen::Index>(desc[m]);
      if (!event[desc[m]]) continue;
      events += 1.0;
      out.value += eta[r];
      if (derivatives) out.grad += x.row(r).transpose();
    }
    if (events > 0.0) {
      out.value -= events * (std::log(s0) + shift);
      if (derivatives) {
        const Eigen::VectorXd mean = s1 / s0;
        out.grad -= events * mean;
        out.hess -= events * (s2 / s0 - mean * mean.transpose());
      }
    }
    i = j;
  }
  out.value -= ridge * beta.squaredNorm();
  if (derivatives) {
    out.grad -= 2.0 * ridge * beta;
    out.hess -= 2.0 * ridge * Eigen::MatrixXd::Identity(d, d);
  }
  return out;
}

}  // namespace

LinearCox fit_linear_cox(const SurvivalDataset& train, const LinearCoxOptions& options) {
  require_events(train, "cox");
  if (!(options.ridge >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ridge must be non-negative");
  const nn::Matrix x = feature_matrix(train);
  std::vector<double> tau = train.durations();
  std::vector<bool> event;
  for (const auto& r : train.records()) event.push_back(r.event);
  std::vector<std::size_t> desc(train.size());
  std::iota(desc.begin(), desc.end(), 0);
  std::stable_sort(desc.begin(), desc.end(), [&](std::size_t a, std::size_t b) { return tau[a] > tau[b]; });

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
  bool converged = false;
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    const CoxTerms terms = cox_terms(x, tau, event, desc, beta, options.ridge, true);
    if (terms.grad.norm() < options.tolerance) {
      converged = true;
      break;
    }
    const Eigen::VectorXd step = (-terms.hess).ldlt().solve(terms.grad);
    if (!step.allFinite()) throw Error(ErrorCode::NonConvergence, "cox: singular Newton system");
    // Near the optimum the ascent per step drops below the rounding error of
    // the summed log likelihood, so ties within that error are accepted.
    const double slack = 1e3 * std::numeric_limits<double>::epsilon() * (std::abs(terms.value) + 1.0);
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 60; ++halving) {
      const Eigen::VectorXd candidate = beta + scale * step;
      const double value = cox_terms(x, tau, event, desc, candidate, options.ridge, false).value;
      if (std::isfinite(value) && value >= terms.value - slack) {
        beta = candidate;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      // No representable ascent step remains; accept only if we are at the optimum to rounding.
      if (terms.grad.norm() < std::sqrt(options.tolerance)) {
        converged = true;
        break;
      }
      throw Error(ErrorCode::NonConvergence, "cox: line search failed");
    }
  }
  if (!converged) {
    const CoxTerms terms = cox_terms(x, tau, event, desc, beta, options.ridge, true);
    if (!(terms.grad.norm() < options.tolerance)) {
      throw Error(ErrorCode::NonConvergence, "cox: gradient norm " + std::to_string(terms.grad.norm()) + " after " +
                                                 std::to_string(options.max_iterations) + " iterations");
    }
  }
  LinearCox model;
  model.beta.assign(beta.data(), beta.data() + beta.size());
  model.ridge = options.ridge;
  const Eigen::VectorXd eta = x * beta;
  model.baseline = breslow_baseline(train, std::span<const double>(eta.data(), static_cast<std::size_t>(eta.size())));
  return model;
}

StepFunction breslow_baseline(const SurvivalDataset& data, std::span<const double> log_risk) {
  if (log_risk.size() != data.size()) throw Error(ErrorCode::ShapeMismatch, "one log-risk per record required");
  const double shift = *std::max_element(log_risk.begin(), log_risk.end());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return data[a].tau > data[b].tau; });
  // Walk times from the largest down, accumulating the risk-set sum.
  std::vector<std::pair<double, double>> increments;
  double s0 = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = data[order[i]].tau;
    std::size_t j = i;
    double events = 0.0;
    while (j < order.size() && data[order[j]].tau == t) {
      s0 += std::exp(log_risk[order[j]] - shift);
      events += data[order[j]].event ? 1.0 : 0.0;
      ++j;
    }
    if (events > 0.0) increments.emplace_back(t, events / s0 * std::exp(-shift));
    i = j;
  }
  std::reverse(increments.begin(), increments.end());
  StepFunction h;
  double acc = 0.0;
  for (const auto& [t, dh] : increments) {
    acc += dh;
    h.times.push_back(t);
    h.values.push_back(acc);
  }
  return h;
}

// ---------------------------------------------------------------------------
// neural models

NeuralCoxPH fit_neural_coxph(const SurvivalDataset& train, const SurvivalDataset& val, nn::MlpSpec spec,
                             const nn::TrainConfig& config) {
  require_events(train, "coxph");
  spec.input_dim = train.feature_dim();
  spec.output_dim = 1;
  const CoxPhObjective train_obj(train);
  const CoxPhObjective val_obj(val);
  auto result = nn::fit(spec, config, train_obj, &val_obj);
  NeuralCoxPH model{std::move(result.network), {}};
  const nn::Matrix risk = model.net.infer(feature_matrix(train));
  model.baseline = breslow_baseline(train, std::span<const double>(risk.data(), static_cast<std::size_t>(risk.size())));
  return model;
}

std::vector<double> coxtime_baseline(nn::Network& net, const SurvivalDataset& train, const TimeGrid& grid,
                                     double time_mean, double time_scale, bool use_time) {
  const nn::Matrix x = feature_matrix(train);
  const auto n = x.rows();
  nn::Matrix input(n, x.cols() + 1);
  input.rightCols(x.cols()) = x;
  std::vector<double> increments(grid.size(), 0.0);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    input.col(0).setConstant(use_time ? (grid[k] - time_mean) / time_scale : 0.0);
    const nn::Matrix f = net.infer(input);
    const double shift = f.maxCoeff();
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (!train[i].event || grid.bin(train[i].tau) != k) continue;
      double s0 = 0.0;
      for (std::size_t j = 0; j < train.size(); ++j) {
        if (train[j].tau >= train[i].tau) s0 += std::exp(f(static_cast<Eigen::Index>(j), 0) - shift);
      }
      increments[k] += std::exp(-shift) / s0;
    }
  }
  return increments;
}

CoxTime fit_coxtime(const SurvivalDataset& train, const SurvivalDataset& val, nn::MlpSpec spec,
                    const nn::TrainConfig& config, const TimeGrid& grid, bool use_time) {
  require_events(train, "coxtime");
  const auto tau = train.durations();
  const double mean = std::accumulate(tau.begin(), tau.end(), 0.0) / static_cast<double>(tau.size());
  const double scale = time_scale_of(tau, mean);
  spec.input_dim = train.feature_dim() + 1;
  spec.output_dim = 1;
  const CoxTimeObjective train_obj(train, mean, scale, use_time);
  const CoxTimeObjective val_obj(val, mean, scale, use_time);
  auto result = nn::fit(spec, config, train_obj, &val_obj);
  CoxTime model{std::move(result.network), grid, {}, mean, scale, use_time};
  model.baseline_increments = coxtime_baseline(model.net, train, grid, mean, scale, use_time);
  return model;
}

DeepHit fit_deephit(const SurvivalDataset& train, const SurvivalDataset& val, nn::MlpSpec spec,
                    const nn::TrainConfig& config, const TimeGrid& grid, double alpha, double sigma) {
  for (const auto& r : train.records()) {
    if (r.tau > grid.back()) {
      throw Error(ErrorCode::GridMismatch, "deephit: training duration beyond the last grid point");
    }
  }
  spec.input_dim = train.feature_dim();
  spec.output_dim = grid.size() + 1;
  const DeepHitObjective train_obj(train, grid, alpha, sigma);
  const DeepHitObjective val_obj(val, grid, alpha, sigma);
  auto result = nn::fit(spec, config, train_obj, &val_obj);
  return DeepHit{std::move(result.network), grid, alpha, sigma};
}

nn::Network mtlr_network(std::size_t feature_dim, std::size_t k, std::uint64_t seed) {
  nn::MlpSpec spec;
  spec.input_dim = feature_dim;
  spec.hidden.clear();
  spec.output_dim = k;
  spec.batch_norm = false;
  spec.dropout = 0.0;
  return nn::Network(spec, seed);
}

Mtlr fit_mtlr(const SurvivalDataset& train, const SurvivalDataset& val, const nn::TrainConfig& config,
              const TimeGrid& grid, double lambda1, double lambda2) {
  nn::Network net = mtlr_network(train.feature_dim(), grid.size(), derive_seed(config.seed, 1));
  nn::TrainConfig full = config;
  full.batch_size = train.size();
  const MtlrObjective train_obj(train, grid);
  const MtlrObjective val_obj(val, grid);
  const auto penalty = mtlr_penalty(net, lambda1, lambda2);
  auto result = nn::fit(std::move(net), full, train_obj, &val_obj, penalty);
  return Mtlr{std::move(result.network), grid, lambda1, lambda2};
}

// ---------------------------------------------------------------------------
// prediction

namespace {

std::vector<double> softmax_row(const nn::Matrix& m, Eigen::Index r) {
  std::vector<double> p(static_cast<std::size_t>(m.cols()));
  const double mx = m.row(r).maxCoeff();
  double s = 0.0;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    p[static_cast<std::size_t>(c)] = std::exp(m(r, c) - mx);
    s += p[static_cast<std::size_t>(c)];
  }
  for (double& v : p) v /= s;
  return p;
}

std::vector<double> sequence_probs(const nn::Matrix& z, Eigen::Index r) {
  const auto k = static_cast<std::size_t>(z.cols());
  std::vector<double> row(k);
  for (std::size_t j = 0; j < k; ++j) row[j] = z(r, static_cast<Eigen::Index>(j));
  const auto s = mtlr_scores(row.data(), k);
  const double mx = *std::max_element(s.begin(), s.end());
  std::vector<double> p(k + 1);
  double total = 0.0;
  for (std::size_t j = 0; j <= k; ++j) {
    p[j] = std::exp(s[j] - mx);
    total += p[j];
  }
  for (double& v : p) v /= total;
  return p;
}

// S at grid points from a PMF, linear from (0,1) through the grid, held after.
double deephit_survival(const TimeGrid& grid, const std::vector<double>& pmf, double t) {
  if (t <= 0.0) return 1.0;
  std::vector<double> s(grid.size());
  double cdf = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    cdf += pmf[k];
    s[k] = 1.0 - cdf;
  }
  if (t < grid.front()) return 1.0 + (s[0] - 1.0) * t / grid.front();
  if (t >= grid.back()) return s.back();
  const std::size_t k = grid.bin(t);  // grid[k-1] < t <= grid[k]
  if (t == grid[k]) return s[k];
  const double w = (t - grid[k - 1]) / (grid[k] - grid[k - 1]);
  return s[k - 1] + (s[k] - s[k - 1]) * w;
}

double mtlr_survival(const TimeGrid& grid, const std::vector<double>& p, double t) {
  if (t < grid.front()) return 1.0;
  // Last grid index with grid[k] <= t.
  const auto& pts = grid.points();
  const auto k = static_cast<std::size_t>(std::upper_bound(pts.begin(), pts.end(), t) - pts.begin()) - 1;
  double s = 0.0;
  for (std::size_t j = k + 1; j < p.size(); ++j) s += p[j];
  return s;
}

std::vector<double> cox_family_hazard(const FittedModel& model, const nn::Matrix& x, std::span<const double> times,
                                      Eigen::Index r, const nn::Matrix* cached) {
  std::vector<double> h(times.size());
  std::visit(Overloaded{
                 [&](const LinearCox& m) {
                   double eta = 0.0;
                   for (std::size_t k = 0; k < m.beta.size(); ++k) eta += m.beta[k] * x(r, static_cast<Eigen::Index>(k));
                   const double rel = std::exp(eta);
                   for (std::size_t i = 0; i < times.size(); ++i) h[i] = m.baseline.at(times[i]) * rel;
                 },
                 [&](const NeuralCoxPH& m) {
                   const double rel = std::exp((*cached)(r, 0));
                   for (std::size_t i = 0; i < times.size(); ++i) h[i] = m.baseline.at(times[i]) * rel;
                 },
                 [&](const CoxTime& m) {
                   // cached holds f(grid_k, x_r) at column k.
                   for (std::size_t i = 0; i < times.size(); ++i) {
                     double acc = 0.0;
                     for (std::size_t k = 0; k < m.grid.size() && m.grid[k] <= times[i]; ++k) {
                       acc += m.baseline_increments[k] * std::exp((*cached)(r, static_cast<Eigen::Index>(k)));
                     }
                     h[i] = acc;
                   }
                 },
                 [&](const auto&) { throw Error(ErrorCode::InvalidArgument, "model has no cumulative hazard"); },
             },
             model);
  return h;
}

// Network outputs needed for prediction, one row per input record.
nn::Matrix model_outputs(const FittedModel& model, const nn::Matrix& x) {
  return std::visit(Overloaded{
                        [](const std::monostate&) -> nn::Matrix {
                          throw Error(ErrorCode::UnfittedModel, "model has not been fitted");
                        },
                        [&](const LinearCox& m) -> nn::Matrix {
                          check_feature_dim(m.beta.size(), static_cast<std::size_t>(x.cols()));
                          return {};
                        },
                        [&](const NeuralCoxPH& m) -> nn::Matrix {
                          check_feature_dim(m.net.spec().input_dim, static_cast<std::size_t>(x.cols()));
                          return m.net.infer(x);
                        },
                        [&](const CoxTime& m) -> nn::Matrix {
                          check_feature_dim(m.net.spec().input_dim - 1, static_cast<std::size_t>(x.cols()));
                          nn::Matrix out(x.rows(), static_cast<Eigen::Index>(m.grid.size()));
                          nn::Matrix input(x.rows(), x.cols() + 1);
                          input.rightCols(x.cols()) = x;
                          for (std::size_t k = 0; k < m.grid.size(); ++k) {
                            input.col(0).setConstant(m.use_time ? (m.grid[k] - m.time_mean) / m.time_scale : 0.0);
                            out.col(static_cast<Eigen::Index>(k)) = m.net.infer(input).col(0);
                          }
                          return out;
                        },
                        [&](const DeepHit& m) -> nn::Matrix {
                          check_feature_dim(m.net.spec().input_dim, static_cast<std::size_t>(x.cols()));
                          return m.net.infer(x);
                        },
                        [&](const Mtlr& m) -> nn::Matrix {
                          check_feature_dim(m.net.spec().input_dim, static_cast<std::size_t>(x.cols()));
                          return m.net.infer(x);
                        },
                    },
                    model);
}

std::vector<SurvivalCurve> curves_for(const FittedModel& model, const nn::Matrix& x, std::span<const double> times) {
  require_increasing(times);
  const nn::Matrix out = model_outputs(model, x);
  std::vector<SurvivalCurve> curves;
  curves.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::vector<double> s(times.size());
    if (const auto* dh = std::get_if<DeepHit>(&model)) {
      const auto pmf = softmax_row(out, r);
      for (std::size_t i = 0; i < times.size(); ++i) s[i] = deephit_survival(dh->grid, pmf, times[i]);
    } else if (const auto* mt = std::get_if<Mtlr>(&model)) {
      const auto p = sequence_probs(out, r);
      for (std::size_t i = 0; i < times.size(); ++i) s[i] = mtlr_survival(mt->grid, p, times[i]);
    } else {
      const auto h = cox_family_hazard(model, x, times, r, &out);
      for (std::size_t i = 0; i < times.size(); ++i) s[i] = std::exp(-h[i]);
    }
    curves.push_back(finish_curve(times, std::move(s)));
  }
  return curves;
}

}  // namespace

SurvivalCurve predict_survival(const FittedModel& model, std::span<const double> x, std::span<const double> eval_times) {
  return curves_for(model, row_matrix(x), eval_times).front();
}

std::vector<SurvivalCurve> predict_survival(const FittedModel& model, const SurvivalDataset& data,
                                            std::span<const double> eval_times) {
  return curves_for(model, feature_matrix(data), eval_times);
}

std::vector<double> cumulative_hazard(const FittedModel& model, std::span<const double> x,
                                      std::span<const double> eval_times) {
  require_increasing(eval_times);
  const nn::Matrix xm = row_matrix(x);
  const nn::Matrix out = model_outputs(model, xm);
  return cox_family_hazard(model, xm, eval_times, 0, &out);
}

std::vector<double> deephit_pmf(const DeepHit& model, std::span<const double> x) {
  check_feature_dim(model.net.spec().input_dim, x.size());
  return softmax_row(model.net.infer(row_matrix(x)), 0);
}

std::vector<double> mtlr_sequence_probabilities(const Mtlr& model, std::span<const double> x) {
  check_feature_dim(model.net.spec().input_dim, x.size());
  return sequence_probs(model.net.infer(row_matrix(x)), 0);
}

double risk_score(const FittedModel& model, std::span<const double> x, double horizon) {
  if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidArgument, "risk horizon must be positive");
  constexpr std::size_t kPoints = 257;
  std::vector<double> times(kPoints);
  for (std::size_t i = 0; i < kPoints; ++i) times[i] = horizon * static_cast<double>(i) / static_cast<double>(kPoints - 1);
  return trapezoid_risk(predict_survival(model, x, times), horizon);
}

FittedModel fit_model(ModelKind kind, const SurvivalDataset& train, const SurvivalDataset& val,
                      const ModelSettings& settings) {
  nn::TrainConfig config = settings.train;
  switch (kind) {
    case ModelKind::LinearCox:
      return fit_linear_cox(train, settings.linear);
    case ModelKind::CoxPH:
      config.max_epochs = settings.epochs_cox;
      return fit_neural_coxph(train, val, settings.mlp, config);
    case ModelKind::CoxTime:
      config.max_epochs = settings.epochs_cox;
      return fit_coxtime(train, val, settings.mlp, config, make_grid(train, settings.grid_size));
    case ModelKind::DeepHit:
      config.max_epochs = settings.epochs_deephit;
      return fit_deephit(train, val, settings.mlp, config, make_grid(train, settings.grid_size),
                         settings.deephit_alpha, settings.deephit_sigma);
    case ModelKind::Mtlr:
      config.max_epochs = settings.epochs_mtlr;
      return fit_mtlr(train, val, config, make_grid(train, settings.grid_size), settings.mtlr_lambda1,
                      settings.mtlr_lambda2);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model kind");
}

}  // namespace rulsurv
