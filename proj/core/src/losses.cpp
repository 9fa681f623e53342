#include "rulsurv/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rulsurv/error.hpp"

namespace rulsurv {

namespace {

double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

void unpack(const SurvivalDataset& data, std::vector<double>& tau, std::vector<bool>& event) {
  tau.reserve(data.size());
  event.reserve(data.size());
  for (const auto& r : data.records()) {
    tau.push_back(r.tau);
    event.push_back(r.event);
  }
}

nn::Matrix gather_rows(const nn::Matrix& x, std::span<const std::size_t> batch) {
  nn::Matrix out(static_cast<Eigen::Index>(batch.size()), x.cols());
  for (std::size_t r = 0; r < batch.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(batch[r]));
  return out;
}

}  // namespace

nn::Matrix feature_matrix(const SurvivalDataset& dataset) {
  nn::Matrix x(static_cast<Eigen::Index>(dataset.size()), static_cast<Eigen::Index>(dataset.feature_dim()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t k = 0; k < dataset.feature_dim(); ++k) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = dataset[i].x[k];
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// CoxPH

CoxPhObjective::CoxPhObjective(const SurvivalDataset& data) : x_(feature_matrix(data)) { unpack(data, tau_, event_); }

nn::Matrix CoxPhObjective::inputs(std::span<const std::size_t>) const { return x_; }

std::optional<double> CoxPhObjective::evaluate(std::span<const std::size_t> batch, const nn::Matrix& outputs,
                                               nn::Matrix* grad) const {
  if (outputs.rows() != x_.rows() || outputs.cols() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "CoxPH objective expects one output per held record");
  }
  std::vector<std::size_t> events;
  for (std::size_t i : batch) {
    if (event_[i]) events.push_back(i);
  }
  if (events.empty()) return std::nullopt;
  const double inv_e = 1.0 / static_cast<double>(events.size());
  const std::size_t n = tau_.size();
  std::vector<double> risk;
  std::vector<std::size_t> members;
  double loss = 0.0;
  for (std::size_t i : events) {
    risk.clear();
    members.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (tau_[j] >= tau_[i]) {
        members.push_back(j);
        risk.push_back(outputs(static_cast<Eigen::Index>(j), 0));
      }
    }
    const double lse = log_sum_exp(risk.data(), risk.size());
    loss += lse - outputs(static_cast<Eigen::Index>(i), 0);
    if (grad) {
      for (std::size_t m = 0; m < members.size(); ++m) {
        (*grad)(static_cast<Eigen::Index>(members[m]), 0) += inv_e * std::exp(risk[m] - lse);
      }
      (*grad)(static_cast<Eigen::Index>(i), 0) -= inv_e;
    }
  }
  return loss * inv_e;
}

// ---------------------------------------------------------------------------
// CoxTime

CoxTimeObjective::CoxTimeObjective(const SurvivalDataset& data, double time_mean, double time_scale, bool use_time)
    : x_(feature_matrix(data)), mean_(time_mean), scale_(time_scale), use_time_(use_time) {
  if (!(time_scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "time scale must be positive");
  unpack(data, tau_, event_);
}

std::vector<std::size_t> CoxTimeObjective::risk_set_of(std::size_t i) const {
  std::vector<std::size_t> out{i};
  for (std::size_t j = 0; j < tau_.size(); ++j) {
    if (j != i && tau_[j] >= tau_[i]) out.push_back(j);
  }
  return out;
}

nn::Matrix CoxTimeObjective::inputs(std::span<const std::size_t> batch) const {
  std::vector<std::vector<std::size_t>> groups;
  std::size_t rows = 0;
  for (std::size_t i : batch) {
    if (!event_[i]) continue;
    groups.push_back(risk_set_of(i));
    rows += groups.back().size();
  }
  nn::Matrix out(static_cast<Eigen::Index>(rows), x_.cols() + 1);
  Eigen::Index r = 0;
  for (const auto& g : groups) {
    const double t = use_time_ ? (tau_[g.front()] - mean_) / scale_ : 0.0;
    for (std::size_t j : g) {
      out(r, 0) = t;
      out.row(r).tail(x_.cols()) = x_.row(static_cast<Eigen::Index>(j));
      ++r;
    }
  }
  return out;
}

std::optional<double> CoxTimeObjective::evaluate(std::span<const std::size_t> batch, const nn::Matrix& outputs,
                                                 nn::Matrix* grad) const {
  std::vector<std::size_t> sizes;
  for (std::size_t i : batch) {
    if (!event_[i]) continue;
    std::size_t count = 0;
    for (std::size_t j = 0; j < tau_.size(); ++j) count += tau_[j] >= tau_[i] ? 1 : 0;
    sizes.push_back(count);
  }
  if (sizes.empty()) return std::nullopt;
  std::size_t total_rows = 0;
  for (std::size_t s : sizes) total_rows += s;
  if (static_cast<std::size_t>(outputs.rows()) != total_rows || outputs.cols() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "CoxTime objective received outputs of the wrong shape");
  }
  const double inv_e = 1.0 / static_cast<double>(sizes.size());
  double loss = 0.0;
  std::size_t offset = 0;
  for (std::size_t s : sizes) {
    const double* f = outputs.data() + offset;
    const double lse = log_sum_exp(f, s);
    loss += lse - f[0];
    if (grad) {
      for (std::size_t m = 0; m < s; ++m) (*grad)(static_cast<Eigen::Index>(offset + m), 0) += inv_e * std::exp(f[m] - lse);
      (*grad)(static_cast<Eigen::Index>(offset), 0) -= inv_e;
    }
    offset += s;
  }
  return loss * inv_e;
}

// ---------------------------------------------------------------------------
// DeepHit

DeepHitObjective::DeepHitObjective(const SurvivalDataset& data, const TimeGrid& grid, double alpha, double sigma)
    : x_(feature_matrix(data)), k_(grid.size()), alpha_(alpha), sigma_(sigma) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "DeepHit alpha must lie in [0,1]");
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "DeepHit sigma must be positive");
  unpack(data, tau_, event_);
  for (double t : tau_) bins_.push_back(grid.bin(t));
}

nn::Matrix DeepHitObjective::inputs(std::span<const std::size_t> batch) const { return gather_rows(x_, batch); }

std::optional<double> DeepHitObjective::evaluate(std::span<const std::size_t> batch, const nn::Matrix& outputs,
                                                 nn::Matrix* grad) const {
  if (batch.empty()) return std::nullopt;
  return compute(batch, outputs, grad, nullptr);
}

DeepHitObjective::Terms DeepHitObjective::terms(std::span<const std::size_t> batch, const nn::Matrix& outputs) const {
  Terms t{};
  compute(batch, outputs, nullptr, &t);
  return t;
}

double DeepHitObjective::compute(std::span<const std::size_t> batch, const nn::Matrix& outputs, nn::Matrix* grad,
                                 Terms* terms) const {
  const std::size_t n = batch.size();
  const std::size_t bins = k_ + 1;
  if (static_cast<std::size_t>(outputs.rows()) != n || static_cast<std::size_t>(outputs.cols()) != bins) {
    throw Error(ErrorCode::ShapeMismatch, "DeepHit objective expects K+1 logits per record");
  }
  // Row-wise softmax and CDF.
  nn::Matrix p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(bins));
  std::vector<double> row(bins);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t m = 0; m < bins; ++m) row[m] = outputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m));
    const double lse = log_sum_exp(row.data(), bins);
    for (std::size_t m = 0; m < bins; ++m) p(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m)) = std::exp(row[m] - lse);
  }
  nn::Matrix cdf(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(bins));
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index m = 0; m < p.cols(); ++m) {
      acc += p(r, m);
      cdf(r, m) = acc;
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  nn::Matrix dlogit = nn::Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(bins));

  // Likelihood term, computed on log-softmax for stability. For an event
  // the admissible set is {b}; for a censoring it is the bins after b, or
  // the last bin when b is already the last.
  double nll = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = batch[r];
    const std::size_t b = bins_[i];
    std::size_t lo = b;
    std::size_t hi = b + 1;
    if (!event_[i]) {
      lo = std::min(b + 1, bins - 1);
      hi = bins;
    }
    for (std::size_t m = 0; m < bins; ++m) row[m] = outputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m));
    const double lse_all = log_sum_exp(row.data(), bins);
    const double lse_set = log_sum_exp(row.data() + lo, hi - lo);
    nll += lse_all - lse_set;
    if (grad) {
      for (std::size_t m = 0; m < bins; ++m) {
        double g = std::exp(row[m] - lse_all);
        if (m >= lo && m < hi) g -= std::exp(row[m] - lse_set);
        dlogit(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m)) += alpha_ * inv_n * g;
      }
    }
  }
  nll *= inv_n;

  // Ranking term over acceptable pairs (i event, T_i < T_j), scaled by 1/n^2.
  double rank = 0.0;
  nn::Matrix dcdf = nn::Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(bins));
  const double pair_scale = inv_n * inv_n;
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t i = batch[a];
    if (!event_[i]) continue;
    const auto b = static_cast<Eigen::Index>(bins_[i]);
    const double fi = cdf(static_cast<Eigen::Index>(a), b);
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t j = batch[c];
      if (!(tau_[i] < tau_[j])) continue;
      const double eta = std::exp((cdf(static_cast<Eigen::Index>(c), b) - fi) / sigma_);
      rank += eta;
      if (grad) {
        const double g = (1.0 - alpha_) * pair_scale * eta / sigma_;
        dcdf(static_cast<Eigen::Index>(c), b) += g;
        dcdf(static_cast<Eigen::Index>(a), b) -= g;
      }
    }
  }
  rank *= pair_scale;

  if (grad) {
    // dL/dp_m = sum_{b >= m} dL/dF_b, then softmax backward.
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      std::vector<double> dp(bins);
      double acc = 0.0;
      for (std::size_t m = bins; m-- > 0;) {
        acc += dcdf(r, static_cast<Eigen::Index>(m));
        dp[m] = acc;
      }
      double dot = 0.0;
      for (std::size_t m = 0; m < bins; ++m) dot += dp[m] * p(r, static_cast<Eigen::Index>(m));
      for (std::size_t m = 0; m < bins; ++m) {
        dlogit(r, static_cast<Eigen::Index>(m)) += p(r, static_cast<Eigen::Index>(m)) * (dp[m] - dot);
      }
    }
    *grad += dlogit;
  }
  if (terms) *terms = {nll, rank};
  return alpha_ * nll + (1.0 - alpha_) * rank;
}

// ---------------------------------------------------------------------------
// MTLR

std::vector<double> mtlr_scores(const double* z, std::size_t k) {
  std::vector<double> s(k + 1, 0.0);
  for (std::size_t j = k; j-- > 0;) s[j] = s[j + 1] + z[j];
  return s;
}

MtlrObjective::MtlrObjective(const SurvivalDataset& data, const TimeGrid& grid)
    : x_(feature_matrix(data)), k_(grid.size()) {
  for (const auto& r : data.records()) {
    event_.push_back(r.event);
    bins_.push_back(grid.bin(r.tau));
  }
}

nn::Matrix MtlrObjective::inputs(std::span<const std::size_t> batch) const { return gather_rows(x_, batch); }

std::optional<double> MtlrObjective::evaluate(std::span<const std::size_t> batch, const nn::Matrix& outputs,
                                              nn::Matrix* grad) const {
  if (batch.empty()) return std::nullopt;
  const std::size_t n = batch.size();
  if (static_cast<std::size_t>(outputs.rows()) != n || static_cast<std::size_t>(outputs.cols()) != k_) {
    throw Error(ErrorCode::ShapeMismatch, "MTLR objective expects K outputs per record");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> z(k_);
  std::vector<double> v(k_ + 1);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = batch[r];
    for (std::size_t k = 0; k < k_; ++k) z[k] = outputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
    const auto s = mtlr_scores(z.data(), k_);
    const std::size_t b = bins_[i];
    const std::size_t lo = b;
    const std::size_t hi = event_[i] ? b + 1 : k_ + 1;
    const double log_z = log_sum_exp(s.data(), s.size());
    const double log_num = log_sum_exp(s.data() + lo, hi - lo);
    loss += log_z - log_num;
    if (grad) {
      for (std::size_t j = 0; j <= k_; ++j) {
        v[j] = std::exp(s[j] - log_z);
        if (j >= lo && j < hi) v[j] -= std::exp(s[j] - log_num);
      }
      // ds_j/dz_k = 1 for j <= k.
      double acc = 0.0;
      for (std::size_t k = 0; k < k_; ++k) {
        acc += v[k];
        (*grad)(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) += inv_n * acc;
      }
    }
  }
  return loss * inv_n;
}

nn::ParameterPenalty mtlr_penalty(const nn::Network& net, double lambda1, double lambda2) {
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0)) throw Error(ErrorCode::InvalidArgument, "MTLR penalties must be non-negative");
  const auto view = net.linear_layers().back();
  return [view, lambda1, lambda2](const nn::Vector& params, nn::Vector* grad) {
    const Eigen::Map<const nn::Matrix> w(params.data() + view.weight_offset, static_cast<Eigen::Index>(view.in),
                                         static_cast<Eigen::Index>(view.out));
    double value = lambda1 * w.squaredNorm();
    nn::Matrix g = 2.0 * lambda1 * w;
    for (Eigen::Index k = 0; k + 1 < w.cols(); ++k) {
      const nn::Vector diff = w.col(k + 1) - w.col(k);
      value += lambda2 * diff.squaredNorm();
      g.col(k + 1) += 2.0 * lambda2 * diff;
      g.col(k) -= 2.0 * lambda2 * diff;
    }
    if (grad) {
      Eigen::Map<nn::Matrix>(grad->data() + view.weight_offset, static_cast<Eigen::Index>(view.in),
                             static_cast<Eigen::Index>(view.out)) += g;
    }
    return value;
  };
}

}  // namespace rulsurv
