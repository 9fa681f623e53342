#pragma once

#include <vector>

#include "rulsurv/nn.hpp"
#include "rulsurv/survdata.hpp"

namespace rulsurv {

/// Row-per-record feature matrix.
nn::Matrix feature_matrix(const SurvivalDataset& dataset);

/// Negative log partial likelihood of a single-output risk network,
/// averaged over the events of a batch. Risk sets span every record held
/// by the objective, so inputs() always returns all rows.
class CoxPhObjective : public nn::Objective {
 public:
  explicit CoxPhObjective(const SurvivalDataset& data);

  std::size_t size() const override { return tau_.size(); }
  nn::Matrix inputs(std::span<const std::size_t> batch) const override;
  std::optional<double> evaluate(std::span<const std::size_t> batch, const nn::Matrix& outputs,
                                 nn::Matrix* grad) const override;

 private:
  nn::Matrix x_;
  std::vector<double> tau_;
  std::vector<bool> event_;
};

/// Time-dependent partial likelihood. The network reads (t_std, x) where
/// t_std = (t - time_mean) / time_scale. For each event i of a batch,
/// inputs() emits the row (T_i, x_i) followed by (T_i, x_j) for every other
/// j in the risk set at T_i. With use_time off the time column is zero.
class CoxTimeObjective : public nn::Objective {
 public:
  CoxTimeObjective(const SurvivalDataset& data, double time_mean, double time_scale, bool use_time = true);

  std::size_t size() const override { return tau_.size(); }
  nn::Matrix inputs(std::span<const std::size_t> batch) const override;
  std::optional<double> evaluate(std::span<const std::size_t> batch, const nn::Matrix& outputs,
                                 nn::Matrix* grad) const override;

 private:
  std::vector<std::size_t> risk_set_of(std::size_t i) const;

  nn::Matrix x_;
  std::vector<double> tau_;
  std::vector<bool> event_;
  double mean_;
  double scale_;
  bool use_time_;
};

/// alpha x (PMF likelihood) + (1 - alpha) x (ranking loss) over K+1 logits,
/// the last being the beyond-horizon bin.
class DeepHitObjective : public nn::Objective {
 public:
  DeepHitObjective(const SurvivalDataset& data, const TimeGrid& grid, double alpha, double sigma);

  std::size_t size() const override { return bins_.size(); }
  nn::Matrix inputs(std::span<const std::size_t> batch) const override;
  std::optional<double> evaluate(std::span<const std::size_t> batch, const nn::Matrix& outputs,
                                 nn::Matrix* grad) const override;

  struct Terms {
    double likelihood;
    double rank;
  };
  Terms terms(std::span<const std::size_t> batch, const nn::Matrix& outputs) const;

 private:
  double compute(std::span<const std::size_t> batch, const nn::Matrix& outputs, nn::Matrix* grad,
                 Terms* terms) const;

  nn::Matrix x_;
  std::vector<double> tau_;
  std::vector<bool> event_;
  std::vector<std::size_t> bins_;
  std::size_t k_;
  double alpha_;
  double sigma_;
};

/// Mean negative log likelihood of the monotone-sequence model over K
/// outputs z_k; sequence j (event in bin j, j = K beyond the horizon) has
/// score sum_{k >= j} z_k.
class MtlrObjective : public nn::Objective {
 public:
  MtlrObjective(const SurvivalDataset& data, const TimeGrid& grid);

  std::size_t size() const override { return bins_.size(); }
  nn::Matrix inputs(std::span<const std::size_t> batch) const override;
  std::optional<double> evaluate(std::span<const std::size_t> batch, const nn::Matrix& outputs,
                                 nn::Matrix* grad) const override;

 private:
  nn::Matrix x_;
  std::vector<bool> event_;
  std::vector<std::size_t> bins_;
  std::size_t k_;
};

/// Sequence scores s_0..s_K from the K outputs of one record.
std::vector<double> mtlr_scores(const double* z, std::size_t k);

/// lambda1 sum ||theta_k||^2 + lambda2 sum ||theta_{k+1} - theta_k||^2 over
/// the output-layer weight columns of `net`; biases are not penalized.
nn::ParameterPenalty mtlr_penalty(const nn::Network& net, double lambda1, double lambda2);

}  // namespace rulsurv
