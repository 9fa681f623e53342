#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "rulsurv/curve.hpp"
#include "rulsurv/nn.hpp"
#include "rulsurv/survdata.hpp"

namespace rulsurv {

/// Right-continuous step function, zero before the first knot.
struct StepFunction {
  std::vector<double> times;
  std::vector<double> values;

  double at(double t) const;

  friend bool operator==(const StepFunction&, const StepFunction&) = default;
};

struct LinearCox {
  std::vector<double> beta;
  StepFunction baseline;  // cumulative baseline hazard H0
  double ridge = 0.0;
};

struct NeuralCoxPH {
  nn::Network net;
  StepFunction baseline;
};

struct CoxTime {
  nn::Network net;
  TimeGrid grid;
  std::vector<double> baseline_increments;  // hazard mass placed at each grid point
  double time_mean = 0.0;
  double time_scale = 1.0;
  bool use_time = true;
};

struct DeepHit {
  nn::Network net;
  TimeGrid grid;
  double alpha = 0.2;
  double sigma = 0.1;
};

struct Mtlr {
  nn::Network net;  // affine map to K outputs; weight column k is theta_k
  TimeGrid grid;
  double lambda1 = 1e-3;
  double lambda2 = 1e-2;
};

using FittedModel = std::variant<std::monostate, LinearCox, NeuralCoxPH, CoxTime, DeepHit, Mtlr>;

enum class ModelKind { LinearCox, CoxPH, CoxTime, DeepHit, Mtlr };

const char* to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view name);
ModelKind kind_of(const FittedModel& model);

struct LinearCoxOptions {
  double ridge = 1e-3;
  std::size_t max_iterations = 100;
  double tolerance = 1e-8;
};

/// Newton ascent on the Breslow log partial likelihood minus ridge ||beta||^2.
LinearCox fit_linear_cox(const SurvivalDataset& train, const LinearCoxOptions& options = {});

/// Breslow cumulative baseline hazard for fixed log-risks on `data`.
StepFunction breslow_baseline(const SurvivalDataset& data, std::span<const double> log_risk);

NeuralCoxPH fit_neural_coxph(const SurvivalDataset& train, const SurvivalDataset& val, nn::MlpSpec spec,
                             const nn::TrainConfig& config);

CoxTime fit_coxtime(const SurvivalDataset& train, const SurvivalDataset& val, nn::MlpSpec spec,
                    const nn::TrainConfig& config, const TimeGrid& grid, bool use_time = true);

/// Hazard increments of a CoxTime network on its grid, estimated from `train`.
std::vector<double> coxtime_baseline(nn::Network& net, const SurvivalDataset& train, const TimeGrid& grid,
                                     double time_mean, double time_scale, bool use_time);

DeepHit fit_deephit(const SurvivalDataset& train, const SurvivalDataset& val, nn::MlpSpec spec,
                    const nn::TrainConfig& config, const TimeGrid& grid, double alpha = 0.2, double sigma = 0.1);

Mtlr fit_mtlr(const SurvivalDataset& train, const SurvivalDataset& val, const nn::TrainConfig& config,
              const TimeGrid& grid, double lambda1 = 1e-3, double lambda2 = 1e-2);

/// Network shell for MTLR on `feature_dim` inputs and grid size k.
nn::Network mtlr_network(std::size_t feature_dim, std::size_t k, std::uint64_t seed);

/// Survival at `eval_times` (increasing), clamped to [0,1] and forced
/// non-increasing.
SurvivalCurve predict_survival(const FittedModel& model, std::span<const double> x, std::span<const double> eval_times);
std::vector<SurvivalCurve> predict_survival(const FittedModel& model, const SurvivalDataset& data,
                                            std::span<const double> eval_times);

/// Cox-family cumulative hazard H(t | x); InvalidArgument for DeepHit/MTLR.
std::vector<double> cumulative_hazard(const FittedModel& model, std::span<const double> x,
                                      std::span<const double> eval_times);

/// DeepHit PMF over K+1 bins for one record.
std::vector<double> deephit_pmf(const DeepHit& model, std::span<const double> x);
/// MTLR distribution over the K+1 monotone sequences for one record.
std::vector<double> mtlr_sequence_probabilities(const Mtlr& model, std::span<const double> x);

/// Trapezoidal integral of (1 - S) over [0, horizon]; higher = more at risk.
double risk_score(const FittedModel& model, std::span<const double> x, double horizon);

/// Defaults for one model fit; every field is exposed in the run config.
struct ModelSettings {
  LinearCoxOptions linear;
  nn::MlpSpec mlp;
  nn::TrainConfig train;
  std::size_t epochs_cox = 500;
  std::size_t epochs_deephit = 50;
  std::size_t epochs_mtlr = 300;
  std::size_t grid_size = 10;
  double deephit_alpha = 0.2;
  double deephit_sigma = 0.1;
  double mtlr_lambda1 = 1e-3;
  double mtlr_lambda2 = 1e-2;
};

FittedModel fit_model(ModelKind kind, const SurvivalDataset& train, const SurvivalDataset& val,
                      const ModelSettings& settings);

}  // namespace rulsurv
