#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "rulsurv/rng.hpp"

namespace rulsurv::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { ReLU };

/// Hidden layers are Linear -> ReLU -> BatchNorm -> Dropout; the output
/// layer is a plain Linear. An empty `hidden` list gives an affine map.
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t output_dim = 1;
  Activation activation = Activation::ReLU;
  bool batch_norm = true;
  double dropout = 0.1;

  void validate() const;
};

struct TrainConfig {
  double learning_rate = 0.005;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  std::uint64_t seed = 10;
  double l2_penalty = 0.0;

  void validate() const;
};

enum class Mode { Train, Eval };

class Network {
 public:
  Network() = default;
  Network(const MlpSpec& spec, std::uint64_t init_seed);

  const MlpSpec& spec() const noexcept { return spec_; }
  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

  /// Eval mode is deterministic and uses running statistics. Train mode
  /// uses batch statistics, updates the running ones, and draws dropout
  /// masks from `rng` (required when dropout > 0).
  Matrix forward(const Matrix& x, Rng* rng = nullptr);
  /// Train-mode pass that reuses the dropout masks of the previous pass and
  /// leaves running statistics untouched; used for gradient checking.
  Matrix forward_fixed(const Matrix& x);
  /// Eval-mode forward that records nothing; safe for concurrent callers.
  Matrix infer(const Matrix& x) const;

  /// Active/inactive state of every hidden ReLU in the most recent pass.
  std::vector<bool> relu_pattern() const;

  /// Gradient of a scalar loss w.r.t. the flat parameter vector, given the
  /// loss gradient w.r.t. the outputs of the most recent forward pass.
  Vector backward(const Matrix& grad_output) const;

  std::size_t parameter_count() const noexcept { return static_cast<std::size_t>(params_.size()); }
  const Vector& parameters() const noexcept { return params_; }
  void set_parameters(const Vector& params);

  /// Mask selecting linear-layer weights (not biases or batch-norm terms).
  Vector weight_mask() const;
  /// Flat offset and shape (in x out) of linear layer `i`, output layer last.
  struct LinearView {
    std::size_t weight_offset;
    std::size_t bias_offset;
    std::size_t in;
    std::size_t out;
  };
  std::vector<LinearView> linear_layers() const;

  void zero_output_layer();

  void save(std::ostream& os) const;
  static Network load(std::istream& is);

  friend bool operator==(const Network& a, const Network& b);

 private:
  struct Hidden {
    std::size_t w = 0, b = 0, gamma = 0, beta = 0, in = 0, out = 0;
    Vector running_mean;
    Vector running_var;
  };
  struct Tape {
    Matrix input;
    Matrix pre;    // linear output before ReLU
    Matrix xhat;   // normalized activations
    Vector inv_std;
    Matrix mask;   // dropout scale factors, empty when inactive
    bool batch_stats = false;
  };

  Matrix run(const Matrix& x, bool train, Rng* rng, bool reuse_masks, bool update_stats);
  Eigen::Map<const Matrix> weight(std::size_t offset, std::size_t in, std::size_t out) const;

  MlpSpec spec_;
  Mode mode_ = Mode::Eval;
  Vector params_;
  std::vector<Hidden> hidden_;
  std::size_t out_w_ = 0, out_b_ = 0, out_in_ = 0;
  std::vector<Tape> tape_;
  Matrix out_input_;
};

/// A differentiable training objective over record indices. `inputs`
/// builds the network input for a batch; `evaluate` returns the loss and
/// writes dLoss/dOutputs, or returns nullopt when the batch carries no
/// signal (e.g. no events) and the step should be skipped.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t size() const = 0;
  virtual Matrix inputs(std::span<const std::size_t> batch) const = 0;
  virtual std::optional<double> evaluate(std::span<const std::size_t> batch, const Matrix& outputs,
                                         Matrix* grad_outputs) const = 0;
};

/// Extra loss on the raw parameter vector; adds into `grad` when non-null.
using ParameterPenalty = std::function<double(const Vector& params, Vector* grad)>;

class Adam {
 public:
  Adam(std::size_t n, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Vector& params, const Vector& grad);

 private:
  double lr_, b1_, b2_, eps_;
  Vector m_, v_;
  long long t_ = 0;
};

struct FitResult {
  Network network;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;  // 1-based
  std::size_t epochs_run = 0;
};

/// Adam training with shuffled mini-batches and early stopping on the
/// validation objective. `val` may be null, in which case the training
/// objective evaluated in eval mode drives early stopping. The monitored
/// loss includes `penalty`. Returns the
/// network from the best validation epoch, in eval mode.
FitResult fit(const MlpSpec& spec, const TrainConfig& config, const Objective& train, const Objective* val,
              const ParameterPenalty& penalty = {});

/// Same, starting from a given network instead of a fresh initialization.
FitResult fit(Network initial, const TrainConfig& config, const Objective& train, const Objective* val,
              const ParameterPenalty& penalty = {});

/// Loss of `objective` on `batch`, eval mode; nullopt if the batch has no signal.
std::optional<double> evaluate_loss(Network& net, const Objective& objective, std::span<const std::size_t> batch);

enum class CheckMode { Eval, TrainFixedMask };

/// Max relative error between analytic and central-difference gradients of
/// objective + penalty. Above 5000 parameters a seeded subsample of 5000 is
/// checked. TrainFixedMask draws one set of dropout masks and holds it.
/// When a perturbation flips a ReLU the step is divided by 10, at most four
/// times, so the difference stays on the piece the base point lies on.
double grad_check(Network net, const Objective& objective, std::span<const std::size_t> batch,
                  double epsilon = 1e-5, CheckMode mode = CheckMode::Eval, std::uint64_t seed = 0,
                  const ParameterPenalty& penalty = {});

}  // namespace rulsurv::nn
