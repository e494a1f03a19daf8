#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tfo {

struct MlpConfig {
  std::size_t input_dim = 10;
  /// Width of the first hidden layer; each further layer halves it down to 8.
  /// 0 builds a model with no hidden layers (a single linear map).
  std::size_t first_hidden = 64;
  /// Explicit hidden widths; when non-empty this replaces the halving chain.
  std::vector<std::size_t> hidden_override;
  bool batch_norm = true;
  double lr = 1.0e-3;
  double weight_decay = 1.0e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1.0e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 300;
  std::size_t patience = 25;
  double init_sigma = 0.01;
  double bn_momentum = 0.1;
  double bn_eps = 1.0e-5;
  std::uint64_t seed = 1;

  /// Hidden widths in order; throws ConfigError for an invalid chain.
  std::vector<std::size_t> hidden_widths() const;
  void validate() const;
};

enum class Mode { Train, Eval };

/// Dense regressor: per hidden layer linear -> ReLU -> batch-norm, then a linear output
/// node. Inputs are standardised with statistics frozen by fit_standardizer.
class Mlp {
 public:
  explicit Mlp(const MlpConfig& cfg);

  const MlpConfig& config() const { return cfg_; }
  std::size_t n_params() const { return static_cast<std::size_t>(params_.size()); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  /// Weights N(0, init_sigma^2) from RngStream(seed, 0, rng_domain::kInit), biases zero,
  /// batch-norm scale one and shift zero, running statistics (0, 1).
  void init(std::uint64_t seed);

  void fit_standardizer(const Eigen::MatrixXd& x);
  void set_standardizer(Eigen::VectorXd mean, Eigen::VectorXd scale);
  const Eigen::VectorXd& input_mean() const { return in_mean_; }
  const Eigen::VectorXd& input_scale() const { return in_scale_; }

  /// Predictions for the rows of x. Train mode uses batch statistics and, when
  /// update_running is set, updates the running averages.
  Eigen::VectorXd forward(const Eigen::MatrixXd& x, Mode mode, bool update_running = false);
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  /// Weighted MSE sum w (yhat - y)^2 / sum w and its gradient w.r.t. params().
  double loss_and_grad(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, Mode mode, Eigen::VectorXd* grad,
                       bool update_running = false);

  /// Views into the flat parameter vector.
  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);
  Eigen::Map<Eigen::VectorXd> bn_gamma(std::size_t hidden);
  Eigen::Map<Eigen::VectorXd> bn_beta(std::size_t hidden);
  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> bn_gamma(std::size_t hidden) const;
  Eigen::Map<const Eigen::VectorXd> bn_beta(std::size_t hidden) const;
  std::size_t n_dense() const { return widths_.size() - 1; }
  const std::vector<std::size_t>& widths() const { return widths_; }

  std::vector<Eigen::VectorXd>& running_mean() { return run_mean_; }
  std::vector<Eigen::VectorXd>& running_var() { return run_var_; }
  const std::vector<Eigen::VectorXd>& running_mean() const { return run_mean_; }
  const std::vector<Eigen::VectorXd>& running_var() const { return run_var_; }

  /// Smallest |pre-activation| of any hidden unit over the rows of x (train-mode pass).
  double min_abs_preactivation(const Eigen::MatrixXd& x);

 private:
  struct Cache {
    std::vector<Eigen::MatrixXd> input;   // input of each dense layer
    std::vector<Eigen::MatrixXd> pre;     // Z
    std::vector<Eigen::MatrixXd> xhat;    // normalised ReLU output
    std::vector<Eigen::RowVectorXd> inv_std;
    std::vector<Eigen::RowVectorXd> batch_mean;
    std::vector<Eigen::RowVectorXd> batch_var;
  };

  Eigen::VectorXd run(const Eigen::MatrixXd& x, Mode mode, Cache& cache) const;
  void update_running_stats(const Cache& cache, Eigen::Index n);
  std::size_t hidden_count() const { return widths_.size() - 2; }

  MlpConfig cfg_;
  std::vector<std::size_t> widths_;  // input, hidden..., 1
  std::vector<std::size_t> w_off_, b_off_, g_off_, beta_off_;
  Eigen::VectorXd params_;
  std::vector<Eigen::VectorXd> run_mean_, run_var_;
  Eigen::VectorXd in_mean_, in_scale_;
};

/// Patience-based early stopping on validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  /// Records the loss of a finished epoch (1-based); returns true when training should
  /// stop. improved() tells whether this epoch set a new best.
  bool update(std::size_t epoch, double val_loss);
  bool improved() const { return improved_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
  bool improved_ = false;
};

struct EpochStats {
  double train_mse = 0.0;
  double train_mae = 0.0;
  double val_mse = 0.0;
  double val_mae = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

struct TrainData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  /// Per-row loss weights; empty means all ones.
  Eigen::VectorXd w;
};

/// AdamW on shuffled mini-batches (epoch e shuffles with RngStream(seed, e, kShuffle)),
/// early stopping on validation MSE, best weights and running statistics restored.
/// A trailing mini-batch of a single row is skipped. Throws DataError on a NaN loss.
TrainResult train(Mlp& model, const TrainData& train_set, const TrainData& val_set);

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t n_checked = 0;
};

/// Central finite differences (step h) against the analytic gradient of the train-mode
/// loss, over up to max_params parameters picked with RngStream(seed, 0, kSplit).
/// Relative error is |a - n| / max(|a|, |n|, 1e-7).
GradcheckResult gradcheck(Mlp& model, const TrainData& batch, double h = 1.0e-5,
                          std::size_t max_params = 0, std::uint64_t seed = 0);

/// Versioned binary checkpoint: config, standardiser, flat parameters, running stats.
void save_model(const std::string& path, const Mlp& model);
Mlp load_model(const std::string& path);

}  // namespace tfo
