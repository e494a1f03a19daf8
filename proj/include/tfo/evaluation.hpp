#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tfo/dataset.hpp"
#include "tfo/mlp.hpp"

namespace tfo {

enum class FeatureKind { Epr, Ror };
std::string_view to_string(FeatureKind k);
FeatureKind feature_kind_from_string(std::string_view name);

/// Feature matrix for the chosen kind and the fetal saturation labels (fractions).
struct DesignMatrix {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};
DesignMatrix design_matrix(const FeatureDataset& ds, FeatureKind kind);

struct RegressionMetrics {
  std::size_t n = 0;
  double mae = 0.0;
  /// Sample standard deviation of the absolute errors.
  double abs_error_std = 0.0;
  double pearson_r = 0.0;
  /// Two-sided p-value of r under a t distribution with n - 2 degrees of freedom.
  double p_value = 0.0;
};

/// Throws DomainError when lengths differ, n < 2, or either side has zero variance.
RegressionMetrics evaluate(const Eigen::VectorXd& pred, const Eigen::VectorXd& label);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  /// Per-train-row loss weights (empty for unweighted).
  std::vector<double> train_weights;
};

/// Random split within each group (e.g. each maternal wall thickness): round(frac * size)
/// rows of every group go to validation. Deterministic in seed.
Split random_group_split(const std::vector<double>& group_keys, double val_fraction,
                         std::uint64_t seed);

/// Temporal k-fold: each round's samples (ordered by time) are cut into k contiguous
/// folds; split i validates on fold i of every round. Training rows carry weight
/// 1 / (round size), so every round contributes equally. Rounds with fewer than k
/// samples are left out with a warning.
std::vector<Split> temporal_cv(const std::vector<int>& round_ids, const std::vector<double>& times,
                               std::size_t k = 5);

struct TrialResult {
  std::string label;
  RegressionMetrics metrics;
  TrainResult training;
  std::vector<std::size_t> val_rows;
  Eigen::VectorXd predictions;
};

/// Trains one model on a split and evaluates it on the validation rows.
TrialResult run_trial(const DesignMatrix& dm, const Split& split, const MlpConfig& cfg,
                      Mlp* trained = nullptr);

}  // namespace tfo
