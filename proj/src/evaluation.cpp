#include "tfo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "tfo/errors.hpp"
#include "tfo/rng.hpp"

namespace tfo {

std::string_view to_string(FeatureKind k) { return k == FeatureKind::Epr ? "epr" : "ror"; }

FeatureKind feature_kind_from_string(std::string_view name) {
  if (name == "epr") return FeatureKind::Epr;
  if (name == "ror") return FeatureKind::Ror;
  throw ConfigError("unknown feature kind '" + std::string(name) + "' (expected epr or ror)");
}

DesignMatrix design_matrix(const FeatureDataset& ds, FeatureKind kind) {
  if (kind == FeatureKind::Ror && !ds.has_ror) throw DataError("dataset has no RoR columns");
  if (ds.rows.empty()) throw DataError("dataset has no rows");
  const std::size_t width = kind == FeatureKind::Epr ? ds.rows.front().epr.size() : ds.rows.front().ror.size();
  DesignMatrix dm;
  dm.x.resize(static_cast<Eigen::Index>(ds.rows.size()), static_cast<Eigen::Index>(width));
  dm.y.resize(static_cast<Eigen::Index>(ds.rows.size()));
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    const auto& f = kind == FeatureKind::Epr ? ds.rows[i].epr : ds.rows[i].ror;
    if (f.size() != width) throw DataError("rows differ in feature width");
    for (std::size_t j = 0; j < width; ++j) {
      if (!std::isfinite(f[j])) throw DataError("non-finite feature in row " + std::to_string(i));
      dm.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
    }
    dm.y[static_cast<Eigen::Index>(i)] = ds.rows[i].hemo.s_f;
  }
  return dm;
}

RegressionMetrics evaluate(const Eigen::VectorXd& pred, const Eigen::VectorXd& label) {
  if (pred.size() != label.size()) throw DomainError("prediction and label lengths differ");
  const Eigen::Index n = pred.size();
  if (n < 2) throw DomainError("metrics need at least 2 samples");
  RegressionMetrics m;
  m.n = static_cast<std::size_t>(n);
  const Eigen::ArrayXd abs_err = (pred - label).array().abs();
  m.mae = abs_err.mean();
  m.abs_error_std = std::sqrt((abs_err - m.mae).square().sum() / static_cast<double>(n - 1));

  const Eigen::ArrayXd dp = pred.array() - pred.mean();
  const Eigen::ArrayXd dl = label.array() - label.mean();
  const double sp = std::sqrt(dp.square().sum());
  const double sl = std::sqrt(dl.square().sum());
  if (!(sp > 0.0) || !(sl > 0.0)) throw DomainError("Pearson r is undefined for zero variance");
  m.pearson_r = std::clamp((dp * dl).sum() / (sp * sl), -1.0, 1.0);

  const double df = static_cast<double>(n - 2);
  if (df <= 0.0) {
    m.p_value = std::numeric_limits<double>::quiet_NaN();
  } else if (std::abs(m.pearson_r) == 1.0) {
    m.p_value = 0.0;
  } else {
    const double r = m.pearson_r;
    const double t = r * std::sqrt(df / (1.0 - r * r));
    const boost::math::students_t dist(df);
    m.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return m;
}

Split random_group_split(const std::vector<double>& group_keys, double val_fraction,
                         std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("validation fraction must lie in (0, 1)");
  std::map<double, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < group_keys.size(); ++i) groups[group_keys[i]].push_back(i);

  Split split;
  std::uint64_t g = 0;
  for (auto& [key, idx] : groups) {
    RngStream rng(seed, g++, rng_domain::kSplit);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
    split.val.insert(split.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

std::vector<Split> temporal_cv(const std::vector<int>& round_ids, const std::vector<double>& times,
                               std::size_t k) {
  if (k < 2) throw ConfigError("temporal CV needs at least 2 folds");
  if (round_ids.size() != times.size()) throw DataError("round ids and times differ in length");
  std::map<int, std::vector<std::size_t>> rounds;
  for (std::size_t i = 0; i < round_ids.size(); ++i) rounds[round_ids[i]].push_back(i);

  // fold_of[i] = fold index of sample i, or k when its round is excluded.
  std::vector<std::size_t> fold_of(round_ids.size(), k);
  for (auto& [id, idx] : rounds) {
    if (idx.size() < k) {
      std::cerr << "warning: round " << id << " has " << idx.size() << " samples (< " << k
                << "); excluded from cross-validation\n";
      continue;
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
    const std::size_t n = idx.size();
    for (std::size_t f = 0; f < k; ++f)
      for (std::size_t j = f * n / k; j < (f + 1) * n / k; ++j) fold_of[idx[j]] = f;
  }

  std::vector<Split> splits(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::map<int, std::size_t> train_count;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if (fold_of[i] == k) continue;
      if (fold_of[i] == f) {
        splits[f].val.push_back(i);
      } else {
        splits[f].train.push_back(i);
        ++train_count[round_ids[i]];
      }
    }
    for (std::size_t i : splits[f].train)
      splits[f].train_weights.push_back(1.0 / static_cast<double>(train_count[round_ids[i]]));
  }
  return splits;
}

TrialResult run_trial(const DesignMatrix& dm, const Split& split, const MlpConfig& cfg,
                      Mlp* trained) {
  if (split.train.empty() || split.val.empty()) throw DataError("split has an empty side");
  auto gather = [&](const std::vector<std::size_t>& rows) {
    TrainData d;
    d.x.resize(static_cast<Eigen::Index>(rows.size()), dm.x.cols());
    d.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      d.x.row(static_cast<Eigen::Index>(i)) = dm.x.row(static_cast<Eigen::Index>(rows[i]));
      d.y[static_cast<Eigen::Index>(i)] = dm.y[static_cast<Eigen::Index>(rows[i])];
    }
    return d;
  };
  TrainData tr = gather(split.train);
  if (!split.train_weights.empty()) {
    if (split.train_weights.size() != split.train.size()) throw DataError("weight count mismatch");
    tr.w = Eigen::Map<const Eigen::VectorXd>(split.train_weights.data(),
                                             static_cast<Eigen::Index>(split.train_weights.size()));
  }
  const TrainData va = gather(split.val);

  MlpConfig c = cfg;
  c.input_dim = static_cast<std::size_t>(dm.x.cols());
  Mlp model(c);
  model.fit_standardizer(tr.x);

  TrialResult res;
  res.training = train(model, tr, va);
  res.predictions = model.predict(va.x);
  res.metrics = evaluate(res.predictions, va.y);
  res.val_rows = split.val;
  if (trained) *trained = std::move(model);
  return res;
}

}  // namespace tfo
