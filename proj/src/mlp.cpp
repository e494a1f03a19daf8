#include "tfo/mlp.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tfo/errors.hpp"
#include "tfo/rng.hpp"

namespace tfo {

std::vector<std::size_t> MlpConfig::hidden_widths() const {
  if (!hidden_override.empty()) {
    for (std::size_t w : hidden_override)
      if (w == 0) throw ConfigError("hidden widths must be positive");
    return hidden_override;
  }
  if (first_hidden == 0) return {};
  if (first_hidden < 8) throw ConfigError("first hidden width must be at least 8");
  std::vector<std::size_t> widths;
  std::size_t w = first_hidden;
  for (; w > 8; w /= 2) {
    if (w % 2 != 0) throw ConfigError("first hidden width must halve evenly down to 8");
    widths.push_back(w);
  }
  if (w != 8) throw ConfigError("first hidden width must halve evenly down to 8");
  widths.push_back(8);
  return widths;
}

void MlpConfig::validate() const {
  if (input_dim == 0) throw ConfigError("input dimension must be positive");
  hidden_widths();
  if (!(lr > 0.0) || weight_decay < 0.0 || !(adam_eps > 0.0))
    throw ConfigError("optimizer hyperparameters must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (batch_size == 0 || max_epochs == 0) throw ConfigError("batch size and epochs must be >= 1");
  if (!(init_sigma >= 0.0)) throw ConfigError("init sigma must be >= 0");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0) || !(bn_eps > 0.0))
    throw ConfigError("batch-norm momentum must lie in (0, 1] and eps be > 0");
}

Mlp::Mlp(const MlpConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  widths_.push_back(cfg_.input_dim);
  for (std::size_t w : cfg_.hidden_widths()) widths_.push_back(w);
  widths_.push_back(1);

  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    w_off_.push_back(off);
    off += widths_[l] * widths_[l + 1];
    b_off_.push_back(off);
    off += widths_[l + 1];
    if (l + 2 < widths_.size() && cfg_.batch_norm) {
      g_off_.push_back(off);
      off += widths_[l + 1];
      beta_off_.push_back(off);
      off += widths_[l + 1];
    }
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(off));
  for (std::size_t h = 0; h < hidden_count(); ++h) {
    const auto n = static_cast<Eigen::Index>(widths_[h + 1]);
    run_mean_.push_back(Eigen::VectorXd::Zero(n));
    run_var_.push_back(Eigen::VectorXd::Ones(n));
  }
  in_mean_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg_.input_dim));
  in_scale_ = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(cfg_.input_dim));
  init(cfg_.seed);
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(std::size_t l) {
  return {params_.data() + w_off_.at(l), static_cast<Eigen::Index>(widths_[l + 1]),
          static_cast<Eigen::Index>(widths_[l])};
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(std::size_t l) {
  return {params_.data() + b_off_.at(l), static_cast<Eigen::Index>(widths_[l + 1])};
}

Eigen::Map<Eigen::VectorXd> Mlp::bn_gamma(std::size_t h) {
  return {params_.data() + g_off_.at(h), static_cast<Eigen::Index>(widths_[h + 1])};
}

Eigen::Map<Eigen::VectorXd> Mlp::bn_beta(std::size_t h) {
  return {params_.data() + beta_off_.at(h), static_cast<Eigen::Index>(widths_[h + 1])};
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(std::size_t l) const {
  return {params_.data() + w_off_.at(l), static_cast<Eigen::Index>(widths_[l + 1]),
          static_cast<Eigen::Index>(widths_[l])};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t l) const {
  return {params_.data() + b_off_.at(l), static_cast<Eigen::Index>(widths_[l + 1])};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bn_gamma(std::size_t h) const {
  return {params_.data() + g_off_.at(h), static_cast<Eigen::Index>(widths_[h + 1])};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bn_beta(std::size_t h) const {
  return {params_.data() + beta_off_.at(h), static_cast<Eigen::Index>(widths_[h + 1])};
}

void Mlp::init(std::uint64_t seed) {
  RngStream rng(seed, 0, rng_domain::kInit);
  params_.setZero();
  for (std::size_t l = 0; l < n_dense(); ++l) {
    auto w = weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = cfg_.init_sigma * rng.normal();
  }
  if (cfg_.batch_norm)
    for (std::size_t h = 0; h < hidden_count(); ++h) bn_gamma(h).setOnes();
  for (std::size_t h = 0; h < hidden_count(); ++h) {
    run_mean_[h].setZero();
    run_var_[h].setOnes();
  }
}

void Mlp::fit_standardizer(const Eigen::MatrixXd& x) {
  if (x.cols() != static_cast<Eigen::Index>(cfg_.input_dim))
    throw DataError("feature width does not match the model input");
  if (x.rows() == 0) throw DataError("cannot fit a standardiser on zero rows");
  in_mean_ = x.colwise().mean().transpose();
  in_scale_ = ((x.rowwise() - in_mean_.transpose()).array().square().colwise().mean().sqrt())
                  .transpose();
  for (Eigen::Index j = 0; j < in_scale_.size(); ++j)
    if (!(in_scale_[j] > 0.0)) in_scale_[j] = 1.0;
}

void Mlp::set_standardizer(Eigen::VectorXd mean, Eigen::VectorXd scale) {
  if (mean.size() != static_cast<Eigen::Index>(cfg_.input_dim) || scale.size() != mean.size())
    throw DataError("standardiser size does not match the model input");
  in_mean_ = std::move(mean);
  in_scale_ = std::move(scale);
}

Eigen::VectorXd Mlp::run(const Eigen::MatrixXd& x, Mode mode, Cache& cache) const {
  if (x.cols() != static_cast<Eigen::Index>(cfg_.input_dim))
    throw DataError("feature width does not match the model input");
  if (mode == Mode::Train && cfg_.batch_norm && hidden_count() > 0 && x.rows() < 2)
    throw DataError("train-mode batch norm needs at least 2 rows");

  Eigen::MatrixXd a = ((x.rowwise() - in_mean_.transpose()).array().rowwise() /
                       in_scale_.transpose().array())
                          .matrix();
  for (std::size_t l = 0;; ++l) {
    Eigen::MatrixXd z = a * weight(l).transpose();
    z.rowwise() += bias(l).transpose();
    cache.input.push_back(std::move(a));
    if (l + 1 == n_dense()) return z.col(0);

    Eigen::MatrixXd h = z.cwiseMax(0.0);
    cache.pre.push_back(std::move(z));
    if (!cfg_.batch_norm) {
      a = std::move(h);
      continue;
    }
    Eigen::RowVectorXd mu;
    Eigen::RowVectorXd var;
    if (mode == Mode::Train) {
      mu = h.colwise().mean();
      var = (h.rowwise() - mu).array().square().colwise().mean();
    } else {
      mu = run_mean_[l].transpose();
      var = run_var_[l].transpose();
    }
    const Eigen::RowVectorXd inv_std = (var.array() + cfg_.bn_eps).rsqrt().matrix();
    Eigen::MatrixXd xhat = ((h.rowwise() - mu).array().rowwise() * inv_std.array()).matrix();
    a = (xhat.array().rowwise() * bn_gamma(l).transpose().array()).matrix();
    a.rowwise() += bn_beta(l).transpose();
    cache.xhat.push_back(std::move(xhat));
    cache.inv_std.push_back(inv_std);
    cache.batch_mean.push_back(std::move(mu));
    cache.batch_var.push_back(std::move(var));
  }
}

void Mlp::update_running_stats(const Cache& cache, Eigen::Index n) {
  const double m = cfg_.bn_momentum;
  const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
  for (std::size_t l = 0; l < cache.batch_mean.size(); ++l) {
    run_mean_[l] = (1.0 - m) * run_mean_[l] + m * cache.batch_mean[l].transpose();
    run_var_[l] = (1.0 - m) * run_var_[l] + m * unbias * cache.batch_var[l].transpose();
  }
}

Eigen::VectorXd Mlp::forward(const Eigen::MatrixXd& x, Mode mode, bool update_running) {
  Cache cache;
  Eigen::VectorXd out = run(x, mode, cache);
  if (mode == Mode::Train && update_running) update_running_stats(cache, x.rows());
  return out;
}

Eigen::VectorXd Mlp::predict(const Eigen::MatrixXd& x) const {
  Cache cache;
  return run(x, Mode::Eval, cache);
}

double Mlp::loss_and_grad(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, Mode mode, Eigen::VectorXd* grad,
                          bool update_running) {
  if (y.size() != x.rows()) throw DataError("label count does not match rows");
  const Eigen::VectorXd weights = w.size() == 0 ? Eigen::VectorXd::Ones(x.rows()) : w;
  if (weights.size() != x.rows()) throw DataError("weight count does not match rows");
  const double wsum = weights.sum();
  if (!(wsum > 0.0)) throw DataError("loss weights must sum to a positive value");

  Cache cache;
  const Eigen::VectorXd pred = run(x, mode, cache);
  if (mode == Mode::Train && update_running) update_running_stats(cache, x.rows());
  const Eigen::VectorXd err = pred - y;
  const double loss = weights.dot(err.cwiseProduct(err)) / wsum;
  if (!grad) return loss;

  grad->setZero(params_.size());
  Eigen::MatrixXd delta = (2.0 / wsum) * weights.cwiseProduct(err);  // n x 1
  for (std::size_t l = n_dense(); l-- > 0;) {
    const bool hidden = l + 1 < n_dense();
    if (hidden) {
      // delta is dL/d(batch-norm output); walk back through BN and ReLU.
      if (cfg_.batch_norm) {
        const Eigen::MatrixXd& xhat = cache.xhat[l];
        const Eigen::RowVectorXd& inv_std = cache.inv_std[l];
        Eigen::Map<Eigen::VectorXd>(grad->data() + g_off_[l], delta.cols()) =
            (delta.array() * xhat.array()).colwise().sum().transpose();
        Eigen::Map<Eigen::VectorXd>(grad->data() + beta_off_[l], delta.cols()) =
            delta.colwise().sum().transpose();
        const Eigen::MatrixXd dxhat =
            (delta.array().rowwise() * bn_gamma(l).transpose().array()).matrix();
        if (mode == Mode::Train) {
          const auto n = static_cast<double>(delta.rows());
          const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
          const Eigen::RowVectorXd sum_dx = (dxhat.array() * xhat.array()).colwise().sum();
          Eigen::MatrixXd centred = (n * dxhat).rowwise() - sum_d;
          centred -= (xhat.array().rowwise() * sum_dx.array()).matrix();
          delta = (centred.array().rowwise() * (inv_std.array() / n)).matrix();
        } else {
          delta = (dxhat.array().rowwise() * inv_std.array()).matrix();
        }
      }
      delta = (delta.array() * (cache.pre[l].array() > 0.0).cast<double>()).matrix();
    }
    const Eigen::MatrixXd& input = cache.input[l];
    Eigen::Map<Eigen::MatrixXd>(grad->data() + w_off_[l], delta.cols(), input.cols()) =
        delta.transpose() * input;
    Eigen::Map<Eigen::VectorXd>(grad->data() + b_off_[l], delta.cols()) =
        delta.colwise().sum().transpose();
    if (l > 0) delta = delta * weight(l);
  }
  return loss;
}

double Mlp::min_abs_preactivation(const Eigen::MatrixXd& x) {
  Cache cache;
  run(x, Mode::Train, cache);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& z : cache.pre) m = std::min(m, z.cwiseAbs().minCoeff());
  return m;
}

bool EarlyStopping::update(std::size_t epoch, double val_loss) {
  improved_ = val_loss < best_;
  if (improved_) {
    best_ = val_loss;
    best_epoch_ = epoch;
    since_best_ = 0;
    return false;
  }
  ++since_best_;
  return since_best_ >= patience_;
}

namespace {

struct Metrics {
  double mse;
  double mae;
};

Metrics weighted_errors(const Eigen::VectorXd& pred, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& w) {
  const Eigen::VectorXd err = pred - y;
  if (w.size() == 0) return {err.squaredNorm() / static_cast<double>(err.size()), err.cwiseAbs().mean()};
  const double wsum = w.sum();
  return {w.dot(err.cwiseProduct(err)) / wsum, w.dot(err.cwiseAbs()) / wsum};
}

}  // namespace

TrainResult train(Mlp& model, const TrainData& train_set, const TrainData& val_set) {
  const MlpConfig& cfg = model.config();
  const Eigen::Index n = train_set.x.rows();
  if (n == 0 || val_set.x.rows() == 0) throw DataError("training and validation sets must be nonempty");
  if (train_set.y.size() != n || val_set.y.size() != val_set.x.rows())
    throw DataError("label count does not match rows");
  if (train_set.w.size() != 0 && train_set.w.size() != n)
    throw DataError("weight count does not match rows");

  const bool needs_pairs = cfg.batch_norm && model.widths().size() > 2;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.n_params()));
  Eigen::VectorXd v = m;
  Eigen::VectorXd grad;
  std::size_t step = 0;

  EarlyStopping stopper(cfg.patience);
  Eigen::VectorXd best_params = model.params();
  auto best_mean = model.running_mean();
  auto best_var = model.running_var();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    RngStream rng(cfg.seed, epoch, rng_domain::kShuffle);
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(i + 1)]);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const auto bn = static_cast<Eigen::Index>(end - start);
      if (needs_pairs && bn < 2) continue;
      Eigen::MatrixXd xb(bn, train_set.x.cols());
      Eigen::VectorXd yb(bn);
      Eigen::VectorXd wb(train_set.w.size() ? bn : 0);
      for (Eigen::Index k = 0; k < bn; ++k) {
        const Eigen::Index r = order[start + static_cast<std::size_t>(k)];
        xb.row(k) = train_set.x.row(r);
        yb[k] = train_set.y[r];
        if (wb.size()) wb[k] = train_set.w[r];
      }
      const double loss = model.loss_and_grad(xb, yb, wb, Mode::Train, &grad, true);
      if (!std::isfinite(loss))
        throw DataError("training diverged: non-finite loss at epoch " + std::to_string(epoch));

      ++step;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      auto& p = model.params();
      p -= cfg.lr * ((m / c1).array() / ((v / c2).array().sqrt() + cfg.adam_eps)).matrix() +
           cfg.lr * cfg.weight_decay * p;
    }

    EpochStats stats;
    const auto tr = weighted_errors(model.predict(train_set.x), train_set.y, train_set.w);
    const auto va = weighted_errors(model.predict(val_set.x), val_set.y, val_set.w);
    stats.train_mse = tr.mse;
    stats.train_mae = tr.mae;
    stats.val_mse = va.mse;
    stats.val_mae = va.mae;
    if (!std::isfinite(va.mse))
      throw DataError("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.push_back(stats);
    result.epochs_run = epoch;

    const bool stop = stopper.update(epoch, va.mse);
    if (stopper.improved()) {
      best_params = model.params();
      best_mean = model.running_mean();
      best_var = model.running_var();
    }
    if (stop) break;
  }
  model.params() = best_params;
  model.running_mean() = best_mean;
  model.running_var() = best_var;
  result.best_epoch = stopper.best_epoch();
  return result;
}

GradcheckResult gradcheck(Mlp& model, const TrainData& batch, double h, std::size_t max_params,
                          std::uint64_t seed) {
  Eigen::VectorXd grad;
  model.loss_and_grad(batch.x, batch.y, batch.w, Mode::Train, &grad, false);

  std::vector<std::size_t> idx(model.n_params());
  std::iota(idx.begin(), idx.end(), 0);
  if (max_params > 0 && max_params < idx.size()) {
    RngStream rng(seed, 0, rng_domain::kSplit);
    for (std::size_t i = 0; i < max_params; ++i)
      std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    idx.resize(max_params);
  }

  GradcheckResult res;
  auto& p = model.params();
  for (std::size_t i : idx) {
    const auto k = static_cast<Eigen::Index>(i);
    const double orig = p[k];
    p[k] = orig + h;
    const double lp = model.loss_and_grad(batch.x, batch.y, batch.w, Mode::Train, nullptr, false);
    p[k] = orig - h;
    const double lm = model.loss_and_grad(batch.x, batch.y, batch.w, Mode::Train, nullptr, false);
    p[k] = orig;
    const double numeric = (lp - lm) / (2.0 * h);
    const double analytic = grad[k];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1.0e-7});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(analytic - numeric) / denom);
    ++res.n_checked;
  }
  return res;
}

namespace {

constexpr std::array<char, 8> kModelMagic = {'T', 'F', 'O', 'M', 'L', 'P', '\0', '\1'};
constexpr std::uint32_t kModelVersion = 1;

class BinOut {
 public:
  explicit BinOut(std::ofstream& o) : o_(o) {}
  template <typename T>
  void put(T v) {
    o_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void vec(const Eigen::VectorXd& v) {
    put(static_cast<std::uint64_t>(v.size()));
    o_.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * static_cast<Eigen::Index>(sizeof(double))));
  }

 private:
  std::ofstream& o_;
};

class BinIn {
 public:
  BinIn(std::ifstream& i, const std::string& path) : i_(i), path_(path) {}
  template <typename T>
  T get() {
    T v{};
    i_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!i_) throw DataError("truncated model file '" + path_ + "'");
    return v;
  }
  Eigen::VectorXd vec() {
    const auto n = get<std::uint64_t>();
    if (n > (1u << 28)) throw DataError("corrupt model file '" + path_ + "'");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    i_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!i_) throw DataError("truncated model file '" + path_ + "'");
    return v;
  }

 private:
  std::ifstream& i_;
  const std::string& path_;
};

}  // namespace

void save_model(const std::string& path, const Mlp& model) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(kModelMagic.data(), kModelMagic.size());
  BinOut b(out);
  const MlpConfig& c = model.config();
  b.put(kModelVersion);
  b.put(static_cast<std::uint64_t>(c.input_dim));
  b.put(static_cast<std::uint64_t>(c.first_hidden));
  b.put(static_cast<std::uint64_t>(c.hidden_override.size()));
  for (std::size_t w : c.hidden_override) b.put(static_cast<std::uint64_t>(w));
  b.put(static_cast<std::uint8_t>(c.batch_norm));
  for (double v : {c.lr, c.weight_decay, c.beta1, c.beta2, c.adam_eps}) b.put(v);
  for (std::size_t v : {c.batch_size, c.max_epochs, c.patience}) b.put(static_cast<std::uint64_t>(v));
  for (double v : {c.init_sigma, c.bn_momentum, c.bn_eps}) b.put(v);
  b.put(c.seed);
  b.vec(model.input_mean());
  b.vec(model.input_scale());
  b.vec(model.params());
  for (std::size_t h = 0; h < model.running_mean().size(); ++h) {
    b.vec(model.running_mean()[h]);
    b.vec(model.running_var()[h]);
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

Mlp load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kModelMagic) throw DataError("'" + path + "' is not a model file");
  BinIn b(in, path);
  if (b.get<std::uint32_t>() != kModelVersion) throw DataError("unsupported model file version");
  MlpConfig c;
  c.input_dim = b.get<std::uint64_t>();
  c.first_hidden = b.get<std::uint64_t>();
  const auto n_override = b.get<std::uint64_t>();
  if (n_override > 64) throw DataError("corrupt model file '" + path + "'");
  for (std::uint64_t i = 0; i < n_override; ++i) c.hidden_override.push_back(b.get<std::uint64_t>());
  c.batch_norm = b.get<std::uint8_t>() != 0;
  c.lr = b.get<double>();
  c.weight_decay = b.get<double>();
  c.beta1 = b.get<double>();
  c.beta2 = b.get<double>();
  c.adam_eps = b.get<double>();
  c.batch_size = b.get<std::uint64_t>();
  c.max_epochs = b.get<std::uint64_t>();
  c.patience = b.get<std::uint64_t>();
  c.init_sigma = b.get<double>();
  c.bn_momentum = b.get<double>();
  c.bn_eps = b.get<double>();
  c.seed = b.get<std::uint64_t>();
  Mlp model(c);
  auto mean = b.vec();
  auto scale = b.vec();
  model.set_standardizer(std::move(mean), std::move(scale));
  auto params = b.vec();
  if (params.size() != model.params().size()) throw DataError("model parameter count mismatch");
  model.params() = std::move(params);
  for (std::size_t h = 0; h < model.running_mean().size(); ++h) {
    model.running_mean()[h] = b.vec();
    model.running_var()[h] = b.vec();
    if (model.running_mean()[h].size() != static_cast<Eigen::Index>(model.widths()[h + 1]) ||
        model.running_var()[h].size() != model.running_mean()[h].size())
      throw DataError("model running statistics have the wrong size");
  }
  return model;
}

}  // namespace tfo
