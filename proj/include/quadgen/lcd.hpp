#pragma once

// Latent category distribution VAE over CBoW counts.
//
//   mu       = f_mu(x)        f(x) = W2 tanh(W1 x + b1) + b2, hidden width 256
//   log_sig  = f_sigma(x)
//   z_pre    = mu + exp(log_sig) * eps,   eps ~ N(0, I)
//   z        = softmax(z_pre)             K-simplex
//   r_lcd    = W_lcd^T z                  W_lcd: K x dim
//   r        = W_R r_lcd                  W_R:   L x dim
//   x_hat    = softmax(r)
//
// Loss (negative ELBO) with a standard normal prior on z_pre:
//   recon = -sum_l x_l log x_hat_l
//   kl    = 0.5 sum_k (mu_k^2 + sig_k^2 - 1 - 2 log_sig_k)

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "quadgen/error.hpp"
#include "quadgen/numeric.hpp"
#include "quadgen/params_io.hpp"

namespace quadgen {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct LcdShape {
  Index vocab = 0;       // L
  Index categories = 0;  // K
  Index dim = 32;
  Index hidden = 256;

  friend bool operator==(const LcdShape&, const LcdShape&) = default;
};

struct LcdParams {
  MatrixXd mu_w1;  // hidden x L
  VectorXd mu_b1;
  MatrixXd mu_w2;  // K x hidden
  VectorXd mu_b2;
  MatrixXd sigma_w1;
  VectorXd sigma_b1;
  MatrixXd sigma_w2;
  VectorXd sigma_b2;
  MatrixXd w_lcd;  // K x dim
  MatrixXd w_r;    // L x dim

  static LcdParams zeros(const LcdShape& s) {
    LcdParams p;
    p.mu_w1 = MatrixXd::Zero(s.hidden, s.vocab);
    p.mu_b1 = VectorXd::Zero(s.hidden);
    p.mu_w2 = MatrixXd::Zero(s.categories, s.hidden);
    p.mu_b2 = VectorXd::Zero(s.categories);
    p.sigma_w1 = p.mu_w1;
    p.sigma_b1 = p.mu_b1;
    p.sigma_w2 = p.mu_w2;
    p.sigma_b2 = p.mu_b2;
    p.w_lcd = MatrixXd::Zero(s.categories, s.dim);
    p.w_r = MatrixXd::Zero(s.vocab, s.dim);
    return p;
  }

  /// Weights uniform in (-0.05, 0.05), biases zero.
  static LcdParams init(const LcdShape& s, std::uint64_t seed, double limit = 0.05) {
    auto p = zeros(s);
    std::mt19937_64 rng(seed);
    fill_uniform(p.mu_w1, limit, rng);
    fill_uniform(p.mu_w2, limit, rng);
    fill_uniform(p.sigma_w1, limit, rng);
    fill_uniform(p.sigma_w2, limit, rng);
    fill_uniform(p.w_lcd, limit, rng);
    fill_uniform(p.w_r, limit, rng);
    return p;
  }

  LcdShape shape() const { return {w_r.rows(), w_lcd.rows(), w_lcd.cols(), mu_w1.rows()}; }

  /// Calls f(name, tensor) for every parameter tensor (MatrixXd& or VectorXd&).
  template <class Self, class F>
  static void visit(Self& p, F&& f) {
    f("lcd.mu_w1", p.mu_w1);
    f("lcd.mu_b1", p.mu_b1);
    f("lcd.mu_w2", p.mu_w2);
    f("lcd.mu_b2", p.mu_b2);
    f("lcd.sigma_w1", p.sigma_w1);
    f("lcd.sigma_b1", p.sigma_b1);
    f("lcd.sigma_w2", p.sigma_w2);
    f("lcd.sigma_b2", p.sigma_b2);
    f("lcd.w_lcd", p.w_lcd);
    f("lcd.w_r", p.w_r);
  }

  /// Calls f(a_tensor, b_tensor) pairwise; shapes must match.
  template <class A, class B, class F>
  static void zip(A& a, B& b, F&& f) {
    f(a.mu_w1, b.mu_w1);
    f(a.mu_b1, b.mu_b1);
    f(a.mu_w2, b.mu_w2);
    f(a.mu_b2, b.mu_b2);
    f(a.sigma_w1, b.sigma_w1);
    f(a.sigma_b1, b.sigma_b1);
    f(a.sigma_w2, b.sigma_w2);
    f(a.sigma_b2, b.sigma_b2);
    f(a.w_lcd, b.w_lcd);
    f(a.w_r, b.w_r);
  }

  bool all_finite() const {
    bool ok = true;
    visit(*this, [&](const char*, const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }

  std::vector<NamedTensor> to_tensors() const {
    std::vector<NamedTensor> out;
    visit(*this, [&](const char* name, const auto& t) { out.emplace_back(name, MatrixXd(t)); });
    return out;
  }

  static LcdParams from_tensors(const std::vector<NamedTensor>& ts) {
    const auto& w_lcd = find_tensor(ts, "lcd.w_lcd");
    const auto& w_r = find_tensor(ts, "lcd.w_r");
    const auto& w1 = find_tensor(ts, "lcd.mu_w1");
    LcdShape s{w_r.rows(), w_lcd.rows(), w_lcd.cols(), w1.rows()};
    if (w_r.cols() != s.dim) throw DataError("lcd.w_r / lcd.w_lcd dim mismatch");
    auto p = zeros(s);
    visit(p, [&](const char* name, auto& t) {
      const auto& m = find_tensor(ts, name, t.rows(), t.cols());
      t = m;
    });
    return p;
  }
};

struct LcdForwardTrace {
  VectorXd mu_hidden;
  VectorXd sigma_hidden;
  VectorXd mu;
  VectorXd log_sigma;
  VectorXd eps;
  VectorXd z_pre;
  VectorXd z;
  VectorXd r_lcd;
  VectorXd r;
  VectorXd log_x_hat;
  VectorXd x_hat;
};

/// Forward pass with explicit noise `eps` (K-vector). Throws NumericError naming the
/// first layer that produced a non-finite value.
inline LcdForwardTrace lcd_forward(const VectorXd& x, const LcdParams& p, const VectorXd& eps) {
  const auto s = p.shape();
  if (x.size() != s.vocab) throw Error("lcd_forward: feature length " + std::to_string(x.size()) + " != L " +
                                       std::to_string(s.vocab));
  if (eps.size() != s.categories) throw Error("lcd_forward: noise length != K");
  LcdForwardTrace t;
  t.mu_hidden = (p.mu_w1 * x + p.mu_b1).array().tanh();
  require_finite(t.mu_hidden, "f_mu.hidden");
  t.mu = p.mu_w2 * t.mu_hidden + p.mu_b2;
  require_finite(t.mu, "f_mu.out");
  t.sigma_hidden = (p.sigma_w1 * x + p.sigma_b1).array().tanh();
  require_finite(t.sigma_hidden, "f_sigma.hidden");
  t.log_sigma = p.sigma_w2 * t.sigma_hidden + p.sigma_b2;
  require_finite(t.log_sigma, "f_sigma.out");
  t.eps = eps;
  t.z_pre = t.mu.array() + t.log_sigma.array().exp() * eps.array();
  require_finite(t.z_pre, "reparameterize");
  t.z = softmax(t.z_pre);
  t.r_lcd = p.w_lcd.transpose() * t.z;
  require_finite(t.r_lcd, "f_lcd");
  t.r = p.w_r * t.r_lcd;
  require_finite(t.r, "f_R");
  t.log_x_hat = log_softmax(t.r);
  t.x_hat = t.log_x_hat.array().exp();
  return t;
}

struct LcdLoss {
  double recon = 0.0;
  double kl = 0.0;
  double neg_elbo = 0.0;
};

inline double gaussian_kl(const VectorXd& mu, const VectorXd& log_sigma) {
  return 0.5 * (mu.array().square() + (2.0 * log_sigma.array()).exp() - 1.0 - 2.0 * log_sigma.array()).sum();
}

inline LcdLoss lcd_loss(const VectorXd& x, const LcdForwardTrace& t) {
  LcdLoss l;
  l.recon = -x.dot(t.log_x_hat);
  l.kl = gaussian_kl(t.mu, t.log_sigma);
  l.neg_elbo = l.recon + l.kl;
  return l;
}

struct LcdBackwardOptions {
  double recon_weight = 1.0;
  double kl_weight = 1.0;
  const VectorXd* r_lcd_grad = nullptr;  // extra dLoss/dR_lcd from downstream consumers
};

/// Gradient of recon_weight*recon + kl_weight*kl (+ upstream through R_lcd) w.r.t. every parameter.
inline LcdParams lcd_backward(const VectorXd& x, const LcdParams& p, const LcdForwardTrace& t,
                              const LcdBackwardOptions& opt = {}) {
  auto g = LcdParams::zeros(p.shape());
  VectorXd d_r = opt.recon_weight * (x.sum() * t.x_hat - x);
  g.w_r = d_r * t.r_lcd.transpose();
  VectorXd d_rlcd = p.w_r.transpose() * d_r;
  if (opt.r_lcd_grad) d_rlcd += *opt.r_lcd_grad;
  g.w_lcd = t.z * d_rlcd.transpose();
  VectorXd d_z = p.w_lcd * d_rlcd;
  VectorXd d_zpre = softmax_backward(t.z, d_z);

  const VectorXd sigma = t.log_sigma.array().exp();
  VectorXd d_mu = d_zpre + opt.kl_weight * t.mu;
  VectorXd d_logsig = (d_zpre.array() * sigma.array() * t.eps.array()).matrix() +
                      opt.kl_weight * (sigma.array().square() - 1.0).matrix();

  auto ffn_back = [&x](const VectorXd& d_out, const VectorXd& hidden, const MatrixXd& w2, MatrixXd& gw1,
                       VectorXd& gb1, MatrixXd& gw2, VectorXd& gb2) {
    gw2 = d_out * hidden.transpose();
    gb2 = d_out;
    VectorXd d_pre = (w2.transpose() * d_out).array() * (1.0 - hidden.array().square());
    gw1 = d_pre * x.transpose();
    gb1 = d_pre;
  };
  ffn_back(d_mu, t.mu_hidden, p.mu_w2, g.mu_w1, g.mu_b1, g.mu_w2, g.mu_b2);
  ffn_back(d_logsig, t.sigma_hidden, p.sigma_w2, g.sigma_w1, g.sigma_b1, g.sigma_w2, g.sigma_b2);
  return g;
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  Index worst_index = -1;
};

/// Relative error used by the gradient checks: |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Derivative of f at 0 by central differences extrapolated over a shrinking step
/// (Ridders). Starting from h, the step shrinks by 1.4 per column; the table entry with
/// the smallest error estimate wins. Plain differences at a fixed step lose either to
/// cancellation or to truncation once gradients drop far below the loss magnitude.
template <class F>
double central_difference(F&& f, double h) {
  constexpr int kTable = 10;
  constexpr double kShrink = 1.4, kShrink2 = kShrink * kShrink, kSafe = 2.0;
  double a[kTable][kTable];
  double best_err = std::numeric_limits<double>::infinity(), best = 0.0;
  a[0][0] = (f(h) - f(-h)) / (2.0 * h);
  best = a[0][0];
  for (int i = 1; i < kTable; ++i) {
    h /= kShrink;
    a[0][i] = (f(h) - f(-h)) / (2.0 * h);
    double fac = kShrink2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double err = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (err <= best_err) {
        best_err = err;
        best = a[j][i];
      }
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * best_err) break;
  }
  return best;
}

/// Central finite differences of neg_elbo (fixed eps) against lcd_backward, over every parameter.
inline GradCheckResult lcd_grad_check(const VectorXd& x, const LcdParams& params, const VectorXd& eps,
                                      double h = 1e-2) {
  const auto analytic = lcd_backward(x, params, lcd_forward(x, params, eps));
  auto probe = params;
  GradCheckResult res;
  std::vector<double*> probe_ptrs;
  std::vector<const double*> grad_ptrs;
  std::vector<std::string> names;
  LcdParams::visit(probe, [&](const char* name, auto& t) {
    for (Index i = 0; i < t.size(); ++i) {
      probe_ptrs.push_back(t.data() + i);
      names.emplace_back(name);
    }
  });
  LcdParams::visit(analytic, [&](const char*, const auto& t) {
    for (Index i = 0; i < t.size(); ++i) grad_ptrs.push_back(t.data() + i);
  });
  for (std::size_t i = 0; i < probe_ptrs.size(); ++i) {
    double& v = *probe_ptrs[i];
    const double orig = v;
    auto loss = [&](double d) {
      v = orig + d;
      const double l = lcd_loss(x, lcd_forward(x, probe, eps)).neg_elbo;
      v = orig;
      return l;
    };
    const double err = relative_error(*grad_ptrs[i], central_difference(loss, h));
    if (err > res.max_relative_error) {
      res.max_relative_error = err;
      res.worst_tensor = names[i];
      res.worst_index = static_cast<Index>(i);
    }
  }
  return res;
}

struct LcdInference {
  VectorXd z;
  VectorXd r_lcd;
};

/// Posterior-mean inference (eps = 0).
inline LcdInference infer_lcd(const VectorXd& x, const LcdParams& p) {
  auto t = lcd_forward(x, p, VectorXd::Zero(p.shape().categories));
  return {std::move(t.z), std::move(t.r_lcd)};
}

struct LcdTrainConfig {
  double learning_rate = 0.03;
  std::size_t epochs = 200;
  std::size_t batch_size = 4;
  std::uint64_t seed = 13;
  // KL weight ramps linearly from 1/kl_warmup to 1 over the first kl_warmup epochs
  // (0 = full weight from the start). Reported losses always use the full weight.
  std::size_t kl_warmup = 100;
};

struct LcdTrainReport {
  double initial_loss = 0.0;       // mean neg_elbo at eps = 0 before training
  std::vector<double> epoch_loss;  // mean neg_elbo at eps = 0 after each epoch
  bool diverged = false;
};

/// Mean neg_elbo over the corpus with eps = 0.
inline double lcd_mean_loss(std::span<const VectorXd> corpus, const LcdParams& p) {
  if (corpus.empty()) return 0.0;
  const VectorXd zero = VectorXd::Zero(p.shape().categories);
  double total = 0.0;
  for (const auto& x : corpus) total += lcd_loss(x, lcd_forward(x, p, zero)).neg_elbo;
  return total / static_cast<double>(corpus.size());
}

/// Runs `epochs` epochs of minibatch SGD on neg_elbo, starting from `params` in place.
/// Shared by train_lcd and the alternating seq2seq schedule.
inline void lcd_sgd_epochs(std::span<const VectorXd> corpus, LcdParams& params, const LcdTrainConfig& cfg,
                           std::mt19937_64& rng, LcdTrainReport& report) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index k = params.shape().categories;
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LcdParams checkpoint = params;
    try {
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t end = std::min(order.size(), start + batch);
        auto grad = LcdParams::zeros(params.shape());
        for (std::size_t i = start; i < end; ++i) {
          const auto& x = corpus[order[i]];
          VectorXd eps(k);
          for (Index j = 0; j < k; ++j) eps[j] = normal(rng);
          LcdBackwardOptions bo;
          if (epoch < cfg.kl_warmup)
            bo.kl_weight = static_cast<double>(epoch + 1) / static_cast<double>(cfg.kl_warmup);
          auto g = lcd_backward(x, params, lcd_forward(x, params, eps), bo);
          LcdParams::zip(grad, g, [](auto& acc, const auto& d) { acc += d; });
        }
        const double scale = cfg.learning_rate / static_cast<double>(end - start);
        LcdParams::zip(params, grad, [scale](auto& w, const auto& d) { w -= scale * d; });
      }
      const double loss = lcd_mean_loss(corpus, params);
      if (!std::isfinite(loss) || !params.all_finite()) throw NumericError("lcd", "loss diverged");
      report.epoch_loss.push_back(loss);
    } catch (const NumericError&) {
      params = std::move(checkpoint);
      report.diverged = true;
      return;
    }
  }
}

/// Trains from `init`. On divergence returns the last finite parameters with report.diverged set.
inline LcdParams train_lcd(std::span<const VectorXd> corpus, const LcdParams& init, const LcdTrainConfig& cfg,
                           LcdTrainReport* report = nullptr) {
  if (corpus.empty()) throw DataError("train_lcd: empty corpus");
  LcdTrainReport local;
  auto& rep = report ? *report : local;
  rep.initial_loss = lcd_mean_loss(corpus, init);
  LcdParams params = init;
  std::mt19937_64 rng(cfg.seed);
  lcd_sgd_epochs(corpus, params, cfg, rng, rep);
  return params;
}

}  // namespace quadgen
