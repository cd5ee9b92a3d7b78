#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "quadgen/cbow.hpp"
#include "quadgen/lcd.hpp"
#include "support.hpp"

using namespace quadgen;

namespace {

VectorXd random_counts(std::mt19937_64& rng, Index n) {
  std::uniform_int_distribution<int> c(0, 3);
  VectorXd x(n);
  for (Index i = 0; i < n; ++i) x[i] = c(rng);
  return x;
}

VectorXd random_normal(std::mt19937_64& rng, Index n, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

struct MiniCorpus {
  CategorySchema schema;
  std::vector<Sample> samples;
  CbowVocab vocab;
  std::vector<VectorXd> xs;
};

MiniCorpus mini() {
  MiniCorpus m{qtest::mini_schema(), qtest::mini_samples(), {}, {}};
  m.vocab = build_cbow_vocab(m.samples);
  for (const auto& s : m.samples) m.xs.push_back(featurize(s.text, m.vocab));
  return m;
}

double dot_params(const LcdParams& a, const LcdParams& b) {
  double acc = 0.0;
  LcdParams::zip(a, b, [&](const auto& x, const auto& y) { acc += x.cwiseProduct(y).sum(); });
  return acc;
}

}  // namespace

TEST(LcdForward, ZeroParamsGiveUniformOutputs) {
  auto p = LcdParams::zeros({7, 3, 4, 5});
  VectorXd x = VectorXd::Constant(7, 2.0);
  for (const VectorXd& eps : {VectorXd::Zero(3).eval(), VectorXd::Constant(3, 1.5).eval()}) {
    auto t = lcd_forward(x, p, eps);
    EXPECT_TRUE(t.z.isApprox(VectorXd::Constant(3, 1.0 / 3), 1e-12));
    EXPECT_TRUE(t.x_hat.isApprox(VectorXd::Constant(7, 1.0 / 7), 1e-12));
  }
}

TEST(LcdForward, DeterministicAndMatchesNaiveRlcd) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = LcdParams::init({9, 4, 6, 12}, rng(), 0.8);
    auto x = random_counts(rng, 9);
    auto eps = random_normal(rng, 4);
    auto t = lcd_forward(x, p, eps);
    auto t2 = lcd_forward(x, p, eps);
    EXPECT_EQ(t.z, t2.z);
    EXPECT_EQ(t.x_hat, t2.x_hat);
    for (Index d = 0; d < 6; ++d) {
      double naive = 0.0;
      for (Index k = 0; k < 4; ++k) naive += t.z[k] * p.w_lcd(k, d);
      EXPECT_NEAR(t.r_lcd[d], naive, 1e-12);
    }
    EXPECT_NEAR(t.z.sum(), 1.0, 1e-6);
    EXPECT_NEAR(t.x_hat.sum(), 1.0, 1e-6);
    EXPECT_GE(t.z.minCoeff(), 0.0);
    EXPECT_GE(t.x_hat.minCoeff(), 0.0);
  }
}

TEST(LcdForward, SimplexHoldsForExtremeInputs) {
  std::mt19937_64 rng(2);
  auto p = LcdParams::init({5, 3, 4, 8}, 3, 3.0);
  for (double scale : {0.0, 1.0, 50.0, 1e3}) {
    VectorXd x = random_counts(rng, 5) * scale;
    auto t = lcd_forward(x, p, random_normal(rng, 3, 3.0));
    EXPECT_NEAR(t.z.sum(), 1.0, 1e-6);
    EXPECT_NEAR(t.x_hat.sum(), 1.0, 1e-6);
    EXPECT_TRUE(std::isfinite(lcd_loss(x, t).recon));
  }
}

TEST(LcdForward, ShapeMismatchAndNonFiniteNamed) {
  auto p = LcdParams::init({5, 3, 4, 8}, 3);
  EXPECT_THROW(lcd_forward(VectorXd::Zero(4), p, VectorXd::Zero(3)), Error);
  EXPECT_THROW(lcd_forward(VectorXd::Zero(5), p, VectorXd::Zero(2)), Error);
  p.w_lcd(0, 0) = std::numeric_limits<double>::infinity();
  try {
    lcd_forward(VectorXd::Ones(5), p, VectorXd::Zero(3));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.layer(), "f_lcd");
  }
}

TEST(LcdLoss, KlClosedFormExamples) {
  EXPECT_DOUBLE_EQ(gaussian_kl(VectorXd::Zero(4), VectorXd::Zero(4)), 0.0);
  VectorXd mu = VectorXd::Zero(3);
  mu[0] = 1.0;
  EXPECT_DOUBLE_EQ(gaussian_kl(mu, VectorXd::Zero(3)), 0.5);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    auto m = random_normal(rng, 3), s = random_normal(rng, 3);
    EXPECT_GE(gaussian_kl(m, s), 0.0);
  }
  EXPECT_GT(gaussian_kl(VectorXd::Zero(2), VectorXd::Constant(2, 1e-3)), 0.0);
  EXPECT_LE(gaussian_kl(VectorXd::Zero(2), VectorXd::Zero(2)), 1e-9);
}

TEST(LcdLoss, KlMatchesMonteCarlo) {
  VectorXd mu(3), ls(3);
  mu << 0.5, -1.0, 0.3;
  ls << -0.2, 0.4, 0.1;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01(0.0, 1.0);
  const int n = 1'000'000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (Index k = 0; k < 3; ++k) {
      const double e = n01(rng);
      const double z = mu[k] + std::exp(ls[k]) * e;
      // log q(z) - log p(z), constants cancel
      acc += (-0.5 * e * e - ls[k]) - (-0.5 * z * z);
    }
  const double mc = acc / n;
  const double closed = gaussian_kl(mu, ls);
  EXPECT_LT(std::abs(mc - closed) / closed, 0.01) << mc << " vs " << closed;
}

TEST(LcdLoss, ReconIsNegatedMultinomialLogLikelihood) {
  std::mt19937_64 rng(5);
  auto p = LcdParams::init({6, 2, 4, 8}, 6, 0.7);
  auto x = random_counts(rng, 6);
  auto t = lcd_forward(x, p, VectorXd::Zero(2));
  double naive = 0.0;
  for (Index l = 0; l < 6; ++l) naive -= x[l] * std::log(t.x_hat[l]);
  auto l = lcd_loss(x, t);
  EXPECT_NEAR(l.recon, naive, 1e-10);
  EXPECT_DOUBLE_EQ(l.neg_elbo, l.recon + l.kl);
}

TEST(LcdGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 3; ++trial) {
    auto p = LcdParams::init({10, 3, 8, 256}, rng(), 0.3);
    auto x = random_counts(rng, 10);
    auto eps = random_normal(rng, 3);
    auto r = lcd_grad_check(x, p, eps);
    EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_tensor << "[" << r.worst_index << "]";
  }
}

TEST(LcdGrad, ExtrapolatedDifferenceOnKnownDerivatives) {
  for (double x0 : {-1.3, 0.0, 0.4, 2.5}) {
    EXPECT_NEAR(central_difference([&](double d) { return std::sin(x0 + d); }, 1e-2), std::cos(x0), 1e-11);
    EXPECT_NEAR(central_difference([&](double d) { return 60.0 + 1e-7 * std::exp(x0 + d); }, 1e-2),
                1e-7 * std::exp(x0), 1e-10);  // 1e-4 of the relative-error floor
  }
}

TEST(LcdGrad, ZeroInputGivesZeroReconGradientOnWr) {
  auto p = LcdParams::init({10, 3, 8, 16}, 7, 0.3);
  VectorXd x = VectorXd::Zero(10);
  auto t = lcd_forward(x, p, VectorXd::Constant(3, 0.2));
  auto g = lcd_backward(x, p, t, {.recon_weight = 1.0, .kl_weight = 0.0});
  EXPECT_TRUE(g.w_r.isZero(0.0));
}

TEST(LcdGrad, CentralDifferenceErrorIsSecondOrder) {
  std::mt19937_64 rng(8);
  auto p = LcdParams::init({10, 3, 8, 16}, 9, 0.5);
  auto x = random_counts(rng, 10);
  auto eps = random_normal(rng, 3);
  auto dir = LcdParams::init({10, 3, 8, 16}, 10, 1.0);
  const double analytic = dot_params(lcd_backward(x, p, lcd_forward(x, p, eps)), dir);
  auto f = [&](double s) {
    auto q = p;
    LcdParams::zip(q, dir, [s](auto& a, const auto& d) { a += s * d; });
    return lcd_loss(x, lcd_forward(x, q, eps)).neg_elbo;
  };
  auto err = [&](double h) { return std::abs((f(h) - f(-h)) / (2 * h) - analytic); };
  const double e1 = err(2e-3), e2 = err(4e-3), e3 = err(8e-3);
  EXPECT_NEAR(e2 / e1, 4.0, 0.6);
  EXPECT_NEAR(e3 / e2, 4.0, 0.6);
}

TEST(LcdReparam, SampleVarianceMatchesSigmaSquared) {
  std::mt19937_64 rng(11);
  auto p = LcdParams::init({6, 3, 4, 8}, 12, 0.8);
  p.sigma_b2 << -0.5, 0.0, 0.6;
  auto x = random_counts(rng, 6);
  const auto base = lcd_forward(x, p, VectorXd::Zero(3));
  const int n = 100'000;
  VectorXd sum = VectorXd::Zero(3), sq = VectorXd::Zero(3);
  for (int i = 0; i < n; ++i) {
    auto t = lcd_forward(x, p, random_normal(rng, 3));
    sum += t.z_pre;
    sq += t.z_pre.cwiseAbs2();
  }
  VectorXd mean = sum / n;
  VectorXd var = sq / n - mean.cwiseAbs2();
  VectorXd sigma2 = (2.0 * base.log_sigma.array()).exp();
  for (Index k = 0; k < 3; ++k) {
    EXPECT_LT(std::abs(var[k] - sigma2[k]) / sigma2[k], 0.05) << k;
    EXPECT_NEAR(mean[k], base.mu[k], 0.05);
  }
}

TEST(LcdInfer, ShiftInvarianceOfZ) {
  // softmax(z + c) = softmax(z): a constant added to the mu bias leaves Z unchanged.
  auto p = LcdParams::init({6, 3, 4, 8}, 13, 0.8);
  VectorXd x = VectorXd::LinSpaced(6, 0, 5);
  auto a = infer_lcd(x, p);
  p.mu_b2.array() += 3.7;
  auto b = infer_lcd(x, p);
  EXPECT_TRUE(a.z.isApprox(b.z, 1e-12));
  EXPECT_NEAR(a.z.sum(), 1.0, 1e-12);
  auto c = infer_lcd(x, p);
  EXPECT_EQ(b.z, c.z);
  EXPECT_EQ(b.r_lcd, c.r_lcd);
}

TEST(LcdTrain, ZeroEpochsReturnsInitialization) {
  auto m = mini();
  auto init = LcdParams::init({static_cast<Index>(m.vocab.size()), 2}, 42);
  LcdTrainConfig cfg;
  cfg.epochs = 0;
  LcdTrainReport rep;
  auto p = train_lcd(m.xs, init, cfg, &rep);
  LcdParams::zip(p, init, [](const auto& a, const auto& b) { EXPECT_EQ(a, b); });
  EXPECT_TRUE(rep.epoch_loss.empty());
  EXPECT_THROW(train_lcd(std::vector<VectorXd>{}, init, cfg), DataError);
}

TEST(LcdTrain, MiniCorpusHalvesNegElbo) {
  auto m = mini();
  LcdTrainReport rep;
  auto init = LcdParams::init({static_cast<Index>(m.vocab.size()), static_cast<Index>(m.schema.category_count())}, 42);
  train_lcd(m.xs, init, LcdTrainConfig{}, &rep);
  ASSERT_FALSE(rep.diverged);
  ASSERT_EQ(rep.epoch_loss.size(), 200u);
  EXPECT_LE(rep.epoch_loss.back(), 0.5 * rep.initial_loss)
      << "initial " << rep.initial_loss << " final " << rep.epoch_loss.back();
}

TEST(LcdTrain, ReportedLossUsesFullKlWeight) {
  auto m = mini();
  auto init = LcdParams::init({static_cast<Index>(m.vocab.size()), 2}, 42);
  LcdTrainConfig cfg;
  cfg.epochs = 3;
  LcdTrainReport rep;
  auto p = train_lcd(m.xs, init, cfg, &rep);
  ASSERT_EQ(rep.epoch_loss.size(), 3u);
  EXPECT_DOUBLE_EQ(rep.epoch_loss.back(), lcd_mean_loss(m.xs, p));
  EXPECT_DOUBLE_EQ(rep.initial_loss, lcd_mean_loss(m.xs, init));
  cfg.kl_warmup = 0;
  auto q = train_lcd(m.xs, init, cfg);
  EXPECT_NE(q.mu_w1, p.mu_w1);
}

TEST(LcdTrain, SingleExampleApproachesEntropyFloor) {
  VectorXd x(4);
  x << 3, 1, 2, 1;
  const double floor = -(x.array() * (x.array() / x.sum()).log()).sum();
  std::vector<VectorXd> corpus{x};
  LcdTrainConfig cfg;
  cfg.epochs = 3000;
  cfg.batch_size = 1;
  cfg.learning_rate = 0.05;
  auto p = train_lcd(corpus, LcdParams::init({4, 2, 8, 16}, 14), cfg);
  const auto l = lcd_loss(x, lcd_forward(x, p, VectorXd::Zero(2)));
  EXPECT_GE(l.recon, floor - 1e-9);
  EXPECT_LT(l.recon - floor, 0.01 * floor) << "recon " << l.recon << " floor " << floor;
}

TEST(LcdTrain, DivergenceKeepsLastFiniteParameters) {
  auto m = mini();
  auto init = LcdParams::init({static_cast<Index>(m.vocab.size()), 2}, 42);
  LcdTrainConfig cfg;
  cfg.learning_rate = 1e4;
  cfg.kl_warmup = 0;
  LcdTrainReport rep;
  auto p = train_lcd(m.xs, init, cfg, &rep);
  EXPECT_TRUE(rep.diverged);
  EXPECT_TRUE(p.all_finite());
  EXPECT_LT(rep.epoch_loss.size(), cfg.epochs);
}

TEST(LcdInfer, ArgmaxTracksCategoryOnTrainedMiniCorpus) {
  auto m = mini();
  const auto k = static_cast<Index>(m.schema.category_count());
  auto p = train_lcd(m.xs, LcdParams::init({static_cast<Index>(m.vocab.size()), k}, 42), LcdTrainConfig{});
  // category-pure sentences: every gold quadruple shares one category
  std::vector<std::pair<Index, Index>> pairs;  // (gold category, argmax Z)
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    const auto& gold = m.samples[i].gold;
    if (gold.empty() || std::any_of(gold.begin(), gold.end(),
                                    [&](const Quadruple& q) { return q.category != gold[0].category; }))
      continue;
    Index am;
    infer_lcd(m.xs[i], p).z.maxCoeff(&am);
    pairs.emplace_back(static_cast<Index>(*m.schema.category_index(gold[0].category)), am);
  }
  ASSERT_GT(pairs.size(), 20u);
  // latent slots are unlabeled: score under the best category-to-slot assignment
  std::vector<Index> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::size_t best = 0;
  do {
    std::size_t hit = 0;
    for (auto [c, z] : pairs) hit += perm[static_cast<std::size_t>(c)] == z;
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_GE(static_cast<double>(best), 0.8 * static_cast<double>(pairs.size())) << best << "/" << pairs.size();
}
