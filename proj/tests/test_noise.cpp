#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advbench/error.hpp"
#include "advbench/mlp.hpp"
#include "advbench/noise.hpp"
#include "advbench/rng.hpp"
#include "fd_check.hpp"

using namespace advbench;
using advbench::testing::random_tensor;

namespace {

// Single affine layer, so logits are x W + b and every noise statistic has a
// closed form in the replicas themselves.
Mlp linear_model(std::size_t d, std::size_t k, std::uint64_t seed, double bias_scale = 1.0) {
  return Mlp({d, k}, {random_tensor({d, k}, seed)}, {random_tensor({1, k}, seed + 1, bias_scale)});
}

// Normal entries clamped well inside the pixel range.
Tensor inputs(Shape shape, std::uint64_t seed, double scale, double bound = 0.8) {
  Tensor t = random_tensor(shape, seed, scale);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = std::clamp(t[i], -bound, bound);
  return t;
}

std::vector<double> affine(const Mlp& m, std::span<const double> x) {
  const Tensor& w = m.weights()[0];
  const Tensor& b = m.biases()[0];
  std::vector<double> z(w.cols());
  for (std::size_t c = 0; c < w.cols(); ++c) {
    double s = b[c];
    for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * w.at(j, c);
    z[c] = s;
  }
  return z;
}

}  // namespace

TEST(Replicas, StayInRangeAndDependOnlyOnStream) {
  const std::vector<double> x{-0.99, 0.0, 0.99, 1.0, -1.0};
  NoiseConfig cfg{0.5, 300, 42};
  const Tensor a = make_noisy(x, cfg, 7);
  EXPECT_EQ(a.rows(), 300u);
  EXPECT_EQ(a.cols(), 5u);
  for (double v : a.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(a, make_noisy(x, cfg, 7));
  EXPECT_NE(a, make_noisy(x, cfg, 8));
  NoiseConfig other = cfg;
  other.seed = 43;
  EXPECT_NE(a, make_noisy(x, other, 7));
}

TEST(Replicas, RejectInvalidConfig) {
  const std::vector<double> x{0.0};
  EXPECT_THROW(make_noisy(x, NoiseConfig{0.0, 4, 1}, 0), ConfigError);
  EXPECT_THROW(make_noisy(x, NoiseConfig{-1.0, 4, 1}, 0), ConfigError);
  EXPECT_THROW(make_noisy(x, NoiseConfig{0.1, 0, 1}, 0), ConfigError);
}

TEST(Replicas, SampleMomentsMatchEpsilon) {
  // Interior point: clipping at +-1 is a > 9 sigma event.
  const std::vector<double> x{0.1, -0.05};
  const NoiseConfig cfg{0.1, 10000, 5};
  const Tensor r = make_noisy(x, cfg, 0);
  for (std::size_t j = 0; j < 2; ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < r.rows(); ++i) m += r.at(i, j);
    m /= r.rows();
    for (std::size_t i = 0; i < r.rows(); ++i) v += (r.at(i, j) - m) * (r.at(i, j) - m);
    const double sd = std::sqrt(v / r.rows());
    EXPECT_NEAR(m, x[j], 0.01);
    EXPECT_NEAR(sd, 0.1, 0.01);
  }
}

TEST(LogitSummary, VanishingNoiseReproducesCleanLogits) {
  const Mlp m = Mlp::init({6, 10, 4}, 3);
  const Tensor x = inputs({1, 6}, 9, 0.5);
  const LogitSummary s = logit_summary(m, x.row_span(0), NoiseConfig{1e-10, 32, 1}, 0);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(s.mean_noisy[c], s.clean[c], 1e-8);
}

TEST(LogitSummary, LinearModelMeanEqualsLogitOfMeanReplica) {
  const std::size_t d = 5, k = 3;
  const Mlp m = linear_model(d, k, 11);
  const Tensor x = random_tensor({1, d}, 2, 0.5);
  const NoiseConfig cfg{0.3, 64, 17};
  const LogitSummary s = logit_summary(m, x.row_span(0), cfg, 4, true);
  const Tensor reps = make_noisy(x.row_span(0), cfg, 4);
  std::vector<double> mean_rep(d, 0.0);
  for (std::size_t i = 0; i < reps.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) mean_rep[j] += reps.at(i, j) / reps.rows();
  const auto expected = affine(m, mean_rep);
  const auto clean = affine(m, x.row_span(0));
  for (std::size_t c = 0; c < k; ++c) {
    EXPECT_NEAR(s.mean_noisy[c], expected[c], 1e-12);
    EXPECT_NEAR(s.clean[c], clean[c], 1e-12);
  }
  EXPECT_EQ(s.replica_logits.rows(), 64u);
}

TEST(Calibration, MatchesBruteForcePooledMoments) {
  const std::size_t d = 4, k = 3, n = 60;
  // Small biases so every class is predicted by some sample.
  const Mlp m = linear_model(d, k, 21, 0.05);
  const Tensor benign = inputs({n, d}, 5, 0.3);
  std::vector<std::uint64_t> streams(n);
  std::iota(streams.begin(), streams.end(), 100);
  const NoiseConfig cfg{0.05, 40, 3};
  const CalibrationStats st = benign_calibration(m, benign, streams, cfg);

  // Two-pass moments over explicitly collected gains.
  std::vector<std::vector<double>> pooled(k * k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto clean = affine(m, benign.row_span(i));
    const std::size_t y = argmax(clean);
    const Tensor reps = make_noisy(benign.row_span(i), cfg, streams[i]);
    for (std::size_t r = 0; r < reps.rows(); ++r) {
      const auto z = affine(m, reps.row_span(r));
      for (std::size_t c = 0; c < k; ++c)
        if (c != y) pooled[y * k + c].push_back((z[c] - z[y]) - (clean[c] - clean[y]));
    }
  }
  for (std::size_t y = 0; y < k; ++y) {
    for (std::size_t c = 0; c < k; ++c) {
      const auto& g = pooled[y * k + c];
      if (y == c || g.empty()) continue;
      const double mu = std::accumulate(g.begin(), g.end(), 0.0) / g.size();
      double v = 0.0;
      for (double e : g) v += (e - mu) * (e - mu);
      EXPECT_EQ(st.n[y * k + c], g.size());
      EXPECT_NEAR(st.mean(y, c), mu, 1e-10);
      EXPECT_NEAR(st.stddev(y, c), std::sqrt(v / g.size()), 1e-10);
      // Linear model without clipping: g = (w_c - w_y) . delta has mean 0.
      EXPECT_LT(std::abs(st.mean(y, c)), 5.0 * st.stddev(y, c) / std::sqrt(double(g.size())));

      // Standardizing the pooled gains with the returned stats gives mean 0, sd 1.
      double zm = 0.0, zv = 0.0;
      for (double e : g) zm += (e - st.mean(y, c)) / st.stddev(y, c);
      zm /= g.size();
      for (double e : g) zv += std::pow((e - st.mean(y, c)) / st.stddev(y, c) - zm, 2);
      EXPECT_NEAR(zm, 0.0, 1e-9);
      EXPECT_NEAR(std::sqrt(zv / g.size()), 1.0, 1e-9);
    }
  }
}

TEST(Calibration, TooFewObservationsForAPairIsAnError) {
  const Mlp m = linear_model(3, 3, 1);
  const Tensor one = random_tensor({1, 3}, 2, 0.5);
  const std::vector<std::uint64_t> s{0};
  EXPECT_THROW(benign_calibration(m, one, s, NoiseConfig{0.1, 8, 1}), InsufficientDataError);
}

TEST(Curves, RowsAreDistributionsAndZeroIsTheCleanSoftmax) {
  const Mlp m = Mlp::init({8, 12, 5}, 4);
  const Tensor x = random_tensor({1, 8}, 3, 0.5);
  std::vector<double> eps{0.0};
  for (double e : log_sweep(0.01, 10.0, 7)) eps.push_back(e);
  const Tensor curve = probability_curve(m, x.row_span(0), eps, 64, 9, 1);
  ASSERT_EQ(curve.rows(), eps.size());
  for (std::size_t r = 0; r < curve.rows(); ++r) {
    double s = 0.0;
    for (double p : curve.row_span(r)) {
      EXPECT_GE(p, 0.0);
      s += p;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const Tensor p0 = softmax_rows(m.logits(x));
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(curve.at(0, c), p0.at(0, c));
}

TEST(Curves, LogSweepEndpointsAndSpacing) {
  const auto s = log_sweep(0.01, 10.0, 4);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_NEAR(s[0], 0.01, 1e-15);
  EXPECT_NEAR(s[1], 0.1, 1e-15);
  EXPECT_NEAR(s[3], 10.0, 1e-12);
  EXPECT_THROW(log_sweep(0.0, 1.0, 3), ConfigError);
}

TEST(Cone, OriginAndAdversarialPointAreExact) {
  const Mlp m = Mlp::init({6, 10, 3}, 8);
  const Tensor x = random_tensor({1, 6}, 1, 0.3);
  Tensor xa = x;
  for (std::size_t j = 0; j < 6; ++j) xa[j] += (j % 2 ? 0.05 : -0.04);
  ConeConfig cfg;
  cfg.axis_steps = 5;  // axis 0, .5, 1, 1.5, 2 in units of the distance
  cfg.offset_steps = 3;
  cfg.angular_samples = 8;
  const ConeGrid g = cone_probe(m, x.row_span(0), xa.row_span(0), 1, cfg, 0);
  const double p_clean = softmax_rows(m.logits(x)).at(0, 1);
  const double p_adv = softmax_rows(m.logits(xa)).at(0, 1);
  EXPECT_NEAR(g.prob.at(0, 0), p_clean, 1e-12);
  EXPECT_NEAR(g.prob.at(2, 0), p_adv, 1e-9);
  for (double p : g.prob.data()) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  EXPECT_THROW(cone_probe(m, x.row_span(0), x.row_span(0), 1, cfg, 0), Error);
}
