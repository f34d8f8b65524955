#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "advbench/detectors.hpp"
#include "advbench/error.hpp"
#include "advbench/rng.hpp"
#include "fd_check.hpp"
#include "oracles.hpp"
#include "stat_network.hpp"

using namespace advbench;
using advbench::testing::brute_force_tau;
using advbench::testing::Literal;
using advbench::testing::literal_test;
using advbench::testing::random_tensor;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

CalibrationStats toy_stats(std::size_t k, std::uint64_t seed) {
  CalibrationStats s;
  s.k = k;
  s.mu.assign(k * k, 0.0);
  s.sigma.assign(k * k, 1.0);
  s.n.assign(k * k, 100);
  Rng rng(seed);
  for (std::size_t i = 0; i < k * k; ++i) {
    s.mu[i] = 0.2 * rng.normal();
    s.sigma[i] = 0.5 + rng.uniform();
  }
  return s;
}

}  // namespace

TEST(Feature, CleanThenNoisy) {
  LogitSummary s{{1, 2}, {3, 4}, {}};
  EXPECT_EQ(build_feature(s), (std::vector<double>{1, 2, 3, 4}));
  const Mlp m = Mlp::init({4, 6, 3}, 1);
  const Tensor x = random_tensor({1, 4}, 2, 0.3);
  const auto f = build_feature(logit_summary(m, x.row_span(0), NoiseConfig{1e-12, 4, 1}, 0));
  ASSERT_EQ(f.size(), 6u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(f[j], f[3 + j], 1e-9);
}

TEST(StatScore, ZeroNoiseGivesMinusMuOverSigma) {
  const CalibrationStats st = toy_stats(3, 4);
  LogitSummary s{{0.5, 2.0, -1.0}, {0.5, 2.0, -1.0}, {}};
  const StatScore sc = stat_test_score(s, st);
  EXPECT_EQ(sc.predicted, 1u);
  EXPECT_EQ(sc.gbar[1], kNegInf);
  for (std::size_t y : {0, 2}) EXPECT_DOUBLE_EQ(sc.gbar[y], -st.mean(1, y) / st.stddev(1, y));
}

TEST(StatDecide, AllBelowThresholdIsBenign) {
  StatScore s{0, {kNegInf, -2.0, -3.0}};
  const ThresholdTable t{3, 1.0, 0.05};
  const DetectionOutcome o = stat_test_decide(s, t);
  EXPECT_EQ(o.verdict, Verdict::benign);
  EXPECT_FALSE(o.corrected_label.has_value());
  EXPECT_EQ(o.score, -2.0);
}

TEST(StatDecide, FlagCorrectsToTheLargestMargin) {
  StatScore s{0, {kNegInf, 0.5, 1.2}};
  const ThresholdTable t{3, 1.0, 0.05};
  const DetectionOutcome o = stat_test_decide(s, t);
  EXPECT_EQ(o.verdict, Verdict::adversarial);
  ASSERT_TRUE(o.corrected_label.has_value());
  EXPECT_EQ(*o.corrected_label, 2u);
  // Exactly at the threshold counts as flagged.
  StatScore edge{1, {1.0, kNegInf, 0.0}};
  EXPECT_EQ(stat_test_decide(edge, t).verdict, Verdict::adversarial);
  EXPECT_EQ(*stat_test_decide(edge, t).corrected_label, 0u);
}

TEST(Thresholds, MatchExhaustiveScan) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores(200 + 37 * trial);
    // Coarse rounding forces ties.
    for (double& s : scores) s = std::round(rng.normal() * (trial % 2 ? 4.0 : 100.0)) / 4.0;
    for (double fpr : {0.01, 0.05, 0.1, 0.5}) {
      const ThresholdTable t = calibrate_thresholds(scores, fpr, 5);
      EXPECT_EQ(t.tau, brute_force_tau(scores, fpr)) << "trial " << trial << " fpr " << fpr;
      const auto flagged = std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= t.tau; });
      EXPECT_LE(flagged, static_cast<long>(std::floor(fpr * scores.size() + 1e-9)));
      for (std::size_t a = 0; a < 5; ++a) EXPECT_EQ(t.at(a, (a + 1) % 5), t.tau);
    }
  }
}

TEST(Thresholds, HalfRateOnSymmetricScoresIsTheMedian) {
  std::vector<double> scores;
  for (int i = -500; i <= 500; ++i) scores.push_back(i * 0.01);
  const ThresholdTable t = calibrate_thresholds(scores, 0.5, 2);
  EXPECT_NEAR(t.tau, 0.0, 0.011);
}

TEST(Thresholds, RejectBadTargetsAndSmallSamples) {
  const std::vector<double> ok(200, 1.0), small(199, 1.0);
  EXPECT_THROW(calibrate_thresholds(ok, 0.0, 2), ConfigError);
  EXPECT_THROW(calibrate_thresholds(ok, 0.6, 2), ConfigError);
  EXPECT_THROW(calibrate_thresholds(small, 0.05, 2), InsufficientDataError);
}

TEST(StatTest, AgreesWithLiteralTranscriptionOn100Inputs) {
  const Mlp m = Mlp::init({6, 16, 4}, 9);
  const CalibrationStats st = toy_stats(4, 2);
  const NoiseConfig cfg{0.2, 64, 5};
  const double tau = 0.4;
  const ThresholdTable table{4, tau, 0.05};
  std::size_t flagged = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const Tensor x = random_tensor({1, 6}, 1000 + i, 0.5);
    const StatScore sc = stat_test_score(m, x.row_span(0), st, cfg, i);
    const DetectionOutcome o = stat_test_detect(m, x.row_span(0), st, table, cfg, i);
    const Literal lit = literal_test(m, x.row_span(0), st, tau, cfg, i);
    ASSERT_EQ(sc.predicted, lit.yf);
    for (std::size_t y = 0; y < 4; ++y) {
      if (y == lit.yf) continue;
      EXPECT_NEAR(sc.gbar[y], lit.gbar[y], 1e-10);
    }
    EXPECT_EQ(o.verdict == Verdict::adversarial, lit.flagged) << "input " << i;
    if (lit.flagged) {
      EXPECT_EQ(*o.corrected_label, lit.corrected);
      EXPECT_NE(*o.corrected_label, lit.yf);
      ++flagged;
    }
  }
  // Both verdicts must actually occur for the comparison to mean anything.
  EXPECT_GT(flagged, 0u);
  EXPECT_LT(flagged, 100u);
}

TEST(StatTest, SameStreamIsDeterministic) {
  const Mlp m = Mlp::init({6, 16, 4}, 9);
  const CalibrationStats st = toy_stats(4, 2);
  const Tensor x = random_tensor({1, 6}, 3, 0.5);
  const auto a = stat_test_score(m, x.row_span(0), st, NoiseConfig{0.1, 16, 1}, 4);
  const auto b = stat_test_score(m, x.row_span(0), st, NoiseConfig{0.1, 16, 1}, 4);
  EXPECT_EQ(a.gbar, b.gbar);
}

TEST(StatTest, HandBuiltNetworkReproducesVerdicts) {
  const Mlp m = Mlp::init({6, 16, 3}, 21);
  const CalibrationStats st = toy_stats(3, 8);
  const double tau = 0.3;
  const ThresholdTable table{3, tau, 0.05};
  const DetectorModel net = advbench::testing::stat_test_network(st, tau);
  EXPECT_EQ(net.net().sizes(), (std::vector<std::size_t>{6, 100, 100, 2}));
  const Tensor xs = random_tensor({200, 6}, 77, 0.5);
  std::vector<std::uint64_t> streams(200);
  std::iota(streams.begin(), streams.end(), 0);
  const NoiseConfig cfg{0.2, 32, 6};
  const Tensor feats = feature_matrix(m, xs, streams, cfg);
  std::size_t flagged = 0, agree = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    const bool stat = stat_test_decide(stat_test_score_feature(feats.row_span(i), st), table).verdict == Verdict::adversarial;
    flagged += stat;
    agree += stat == net.flags(feats.row_span(i));
  }
  EXPECT_EQ(agree, 200u);
  EXPECT_GT(flagged, 0u);
  EXPECT_LT(flagged, 200u);
}

TEST(Feature, MatrixRowsMatchSingleSummaries) {
  const Mlp m = Mlp::init({5, 8, 3}, 3);
  const Tensor xs = random_tensor({7, 5}, 4, 0.4);
  const std::vector<std::uint64_t> streams{10, 11, 12, 13, 14, 15, 16};
  const NoiseConfig cfg{0.1, 16, 2};
  const Tensor f = feature_matrix(m, xs, streams, cfg);
  for (std::size_t i = 0; i < 7; ++i) {
    const auto row = build_feature(logit_summary(m, xs.row_span(i), cfg, streams[i]));
    EXPECT_TRUE(std::equal(row.begin(), row.end(), f.row_span(i).begin()));
  }
}

// ---- classifier-based detector ----------------------------------------------

namespace {

// Two Gaussian blobs in feature space: benign around 0, adversarial shifted.
Tensor blob(std::size_t n, std::size_t dim, double shift, std::uint64_t seed) {
  Tensor t = random_tensor({n, dim}, seed);
  for (std::size_t i = 0; i < n; ++i) t.at(i, 0) += shift;
  return t;
}

}  // namespace

TEST(DetectorModel, ProbabilitiesSumToOneAndThresholdIsMonotone) {
  const DetectorModel det = DetectorModel::init(3, 5);
  const Tensor f = random_tensor({50, 6}, 6, 3.0);
  const Tensor p = det.probabilities(f);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(p.at(i, 0) + p.at(i, 1), 1.0, 1e-9);
  DetectorModel lo = det, hi = det;
  lo.set_threshold(0.3);
  hi.set_threshold(0.7);
  for (std::size_t i = 0; i < 50; ++i) {
    if (hi.flags(f.row_span(i))) EXPECT_TRUE(lo.flags(f.row_span(i)));
  }
  EXPECT_THROW(lo.set_threshold(1.0), ConfigError);
  EXPECT_THROW(lo.set_threshold(0.0), ConfigError);
}

TEST(DetectorModel, CheckpointRoundTrip) {
  DetectorModel det = DetectorModel::init(3, 5);
  det.set_normalization({1, 2, 3, 4, 5, 6}, {1, 1, 2, 2, 3, 3});
  det.set_threshold(0.42);
  det.provenance().attack = "lma";
  det.provenance().epsilon = 0.1;
  const DetectorModel back = decode_detector(encode_detector(det));
  EXPECT_EQ(back.threshold(), 0.42);
  EXPECT_EQ(back.feature_mean(), det.feature_mean());
  EXPECT_EQ(back.provenance().attack, "lma");
  const Tensor f = random_tensor({4, 6}, 1);
  EXPECT_EQ(back.probabilities(f), det.probabilities(f));
}

TEST(FitDetector, SeparatesBlobsAndHitsFprOnHeldOutBenign) {
  const Tensor benign = blob(400, 6, 0.0, 1), adv = blob(400, 6, 4.0, 2);
  const Tensor calib = blob(2000, 6, 0.0, 3), fresh = blob(4000, 6, 0.0, 4);
  DetectorHyper h;
  h.fpr_target = 0.05;
  const DetectorModel det = fit_detector(3, benign, adv, calib, h, {"cw", 0.1, 0, 0, 0.05});
  const auto pa = p_adversarial_all(det, blob(500, 6, 4.0, 5));
  const double tpr = std::count_if(pa.begin(), pa.end(), [&](double p) { return p >= det.threshold(); }) / 500.0;
  const auto pb = p_adversarial_all(det, fresh);
  const double fpr = std::count_if(pb.begin(), pb.end(), [&](double p) { return p >= det.threshold(); }) / 4000.0;
  EXPECT_GT(tpr, 0.9);
  EXPECT_NEAR(fpr, 0.05, 0.01);
  EXPECT_EQ(det.provenance().attack, "cw");
  // Standardization comes from benign training rows only.
  EXPECT_NEAR(det.feature_mean()[0], 0.0, 0.2);
}

TEST(FitDetector, DegenerateInputIsAnError) {
  const Tensor benign = blob(50, 6, 0.0, 1), one = blob(1, 6, 4.0, 2);
  const Tensor calib = blob(300, 6, 0.0, 3);
  EXPECT_THROW(fit_detector(3, benign, one, calib, DetectorHyper{}, {}), InsufficientDataError);
  EXPECT_THROW(fit_detector(3, one, benign, calib, DetectorHyper{}, {}), InsufficientDataError);
}

TEST(Adaptive, StatisticalTestIsRejected) {
  const Mlp m = Mlp::init({4, 6, 3}, 1);
  const Detector stat = StatTestDetector{toy_stats(3, 1), ThresholdTable{3, 1.0, 0.05}, NoiseConfig{}};
  LogitProfile prof;
  EXPECT_THROW(make_adaptive_loss(m, stat, 0, prof, AttackConfig{}), ConfigError);
}

// ---- iterative loop ---------------------------------------------------------

class Iterative : public ::testing::Test {
 protected:
  void SetUp() override {
    model = Mlp::init({6, 16, 3}, 4);
    pool = random_tensor({24, 6}, 8, 0.4);
    for (double& v : pool.data()) v = std::clamp(v, -1.0, 1.0);
    labels.resize(24);
    ids.resize(24);
    for (std::size_t i = 0; i < 24; ++i) {
      labels[i] = static_cast<std::uint32_t>(argmax(model.logits(pool.row_span(i))));
      ids[i] = 500 + i;
    }
    noise = NoiseConfig{0.1, 16, 3};
    pool_features = feature_matrix(model, pool, ids, noise);
    const Tensor tb = random_tensor({300, 6}, 9, 0.4);
    std::vector<std::uint64_t> tb_ids(300);
    std::iota(tb_ids.begin(), tb_ids.end(), 2000);
    threshold_benign = feature_matrix(model, tb, tb_ids, noise);
    prof = compute_profiles(model, tb, tb_ids, noise);
    attack.steps = 20;
    attack.eps_max = 0.5;  // generous budget so every target is reachable
    attack.seed = 17;
    attack.target_rule = TargetRule::fixed;
    attack.fixed_target = 0;
    while (!prof.available(attack.fixed_target)) ++attack.fixed_target;
    start = DetectorModel::init(3, 6);
    cfg.iterations = 1;
    cfg.epochs_per_iteration = 3;
    cfg.samples_per_iteration = 24;
    cfg.batch = 8;
    cfg.max_failure_rate = 1.0;  // the fixed target is out of reach for some rows
  }
  Mlp model;
  Tensor pool, pool_features, threshold_benign;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint64_t> ids;
  NoiseConfig noise;
  LogitProfile prof;
  AttackConfig attack;
  DetectorModel start;
  IterativeConfig cfg;
};

TEST_F(Iterative, OneIterationIsOneAttackPlusOneFineTune) {
  const auto res = iterative_training(model, start, pool, labels, ids, pool_features, threshold_benign, prof, noise,
                                      attack, cfg, 0.05);
  ASSERT_EQ(res.trace.size(), 1u);

  // Same steps by hand.
  AttackConfig a = attack;
  a.seed = derive_seed(attack.seed, "iterative/attack", 0);
  const auto recs = run_attack(model, pool, labels, ids, AttackSetup{AttackKind::adaptive, &prof, &start}, a);
  std::vector<double> adv_rows;
  std::vector<std::uint64_t> adv_ids;
  for (const auto& r : recs) {
    if (!r.target_hit()) continue;
    adv_rows.insert(adv_rows.end(), r.x_adv.begin(), r.x_adv.end());
    adv_ids.push_back(r.id);
  }
  ASSERT_FALSE(adv_ids.empty());
  NoiseConfig fc = noise;
  fc.seed = derive_seed(noise.seed, "iterative/features", 0);
  const Tensor adv_feat = feature_matrix(model, Tensor({adv_ids.size(), 6}, adv_rows), adv_ids, fc);
  DetectorModel manual = start;
  fine_tune(manual, pool_features, adv_feat, cfg.epochs_per_iteration, cfg.batch, cfg.lr, cfg.momentum,
            derive_seed(attack.seed, "iterative/fine-tune", 0));
  calibrate_detector_threshold(manual, threshold_benign, 0.05);

  EXPECT_EQ(res.trace[0].attack_success, target_hit_rate(recs));
  EXPECT_EQ(res.detector.net(), manual.net());
  EXPECT_EQ(res.detector.threshold(), manual.threshold());
  EXPECT_EQ(res.detector.provenance().attack, "adaptive-iterative");
  EXPECT_EQ(res.detector.provenance().iterations, 1u);
}

TEST_F(Iterative, FailingAttackAbortsWithDiagnostics) {
  attack.steps = 3;
  attack.eps_max = 1e-6;
  cfg.max_failure_rate = 0.0;
  try {
    iterative_training(model, start, pool, labels, ids, pool_features, threshold_benign, prof, noise, attack, cfg, 0.05);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos) << e.what();
  }
}

TEST_F(Iterative, ZeroIterationsIsAConfigError) {
  cfg.iterations = 0;
  EXPECT_THROW(iterative_training(model, start, pool, labels, ids, pool_features, threshold_benign, prof, noise, attack,
                                  cfg, 0.05),
               ConfigError);
}
