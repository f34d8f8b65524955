#include "advbench/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advbench/error.hpp"
#include "advbench/kernels.hpp"
#include "advbench/rng.hpp"
#include "advbench/training.hpp"

namespace advbench {

namespace {

// Smallest candidate among the scores (or just above the maximum) whose
// flag rate score >= tau stays within fpr.
double benign_quantile(std::span<const double> scores, double fpr) {
  std::vector<double> s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const auto allowed = static_cast<std::size_t>(std::floor(fpr * static_cast<double>(n) + 1e-9));
  std::size_t idx = n - allowed;  // s[idx..n) may be flagged
  while (idx > 0 && idx < n && s[idx] == s[idx - 1]) ++idx;
  if (idx >= n) return std::nextafter(s[n - 1], std::numeric_limits<double>::infinity());
  return s[idx];
}

}  // namespace

ThresholdTable calibrate_thresholds(std::span<const double> benign_scores, double fpr_target, std::size_t k) {
  if (!(fpr_target > 0.0 && fpr_target <= 0.5)) {
    throw ConfigError("calibrate_thresholds: fpr_target must lie in (0, 0.5], got " + std::to_string(fpr_target));
  }
  if (benign_scores.size() < 200) {
    throw InsufficientDataError("calibrate_thresholds: need >= 200 benign scores, got " + std::to_string(benign_scores.size()));
  }
  check_finite(benign_scores, "calibrate_thresholds");
  return ThresholdTable{k, benign_quantile(benign_scores, fpr_target), fpr_target};
}

StatScore stat_test_score_feature(std::span<const double> feature, const CalibrationStats& stats) {
  const std::size_t k = stats.k;
  if (feature.size() != 2 * k) throw ShapeError("stat_test_score: feature length does not match 2k");
  auto clean = feature.subspan(0, k);
  auto noisy = feature.subspan(k, k);
  StatScore s;
  s.predicted = argmax(clean);
  const std::size_t yf = s.predicted;
  s.gbar.assign(k, -std::numeric_limits<double>::infinity());
  for (std::size_t y = 0; y < k; ++y) {
    if (y == yf) continue;
    const double g = (noisy[y] - noisy[yf]) - (clean[y] - clean[yf]);
    s.gbar[y] = (g - stats.mean(yf, y)) / stats.stddev(yf, y);
  }
  return s;
}

StatScore stat_test_score(const LogitSummary& summary, const CalibrationStats& stats) {
  return stat_test_score_feature(build_feature(summary), stats);
}

StatScore stat_test_score(const Mlp& model, std::span<const double> x, const CalibrationStats& stats,
                          const NoiseConfig& cfg, std::uint64_t stream) {
  if (model.output_dim() != stats.k) throw ShapeError("stat_test_score: calibration k does not match the model");
  return stat_test_score(logit_summary(model, x, cfg, stream), stats);
}

double max_score(const StatScore& score) { return *std::max_element(score.gbar.begin(), score.gbar.end()); }

DetectionOutcome stat_test_decide(const StatScore& score, const ThresholdTable& thresholds) {
  DetectionOutcome out;
  std::size_t best = score.predicted == 0 ? 1 : 0;
  double best_margin = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < score.gbar.size(); ++y) {
    if (y == score.predicted) continue;
    const double m = score.gbar[y] - thresholds.at(score.predicted, y);
    if (m > best_margin) {
      best_margin = m;
      best = y;
    }
  }
  out.score = max_score(score);
  if (best_margin >= 0.0) {
    out.verdict = Verdict::adversarial;
    out.corrected_label = best;
  }
  return out;
}

DetectionOutcome stat_test_detect(const Mlp& model, std::span<const double> x, const CalibrationStats& stats,
                                  const ThresholdTable& thresholds, const NoiseConfig& cfg, std::uint64_t stream) {
  return stat_test_decide(stat_test_score(model, x, stats, cfg, stream), thresholds);
}

std::unique_ptr<AttackLoss> make_adaptive_loss(const Mlp& model, const Detector& detector, std::size_t target,
                                               const LogitProfile& profiles, const AttackConfig& cfg) {
  const auto* det = std::get_if<DetectorModel>(&detector);
  if (!det) {
    throw ConfigError("adaptive attack needs a classifier-based detector; the statistical test is not differentiable");
  }
  return std::make_unique<AdaptiveLoss>(model, *det, target, profiles, cfg);
}

Tensor feature_matrix(const Mlp& model, const Tensor& samples, std::span<const std::uint64_t> streams,
                      const NoiseConfig& cfg) {
  const std::size_t n = samples.rows();
  if (streams.size() != n) throw ShapeError("feature_matrix: stream count does not match sample count");
  const std::size_t k = model.output_dim();
  Tensor out({n, 2 * k});
  kernels::parallel_for(n, [&](std::size_t i) {
    const auto f = build_feature(logit_summary(model, samples.row_span(i), cfg, streams[i]));
    std::copy(f.begin(), f.end(), out.raw() + i * 2 * k);
  });
  return out;
}

// ---- classifier-based detector -------------------------------------------

namespace {

struct LabelledFeatures {
  Tensor x;
  std::vector<std::uint32_t> y;
};

LabelledFeatures stack(const Tensor& benign, std::size_t b0, std::size_t b1, const Tensor& adversarial, std::size_t a0,
                       std::size_t a1) {
  const std::size_t cols = benign.cols();
  const std::size_t n = (b1 - b0) + (a1 - a0);
  LabelledFeatures out{Tensor({n, cols}), {}};
  std::size_t r = 0;
  for (std::size_t i = b0; i < b1; ++i, ++r) {
    std::copy_n(benign.raw() + i * cols, cols, out.x.raw() + r * cols);
    out.y.push_back(0);
  }
  for (std::size_t i = a0; i < a1; ++i, ++r) {
    std::copy_n(adversarial.raw() + i * cols, cols, out.x.raw() + r * cols);
    out.y.push_back(1);
  }
  return out;
}

double eval_loss(const DetectorModel& det, const LabelledFeatures& data) {
  if (data.y.empty()) return 0.0;
  Tape tape;
  Var z = tape.leaf(det.net().logits(det.normalize(data.x)));
  return softmax_cross_entropy(z, data.y).value().item();
}

// Minibatch (or full-batch when batch == 0) momentum SGD over normalized features.
class DetectorTrainer {
 public:
  DetectorTrainer(DetectorModel& det, double lr, double momentum) : det_(det), opt_(lr, momentum) {}

  double epoch(const LabelledFeatures& data, const Tensor& normalized, std::size_t batch, Rng& rng) {
    const std::size_t n = data.y.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (batch != 0 && batch < n) std::shuffle(order.begin(), order.end(), rng.engine());
    const std::size_t bs = batch == 0 ? n : std::min(batch, n);
    const std::size_t cols = normalized.cols();
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      Tensor xb({end - start, cols});
      std::vector<std::uint32_t> yb;
      for (std::size_t r = start; r < end; ++r) {
        std::copy_n(normalized.raw() + order[r] * cols, cols, xb.raw() + (r - start) * cols);
        yb.push_back(data.y[order[r]]);
      }
      Tape tape;
      std::vector<Var> params;
      Var loss = softmax_cross_entropy(det_.net().forward_trainable(tape, tape.leaf(std::move(xb)), params), yb);
      tape.backward(loss);
      total += loss.value().item() * static_cast<double>(end - start);
      opt_.step(det_.net(), params);
    }
    return total / static_cast<double>(n);
  }

 private:
  DetectorModel& det_;
  MomentumSgd opt_;
};

}  // namespace

std::vector<double> p_adversarial_all(const DetectorModel& det, const Tensor& features) {
  const Tensor p = det.probabilities(features);
  std::vector<double> out(p.rows());
  for (std::size_t r = 0; r < p.rows(); ++r) out[r] = p.at(r, 1);
  return out;
}

void calibrate_detector_threshold(DetectorModel& det, const Tensor& benign_features, double fpr_target) {
  if (!(fpr_target > 0.0 && fpr_target <= 0.5)) throw ConfigError("detector threshold: fpr_target must lie in (0, 0.5]");
  const auto scores = p_adversarial_all(det, benign_features);
  double t = benign_quantile(scores, fpr_target);
  t = std::clamp(t, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
  det.set_threshold(t);
  det.provenance().fpr_target = fpr_target;
}

DetectorModel fit_detector(std::size_t k, const Tensor& benign, const Tensor& adversarial,
                           const Tensor& threshold_benign, const DetectorHyper& hyper, DetectorProvenance provenance) {
  if (benign.numel() == 0 || adversarial.numel() == 0 || benign.cols() != 2 * k || adversarial.cols() != 2 * k) {
    throw InsufficientDataError("train_detector: need non-empty benign and adversarial feature sets of width 2k");
  }
  const std::size_t nb = benign.rows(), na = adversarial.rows();
  if (nb < 2 || na < 2) throw InsufficientDataError("train_detector: degenerate input, need >= 2 samples of each class");
  const auto nb_val = static_cast<std::size_t>(std::floor(hyper.validation_fraction * static_cast<double>(nb)));
  const auto na_val = static_cast<std::size_t>(std::floor(hyper.validation_fraction * static_cast<double>(na)));
  const LabelledFeatures train = stack(benign, 0, nb - nb_val, adversarial, 0, na - na_val);
  const LabelledFeatures val = stack(benign, nb - nb_val, nb, adversarial, na - na_val, na);

  DetectorModel det = DetectorModel::init(k, derive_seed(hyper.seed, "detector/init"));
  // Standardize with benign training rows.
  const std::size_t cols = 2 * k, n_train_benign = nb - nb_val;
  std::vector<double> mu(cols, 0.0), sd(cols, 0.0);
  for (std::size_t r = 0; r < n_train_benign; ++r) {
    for (std::size_t c = 0; c < cols; ++c) mu[c] += benign.at(r, c);
  }
  for (double& v : mu) v /= static_cast<double>(n_train_benign);
  for (std::size_t r = 0; r < n_train_benign; ++r) {
    for (std::size_t c = 0; c < cols; ++c) sd[c] += (benign.at(r, c) - mu[c]) * (benign.at(r, c) - mu[c]);
  }
  for (double& v : sd) v = std::max(std::sqrt(v / static_cast<double>(n_train_benign)), 1e-8);
  det.set_normalization(mu, sd);
  det.provenance() = std::move(provenance);

  const Tensor train_norm = det.normalize(train.x);
  DetectorTrainer trainer(det, hyper.lr, hyper.momentum);
  Rng rng(derive_seed(hyper.seed, "detector/shuffle"));
  Mlp best = det.net();
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    const double train_loss = trainer.epoch(train, train_norm, hyper.batch, rng);
    if (!std::isfinite(train_loss)) throw NumericError("train_detector: loss diverged; lower the learning rate");
    const double v = val.y.empty() ? train_loss : eval_loss(det, val);
    if (v < best_val) {
      best_val = v;
      best = det.net();
      since_best = 0;
    } else if (++since_best >= hyper.patience) {
      break;
    }
  }
  det.net() = std::move(best);
  calibrate_detector_threshold(det, threshold_benign, hyper.fpr_target);
  return det;
}

DetectorModel train_detector(const Mlp& model, const Tensor& benign, std::span<const std::uint64_t> benign_streams,
                             const Tensor& adversarial, std::span<const std::uint64_t> adversarial_streams,
                             const Tensor& threshold_benign, std::span<const std::uint64_t> threshold_streams,
                             const NoiseConfig& noise, const DetectorHyper& hyper, DetectorProvenance provenance) {
  provenance.epsilon = noise.epsilon;
  return fit_detector(model.output_dim(), feature_matrix(model, benign, benign_streams, noise),
                      feature_matrix(model, adversarial, adversarial_streams, noise),
                      feature_matrix(model, threshold_benign, threshold_streams, noise), hyper, std::move(provenance));
}

void fine_tune(DetectorModel& det, const Tensor& benign, const Tensor& adversarial, std::size_t epochs,
               std::size_t batch, double lr, double momentum, std::uint64_t seed) {
  if (benign.numel() == 0 || adversarial.numel() == 0) throw InsufficientDataError("fine_tune: need both classes");
  const LabelledFeatures data = stack(benign, 0, benign.rows(), adversarial, 0, adversarial.rows());
  const Tensor norm = det.normalize(data.x);
  DetectorTrainer trainer(det, lr, momentum);
  Rng rng(derive_seed(seed, "detector/fine-tune"));
  for (std::size_t e = 0; e < epochs; ++e) {
    if (!std::isfinite(trainer.epoch(data, norm, batch, rng))) throw NumericError("fine_tune: loss diverged");
  }
}

IterativeResult iterative_training(const Mlp& model, DetectorModel start, const Tensor& pool,
                                   std::span<const std::uint32_t> pool_labels, std::span<const std::uint64_t> pool_ids,
                                   const Tensor& pool_features, const Tensor& threshold_benign,
                                   const LogitProfile& profiles, const NoiseConfig& noise,
                                   const AttackConfig& attack, const IterativeConfig& cfg, double fpr_target) {
  if (cfg.iterations < 1) throw ConfigError("iterative_training: iterations must be >= 1");
  const std::size_t n = std::min(cfg.samples_per_iteration, pool.rows());
  if (n == 0) throw InsufficientDataError("iterative_training: empty attack pool");
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  Tensor x({n, pool.cols()});
  std::copy_n(pool.raw(), n * pool.cols(), x.raw());
  Tensor benign_feat({n, pool_features.cols()});
  std::copy_n(pool_features.raw(), n * pool_features.cols(), benign_feat.raw());
  std::span<const std::uint32_t> labels = pool_labels.subspan(0, n);
  std::span<const std::uint64_t> ids = pool_ids.subspan(0, n);

  IterativeResult result{std::move(start), {}};
  DetectorModel& det = result.detector;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    AttackConfig acfg = attack;
    acfg.seed = derive_seed(attack.seed, "iterative/attack", it);
    const AttackSetup setup{AttackKind::adaptive, &profiles, &det};
    const auto records = run_attack(model, x, labels, ids, setup, acfg);
    IterationTrace tr;
    tr.iteration = it;
    tr.attack_success = target_hit_rate(records);
    if (1.0 - tr.attack_success > cfg.max_failure_rate) {
      throw PipelineError("iterative_training: adaptive attack failed on " + std::to_string(100.0 * (1.0 - tr.attack_success)) +
                          "% of samples in iteration " + std::to_string(it) + " (limit " +
                          std::to_string(100.0 * cfg.max_failure_rate) + "%)");
    }
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].target_hit()) ok.push_back(i);
    }
    Tensor adv({ok.size(), pool.cols()});
    std::vector<std::uint64_t> adv_streams;
    for (std::size_t r = 0; r < ok.size(); ++r) {
      std::copy(records[ok[r]].x_adv.begin(), records[ok[r]].x_adv.end(), adv.raw() + r * pool.cols());
      adv_streams.push_back(records[ok[r]].id);
    }
    NoiseConfig fcfg = noise;
    fcfg.seed = derive_seed(noise.seed, "iterative/features", it);
    const Tensor adv_feat = feature_matrix(model, adv, adv_streams, fcfg);
    auto flagged = [&](const DetectorModel& d) {
      const auto p = p_adversarial_all(d, adv_feat);
      return static_cast<double>(std::count_if(p.begin(), p.end(), [&](double v) { return v >= d.threshold(); })) /
             static_cast<double>(p.size());
    };
    tr.tpr_before = flagged(det);
    fine_tune(det, benign_feat, adv_feat, cfg.epochs_per_iteration, cfg.batch, cfg.lr, cfg.momentum,
              derive_seed(attack.seed, "iterative/fine-tune", it));
    calibrate_detector_threshold(det, threshold_benign, fpr_target);
    tr.tpr_after = flagged(det);
    tr.threshold = det.threshold();
    result.trace.push_back(tr);
  }
  det.provenance().attack = "adaptive-iterative";
  det.provenance().iterations = cfg.iterations;
  det.provenance().epsilon = noise.epsilon;
  return result;
}

}  // namespace advbench
