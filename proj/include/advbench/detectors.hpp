#pragma once

// Logit-based detectors: the noise-gain statistical test, the classifier
// over L(x) = f(x) || mean_noisy(x), and iterative re-training against the
// adaptive attacker.

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "advbench/attacks.hpp"
#include "advbench/detector_model.hpp"
#include "advbench/mlp.hpp"
#include "advbench/noise.hpp"

namespace advbench {

// One global z-score threshold shared by every (y_f, y) pair.
struct ThresholdTable {
  std::size_t k = 0;
  double tau = 0.0;
  double fpr_target = 0.0;

  double at(std::size_t /*y_f*/, std::size_t /*y*/) const { return tau; }
};

// Smallest tau such that the fraction of benign scores >= tau is at most
// fpr_target (the (1 - fpr_target) empirical quantile). Needs >= 200 scores
// and fpr_target in (0, 0.5].
ThresholdTable calibrate_thresholds(std::span<const double> benign_scores, double fpr_target, std::size_t k);

struct StatScore {
  std::size_t predicted = 0;
  std::vector<double> gbar;  // length k; gbar[predicted] is -inf
};

// Normalized mean noise gain of every competing class, from a logit summary:
//   gbar_y = ((fbar_y - fbar_yf) - (f_y - f_yf) - mu_{yf,y}) / sigma_{yf,y}
StatScore stat_test_score(const LogitSummary& summary, const CalibrationStats& stats);
StatScore stat_test_score(const Mlp& model, std::span<const double> x, const CalibrationStats& stats,
                          const NoiseConfig& cfg, std::uint64_t stream);
// Same statistic computed from a feature row L(x).
StatScore stat_test_score_feature(std::span<const double> feature, const CalibrationStats& stats);

enum class Verdict { benign, adversarial };

struct DetectionOutcome {
  Verdict verdict = Verdict::benign;
  double score = 0.0;  // max_y gbar_y for the test, p_adversarial for the classifier
  std::optional<std::size_t> corrected_label;
};

// Flag iff max_{y != y_f} (gbar_y - tau_{y_f,y}) >= 0; when flagged the
// corrected label is the maximizing y.
DetectionOutcome stat_test_decide(const StatScore& score, const ThresholdTable& thresholds);
DetectionOutcome stat_test_detect(const Mlp& model, std::span<const double> x, const CalibrationStats& stats,
                                  const ThresholdTable& thresholds, const NoiseConfig& cfg, std::uint64_t stream);
double max_score(const StatScore& score);

struct StatTestDetector {
  CalibrationStats stats;
  ThresholdTable thresholds;
  NoiseConfig noise;
};

using Detector = std::variant<StatTestDetector, DetectorModel>;

// The adaptive loss differentiates through the detector, so only the
// classifier-based kind is accepted.
std::unique_ptr<AttackLoss> make_adaptive_loss(const Mlp& model, const Detector& detector, std::size_t target,
                                               const LogitProfile& profiles, const AttackConfig& cfg);

// Feature rows L(x) for every row of `samples` (parallel over rows).
Tensor feature_matrix(const Mlp& model, const Tensor& samples, std::span<const std::uint64_t> streams,
                      const NoiseConfig& cfg);

struct DetectorHyper {
  std::size_t epochs = 200;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch = 32;  // 0 = full batch
  std::size_t patience = 25;
  double validation_fraction = 0.2;
  double fpr_target = 0.05;
  std::uint64_t seed = 0;
};

// Fits a fresh detector on raw feature rows (benign -> 0, adversarial -> 1).
// Features are standardized with benign training statistics; training stops
// early on validation loss; the threshold is then set on
// `threshold_benign` to hit hyper.fpr_target.
DetectorModel fit_detector(std::size_t k, const Tensor& benign, const Tensor& adversarial,
                           const Tensor& threshold_benign, const DetectorHyper& hyper, DetectorProvenance provenance);

DetectorModel train_detector(const Mlp& model, const Tensor& benign, std::span<const std::uint64_t> benign_streams,
                             const Tensor& adversarial, std::span<const std::uint64_t> adversarial_streams,
                             const Tensor& threshold_benign, std::span<const std::uint64_t> threshold_streams,
                             const NoiseConfig& noise, const DetectorHyper& hyper, DetectorProvenance provenance);

// Continues training with the detector's existing normalization.
void fine_tune(DetectorModel& det, const Tensor& benign, const Tensor& adversarial, std::size_t epochs,
               std::size_t batch, double lr, double momentum, std::uint64_t seed);

// Sets the threshold on p_adversarial from benign features.
void calibrate_detector_threshold(DetectorModel& det, const Tensor& benign_features, double fpr_target);

std::vector<double> p_adversarial_all(const DetectorModel& det, const Tensor& features);

struct IterativeConfig {
  std::size_t iterations = 10;
  std::size_t epochs_per_iteration = 5;
  std::size_t samples_per_iteration = 400;
  std::size_t batch = 64;
  double lr = 0.01;
  double momentum = 0.9;
  double max_failure_rate = 0.5;
};

struct IterationTrace {
  std::size_t iteration = 0;
  double attack_success = 0.0;  // target-hit rate of this iteration's adaptive attack
  double tpr_before = 0.0;      // detector TPR on the new examples before fine-tuning
  double tpr_after = 0.0;       // ... after fine-tuning and re-calibration
  double threshold = 0.0;
};

struct IterativeResult {
  DetectorModel detector;
  std::vector<IterationTrace> trace;
};

// Alternates adaptive attacks against the current detector with fine-tuning
// on the fresh adversarial examples plus benign samples.
// `pool` / `pool_ids` / `pool_labels` are the benign images that get attacked;
// `pool_features` are their benign features.
IterativeResult iterative_training(const Mlp& model, DetectorModel start, const Tensor& pool,
                                   std::span<const std::uint32_t> pool_labels, std::span<const std::uint64_t> pool_ids,
                                   const Tensor& pool_features, const Tensor& threshold_benign,
                                   const LogitProfile& profiles, const NoiseConfig& noise,
                                   const AttackConfig& attack, const IterativeConfig& cfg, double fpr_target);

}  // namespace advbench
