#pragma once

// Pipelines behind the CLI subcommands. Each pipeline is a pure function of
// (config, seed); the cmd_* wrappers add checkpoint loading and file output.
//
// Sample roles, fixed by split tags:
//   train split       classifier training
//   validation split  first `detector.fit_samples` rows: detector fitting pool
//                     (benign rows plus adversarial versions of them);
//                     remaining rows: calibration (mu/sigma, thresholds, LMA
//                     profiles)
//   test split        attacked samples and the benign FPR population

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "advbench/attacks.hpp"
#include "advbench/config.hpp"
#include "advbench/csv.hpp"
#include "advbench/dataset.hpp"
#include "advbench/detectors.hpp"
#include "advbench/mlp.hpp"
#include "advbench/training.hpp"

namespace advbench {

struct Samples {
  Tensor x;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint64_t> ids;

  std::size_t size() const { return labels.size(); }
};

struct Context {
  ExperimentConfig cfg;
  Dataset data;
  Mlp model;
  std::vector<std::size_t> train, fit, calib, test;

  Context(ExperimentConfig c, Dataset d, Mlp m);
  Samples samples(std::span<const std::size_t> idx) const;
  // Leading `limit` test rows (0 = all).
  std::vector<std::size_t> attack_rows(std::size_t limit) const;
};

Dataset make_dataset(const ExperimentConfig& cfg);

struct TrainResult {
  Dataset data;
  Mlp model;
  TrainReport report;
};
TrainResult run_train(const ExperimentConfig& cfg);

// Throws PipelineError if any row of `idx` is not tagged `allowed`.
void require_split(const Dataset& data, std::span<const std::size_t> idx, Split allowed, const std::string& role);

// Noise used for benign and for adversarial feature extraction at epsilon.
NoiseConfig benign_noise(const ExperimentConfig& cfg, double epsilon);
NoiseConfig adversarial_noise(const ExperimentConfig& cfg, double epsilon);
std::uint64_t epsilon_key(double epsilon);

LogitProfile calibration_profiles(const Context& ctx, double epsilon);

struct AttackRun {
  AttackKind kind = AttackKind::cw;
  double epsilon = 0.0;
  std::vector<AttackRecord> records;

  double success_rate() const { return target_hit_rate(records); }
  // The target-hit adversarial examples, the population TPR is measured on.
  Samples adversarial(std::size_t d) const;
};

// `purpose` keeps attack seeds for different roles (test set, fitting pool,
// arms-race stages) apart.
AttackRun attack_rows(const Context& ctx, std::span<const std::size_t> rows, AttackKind kind, double epsilon,
                      const LogitProfile* profiles, const DetectorModel* detector, const std::string& purpose);

// Statistical test calibrated on the calibration split; thresholds can be
// re-derived for any FPR target from the stored benign scores.
struct StatFit {
  StatTestDetector detector;
  std::vector<double> calibration_scores;
  void set_fpr(double fpr_target);
};
StatFit fit_stat_test(const Context& ctx, double epsilon);

// A classifier-based detector with the benign calibration features its
// threshold is set on.
struct ClassifierFit {
  DetectorModel detector;
  Tensor calibration_features;
  void set_fpr(double fpr_target);
};
// Detector trained on CW examples of the fitting pool.
ClassifierFit fit_classifier(const Context& ctx, double epsilon);
// Detector trained on the adversarial examples of `fit_attack` (crafted on the fitting pool).
ClassifierFit fit_detector_on(const Context& ctx, double epsilon, const AttackRun& fit_attack);
// Wraps an existing detector (e.g. a loaded checkpoint) for threshold calibration.
ClassifierFit wrap_detector(const Context& ctx, DetectorModel det);

struct ResultRow {
  std::string detector;
  std::string attack;
  double epsilon = 0.0;
  double fpr_target = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  std::size_t n_adversarial = 0;
  std::size_t n_benign = 0;
  double attack_success = 0.0;
  std::optional<double> reference_tpr;
};

// Detector-side features of one population, reusable across FPR targets.
struct FeatureSet {
  Tensor features;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint64_t> ids;
};
FeatureSet benign_features(const Context& ctx, std::span<const std::size_t> rows, double epsilon);
FeatureSet adversarial_features(const Context& ctx, const AttackRun& run);

std::vector<bool> flag_stat(const StatTestDetector& det, const FeatureSet& f);
std::vector<bool> flag_classifier(const DetectorModel& det, const FeatureSet& f);
double flag_rate(const std::vector<bool>& flags);

// Refuses benign evaluation rows that overlap the calibration or fitting rows.
void guard_evaluation_rows(const Context& ctx, std::span<const std::size_t> benign_rows);

std::optional<double> reference_tpr(const std::string& detector, const std::string& attack, double epsilon,
                                    double fpr_target);

CsvTable result_csv(const std::vector<ResultRow>& rows, const std::string& hash);

struct ArmsRaceResult {
  std::vector<ResultRow> rows;
  std::vector<IterationTrace> trace;
  DetectorModel adaptive_detector;
  DetectorModel iterative_detector;
};
ArmsRaceResult run_armsrace(const Context& ctx);
CsvTable trace_csv(const std::vector<IterationTrace>& trace, const std::string& hash);

// Figure probes for one sample: benign, CW and LMA curves / cones.
CsvTable curves_table(const Context& ctx, std::uint64_t sample_id);
CsvTable cone_table(const Context& ctx, std::uint64_t sample_id);

// ---- command layer --------------------------------------------------------

struct CommandOptions {
  bool force = false;
  std::optional<std::string> detector;  // stat | classifier | checkpoint path
  std::optional<std::string> attack;
  std::optional<std::vector<double>> epsilons;
  std::optional<std::vector<double>> fprs;
  std::vector<std::uint64_t> sample_ids;
};

// Every command returns a short human-readable summary.
std::string cmd_train(const ExperimentConfig& cfg, const CommandOptions& opt);
std::string cmd_attack(const ExperimentConfig& cfg, const CommandOptions& opt);
std::string cmd_detect(const ExperimentConfig& cfg, const CommandOptions& opt);
std::string cmd_armsrace(const ExperimentConfig& cfg, const CommandOptions& opt);
std::string cmd_curves(const ExperimentConfig& cfg, const CommandOptions& opt);
std::string cmd_cone(const ExperimentConfig& cfg, const CommandOptions& opt);

// Loads the dataset and the checkpoint written by cmd_train.
Context load_context(const ExperimentConfig& cfg);

std::string epsilon_tag(double epsilon);

}  // namespace advbench
