#pragma once

// L-infinity PGD and the attack losses it drives: CW margin loss, CW
// averaged over noisy inputs, logit mimicry, and the adaptive loss that also
// pushes a classifier-based detector toward "benign".

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advbench/autodiff.hpp"
#include "advbench/detector_model.hpp"
#include "advbench/mlp.hpp"
#include "advbench/noise.hpp"

namespace advbench {

enum class TargetRule { fixed, least_likely, random_other };
enum class AttackKind { cw, cw_noisy, lma, adaptive };

const char* attack_name(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);  // UsageError lists the valid names
TargetRule parse_target_rule(const std::string& name);
const char* target_rule_name(TargetRule rule);

struct AttackConfig {
  // Budget in [-1,1] units: 8/255 of a [0,1] range is 2 * 8/255 here.
  double eps_max = 2.0 * 8.0 / 255.0;
  double eps_step = 0.0;  // 0 selects 2.5 * eps_max / steps
  std::size_t steps = 50;
  double kappa = 50.0;
  double alpha = 0.25;
  std::size_t noise_draws = 10;
  double noise_epsilon = 0.1;  // must equal the detector's noise level
  TargetRule target_rule = TargetRule::random_other;
  std::size_t fixed_target = 0;
  std::uint64_t seed = 0;

  double step_size() const { return eps_step > 0.0 ? eps_step : 2.5 * eps_max / static_cast<double>(steps ? steps : 1); }
  void validate() const;
};

enum class Direction { minimize, maximize };

// Per-step context handed to a loss. Noise drawn from `noise_seed` is the
// same every time the loss is evaluated with the same context.
struct StepContext {
  std::uint64_t noise_seed = 0;
  std::size_t step = 0;
};

class AttackLoss {
 public:
  virtual ~AttackLoss() = default;
  // x is a 1 x d row on `tape`; returns a scalar.
  virtual Var evaluate(Tape& tape, Var x, const StepContext& ctx) const = 0;
  virtual Direction direction() const { return Direction::minimize; }
};

// (-z_t + max_{y != t} z_y + kappa)_+ for a 1 x k logit row, or the mean of
// that over the rows of an m x k matrix.
Var cw_loss(Var logits, std::size_t target, double kappa);
double cw_loss(std::span<const double> logits, std::size_t target, double kappa);

// clip(x + eps * V, -1, 1) for `draws` rows of V ~ N(0, I) from `seed`, on the tape.
Var noisy_copies(Tape& tape, Var x, double eps, std::size_t draws, std::uint64_t seed);

class CwLoss final : public AttackLoss {
 public:
  CwLoss(const Mlp& model, std::size_t target, double kappa);
  Var evaluate(Tape& tape, Var x, const StepContext& ctx) const override;

 private:
  const Mlp& model_;
  std::size_t target_;
  double kappa_;
};

// alpha * l(x) + (1 - alpha) * mean_j l(clip(x + delta_j)) with fresh draws per step.
class CwNoisyLoss final : public AttackLoss {
 public:
  CwNoisyLoss(const Mlp& model, std::size_t target, const AttackConfig& cfg);
  Var evaluate(Tape& tape, Var x, const StepContext& ctx) const override;

 private:
  const Mlp& model_;
  std::size_t target_;
  AttackConfig cfg_;
};

// Per predicted class: mean clean logits h_y and mean averaged-noisy logits h'_y.
struct LogitProfile {
  std::size_t k = 0;
  double epsilon = 0.0;
  std::size_t replica_count = 0;
  std::vector<double> clean;  // k x k
  std::vector<double> noisy;  // k x k
  std::vector<std::size_t> members;

  bool available(std::size_t y) const { return y < k && members[y] > 0; }
  std::span<const double> h(std::size_t y) const { return {clean.data() + y * k, k}; }
  std::span<const double> h_noisy(std::size_t y) const { return {noisy.data() + y * k, k}; }
};

LogitProfile compute_profiles(const Mlp& model, const Tensor& samples, std::span<const std::uint64_t> streams,
                              const NoiseConfig& cfg);

// alpha * ||f(x) - h_t|| + (1 - alpha) * mean_j ||f(clip(x + delta_j)) - h'_t||
class LmaLoss final : public AttackLoss {
 public:
  LmaLoss(const Mlp& model, std::size_t target, const LogitProfile& profiles, const AttackConfig& cfg);
  Var evaluate(Tape& tape, Var x, const StepContext& ctx) const override;
  // Clean and noisy terms on already-built tape values, shared with the adaptive loss.
  Var combine(Tape& tape, Var clean_logits, Var noisy_logits) const;

 private:
  const Mlp& model_;
  std::size_t target_;
  AttackConfig cfg_;
  Tensor h_;
  Tensor h_noisy_tiled_;
};

// alpha * l_LMA + (1 - alpha) * (-log max(p_benign, 1e-12)) where p_benign is
// the detector's output on f(x) || mean_j f(clip(x + delta_j)) using the
// same draws as the LMA noisy term.
class AdaptiveLoss final : public AttackLoss {
 public:
  static constexpr double kBenignFloor = 1e-12;

  AdaptiveLoss(const Mlp& model, const DetectorModel& detector, std::size_t target, const LogitProfile& profiles,
               const AttackConfig& cfg);
  Var evaluate(Tape& tape, Var x, const StepContext& ctx) const override;

 private:
  const Mlp& model_;
  const DetectorModel& detector_;
  LmaLoss lma_;
  AttackConfig cfg_;
};

struct PgdResult {
  std::vector<double> x_adv;
  double final_loss = 0.0;
};

// x^{j+1} = Pi(x^j + eps_step * sign(v^j)), v = -grad for minimizing losses,
// +grad for maximizing ones. Pi clips into [x - eps_max, x + eps_max] and [-1, 1].
PgdResult pgd(std::span<const double> x, const AttackLoss& loss, const AttackConfig& cfg, std::uint64_t stream);

// Projection of v into the budget around x0; guarantees |v - x0| <= eps exactly.
double project(double v, double x0, double eps);

std::size_t choose_target(std::span<const double> logits, const AttackConfig& cfg, std::uint64_t stream);

struct AttackRecord {
  std::uint64_t id = 0;
  std::uint32_t label = 0;
  std::size_t source_prediction = 0;
  std::size_t target = 0;
  std::size_t adversarial_prediction = 0;
  double linf = 0.0;
  double final_loss = 0.0;
  std::vector<double> x_adv;

  bool target_hit() const { return adversarial_prediction == target; }
  bool evaded() const { return adversarial_prediction != label; }
};

// What to attack with. Profiles are required for lma/adaptive, the detector
// for adaptive.
struct AttackSetup {
  AttackKind kind = AttackKind::cw;
  const LogitProfile* profiles = nullptr;
  const DetectorModel* detector = nullptr;
};

std::unique_ptr<AttackLoss> make_loss(const Mlp& model, const AttackSetup& setup, const AttackConfig& cfg,
                                      std::size_t target);

// Attacks every row of `samples` (parallel over rows, results in row order).
std::vector<AttackRecord> run_attack(const Mlp& model, const Tensor& samples, std::span<const std::uint32_t> labels,
                                     std::span<const std::uint64_t> ids, const AttackSetup& setup,
                                     const AttackConfig& cfg);

double target_hit_rate(std::span<const AttackRecord> records);

}  // namespace advbench
