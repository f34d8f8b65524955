#include "advbench/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advbench/error.hpp"
#include "advbench/kernels.hpp"
#include "advbench/rng.hpp"

namespace advbench {

const char* attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::cw: return "cw";
    case AttackKind::cw_noisy: return "cw-noisy";
    case AttackKind::lma: return "lma";
    case AttackKind::adaptive: return "adaptive";
  }
  return "unknown";
}

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "cw") return AttackKind::cw;
  if (name == "cw-noisy") return AttackKind::cw_noisy;
  if (name == "lma") return AttackKind::lma;
  if (name == "adaptive") return AttackKind::adaptive;
  throw UsageError("unknown attack kind \"" + name + "\"; expected one of {cw, cw-noisy, lma, adaptive}");
}

TargetRule parse_target_rule(const std::string& name) {
  if (name == "fixed") return TargetRule::fixed;
  if (name == "least-likely") return TargetRule::least_likely;
  if (name == "random-other") return TargetRule::random_other;
  throw ConfigError("unknown target rule \"" + name + "\"; expected fixed, least-likely or random-other");
}

const char* target_rule_name(TargetRule rule) {
  switch (rule) {
    case TargetRule::fixed: return "fixed";
    case TargetRule::least_likely: return "least-likely";
    case TargetRule::random_other: return "random-other";
  }
  return "unknown";
}

void AttackConfig::validate() const {
  if (!(eps_max > 0.0)) throw ConfigError("attack: eps_max must be > 0");
  if (eps_step < 0.0 || step_size() > eps_max) throw ConfigError("attack: need 0 < eps_step <= eps_max");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("attack: alpha must lie in [0,1]");
  if (noise_draws < 1) throw ConfigError("attack: noise_draws must be >= 1");
  if (!(kappa >= 0.0)) throw ConfigError("attack: kappa must be >= 0");
}

// ---- losses --------------------------------------------------------------

Var cw_loss(Var logits, std::size_t target, double kappa) {
  const Tensor& z = logits.value();
  const std::size_t k = z.cols();
  if (k < 2) throw ShapeError("cw_loss: need at least 2 logits");
  if (target >= k) throw ShapeError("cw_loss: target " + std::to_string(target) + " out of range for k=" + std::to_string(k));
  std::vector<std::size_t> others;
  for (std::size_t c = 0; c < k; ++c) {
    if (c != target) others.push_back(c);
  }
  const std::size_t t[] = {target};
  Var zt = select_cols(logits, t);
  Var zo = max_axis(select_cols(logits, others), 1);
  Var margin = hinge(add_scalar(sub(zo, zt), kappa));
  return z.rows() == 1 ? reshape(margin, {1}) : mean(margin);
}

double cw_loss(std::span<const double> z, std::size_t target, double kappa) {
  if (z.size() < 2) throw ShapeError("cw_loss: need at least 2 logits");
  if (target >= z.size()) throw ShapeError("cw_loss: target out of range");
  double other = -INFINITY;
  for (std::size_t c = 0; c < z.size(); ++c) {
    if (c != target) other = std::max(other, z[c]);
  }
  return std::max(0.0, -z[target] + other + kappa);
}

Var noisy_copies(Tape& tape, Var x, double eps, std::size_t draws, std::uint64_t seed) {
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  Tensor noise({draws, d});
  Rng rng(seed);
  for (double& v : noise.data()) v = eps * rng.normal();
  std::vector<Var> rows(draws, x);
  Var tiled = draws == 1 ? x : concat(rows, 0);
  return clip(add(tiled, tape.leaf(std::move(noise))), -1.0, 1.0);
}

CwLoss::CwLoss(const Mlp& model, std::size_t target, double kappa) : model_(model), target_(target), kappa_(kappa) {}

Var CwLoss::evaluate(Tape& tape, Var x, const StepContext&) const {
  return cw_loss(model_.forward(tape, x), target_, kappa_);
}

CwNoisyLoss::CwNoisyLoss(const Mlp& model, std::size_t target, const AttackConfig& cfg)
    : model_(model), target_(target), cfg_(cfg) {}

Var CwNoisyLoss::evaluate(Tape& tape, Var x, const StepContext& ctx) const {
  Var clean = cw_loss(model_.forward(tape, x), target_, cfg_.kappa);
  if (cfg_.alpha == 1.0) return clean;
  Var noisy_in = noisy_copies(tape, x, cfg_.noise_epsilon, cfg_.noise_draws, ctx.noise_seed);
  Var noisy = cw_loss(model_.forward(tape, noisy_in), target_, cfg_.kappa);
  return add(scale(clean, cfg_.alpha), scale(noisy, 1.0 - cfg_.alpha));
}

LogitProfile compute_profiles(const Mlp& model, const Tensor& samples, std::span<const std::uint64_t> streams,
                              const NoiseConfig& cfg) {
  const std::size_t n = samples.rows();
  if (n == 0) throw InsufficientDataError("compute_profiles: empty validation set");
  if (streams.size() != n) throw ShapeError("compute_profiles: stream count does not match sample count");
  const std::size_t k = model.output_dim();
  std::vector<LogitSummary> summaries(n);
  kernels::parallel_for(n, [&](std::size_t i) { summaries[i] = logit_summary(model, samples.row_span(i), cfg, streams[i]); });
  LogitProfile p;
  p.k = k;
  p.epsilon = cfg.epsilon;
  p.replica_count = cfg.count;
  p.clean.assign(k * k, 0.0);
  p.noisy.assign(k * k, 0.0);
  p.members.assign(k, 0);
  for (const auto& s : summaries) {
    const std::size_t y = argmax(s.clean);
    p.members[y]++;
    for (std::size_t j = 0; j < k; ++j) {
      p.clean[y * k + j] += s.clean[j];
      p.noisy[y * k + j] += s.mean_noisy[j];
    }
  }
  for (std::size_t y = 0; y < k; ++y) {
    if (p.members[y] == 0) continue;
    for (std::size_t j = 0; j < k; ++j) {
      p.clean[y * k + j] /= static_cast<double>(p.members[y]);
      p.noisy[y * k + j] /= static_cast<double>(p.members[y]);
    }
  }
  return p;
}

LmaLoss::LmaLoss(const Mlp& model, std::size_t target, const LogitProfile& profiles, const AttackConfig& cfg)
    : model_(model), target_(target), cfg_(cfg) {
  if (!profiles.available(target)) {
    throw InsufficientDataError("lma: no logit profile for target class " + std::to_string(target) +
                                " (no validation sample predicted as that class)");
  }
  const std::size_t k = profiles.k;
  h_ = Tensor::row(profiles.h(target));
  h_noisy_tiled_ = Tensor({cfg.noise_draws, k});
  for (std::size_t r = 0; r < cfg.noise_draws; ++r) {
    auto src = profiles.h_noisy(target);
    std::copy(src.begin(), src.end(), h_noisy_tiled_.raw() + r * k);
  }
}

Var LmaLoss::combine(Tape& tape, Var clean_logits, Var noisy_logits) const {
  Var clean = l2_norm(sub(clean_logits, tape.constant(h_)));
  if (cfg_.alpha == 1.0) return clean;
  Var noisy = mean(l2_norm_rows(sub(noisy_logits, tape.constant(h_noisy_tiled_))));
  return add(scale(clean, cfg_.alpha), scale(noisy, 1.0 - cfg_.alpha));
}

Var LmaLoss::evaluate(Tape& tape, Var x, const StepContext& ctx) const {
  Var clean = model_.forward(tape, x);
  if (cfg_.alpha == 1.0) return l2_norm(sub(clean, tape.constant(h_)));
  Var noisy = model_.forward(tape, noisy_copies(tape, x, cfg_.noise_epsilon, cfg_.noise_draws, ctx.noise_seed));
  return combine(tape, clean, noisy);
}

AdaptiveLoss::AdaptiveLoss(const Mlp& model, const DetectorModel& detector, std::size_t target,
                           const LogitProfile& profiles, const AttackConfig& cfg)
    : model_(model), detector_(detector), lma_(model, target, profiles, cfg), cfg_(cfg) {
  if (detector.k() != model.output_dim()) throw ShapeError("adaptive: detector class count does not match the model");
}

Var AdaptiveLoss::evaluate(Tape& tape, Var x, const StepContext& ctx) const {
  Var clean = model_.forward(tape, x);
  Var noisy = model_.forward(tape, noisy_copies(tape, x, cfg_.noise_epsilon, cfg_.noise_draws, ctx.noise_seed));
  Var lma = lma_.combine(tape, clean, noisy);
  const Var parts[] = {clean, mean_axis(noisy, 0)};
  Var logp = log_softmax(detector_.forward(tape, concat(parts, 1)));
  const std::size_t benign[] = {0};
  Var detector_loss = neg(clip(reshape(select_cols(logp, benign), {1}), std::log(kBenignFloor), INFINITY));
  return add(scale(lma, cfg_.alpha), scale(detector_loss, 1.0 - cfg_.alpha));
}

// ---- PGD -----------------------------------------------------------------

double project(double v, double x0, double eps) {
  double p = std::clamp(v, std::max(x0 - eps, -1.0), std::min(x0 + eps, 1.0));
  while (p - x0 > eps) p = std::nextafter(p, x0);
  while (x0 - p > eps) p = std::nextafter(p, x0);
  return p;
}

PgdResult pgd(std::span<const double> x, const AttackLoss& loss, const AttackConfig& cfg, std::uint64_t stream) {
  cfg.validate();
  const std::size_t d = x.size();
  const double step = cfg.step_size();
  const double sign_dir = loss.direction() == Direction::minimize ? -1.0 : 1.0;
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t j = 0; j < cfg.steps; ++j) {
    Tape tape;
    Var xv = tape.leaf(Tensor::row(cur), true);
    const StepContext ctx{derive_seed(cfg.seed, "pgd/noise", stream, j), j};
    Var l;
    try {
      l = loss.evaluate(tape, xv, ctx);
      tape.backward(l);
    } catch (const NumericError& e) {
      throw NumericError("pgd: non-finite value at step " + std::to_string(j) + ": " + e.what());
    }
    const auto& g = tape.grad(xv.id());
    if (g.empty()) continue;  // loss does not depend on x here (e.g. hinge inactive)
    for (std::size_t i = 0; i < d; ++i) {
      if (!std::isfinite(g[i])) throw NumericError("pgd: NaN gradient at step " + std::to_string(j));
      const double v = sign_dir * g[i];
      const double s = v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0;
      cur[i] = project(cur[i] + step * s, x[i], cfg.eps_max);
    }
  }
  PgdResult r;
  Tape tape;
  Var xv = tape.leaf(Tensor::row(cur));
  r.final_loss = loss.evaluate(tape, xv, StepContext{derive_seed(cfg.seed, "pgd/noise", stream, cfg.steps), cfg.steps}).value().item();
  r.x_adv = std::move(cur);
  return r;
}

std::size_t choose_target(std::span<const double> logits, const AttackConfig& cfg, std::uint64_t stream) {
  const std::size_t k = logits.size();
  const std::size_t pred = argmax(logits);
  switch (cfg.target_rule) {
    case TargetRule::fixed:
      if (cfg.fixed_target >= k) throw ConfigError("attack: fixed target out of range");
      return cfg.fixed_target;
    case TargetRule::least_likely: {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (logits[c] < logits[best]) best = c;
      }
      return best;
    }
    case TargetRule::random_other: {
      Rng rng(derive_seed(cfg.seed, "attack/target", stream));
      const std::size_t pick = rng.below(k - 1);
      return pick < pred ? pick : pick + 1;
    }
  }
  return 0;
}

std::unique_ptr<AttackLoss> make_loss(const Mlp& model, const AttackSetup& setup, const AttackConfig& cfg,
                                      std::size_t target) {
  switch (setup.kind) {
    case AttackKind::cw: return std::make_unique<CwLoss>(model, target, cfg.kappa);
    case AttackKind::cw_noisy: return std::make_unique<CwNoisyLoss>(model, target, cfg);
    case AttackKind::lma:
      if (!setup.profiles) throw ConfigError("lma attack needs logit profiles");
      return std::make_unique<LmaLoss>(model, target, *setup.profiles, cfg);
    case AttackKind::adaptive:
      if (!setup.profiles) throw ConfigError("adaptive attack needs logit profiles");
      if (!setup.detector) throw ConfigError("adaptive attack needs a classifier-based detector");
      return std::make_unique<AdaptiveLoss>(model, *setup.detector, target, *setup.profiles, cfg);
  }
  throw ConfigError("unknown attack kind");
}

std::vector<AttackRecord> run_attack(const Mlp& model, const Tensor& samples, std::span<const std::uint32_t> labels,
                                     std::span<const std::uint64_t> ids, const AttackSetup& setup,
                                     const AttackConfig& cfg) {
  cfg.validate();
  const std::size_t n = samples.rows();
  if (labels.size() != n || ids.size() != n) throw ShapeError("run_attack: labels/ids do not match sample count");
  std::vector<AttackRecord> out(n);
  kernels::parallel_for(n, [&](std::size_t i) {
    auto x = samples.row_span(i);
    const auto clean = model.logits(x);
    AttackRecord rec;
    rec.id = ids[i];
    rec.label = labels[i];
    rec.source_prediction = argmax(clean);
    rec.target = choose_target(clean, cfg, ids[i]);
    auto loss = make_loss(model, setup, cfg, rec.target);
    auto res = pgd(x, *loss, cfg, ids[i]);
    rec.adversarial_prediction = argmax(model.logits(res.x_adv));
    rec.final_loss = res.final_loss;
    for (std::size_t j = 0; j < x.size(); ++j) rec.linf = std::max(rec.linf, std::abs(res.x_adv[j] - x[j]));
    rec.x_adv = std::move(res.x_adv);
    out[i] = std::move(rec);
  });
  return out;
}

double target_hit_rate(std::span<const AttackRecord> records) {
  if (records.empty()) return 0.0;
  const auto hits = std::count_if(records.begin(), records.end(), [](const AttackRecord& r) { return r.target_hit(); });
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

}  // namespace advbench
