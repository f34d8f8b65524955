#include "advbench/noise.hpp"

#include <algorithm>
#include <cmath>

#include "advbench/error.hpp"
#include "advbench/kernels.hpp"
#include "advbench/rng.hpp"

namespace advbench {

void NoiseConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("noise epsilon must be > 0");
  if (count < 1) throw ConfigError("noise replica count must be >= 1");
}

Tensor make_noisy(std::span<const double> x, const NoiseConfig& cfg, std::uint64_t stream) {
  cfg.validate();
  const std::size_t d = x.size();
  Tensor out({cfg.count, d});
  Rng rng(derive_seed(cfg.seed, "noise/replicas", stream));
  for (std::size_t r = 0; r < cfg.count; ++r) {
    double* row = out.raw() + r * d;
    for (std::size_t j = 0; j < d; ++j) row[j] = std::clamp(x[j] + cfg.epsilon * rng.normal(), -1.0, 1.0);
  }
  return out;
}

LogitSummary logit_summary(const Mlp& model, std::span<const double> x, const NoiseConfig& cfg, std::uint64_t stream,
                           bool keep_replicas) {
  LogitSummary s;
  s.clean = model.logits(x);
  Tensor z = model.logits(make_noisy(x, cfg, stream));
  const std::size_t k = z.cols();
  s.mean_noisy.assign(k, 0.0);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    for (std::size_t j = 0; j < k; ++j) s.mean_noisy[j] += z.at(r, j);
  }
  for (double& v : s.mean_noisy) v /= static_cast<double>(z.rows());
  if (keep_replicas) s.replica_logits = std::move(z);
  return s;
}

CalibrationStats benign_calibration(const Mlp& model, const Tensor& benign, std::span<const std::uint64_t> streams,
                                    const NoiseConfig& cfg) {
  cfg.validate();
  const std::size_t n = benign.rows();
  if (streams.size() != n) throw ShapeError("benign_calibration: stream count does not match sample count");
  const std::size_t k = model.output_dim();
  std::vector<LogitSummary> per_sample(n);
  kernels::parallel_for(n, [&](std::size_t i) {
    per_sample[i] = logit_summary(model, benign.row_span(i), cfg, streams[i], true);
  });

  CalibrationStats stats;
  stats.k = k;
  stats.epsilon = cfg.epsilon;
  stats.mu.assign(k * k, 0.0);
  stats.sigma.assign(k * k, 0.0);
  stats.n.assign(k * k, 0);
  // Welford accumulation in sample order.
  std::vector<double> m2(k * k, 0.0);
  for (const auto& s : per_sample) {
    const std::size_t y = argmax(s.clean);
    const Tensor& z = s.replica_logits;
    for (std::size_t r = 0; r < z.rows(); ++r) {
      for (std::size_t c = 0; c < k; ++c) {
        if (c == y) continue;
        const double g = (z.at(r, c) - z.at(r, y)) - (s.clean[c] - s.clean[y]);
        const std::size_t p = y * k + c;
        const double delta = g - stats.mu[p];
        stats.mu[p] += delta / static_cast<double>(++stats.n[p]);
        m2[p] += delta * (g - stats.mu[p]);
      }
    }
  }
  for (std::size_t y = 0; y < k; ++y) {
    for (std::size_t c = 0; c < k; ++c) {
      if (y == c) continue;
      const std::size_t p = y * k + c;
      if (stats.n[p] < CalibrationStats::kMinObservations) {
        throw InsufficientDataError("benign_calibration: pair (" + std::to_string(y) + "," + std::to_string(c) + ") has " +
                                    std::to_string(stats.n[p]) + " pooled observations, need >= " +
                                    std::to_string(CalibrationStats::kMinObservations));
      }
      stats.sigma[p] = std::max(std::sqrt(m2[p] / static_cast<double>(stats.n[p])), CalibrationStats::kSigmaFloor);
    }
  }
  return stats;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor p(logits.shape());
  const std::size_t cols = logits.cols();
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row_span(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += (p.at(r, j) = std::exp(z[j] - mx));
    for (std::size_t j = 0; j < cols; ++j) p.at(r, j) /= s;
  }
  return p;
}

Tensor probability_curve(const Mlp& model, std::span<const double> x, std::span<const double> epsilons,
                         std::size_t count, std::uint64_t seed, std::uint64_t stream) {
  if (epsilons.empty()) throw ConfigError("probability_curve: empty epsilon list");
  const std::size_t k = model.output_dim();
  Tensor out({epsilons.size(), k});
  for (std::size_t e = 0; e < epsilons.size(); ++e) {
    const double eps = epsilons[e];
    if (!(eps >= 0.0)) throw ConfigError("probability_curve: epsilon must be >= 0");
    Tensor probs;
    if (eps == 0.0) {
      probs = softmax_rows(model.logits(Tensor::row(x)));
    } else {
      NoiseConfig cfg{eps, count, derive_seed(seed, "curve", e)};
      probs = softmax_rows(model.logits(make_noisy(x, cfg, stream)));
    }
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      for (std::size_t j = 0; j < k; ++j) out.at(e, j) += probs.at(r, j);
    }
    for (std::size_t j = 0; j < k; ++j) out.at(e, j) /= static_cast<double>(probs.rows());
  }
  return out;
}

std::vector<double> log_sweep(double lo, double hi, std::size_t points) {
  if (!(lo > 0.0 && hi > lo) || points < 2) throw ConfigError("log_sweep: need 0 < lo < hi and >= 2 points");
  std::vector<double> out(points);
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < points; ++i) {
    out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1));
  }
  return out;
}

ConeGrid cone_probe(const Mlp& model, std::span<const double> x, std::span<const double> x_adv,
                    std::size_t true_class, const ConeConfig& cfg, std::uint64_t stream) {
  const std::size_t d = x.size();
  if (x_adv.size() != d) throw ShapeError("cone_probe: x and x_adv differ in dimension");
  if (true_class >= model.output_dim()) throw ConfigError("cone_probe: true class out of range");
  if (cfg.axis_steps < 2 || cfg.offset_steps < 1 || cfg.angular_samples < 1) {
    throw ConfigError("cone_probe: need axis_steps >= 2, offset_steps >= 1, angular_samples >= 1");
  }
  std::vector<double> u(d);
  double dist = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    u[j] = x_adv[j] - x[j];
    dist += u[j] * u[j];
  }
  dist = std::sqrt(dist);
  if (dist == 0.0) throw Error("cone_probe: x_adv equals x, adversarial direction undefined");
  for (double& v : u) v /= dist;

  // Random unit directions orthogonal to u.
  Rng rng(derive_seed(cfg.seed, "cone/directions", stream));
  std::vector<std::vector<double>> dirs(cfg.angular_samples, std::vector<double>(d));
  for (auto& r : dirs) {
    double norm = 0.0;
    do {
      for (double& v : r) v = rng.normal();
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += r[j] * u[j];
      norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        r[j] -= dot * u[j];
        norm += r[j] * r[j];
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (double& v : r) v /= norm;
  }

  ConeGrid grid;
  grid.adversarial_distance = dist;
  for (std::size_t i = 0; i < cfg.axis_steps; ++i) {
    grid.axis.push_back(cfg.axis_extent * dist * static_cast<double>(i) / static_cast<double>(cfg.axis_steps - 1));
  }
  for (std::size_t j = 0; j < cfg.offset_steps; ++j) {
    grid.offsets.push_back(cfg.offset_steps == 1 ? 0.0
                                                 : cfg.offset_extent * dist * static_cast<double>(j) /
                                                       static_cast<double>(cfg.offset_steps - 1));
  }
  grid.prob = Tensor({cfg.axis_steps, cfg.offset_steps});
  Tensor points({cfg.angular_samples, d});
  for (std::size_t i = 0; i < cfg.axis_steps; ++i) {
    for (std::size_t j = 0; j < cfg.offset_steps; ++j) {
      for (std::size_t a = 0; a < cfg.angular_samples; ++a) {
        for (std::size_t q = 0; q < d; ++q) {
          points.at(a, q) = std::clamp(x[q] + grid.axis[i] * u[q] + grid.offsets[j] * dirs[a][q], -1.0, 1.0);
        }
      }
      const Tensor p = softmax_rows(model.logits(points));
      double s = 0.0;
      for (std::size_t a = 0; a < cfg.angular_samples; ++a) s += p.at(a, true_class);
      grid.prob.at(i, j) = s / static_cast<double>(cfg.angular_samples);
    }
  }
  return grid;
}

}  // namespace advbench
