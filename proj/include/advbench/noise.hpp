#pragma once

// Noisy-ensemble generation and the statistics built on it: averaged noisy
// logits, benign calibration of logit-difference gains, and the two figure
// probes (probability-vs-noise curves and the adversarial-cone grid).
//
// Every function that draws noise takes a `stream` id (normally the stable
// sample id). Replicas depend only on (cfg.seed, stream), never on call
// order, so per-sample work can run in any order or in parallel.

#include <cstdint>
#include <span>
#include <vector>

#include "advbench/mlp.hpp"
#include "advbench/tensor.hpp"

namespace advbench {

struct NoiseConfig {
  double epsilon = 0.1;  // noise standard deviation in [-1,1] pixel units
  std::size_t count = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

// cfg.count replicas clip(x + epsilon * v, -1, 1), v ~ N(0, I); count x d.
Tensor make_noisy(std::span<const double> x, const NoiseConfig& cfg, std::uint64_t stream);

struct LogitSummary {
  std::vector<double> clean;       // f(x)
  std::vector<double> mean_noisy;  // mean over replicas of f(x + delta)
  Tensor replica_logits;           // count x k, only when requested
};

LogitSummary logit_summary(const Mlp& model, std::span<const double> x, const NoiseConfig& cfg, std::uint64_t stream,
                           bool keep_replicas = false);

// Mean and (population) standard deviation of
//   g_{y,z}(x, delta) = f_{y,z}(x + delta) - f_{y,z}(x),  f_{y,z} = f_z - f_y
// for every ordered pair y != z, pooled over benign samples predicted as y
// and over their replicas. Sigma is floored at kSigmaFloor.
struct CalibrationStats {
  static constexpr double kSigmaFloor = 1e-8;
  static constexpr std::size_t kMinObservations = 30;

  std::size_t k = 0;
  double epsilon = 0.0;
  std::vector<double> mu;      // k x k, diagonal unused
  std::vector<double> sigma;   // k x k, diagonal unused
  std::vector<std::size_t> n;  // pooled observation count per pair

  double mean(std::size_t y, std::size_t z) const { return mu[y * k + z]; }
  double stddev(std::size_t y, std::size_t z) const { return sigma[y * k + z]; }
};

// `benign` is n x d; `streams` gives the noise stream of each row.
CalibrationStats benign_calibration(const Mlp& model, const Tensor& benign, std::span<const std::uint64_t> streams,
                                    const NoiseConfig& cfg);

// Rows: one per epsilon, columns: mean class probability over replicas.
// epsilon == 0 yields S(f(x)) exactly.
Tensor probability_curve(const Mlp& model, std::span<const double> x, std::span<const double> epsilons,
                         std::size_t count, std::uint64_t seed, std::uint64_t stream);

// Log-spaced sweep [lo, hi] with `points` entries.
std::vector<double> log_sweep(double lo, double hi, std::size_t points);

struct ConeConfig {
  std::size_t axis_steps = 21;     // positions along the adversarial direction
  std::size_t offset_steps = 11;   // positions along the random orthogonal direction
  std::size_t angular_samples = 16;
  double axis_extent = 2.0;        // in units of ||x_adv - x||
  double offset_extent = 2.0;      // in units of ||x_adv - x||
  std::uint64_t seed = 0;
};

// prob(i, j) = mean over angular samples r of S(f(clip(x + t_i u + s_j r)))[true_class]
// with u the unit adversarial direction and r a random unit vector
// orthogonal to u, re-drawn per angular sample.
struct ConeGrid {
  std::vector<double> axis;     // t_i
  std::vector<double> offsets;  // s_j
  Tensor prob;                  // axis_steps x offset_steps
  double adversarial_distance = 0.0;
};

ConeGrid cone_probe(const Mlp& model, std::span<const double> x, std::span<const double> x_adv,
                    std::size_t true_class, const ConeConfig& cfg, std::uint64_t stream);

// Row-wise softmax of a logit matrix.
Tensor softmax_rows(const Tensor& logits);

}  // namespace advbench
