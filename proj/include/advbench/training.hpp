#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "advbench/dataset.hpp"
#include "advbench/mlp.hpp"

namespace advbench {

struct TrainConfig {
  std::size_t epochs = 6;
  double lr = 0.02;
  double momentum = 0.9;
  std::size_t batch = 64;
  std::uint64_t seed = 1;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// Mean softmax cross-entropy of `logits` (n x k) against `labels`, on a tape.
Var softmax_cross_entropy(Var logits, std::span<const std::uint32_t> labels);

// One step of SGD with (heavy-ball) momentum over a parameter list.
class MomentumSgd {
 public:
  MomentumSgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {}
  void step(Mlp& net, const std::vector<Var>& params);

 private:
  double lr_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

// Minibatch SGD with momentum on softmax cross-entropy over the train split.
// Deterministic given config.seed. Throws NumericError if the loss diverges.
TrainReport train(Mlp& model, const Dataset& data, const TrainConfig& config);

// Fraction of `idx` whose argmax prediction equals the label.
double accuracy(const Mlp& model, const Dataset& data, std::span<const std::size_t> idx);

}  // namespace advbench
