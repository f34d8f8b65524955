#include "advbench/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advbench/error.hpp"
#include "advbench/rng.hpp"

namespace advbench {

Var softmax_cross_entropy(Var logits, std::span<const std::uint32_t> labels) {
  const Tensor& z = logits.value();
  if (z.rows() != labels.size()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(z.rows()) + " logit rows vs " + std::to_string(labels.size()) + " labels");
  }
  Tensor onehot(z.shape(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= z.cols()) throw ShapeError("softmax_cross_entropy: label out of range");
    onehot.at(i, labels[i]) = 1.0;
  }
  Tape& tape = *logits.tape();
  Var picked = mul(log_softmax(logits), tape.leaf(std::move(onehot)));
  return scale(sum(picked), -1.0 / static_cast<double>(labels.size()));
}

void MomentumSgd::step(Mlp& net, const std::vector<Var>& params) {
  if (velocity_.empty()) {
    for (const Var& p : params) velocity_.emplace_back(p.value().numel(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& target = (i % 2 == 0) ? net.weights()[i / 2] : net.biases()[i / 2];
    const auto& g = params[i].tape()->grad(params[i].id());
    auto& v = velocity_[i];
    if (g.empty()) continue;
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      target[j] -= lr_ * v[j];
    }
  }
}

double accuracy(const Mlp& model, const Dataset& data, std::span<const std::size_t> idx) {
  if (idx.empty()) return 0.0;
  const Tensor z = model.logits(data.matrix(idx));
  std::size_t hit = 0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (argmax(z.row_span(r)) == data.labels[idx[r]]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(idx.size());
}

TrainReport train(Mlp& model, const Dataset& data, const TrainConfig& config) {
  TrainReport report;
  const auto train_idx = data.indices(Split::train);
  if (train_idx.empty()) throw Error("train: dataset has no train split");
  if (model.input_dim() != data.d || model.output_dim() != data.k) {
    throw ShapeError("train: model " + std::to_string(model.input_dim()) + "->" + std::to_string(model.output_dim()) +
                     " does not match dataset d=" + std::to_string(data.d) + " k=" + std::to_string(data.k));
  }
  if (config.epochs == 0) return report;
  if (config.batch == 0) throw ConfigError("train: batch must be >= 1");

  MomentumSgd opt(config.lr, config.momentum);
  std::vector<std::size_t> order = train_idx;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, "train/shuffle", epoch));
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      std::vector<std::uint32_t> labels;
      for (auto i : batch) labels.push_back(data.labels[i]);
      Tape tape;
      std::vector<Var> params;
      Var x = tape.leaf(data.matrix(batch));
      Var loss;
      try {
        loss = softmax_cross_entropy(model.forward_trainable(tape, x, params), labels);
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw NumericError(std::string("training diverged in epoch ") + std::to_string(epoch) + " (" + e.what() + "); lower the learning rate");
      }
      const double l = loss.value().item();
      if (!std::isfinite(l)) throw NumericError("training diverged (loss is not finite); lower the learning rate");
      loss_sum += l * static_cast<double>(batch.size());
      opt.step(model, params);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }
  report.train_accuracy = accuracy(model, data, train_idx);
  report.test_accuracy = accuracy(model, data, data.indices(Split::test));
  return report;
}

}  // namespace advbench
