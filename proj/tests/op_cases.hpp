#pragma once

// Scalar test functions exercising every differentiable op once.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fd_check.hpp"

namespace advbench::testing {

// Pushes entries away from 0 so FD steps never straddle a ReLU/clip kink.
inline Tensor away_from_kinks(Tensor t, double margin = 0.05) {
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (std::abs(t[i]) < margin) t[i] = t[i] < 0 ? -margin : margin;
  }
  return t;
}

// A fixed weighting so reductions to a scalar see distinct per-entry gradients.
inline Var weighted_sum(Tape& tape, Var v) {
  Tensor w(v.shape());
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
  return sum(mul(v, tape.leaf(std::move(w))));
}

struct OpCase {
  const char* name;
  Shape shape;
  std::function<Var(Tape&, Var)> fn;
  bool avoid_kinks = false;
};

inline std::vector<OpCase> op_cases() {
  return {
        OpCase{"add", {3, 4}, [](Tape& t, Var x) { return weighted_sum(t, add(x, mul(x, x))); }},
      OpCase{"sub", {3, 4}, [](Tape& t, Var x) { return weighted_sum(t, sub(mul(x, x), x)); }},
      OpCase{"mul", {3, 4}, [](Tape& t, Var x) { return weighted_sum(t, mul(x, exp(scale(x, 0.3)))); }},
      OpCase{"scalar_broadcast", {3, 4},
             [](Tape& t, Var x) { return weighted_sum(t, mul(x, sum(scale(x, 0.1)))); }},
      OpCase{"scale", {5}, [](Tape& t, Var x) { return weighted_sum(t, scale(x, -2.5)); }},
      OpCase{"add_scalar", {5}, [](Tape& t, Var x) { return weighted_sum(t, mul(add_scalar(x, 1.5), x)); }},
      OpCase{"neg", {5}, [](Tape& t, Var x) { return weighted_sum(t, mul(neg(x), x)); }},
      OpCase{"matmul", {3, 4},
             [](Tape& t, Var x) {
               Var w = t.leaf(random_tensor({4, 2}, 7));
               return weighted_sum(t, matmul(x, w));
             }},
      OpCase{"matmul_rhs", {4, 2},
             [](Tape& t, Var w) {
               Var x = t.leaf(random_tensor({3, 4}, 8));
               return weighted_sum(t, matmul(x, w));
             }},
      OpCase{"affine", {2, 3},
             [](Tape& t, Var x) {
               Var w = t.leaf(random_tensor({3, 4}, 9));
               Var b = t.leaf(random_tensor({1, 4}, 10));
               return weighted_sum(t, affine(x, w, b));
             }},
      OpCase{"affine_bias", {1, 4},
             [](Tape& t, Var b) {
               Var x = t.leaf(random_tensor({3, 3}, 11));
               Var w = t.leaf(random_tensor({3, 4}, 12));
               return weighted_sum(t, affine(x, w, b));
             }},
      OpCase{"relu", {3, 4}, [](Tape& t, Var x) { return weighted_sum(t, relu(x)); }, true},
      OpCase{"exp", {6}, [](Tape& t, Var x) { return weighted_sum(t, exp(x)); }},
      OpCase{"log", {6}, [](Tape& t, Var x) { return weighted_sum(t, log(add_scalar(mul(x, x), 0.5))); }},
      OpCase{"clip", {3, 4}, [](Tape& t, Var x) { return weighted_sum(t, clip(x, -0.8, 0.9)); }, true},
      OpCase{"softmax", {2, 5}, [](Tape& t, Var x) { return weighted_sum(t, softmax(x)); }},
      OpCase{"log_softmax", {2, 5}, [](Tape& t, Var x) { return weighted_sum(t, log_softmax(x)); }},
      OpCase{"max_axis_rows", {3, 4}, [](Tape& t, Var x) { return weighted_sum(t, max_axis(x, 1)); }},
      OpCase{"max_axis_cols", {3, 4}, [](Tape& t, Var x) { return weighted_sum(t, max_axis(x, 0)); }},
      OpCase{"sum", {3, 4}, [](Tape&, Var x) { return sum(mul(x, x)); }},
      OpCase{"mean", {3, 4}, [](Tape&, Var x) { return mean(mul(x, x)); }},
      OpCase{"sum_axis", {3, 4}, [](Tape& t, Var x) { return weighted_sum(t, mul(sum_axis(x, 0), sum_axis(x, 0))); }},
      OpCase{"mean_axis", {3, 4}, [](Tape& t, Var x) { return weighted_sum(t, exp(mean_axis(x, 1))); }},
      OpCase{"l2_norm", {7}, [](Tape&, Var x) { return l2_norm(x); }},
      OpCase{"l2_norm_rows", {3, 4}, [](Tape& t, Var x) { return weighted_sum(t, l2_norm_rows(x)); }},
      OpCase{"hinge", {4}, [](Tape& t, Var x) { return weighted_sum(t, hinge(add_scalar(x, 0.2))); }, false},
      OpCase{"concat_rows", {2, 3},
             [](Tape& t, Var x) {
               const Var parts[] = {x, mul(x, x), x};
               return weighted_sum(t, concat(parts, 0));
             }},
      OpCase{"concat_cols", {2, 3},
             [](Tape& t, Var x) {
               const Var parts[] = {exp(x), x};
               return weighted_sum(t, concat(parts, 1));
             }},
      OpCase{"select_cols", {2, 5},
             [](Tape& t, Var x) {
               const std::size_t cols[] = {4, 1, 1};
               return weighted_sum(t, mul(select_cols(x, cols), select_cols(x, cols)));
             }},
      OpCase{"reshape", {2, 6}, [](Tape& t, Var x) { return weighted_sum(t, softmax(reshape(x, {3, 4}))); }}};
}

}  // namespace advbench::testing
