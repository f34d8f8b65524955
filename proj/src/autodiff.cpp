#include "advbench/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "advbench/error.hpp"
#include "advbench/kernels.hpp"

namespace advbench {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::matmul: return "matmul";
    case OpKind::affine: return "affine";
    case OpKind::relu: return "relu";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::log: return "log";
    case OpKind::exp: return "exp";
    case OpKind::max_axis: return "max_axis";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::sum_axis: return "sum_axis";
    case OpKind::mean_axis: return "mean_axis";
    case OpKind::l2_norm: return "l2_norm";
    case OpKind::l2_norm_rows: return "l2_norm_rows";
    case OpKind::clip: return "clip";
    case OpKind::concat: return "concat";
    case OpKind::select_cols: return "select_cols";
    case OpKind::reshape: return "reshape";
  }
  return "unknown";
}

// ---- Var / Tape ----------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Tensor Var::grad() const {
  const auto& g = tape_->grad(id_);
  const auto& v = value();
  if (g.empty()) return Tensor(v.shape(), 0.0);
  return Tensor(v.shape(), g);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  check_finite(value, "leaf");
  Node node;
  node.owned = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(const Tensor& value) {
  Node node;
  node.borrowed = &value;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.borrowed ? *n.borrowed : n.owned;
}

std::vector<double>& Tape::grad_acc(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value(id).numel(), 0.0);
  return n.grad;
}

Var Tape::push(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  if (consumed_) throw Error(std::string(op_name(kind)) + ": tape already consumed by backward()");
  check_finite(value, op_name(kind));
  Node node;
  node.kind = kind;
  node.owned = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw Error("backward: root belongs to a different tape");
  if (consumed_) throw Error("backward: tape already consumed");
  if (nodes_.empty()) throw Error("backward: empty tape");
  const auto& rv = value(root.id());
  if (rv.numel() != 1) throw ShapeError("backward: root must be scalar, got shape " + shape_str(rv.shape()));
  consumed_ = true;
  if (!nodes_[root.id()].requires_grad) return;
  grad_acc(root.id())[0] = 1.0;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
    check_finite(n.grad, std::string("backward through ") + op_name(n.kind));
  }
  // Drop intermediate gradients; keep leaves.
  for (auto& n : nodes_) {
    if (n.kind != OpKind::leaf) {
      n.grad.clear();
      n.grad.shrink_to_fit();
    }
  }
}

// ---- helpers -------------------------------------------------------------

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw Error(std::string(op) + ": operands on different tapes");
  return *a.tape();
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

// Accumulate `g` (shape of output) into input `id`, reducing to a scalar when
// the input was broadcast.
void acc_broadcast(Tape& t, std::size_t id, std::span<const double> g, double factor) {
  if (!t.requires_grad(id)) return;
  auto& acc = t.grad_acc(id);
  if (acc.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += factor * g[i];
  } else {
    double s = 0.0;
    for (double v : g) s += v;
    acc[0] += factor * s;
  }
}

enum class Bin { add, sub, mul };

Var binary(Var a, Var b, Bin kind) {
  static constexpr OpKind kinds[] = {OpKind::add, OpKind::sub, OpKind::mul};
  const OpKind op = kinds[static_cast<int>(kind)];
  Tape& t = same_tape(a, b, op_name(op));
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool same = av.shape() == bv.shape();
  if (!same && !av.is_scalar() && !bv.is_scalar()) shape_mismatch(op_name(op), av.shape(), bv.shape());
  const Tensor& big = (same || bv.is_scalar()) ? av : bv;
  Tensor out(big.shape());
  const std::size_t n = out.numel();
  const bool a_b = av.numel() == n;
  const bool b_b = bv.numel() == n;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[a_b ? i : 0];
    const double y = bv[b_b ? i : 0];
    out[i] = kind == Bin::add ? x + y : kind == Bin::sub ? x - y : x * y;
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(op, std::move(out), {ia, ib}, [ia, ib, kind](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (kind == Bin::mul) {
      const Tensor& x = tp.value(ia);
      const Tensor& y = tp.value(ib);
      const std::size_t n = g.size();
      std::vector<double> gx(n), gy(n);
      for (std::size_t i = 0; i < n; ++i) {
        gx[i] = g[i] * y[y.numel() == n ? i : 0];
        gy[i] = g[i] * x[x.numel() == n ? i : 0];
      }
      acc_broadcast(tp, ia, gx, 1.0);
      acc_broadcast(tp, ib, gy, 1.0);
    } else {
      acc_broadcast(tp, ia, g, 1.0);
      acc_broadcast(tp, ib, g, kind == Bin::add ? 1.0 : -1.0);
    }
  });
}

template <class Fwd, class Deriv>
Var unary(Var a, OpKind op, Fwd fwd, Deriv deriv) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = fwd(av[i]);
  const std::size_t ia = a.id();
  return t.push(op, std::move(out), {ia}, [ia, deriv](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const auto& g = tp.grad(self);
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(self);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

// ---- elementwise ---------------------------------------------------------

Var add(Var a, Var b) { return binary(a, b, Bin::add); }
Var sub(Var a, Var b) { return binary(a, b, Bin::sub); }
Var mul(Var a, Var b) { return binary(a, b, Bin::mul); }

Var scale(Var a, double s) {
  return unary(a, OpKind::scale, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, OpKind::add_scalar, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  return unary(
      a, OpKind::relu, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(a, OpKind::exp, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, OpKind::log, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clip(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw Error("clip: lo must not exceed hi");
  return unary(
      a, OpKind::clip, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// ---- linear algebra ------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2("matmul", av);
  require_rank2("matmul", bv);
  if (av.cols() != bv.rows()) shape_mismatch("matmul", av.shape(), bv.shape());
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  Tensor out({n, m});
  kernels::matmul(av.data(), bv.data(), out.data(), n, k, m);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(OpKind::matmul, std::move(out), {ia, ib}, [ia, ib, n, k, m](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      std::vector<double> ga(n * k);
      kernels::matmul_bt(g, tp.value(ib).data(), ga, n, m, k);
      auto& acc = tp.grad_acc(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) acc[i] += ga[i];
    }
    if (tp.requires_grad(ib)) kernels::matmul_at_acc(tp.value(ia).data(), g, tp.grad_acc(ib), n, k, m);
  });
}

Var affine(Var x, Var w, Var b) {
  Tape& t = same_tape(x, w, "affine");
  same_tape(x, b, "affine");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require_rank2("affine", xv);
  require_rank2("affine", wv);
  if (xv.cols() != wv.rows()) shape_mismatch("affine", xv.shape(), wv.shape());
  const std::size_t n = xv.rows(), k = xv.cols(), m = wv.cols();
  if (bv.numel() != m) shape_mismatch("affine(bias)", bv.shape(), Shape{1, m});
  Tensor out({n, m});
  kernels::matmul(xv.data(), wv.data(), out.data(), n, k, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.raw() + i * m;
    for (std::size_t j = 0; j < m; ++j) row[j] += bv[j];
  }
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return t.push(OpKind::affine, std::move(out), {ix, iw, ib}, [ix, iw, ib, n, k, m](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.requires_grad(ix)) {
      std::vector<double> gx(n * k);
      kernels::matmul_bt(g, tp.value(iw).data(), gx, n, m, k);
      auto& acc = tp.grad_acc(ix);
      for (std::size_t i = 0; i < gx.size(); ++i) acc[i] += gx[i];
    }
    if (tp.requires_grad(iw)) kernels::matmul_at_acc(tp.value(ix).data(), g, tp.grad_acc(iw), n, k, m);
    if (tp.requires_grad(ib)) {
      auto& acc = tp.grad_acc(ib);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) acc[j] += g[i * m + j];
      }
    }
  });
}

// ---- softmax family ------------------------------------------------------

Var softmax(Var a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.raw() + r * cols;
    double* y = out.raw() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < cols; ++j) y[j] /= s;
  }
  const std::size_t ia = a.id();
  return t.push(OpKind::softmax, std::move(out), {ia}, [ia, rows, cols](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const auto& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * y[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) acc[r * cols + j] += y[r * cols + j] * (g[r * cols + j] - dot);
    }
  });
}

Var log_softmax(Var a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.raw() + r * cols;
    double* y = out.raw() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) y[j] = x[j] - lse;
  }
  const std::size_t ia = a.id();
  return t.push(OpKind::log_softmax, std::move(out), {ia}, [ia, rows, cols](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const auto& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gs += g[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) acc[r * cols + j] += g[r * cols + j] - std::exp(y[r * cols + j]) * gs;
    }
  });
}

// ---- reductions ----------------------------------------------------------

Var max_axis(Var a, std::size_t axis) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  if (av.rank() > 2 || axis > 1) throw ShapeError("max_axis: expected rank <= 2 and axis in {0,1}, got " + shape_str(av.shape()));
  const std::size_t rows = av.rows(), cols = av.cols();
  const std::size_t outer = axis == 1 ? rows : cols;
  const std::size_t inner = axis == 1 ? cols : rows;
  auto index_of = [=](std::size_t o, std::size_t i) { return axis == 1 ? o * cols + i : i * cols + o; };
  Tensor out(axis == 1 ? Shape{rows, 1} : Shape{1, cols});
  std::vector<std::size_t> where(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t best = index_of(o, 0);
    for (std::size_t i = 1; i < inner; ++i) {
      const std::size_t idx = index_of(o, i);
      if (av[idx] > av[best]) best = idx;
    }
    where[o] = best;
    out[o] = av[best];
  }
  const std::size_t ia = a.id();
  return t.push(OpKind::max_axis, std::move(out), {ia}, [ia, where = std::move(where)](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const auto& g = tp.grad(self);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t o = 0; o < where.size(); ++o) acc[where[o]] += g[o];
  });
}

static Var total(Var a, bool average) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  const double f = average ? 1.0 / static_cast<double>(av.numel()) : 1.0;
  const std::size_t ia = a.id();
  return t.push(average ? OpKind::mean : OpKind::sum, Tensor::scalar(s * f), {ia}, [ia, f](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const double g = tp.grad(self)[0] * f;
    for (double& v : tp.grad_acc(ia)) v += g;
  });
}

Var sum(Var a) { return total(a, false); }
Var mean(Var a) { return total(a, true); }

static Var axis_total(Var a, std::size_t axis, bool average) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const OpKind op = average ? OpKind::mean_axis : OpKind::sum_axis;
  if (av.rank() != 2 || axis > 1) throw ShapeError(std::string(op_name(op)) + ": expected rank-2 tensor, got " + shape_str(av.shape()));
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out(axis == 1 ? Shape{rows, 1} : Shape{1, cols});
  const double f = average ? 1.0 / static_cast<double>(axis == 1 ? cols : rows) : 1.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[axis == 1 ? r : c] += av[r * cols + c];
  }
  for (double& v : out.data()) v *= f;
  const std::size_t ia = a.id();
  return t.push(op, std::move(out), {ia}, [ia, axis, rows, cols, f](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const auto& g = tp.grad(self);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) acc[r * cols + c] += f * g[axis == 1 ? r : c];
    }
  });
}

Var sum_axis(Var a, std::size_t axis) { return axis_total(a, axis, false); }
Var mean_axis(Var a, std::size_t axis) { return axis_total(a, axis, true); }

Var l2_norm(Var a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v * v;
  const std::size_t ia = a.id();
  return t.push(OpKind::l2_norm, Tensor::scalar(std::sqrt(s)), {ia}, [ia](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const double norm = tp.value(self)[0];
    if (norm == 0.0) return;  // subgradient 0 at the origin
    const double g = tp.grad(self)[0] / norm;
    const Tensor& x = tp.value(ia);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g * x[i];
  });
}

Var l2_norm_rows(Var a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += av[r * cols + c] * av[r * cols + c];
    out[r] = std::sqrt(s);
  }
  const std::size_t ia = a.id();
  return t.push(OpKind::l2_norm_rows, std::move(out), {ia}, [ia, rows, cols](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const auto& g = tp.grad(self);
    const Tensor& norms = tp.value(self);
    const Tensor& x = tp.value(ia);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      if (norms[r] == 0.0) continue;
      const double f = g[r] / norms[r];
      for (std::size_t c = 0; c < cols; ++c) acc[r * cols + c] += f * x[r * cols + c];
    }
  });
}

// ---- structural ----------------------------------------------------------

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& t = *parts[0].tape();
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  std::vector<std::size_t> ids;
  const Tensor& first = parts[0].value();
  require_rank2("concat", first);
  std::size_t rows = 0, cols = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p, "concat");
    const Tensor& v = p.value();
    require_rank2("concat", v);
    if (axis == 1 && v.rows() != first.rows()) shape_mismatch("concat", first.shape(), v.shape());
    if (axis == 0 && v.cols() != first.cols()) shape_mismatch("concat", first.shape(), v.shape());
    rows = axis == 0 ? rows + v.rows() : v.rows();
    cols = axis == 1 ? cols + v.cols() : v.cols();
    ids.push_back(p.id());
  }
  Tensor out({rows, cols});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    offsets.push_back(off);
    for (std::size_t r = 0; r < v.rows(); ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) {
        const std::size_t orow = axis == 0 ? off + r : r;
        const std::size_t ocol = axis == 1 ? off + c : c;
        out[orow * cols + ocol] = v[r * v.cols() + c];
      }
    }
    off += axis == 0 ? v.rows() : v.cols();
  }
  auto inputs = ids;
  return t.push(OpKind::concat, std::move(out), std::move(inputs),
                [ids, offsets, axis, cols](Tape& tp, std::size_t self) {
                  const auto& g = tp.grad(self);
                  for (std::size_t p = 0; p < ids.size(); ++p) {
                    if (!tp.requires_grad(ids[p])) continue;
                    const Tensor& v = tp.value(ids[p]);
                    auto& acc = tp.grad_acc(ids[p]);
                    for (std::size_t r = 0; r < v.rows(); ++r) {
                      for (std::size_t c = 0; c < v.cols(); ++c) {
                        const std::size_t orow = axis == 0 ? offsets[p] + r : r;
                        const std::size_t ocol = axis == 1 ? offsets[p] + c : c;
                        acc[r * v.cols() + c] += g[orow * cols + ocol];
                      }
                    }
                  }
                });
}

Var select_cols(Var a, std::span<const std::size_t> cols) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  if (av.rank() > 2) throw ShapeError("select_cols: expected rank <= 2, got " + shape_str(av.shape()));
  if (cols.empty()) throw ShapeError("select_cols: empty column list");
  const std::size_t rows = av.rows(), in_cols = av.cols();
  for (std::size_t c : cols) {
    if (c >= in_cols) throw ShapeError("select_cols: column " + std::to_string(c) + " out of range for " + shape_str(av.shape()));
  }
  std::vector<std::size_t> sel(cols.begin(), cols.end());
  Tensor out({rows, sel.size()});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < sel.size(); ++j) out[r * sel.size() + j] = av[r * in_cols + sel[j]];
  }
  const std::size_t ia = a.id();
  return t.push(OpKind::select_cols, std::move(out), {ia}, [ia, sel, rows, in_cols](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const auto& g = tp.grad(self);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < sel.size(); ++j) acc[r * in_cols + sel[j]] += g[r * sel.size() + j];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  if (shape_numel(shape) != av.numel()) shape_mismatch("reshape", av.shape(), shape);
  const std::size_t ia = a.id();
  return t.push(OpKind::reshape, av.reshaped(std::move(shape)), {ia}, [ia](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const auto& g = tp.grad(self);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  });
}

}  // namespace advbench
