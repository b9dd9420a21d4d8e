#include "coc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "coc/errors.hpp"
#include "coc/rng.hpp"

namespace coc {

namespace {

void check_same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid()) throw ContractError(std::string(op) + ": invalid Var");
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands from different tapes");
}

// C (r x c) += A (r x k) * B (k x c)
void gemm_acc(const double* A, const double* B, double* C, int r, int k, int c) {
  for (int i = 0; i < r; ++i) {
    const double* arow = A + static_cast<size_t>(i) * k;
    double* crow = C + static_cast<size_t>(i) * c;
    for (int p = 0; p < k; ++p) {
      const double a = arow[p];
      if (a == 0.0) continue;
      const double* brow = B + static_cast<size_t>(p) * c;
      for (int j = 0; j < c; ++j) crow[j] += a * brow[j];
    }
  }
}

// C (r x c) += A (r x k) * B^T, with B stored (c x k)
void gemm_a_bt_acc(const double* A, const double* B, double* C, int r, int k, int c) {
  for (int i = 0; i < r; ++i) {
    const double* arow = A + static_cast<size_t>(i) * k;
    double* crow = C + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      const double* brow = B + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

// C (r x c) += A^T * B, with A stored (k x r), B (k x c)
void gemm_at_b_acc(const double* A, const double* B, double* C, int r, int k, int c) {
  for (int p = 0; p < k; ++p) {
    const double* arow = A + static_cast<size_t>(p) * r;
    const double* brow = B + static_cast<size_t>(p) * c;
    for (int i = 0; i < r; ++i) {
      const double a = arow[i];
      if (a == 0.0) continue;
      double* crow = C + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) crow[j] += a * brow[j];
    }
  }
}

}  // namespace

int Tape::add_node(std::vector<int> shape, std::vector<double> value, bool needs_grad,
                   std::function<void(Tape&)> backward) {
  if (consumed_) throw StateError("tape already consumed by backward; create a fresh tape");
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buf(int id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Var Tape::leaf(Tensor& t) {
  const int id = add_node(t.shape, t.values, t.requires_grad, nullptr);
  node(id).leaf = &t;
  return Var{this, id};
}

Var Tape::constant(const Tensor& t) {
  return Var{this, add_node(t.shape, t.values, false, nullptr)};
}

Var Tape::constant(std::vector<int> shape, std::vector<double> values) {
  if (numel_of(shape) != static_cast<int64_t>(values.size())) {
    throw DimensionError("constant: value count does not match shape " + shape_str(shape));
  }
  return Var{this, add_node(std::move(shape), std::move(values), false, nullptr)};
}

Var Tape::constant_scalar(double v) { return constant({1}, {v}); }

double Tape::scalar(Var v) const {
  const Node& n = node(v.id);
  if (n.value.size() != 1) throw ContractError("scalar() on tensor of shape " + shape_str(n.shape));
  return n.value[0];
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.tape != this) throw ContractError("backward: loss not on this tape");
  if (consumed_) throw StateError("backward called twice on the same tape");
  const Node& ln = node(loss.id);
  if (ln.value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(ln.shape));
  }
  consumed_ = true;
  grad_buf(loss.id)[0] = 1.0;
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.backward && !n.grad.empty()) n.backward(*this);
  }
  for (Node& n : nodes_) {
    if (n.leaf != nullptr && n.leaf->requires_grad && !n.grad.empty()) {
      if (n.leaf->grad.size() != n.grad.size()) n.leaf->grad.assign(n.grad.size(), 0.0);
      for (size_t i = 0; i < n.grad.size(); ++i) n.leaf->grad[i] += n.grad[i];
    }
  }
}

namespace {

struct Dims {
  int rank;
  int r;  // rows (rank-2) or length (rank-1)
  int c;  // cols (rank-2) or 1
};

Dims dims_of(const Tape& t, Var v) {
  const auto& s = t.node(v.id).shape;
  if (s.size() == 1) return {1, s[0], 1};
  if (s.size() == 2) return {2, s[0], s[1]};
  throw DimensionError("ops support rank 1 or 2 tensors, got " + shape_str(s));
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b, "matmul");
  Tape& tp = *a.tape;
  const auto& sa = tp.shape(a);
  const auto& sb = tp.shape(b);
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
  }
  const int r = sa[0], k = sa[1], c = sb[1];
  std::vector<double> out(static_cast<size_t>(r) * c, 0.0);
  gemm_acc(tp.value(a).data(), tp.value(b).data(), out.data(), r, k, c);
  const bool ng = tp.node(a.id).needs_grad || tp.node(b.id).needs_grad;
  const int id = tp.add_node({r, c}, std::move(out), ng, nullptr);
  if (ng) {
    const int aid = a.id, bid = b.id;
    tp.node(id).backward = [id, aid, bid, r, k, c](Tape& t) {
      const double* g = t.node(id).grad.data();
      if (t.node(aid).needs_grad) {
        gemm_a_bt_acc(g, t.node(bid).value.data(), t.grad_buf(aid).data(), r, c, k);
      }
      if (t.node(bid).needs_grad) {
        gemm_at_b_acc(t.node(aid).value.data(), g, t.grad_buf(bid).data(), k, r, c);
      }
    };
  }
  return Var{&tp, id};
}

Var add(Var a, Var b) {
  check_same_tape(a, b, "add");
  Tape& tp = *a.tape;
  if (tp.shape(a) != tp.shape(b)) {
    throw DimensionError("add: shape mismatch " + shape_str(tp.shape(a)) + " vs " + shape_str(tp.shape(b)));
  }
  const auto& va = tp.value(a);
  const auto& vb = tp.value(b);
  std::vector<double> out(va.size());
  for (size_t i = 0; i < va.size(); ++i) out[i] = va[i] + vb[i];
  const bool ng = tp.node(a.id).needs_grad || tp.node(b.id).needs_grad;
  const int id = tp.add_node(tp.shape(a), std::move(out), ng, nullptr);
  if (ng) {
    const int aid = a.id, bid = b.id;
    tp.node(id).backward = [id, aid, bid](Tape& t) {
      const auto& g = t.node(id).grad;
      for (int pid : {aid, bid}) {
        if (!t.node(pid).needs_grad) continue;
        auto& pg = t.grad_buf(pid);
        for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      }
    };
  }
  return Var{&tp, id};
}

Var add_rowwise(Var m, Var row_vec) {
  check_same_tape(m, row_vec, "add_rowwise");
  Tape& tp = *m.tape;
  const Dims dm = dims_of(tp, m);
  const auto& vv = tp.value(row_vec);
  if (dm.rank != 2 || static_cast<int>(vv.size()) != dm.c) {
    throw DimensionError("add_rowwise: " + shape_str(tp.shape(m)) + " + " + shape_str(tp.shape(row_vec)));
  }
  const auto& vm = tp.value(m);
  std::vector<double> out(vm.size());
  for (int i = 0; i < dm.r; ++i)
    for (int j = 0; j < dm.c; ++j)
      out[static_cast<size_t>(i) * dm.c + j] = vm[static_cast<size_t>(i) * dm.c + j] + vv[j];
  const bool ng = tp.node(m.id).needs_grad || tp.node(row_vec.id).needs_grad;
  const int id = tp.add_node(tp.shape(m), std::move(out), ng, nullptr);
  if (ng) {
    const int mid = m.id, vid = row_vec.id, r = dm.r, c = dm.c;
    tp.node(id).backward = [id, mid, vid, r, c](Tape& t) {
      const auto& g = t.node(id).grad;
      if (t.node(mid).needs_grad) {
        auto& pg = t.grad_buf(mid);
        for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      }
      if (t.node(vid).needs_grad) {
        auto& pg = t.grad_buf(vid);
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) pg[j] += g[static_cast<size_t>(i) * c + j];
      }
    };
  }
  return Var{&tp, id};
}

Var mul(Var a, Var b) {
  check_same_tape(a, b, "mul");
  Tape& tp = *a.tape;
  if (tp.shape(a) != tp.shape(b)) {
    throw DimensionError("mul: shape mismatch " + shape_str(tp.shape(a)) + " vs " + shape_str(tp.shape(b)));
  }
  const auto& va = tp.value(a);
  const auto& vb = tp.value(b);
  std::vector<double> out(va.size());
  for (size_t i = 0; i < va.size(); ++i) out[i] = va[i] * vb[i];
  const bool ng = tp.node(a.id).needs_grad || tp.node(b.id).needs_grad;
  const int id = tp.add_node(tp.shape(a), std::move(out), ng, nullptr);
  if (ng) {
    const int aid = a.id, bid = b.id;
    tp.node(id).backward = [id, aid, bid](Tape& t) {
      const auto& g = t.node(id).grad;
      if (t.node(aid).needs_grad) {
        auto& pg = t.grad_buf(aid);
        const auto& vb2 = t.node(bid).value;
        for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * vb2[i];
      }
      if (t.node(bid).needs_grad) {
        auto& pg = t.grad_buf(bid);
        const auto& va2 = t.node(aid).value;
        for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * va2[i];
      }
    };
  }
  return Var{&tp, id};
}

Var scale(Var a, double s) {
  Tape& tp = *a.tape;
  const auto& va = tp.value(a);
  std::vector<double> out(va.size());
  for (size_t i = 0; i < va.size(); ++i) out[i] = va[i] * s;
  const bool ng = tp.node(a.id).needs_grad;
  const int id = tp.add_node(tp.shape(a), std::move(out), ng, nullptr);
  if (ng) {
    const int aid = a.id;
    tp.node(id).backward = [id, aid, s](Tape& t) {
      const auto& g = t.node(id).grad;
      auto& pg = t.grad_buf(aid);
      for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * s;
    };
  }
  return Var{&tp, id};
}

Var concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw ContractError("concat: empty input list");
  Tape& tp = *xs[0].tape;
  for (const Var& v : xs) check_same_tape(xs[0], v, "concat");
  const Dims d0 = dims_of(tp, xs[0]);
  if (axis != 0 && axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  if (axis == 1 && d0.rank != 2) throw DimensionError("concat: axis 1 requires rank-2 inputs");

  bool ng = false;
  int total = 0;
  for (const Var& v : xs) {
    const Dims d = dims_of(tp, v);
    if (d.rank != d0.rank || (axis == 0 ? d.c != d0.c : d.r != d0.r)) {
      throw DimensionError("concat: shape mismatch " + shape_str(tp.shape(xs[0])) + " vs " +
                           shape_str(tp.shape(v)));
    }
    total += (axis == 0 ? d.r : d.c);
    ng = ng || tp.node(v.id).needs_grad;
  }

  std::vector<int> out_shape;
  if (d0.rank == 1) {
    out_shape = {total};
  } else {
    out_shape = (axis == 0) ? std::vector<int>{total, d0.c} : std::vector<int>{d0.r, total};
  }
  std::vector<double> out(static_cast<size_t>(numel_of(out_shape)));
  if (axis == 0) {
    size_t off = 0;
    for (const Var& v : xs) {
      const auto& val = tp.value(v);
      std::copy(val.begin(), val.end(), out.begin() + off);
      off += val.size();
    }
  } else {
    int coff = 0;
    for (const Var& v : xs) {
      const Dims d = dims_of(tp, v);
      const auto& val = tp.value(v);
      for (int i = 0; i < d.r; ++i)
        for (int j = 0; j < d.c; ++j)
          out[static_cast<size_t>(i) * total + coff + j] = val[static_cast<size_t>(i) * d.c + j];
      coff += d.c;
    }
  }

  const int id = tp.add_node(std::move(out_shape), std::move(out), ng, nullptr);
  if (ng) {
    std::vector<int> pids;
    std::vector<int> sizes;  // rows (axis 0) or cols (axis 1) per input
    for (const Var& v : xs) {
      const Dims d = dims_of(tp, v);
      pids.push_back(v.id);
      sizes.push_back(axis == 0 ? d.r : d.c);
    }
    const int rows = d0.r, total_c = total;
    tp.node(id).backward = [id, pids, sizes, axis, rows, total_c](Tape& t) {
      const auto& g = t.node(id).grad;
      if (axis == 0) {
        size_t off = 0;
        for (size_t p = 0; p < pids.size(); ++p) {
          const size_t n = t.node(pids[p]).value.size();
          if (t.node(pids[p]).needs_grad) {
            auto& pg = t.grad_buf(pids[p]);
            for (size_t i = 0; i < n; ++i) pg[i] += g[off + i];
          }
          off += n;
        }
      } else {
        int coff = 0;
        for (size_t p = 0; p < pids.size(); ++p) {
          const int c = sizes[p];
          if (t.node(pids[p]).needs_grad) {
            auto& pg = t.grad_buf(pids[p]);
            for (int i = 0; i < rows; ++i)
              for (int j = 0; j < c; ++j)
                pg[static_cast<size_t>(i) * c + j] += g[static_cast<size_t>(i) * total_c + coff + j];
          }
          coff += c;
        }
      }
    };
  }
  return Var{&tp, id};
}

Var row(Var m, int r) {
  Tape& tp = *m.tape;
  const Dims d = dims_of(tp, m);
  if (d.rank != 2 || r < 0 || r >= d.r) {
    throw DimensionError("row: index " + std::to_string(r) + " out of range for " + shape_str(tp.shape(m)));
  }
  const auto& vm = tp.value(m);
  std::vector<double> out(vm.begin() + static_cast<size_t>(r) * d.c,
                          vm.begin() + static_cast<size_t>(r + 1) * d.c);
  const bool ng = tp.node(m.id).needs_grad;
  const int id = tp.add_node({1, d.c}, std::move(out), ng, nullptr);
  if (ng) {
    const int mid = m.id, c = d.c;
    tp.node(id).backward = [id, mid, r, c](Tape& t) {
      if (!t.node(mid).needs_grad) return;
      const auto& g = t.node(id).grad;
      auto& pg = t.grad_buf(mid);
      for (int j = 0; j < c; ++j) pg[static_cast<size_t>(r) * c + j] += g[j];
    };
  }
  return Var{&tp, id};
}

Var transpose(Var m) {
  Tape& tp = *m.tape;
  const Dims d = dims_of(tp, m);
  if (d.rank != 2) throw DimensionError("transpose: need rank 2, got " + shape_str(tp.shape(m)));
  const auto& vm = tp.value(m);
  std::vector<double> out(vm.size());
  for (int i = 0; i < d.r; ++i)
    for (int j = 0; j < d.c; ++j)
      out[static_cast<size_t>(j) * d.r + i] = vm[static_cast<size_t>(i) * d.c + j];
  const bool ng = tp.node(m.id).needs_grad;
  const int id = tp.add_node({d.c, d.r}, std::move(out), ng, nullptr);
  if (ng) {
    const int mid = m.id, r = d.r, c = d.c;
    tp.node(id).backward = [id, mid, r, c](Tape& t) {
      const auto& g = t.node(id).grad;  // shape (c, r)
      auto& pg = t.grad_buf(mid);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          pg[static_cast<size_t>(i) * c + j] += g[static_cast<size_t>(j) * r + i];
    };
  }
  return Var{&tp, id};
}

namespace {

Var unary_elementwise(Var a, const char* name, double (*fwd)(double),
                      double (*dfdy)(double y, double x)) {
  Tape& tp = *a.tape;
  const auto& va = tp.value(a);
  std::vector<double> out(va.size());
  for (size_t i = 0; i < va.size(); ++i) out[i] = fwd(va[i]);
  const bool ng = tp.node(a.id).needs_grad;
  const int id = tp.add_node(tp.shape(a), std::move(out), ng, nullptr);
  if (ng) {
    const int aid = a.id;
    tp.node(id).backward = [id, aid, dfdy](Tape& t) {
      const auto& g = t.node(id).grad;
      const auto& y = t.node(id).value;
      const auto& x = t.node(aid).value;
      auto& pg = t.grad_buf(aid);
      for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * dfdy(y[i], x[i]);
    };
  }
  (void)name;
  return Var{&tp, id};
}

}  // namespace

Var tanh(Var a) {
  return unary_elementwise(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double y, double) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary_elementwise(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double y, double) { return y * (1.0 - y); });
}

Var log(Var a) {
  const auto& va = a.tape->value(a);
  for (double v : va) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input " + std::to_string(v));
  }
  return unary_elementwise(
      a, "log", [](double x) { return std::log(x); },
      [](double, double x) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary_elementwise(
      a, "exp", [](double x) { return std::exp(x); },
      [](double y, double) { return y; });
}

Var softmax(Var a, int axis) {
  Tape& tp = *a.tape;
  const Dims d = dims_of(tp, a);
  if (axis < 0 || axis >= d.rank) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(tp.shape(a)));
  }
  // View the tensor as `slices` independent lines of length `len` with stride.
  int slices, len, stride, slice_stride;
  if (d.rank == 1) {
    slices = 1, len = d.r, stride = 1, slice_stride = 0;
  } else if (axis == 1) {
    slices = d.r, len = d.c, stride = 1, slice_stride = d.c;
  } else {
    slices = d.c, len = d.r, stride = d.c, slice_stride = 1;
  }
  const auto& va = tp.value(a);
  std::vector<double> out(va.size());
  for (int s = 0; s < slices; ++s) {
    const size_t base = static_cast<size_t>(s) * slice_stride;
    double mx = -1e300;
    for (int i = 0; i < len; ++i) mx = std::max(mx, va[base + static_cast<size_t>(i) * stride]);
    double z = 0.0;
    for (int i = 0; i < len; ++i) {
      const double e = std::exp(va[base + static_cast<size_t>(i) * stride] - mx);
      out[base + static_cast<size_t>(i) * stride] = e;
      z += e;
    }
    for (int i = 0; i < len; ++i) out[base + static_cast<size_t>(i) * stride] /= z;
  }
  const bool ng = tp.node(a.id).needs_grad;
  const int id = tp.add_node(tp.shape(a), std::move(out), ng, nullptr);
  if (ng) {
    const int aid = a.id;
    tp.node(id).backward = [id, aid, slices, len, stride, slice_stride](Tape& t) {
      if (!t.node(aid).needs_grad) return;
      const auto& g = t.node(id).grad;
      const auto& y = t.node(id).value;
      auto& pg = t.grad_buf(aid);
      for (int s = 0; s < slices; ++s) {
        const size_t base = static_cast<size_t>(s) * slice_stride;
        double dot = 0.0;
        for (int i = 0; i < len; ++i) {
          const size_t ix = base + static_cast<size_t>(i) * stride;
          dot += g[ix] * y[ix];
        }
        for (int i = 0; i < len; ++i) {
          const size_t ix = base + static_cast<size_t>(i) * stride;
          pg[ix] += y[ix] * (g[ix] - dot);
        }
      }
    };
  }
  return Var{&tp, id};
}

Var sum_all(Var a) {
  Tape& tp = *a.tape;
  const auto& va = tp.value(a);
  double s = 0.0;
  for (double v : va) s += v;
  const bool ng = tp.node(a.id).needs_grad;
  const int id = tp.add_node({1}, {s}, ng, nullptr);
  if (ng) {
    const int aid = a.id;
    tp.node(id).backward = [id, aid](Tape& t) {
      const double g = t.node(id).grad[0];
      auto& pg = t.grad_buf(aid);
      for (double& v : pg) v += g;
    };
  }
  return Var{&tp, id};
}

Var mean_all(Var a) {
  Tape& tp = *a.tape;
  const auto& va = tp.value(a);
  double s = 0.0;
  for (double v : va) s += v;
  const double n = static_cast<double>(va.size());
  const bool ng = tp.node(a.id).needs_grad;
  const int id = tp.add_node({1}, {s / n}, ng, nullptr);
  if (ng) {
    const int aid = a.id;
    tp.node(id).backward = [id, aid, n](Tape& t) {
      const double g = t.node(id).grad[0] / n;
      auto& pg = t.grad_buf(aid);
      for (double& v : pg) v += g;
    };
  }
  return Var{&tp, id};
}

Var l2_normalize(Var a, int axis) {
  Tape& tp = *a.tape;
  const Dims d = dims_of(tp, a);
  if (axis < 0 || axis >= d.rank) {
    throw DimensionError("l2_normalize: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(tp.shape(a)));
  }
  int slices, len, stride, slice_stride;
  if (d.rank == 1) {
    slices = 1, len = d.r, stride = 1, slice_stride = 0;
  } else if (axis == 1) {
    slices = d.r, len = d.c, stride = 1, slice_stride = d.c;
  } else {
    slices = d.c, len = d.r, stride = d.c, slice_stride = 1;
  }
  const auto& va = tp.value(a);
  std::vector<double> out(va.size());
  std::vector<double> norms(static_cast<size_t>(slices));
  bool warned = false;
  for (int s = 0; s < slices; ++s) {
    const size_t base = static_cast<size_t>(s) * slice_stride;
    double sq = 0.0;
    for (int i = 0; i < len; ++i) {
      const double v = va[base + static_cast<size_t>(i) * stride];
      sq += v * v;
    }
    const double nrm = std::sqrt(sq);
    norms[static_cast<size_t>(s)] = nrm;
    if (nrm == 0.0) {
      if (!warned) {
        warn_to_stderr("l2_normalize: zero vector left unnormalized");
        warned = true;
      }
      for (int i = 0; i < len; ++i) out[base + static_cast<size_t>(i) * stride] = 0.0;
    } else {
      for (int i = 0; i < len; ++i) {
        const size_t ix = base + static_cast<size_t>(i) * stride;
        out[ix] = va[ix] / nrm;
      }
    }
  }
  const bool ng = tp.node(a.id).needs_grad;
  const int id = tp.add_node(tp.shape(a), std::move(out), ng, nullptr);
  if (ng) {
    const int aid = a.id;
    tp.node(id).backward = [id, aid, slices, len, stride, slice_stride, norms](Tape& t) {
      if (!t.node(aid).needs_grad) return;
      const auto& g = t.node(id).grad;
      const auto& y = t.node(id).value;
      auto& pg = t.grad_buf(aid);
      for (int s = 0; s < slices; ++s) {
        const double nrm = norms[static_cast<size_t>(s)];
        if (nrm == 0.0) continue;
        const size_t base = static_cast<size_t>(s) * slice_stride;
        double dot = 0.0;
        for (int i = 0; i < len; ++i) {
          const size_t ix = base + static_cast<size_t>(i) * stride;
          dot += g[ix] * y[ix];
        }
        for (int i = 0; i < len; ++i) {
          const size_t ix = base + static_cast<size_t>(i) * stride;
          pg[ix] += (g[ix] - dot * y[ix]) / nrm;
        }
      }
    };
  }
  return Var{&tp, id};
}

Var dropout(Var a, double rate, bool train, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return a;  // identity in eval mode
  Tape& tp = *a.tape;
  const auto& va = tp.value(a);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(va.size());
  std::vector<double> out(va.size());
  for (size_t i = 0; i < va.size(); ++i) {
    mask[i] = (uniform01(rng) >= rate) ? keep_scale : 0.0;
    out[i] = va[i] * mask[i];
  }
  const bool ng = tp.node(a.id).needs_grad;
  const int id = tp.add_node(tp.shape(a), std::move(out), ng, nullptr);
  if (ng) {
    const int aid = a.id;
    tp.node(id).backward = [id, aid, mask = std::move(mask)](Tape& t) {
      const auto& g = t.node(id).grad;
      auto& pg = t.grad_buf(aid);
      for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * mask[i];
    };
  }
  return Var{&tp, id};
}

Var bce_with_logits(Var logits, const std::vector<double>& targets) {
  Tape& tp = *logits.tape;
  const auto& x = tp.value(logits);
  if (x.size() != targets.size()) {
    throw DimensionError("bce_with_logits: " + std::to_string(x.size()) + " logits vs " +
                         std::to_string(targets.size()) + " targets");
  }
  if (x.empty()) throw ContractError("bce_with_logits: empty input");
  double total = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    // max(x,0) - x*t + log(1 + exp(-|x|))
    total += std::max(x[i], 0.0) - x[i] * targets[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  const double n = static_cast<double>(x.size());
  const bool ng = tp.node(logits.id).needs_grad;
  const int id = tp.add_node({1}, {total / n}, ng, nullptr);
  if (ng) {
    const int lid = logits.id;
    tp.node(id).backward = [id, lid, targets, n](Tape& t) {
      const double g = t.node(id).grad[0] / n;
      const auto& xv = t.node(lid).value;
      auto& pg = t.grad_buf(lid);
      for (size_t i = 0; i < xv.size(); ++i) {
        pg[i] += g * (1.0 / (1.0 + std::exp(-xv[i])) - targets[i]);
      }
    };
  }
  return Var{&tp, id};
}

}  // namespace coc
