#include "cmpg/tape.hpp"

#include <algorithm>
#include <cstring>

namespace cmpg::ad {

Var Tape::push(Node n) {
  nodes_.push_back(n);
  return Var{this, int(nodes_.size()) - 1};
}

Var Tape::leaf(std::span<const double> value, int param_offset) {
  Node n;
  n.op = Op::Leaf;
  n.len = int(value.size());
  n.off = alloc(n.len);
  n.param_off = param_offset;
  std::memcpy(vals_.data() + n.off, value.data(), value.size() * sizeof(double));
  return push(n);
}

Var Tape::leaf_scalar(double v, int param_offset) {
  return leaf(std::span<const double>(&v, 1), param_offset);
}

Var Tape::constant(std::span<const double> value) {
  Node n;
  n.op = Op::Const;
  n.len = int(value.size());
  n.off = alloc(n.len);
  std::memcpy(vals_.data() + n.off, value.data(), value.size() * sizeof(double));
  return push(n);
}

Var Tape::constant_scalar(double v) {
  return constant(std::span<const double>(&v, 1));
}

Var Tape::affine(Var w, Var b, Var x, int rows) {
  const Node& nw = node(w);
  const Node& nb = node(b);
  const Node& nx = node(x);
  if (rows <= 0 || nw.len != rows * nx.len || nb.len != rows)
    throw ConfigError("affine: weight/bias shape mismatch");
  Node n;
  n.op = Op::Affine;
  n.in0 = w.id;
  n.in1 = b.id;
  n.in2 = x.id;
  n.aux = rows;
  n.len = rows;
  n.off = alloc(rows);
  Var out = push(n);
  compute(nodes_.size() - 1);
  return out;
}

#define CMPG_BINOP(NAME, OP)                                        \
  Var Tape::NAME(Var a, Var b) {                                    \
    if (node(a).len != node(b).len)                                 \
      throw ConfigError(#NAME ": length mismatch");                 \
    Node n;                                                         \
    n.op = Op::OP;                                                  \
    n.in0 = a.id;                                                   \
    n.in1 = b.id;                                                   \
    n.len = node(a).len;                                            \
    n.off = alloc(n.len);                                           \
    Var out = push(n);                                              \
    compute(nodes_.size() - 1);                                     \
    return out;                                                     \
  }

CMPG_BINOP(add, Add)
CMPG_BINOP(sub, Sub)
CMPG_BINOP(mul, Mul)
CMPG_BINOP(div, Div)
#undef CMPG_BINOP

#define CMPG_UNOP(NAME, OP)                   \
  Var Tape::NAME(Var a) {                     \
    Node n;                                   \
    n.op = Op::OP;                            \
    n.in0 = a.id;                             \
    n.len = node(a).len;                      \
    n.off = alloc(n.len);                     \
    Var out = push(n);                        \
    compute(nodes_.size() - 1);               \
    return out;                               \
  }

CMPG_UNOP(neg, Neg)
CMPG_UNOP(tanh_op, Tanh)
CMPG_UNOP(relu, Relu)
CMPG_UNOP(softmax, Softmax)
CMPG_UNOP(sin_op, Sin)
CMPG_UNOP(cos_op, Cos)
CMPG_UNOP(tan_op, Tan)
CMPG_UNOP(atan_op, Atan)
CMPG_UNOP(sqrt_op, Sqrt)
CMPG_UNOP(wrap_angle, Wrap)
#undef CMPG_UNOP

Var Tape::scale(Var a, double c) {
  Node n;
  n.op = Op::Scale;
  n.in0 = a.id;
  n.c0 = c;
  n.len = node(a).len;
  n.off = alloc(n.len);
  Var out = push(n);
  compute(nodes_.size() - 1);
  return out;
}

Var Tape::add_const(Var a, double c) {
  Node n;
  n.op = Op::AddC;
  n.in0 = a.id;
  n.c0 = c;
  n.len = node(a).len;
  n.off = alloc(n.len);
  Var out = push(n);
  compute(nodes_.size() - 1);
  return out;
}

Var Tape::mul_scalar(Var a, Var s) {
  if (node(s).len != 1) throw ConfigError("mul_scalar: scale is not length 1");
  Node n;
  n.op = Op::MulS;
  n.in0 = a.id;
  n.in1 = s.id;
  n.len = node(a).len;
  n.off = alloc(n.len);
  Var out = push(n);
  compute(nodes_.size() - 1);
  return out;
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat: no inputs");
  Node n;
  n.op = Op::Concat;
  n.ext_off = int(extra_.size());
  n.ext_n = int(parts.size());
  int total = 0;
  for (Var p : parts) {
    extra_.push_back(p.id);
    total += node(p).len;
  }
  n.len = total;
  n.off = alloc(total);
  Var out = push(n);
  compute(nodes_.size() - 1);
  return out;
}

Var Tape::slice(Var a, int offset, int len) {
  if (offset < 0 || len <= 0 || offset + len > node(a).len)
    throw ConfigError("slice: range out of bounds");
  Node n;
  n.op = Op::Slice;
  n.in0 = a.id;
  n.aux = offset;
  n.len = len;
  n.off = alloc(len);
  Var out = push(n);
  compute(nodes_.size() - 1);
  return out;
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::Sum;
  n.in0 = a.id;
  n.len = 1;
  n.off = alloc(1);
  Var out = push(n);
  compute(nodes_.size() - 1);
  return out;
}

Var Tape::dot(Var a, Var b) {
  if (node(a).len != node(b).len) throw ConfigError("dot: length mismatch");
  Node n;
  n.op = Op::Dot;
  n.in0 = a.id;
  n.in1 = b.id;
  n.len = 1;
  n.off = alloc(1);
  Var out = push(n);
  compute(nodes_.size() - 1);
  return out;
}

void Tape::compute(size_t i) {
  Node& n = nodes_[i];
  double* y = vals_.data() + n.off;
  switch (n.op) {
    case Op::Leaf:
    case Op::Const:
      break;
    case Op::Affine: {
      const Node& nx = nodes_[size_t(n.in2)];
      const double* w = val_ptr(n.in0);
      const double* b = val_ptr(n.in1);
      const double* x = val_ptr(n.in2);
      int rows = n.aux, cols = nx.len;
      for (int r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* wr = w + size_t(r) * cols;
        for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
      }
      break;
    }
    case Op::Add: {
      const double* a = val_ptr(n.in0);
      const double* b = val_ptr(n.in1);
      for (int k = 0; k < n.len; ++k) y[k] = a[k] + b[k];
      break;
    }
    case Op::Sub: {
      const double* a = val_ptr(n.in0);
      const double* b = val_ptr(n.in1);
      for (int k = 0; k < n.len; ++k) y[k] = a[k] - b[k];
      break;
    }
    case Op::Mul: {
      const double* a = val_ptr(n.in0);
      const double* b = val_ptr(n.in1);
      for (int k = 0; k < n.len; ++k) y[k] = a[k] * b[k];
      break;
    }
    case Op::Div: {
      const double* a = val_ptr(n.in0);
      const double* b = val_ptr(n.in1);
      for (int k = 0; k < n.len; ++k) y[k] = a[k] / b[k];
      break;
    }
    case Op::Neg: {
      const double* a = val_ptr(n.in0);
      for (int k = 0; k < n.len; ++k) y[k] = -a[k];
      break;
    }
    case Op::Scale: {
      const double* a = val_ptr(n.in0);
      for (int k = 0; k < n.len; ++k) y[k] = n.c0 * a[k];
      break;
    }
    case Op::AddC: {
      const double* a = val_ptr(n.in0);
      for (int k = 0; k < n.len; ++k) y[k] = a[k] + n.c0;
      break;
    }
    case Op::MulS: {
      const double* a = val_ptr(n.in0);
      double s = *val_ptr(n.in1);
      for (int k = 0; k < n.len; ++k) y[k] = a[k] * s;
      break;
    }
    case Op::Tanh: {
      const double* a = val_ptr(n.in0);
      for (int k = 0; k < n.len; ++k) y[k] = std::tanh(a[k]);
      break;
    }
    case Op::Relu: {
      const double* a = val_ptr(n.in0);
      for (int k = 0; k < n.len; ++k) y[k] = a[k] > 0.0 ? a[k] : 0.0;
      break;
    }
    case Op::Softmax: {
      const double* a = val_ptr(n.in0);
      double mx = a[0];
      for (int k = 1; k < n.len; ++k) mx = std::max(mx, a[k]);
      double z = 0.0;
      for (int k = 0; k < n.len; ++k) {
        y[k] = std::exp(a[k] - mx);
        z += y[k];
      }
      for (int k = 0; k < n.len; ++k) y[k] /= z;
      break;
    }
    case Op::Sin: {
      const double* a = val_ptr(n.in0);
      for (int k = 0; k < n.len; ++k) y[k] = std::sin(a[k]);
      break;
    }
    case Op::Cos: {
      const double* a = val_ptr(n.in0);
      for (int k = 0; k < n.len; ++k) y[k] = std::cos(a[k]);
      break;
    }
    case Op::Tan: {
      const double* a = val_ptr(n.in0);
      for (int k = 0; k < n.len; ++k) y[k] = std::tan(a[k]);
      break;
    }
    case Op::Atan: {
      const double* a = val_ptr(n.in0);
      for (int k = 0; k < n.len; ++k) y[k] = std::atan(a[k]);
      break;
    }
    case Op::Sqrt: {
      const double* a = val_ptr(n.in0);
      for (int k = 0; k < n.len; ++k) y[k] = std::sqrt(a[k]);
      break;
    }
    case Op::Wrap: {
      const double* a = val_ptr(n.in0);
      for (int k = 0; k < n.len; ++k) y[k] = wrap_angle_value(a[k]);
      break;
    }
    case Op::Concat: {
      int pos = 0;
      for (int e = 0; e < n.ext_n; ++e) {
        int src = extra_[size_t(n.ext_off + e)];
        const Node& ns = nodes_[size_t(src)];
        std::memcpy(y + pos, vals_.data() + ns.off, size_t(ns.len) * sizeof(double));
        pos += ns.len;
      }
      break;
    }
    case Op::Slice: {
      const double* a = val_ptr(n.in0) + n.aux;
      std::memcpy(y, a, size_t(n.len) * sizeof(double));
      break;
    }
    case Op::Sum: {
      const Node& na = nodes_[size_t(n.in0)];
      const double* a = val_ptr(n.in0);
      double acc = 0.0;
      for (int k = 0; k < na.len; ++k) acc += a[k];
      y[0] = acc;
      break;
    }
    case Op::Dot: {
      const Node& na = nodes_[size_t(n.in0)];
      const double* a = val_ptr(n.in0);
      const double* b = val_ptr(n.in1);
      double acc = 0.0;
      for (int k = 0; k < na.len; ++k) acc += a[k] * b[k];
      y[0] = acc;
      break;
    }
  }
}

void Tape::replay_forward() {
  for (size_t i = 0; i < nodes_.size(); ++i) compute(i);
}

bool Tape::values_finite() const {
  for (double x : vals_)
    if (!std::isfinite(x)) return false;
  return true;
}

void Tape::backward(Var out, std::span<const double> seed, std::span<double> param_grad) {
  if (nodes_.empty()) throw UsageError("backward: empty tape");
  const Node& no = node(out);
  if (int(seed.size()) != no.len) throw UsageError("backward: seed length mismatch");

  grads_.assign(vals_.size(), 0.0);
  std::memcpy(grads_.data() + no.off, seed.data(), seed.size() * sizeof(double));

  for (int i = out.id; i >= 0; --i) {
    const Node& n = nodes_[size_t(i)];
    const double* g = grads_.data() + n.off;
    // Skip nodes whose gradient is identically zero.
    bool any = false;
    for (int k = 0; k < n.len && !any; ++k) any = g[k] != 0.0;
    if (!any) continue;
    switch (n.op) {
      case Op::Leaf:
        if (n.param_off >= 0) {
          if (n.param_off + n.len > int(param_grad.size()))
            throw UsageError("backward: param_grad too small for bound leaf");
          for (int k = 0; k < n.len; ++k) param_grad[size_t(n.param_off + k)] += g[k];
        }
        break;
      case Op::Const:
        break;
      case Op::Affine: {
        const Node& nx = nodes_[size_t(n.in2)];
        int rows = n.aux, cols = nx.len;
        double* gw = grads_.data() + nodes_[size_t(n.in0)].off;
        double* gb = grads_.data() + nodes_[size_t(n.in1)].off;
        double* gx = grads_.data() + nx.off;
        const double* w = val_ptr(n.in0);
        const double* x = val_ptr(n.in2);
        for (int r = 0; r < rows; ++r) {
          double gr = g[r];
          if (gr == 0.0) continue;
          double* gwr = gw + size_t(r) * cols;
          const double* wr = w + size_t(r) * cols;
          for (int c = 0; c < cols; ++c) {
            gwr[c] += gr * x[c];
            gx[c] += gr * wr[c];
          }
          gb[r] += gr;
        }
        break;
      }
      case Op::Add: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        double* gb = grads_.data() + nodes_[size_t(n.in1)].off;
        for (int k = 0; k < n.len; ++k) {
          ga[k] += g[k];
          gb[k] += g[k];
        }
        break;
      }
      case Op::Sub: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        double* gb = grads_.data() + nodes_[size_t(n.in1)].off;
        for (int k = 0; k < n.len; ++k) {
          ga[k] += g[k];
          gb[k] -= g[k];
        }
        break;
      }
      case Op::Mul: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        double* gb = grads_.data() + nodes_[size_t(n.in1)].off;
        const double* a = val_ptr(n.in0);
        const double* b = val_ptr(n.in1);
        for (int k = 0; k < n.len; ++k) {
          ga[k] += g[k] * b[k];
          gb[k] += g[k] * a[k];
        }
        break;
      }
      case Op::Div: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        double* gb = grads_.data() + nodes_[size_t(n.in1)].off;
        const double* b = val_ptr(n.in1);
        const double* y = vals_.data() + n.off;
        for (int k = 0; k < n.len; ++k) {
          ga[k] += g[k] / b[k];
          gb[k] -= g[k] * y[k] / b[k];
        }
        break;
      }
      case Op::Neg: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        for (int k = 0; k < n.len; ++k) ga[k] -= g[k];
        break;
      }
      case Op::Scale: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        for (int k = 0; k < n.len; ++k) ga[k] += n.c0 * g[k];
        break;
      }
      case Op::AddC: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        for (int k = 0; k < n.len; ++k) ga[k] += g[k];
        break;
      }
      case Op::MulS: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        double* gs = grads_.data() + nodes_[size_t(n.in1)].off;
        const double* a = val_ptr(n.in0);
        double s = *val_ptr(n.in1);
        double acc = 0.0;
        for (int k = 0; k < n.len; ++k) {
          ga[k] += g[k] * s;
          acc += g[k] * a[k];
        }
        gs[0] += acc;
        break;
      }
      case Op::Tanh: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        const double* y = vals_.data() + n.off;
        for (int k = 0; k < n.len; ++k) ga[k] += g[k] * (1.0 - y[k] * y[k]);
        break;
      }
      case Op::Relu: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        const double* a = val_ptr(n.in0);
        for (int k = 0; k < n.len; ++k)
          if (a[k] > 0.0) ga[k] += g[k];
        break;
      }
      case Op::Softmax: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        const double* y = vals_.data() + n.off;
        double dotgy = 0.0;
        for (int k = 0; k < n.len; ++k) dotgy += g[k] * y[k];
        for (int k = 0; k < n.len; ++k) ga[k] += y[k] * (g[k] - dotgy);
        break;
      }
      case Op::Sin: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        const double* a = val_ptr(n.in0);
        for (int k = 0; k < n.len; ++k) ga[k] += g[k] * std::cos(a[k]);
        break;
      }
      case Op::Cos: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        const double* a = val_ptr(n.in0);
        for (int k = 0; k < n.len; ++k) ga[k] -= g[k] * std::sin(a[k]);
        break;
      }
      case Op::Tan: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        const double* y = vals_.data() + n.off;
        for (int k = 0; k < n.len; ++k) ga[k] += g[k] * (1.0 + y[k] * y[k]);
        break;
      }
      case Op::Atan: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        const double* a = val_ptr(n.in0);
        for (int k = 0; k < n.len; ++k) ga[k] += g[k] / (1.0 + a[k] * a[k]);
        break;
      }
      case Op::Sqrt: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        const double* y = vals_.data() + n.off;
        for (int k = 0; k < n.len; ++k) ga[k] += g[k] * 0.5 / y[k];
        break;
      }
      case Op::Wrap: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off;
        for (int k = 0; k < n.len; ++k) ga[k] += g[k];
        break;
      }
      case Op::Concat: {
        int pos = 0;
        for (int e = 0; e < n.ext_n; ++e) {
          int src = extra_[size_t(n.ext_off + e)];
          const Node& ns = nodes_[size_t(src)];
          double* gs = grads_.data() + ns.off;
          for (int k = 0; k < ns.len; ++k) gs[k] += g[pos + k];
          pos += ns.len;
        }
        break;
      }
      case Op::Slice: {
        double* ga = grads_.data() + nodes_[size_t(n.in0)].off + n.aux;
        for (int k = 0; k < n.len; ++k) ga[k] += g[k];
        break;
      }
      case Op::Sum: {
        const Node& na = nodes_[size_t(n.in0)];
        double* ga = grads_.data() + na.off;
        for (int k = 0; k < na.len; ++k) ga[k] += g[0];
        break;
      }
      case Op::Dot: {
        const Node& na = nodes_[size_t(n.in0)];
        double* ga = grads_.data() + na.off;
        double* gb = grads_.data() + nodes_[size_t(n.in1)].off;
        const double* a = val_ptr(n.in0);
        const double* b = val_ptr(n.in1);
        for (int k = 0; k < na.len; ++k) {
          ga[k] += g[0] * b[k];
          gb[k] += g[0] * a[k];
        }
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  vals_.clear();
  grads_.clear();
  extra_.clear();
}

}  // namespace cmpg::ad
