#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cmpg/errors.hpp"

namespace cmpg::ad {

// Dense row-major value carrier. Training math runs on 64-bit reals.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> values)
      : shape(std::move(s)), v(std::move(values)) {
    if (size_from_shape(shape) != int(v.size()))
      throw ConfigError("Tensor: shape does not match value count");
  }
  static Tensor zeros(std::vector<int> s) {
    int n = size_from_shape(s);
    return Tensor(std::move(s), std::vector<double>(size_t(n), 0.0));
  }
  static Tensor vector(std::vector<double> values) {
    int n = int(values.size());
    return Tensor({n}, std::move(values));
  }
  int size() const { return int(v.size()); }
  static int size_from_shape(const std::vector<int>& s) {
    int n = 1;
    for (int d : s) {
      if (d <= 0) throw ConfigError("Tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }
  bool finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

class Tape;

// Handle to a node on a tape. Cheap to copy.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape. Nodes are appended in topological order; values live in
// one contiguous arena so iteration-to-iteration reuse does not allocate.
// Single-writer: one thread builds and differentiates a given tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- node creation -------------------------------------------------------

  // Trainable input. If param_offset >= 0, backward() accumulates this
  // leaf's gradient into param_grad[param_offset ...].
  Var leaf(std::span<const double> value, int param_offset = -1);
  Var leaf_scalar(double v, int param_offset = -1);

  // Non-differentiated input.
  Var constant(std::span<const double> value);
  Var constant_scalar(double v);

  // y = W x + b. W is a leaf/const of length rows*len(x), row-major.
  Var affine(Var w, Var b, Var x, int rows);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var div(Var a, Var b);  // elementwise
  Var neg(Var a);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var mul_scalar(Var a, Var s);  // s has length 1
  Var tanh_op(Var a);
  Var relu(Var a);
  Var softmax(Var a);  // max-subtracted
  Var sin_op(Var a);
  Var cos_op(Var a);
  Var tan_op(Var a);
  Var atan_op(Var a);
  Var sqrt_op(Var a);
  Var concat(std::span<const Var> parts);
  Var slice(Var a, int offset, int len);
  Var sum(Var a);        // -> scalar
  Var dot(Var a, Var b);  // -> scalar
  Var wrap_angle(Var a);  // wraps to (-pi, pi], derivative 1

  // --- inspection ----------------------------------------------------------

  int len(Var x) const { return node(x).len; }
  std::span<const double> value(Var x) const {
    const Node& n = node(x);
    return {vals_.data() + n.off, size_t(n.len)};
  }
  double scalar(Var x) const {
    const Node& n = node(x);
    if (n.len != 1) throw UsageError("scalar(): node is not length 1");
    return vals_[size_t(n.off)];
  }
  size_t num_nodes() const { return nodes_.size(); }
  bool values_finite() const;

  // --- execution -----------------------------------------------------------

  // Recompute every non-leaf value from the current leaf values.
  void replay_forward();

  // Reverse pass from `out`. Gradients of param-bound leaves are accumulated
  // into param_grad (must be long enough for every bound offset); per-var
  // gradients stay readable through grad_of() until the next backward() or
  // reset(). Multiple backward() calls on one tape are allowed.
  void backward(Var out, std::span<const double> seed, std::span<double> param_grad);
  void backward_scalar(Var out, std::span<double> param_grad) {
    double one = 1.0;
    backward(out, std::span<const double>(&one, 1), param_grad);
  }
  std::span<const double> grad_of(Var x) const {
    const Node& n = node(x);
    if (grads_.size() != vals_.size()) throw UsageError("grad_of(): no backward pass ran");
    return {grads_.data() + n.off, size_t(n.len)};
  }

  // Clears nodes but keeps arena capacity.
  void reset();

 private:
  enum class Op : uint8_t {
    Leaf, Const, Affine, Add, Sub, Mul, Div, Neg, Scale, AddC, MulS,
    Tanh, Relu, Softmax, Sin, Cos, Tan, Atan, Sqrt, Concat, Slice, Sum, Dot, Wrap,
  };

  struct Node {
    Op op;
    int in0 = -1, in1 = -1, in2 = -1;
    int off = 0, len = 0;   // value storage
    int aux = 0;            // rows for Affine, source offset for Slice
    double c0 = 0.0;        // constant for Scale/AddC
    int ext_off = 0, ext_n = 0;  // Concat input list in extra_
    int param_off = -1;
  };

  const Node& node(Var x) const {
    if (x.tape != this || x.id < 0 || x.id >= int(nodes_.size()))
      throw UsageError("Var does not belong to this tape");
    return nodes_[size_t(x.id)];
  }
  Var push(Node n);
  int alloc(int len) {
    int off = int(vals_.size());
    vals_.resize(vals_.size() + size_t(len));
    return off;
  }
  double* val_ptr(int id) { return vals_.data() + nodes_[size_t(id)].off; }
  const double* val_ptr(int id) const { return vals_.data() + nodes_[size_t(id)].off; }
  void compute(size_t i);  // forward for node i (non-leaf)

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<int> extra_;
};

inline double wrap_angle_value(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

// Arithmetic sugar so simulator math reads naturally on tape scalars.
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape->div(a, b); }
inline Var operator-(Var a) { return a.tape->neg(a); }
inline Var operator*(Var a, double c) { return a.tape->scale(a, c); }
inline Var operator*(double c, Var a) { return a.tape->scale(a, c); }
inline Var operator+(Var a, double c) { return a.tape->add_const(a, c); }
inline Var operator+(double c, Var a) { return a.tape->add_const(a, c); }
inline Var operator-(Var a, double c) { return a.tape->add_const(a, -c); }
inline Var operator-(double c, Var a) { return a.tape->add_const(a.tape->neg(a), c); }
inline Var sin(Var a) { return a.tape->sin_op(a); }
inline Var cos(Var a) { return a.tape->cos_op(a); }
inline Var tan(Var a) { return a.tape->tan_op(a); }
inline Var tanh(Var a) { return a.tape->tanh_op(a); }
inline Var atan(Var a) { return a.tape->atan_op(a); }
inline Var sqrt(Var a) { return a.tape->sqrt_op(a); }
inline Var relu(Var a) { return a.tape->relu(a); }
inline Var square(Var a) { return a.tape->mul(a, a); }
inline Var wrap_angle(Var a) { return a.tape->wrap_angle(a); }
inline Var max2(Var a, Var b) { return a + relu(b - a); }
inline Var min2(Var a, Var b) { return a - relu(a - b); }
inline Var abs2(Var a) { return relu(a) + relu(-a); }

}  // namespace cmpg::ad
