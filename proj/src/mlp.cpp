#include "cmpg/mlp.hpp"

#include <cmath>

#include "cmpg/errors.hpp"

namespace cmpg::nn {

int MlpSpec::param_count() const {
  int n = 0;
  for (int l = 0; l < layers(); ++l) n += widths[size_t(l)] * widths[size_t(l) + 1] + widths[size_t(l) + 1];
  return n;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("MlpSpec: need at least one layer");
  for (int w : widths)
    if (w <= 0) throw ConfigError("MlpSpec: widths must be positive");
  if (int(acts.size()) != layers()) throw ConfigError("MlpSpec: one activation per layer required");
  if (out == OutKind::Bounded &&
      (int(out_lo.size()) != out_dim() || int(out_hi.size()) != out_dim()))
    throw ConfigError("MlpSpec: bounded output needs lo/hi per output dimension");
}

MlpSpec MlpSpec::make(std::vector<int> widths, Act hidden, Act last, OutKind out,
                      std::vector<double> lo, std::vector<double> hi) {
  MlpSpec s;
  s.widths = std::move(widths);
  s.acts.assign(size_t(s.layers()), hidden);
  s.acts.back() = last;
  s.out = out;
  s.out_lo = std::move(lo);
  s.out_hi = std::move(hi);
  s.validate();
  return s;
}

void mlp_init(const MlpSpec& spec, std::span<double> params, Rng& rng) {
  if (int(params.size()) != spec.param_count())
    throw ConfigError("mlp_init: parameter slice size mismatch");
  size_t pos = 0;
  for (int l = 0; l < spec.layers(); ++l) {
    int fan_in = spec.widths[size_t(l)];
    int fan_out = spec.widths[size_t(l) + 1];
    double bound = 1.0 / std::sqrt(double(fan_in));
    for (int k = 0; k < fan_in * fan_out + fan_out; ++k)
      params[pos++] = rng.uniform(-bound, bound);
  }
}

MlpVars mlp_bind(ad::Tape& tape, const MlpSpec& spec,
                 std::span<const double> params, int global_offset,
                 bool trainable) {
  if (int(params.size()) != spec.param_count())
    throw ConfigError("mlp_bind: parameter slice size mismatch");
  MlpVars vars;
  int pos = 0;
  for (int l = 0; l < spec.layers(); ++l) {
    int rows = spec.widths[size_t(l) + 1];
    int cols = spec.widths[size_t(l)];
    std::span<const double> wv = params.subspan(size_t(pos), size_t(rows * cols));
    std::span<const double> bv = params.subspan(size_t(pos + rows * cols), size_t(rows));
    vars.w.push_back(trainable ? tape.leaf(wv, global_offset + pos) : tape.constant(wv));
    vars.b.push_back(trainable ? tape.leaf(bv, global_offset + pos + rows * cols)
                               : tape.constant(bv));
    pos += rows * cols + rows;
  }
  return vars;
}

ad::Var mlp_apply(ad::Tape& tape, const MlpSpec& spec, const MlpVars& vars,
                  ad::Var input) {
  if (tape.len(input) != spec.in_dim())
    throw ConfigError("mlp_apply: input length mismatch");
  if (int(vars.w.size()) != spec.layers())
    throw ConfigError("mlp_apply: bound vars do not match spec");
  ad::Var h = input;
  for (int l = 0; l < spec.layers(); ++l) {
    int rows = spec.widths[size_t(l) + 1];
    h = tape.affine(vars.w[size_t(l)], vars.b[size_t(l)], h, rows);
    switch (spec.acts[size_t(l)]) {
      case Act::Tanh: h = tape.tanh_op(h); break;
      case Act::Relu: h = tape.relu(h); break;
      case Act::Linear: break;
    }
  }
  switch (spec.out) {
    case OutKind::Identity:
      break;
    case OutKind::Bounded: {
      int d = spec.out_dim();
      std::vector<double> mid(size_t(d), 0.0), half(size_t(d), 0.0);
      for (int k = 0; k < d; ++k) {
        mid[size_t(k)] = 0.5 * (spec.out_lo[size_t(k)] + spec.out_hi[size_t(k)]);
        half[size_t(k)] = 0.5 * (spec.out_hi[size_t(k)] - spec.out_lo[size_t(k)]);
      }
      ad::Var t = tape.tanh_op(h);
      h = tape.add(tape.mul(t, tape.constant(half)), tape.constant(mid));
      break;
    }
    case OutKind::Softmax:
      h = tape.softmax(h);
      break;
  }
  return h;
}

void mlp_eval(const MlpSpec& spec, std::span<const double> params,
              std::span<const double> input, std::span<double> output) {
  if (int(params.size()) != spec.param_count())
    throw ConfigError("mlp_eval: parameter slice size mismatch");
  if (int(input.size()) != spec.in_dim() || int(output.size()) != spec.out_dim())
    throw ConfigError("mlp_eval: input/output length mismatch");

  thread_local std::vector<double> buf_a, buf_b;
  buf_a.assign(input.begin(), input.end());
  std::vector<double>* cur = &buf_a;
  std::vector<double>* nxt = &buf_b;
  int pos = 0;
  for (int l = 0; l < spec.layers(); ++l) {
    int rows = spec.widths[size_t(l) + 1];
    int cols = spec.widths[size_t(l)];
    const double* w = params.data() + pos;
    const double* b = params.data() + pos + rows * cols;
    pos += rows * cols + rows;
    nxt->assign(size_t(rows), 0.0);
    for (int r = 0; r < rows; ++r) {
      double acc = b[r];
      const double* wr = w + size_t(r) * cols;
      for (int c = 0; c < cols; ++c) acc += wr[c] * (*cur)[size_t(c)];
      switch (spec.acts[size_t(l)]) {
        case Act::Tanh: acc = std::tanh(acc); break;
        case Act::Relu: acc = acc > 0.0 ? acc : 0.0; break;
        case Act::Linear: break;
      }
      (*nxt)[size_t(r)] = acc;
    }
    std::swap(cur, nxt);
  }
  int d = spec.out_dim();
  switch (spec.out) {
    case OutKind::Identity:
      for (int k = 0; k < d; ++k) output[size_t(k)] = (*cur)[size_t(k)];
      break;
    case OutKind::Bounded:
      for (int k = 0; k < d; ++k) {
        double mid = 0.5 * (spec.out_lo[size_t(k)] + spec.out_hi[size_t(k)]);
        double half = 0.5 * (spec.out_hi[size_t(k)] - spec.out_lo[size_t(k)]);
        output[size_t(k)] = mid + half * std::tanh((*cur)[size_t(k)]);
      }
      break;
    case OutKind::Softmax: {
      double mx = (*cur)[0];
      for (int k = 1; k < d; ++k) mx = std::max(mx, (*cur)[size_t(k)]);
      double z = 0.0;
      for (int k = 0; k < d; ++k) {
        output[size_t(k)] = std::exp((*cur)[size_t(k)] - mx);
        z += output[size_t(k)];
      }
      for (int k = 0; k < d; ++k) output[size_t(k)] /= z;
      break;
    }
  }
}

}  // namespace cmpg::nn
