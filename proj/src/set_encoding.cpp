#include "cmpg/set_encoding.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "cmpg/errors.hpp"

namespace cmpg::enc {

void EncoderSpec::init(std::span<double> params, Rng& rng) const {
  if (int(params.size()) != param_count())
    throw ConfigError("encoder init: parameter slice size mismatch");
  nn::mlp_init(h, params.subspan(0, size_t(h.param_count())), rng);
  nn::mlp_init(attn, params.subspan(size_t(h.param_count())), rng);
}

EncoderSpec EncoderSpec::make(int d2, int d3, int h_hidden, int attn_hidden,
                              Feature virtual_far) {
  EncoderSpec s;
  s.h = nn::MlpSpec::make({d2, h_hidden, d3}, nn::Act::Tanh, nn::Act::Linear);
  s.attn = nn::MlpSpec::make({2 * d3, attn_hidden, 1}, nn::Act::Tanh, nn::Act::Linear);
  if (virtual_far.empty()) {
    virtual_far.assign(size_t(d2), 0.0);
    if (d2 > 1) virtual_far[1] = 1.0;  // parked at the far longitudinal edge
  }
  if (int(virtual_far.size()) != d2)
    throw ConfigError("encoder: virtual participant feature length mismatch");
  s.virtual_far = std::move(virtual_far);
  return s;
}

EncoderVars encoder_bind(ad::Tape& tape, const EncoderSpec& spec,
                         std::span<const double> params, int global_offset,
                         bool trainable) {
  if (int(params.size()) != spec.param_count())
    throw ConfigError("encoder_bind: parameter slice size mismatch");
  EncoderVars v;
  v.h = nn::mlp_bind(tape, spec.h, params.subspan(0, size_t(spec.h.param_count())),
                     global_offset, trainable);
  v.attn = nn::mlp_bind(tape, spec.attn, params.subspan(size_t(spec.h.param_count())),
                        global_offset + spec.h.param_count(), trainable);
  return v;
}

namespace {

// Members fall back to the virtual far participant when the set is empty.
std::vector<ad::Var> with_fallback(ad::Tape& tape, const EncoderSpec& spec,
                                   std::span<const ad::Var> members) {
  if (!members.empty()) return {members.begin(), members.end()};
  return {tape.constant(spec.virtual_far)};
}

}  // namespace

SetEncoding encode_abe_tape(ad::Tape& tape, const EncoderSpec& spec,
                            const EncoderVars& vars,
                            std::span<const ad::Var> members, ad::Var x) {
  std::vector<ad::Var> xs = with_fallback(tape, spec, members);
  int M = int(xs.size());
  std::vector<ad::Var> e;
  e.reserve(size_t(M));
  for (ad::Var xj : xs) e.push_back(nn::mlp_apply(tape, spec.h, vars.h, xj));

  ad::Var q = e[0];
  for (int j = 1; j < M; ++j) q = tape.add(q, e[size_t(j)]);
  q = tape.scale(q, 1.0 / double(M));

  std::vector<ad::Var> logits;
  logits.reserve(size_t(M));
  for (int j = 0; j < M; ++j) {
    std::vector<ad::Var> eq{e[size_t(j)], q};
    logits.push_back(nn::mlp_apply(tape, spec.attn, vars.attn, tape.concat(eq)));
  }
  ad::Var w = tape.softmax(tape.concat(logits));

  ad::Var pooled = tape.mul_scalar(e[0], tape.slice(w, 0, 1));
  for (int j = 1; j < M; ++j)
    pooled = tape.add(pooled, tape.mul_scalar(e[size_t(j)], tape.slice(w, j, 1)));

  std::vector<ad::Var> sx{pooled, x};
  return SetEncoding{tape.concat(sx), w};
}

SetEncoding encode_esc_tape(ad::Tape& tape, const EncoderSpec& spec,
                            const EncoderVars& vars,
                            std::span<const ad::Var> members, ad::Var x) {
  std::vector<ad::Var> xs = with_fallback(tape, spec, members);
  ad::Var pooled = nn::mlp_apply(tape, spec.h, vars.h, xs[0]);
  for (size_t j = 1; j < xs.size(); ++j)
    pooled = tape.add(pooled, nn::mlp_apply(tape, spec.h, vars.h, xs[j]));
  std::vector<ad::Var> sx{pooled, x};
  return SetEncoding{tape.concat(sx), ad::Var{}};
}

std::vector<double> encode_abe_plain(const EncoderSpec& spec,
                                     std::span<const double> params,
                                     const FeatureSet& set,
                                     std::span<const double> x,
                                     std::vector<double>* weights_out) {
  const FeatureSet* use = &set;
  FeatureSet fallback;
  if (set.empty()) {
    fallback.push_back(spec.virtual_far);
    use = &fallback;
  }
  int M = int(use->size());
  int d3 = spec.d3();
  std::span<const double> hp = params.subspan(0, size_t(spec.h.param_count()));
  std::span<const double> ap = params.subspan(size_t(spec.h.param_count()));

  std::vector<std::vector<double>> e(size_t(M), std::vector<double>(size_t(d3), 0.0));
  std::vector<double> q(size_t(d3), 0.0);
  for (int j = 0; j < M; ++j) {
    nn::mlp_eval(spec.h, hp, (*use)[size_t(j)], e[size_t(j)]);
    for (int k = 0; k < d3; ++k) q[size_t(k)] += e[size_t(j)][size_t(k)];
  }
  for (double& v : q) v /= double(M);

  std::vector<double> logits(size_t(M), 0.0), eq(size_t(2 * d3), 0.0), one(1, 0.0);
  for (int j = 0; j < M; ++j) {
    std::copy(e[size_t(j)].begin(), e[size_t(j)].end(), eq.begin());
    std::copy(q.begin(), q.end(), eq.begin() + d3);
    nn::mlp_eval(spec.attn, ap, eq, one);
    logits[size_t(j)] = one[0];
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  std::vector<double> w(size_t(M), 0.0);
  for (int j = 0; j < M; ++j) {
    w[size_t(j)] = std::exp(logits[size_t(j)] - mx);
    z += w[size_t(j)];
  }
  for (double& v : w) v /= z;

  std::vector<double> s(size_t(d3) + x.size(), 0.0);
  for (int j = 0; j < M; ++j)
    for (int k = 0; k < d3; ++k) s[size_t(k)] += w[size_t(j)] * e[size_t(j)][size_t(k)];
  std::copy(x.begin(), x.end(), s.begin() + d3);
  if (weights_out) *weights_out = std::move(w);
  return s;
}

std::vector<double> encode_esc_plain(const EncoderSpec& spec,
                                     std::span<const double> params,
                                     const FeatureSet& set,
                                     std::span<const double> x) {
  const FeatureSet* use = &set;
  FeatureSet fallback;
  if (set.empty()) {
    fallback.push_back(spec.virtual_far);
    use = &fallback;
  }
  int d3 = spec.d3();
  std::span<const double> hp = params.subspan(0, size_t(spec.h.param_count()));
  std::vector<double> s(size_t(d3) + x.size(), 0.0), ej(size_t(d3), 0.0);
  for (const Feature& xj : *use) {
    nn::mlp_eval(spec.h, hp, xj, ej);
    for (int k = 0; k < d3; ++k) s[size_t(k)] += ej[size_t(k)];
  }
  std::copy(x.begin(), x.end(), s.begin() + d3);
  return s;
}

std::vector<double> encode_ordered(const FeatureSet& set, std::span<const double> x,
                                   int max_count, int pos_ix, int pos_iy) {
  if (max_count <= 0) throw ConfigError("encode_ordered: max_count must be positive");
  size_t d2 = set.empty() ? 0 : set[0].size();
  std::vector<int> order(set.size());
  for (size_t j = 0; j < set.size(); ++j) order[j] = int(j);
  auto dist = [&](int j) {
    const Feature& f = set[size_t(j)];
    return std::hypot(f[size_t(pos_ix)], f[size_t(pos_iy)]);
  };
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double da = dist(a), db = dist(b);
    if (da != db) return da < db;
    return set[size_t(a)][size_t(pos_ix)] < set[size_t(b)][size_t(pos_ix)];
  });

  std::vector<double> out;
  out.reserve(size_t(max_count) * d2 + x.size());
  for (int slot = 0; slot < max_count; ++slot) {
    if (slot < int(set.size())) {
      const Feature& f = set[size_t(order[size_t(slot)])];
      out.insert(out.end(), f.begin(), f.end());
    } else {
      out.insert(out.end(), d2, 0.0);
    }
  }
  out.insert(out.end(), x.begin(), x.end());
  return out;
}

std::vector<double> sum_of_power(std::span<const double> x, double lb, double hb, int n) {
  if (!(lb < hb)) throw ConfigError("sum_of_power: requires lb < hb");
  if (n < 0) throw ConfigError("sum_of_power: degree must be non-negative");
  std::vector<double> out(size_t(n) + 1, 0.0);
  for (double xi : x) {
    if (xi < lb || xi > hb)
      throw DomainError("sum_of_power: element " + std::to_string(xi) + " outside [" +
                        std::to_string(lb) + ", " + std::to_string(hb) + "]");
    double t = (xi - lb) / (hb - lb);
    double p = 1.0;
    for (int k = 0; k <= n; ++k) {
      out[size_t(k)] += p;
      p *= t;
    }
  }
  return out;
}

std::vector<double> dyn_set_map(const FeatureSet& set, double lb, double hb, int n) {
  if (set.empty()) throw UsageError("dyn_set_map: set must be non-empty");
  size_t m = set[0].size();
  for (const Feature& f : set)
    if (f.size() != m) throw ConfigError("dyn_set_map: ragged member lengths");
  std::vector<double> out;
  out.reserve(m * size_t(n + 1) + 1);
  std::vector<double> yi(set.size(), 0.0);
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < set.size(); ++j) yi[j] = set[j][i];
    std::sort(yi.begin(), yi.end());
    std::vector<double> e = sum_of_power(yi, lb, hb, n);
    out.insert(out.end(), e.begin(), e.end());
  }
  out.push_back(double(set.size()));
  return out;
}

FeatureSet constructed_h(const FeatureSet& set, double lb, double hb, int n,
                         std::span<const double> w) {
  if (set.size() != w.size())
    throw ConfigError("constructed_h: one weight per member required");
  size_t m = set.empty() ? 0 : set[0].size();
  FeatureSet hs;
  hs.reserve(set.size());
  for (size_t j = 0; j < set.size(); ++j) {
    if (!(w[j] > 0.0))
      throw DomainError("constructed_h: weight " + std::to_string(j) +
                        " is not positive; the construction divides by it");
    Feature hj;
    hj.reserve(m * size_t(n + 1) + 1);
    for (size_t i = 0; i < m; ++i) {
      double xi = set[j][i];
      if (xi < lb || xi > hb) throw DomainError("constructed_h: element outside [lb, hb]");
      double t = (xi - lb) / (hb - lb);
      double p = 1.0;
      for (int k = 0; k <= n; ++k) {
        hj.push_back(p / w[j]);
        p *= t;
      }
    }
    hj.push_back(1.0 / w[j]);
    hs.push_back(std::move(hj));
  }
  return hs;
}

std::string swap_class_key(const FeatureSet& set) {
  size_t m = set.empty() ? 0 : set[0].size();
  std::ostringstream key;
  key.precision(17);
  std::vector<double> yi(set.size(), 0.0);
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < set.size(); ++j) yi[j] = set[j][i];
    std::sort(yi.begin(), yi.end());
    for (double v : yi) key << v << ',';
    key << '|';
  }
  key << set.size();
  return key.str();
}

namespace {

double linf(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (size_t k = 0; k < a.size(); ++k) d = std::max(d, std::fabs(a[k] - b[k]));
  return d;
}

// All multisets of `size` indices over [0, count), emitted as non-decreasing
// index vectors.
void enumerate_multisets(int count, int size, std::vector<int>& cur,
                         const std::function<void(const std::vector<int>&)>& visit) {
  if (int(cur.size()) == size) {
    visit(cur);
    return;
  }
  int start = cur.empty() ? 0 : cur.back();
  for (int i = start; i < count; ++i) {
    cur.push_back(i);
    enumerate_multisets(count, size, cur, visit);
    cur.pop_back();
  }
}

}  // namespace

InjectivityReport certify_sum_of_power(std::span<const double> grid, int max_size,
                                       double lb, double hb, int n) {
  InjectivityReport rep;
  rep.mapping = "sum_of_power";
  rep.grid_points = int(grid.size());
  rep.m = 1;
  rep.max_set_size = max_size;
  rep.degree = n;

  std::vector<std::vector<double>> outputs;
  for (int size = 0; size <= max_size; ++size) {
    std::vector<int> cur;
    enumerate_multisets(int(grid.size()), size, cur, [&](const std::vector<int>& idx) {
      std::vector<double> x;
      for (int i : idx) x.push_back(grid[size_t(i)]);
      outputs.push_back(sum_of_power(x, lb, hb, n));
    });
  }
  rep.num_sets = long(outputs.size());
  rep.num_classes = long(outputs.size());  // every scalar multiset is its own class
  rep.max_within_class = 0.0;
  double min_d = std::numeric_limits<double>::infinity();
  for (size_t a = 0; a < outputs.size(); ++a)
    for (size_t b = a + 1; b < outputs.size(); ++b)
      min_d = std::min(min_d, linf(outputs[a], outputs[b]));
  rep.min_between_class = min_d;
  rep.pass = min_d > 1e-12;
  return rep;
}

InjectivityReport certify_dyn_set_map(std::span<const double> grid, int m,
                                      int max_size, double lb, double hb, int n) {
  InjectivityReport rep;
  rep.mapping = "dyn_set_map";
  rep.grid_points = int(grid.size());
  rep.m = m;
  rep.max_set_size = max_size;
  rep.degree = n;

  // Vector alphabet: grid^m.
  std::vector<Feature> alphabet;
  std::vector<int> digits(size_t(m), 0);
  while (true) {
    Feature f;
    for (int i = 0; i < m; ++i) f.push_back(grid[size_t(digits[size_t(i)])]);
    alphabet.push_back(std::move(f));
    int i = 0;
    for (; i < m; ++i) {
      if (++digits[size_t(i)] < int(grid.size())) break;
      digits[size_t(i)] = 0;
    }
    if (i == m) break;
  }

  std::map<std::string, std::vector<std::vector<double>>> classes;
  long num_sets = 0;
  for (int size = 1; size <= max_size; ++size) {
    std::vector<int> cur;
    enumerate_multisets(int(alphabet.size()), size, cur, [&](const std::vector<int>& idx) {
      FeatureSet set;
      for (int i : idx) set.push_back(alphabet[size_t(i)]);
      classes[swap_class_key(set)].push_back(dyn_set_map(set, lb, hb, n));
      ++num_sets;
    });
  }
  rep.num_sets = num_sets;
  rep.num_classes = long(classes.size());

  double max_within = 0.0;
  std::vector<const std::vector<double>*> reps;
  for (const auto& [key, outs] : classes) {
    reps.push_back(&outs[0]);
    for (size_t k = 1; k < outs.size(); ++k)
      max_within = std::max(max_within, linf(outs[0], outs[k]));
  }
  double min_d = std::numeric_limits<double>::infinity();
  for (size_t a = 0; a < reps.size(); ++a)
    for (size_t b = a + 1; b < reps.size(); ++b)
      min_d = std::min(min_d, linf(*reps[a], *reps[b]));
  rep.max_within_class = max_within;
  rep.min_between_class = min_d;
  rep.pass = min_d > 1e-12 && max_within == 0.0;
  return rep;
}

std::string InjectivityReport::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"mapping\":\"" << mapping << "\",\"grid_points\":" << grid_points
     << ",\"m\":" << m << ",\"max_set_size\":" << max_set_size << ",\"degree\":" << degree
     << ",\"num_sets\":" << num_sets << ",\"num_classes\":" << num_classes
     << ",\"min_between_class\":" << min_between_class
     << ",\"max_within_class\":" << max_within_class << ",\"pass\":" << (pass ? "true" : "false")
     << "}";
  return os.str();
}

std::string InjectivityReport::summary() const {
  std::ostringstream os;
  os << mapping << ": " << num_sets << " sets, " << num_classes
     << " swap classes, min between-class distance " << min_between_class
     << ", max within-class distance " << max_within_class << " -> "
     << (pass ? "injective" : "NOT injective");
  return os.str();
}

}  // namespace cmpg::enc
