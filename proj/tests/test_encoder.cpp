#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cmpg/fdcheck.hpp"
#include "cmpg/set_encoding.hpp"

using namespace cmpg;
using namespace cmpg::enc;
using ad::Tape;
using ad::Var;

namespace {

FeatureSet random_set(Rng& rng, int M, int d2, double lo = -1.0, double hi = 1.0) {
  FeatureSet set;
  for (int j = 0; j < M; ++j) {
    Feature f(size_t(d2), 0.0);
    for (double& v : f) v = rng.uniform(lo, hi);
    set.push_back(std::move(f));
  }
  return set;
}

std::vector<double> random_vec(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(size_t(n), 0.0);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("singleton set gets attention weight exactly 1") {
  Rng rng(101);
  EncoderSpec spec = EncoderSpec::make(4, 6, 8, 8);
  std::vector<double> params(size_t(spec.param_count()), 0.0);
  spec.init(params, rng);
  FeatureSet set = random_set(rng, 1, 4);
  std::vector<double> x = random_vec(rng, 3);

  std::vector<double> w;
  std::vector<double> s = encode_abe_plain(spec, params, set, x, &w);
  REQUIRE(w.size() == 1);
  CHECK(w[0] == 1.0);

  // s = [h(x_1) ; x] for a singleton.
  std::vector<double> esc = encode_esc_plain(spec, params, set, x);
  for (size_t k = 0; k < s.size(); ++k) CHECK(s[k] == doctest::Approx(esc[k]).epsilon(1e-12));
}

TEST_CASE("duplicate participants share one attention weight") {
  Rng rng(102);
  EncoderSpec spec = EncoderSpec::make(4, 6, 8, 8);
  std::vector<double> params(size_t(spec.param_count()), 0.0);
  spec.init(params, rng);
  Feature dup = random_vec(rng, 4);
  FeatureSet set{dup, random_vec(rng, 4), dup};
  std::vector<double> x = random_vec(rng, 3);

  std::vector<double> w;
  encode_abe_plain(spec, params, set, x, &w);
  CHECK(w[0] == doctest::Approx(w[2]).epsilon(1e-15));
}

TEST_CASE("attention pooling is permutation invariant") {
  Rng rng(103);
  EncoderSpec spec = EncoderSpec::make(5, 7, 10, 10);
  std::vector<double> params(size_t(spec.param_count()), 0.0);
  spec.init(params, rng);
  for (int trial = 0; trial < 50; ++trial) {
    int M = 1 + rng.uniform_int(6);
    FeatureSet set = random_set(rng, M, 5);
    std::vector<double> x = random_vec(rng, 4);
    FeatureSet perm = set;
    for (int j = M - 1; j > 0; --j) std::swap(perm[size_t(j)], perm[size_t(rng.uniform_int(j + 1))]);

    std::vector<double> a = encode_abe_plain(spec, params, set, x);
    std::vector<double> b = encode_abe_plain(spec, params, perm, x);
    for (size_t k = 0; k < a.size(); ++k) CHECK(std::fabs(a[k] - b[k]) < 1e-9);

    std::vector<double> ea = encode_esc_plain(spec, params, set, x);
    std::vector<double> eb = encode_esc_plain(spec, params, perm, x);
    for (size_t k = 0; k < ea.size(); ++k) CHECK(std::fabs(ea[k] - eb[k]) < 1e-9);
  }
}

TEST_CASE("attention weights form a probability vector under any parameters") {
  Rng rng(104);
  EncoderSpec spec = EncoderSpec::make(5, 7, 10, 10);
  std::vector<double> params(size_t(spec.param_count()), 0.0);
  for (int draw = 0; draw < 20; ++draw) {
    for (double& p : params) p = rng.uniform(-3, 3);
    int M = 1 + rng.uniform_int(7);
    FeatureSet set = random_set(rng, M, 5);
    std::vector<double> x = random_vec(rng, 4);
    std::vector<double> w;
    encode_abe_plain(spec, params, set, x, &w);
    double sum = 0.0;
    for (double v : w) {
      CHECK(v > 0.0);
      CHECK(v < 1.0 + 1e-15);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("zeroed attention net makes pooling uniform: ABE * M equals ESC") {
  Rng rng(105);
  EncoderSpec spec = EncoderSpec::make(4, 6, 8, 8);
  std::vector<double> params(size_t(spec.param_count()), 0.0);
  spec.init(params, rng);
  // Zero the attention slice: every logit collapses to the bias, weights go uniform.
  std::fill(params.begin() + spec.h.param_count(), params.end(), 0.0);
  int M = 5;
  FeatureSet set = random_set(rng, M, 4);
  std::vector<double> x = random_vec(rng, 3);
  std::vector<double> abe = encode_abe_plain(spec, params, set, x);
  std::vector<double> esc = encode_esc_plain(spec, params, set, x);
  for (int k = 0; k < spec.d3(); ++k)
    CHECK(abe[size_t(k)] * M == doctest::Approx(esc[size_t(k)]).epsilon(1e-10));
}

TEST_CASE("sum pooling is additive over disjoint subsets") {
  Rng rng(106);
  EncoderSpec spec = EncoderSpec::make(4, 6, 8, 8);
  std::vector<double> params(size_t(spec.param_count()), 0.0);
  spec.init(params, rng);
  FeatureSet a = random_set(rng, 3, 4), b = random_set(rng, 2, 4);
  FeatureSet both = a;
  both.insert(both.end(), b.begin(), b.end());
  std::vector<double> x(3, 0.0);
  std::vector<double> ea = encode_esc_plain(spec, params, a, x);
  std::vector<double> eb = encode_esc_plain(spec, params, b, x);
  std::vector<double> eboth = encode_esc_plain(spec, params, both, x);
  for (int k = 0; k < spec.d3(); ++k)
    CHECK(eboth[size_t(k)] == doctest::Approx(ea[size_t(k)] + eb[size_t(k)]).epsilon(1e-12));
}

TEST_CASE("empty set encodes the virtual far participant instead of crashing") {
  Rng rng(107);
  EncoderSpec spec = EncoderSpec::make(4, 6, 8, 8);
  std::vector<double> params(size_t(spec.param_count()), 0.0);
  spec.init(params, rng);
  std::vector<double> x = random_vec(rng, 3);
  std::vector<double> w;
  std::vector<double> s = encode_abe_plain(spec, params, {}, x, &w);
  REQUIRE(w.size() == 1);
  CHECK(w[0] == 1.0);
  std::vector<double> direct = encode_abe_plain(spec, params, {spec.virtual_far}, x);
  CHECK(s == direct);
}

TEST_CASE("tape and plain encodings agree and gradients flow through attention") {
  Rng rng(108);
  EncoderSpec spec = EncoderSpec::make(4, 5, 6, 6);
  std::vector<double> params(size_t(spec.param_count()), 0.0);
  spec.init(params, rng);
  int M = 3;
  FeatureSet set = random_set(rng, M, 4);
  std::vector<double> x = random_vec(rng, 3);
  std::vector<double> probe = random_vec(rng, spec.d3() + 3);

  auto scalar_of = [&](std::span<const double> p) {
    std::vector<double> s = encode_abe_plain(spec, {p.data(), p.size()}, set, x);
    return std::inner_product(s.begin(), s.end(), probe.begin(), 0.0);
  };

  Tape t;
  EncoderVars vars = encoder_bind(t, spec, params, 0, true);
  std::vector<Var> members;
  for (const Feature& f : set) members.push_back(t.constant(f));
  SetEncoding encv = encode_abe_tape(t, spec, vars, members, t.constant(x));
  std::vector<double> s_plain = encode_abe_plain(spec, params, set, x);
  auto s_tape = t.value(encv.s);
  REQUIRE(int(s_tape.size()) == int(s_plain.size()));
  for (size_t k = 0; k < s_plain.size(); ++k)
    CHECK(s_tape[k] == doctest::Approx(s_plain[k]).epsilon(1e-12));

  Var obj = t.dot(encv.s, t.constant(probe));
  std::vector<double> grad(params.size(), 0.0);
  t.backward_scalar(obj, grad);
  FdReport rep = finite_diff_check(scalar_of, params, grad, 1e-5);
  CHECK(rep.finite);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("ordered encoding sorts by distance, pads, and truncates") {
  // Two participants at distances 3 and 5: nearer one first.
  Feature near{3.0, 0.0, 9.0};
  Feature far{0.0, 5.0, 7.0};
  FeatureSet set{far, near};
  std::vector<double> x{0.5};
  std::vector<double> s = encode_ordered(set, x, 3);
  CHECK(s[0] == 3.0);
  CHECK(s[2] == 9.0);
  CHECK(s[3] == 0.0);
  CHECK(s[5] == 7.0);
  // Third slot zero-padded, x appended last.
  CHECK(s[6] == 0.0);
  CHECK(s[7] == 0.0);
  CHECK(s[8] == 0.0);
  CHECK(s[9] == 0.5);

  // Empty set: all-zero prefix then x.
  std::vector<double> e = encode_ordered({}, x, 2);
  CHECK(e == std::vector<double>{0.5});

  // Overfull set: farthest dropped.
  FeatureSet three{near, far, Feature{10.0, 10.0, 1.0}};
  std::vector<double> tr = encode_ordered(three, x, 2);
  CHECK(tr.size() == 7);
  CHECK(tr[0] == 3.0);
  CHECK(tr[3] == 0.0);
  CHECK(tr[4] == 5.0);
}

TEST_CASE("power sums of [0.5] over [0,1] up to degree 2") {
  std::vector<double> out = sum_of_power(std::vector<double>{0.5}, 0.0, 1.0, 2);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 0.5);
  CHECK(out[2] == 0.25);
}

TEST_CASE("power sums of the interval endpoints") {
  std::vector<double> out = sum_of_power(std::vector<double>{0.0, 1.0}, 0.0, 1.0, 1);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == 2.0);
  CHECK(out[1] == 1.0);
}

TEST_CASE("power sums reject out-of-range elements") {
  CHECK_THROWS_AS(sum_of_power(std::vector<double>{1.5}, 0.0, 1.0, 2), DomainError);
  CHECK_THROWS_AS(sum_of_power(std::vector<double>{-0.1}, 0.0, 1.0, 2), DomainError);
}

TEST_CASE("distinct 3-element multisets over a 5-point grid stay distinct") {
  std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0};
  InjectivityReport rep = certify_sum_of_power(grid, 3, 0.0, 1.0, 3);
  CHECK(rep.pass);
  CHECK(rep.min_between_class > 1e-12);
  // sizes 0..3 over 5 values: 1 + 5 + 15 + 35
  CHECK(rep.num_sets == 56);
}

TEST_CASE("coordinate-wise power map: structure for a singleton") {
  FeatureSet set{{0.5, 0.25}};
  std::vector<double> out = dyn_set_map(set, 0.0, 1.0, 2);
  REQUIRE(out.size() == 7);  // two blocks of 3 plus the size
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 0.5);
  CHECK(out[2] == 0.25);
  CHECK(out[3] == 1.0);
  CHECK(out[4] == 0.25);
  CHECK(out[5] == 0.0625);
  CHECK(out[6] == 1.0);
}

TEST_CASE("coordinate-wise power map ignores member order") {
  Rng rng(109);
  FeatureSet set = random_set(rng, 4, 3, 0.1, 0.9);
  FeatureSet perm{set[2], set[0], set[3], set[1]};
  CHECK(dyn_set_map(set, 0.0, 1.0, 4) == dyn_set_map(perm, 0.0, 1.0, 4));
}

TEST_CASE("swap-inequivalent sets over an exhaustive small grid stay distinct") {
  std::vector<double> grid{0.0, 0.5, 1.0};
  InjectivityReport rep = certify_dyn_set_map(grid, 2, 2, 0.0, 1.0, 2);
  CHECK(rep.pass);
  CHECK(rep.max_within_class == 0.0);
  CHECK(rep.min_between_class > 1e-12);
  // 9 singletons plus C(10,2)=45 pairs.
  CHECK(rep.num_sets == 54);
  // Keys: 9 singleton classes plus 6x6 sorted coordinate-pair classes.
  CHECK(rep.num_classes == 45);
}

TEST_CASE("feature-swapped sets collide by design") {
  FeatureSet a{{0.0, 0.5}, {1.0, 0.25}};
  FeatureSet b{{0.0, 0.25}, {1.0, 0.5}};  // second coordinates exchanged
  CHECK(swap_class_key(a) == swap_class_key(b));
  CHECK(dyn_set_map(a, 0.0, 1.0, 2) == dyn_set_map(b, 0.0, 1.0, 2));
}

TEST_CASE("existence construction: singleton with unit weight is the map itself") {
  FeatureSet set{{0.5, 0.25, 0.75}};
  std::vector<double> w{1.0};
  FeatureSet hs = constructed_h(set, 0.0, 1.0, 3, w);
  REQUIRE(hs.size() == 1);
  CHECK(hs[0] == dyn_set_map(set, 0.0, 1.0, 3));
}

TEST_CASE("existence construction: weighted sum reproduces the set map") {
  Rng rng(110);
  for (int trial = 0; trial < 200; ++trial) {
    int M = 1 + rng.uniform_int(4);
    int m = 1 + rng.uniform_int(3);
    FeatureSet set = random_set(rng, M, m, 0.0, 1.0);
    // Positive weights summing to 1.
    std::vector<double> w(size_t(M), 0.0);
    double z = 0.0;
    for (double& v : w) {
      v = rng.uniform(0.05, 1.0);
      z += v;
    }
    for (double& v : w) v /= z;

    int n = M + 1;
    FeatureSet hs = constructed_h(set, 0.0, 1.0, n, w);
    std::vector<double> target = dyn_set_map(set, 0.0, 1.0, n);
    std::vector<double> sum(target.size(), 0.0);
    for (int j = 0; j < M; ++j)
      for (size_t k = 0; k < sum.size(); ++k) sum[k] += w[size_t(j)] * hs[size_t(j)][k];
    for (size_t k = 0; k < sum.size(); ++k) CHECK(std::fabs(sum[k] - target[k]) < 1e-9);
  }
}

TEST_CASE("existence construction: common weight rescaling cancels") {
  FeatureSet set{{0.5, 0.1}, {0.9, 0.4}};
  std::vector<double> w{0.3, 0.7};
  std::vector<double> w2{0.6, 1.4};
  FeatureSet h1 = constructed_h(set, 0.0, 1.0, 3, w);
  FeatureSet h2 = constructed_h(set, 0.0, 1.0, 3, w2);
  std::vector<double> s1(h1[0].size(), 0.0), s2(h1[0].size(), 0.0);
  for (size_t j = 0; j < 2; ++j)
    for (size_t k = 0; k < s1.size(); ++k) {
      s1[k] += w[j] * h1[j][k];
      s2[k] += w2[j] * h2[j][k];
    }
  for (size_t k = 0; k < s1.size(); ++k) CHECK(s1[k] == doctest::Approx(s2[k]).epsilon(1e-12));
}

TEST_CASE("existence construction refuses a zero weight") {
  FeatureSet set{{0.5}, {0.9}};
  std::vector<double> w{0.0, 1.0};
  CHECK_THROWS_AS(constructed_h(set, 0.0, 1.0, 2, w), DomainError);
}

TEST_CASE("embedding width bound for guaranteed injectivity") {
  CHECK(injective_d3_lower_bound(8, 10) == 81);
  CHECK(injective_d3_lower_bound(1, 1) == 2);
}
