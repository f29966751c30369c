#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <filesystem>
#include <vector>

#include "cmpg/fdcheck.hpp"
#include "cmpg/mlp.hpp"
#include "cmpg/optim.hpp"
#include "cmpg/params.hpp"
#include "cmpg/rng.hpp"
#include "cmpg/tape.hpp"

using namespace cmpg;
using ad::Tape;
using ad::Var;

TEST_CASE("tape forward: basic op values") {
  Tape t;
  Var x = t.leaf_scalar(3.0);
  Var y = x * x;
  CHECK(t.scalar(y) == 9.0);

  Var a = t.constant({std::vector<double>{1.0, 2.0, 3.0}});
  Var b = t.constant({std::vector<double>{4.0, 5.0, 6.0}});
  CHECK(t.scalar(t.dot(a, b)) == 32.0);
  CHECK(t.scalar(t.sum(a)) == 6.0);

  Var s = t.slice(b, 1, 2);
  CHECK(t.value(s)[0] == 5.0);
  CHECK(t.value(s)[1] == 6.0);
}

TEST_CASE("linear layer forward: W=[[2]], b=[1], x=[3] gives [7]") {
  Tape t;
  Var w = t.leaf_scalar(2.0);
  Var b = t.leaf_scalar(1.0);
  Var x = t.constant_scalar(3.0);
  Var y = t.affine(w, b, x, 1);
  CHECK(t.scalar(y) == 7.0);
}

TEST_CASE("zero-weight network outputs its bias") {
  nn::MlpSpec spec = nn::MlpSpec::make({4, 3}, nn::Act::Linear, nn::Act::Linear);
  std::vector<double> params(size_t(spec.param_count()), 0.0);
  params[12] = 0.5;
  params[13] = -1.5;
  params[14] = 2.0;
  std::vector<double> in{9.0, -3.0, 7.0, 2.0}, out(3);
  nn::mlp_eval(spec, params, in, out);
  CHECK(out[0] == 0.5);
  CHECK(out[1] == -1.5);
  CHECK(out[2] == 2.0);
}

TEST_CASE("bounded output transform maps pre-activation 0 to interval midpoint") {
  nn::MlpSpec spec = nn::MlpSpec::make({2, 1}, nn::Act::Linear, nn::Act::Linear,
                                       nn::OutKind::Bounded, {-3.0}, {1.5});
  std::vector<double> params(size_t(spec.param_count()), 0.0);
  std::vector<double> in{1.0, -1.0}, out(1);
  nn::mlp_eval(spec, params, in, out);
  CHECK(out[0] == doctest::Approx(-0.75));

  // tanh(0) = 0: symmetric bounds give exactly 0.
  nn::MlpSpec sym = nn::MlpSpec::make({2, 1}, nn::Act::Linear, nn::Act::Linear,
                                      nn::OutKind::Bounded, {-2.0}, {2.0});
  nn::mlp_eval(sym, params, in, out);
  CHECK(out[0] == 0.0);
}

TEST_CASE("backward: d(x^2)/dx at x=3 is 6") {
  Tape t;
  Var x = t.leaf_scalar(3.0, 0);
  Var y = x * x;
  std::vector<double> g(1, 0.0);
  t.backward_scalar(y, g);
  CHECK(g[0] == 6.0);
}

TEST_CASE("backward: linear layer weight gradient is outer(seed, x)") {
  Tape t;
  std::vector<double> wv{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};  // 2x3
  std::vector<double> bv{0.0, 0.0};
  std::vector<double> xv{7.0, -1.0, 2.0};
  Var w = t.leaf(wv, 0);
  Var b = t.leaf(bv, 6);
  Var x = t.constant(xv);
  Var y = t.affine(w, b, x, 2);
  std::vector<double> g(8, 0.0);
  std::vector<double> seed{1.0, 1.0};
  t.backward(y, seed, g);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) CHECK(g[size_t(r * 3 + c)] == xv[size_t(c)]);
  CHECK(g[6] == 1.0);
  CHECK(g[7] == 1.0);
}

TEST_CASE("two-layer tanh net gradient matches central differences") {
  nn::MlpSpec spec = nn::MlpSpec::make({3, 5, 1}, nn::Act::Tanh, nn::Act::Linear);
  std::vector<double> params(size_t(spec.param_count()));
  Rng rng(42);
  nn::mlp_init(spec, params, rng);
  std::vector<double> in{0.3, -0.7, 1.1};

  Tape t;
  Var x = t.constant(in);
  Var y = nn::mlp_forward(t, spec, params, 0, x, true);
  std::vector<double> grad(params.size(), 0.0);
  t.backward_scalar(y, grad);

  auto f = [&](std::span<const double> p) {
    std::vector<double> out(1);
    nn::mlp_eval(spec, {p.data(), p.size()}, in, out);
    return out[0];
  };
  FdReport rep = finite_diff_check(f, params, grad, 1e-5);
  CHECK(rep.finite);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("every primitive op differentiates correctly at random points") {
  Rng rng(7);
  // Builders exercise each op; each maps 4 leaf scalars to one output scalar.
  using Builder = std::function<Var(Tape&, Var, Var, Var, Var)>;
  std::vector<Builder> builders = {
      [](Tape& t, Var a, Var b, Var, Var) { return t.add(a, b); },
      [](Tape& t, Var a, Var b, Var, Var) { return t.sub(a, b); },
      [](Tape& t, Var a, Var b, Var, Var) { return t.mul(a, b); },
      [](Tape& t, Var a, Var, Var, Var) { return t.neg(a); },
      [](Tape& t, Var a, Var, Var, Var) { return t.scale(a, 2.5); },
      [](Tape& t, Var a, Var, Var, Var) { return t.add_const(a, -1.25); },
      [](Tape& t, Var a, Var b, Var, Var) { return t.mul_scalar(a, b); },
      [](Tape& t, Var a, Var, Var, Var) { return t.tanh_op(a); },
      [](Tape& t, Var a, Var, Var, Var) { return t.sin_op(a); },
      [](Tape& t, Var a, Var, Var, Var) { return t.cos_op(a); },
      [](Tape& t, Var a, Var, Var, Var) { return t.tan_op(t.scale(t.tanh_op(a), 0.7)); },
      [](Tape& t, Var a, Var, Var, Var) { return t.atan_op(a); },
      [](Tape& t, Var a, Var b, Var, Var) {
        return t.div(a, t.add_const(t.mul(b, b), 1.0));
      },
      [](Tape& t, Var a, Var b, Var c, Var d) {
        std::vector<Var> parts{a, b, c, d};
        Var cat = t.concat(parts);
        return t.dot(cat, cat);
      },
      [](Tape& t, Var a, Var b, Var, Var) {
        std::vector<Var> parts{a, b};
        Var cat = t.concat(parts);
        Var sm = t.softmax(cat);
        Var w = t.constant({std::vector<double>{0.3, 1.7}});
        return t.dot(sm, w);
      },
      [](Tape& t, Var a, Var b, Var c, Var d) {
        std::vector<Var> parts{a, b, c, d};
        return t.sum(t.concat(parts));
      },
  };
  for (const Builder& build : builders) {
    for (int trial = 0; trial < 8; ++trial) {
      std::vector<double> p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2),
                            rng.uniform(-2, 2)};
      auto f = [&](std::span<const double> q) {
        Tape t;
        Var a = t.leaf_scalar(q[0], 0), b = t.leaf_scalar(q[1], 1);
        Var c = t.leaf_scalar(q[2], 2), d = t.leaf_scalar(q[3], 3);
        return t.scalar(build(t, a, b, c, d));
      };
      Tape t;
      Var a = t.leaf_scalar(p[0], 0), b = t.leaf_scalar(p[1], 1);
      Var c = t.leaf_scalar(p[2], 2), d = t.leaf_scalar(p[3], 3);
      Var y = build(t, a, b, c, d);
      std::vector<double> grad(4, 0.0);
      t.backward_scalar(y, grad);
      FdReport rep = finite_diff_check(f, p, grad, 1e-5);
      CHECK(rep.finite);
      CHECK(rep.max_rel_err < 1e-4);
    }
  }
  // sqrt and relu need kink-free domains.
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<double> p{rng.uniform(0.5, 2.0)};
    auto fs = [&](std::span<const double> q) {
      Tape t;
      return t.scalar(t.sqrt_op(t.leaf_scalar(q[0], 0)));
    };
    Tape t;
    Var y = t.sqrt_op(t.leaf_scalar(p[0], 0));
    std::vector<double> grad(1, 0.0);
    t.backward_scalar(y, grad);
    CHECK(finite_diff_check(fs, p, grad, 1e-6).max_rel_err < 1e-4);

    std::vector<double> pr{rng.uniform(0.5, 2.0) * (trial % 2 ? 1.0 : -1.0)};
    auto fr = [&](std::span<const double> q) {
      Tape t;
      return t.scalar(t.relu(t.leaf_scalar(q[0], 0)));
    };
    Tape t2;
    Var yr = t2.relu(t2.leaf_scalar(pr[0], 0));
    std::vector<double> gr(1, 0.0);
    t2.backward_scalar(yr, gr);
    CHECK(finite_diff_check(fr, pr, gr, 1e-6).max_rel_err < 1e-4);
  }
}

TEST_CASE("softmax output is a probability vector for |x| <= 50") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + rng.uniform_int(6);
    std::vector<double> xv(size_t(n), 0.0);
    for (double& x : xv) x = rng.uniform(-50, 50);
    Tape t;
    Var y = t.softmax(t.constant(xv));
    double sum = 0.0;
    for (double v : t.value(y)) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("tape replay reproduces forward values bitwise") {
  Rng rng(13);
  nn::MlpSpec spec = nn::MlpSpec::make({4, 8, 2}, nn::Act::Relu, nn::Act::Tanh);
  std::vector<double> params(size_t(spec.param_count()));
  nn::mlp_init(spec, params, rng);
  std::vector<double> in{0.1, 0.2, -0.3, 0.4};
  Tape t;
  Var y = nn::mlp_forward(t, spec, params, 0, t.constant(in), true);
  std::vector<double> first(t.value(y).begin(), t.value(y).end());
  t.replay_forward();
  std::vector<double> second(t.value(y).begin(), t.value(y).end());
  CHECK(std::memcmp(first.data(), second.data(), first.size() * sizeof(double)) == 0);
}

TEST_CASE("gradient of a set sum does not depend on summand order") {
  Rng rng(17);
  std::vector<std::vector<double>> members;
  for (int j = 0; j < 5; ++j) {
    std::vector<double> m(3);
    for (double& x : m) x = rng.uniform(-1, 1);
    members.push_back(m);
  }
  nn::MlpSpec spec = nn::MlpSpec::make({3, 6, 2}, nn::Act::Tanh, nn::Act::Linear);
  std::vector<double> params(size_t(spec.param_count()));
  nn::mlp_init(spec, params, rng);

  auto grad_for_order = [&](const std::vector<int>& order) {
    Tape t;
    Var acc = t.constant({std::vector<double>{0.0, 0.0}});
    for (int j : order)
      acc = t.add(acc, nn::mlp_forward(t, spec, params, 0, t.constant(members[size_t(j)]), true));
    std::vector<double> g(params.size(), 0.0);
    t.backward_scalar(t.sum(acc), g);
    return g;
  };
  std::vector<double> g1 = grad_for_order({0, 1, 2, 3, 4});
  std::vector<double> g2 = grad_for_order({4, 2, 0, 3, 1});
  for (size_t k = 0; k < g1.size(); ++k) CHECK(std::fabs(g1[k] - g2[k]) < 1e-9);
}

TEST_CASE("wrap keeps angles in (-pi, pi] with unit derivative") {
  Tape t;
  Var a = t.leaf_scalar(3.0 * M_PI, 0);
  Var y = t.wrap_angle(a);
  CHECK(t.scalar(y) == doctest::Approx(M_PI));
  std::vector<double> g(1, 0.0);
  t.backward_scalar(y, g);
  CHECK(g[0] == 1.0);
  CHECK(ad::wrap_angle_value(M_PI) == doctest::Approx(M_PI));
  CHECK(ad::wrap_angle_value(-M_PI) == doctest::Approx(M_PI));
  CHECK(ad::wrap_angle_value(0.25) == doctest::Approx(0.25));
}

TEST_CASE("finite differences confirm a quadratic's gradient tightly") {
  std::vector<double> p{0.5, -1.5, 2.0};
  auto f = [](std::span<const double> q) {
    double s = 0.0;
    for (double x : q) s += x * x;
    return s;
  };
  std::vector<double> analytic{1.0, -3.0, 4.0};
  FdReport rep = finite_diff_check(f, p, analytic, 1e-5);
  CHECK(rep.finite);
  CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("finite difference check reports a non-finite objective") {
  std::vector<double> p{1.0, 0.0};
  auto f = [](std::span<const double> q) { return 1.0 / q[1]; };
  std::vector<double> analytic{0.0, 0.0};
  FdReport rep = finite_diff_check(f, p, analytic, 1e-3);
  CHECK_FALSE(rep.finite);
  CHECK(rep.bad_index == 0);  // index 0 perturbed first, q[1]=0 still divides
}

TEST_CASE("gradient descent step: theta=1, g=2, lr=0.1 gives 0.8") {
  Optimizer opt(OptKind::Sgd, 1);
  std::vector<double> p{1.0};
  std::vector<double> g{2.0};
  opt.step(p, g, 0.1);
  CHECK(p[0] == doctest::Approx(0.8));
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  Optimizer opt(OptKind::Sgd, 3);
  std::vector<double> p{1.0, -2.0, 0.5};
  std::vector<double> g{0.0, 0.0, 0.0};
  opt.step(p, g, 0.7);
  CHECK(p == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("two descent steps on f = theta^2 from 1 with lr 0.25") {
  Optimizer opt(OptKind::Sgd, 1);
  std::vector<double> p{1.0};
  std::vector<double> g{2.0 * p[0]};
  opt.step(p, g, 0.25);
  CHECK(p[0] == doctest::Approx(0.5));
  g[0] = 2.0 * p[0];
  opt.step(p, g, 0.25);
  CHECK(p[0] == doctest::Approx(0.25));
}

TEST_CASE("non-finite gradient skips the step and is counted") {
  Optimizer opt(OptKind::Sgd, 2);
  std::vector<double> p{1.0, 2.0};
  std::vector<double> g{1.0, std::nan("")};
  opt.step(p, g, 0.1);
  CHECK(p == std::vector<double>{1.0, 2.0});
  CHECK(opt.skipped() == 1);
}

TEST_CASE("adaptive-moment step is approximately signed for the first update") {
  Optimizer opt(OptKind::Adam, 1);
  std::vector<double> p{1.0};
  std::vector<double> g{2.0};
  opt.step(p, g, 0.1);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("soft update blends target toward source") {
  ParameterSet ps;
  ps.add_slice("target", 3);
  ps.add_slice("source", 3);
  auto t = ps.slice("target");
  auto s = ps.slice("source");
  s[0] = 1.0;
  s[1] = 1.0;
  s[2] = 1.0;

  ps.soft_update("target", "source", 0.005);
  CHECK(t[0] == doctest::Approx(0.005));

  ps.soft_update("target", "source", 1.0);
  CHECK(t[0] == 1.0);
  CHECK(t[1] == 1.0);

  // Idempotent once equal.
  ps.soft_update("target", "source", 0.3);
  CHECK(t[2] == 1.0);
}

TEST_CASE("checkpoint round-trips sections bit-exactly") {
  Checkpoint ck;
  Rng rng(23);
  std::vector<double> a(64), b(7);
  for (double& x : a) x = rng.normal() * 1e8;
  for (double& x : b) x = rng.uniform(-1e-12, 1e-12);
  b[3] = -0.0;
  ck.add("policy", a);
  ck.add("rng_state", b);

  std::string path = (std::filesystem::temp_directory_path() / "cmpg_ck_test.bin").string();
  ck.save(path);
  Checkpoint back = Checkpoint::load(path);
  REQUIRE(back.sections.size() == 2);
  CHECK(back.sections[0].first == "policy");
  CHECK(std::memcmp(back.require("policy").data(), a.data(), a.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(back.require("rng_state").data(), b.data(), b.size() * sizeof(double)) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint load rejects foreign and truncated files") {
  std::string path = (std::filesystem::temp_directory_path() / "cmpg_bad_ck.bin").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(Checkpoint::load(path), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(Checkpoint::load("/nonexistent/nowhere.bin"), ConfigError);
}

TEST_CASE("rng streams are deterministic and serializable") {
  Rng a = Rng::stream(99, 1);
  Rng b = Rng::stream(99, 1);
  for (int k = 0; k < 100; ++k) CHECK(a.next_u64() == b.next_u64());

  Rng c = Rng::stream(99, 2);
  auto st = c.state();
  double v1 = c.normal();
  Rng d(0);
  d.set_state(st);
  CHECK(d.normal() == v1);

  // Distinct streams differ.
  Rng e = Rng::stream(99, 1), f = Rng::stream(99, 3);
  CHECK(e.next_u64() != f.next_u64());
}

TEST_CASE("empty tape refuses a backward pass") {
  Tape t;
  std::vector<double> g(1, 0.0);
  double one = 1.0;
  CHECK_THROWS_AS(t.backward(Var{&t, -1}, std::span<const double>(&one, 1), g), UsageError);
}

TEST_CASE("mismatched affine shapes are rejected") {
  Tape t;
  Var w = t.constant({std::vector<double>{1.0, 2.0}});
  Var b = t.constant_scalar(0.0);
  Var x = t.constant_scalar(1.0);
  CHECK_THROWS_AS(t.affine(w, b, x, 1), ConfigError);  // W has 2 entries, needs 1
}
