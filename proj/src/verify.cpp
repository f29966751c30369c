#include "cmpg/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "cmpg/errors.hpp"
#include "cmpg/set_encoding.hpp"
#include "cmpg/trainer.hpp"

namespace cmpg {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kTolNets = 1e-4;
constexpr double kTolBptt = 1e-3;

double rel_err(double analytic, double fd) {
  double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
  return std::abs(analytic - fd) / denom;
}

std::string line(const char* name, int probes, double worst, double tol, bool ok) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-22s %4d probes  max rel err %.3e  (tol %.0e)  %s\n", name,
                probes, worst, tol, ok ? "ok" : "FAIL");
  return buf;
}

// Uniformly random parameter coordinate within a named slice.
int pick_coord(const ParameterSet& P, const std::string& name, Rng& rng) {
  const auto& s = P.info(name);
  return s.offset + rng.uniform_int(s.count);
}

}  // namespace

VerifyResult run_verify(const FullConfig& cfg, const std::string& suite, uint64_t seed,
                        int points) {
  bool do_grad = suite == "gradients" || suite == "all";
  bool do_inj = suite == "injectivity" || suite == "all";
  if (!do_grad && !do_inj)
    throw UsageError("verify: unknown suite '" + suite +
                     "' (expected gradients, injectivity, or all)");
  if (points < 4) throw UsageError("verify: probe budget must be at least 4");

  auto t_start = std::chrono::steady_clock::now();
  VerifyResult res;
  res.pass = true;

  if (do_grad) {
    FullConfig vcfg = cfg;
    // The probes only need a few hundred transitions; keep the buffer small
    // so verification is cheap under any training configuration.
    vcfg.trainer.buffer_capacity = std::min<long>(vcfg.trainer.buffer_capacity, 4096);
    Trainer tr(vcfg, seed);
    tr.collect_steps(std::min<long>(360, vcfg.trainer.buffer_capacity));

    int batch = std::min(24, tr.buffer().size());
    std::vector<int> idx;
    for (int i = 0; i < batch; ++i) idx.push_back(i);
    std::vector<int> idx_m;
    for (int i = 0; i < std::min(3, tr.buffer().size()); ++i) idx_m.push_back(i);

    auto& P = tr.agent().params();
    auto params = P.data();
    size_t n = size_t(P.size());
    Rng rng = Rng::stream(seed, 77);
    bool has_enc = tr.agent().has_encoder_params();

    int n_bptt = points * 3 / 10;
    int n_critic = points * 3 / 10;
    int n_data = points - n_bptt - n_critic;

    // Replayed-data path: policy and encoder parameters through the frozen
    // first critics.
    {
      std::vector<double> gr(n, 0.0), gc(n, 0.0);
      tr.data_gradient(idx, gr, gc);
      double worst = 0.0;
      for (int k = 0; k < n_data; ++k) {
        bool cost = (k % 2) == 1;
        std::string slice = has_enc && (k % 3 == 2) ? "phi" : "theta";
        int j = pick_coord(P, slice, rng);
        double save = params[size_t(j)];
        params[size_t(j)] = save + kFdStep;
        double fp = tr.data_objective(idx, cost);
        params[size_t(j)] = save - kFdStep;
        double fm = tr.data_objective(idx, cost);
        params[size_t(j)] = save;
        double fd = (fp - fm) / (2.0 * kFdStep);
        worst = std::max(worst, rel_err(cost ? gc[size_t(j)] : gr[size_t(j)], fd));
      }
      bool ok = worst < kTolNets;
      res.report += line("gradients/data-path", n_data, worst, kTolNets, ok);
      res.checks += n_data;
      if (!ok) ++res.failures;
      res.max_rel_nets = std::max(res.max_rel_nets, worst);
    }

    // Critic regression path against fixed targets.
    {
      std::vector<double> y_r, y_c;
      tr.critic_targets(idx, y_r, y_c);
      std::vector<double> g(n, 0.0);
      tr.critic_loss_grad(idx, y_r, y_c, g);
      const char* slices[4] = {"qr1", "qr2", "qc1", "qc2"};
      double worst = 0.0;
      for (int k = 0; k < n_critic; ++k) {
        int j = pick_coord(P, slices[k % 4], rng);
        double save = params[size_t(j)];
        params[size_t(j)] = save + kFdStep;
        double fp = tr.critic_loss_value(idx, y_r, y_c);
        params[size_t(j)] = save - kFdStep;
        double fm = tr.critic_loss_value(idx, y_r, y_c);
        params[size_t(j)] = save;
        double fd = (fp - fm) / (2.0 * kFdStep);
        worst = std::max(worst, rel_err(g[size_t(j)], fd));
      }
      bool ok = worst < kTolNets;
      res.report += line("gradients/critic", n_critic, worst, kTolNets, ok);
      res.checks += n_critic;
      if (!ok) ++res.failures;
      res.max_rel_nets = std::max(res.max_rel_nets, worst);
    }

    // Model rollout path: policy and encoder parameters through the unrolled
    // dynamics, costs, and the bootstrap critic.
    {
      std::vector<double> gr(n, 0.0), gc(n, 0.0);
      tr.model_gradient(idx_m, gr, gc);
      double worst = 0.0;
      for (int k = 0; k < n_bptt; ++k) {
        bool cost = (k % 2) == 1;
        std::string slice = has_enc && (k % 3 == 2) ? "phi" : "theta";
        int j = pick_coord(P, slice, rng);
        double save = params[size_t(j)];
        params[size_t(j)] = save + kFdStep;
        double fp = tr.model_objective(idx_m, cost);
        params[size_t(j)] = save - kFdStep;
        double fm = tr.model_objective(idx_m, cost);
        params[size_t(j)] = save;
        double fd = (fp - fm) / (2.0 * kFdStep);
        worst = std::max(worst, rel_err(cost ? gc[size_t(j)] : gr[size_t(j)], fd));
      }
      bool ok = worst < kTolBptt;
      res.report += line("gradients/rollout", n_bptt, worst, kTolBptt, ok);
      res.checks += n_bptt;
      if (!ok) ++res.failures;
      res.max_rel_bptt = std::max(res.max_rel_bptt, worst);
    }
  }

  if (do_inj) {
    const double grid5[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
    enc::InjectivityReport r1 = enc::certify_sum_of_power(grid5, 3, 0.0, 1.0, 3);
    res.report += r1.summary() + "\n";
    ++res.checks;
    if (!r1.pass) ++res.failures;

    const double grid3[3] = {0.0, 0.5, 1.0};
    enc::InjectivityReport r2 = enc::certify_dyn_set_map(grid3, 2, 2, 0.0, 1.0, 2);
    res.report += r2.summary() + "\n";
    ++res.checks;
    if (!r2.pass) ++res.failures;

    // Pooling-construction identity: per-member embeddings scaled against
    // the attention weights must reproduce the set map under weighted sum.
    Rng rng = Rng::stream(seed, 99);
    const int kSets = 1000, kDeg = 3, kDim = 2;
    double worst = 0.0;
    for (int t = 0; t < kSets; ++t) {
      int m_count = 1 + rng.uniform_int(3);
      enc::FeatureSet set;
      for (int j = 0; j < m_count; ++j) {
        enc::Feature f;
        for (int d = 0; d < kDim; ++d) f.push_back(rng.uniform());
        set.push_back(std::move(f));
      }
      std::vector<double> w;
      double wsum = 0.0;
      for (int j = 0; j < m_count; ++j) {
        w.push_back(rng.uniform(0.1, 1.0));
        wsum += w.back();
      }
      for (double& v : w) v /= wsum;
      enc::FeatureSet h = enc::constructed_h(set, 0.0, 1.0, kDeg, w);
      std::vector<double> target = enc::dyn_set_map(set, 0.0, 1.0, kDeg);
      std::vector<double> pooled(target.size(), 0.0);
      for (int j = 0; j < m_count; ++j)
        for (size_t d = 0; d < pooled.size(); ++d) pooled[d] += w[size_t(j)] * h[size_t(j)][d];
      for (size_t d = 0; d < pooled.size(); ++d)
        worst = std::max(worst, std::abs(pooled[d] - target[d]));
    }
    bool ok = worst < 1e-9;
    res.report += line("injectivity/pooling", kSets, worst, 1e-9, ok);
    ++res.checks;
    if (!ok) ++res.failures;
  }

  res.pass = res.failures == 0;
  res.wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

}  // namespace cmpg
