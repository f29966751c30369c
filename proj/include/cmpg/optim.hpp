#pragma once

#include <span>
#include <string>
#include <vector>

namespace cmpg {

enum class OptKind { Sgd, Adam };

// First-order optimizer over one parameter slice. A step whose gradient has
// any non-finite component is skipped and counted instead of applied.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptKind kind, int n) : kind_(kind) {
    if (kind == OptKind::Adam) {
      m_.assign(size_t(n), 0.0);
      v_.assign(size_t(n), 0.0);
    }
    n_ = n;
  }

  // Gradient DESCENT: params -= lr * step_direction(grads).
  void step(std::span<double> params, std::span<const double> grads, double lr);

  int skipped() const { return skipped_; }
  OptKind kind() const { return kind_; }

  // Moment state for checkpointing: [t, m..., v...] for Adam, [] for SGD.
  std::vector<double> state() const;
  void set_state(std::span<const double> s);

 private:
  OptKind kind_ = OptKind::Sgd;
  int n_ = 0;
  std::vector<double> m_, v_;
  long t_ = 0;
  int skipped_ = 0;

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
};

OptKind opt_kind_from_name(const std::string& name);

}  // namespace cmpg
