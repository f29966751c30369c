#include "cmpg/optim.hpp"

#include <cmath>
#include <string>

#include "cmpg/errors.hpp"

namespace cmpg {

void Optimizer::step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size() || int(params.size()) != n_)
    throw ConfigError("optimizer: gradient not aligned with parameters");
  for (double g : grads) {
    if (!std::isfinite(g)) {
      ++skipped_;
      return;
    }
  }
  if (kind_ == OptKind::Sgd) {
    for (size_t k = 0; k < params.size(); ++k) params[k] -= lr * grads[k];
    return;
  }
  ++t_;
  double bc1 = 1.0 - std::pow(kBeta1, double(t_));
  double bc2 = 1.0 - std::pow(kBeta2, double(t_));
  for (size_t k = 0; k < params.size(); ++k) {
    m_[k] = kBeta1 * m_[k] + (1.0 - kBeta1) * grads[k];
    v_[k] = kBeta2 * v_[k] + (1.0 - kBeta2) * grads[k] * grads[k];
    double mhat = m_[k] / bc1;
    double vhat = v_[k] / bc2;
    params[k] -= lr * mhat / (std::sqrt(vhat) + kEps);
  }
}

std::vector<double> Optimizer::state() const {
  if (kind_ == OptKind::Sgd) return {};
  std::vector<double> s;
  s.reserve(1 + m_.size() + v_.size());
  s.push_back(double(t_));
  s.insert(s.end(), m_.begin(), m_.end());
  s.insert(s.end(), v_.begin(), v_.end());
  return s;
}

void Optimizer::set_state(std::span<const double> s) {
  if (kind_ == OptKind::Sgd) {
    if (!s.empty()) throw ConfigError("optimizer: SGD carries no state");
    return;
  }
  if (s.size() != 1 + m_.size() + v_.size())
    throw ConfigError("optimizer: state size mismatch");
  t_ = long(s[0]);
  for (size_t k = 0; k < m_.size(); ++k) m_[k] = s[1 + k];
  for (size_t k = 0; k < v_.size(); ++k) v_[k] = s[1 + m_.size() + k];
}

OptKind opt_kind_from_name(const std::string& name) {
  if (name == "sgd") return OptKind::Sgd;
  if (name == "adam") return OptKind::Adam;
  throw ConfigError("optimizer: unknown kind '" + name + "' (expected sgd or adam)");
}

}  // namespace cmpg
