#pragma once

#include <cmath>

#include "cmpg/tape.hpp"

// Double-precision mirrors of the tape's scalar vocabulary so simulator
// kernels can be written once and instantiated for both double (environment
// stepping) and ad::Var (differentiable model rollouts).
namespace cmpg::sm {

using std::atan;
using std::cos;
using std::sin;
using std::sqrt;
using std::tan;
using std::tanh;

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double square(double x) { return x * x; }
inline double abs2(double x) { return std::fabs(x); }
inline double max2(double a, double b) { return a > b ? a : b; }
inline double min2(double a, double b) { return a < b ? a : b; }
inline double wrap_angle(double x) { return ad::wrap_angle_value(x); }

}  // namespace cmpg::sm
