#include "esaw/param_vector.hpp"

namespace esaw {

void axpy(ParameterVector& dst, double a, const ParameterVector& x) {
  require_same_size(dst, x, "axpy");
  double* d = dst.data();
  const double* s = x.data();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) {
    d[i] += a * s[i];
  }
}

double l2_norm(const ParameterVector& x) {
  double acc = 0.0;
  for (double v : x) {
    acc += v * v;
  }
  return std::sqrt(acc);
}

double squared_distance(const ParameterVector& a, const ParameterVector& b) {
  require_same_size(a, b, "squared_distance");
  double acc = 0.0;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

double l2_distance(const ParameterVector& a, const ParameterVector& b) {
  return std::sqrt(squared_distance(a, b));
}

bool all_finite(const ParameterVector& x) {
  for (double v : x) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

}  // namespace esaw
