#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "esaw/errors.hpp"

namespace esaw {

// Flat vector of 64-bit weights. Length is fixed at construction; all
// arithmetic helpers below preserve it.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::size_t d, double fill = 0.0) : values_(d, fill) {}
  explicit ParameterVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }

  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const ParameterVector& a, const ParameterVector& b) {
    return a.values_ == b.values_;
  }

 private:
  std::vector<double> values_;
};

// dst += a * x
void axpy(ParameterVector& dst, double a, const ParameterVector& x);

double l2_norm(const ParameterVector& x);

// ||a - b||_2 without materializing the difference.
double l2_distance(const ParameterVector& a, const ParameterVector& b);

// ||a - b||_2^2
double squared_distance(const ParameterVector& a, const ParameterVector& b);

bool all_finite(const ParameterVector& x);

inline void require_same_size(const ParameterVector& a, const ParameterVector& b,
                              const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": length mismatch (" +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

}  // namespace esaw
