#include "esaw/noise.hpp"

#include <cmath>
#include <numbers>

namespace esaw {

namespace detail {

void normal_pair(std::uint64_t base, std::uint64_t pair_index, double& z0, double& z1) {
  const double u1 = to_unit_open(stream_word(base, 2 * pair_index));
  const double u2 = to_unit_open(stream_word(base, 2 * pair_index + 1));
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  z0 = r * std::cos(phi);
  z1 = r * std::sin(phi);
}

}  // namespace detail

std::uint64_t noise_stream_base(const NoiseKey& key) {
  return derive_seed(key.run_seed, detail::kNoiseStream, key.iteration, key.member_index);
}

ParameterVector sample_noise(const NoiseKey& key, std::size_t d) {
  ParameterVector out(d);
  for_each_normal(key, d, [&](std::size_t i, double z) { out[i] = z; });
  return out;
}

double standard_normal_at(std::uint64_t base, std::uint64_t i) {
  double z0 = 0.0, z1 = 0.0;
  detail::normal_pair(base, i, z0, z1);
  return z0;
}

double uniform_at(std::uint64_t base, std::uint64_t i) {
  return detail::to_unit_open(detail::stream_word(base, i));
}

}  // namespace esaw
