#include "twoscale/rng.hpp"

#include <cmath>
#include <numbers>

namespace twoscale {

std::uint64_t derive_key(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t key = mix64(root);
  for (std::uint64_t tag : path) key = derive_key(key, tag);
  return key;
}

double CounterRng::exponential(double rate) noexcept {
  return -std::log(uniform_open_low()) / rate;
}

double CounterRng::normal() noexcept {
  const double u1 = uniform_open_low();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace twoscale
