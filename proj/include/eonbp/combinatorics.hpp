#pragma once

#include <cstdint>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

namespace eonbp {

// Exact integer arithmetic for the state-counting formulas. Ratios such as
// |NB(x,k)| / |Omega_S(x)| at C = 200 involve binomials far beyond 64 bits,
// so everything stays in arbitrary precision until the final conversion to
// a probability.
using BigInt = boost::multiprecision::cpp_int;

// C(a, b) with the vanishing convention: 0 whenever a < 0, b < 0 or b > a.
// The inclusion-exclusion sums rely on out-of-range terms dropping out.
inline BigInt binomial(std::int64_t a, std::int64_t b) {
  if (b < 0 || a < 0 || b > a) return 0;
  if (b > a - b) b = a - b;
  BigInt result = 1;
  for (std::int64_t i = 1; i <= b; ++i) {
    result *= a - b + i;
    result /= i;  // exact: product of i consecutive integers is divisible by i!
  }
  return result;
}

// (sum parts)! / prod(parts[i]!), via a telescoping product of binomials.
inline BigInt multinomial(const std::vector<int>& parts) {
  BigInt result = 1;
  std::int64_t running = 0;
  for (int p : parts) {
    running += p;
    result *= binomial(running, p);
  }
  return result;
}

inline double ratio_as_double(const BigInt& num, const BigInt& den) {
  using Float = boost::multiprecision::cpp_bin_float_50;
  if (den == 0) return 0.0;
  return static_cast<double>(Float(num) / Float(den));
}

}  // namespace eonbp
