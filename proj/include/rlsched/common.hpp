#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rlsched {

// Malformed input document (bad JSON, missing field, wrong type).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid input that violates a domain constraint.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// No feasible plan/config exists for the given resources.
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

// The compute-fraction band admits no bisection; caller may widen and retry.
class BandInfeasibleError : public InfeasibleError {
 public:
  explicit BandInfeasibleError(const std::string& msg) : InfeasibleError(msg) {}
};

// A plan was produced against different inputs (fingerprint mismatch).
class MismatchError : public ValidationError {
 public:
  explicit MismatchError(const std::string& msg) : ValidationError(msg) {}
};

constexpr double kInf = 1e30;

inline bool nearly_equal(double a, double b, double rel_tol) {
  double scale = std::max(std::abs(a), std::abs(b));
  return std::abs(a - b) <= rel_tol * std::max(scale, 1e-300);
}

// FNV-1a, used for content fingerprints of input documents.
inline std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string fingerprint_hex(const std::string& data) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a(data);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

// Deterministic xorshift-based generator. Stream layout is pinned by the
// tests, so we do not rely on libstdc++ distribution internals.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

 private:
  std::uint64_t state_;
};

}  // namespace rlsched
