#ifndef RULRL_COMMON_HPP
#define RULRL_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rulrl {

constexpr int kNumSettings = 3;
constexpr int kNumSensors = 21;

/// Malformed input text. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Input that parsed but breaks a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure (non-finite loss, division guard, undefined metric).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// FNV-1a over bytes; stable across platforms and runs.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive an independent seed from a parent seed and a key.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t key) {
  return splitmix64(parent ^ splitmix64(key + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) {
  return derive_seed(parent, fnv1a(tag));
}

template <typename... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t k0, std::uint64_t k1, Keys... rest) {
  return derive_seed(derive_seed(parent, k0), k1, rest...);
}

using Rng = std::mt19937_64;

/// Uniform draw on [lo, hi]; returns lo exactly when the interval is degenerate
/// so zero-jitter cost models stay exact.
inline double uniform(Rng& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// %.17g formatting: shortest form that still round-trips a double.
std::string format_exact(double v);

/// Parse a double from the whole of `token`; throws ParseError on failure.
double parse_double(std::string_view token, std::size_t line);

/// Worker count from RULRL_THREADS, falling back to hardware concurrency.
unsigned worker_count();

/// Run body(i) for i in [0, n) on up to worker_count() threads. Each index is
/// processed exactly once; results must be written to index-addressed slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace rulrl

#endif  // RULRL_COMMON_HPP
