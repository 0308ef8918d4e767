#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace unigs {

// Thrown when a caller violates a documented precondition. Distinct from
// std::runtime_error so tests can tell contract breaks from IO failures.
struct ContractError : std::invalid_argument {
  explicit ContractError(const std::string& msg) : std::invalid_argument(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

// Numeric mode for the whole engine. f64 is the default; f32 rounds every op
// output (and parameter update) through float so accumulation order still
// matches the f64 path bit-for-bit at float precision.
enum class DType { f64, f32 };

DType default_dtype();
void set_default_dtype(DType d);

inline double to_storage_scalar(double v, DType d) {
  return d == DType::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

void round_to_storage(std::vector<double>& v);

struct DTypeScope {
  DType prev;
  explicit DTypeScope(DType d) : prev(default_dtype()) { set_default_dtype(d); }
  ~DTypeScope() { set_default_dtype(prev); }
};

// Deterministic seeding. Every stochastic subsystem derives its own stream
// from (seed, stream id) so adding RNG draws in one place never shifts
// another. splitmix64 finalizer.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(mix_seed(seed, stream));
}

// Fault injection for exercising the self-check harness. None in normal runs.
enum class Fault { none, softmax_axis };

Fault injected_fault();
void set_injected_fault(Fault f);

}  // namespace unigs
