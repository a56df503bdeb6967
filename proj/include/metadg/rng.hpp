#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace metadg {

// Deterministic random stream. All sampling goes through the hand-rolled
// helpers below rather than std distributions, so byte-identical outputs do
// not depend on the standard library implementation.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);

  // Inclusive range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01();

  // Box-Muller with cached spare.
  double normal(double mean = 0.0, double stddev = 1.0);

  // k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // State round-trip for checkpoint resume.
  std::string serialize() const;
  void deserialize(const std::string& s);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace metadg
