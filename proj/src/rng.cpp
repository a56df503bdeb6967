#include "metadg/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace metadg {

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::below: n must be > 0");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw std::invalid_argument("RngStream::uniform_int: lo > hi");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(below(span));
}

double RngStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal(double mean, double stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * spare_;
  }
  double u1, u2;
  do {
    u1 = uniform01();
  } while (u1 <= 0.0);
  u2 = uniform01();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  const double z0 = mag * std::cos(2.0 * M_PI * u2);
  spare_ = mag * std::sin(2.0 * M_PI * u2);
  has_spare_ = true;
  return mean + stddev * z0;
}

std::vector<std::size_t> RngStream::sample_indices(std::size_t n, std::size_t k) {
  if (k > n) throw std::invalid_argument("RngStream::sample_indices: k > n");
  // Partial Fisher-Yates over an index array; first k slots are the sample.
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

std::string RngStream::serialize() const {
  std::ostringstream os;
  os << gen_;
  os << " " << (has_spare_ ? 1 : 0) << " ";
  os.precision(17);
  os << spare_;
  return os.str();
}

void RngStream::deserialize(const std::string& s) {
  std::istringstream is(s);
  is >> gen_;
  int spare_flag = 0;
  is >> spare_flag >> spare_;
  if (is.fail()) throw std::runtime_error("RngStream::deserialize: malformed state string");
  has_spare_ = spare_flag != 0;
}

}  // namespace metadg
