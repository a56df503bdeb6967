#include "metadg/common.hpp"

#include <cstring>

namespace metadg {

namespace {
Precision g_precision = Precision::f64;
bool g_finite_checks = true;
bool g_quiet = false;
}  // namespace

Precision default_precision() { return g_precision; }
void set_default_precision(Precision p) { g_precision = p; }

bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks(bool on) { g_finite_checks = on; }

void log_warn(const std::string& msg) {
  if (!g_quiet) std::fprintf(stderr, "[warn] %s\n", msg.c_str());
}

void set_quiet_logging(bool quiet) { g_quiet = quiet; }

std::uint64_t fnv1a_mix(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a_mix(std::uint64_t h, std::uint64_t value) {
  return fnv1a_mix(h, &value, sizeof(value));
}

std::uint64_t fnv1a(const void* data, std::size_t len) {
  return fnv1a_mix(14695981039346656037ULL, data, len);
}

double store_rounded(double x) {
  if (default_precision() == Precision::f32) return static_cast<double>(static_cast<float>(x));
  return x;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace metadg
