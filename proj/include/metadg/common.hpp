#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace metadg {

// Process exit codes used by the CLI. Library code throws the matching
// exception type; main() translates.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Global compute precision. f64 everywhere by default; f32 rounds the output
// of every forward op (and optimizer writes) to float, simulating 32-bit
// training on double storage. Verification tooling requires f64.
enum class Precision { f64, f32 };

Precision default_precision();
void set_default_precision(Precision p);

// Finite checks after every forward op. On by default; the cost is
// negligible at the tensor sizes this engine targets.
bool finite_checks_enabled();
void set_finite_checks(bool on);

void log_warn(const std::string& msg);
void set_quiet_logging(bool quiet);

// Rounds through float when the global precision is f32; identity in f64.
// Every optimizer and EMA state write goes through this.
double store_rounded(double x);

// FNV-1a over raw bytes. Used for parameter-isolation checks.
std::uint64_t fnv1a(const void* data, std::size_t len);
std::uint64_t fnv1a_mix(std::uint64_t h, const void* data, std::size_t len);
std::uint64_t fnv1a_mix(std::uint64_t h, std::uint64_t value);

// Shortest round-trip formatting for doubles ("%.17g"), used for every
// numeric value written to CSV/TSV so reruns are byte-comparable.
std::string format_double(double v);

}  // namespace metadg
