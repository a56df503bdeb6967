#pragma once

#include <cstdint>
#include <string>

#include "metadg/engine.hpp"

namespace metadg {

struct CheckpointMeta {
  int version = 0;
  std::int64_t iter = 0;
  std::string config_echo;
};

// Writes the full training state: a one-line JSON header (version, shapes,
// rng state, optimizer step, config echo) followed by every tensor's values
// as little-endian 64-bit floats in header order.
void save_checkpoint(const std::string& path, const TrainState& state, const TrainConfig& cfg,
                     const std::string& config_echo);

// Restores a state for the given config. Structural mismatches between the
// file and the config (dims, flags, version) are rejected; hyperparameter
// scalars always come from the config.
TrainState load_checkpoint(const std::string& path, const TrainConfig& cfg,
                           CheckpointMeta* meta = nullptr);

}  // namespace metadg
