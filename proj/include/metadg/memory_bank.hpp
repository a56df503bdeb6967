#pragma once

#include <cstdint>
#include <vector>

#include "metadg/model.hpp"
#include "metadg/tape.hpp"
#include "metadg/text.hpp"

namespace metadg {

struct MemoryConfig {
  double momentum = 0.2;
  double tau = 0.05;
  bool renormalize = true;  // unit-normalize slots after each update
  int chunk = 64;           // encode batch size during initialization
};

// One class-prototype feature slot per (domain, class) cell. Slots change
// only through the momentum update below, never through gradients.
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(int domains, int classes, int feature_dim, MemoryConfig cfg);

  int domains() const { return domains_; }
  int classes() const { return classes_; }
  int feature_dim() const { return feature_dim_; }
  const MemoryConfig& config() const { return cfg_; }

  // classes x feature_dim slot matrix of one domain.
  const Tensor& slots(int domain) const;
  Tensor& slots(int domain);

  // Momentum update from a batch of features: for each class in `labels`,
  // slot <- m*slot + (1-m)*class_mean(features). Absent classes stay
  // untouched; m == 1 is an exact no-op.
  void update(const Tensor& features, const std::vector<int>& labels, int domain);

  std::uint64_t checksum() const;
  std::uint64_t domain_checksum(int domain) const;

 private:
  int domains_ = 0;
  int classes_ = 0;
  int feature_dim_ = 0;
  MemoryConfig cfg_;
  std::vector<Tensor> slots_;
};

// Mean-feature initialization over every (domain, class) cell, encoded with
// the given (initial) model in chunks.
MemoryBank init_memory(const ModelParams& params, const std::vector<DomainDataset>& datasets,
                       MemoryConfig cfg);

// Per-example softmax similarity loss against the domain's slots: logits are
// slot dot products over tau, target is the example's class. Gradient flows
// into `features` only.
Tensor memory_similarity_loss(Tape& t, const MemoryBank& bank, const Tensor& features,
                              const std::vector<int>& labels, int domain);

}  // namespace metadg
