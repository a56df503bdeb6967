#include "metadg/memory_bank.hpp"

#include <cmath>
#include <stdexcept>

#include "metadg/common.hpp"

namespace metadg {

MemoryBank::MemoryBank(int domains, int classes, int feature_dim, MemoryConfig cfg)
    : domains_(domains), classes_(classes), feature_dim_(feature_dim), cfg_(cfg) {
  if (domains < 1 || classes < 2 || feature_dim < 1) {
    throw ConfigError("MemoryBank: degenerate dimensions");
  }
  if (cfg_.momentum < 0.0 || cfg_.momentum > 1.0) {
    throw ConfigError("MemoryBank: momentum outside [0, 1]");
  }
  if (cfg_.tau <= 0.0) throw ConfigError("MemoryBank: temperature must be positive");
  slots_.reserve(static_cast<std::size_t>(domains));
  for (int d = 0; d < domains; ++d) slots_.push_back(Tensor::zeros({classes, feature_dim}));
}

const Tensor& MemoryBank::slots(int domain) const {
  if (domain < 0 || domain >= domains_) {
    throw std::out_of_range("MemoryBank: domain " + std::to_string(domain) + " out of range [0, " +
                            std::to_string(domains_) + ")");
  }
  return slots_[static_cast<std::size_t>(domain)];
}

Tensor& MemoryBank::slots(int domain) {
  return const_cast<Tensor&>(static_cast<const MemoryBank*>(this)->slots(domain));
}

void MemoryBank::update(const Tensor& features, const std::vector<int>& labels, int domain) {
  Tensor& slot_mat = slots(domain);
  if (features.shape().size() != 2 || features.shape()[1] != feature_dim_) {
    throw std::invalid_argument("MemoryBank::update: feature shape " +
                                shape_str(features.shape()) + " does not match slot dim " +
                                std::to_string(feature_dim_));
  }
  if (static_cast<std::int64_t>(labels.size()) != features.shape()[0]) {
    throw std::invalid_argument("MemoryBank::update: label count mismatch");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes_) {
      throw std::out_of_range("MemoryBank::update: label " + std::to_string(y) +
                              " out of range [0, " + std::to_string(classes_) + ")");
    }
  }
  if (cfg_.momentum == 1.0) return;  // exact fixed point, slots untouched

  const auto& fv = features.values();
  for (int c = 0; c < classes_; ++c) {
    std::vector<double> mean(static_cast<std::size_t>(feature_dim_), 0.0);
    int count = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != c) continue;
      const double* row = fv.data() + static_cast<std::int64_t>(i) * feature_dim_;
      for (int j = 0; j < feature_dim_; ++j) mean[static_cast<std::size_t>(j)] += row[j];
      ++count;
    }
    if (count == 0) continue;
    double* slot = slot_mat.data() + static_cast<std::int64_t>(c) * feature_dim_;
    const double m = cfg_.momentum;
    for (int j = 0; j < feature_dim_; ++j) {
      slot[j] = store_rounded(m * slot[j] + (1.0 - m) * mean[static_cast<std::size_t>(j)] / count);
    }
    if (cfg_.renormalize) {
      double sq = 0.0;
      for (int j = 0; j < feature_dim_; ++j) sq += slot[j] * slot[j];
      const double norm = std::sqrt(sq);
      if (norm >= 1e-12) {
        for (int j = 0; j < feature_dim_; ++j) slot[j] = store_rounded(slot[j] / norm);
      }
    }
  }
}

std::uint64_t MemoryBank::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& s : slots_) h = fnv1a_mix(h, s.checksum());
  return h;
}

std::uint64_t MemoryBank::domain_checksum(int domain) const { return slots(domain).checksum(); }

MemoryBank init_memory(const ModelParams& params, const std::vector<DomainDataset>& datasets,
                       MemoryConfig cfg) {
  if (datasets.empty()) throw ConfigError("init_memory: no datasets");
  MemoryBank bank(static_cast<int>(datasets.size()), params.dims.n_classes, params.dims.d_f, cfg);
  const int chunk = cfg.chunk > 0 ? cfg.chunk : 64;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const auto& ds = datasets[d];
    if (ds.by_class.size() != static_cast<std::size_t>(params.dims.n_classes)) {
      throw ConfigError("init_memory: domain " + std::to_string(ds.domain) +
                        " index not built for " + std::to_string(params.dims.n_classes) +
                        " classes");
    }
    Tensor& slot_mat = bank.slots(static_cast<int>(d));
    for (int c = 0; c < params.dims.n_classes; ++c) {
      const auto& members = ds.by_class[static_cast<std::size_t>(c)];
      if (members.empty()) {
        throw ConfigError("init_memory: domain " + std::to_string(ds.domain) + " class " +
                          std::to_string(c) + " has no examples");
      }
      std::vector<double> sum(static_cast<std::size_t>(params.dims.d_f), 0.0);
      for (std::size_t start = 0; start < members.size(); start += static_cast<std::size_t>(chunk)) {
        std::vector<std::vector<int>> batch;
        for (std::size_t i = start; i < members.size() && i < start + static_cast<std::size_t>(chunk);
             ++i) {
          batch.push_back(ds.examples[static_cast<std::size_t>(members[i])].tokens);
        }
        Tensor feats = encode_detached(params.encoder, batch, params.activation);
        const auto& fv = feats.values();
        for (std::size_t r = 0; r < batch.size(); ++r) {
          for (int j = 0; j < params.dims.d_f; ++j) {
            sum[static_cast<std::size_t>(j)] += fv[r * static_cast<std::size_t>(params.dims.d_f) +
                                                   static_cast<std::size_t>(j)];
          }
        }
      }
      double* slot = slot_mat.data() + static_cast<std::int64_t>(c) * params.dims.d_f;
      for (int j = 0; j < params.dims.d_f; ++j) {
        slot[j] = sum[static_cast<std::size_t>(j)] / static_cast<double>(members.size());
      }
    }
  }
  return bank;
}

Tensor memory_similarity_loss(Tape& t, const MemoryBank& bank, const Tensor& features,
                              const std::vector<int>& labels, int domain) {
  Tensor slots = t.constant(bank.slots(domain));
  Tensor logits = ops::scalar_mul(t, ops::matmul(t, features, ops::transpose(t, slots)),
                                  1.0 / bank.config().tau);
  return ops::cross_entropy_with_logits(t, logits, labels);
}

}  // namespace metadg
