#pragma once

#include <cstdint>
#include <vector>

#include "metadg/rng.hpp"
#include "metadg/tape.hpp"
#include "metadg/tensor.hpp"

namespace metadg {

// Per-class FIFO ring of unit feature vectors shared across domains. Entries
// come from the key encoder and are never differentiated through.
class JuryQueues {
 public:
  JuryQueues() = default;
  // Pre-fills every queue with random unit vectors so scoring works from the
  // first iteration.
  JuryQueues(int n_classes, int queue_len, int feature_dim, RngStream& rng);

  int classes() const { return static_cast<int>(buffers_.size()); }
  int queue_len() const { return queue_len_; }
  int feature_dim() const { return feature_dim_; }

  // queue_len x feature_dim ring storage of one class (rows in slot order,
  // not age order).
  const Tensor& buffer(int cls) const;
  Tensor& buffer(int cls);
  int cursor(int cls) const;
  void set_cursor(int cls, int value);

  // Appends each feature row to its label's queue in batch order, evicting
  // the oldest entry.
  void enqueue(const Tensor& features, const std::vector<int>& labels);

  // Row indices oldest-to-newest.
  std::vector<int> age_order(int cls) const;

  std::uint64_t checksum() const;

 private:
  int queue_len_ = 0;
  int feature_dim_ = 0;
  std::vector<Tensor> buffers_;
  std::vector<int> cursors_;
};

// Softmax over queue positions of dot(feature, entry)/tau for the class's
// queue. The detached variant is plain arithmetic for key-side targets.
Tensor score_query(Tape& t, const JuryQueues& queues, const Tensor& query_features, int row,
                   int cls, double tau);
std::vector<double> score_key(const JuryQueues& queues, const Tensor& key_features, int row,
                              int cls, double tau);

// Batch-mean cross-entropy from the key-side distribution (constant target)
// to the query-side distribution. Gradient reaches only `query_features`.
Tensor jury_loss(Tape& t, const JuryQueues& queues, const Tensor& query_features,
                 const Tensor& key_features, const std::vector<int>& labels, double tau);

}  // namespace metadg
