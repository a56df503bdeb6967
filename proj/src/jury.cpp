#include "metadg/jury.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "metadg/common.hpp"

namespace metadg {

JuryQueues::JuryQueues(int n_classes, int queue_len, int feature_dim, RngStream& rng)
    : queue_len_(queue_len), feature_dim_(feature_dim) {
  if (n_classes < 2 || queue_len < 1 || feature_dim < 1) {
    throw ConfigError("JuryQueues: degenerate dimensions");
  }
  buffers_.reserve(static_cast<std::size_t>(n_classes));
  cursors_.assign(static_cast<std::size_t>(n_classes), 0);
  for (int c = 0; c < n_classes; ++c) {
    Tensor buf = Tensor::zeros({queue_len, feature_dim});
    double* data = buf.data();
    for (int j = 0; j < queue_len; ++j) {
      double* row = data + static_cast<std::int64_t>(j) * feature_dim;
      double sq = 0.0;
      for (int k = 0; k < feature_dim; ++k) {
        row[k] = rng.normal();
        sq += row[k] * row[k];
      }
      const double norm = std::sqrt(sq);
      if (norm < 1e-12) {
        row[0] = 1.0;
      } else {
        for (int k = 0; k < feature_dim; ++k) row[k] /= norm;
      }
    }
    buffers_.push_back(std::move(buf));
  }
}

const Tensor& JuryQueues::buffer(int cls) const {
  if (cls < 0 || cls >= classes()) {
    throw std::out_of_range("JuryQueues: class " + std::to_string(cls) + " out of range [0, " +
                            std::to_string(classes()) + ")");
  }
  return buffers_[static_cast<std::size_t>(cls)];
}

Tensor& JuryQueues::buffer(int cls) {
  return const_cast<Tensor&>(static_cast<const JuryQueues*>(this)->buffer(cls));
}

int JuryQueues::cursor(int cls) const {
  buffer(cls);  // range check
  return cursors_[static_cast<std::size_t>(cls)];
}

void JuryQueues::set_cursor(int cls, int value) {
  buffer(cls);
  if (value < 0 || value >= queue_len_) {
    throw std::out_of_range("JuryQueues: cursor " + std::to_string(value) + " out of range [0, " +
                            std::to_string(queue_len_) + ")");
  }
  cursors_[static_cast<std::size_t>(cls)] = value;
}

void JuryQueues::enqueue(const Tensor& features, const std::vector<int>& labels) {
  if (features.shape().size() != 2 || features.shape()[1] != feature_dim_) {
    throw std::invalid_argument("JuryQueues::enqueue: feature shape " +
                                shape_str(features.shape()) + " does not match queue dim " +
                                std::to_string(feature_dim_));
  }
  if (static_cast<std::int64_t>(labels.size()) != features.shape()[0]) {
    throw std::invalid_argument("JuryQueues::enqueue: label count mismatch");
  }
  for (int y : labels) buffer(y);  // range check before any mutation
  const auto& fv = features.values();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    int& cur = cursors_[static_cast<std::size_t>(c)];
    double* row = buffer(c).data() + static_cast<std::int64_t>(cur) * feature_dim_;
    std::memcpy(row, fv.data() + static_cast<std::int64_t>(i) * feature_dim_,
                sizeof(double) * static_cast<std::size_t>(feature_dim_));
    cur = (cur + 1) % queue_len_;
  }
}

std::vector<int> JuryQueues::age_order(int cls) const {
  const int cur = cursor(cls);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(queue_len_));
  for (int j = 0; j < queue_len_; ++j) order.push_back((cur + j) % queue_len_);
  return order;
}

std::uint64_t JuryQueues::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t c = 0; c < buffers_.size(); ++c) {
    h = fnv1a_mix(h, buffers_[c].checksum());
    h = fnv1a_mix(h, static_cast<std::uint64_t>(cursors_[c]));
  }
  return h;
}

Tensor score_query(Tape& t, const JuryQueues& queues, const Tensor& query_features, int row,
                   int cls, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("score_query: temperature must be positive");
  Tensor feature = ops::gather_rows(t, query_features, {row});
  Tensor queue_t = ops::transpose(t, t.constant(queues.buffer(cls)));
  return ops::softmax_rows(t, ops::scalar_mul(t, ops::matmul(t, feature, queue_t), 1.0 / tau));
}

std::vector<double> score_key(const JuryQueues& queues, const Tensor& key_features, int row,
                              int cls, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("score_key: temperature must be positive");
  const Tensor& buf = queues.buffer(cls);
  const int n = queues.queue_len();
  const int dim = queues.feature_dim();
  if (key_features.shape().size() != 2 || key_features.shape()[1] != dim) {
    throw std::invalid_argument("score_key: feature shape " + shape_str(key_features.shape()) +
                                " does not match queue dim " + std::to_string(dim));
  }
  const double* feat = key_features.values().data() + static_cast<std::int64_t>(row) * dim;
  std::vector<double> logits(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const double* entry = buf.values().data() + static_cast<std::int64_t>(j) * dim;
    double dot = 0.0;
    for (int k = 0; k < dim; ++k) dot += entry[k] * feat[k];
    logits[static_cast<std::size_t>(j)] = dot / tau;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - mx);
    denom += l;
  }
  for (auto& l : logits) l /= denom;
  return logits;
}

Tensor jury_loss(Tape& t, const JuryQueues& queues, const Tensor& query_features,
                 const Tensor& key_features, const std::vector<int>& labels, double tau) {
  if (!same_shape(query_features, key_features)) {
    throw std::invalid_argument("jury_loss: query shape " + shape_str(query_features.shape()) +
                                " vs key shape " + shape_str(key_features.shape()));
  }
  const std::int64_t batch = query_features.shape()[0];
  if (static_cast<std::int64_t>(labels.size()) != batch) {
    throw std::invalid_argument("jury_loss: label count mismatch");
  }
  const int n_queue = queues.queue_len();
  // Transposed queue constants are shared across examples of the same class.
  std::vector<Tensor> queue_t(static_cast<std::size_t>(queues.classes()));
  std::vector<Tensor> terms;
  terms.reserve(static_cast<std::size_t>(batch));
  for (std::int64_t i = 0; i < batch; ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    Tensor& qt = queue_t[static_cast<std::size_t>(c)];
    if (!qt.defined()) qt = ops::transpose(t, t.constant(queues.buffer(c)));
    Tensor row = ops::gather_rows(t, query_features, {static_cast<int>(i)});
    Tensor logp = ops::log(
        t, ops::softmax_rows(t, ops::scalar_mul(t, ops::matmul(t, row, qt), 1.0 / tau)));
    Tensor target = t.constant(
        Tensor({1, n_queue}, score_key(queues, key_features, static_cast<int>(i), c, tau)));
    terms.push_back(ops::mean_axis(t, ops::mul(t, logp, target), 1));
  }
  Tensor stacked = terms.size() == 1 ? terms[0] : ops::concat(t, terms, 0);
  // Each term holds (1/N_Q) * sum_j target_j*log s_j; rescale to the plain
  // cross-entropy and average over the batch.
  return ops::scalar_mul(t, ops::mean_axis(t, stacked, 0), -static_cast<double>(n_queue));
}

}  // namespace metadg
