#include "metadg/tape.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace metadg {

namespace {

std::atomic<std::uint64_t> g_tape_counter{1};

void finish_values(const char* op, std::vector<double>& v) {
  if (default_precision() == Precision::f32) {
    for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
  }
  if (finite_checks_enabled()) {
    for (const auto& x : v) {
      if (!std::isfinite(x)) {
        throw NumericalError(std::string(op) + ": non-finite value produced");
      }
    }
  }
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.shape().size() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got shape " +
                                shape_str(a.shape()));
  }
}

void require_rank12(const char* op, const Tensor& a) {
  if (a.shape().size() != 1 && a.shape().size() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank-1 or rank-2 tensor, got shape " +
                                shape_str(a.shape()));
  }
}

}  // namespace

double* GradSink::grad(int node) { return tape_.grad_buffer(node); }

bool GradMap::has(int node) const {
  return node >= 0 && node < static_cast<int>(by_node_.size()) && by_node_[node].defined();
}

const Tensor& GradMap::at(int node) const {
  if (!has(node)) {
    throw std::out_of_range("GradMap: no gradient recorded for node " + std::to_string(node));
  }
  return by_node_[static_cast<std::size_t>(node)];
}

const Tensor& GradMap::for_tensor(const Tensor& t) const { return at(t.node()); }

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}

Tensor Tape::leaf(const Tensor& storage, bool requires_grad) {
  if (!storage.defined()) throw std::invalid_argument("Tape::leaf: undefined tensor");
  Tensor out = storage;  // shallow: shares values
  out.requires_grad_ = requires_grad;
  out.node_ = static_cast<int>(nodes_.size());
  out.tape_id_ = id_;
  nodes_.push_back(Node{"leaf", out.shape_, out.values_, requires_grad, true, nullptr});
  return out;
}

Tensor Tape::record(const char* op, Shape shape, std::vector<double> values,
                    const std::vector<int>& inputs, BackwardFn backward) {
  finish_values(op, values);
  bool needs = false;
  for (int in : inputs) {
    if (in < 0 || in >= static_cast<int>(nodes_.size())) {
      throw std::logic_error(std::string(op) + ": input node " + std::to_string(in) +
                             " not on this tape");
    }
    needs = needs || nodes_[static_cast<std::size_t>(in)].needs_grad;
  }
  Tensor out(std::move(shape), std::move(values));
  out.requires_grad_ = needs;
  out.node_ = static_cast<int>(nodes_.size());
  out.tape_id_ = id_;
  nodes_.push_back(Node{op, out.shape_, out.values_, needs, false,
                        needs ? std::move(backward) : nullptr});
  return out;
}

bool Tape::node_needs_grad(int node) const {
  return node >= 0 && node < static_cast<int>(nodes_.size()) &&
         nodes_[static_cast<std::size_t>(node)].needs_grad;
}

const char* Tape::node_op(int node) const {
  return nodes_.at(static_cast<std::size_t>(node)).op;
}

double* Tape::grad_buffer(int node) {
  if (node < 0 || node >= static_cast<int>(nodes_.size())) return nullptr;
  auto& n = nodes_[static_cast<std::size_t>(node)];
  if (!n.needs_grad) return nullptr;
  auto& buf = grads_[static_cast<std::size_t>(node)];
  if (!buf) {
    buf = std::make_unique<std::vector<double>>(
        static_cast<std::size_t>(shape_numel(n.shape)), 0.0);
  }
  return buf->data();
}

GradMap Tape::backward(const Tensor& loss) {
  if (!owns(loss)) throw std::invalid_argument("Tape::backward: loss is not on this tape");
  if (loss.numel() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  }
  grads_.clear();
  grads_.resize(nodes_.size());
  const int loss_node = loss.node();
  double* seed = grad_buffer(loss_node);
  if (seed) seed[0] = 1.0;

  GradSink sink(*this);
  for (int i = loss_node; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.is_leaf) continue;
    auto& buf = grads_[static_cast<std::size_t>(i)];
    if (!buf) continue;  // node did not contribute to the loss
    if (n.backward) n.backward(buf->data(), sink);
  }

  GradMap map;
  map.by_node_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    if (grads_[i]) {
      map.by_node_[i] = Tensor(n.shape, std::move(*grads_[i]));
    } else if (n.is_leaf && n.needs_grad) {
      // Unused parameter: gradient is a zero tensor of the same shape.
      map.by_node_[i] = Tensor::zeros(n.shape);
    }
  }
  grads_.clear();
  return map;
}

namespace ops {

namespace {

void require_on(const char* op, const Tape& t, const Tensor& a) {
  if (!t.owns(a)) {
    throw std::invalid_argument(std::string(op) +
                                ": operand is not bound to this tape (bind via leaf/constant)");
  }
}

using Vals = std::shared_ptr<std::vector<double>>;

Vals shared_values(const Tensor& t) {
  // Backward rules capture the forward values they need through these.
  return std::make_shared<std::vector<double>>(t.values());
}

}  // namespace

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b) {
  require_on("matmul", t, a);
  require_on("matmul", t, b);
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::int64_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i * k + p)];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  auto sa = shared_values(a);
  auto sb = shared_values(b);
  const int na = a.node(), nb = b.node();
  return t.record("matmul", Shape{m, n}, std::move(out), {na, nb},
                  [sa, sb, na, nb, m, k, n](const double* g, GradSink& sink) {
                    if (double* da = sink.grad(na)) {
                      // dA += G * B^T
                      for (std::int64_t i = 0; i < m; ++i)
                        for (std::int64_t p = 0; p < k; ++p) {
                          double acc = 0.0;
                          for (std::int64_t j = 0; j < n; ++j)
                            acc += g[i * n + j] * (*sb)[static_cast<std::size_t>(p * n + j)];
                          da[i * k + p] += acc;
                        }
                    }
                    if (double* db = sink.grad(nb)) {
                      // dB += A^T * G
                      for (std::int64_t p = 0; p < k; ++p)
                        for (std::int64_t j = 0; j < n; ++j) {
                          double acc = 0.0;
                          for (std::int64_t i = 0; i < m; ++i)
                            acc += (*sa)[static_cast<std::size_t>(i * k + p)] * g[i * n + j];
                          db[p * n + j] += acc;
                        }
                    }
                  });
}

namespace {

Tensor ewise_binary(Tape& t, const char* op, const Tensor& a, const Tensor& b,
                    double (*fwd)(double, double), int mode /*0 add, 1 sub, 2 mul*/) {
  require_on(op, t, a);
  require_on(op, t, b);
  if (!same_shape(a, b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const int na = a.node(), nb = b.node();
  Vals sa, sb;
  if (mode == 2) {
    sa = shared_values(a);
    sb = shared_values(b);
  }
  const std::size_t count = av.size();
  return t.record(op, a.shape(), std::move(out), {na, nb},
                  [na, nb, sa, sb, mode, count](const double* g, GradSink& sink) {
                    if (double* da = sink.grad(na)) {
                      for (std::size_t i = 0; i < count; ++i)
                        da[i] += mode == 2 ? g[i] * (*sb)[i] : g[i];
                    }
                    if (double* db = sink.grad(nb)) {
                      for (std::size_t i = 0; i < count; ++i)
                        db[i] += mode == 2 ? g[i] * (*sa)[i] : (mode == 1 ? -g[i] : g[i]);
                    }
                  });
}

}  // namespace

Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
  return ewise_binary(t, "add", a, b, [](double x, double y) { return x + y; }, 0);
}

Tensor sub(Tape& t, const Tensor& a, const Tensor& b) {
  return ewise_binary(t, "sub", a, b, [](double x, double y) { return x - y; }, 1);
}

Tensor mul(Tape& t, const Tensor& a, const Tensor& b) {
  return ewise_binary(t, "mul", a, b, [](double x, double y) { return x * y; }, 2);
}

Tensor scalar_mul(Tape& t, const Tensor& a, double c) {
  require_on("scalar_mul", t, a);
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
  const int na = a.node();
  const std::size_t count = av.size();
  return t.record("scalar_mul", a.shape(), std::move(out), {na},
                  [na, c, count](const double* g, GradSink& sink) {
                    if (double* da = sink.grad(na)) {
                      for (std::size_t i = 0; i < count; ++i) da[i] += g[i] * c;
                    }
                  });
}

Tensor gather_rows(Tape& t, const Tensor& a, const std::vector<int>& ids) {
  require_on("gather_rows", t, a);
  require_rank2("gather_rows", a);
  const std::int64_t rows = a.shape()[0], cols = a.shape()[1];
  for (int id : ids) {
    if (id < 0 || id >= rows) {
      throw std::out_of_range("gather_rows: index " + std::to_string(id) + " out of range [0, " +
                              std::to_string(rows) + ")");
    }
  }
  const std::int64_t n = static_cast<std::int64_t>(ids.size());
  std::vector<double> out(static_cast<std::size_t>(n * cols));
  const auto& av = a.values();
  for (std::int64_t i = 0; i < n; ++i) {
    std::memcpy(out.data() + i * cols, av.data() + static_cast<std::int64_t>(ids[i]) * cols,
                sizeof(double) * static_cast<std::size_t>(cols));
  }
  const int na = a.node();
  auto ids_copy = ids;
  return t.record("gather_rows", Shape{n, cols}, std::move(out), {na},
                  [na, ids_copy, cols](const double* g, GradSink& sink) {
                    if (double* da = sink.grad(na)) {
                      for (std::size_t i = 0; i < ids_copy.size(); ++i) {
                        double* drow = da + static_cast<std::int64_t>(ids_copy[i]) * cols;
                        const double* grow = g + static_cast<std::int64_t>(i) * cols;
                        for (std::int64_t j = 0; j < cols; ++j) drow[j] += grow[j];
                      }
                    }
                  });
}

Tensor mean_axis(Tape& t, const Tensor& a, int axis) {
  require_on("mean_axis", t, a);
  require_rank2("mean_axis", a);
  if (axis != 0 && axis != 1) {
    throw std::invalid_argument("mean_axis: axis must be 0 or 1, got " + std::to_string(axis));
  }
  const std::int64_t r = a.shape()[0], c = a.shape()[1];
  const auto& av = a.values();
  Shape out_shape = axis == 0 ? Shape{1, c} : Shape{r, 1};
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)), 0.0);
  if (axis == 0) {
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::size_t>(j)] += av[i * c + j];
    for (auto& x : out) x /= static_cast<double>(r);
  } else {
    for (std::int64_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < c; ++j) acc += av[i * c + j];
      out[static_cast<std::size_t>(i)] = acc / static_cast<double>(c);
    }
  }
  const int na = a.node();
  return t.record("mean_axis", std::move(out_shape), std::move(out), {na},
                  [na, axis, r, c](const double* g, GradSink& sink) {
                    if (double* da = sink.grad(na)) {
                      if (axis == 0) {
                        const double inv = 1.0 / static_cast<double>(r);
                        for (std::int64_t i = 0; i < r; ++i)
                          for (std::int64_t j = 0; j < c; ++j) da[i * c + j] += g[j] * inv;
                      } else {
                        const double inv = 1.0 / static_cast<double>(c);
                        for (std::int64_t i = 0; i < r; ++i)
                          for (std::int64_t j = 0; j < c; ++j) da[i * c + j] += g[i] * inv;
                      }
                    }
                  });
}

Tensor l2_normalize_rows(Tape& t, const Tensor& a) {
  require_on("l2_normalize_rows", t, a);
  require_rank12("l2_normalize_rows", a);
  const std::int64_t r = a.rows(), c = a.cols();
  const auto& av = a.values();
  std::vector<double> out(av.size());
  std::vector<double> norms(static_cast<std::size_t>(r));
  constexpr double kDegenerate = 1e-12;
  for (std::int64_t i = 0; i < r; ++i) {
    double sq = 0.0;
    for (std::int64_t j = 0; j < c; ++j) sq += av[i * c + j] * av[i * c + j];
    const double nrm = std::sqrt(sq);
    norms[static_cast<std::size_t>(i)] = nrm;
    if (nrm < kDegenerate) {
      // Degenerate rows map to zero and block gradient flow.
      for (std::int64_t j = 0; j < c; ++j) out[i * c + j] = 0.0;
    } else {
      for (std::int64_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] / nrm;
    }
  }
  const int na = a.node();
  auto sout = std::make_shared<std::vector<double>>(out);
  auto snorm = std::make_shared<std::vector<double>>(std::move(norms));
  return t.record("l2_normalize_rows", a.shape(), std::move(out), {na},
                  [na, sout, snorm, r, c](const double* g, GradSink& sink) {
                    if (double* da = sink.grad(na)) {
                      for (std::int64_t i = 0; i < r; ++i) {
                        const double nrm = (*snorm)[static_cast<std::size_t>(i)];
                        if (nrm < kDegenerate) continue;
                        const double* y = sout->data() + i * c;
                        const double* gi = g + i * c;
                        double dot = 0.0;
                        for (std::int64_t j = 0; j < c; ++j) dot += gi[j] * y[j];
                        for (std::int64_t j = 0; j < c; ++j)
                          da[i * c + j] += (gi[j] - dot * y[j]) / nrm;
                      }
                    }
                  });
}

Tensor softmax_rows(Tape& t, const Tensor& a) {
  require_on("softmax_rows", t, a);
  require_rank12("softmax_rows", a);
  const std::int64_t r = a.rows(), c = a.cols();
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::int64_t i = 0; i < r; ++i) {
    double mx = av[i * c];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, av[i * c + j]);
    double denom = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(av[i * c + j] - mx);
      denom += out[i * c + j];
    }
    for (std::int64_t j = 0; j < c; ++j) out[i * c + j] /= denom;
  }
  const int na = a.node();
  auto sout = std::make_shared<std::vector<double>>(out);
  return t.record("softmax_rows", a.shape(), std::move(out), {na},
                  [na, sout, r, c](const double* g, GradSink& sink) {
                    if (double* da = sink.grad(na)) {
                      for (std::int64_t i = 0; i < r; ++i) {
                        const double* s = sout->data() + i * c;
                        const double* gi = g + i * c;
                        double dot = 0.0;
                        for (std::int64_t j = 0; j < c; ++j) dot += gi[j] * s[j];
                        for (std::int64_t j = 0; j < c; ++j)
                          da[i * c + j] += s[j] * (gi[j] - dot);
                      }
                    }
                  });
}

namespace {

Tensor ewise_unary(Tape& t, const char* op, const Tensor& a, double (*fwd)(double),
                   double (*bwd_from_out)(double)) {
  // bwd_from_out expresses d(out)/d(in) in terms of the saved output.
  require_on(op, t, a);
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const int na = a.node();
  auto sout = std::make_shared<std::vector<double>>(out);
  return t.record(op, a.shape(), std::move(out), {na},
                  [na, sout, bwd_from_out](const double* g, GradSink& sink) {
                    if (double* da = sink.grad(na)) {
                      for (std::size_t i = 0; i < sout->size(); ++i)
                        da[i] += g[i] * bwd_from_out((*sout)[i]);
                    }
                  });
}

}  // namespace

Tensor exp(Tape& t, const Tensor& a) {
  return ewise_unary(t, "exp", a, [](double x) { return std::exp(x); },
                     [](double y) { return y; });
}

Tensor tanh(Tape& t, const Tensor& a) {
  return ewise_unary(t, "tanh", a, [](double x) { return std::tanh(x); },
                     [](double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape& t, const Tensor& a) {
  return ewise_unary(t, "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                     [](double y) { return y * (1.0 - y); });
}

Tensor log(Tape& t, const Tensor& a) {
  // Gradient needs the input, not the output.
  require_on("log", t, a);
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::log(av[i]);
  const int na = a.node();
  auto sin = shared_values(a);
  return t.record("log", a.shape(), std::move(out), {na},
                  [na, sin](const double* g, GradSink& sink) {
                    if (double* da = sink.grad(na)) {
                      for (std::size_t i = 0; i < sin->size(); ++i) da[i] += g[i] / (*sin)[i];
                    }
                  });
}

Tensor concat(Tape& t, std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis != 0 && axis != 1) {
    throw std::invalid_argument("concat: axis must be 0 or 1, got " + std::to_string(axis));
  }
  std::vector<int> input_nodes;
  for (const auto& p : parts) {
    require_on("concat", t, p);
    require_rank2("concat", p);
    input_nodes.push_back(p.node());
  }
  const std::int64_t fixed = axis == 0 ? parts[0].shape()[1] : parts[0].shape()[0];
  std::int64_t total = 0;
  for (const auto& p : parts) {
    const std::int64_t f = axis == 0 ? p.shape()[1] : p.shape()[0];
    if (f != fixed) {
      throw std::invalid_argument("concat: shape mismatch, " + shape_str(parts[0].shape()) +
                                  " vs " + shape_str(p.shape()));
    }
    total += axis == 0 ? p.shape()[0] : p.shape()[1];
  }
  const Shape out_shape = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::vector<std::int64_t> extents;
  if (axis == 0) {
    std::int64_t row = 0;
    for (const auto& p : parts) {
      std::memcpy(out.data() + row * fixed, p.values().data(),
                  sizeof(double) * p.values().size());
      row += p.shape()[0];
      extents.push_back(p.shape()[0]);
    }
  } else {
    std::int64_t col = 0;
    for (const auto& p : parts) {
      const std::int64_t pc = p.shape()[1];
      for (std::int64_t i = 0; i < fixed; ++i)
        std::memcpy(out.data() + i * total + col, p.values().data() + i * pc,
                    sizeof(double) * static_cast<std::size_t>(pc));
      col += pc;
      extents.push_back(pc);
    }
  }
  return t.record("concat", out_shape, std::move(out), input_nodes,
                  [input_nodes, extents, axis, fixed, total](const double* g, GradSink& sink) {
                    std::int64_t offset = 0;
                    for (std::size_t k = 0; k < input_nodes.size(); ++k) {
                      const std::int64_t ext = extents[k];
                      if (double* d = sink.grad(input_nodes[k])) {
                        if (axis == 0) {
                          const double* src = g + offset * fixed;
                          for (std::int64_t i = 0; i < ext * fixed; ++i) d[i] += src[i];
                        } else {
                          for (std::int64_t i = 0; i < fixed; ++i)
                            for (std::int64_t j = 0; j < ext; ++j)
                              d[i * ext + j] += g[i * total + offset + j];
                        }
                      }
                      offset += ext;
                    }
                  });
}

Tensor transpose(Tape& t, const Tensor& a) {
  require_on("transpose", t, a);
  require_rank2("transpose", a);
  const std::int64_t r = a.shape()[0], c = a.shape()[1];
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  const int na = a.node();
  return t.record("transpose", Shape{c, r}, std::move(out), {na},
                  [na, r, c](const double* g, GradSink& sink) {
                    if (double* da = sink.grad(na)) {
                      for (std::int64_t i = 0; i < r; ++i)
                        for (std::int64_t j = 0; j < c; ++j) da[i * c + j] += g[j * r + i];
                    }
                  });
}

Tensor cross_entropy_with_logits(Tape& t, const Tensor& logits, const std::vector<int>& labels) {
  require_on("cross_entropy_with_logits", t, logits);
  require_rank2("cross_entropy_with_logits", logits);
  const std::int64_t b = logits.shape()[0], c = logits.shape()[1];
  if (static_cast<std::int64_t>(labels.size()) != b) {
    throw std::invalid_argument("cross_entropy_with_logits: " + std::to_string(labels.size()) +
                                " labels for batch of " + std::to_string(b));
  }
  for (int y : labels) {
    if (y < 0 || y >= c) {
      throw std::out_of_range("cross_entropy_with_logits: label " + std::to_string(y) +
                              " out of range [0, " + std::to_string(c) + ")");
    }
  }
  const auto& lv = logits.values();
  // Mean NLL with the log-sum-exp computed against the row max. The softmax
  // is saved for the backward rule.
  auto probs = std::make_shared<std::vector<double>>(lv.size());
  double loss = 0.0;
  for (std::int64_t i = 0; i < b; ++i) {
    double mx = lv[i * c];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, lv[i * c + j]);
    double denom = 0.0;
    for (std::int64_t j = 0; j < c; ++j) denom += std::exp(lv[i * c + j] - mx);
    const double lse = mx + std::log(denom);
    loss += lse - lv[i * c + labels[static_cast<std::size_t>(i)]];
    for (std::int64_t j = 0; j < c; ++j)
      (*probs)[i * c + j] = std::exp(lv[i * c + j] - lse);
  }
  loss /= static_cast<double>(b);
  const int nl = logits.node();
  auto labels_copy = labels;
  return t.record("cross_entropy_with_logits", Shape{1, 1}, {loss}, {nl},
                  [nl, probs, labels_copy, b, c](const double* g, GradSink& sink) {
                    if (double* dl = sink.grad(nl)) {
                      const double scale = g[0] / static_cast<double>(b);
                      for (std::int64_t i = 0; i < b; ++i)
                        for (std::int64_t j = 0; j < c; ++j) {
                          const double onehot =
                              j == labels_copy[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
                          dl[i * c + j] += scale * ((*probs)[i * c + j] - onehot);
                        }
                    }
                  });
}

}  // namespace ops

}  // namespace metadg
