#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "metadg/common.hpp"

namespace metadg {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense real tensor. Copies are shallow handles sharing storage; clone()
// makes an independent deep copy. A tensor may additionally be bound to a
// node of a Tape (node() >= 0), which is how gradients find their way back.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, double fill);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v) { return Tensor(Shape{1, 1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return shape_numel(shape_); }
  std::int64_t rows() const;
  std::int64_t cols() const;

  std::vector<double>& values();
  const std::vector<double>& values() const;
  double* data() { return values().data(); }
  const double* data() const { return values().data(); }

  double at(std::int64_t r, std::int64_t c) const;
  double item() const;  // requires numel() == 1

  bool defined() const { return values_ != nullptr; }
  Tensor clone() const;

  bool requires_grad() const { return requires_grad_; }
  int node() const { return node_; }
  std::uint64_t tape_id() const { return tape_id_; }

  std::uint64_t checksum() const;

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<std::vector<double>> values_;
  bool requires_grad_ = false;
  int node_ = -1;          // id on the owning tape, -1 when detached
  std::uint64_t tape_id_ = 0;
};

bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace metadg
