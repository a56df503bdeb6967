#include "metadg/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace metadg {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)),
      values_(std::make_shared<std::vector<double>>(
          static_cast<std::size_t>(shape_numel(shape_)), fill)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  values_ = std::make_shared<std::vector<double>>(std::move(values));
}

std::int64_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() == 2) return shape_[0];
  throw std::logic_error("Tensor::rows: rank " + std::to_string(shape_.size()));
}

std::int64_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() == 2) return shape_[1];
  throw std::logic_error("Tensor::cols: rank " + std::to_string(shape_.size()));
}

std::vector<double>& Tensor::values() {
  if (!values_) throw std::logic_error("Tensor: undefined");
  return *values_;
}

const std::vector<double>& Tensor::values() const {
  if (!values_) throw std::logic_error("Tensor: undefined");
  return *values_;
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
  return values()[static_cast<std::size_t>(r * cols() + c)];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::logic_error("Tensor::item: numel " + std::to_string(numel()) + " != 1");
  }
  return values()[0];
}

Tensor Tensor::clone() const {
  Tensor out;
  out.shape_ = shape_;
  if (values_) out.values_ = std::make_shared<std::vector<double>>(*values_);
  return out;
}

std::uint64_t Tensor::checksum() const {
  if (!values_) return 0;
  return fnv1a(values_->data(), values_->size() * sizeof(double));
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace metadg
