#include "sfk/tensor.hpp"

#include <numeric>
#include <sstream>

#include "sfk/error.hpp"

namespace sfk {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ')';
  return out.str();
}

std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d < 0) throw StructuralError("negative tensor extent in " + shape_string(shape_));
  }
  data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<Real> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
    throw StructuralError("tensor of shape " + shape_string(shape_) + " given " + std::to_string(data_.size()) +
                          " values");
  }
}

void Tensor::reshape(Shape shape) {
  if (shape_numel(shape) != numel()) {
    throw StructuralError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

void Tensor::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::add_(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw StructuralError("add: shape " + shape_string(other.shape_) + " vs " + shape_string(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

Real Tensor::squared_norm() const {
  Real s = 0;
  for (auto v : data_) s += v * v;
  return s;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw StructuralError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                          shape_string(t.shape()));
  }
}

}  // namespace sfk
