#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sfk {

// Double precision keeps central finite-difference checks meaningful at 1e-3
// relative tolerance; the networks trained here are small.
using Real = double;
using Shape = std::vector<std::int64_t>;

std::string shape_string(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

/// Dense row-major array. Video features use (N, C, T, H, W).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0.0);
  Tensor(Shape shape, std::vector<Real> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::int64_t numel() const noexcept { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }

  Real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  Real operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Element of a rank-5 tensor.
  Real& at(std::int64_t n, std::int64_t c, std::int64_t t, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>((((n * shape_[1] + c) * shape_[2] + t) * shape_[3] + h) * shape_[4] + w)];
  }
  Real at(std::int64_t n, std::int64_t c, std::int64_t t, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>((((n * shape_[1] + c) * shape_[2] + t) * shape_[3] + h) * shape_[4] + w)];
  }

  void reshape(Shape shape);
  void fill(Real value);
  void add_(const Tensor& other);
  Real squared_norm() const;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

/// Throws StructuralError unless `t` has the given rank.
void require_rank(const Tensor& t, std::size_t rank, const char* what);

}  // namespace sfk
