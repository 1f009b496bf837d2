#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mscd/error.hpp"

namespace mscd {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

/// Storage aligned to Eigen's widest packet. Eigen picks the summation order
/// of a vectorized reduction from the data's alignment, so a fixed alignment
/// keeps results independent of where the allocator put the buffer.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major N-d array with an optional gradient buffer of the same
/// shape. Activations use N x C x H x W; conv kernels use Cout x Cin x kh x kw.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using ArrayMap = Eigen::Map<Array>;
  using ConstArrayMap = Eigen::Map<const Array>;

  Tensor() = default;

  explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    validate_shape();
    values_.assign(static_cast<std::size_t>(shape_size(shape_)), fill);
  }

  Tensor(Shape shape, const std::vector<Scalar>& values)
      : shape_(std::move(shape)), values_(values.begin(), values.end()) {
    validate_shape();
    if (static_cast<Index>(values_.size()) != shape_size(shape_)) {
      throw ShapeError("tensor of shape " + to_string(shape_) + " given " +
                       std::to_string(values_.size()) + " values");
    }
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  Index size() const { return static_cast<Index>(values_.size()); }
  bool empty() const { return values_.empty(); }

  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }
  AlignedVector<Scalar>& values() { return values_; }
  const AlignedVector<Scalar>& values() const { return values_; }

  Scalar& operator[](Index i) { return values_[static_cast<std::size_t>(i)]; }
  Scalar operator[](Index i) const { return values_[static_cast<std::size_t>(i)]; }

  Scalar& at(Index n, Index c, Index r, Index col) { return values_[offset4(n, c, r, col)]; }
  Scalar at(Index n, Index c, Index r, Index col) const { return values_[offset4(n, c, r, col)]; }

  ArrayMap array() { return ArrayMap(values_.data(), size()); }
  ConstArrayMap array() const { return ConstArrayMap(values_.data(), size()); }

  /// Sample n of a 4-d activation viewed as a (channels x pixels) matrix.
  MatrixMap sample(Index n) {
    return MatrixMap(values_.data() + n * dim(1) * plane(), dim(1), plane());
  }
  ConstMatrixMap sample(Index n) const {
    return ConstMatrixMap(values_.data() + n * dim(1) * plane(), dim(1), plane());
  }

  /// Rows x cols of a 4-d tensor.
  Index plane() const { return dim(2) * dim(3); }

  bool has_grad() const { return !grad_.empty(); }
  /// Allocates a zeroed gradient buffer if there is none.
  void ensure_grad() {
    if (grad_.empty()) grad_.assign(values_.size(), Scalar(0));
  }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), Scalar(0)); }
  void drop_grad() { grad_.clear(); }
  ArrayMap grad() {
    if (grad_.empty()) throw Error("tensor has no gradient buffer");
    return ArrayMap(grad_.data(), size());
  }
  ConstArrayMap grad() const {
    if (grad_.empty()) throw Error("tensor has no gradient buffer");
    return ConstArrayMap(grad_.data(), size());
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    std::copy(values_.begin(), values_.end(), out.values().begin());
    return out;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Bitwise value equality (gradients ignored).
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  void validate_shape() const {
    for (Index d : shape_) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
    }
  }

  std::size_t offset4(Index n, Index c, Index r, Index col) const {
    return static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + r) * shape_[3] + col);
  }

  Shape shape_;
  AlignedVector<Scalar> values_;
  AlignedVector<Scalar> grad_;
};

using TensorF = Tensor<float>;

template <typename Scalar>
void require_rank4(const Tensor<Scalar>& t, const char* what) {
  if (t.rank() != 4) throw ShapeError(std::string(what) + " must be 4-d, got " + to_string(t.shape()));
}

}  // namespace mscd
