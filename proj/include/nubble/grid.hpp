#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "nubble/error.hpp"

namespace nubble {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grid coordinate of a patch.
struct Coord {
  Index row = 0;
  Index col = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

/// H x W grid of C-channel patch features.
///
/// Storage is one row per patch in row-major patch order, so the underlying
/// buffer is exactly the C-order (H, W, C) payload of an NPY file.
template <typename Scalar>
class BasicFeatureGrid {
 public:
  using Matrix = RowMatrix<Scalar>;

  BasicFeatureGrid() = default;

  BasicFeatureGrid(Index height, Index width, Index channels)
      : height_(height), width_(width), values_(Matrix::Zero(height * width, channels)) {
    check_shape();
  }

  BasicFeatureGrid(Index height, Index width, Matrix values, bool normalized = false,
                   std::string source_id = {})
      : height_(height),
        width_(width),
        values_(std::move(values)),
        normalized_(normalized),
        source_id_(std::move(source_id)) {
    check_shape();
  }

  Index height() const { return height_; }
  Index width() const { return width_; }
  Index channels() const { return values_.cols(); }
  Index patches() const { return values_.rows(); }

  const Matrix& values() const { return values_; }
  Matrix& values() { return values_; }

  auto patch(Index linear) const { return values_.row(linear); }
  auto patch(Index linear) { return values_.row(linear); }
  auto patch(Coord c) const { return values_.row(linear_index(c)); }

  Index linear_index(Coord c) const { return c.row * width_ + c.col; }
  Coord coord(Index linear) const { return {linear / width_, linear % width_}; }

  bool normalized() const { return normalized_; }
  void set_normalized(bool v) { normalized_ = v; }

  const std::string& source_id() const { return source_id_; }
  void set_source_id(std::string id) { source_id_ = std::move(id); }

  template <typename Other>
  BasicFeatureGrid<Other> cast() const {
    return {height_, width_, values_.template cast<Other>(), normalized_, source_id_};
  }

 private:
  void check_shape() const {
    if (height_ < 1 || width_ < 1 || values_.cols() < 1)
      throw ValidationError("feature grid dimensions must all be >= 1");
    if (values_.rows() != height_ * width_)
      throw DimensionError("feature grid holds " + std::to_string(values_.rows()) +
                           " patches, expected " + std::to_string(height_ * width_));
  }

  Index height_ = 0;
  Index width_ = 0;
  Matrix values_;
  bool normalized_ = false;
  std::string source_id_;
};

using FeatureGrid = BasicFeatureGrid<double>;

/// Row-major H x W boolean grid.
struct BinaryMask {
  Index height = 0;
  Index width = 0;
  Eigen::Array<bool, Eigen::Dynamic, 1> bits;

  BinaryMask() = default;
  BinaryMask(Index h, Index w, bool fill = false)
      : height(h), width(w), bits(Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(h * w, fill)) {}

  Index size() const { return bits.size(); }
  Index count() const { return bits.count(); }
  bool operator[](Index linear) const { return bits[linear]; }
  bool at(Coord c) const { return bits[c.row * width + c.col]; }

  friend bool operator==(const BinaryMask& a, const BinaryMask& b) {
    return a.height == b.height && a.width == b.width && (a.bits == b.bits).all();
  }
};

/// Throws ValidationError naming the first non-finite row-major flat index.
template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& values) {
  for (Index i = 0; i < values.rows(); ++i)
    for (Index j = 0; j < values.cols(); ++j)
      if (!std::isfinite(values(i, j)))
        throw ValidationError("non-finite value at flat index " +
                              std::to_string(i * values.cols() + j));
}

inline void require_same_dims(const BinaryMask& mask, Index height, Index width,
                              const char* what) {
  if (mask.height != height || mask.width != width)
    throw DimensionError(std::string(what) + ": mask is " + std::to_string(mask.height) + "x" +
                         std::to_string(mask.width) + ", grid is " + std::to_string(height) +
                         "x" + std::to_string(width));
}

}  // namespace nubble
