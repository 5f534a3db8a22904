#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "nubble/error.hpp"
#include "nubble/grid.hpp"
#include "nubble/parallel.hpp"

namespace nubble {

/// Dot product accumulated strictly in ascending index order.
///
/// Every similarity in the toolkit reduces through this order (or the tiled
/// kernel below, which uses the same per-element order), so scores are
/// bit-identical across schedules, thread counts and the naive loop.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar ordered_dot(const Eigen::MatrixBase<DerivedA>& u,
                                      const Eigen::MatrixBase<DerivedB>& v) {
  typename DerivedA::Scalar acc(0);
  for (Index c = 0; c < u.size(); ++c) acc += u.coeff(c) * v.coeff(c);
  return acc;
}

template <typename Derived>
typename Derived::Scalar ordered_norm(const Eigen::MatrixBase<Derived>& u) {
  return std::sqrt(ordered_dot(u, u));
}

/// dot / (|u| |v|), 0 when either norm is 0, clamped to [-1, 1].
template <typename Scalar>
Scalar cosine_from_parts(Scalar dot, Scalar norm_u, Scalar norm_v) {
  if (norm_u == Scalar(0) || norm_v == Scalar(0)) return Scalar(0);
  return std::clamp(dot / (norm_u * norm_v), Scalar(-1), Scalar(1));
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& u,
                                            const Eigen::MatrixBase<DerivedB>& v) {
  if (u.size() != v.size())
    throw DimensionError("cosine_similarity: lengths " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  return cosine_from_parts(ordered_dot(u, v), ordered_norm(u), ordered_norm(v));
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_norms(const RowMatrix<Scalar>& m) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms(m.rows());
  for (Index i = 0; i < m.rows(); ++i) norms[i] = ordered_norm(m.row(i));
  return norms;
}

namespace detail {

constexpr Index kTile = 4;
constexpr Index kRowChunk = 64;
constexpr Index kColBlock = 64;

// out(i - i0, j) = sum_c a(i, c) * b(j, c) for i in [i0, i1), j in [j0, j1).
template <typename Scalar>
void dot_block(const RowMatrix<Scalar>& a, const RowMatrix<Scalar>& b, Index i0, Index i1,
               Index j0, Index j1, RowMatrix<Scalar>& out) {
  const Index channels = a.cols();
  Index i = i0;
  for (; i + kTile <= i1; i += kTile) {
    const Scalar* a0 = a.row(i).data();
    const Scalar* a1 = a.row(i + 1).data();
    const Scalar* a2 = a.row(i + 2).data();
    const Scalar* a3 = a.row(i + 3).data();
    Index j = j0;
    for (; j + kTile <= j1; j += kTile) {
      const Scalar* b0 = b.row(j).data();
      const Scalar* b1 = b.row(j + 1).data();
      const Scalar* b2 = b.row(j + 2).data();
      const Scalar* b3 = b.row(j + 3).data();
      Scalar acc[kTile][kTile] = {};
      for (Index c = 0; c < channels; ++c) {
        const Scalar x[kTile] = {a0[c], a1[c], a2[c], a3[c]};
        const Scalar y[kTile] = {b0[c], b1[c], b2[c], b3[c]};
        for (Index p = 0; p < kTile; ++p)
          for (Index q = 0; q < kTile; ++q) acc[p][q] += x[p] * y[q];
      }
      for (Index p = 0; p < kTile; ++p)
        for (Index q = 0; q < kTile; ++q) out(i - i0 + p, j + q) = acc[p][q];
    }
    for (; j < j1; ++j)
      for (Index p = 0; p < kTile; ++p) out(i - i0 + p, j) = ordered_dot(a.row(i + p), b.row(j));
  }
  for (; i < i1; ++i)
    for (Index j = j0; j < j1; ++j) out(i - i0, j) = ordered_dot(a.row(i), b.row(j));
}

}  // namespace detail

/// Streams the cosine-similarity matrix between the rows of `a` and `b` in
/// chunks of consecutive `a` rows. `sink(row_begin, row_end, block)` receives
/// block(i - row_begin, j) = cos(a_i, b_j); chunks may be delivered
/// concurrently from different workers, in any order.
template <typename Scalar, typename Sink>
void for_each_cosine_chunk(const RowMatrix<Scalar>& a, const RowMatrix<Scalar>& b, Exec exec,
                           Sink&& sink) {
  if (a.cols() != b.cols())
    throw DimensionError("channel counts differ: " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()));
  const auto a_norms = row_norms(a);
  const auto b_norms = row_norms(b);
  const Index chunks = (a.rows() + detail::kRowChunk - 1) / detail::kRowChunk;

  parallel_for(chunks, exec, [&](Index chunk) {
    const Index i0 = chunk * detail::kRowChunk;
    const Index i1 = std::min(a.rows(), i0 + detail::kRowChunk);
    RowMatrix<Scalar> block(i1 - i0, b.rows());
    for (Index j0 = 0; j0 < b.rows(); j0 += detail::kColBlock)
      detail::dot_block(a, b, i0, i1, j0, std::min(b.rows(), j0 + detail::kColBlock), block);
    for (Index i = i0; i < i1; ++i)
      for (Index j = 0; j < b.rows(); ++j)
        block(i - i0, j) = cosine_from_parts(block(i - i0, j), a_norms[i], b_norms[j]);
    sink(i0, i1, static_cast<const RowMatrix<Scalar>&>(block));
  });
}

/// Full (a.rows() x b.rows()) cosine-similarity matrix.
template <typename Scalar>
RowMatrix<Scalar> cosine_matrix(const RowMatrix<Scalar>& a, const RowMatrix<Scalar>& b,
                                Exec exec = {}) {
  RowMatrix<Scalar> result(a.rows(), b.rows());
  for_each_cosine_chunk(a, b, exec, [&](Index i0, Index i1, const RowMatrix<Scalar>& block) {
    result.middleRows(i0, i1 - i0) = block;
  });
  return result;
}

}  // namespace nubble
