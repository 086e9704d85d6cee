#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowdet/common.hpp"

namespace flowdet::nn {

/// Dense row-major array with a runtime shape.
template <class S = double>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> sh) : shape(std::move(sh)) {
    data.assign(count(shape), S{0});
  }
  Tensor(std::initializer_list<std::size_t> sh) : Tensor(std::vector<std::size_t>(sh)) {}

  static std::size_t count(const std::vector<std::size_t>& sh) {
    return std::accumulate(sh.begin(), sh.end(), std::size_t{1}, std::multiplies<>{});
  }

  std::size_t size() const { return data.size(); }
  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(S{0}); }

  Tensor reshaped(std::vector<std::size_t> sh) const {
    if (count(sh) != size()) {
      throw ShapeError(cat("reshape from ", shape_str(shape), " to ", shape_str(sh)));
    }
    Tensor t;
    t.shape = std::move(sh);
    t.data = data;
    return t;
  }

  static std::string shape_str(const std::vector<std::size_t>& sh) {
    std::string s = "(";
    for (std::size_t i = 0; i < sh.size(); ++i) s += (i ? "," : "") + std::to_string(sh[i]);
    return s + ")";
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <class S>
void require_shape(const Tensor<S>& t, const std::vector<std::size_t>& expect,
                   const char* where) {
  if (t.shape != expect) {
    throw ShapeError(cat(where, ": expected ", Tensor<S>::shape_str(expect), ", got ",
                         Tensor<S>::shape_str(t.shape)));
  }
}

namespace blas {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Map = Eigen::Map<Mat<S>>;
template <class S>
using CMap = Eigen::Map<const Mat<S>>;

/// C = A(MxK) * B(KxN), optionally accumulating into C.
template <class S>
void gemm_nn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate = false) {
  CMap<S> A(a, m, k);
  CMap<S> B(b, k, n);
  Map<S> C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B;
  } else {
    C.noalias() = A * B;
  }
}

/// C = A^T(MxK from KxM... A is (K x M) stored row-major) * B(KxN).
template <class S>
void gemm_tn(const S* a, const S* b, S* c, std::size_t k, std::size_t m, std::size_t n,
             bool accumulate = false) {
  CMap<S> A(a, k, m);
  CMap<S> B(b, k, n);
  Map<S> C(c, m, n);
  if (accumulate) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() = A.transpose() * B;
  }
}

/// C = A(MxK) * B^T (B is (N x K) stored row-major).
template <class S>
void gemm_nt(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate = false) {
  CMap<S> A(a, m, k);
  CMap<S> B(b, n, k);
  Map<S> C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() = A * B.transpose();
  }
}

}  // namespace blas

/// Trainable tensor with gradient and Adam moment state.
template <class S = double>
struct Param {
  Tensor<S> value;
  Tensor<S> grad;
  Tensor<S> m;
  Tensor<S> v;
  std::int64_t step_count = 0;
  std::string name;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> shape)
      : value(shape), grad(shape), m(shape), v(std::move(shape)), name(std::move(n)) {}

  void zero_grad() { grad.zero(); }
};

}  // namespace flowdet::nn
