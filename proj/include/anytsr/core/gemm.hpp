// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace anytsr {

// Thin GEMM wrappers over Eigen (sequential; outer parallelism is ours).
// Naming: nn = A*B, nt = A*B^T, tn = A^T*B, always row-major contiguous.

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using CMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// C (+)= A(MxK) * B(KxN)
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, int64_t M, int64_t N, int64_t K,
             bool accumulate = false) {
  CMatMap<T> a(A, M, K);
  CMatMap<T> b(B, K, N);
  MatMap<T> c(C, M, N);
  if (accumulate)
    c.noalias() += a * b;
  else
    c.noalias() = a * b;
}

// C (+)= A(MxK) * B(NxK)^T
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, int64_t M, int64_t N, int64_t K,
             bool accumulate = false) {
  CMatMap<T> a(A, M, K);
  CMatMap<T> b(B, N, K);
  MatMap<T> c(C, M, N);
  if (accumulate)
    c.noalias() += a * b.transpose();
  else
    c.noalias() = a * b.transpose();
}

// C (+)= A(KxM)^T * B(KxN)
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, int64_t M, int64_t N, int64_t K,
             bool accumulate = false) {
  CMatMap<T> a(A, K, M);
  CMatMap<T> b(B, K, N);
  MatMap<T> c(C, M, N);
  if (accumulate)
    c.noalias() += a.transpose() * b;
  else
    c.noalias() = a.transpose() * b;
}

}  // namespace anytsr
