#pragma once

#include <algorithm>
#include <cstring>
#include <vector>

#include "lava/threading.hpp"

namespace lava::nn {

// Row-major GEMM kernels used by the conv/linear layers. All accumulate in a
// fixed order over the reduction index, and parallel execution only splits
// output rows into contiguous chunks, so results are bit-identical to the
// single-threaded path for any thread count.

namespace detail {

inline constexpr int kRowBlock = 8;
inline constexpr int kColBlock = 192;

// C[i0..i0+8) x [t0..t0+nb) += A-rows * B-rows, accumulators kept hot.
template <class T>
void gemm_nn_tile8(int64_t R, int64_t N, int64_t nb, int64_t i0, int64_t t0,
                   const T* __restrict__ A, int64_t lda, const T* __restrict__ B, int64_t ldb,
                   T* __restrict__ C, int64_t ldc, bool accumulate, T* __restrict__ acc) {
  constexpr int MB = kRowBlock;
  std::memset(acc, 0, sizeof(T) * MB * static_cast<size_t>(nb));
  for (int64_t r = 0; r < R; ++r) {
    const T* __restrict__ b = B + r * ldb + t0;
    for (int j = 0; j < MB; ++j) {
      const T av = A[(i0 + j) * lda + r];
      T* __restrict__ accj = acc + j * nb;
      for (int64_t t = 0; t < nb; ++t) accj[t] += av * b[t];
    }
  }
  for (int j = 0; j < MB; ++j) {
    T* __restrict__ c = C + (i0 + j) * ldc + t0;
    const T* __restrict__ accj = acc + j * nb;
    if (accumulate) {
      for (int64_t t = 0; t < nb; ++t) c[t] += accj[t];
    } else {
      for (int64_t t = 0; t < nb; ++t) c[t] = accj[t];
    }
  }
}

template <class T>
void gemm_nn_rows(int64_t lo, int64_t hi, int64_t R, int64_t N, const T* A, int64_t lda,
                  const T* B, int64_t ldb, T* C, int64_t ldc, bool accumulate) {
  constexpr int MB = kRowBlock;
  std::vector<T> accbuf(static_cast<size_t>(MB) * kColBlock);
  for (int64_t t0 = 0; t0 < N; t0 += kColBlock) {
    const int64_t nb = std::min<int64_t>(kColBlock, N - t0);
    int64_t i = lo;
    for (; i + MB <= hi; i += MB)
      gemm_nn_tile8(R, N, nb, i, t0, A, lda, B, ldb, C, ldc, accumulate, accbuf.data());
    for (; i < hi; ++i) {
      T* c = C + i * ldc + t0;
      if (!accumulate) std::memset(c, 0, sizeof(T) * static_cast<size_t>(nb));
      for (int64_t r = 0; r < R; ++r) {
        const T av = A[i * lda + r];
        const T* b = B + r * ldb + t0;
        for (int64_t t = 0; t < nb; ++t) c[t] += av * b[t];
      }
    }
  }
}

}  // namespace detail

// C[M,N] = (accumulate ? C : 0) + A[M,R] * B[R,N]
template <class T>
void gemm_nn(int64_t M, int64_t R, int64_t N, const T* A, int64_t lda, const T* B, int64_t ldb,
             T* C, int64_t ldc, bool accumulate = false) {
  const double work = 2.0 * static_cast<double>(M) * static_cast<double>(R) * static_cast<double>(N);
  if (work < 2e6 || num_threads() == 1) {
    detail::gemm_nn_rows(0, M, R, N, A, lda, B, ldb, C, ldc, accumulate);
    return;
  }
  parallel_for(M, [&](int64_t lo, int64_t hi) {
    detail::gemm_nn_rows(lo, hi, R, N, A, lda, B, ldb, C, ldc, accumulate);
  }, detail::kRowBlock);
}

// C[M,N] = (accumulate ? C : 0) + A[M,R] * B[N,R]^T  (dot-product form, the
// reduction axis is contiguous in both operands)
template <class T>
void gemm_nt(int64_t M, int64_t R, int64_t N, const T* A, int64_t lda, const T* B, int64_t ldb,
             T* C, int64_t ldc, bool accumulate = false) {
  auto rows = [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const T* __restrict__ a = A + i * lda;
      T* __restrict__ c = C + i * ldc;
      int64_t j = 0;
      for (; j + 4 <= N; j += 4) {
        const T* __restrict__ b0 = B + j * ldb;
        const T* __restrict__ b1 = B + (j + 1) * ldb;
        const T* __restrict__ b2 = B + (j + 2) * ldb;
        const T* __restrict__ b3 = B + (j + 3) * ldb;
        T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        for (int64_t r = 0; r < R; ++r) {
          const T av = a[r];
          s0 += av * b0[r];
          s1 += av * b1[r];
          s2 += av * b2[r];
          s3 += av * b3[r];
        }
        if (accumulate) {
          c[j] += s0; c[j + 1] += s1; c[j + 2] += s2; c[j + 3] += s3;
        } else {
          c[j] = s0; c[j + 1] = s1; c[j + 2] = s2; c[j + 3] = s3;
        }
      }
      for (; j < N; ++j) {
        const T* __restrict__ b = B + j * ldb;
        T s = 0;
        for (int64_t r = 0; r < R; ++r) s += a[r] * b[r];
        if (accumulate) c[j] += s; else c[j] = s;
      }
    }
  };
  const double work = 2.0 * static_cast<double>(M) * static_cast<double>(R) * static_cast<double>(N);
  if (work < 2e6 || num_threads() == 1) {
    rows(0, M);
    return;
  }
  parallel_for(M, rows, 1);
}

// C[M,N] = (accumulate ? C : 0) + A[R,M]^T * B[R,N]
template <class T>
void gemm_tn(int64_t M, int64_t R, int64_t N, const T* A, int64_t lda, const T* B, int64_t ldb,
             T* C, int64_t ldc, bool accumulate = false) {
  auto rows = [&](int64_t lo, int64_t hi) {
    constexpr int MB = detail::kRowBlock;
    std::vector<T> accbuf(static_cast<size_t>(MB) * detail::kColBlock);
    for (int64_t t0 = 0; t0 < N; t0 += detail::kColBlock) {
      const int64_t nb = std::min<int64_t>(detail::kColBlock, N - t0);
      for (int64_t i0 = lo; i0 < hi; i0 += MB) {
        const int mb = static_cast<int>(std::min<int64_t>(MB, hi - i0));
        T* acc = accbuf.data();
        std::memset(acc, 0, sizeof(T) * static_cast<size_t>(mb) * static_cast<size_t>(nb));
        for (int64_t r = 0; r < R; ++r) {
          const T* __restrict__ b = B + r * ldb + t0;
          const T* __restrict__ arow = A + r * lda + i0;
          for (int j = 0; j < mb; ++j) {
            const T av = arow[j];
            T* __restrict__ accj = acc + j * nb;
            for (int64_t t = 0; t < nb; ++t) accj[t] += av * b[t];
          }
        }
        for (int j = 0; j < mb; ++j) {
          T* c = C + (i0 + j) * ldc + t0;
          const T* accj = acc + j * nb;
          if (accumulate) {
            for (int64_t t = 0; t < nb; ++t) c[t] += accj[t];
          } else {
            for (int64_t t = 0; t < nb; ++t) c[t] = accj[t];
          }
        }
      }
    }
  };
  const double work = 2.0 * static_cast<double>(M) * static_cast<double>(R) * static_cast<double>(N);
  if (work < 2e6 || num_threads() == 1) {
    rows(0, M);
    return;
  }
  parallel_for(M, rows, detail::kRowBlock);
}

}  // namespace lava::nn
