#pragma once

#include "cpgan/common.hpp"
#include "cpgan/parallel.hpp"

namespace cpgan {

// Dense kernels used by ops. Each parallelizes over independent output rows
// and keeps the per-row accumulation order fixed, so results are identical
// for any thread count.

// C(m,n) = A(m,k) B(k,n). ikj order streams B rows through cache.
template <typename T>
void matmul_ab(const T* a, const T* b, T* c, index_t m, index_t k, index_t n) {
  parallel_for(m, [&](index_t i0, index_t i1) {
    for (index_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      for (index_t j = 0; j < n; ++j) crow[j] = T(0);
      const T* arow = a + i * k;
      for (index_t p = 0; p < k; ++p) {
        T av = arow[p];
        if (av == T(0)) continue;
        const T* brow = b + p * n;
        for (index_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// C(m,n) = A(m,k) B(n,k)^T: rows of A against rows of B.
template <typename T>
void matmul_abt(const T* a, const T* b, T* c, index_t m, index_t k, index_t n) {
  parallel_for(m, [&](index_t i0, index_t i1) {
    for (index_t i = i0; i < i1; ++i) {
      const T* arow = a + i * k;
      T* crow = c + i * n;
      for (index_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T acc = T(0);
        for (index_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] = acc;
      }
    }
  });
}

// C(k,n) = A(m,k)^T B(m,n). Parallel over rows of C (columns of A).
template <typename T>
void matmul_atb(const T* a, const T* b, T* c, index_t m, index_t k, index_t n) {
  parallel_for(k, [&](index_t i0, index_t i1) {
    for (index_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      for (index_t j = 0; j < n; ++j) crow[j] = T(0);
      for (index_t r = 0; r < m; ++r) {
        T av = a[r * k + i];
        if (av == T(0)) continue;
        const T* brow = b + r * n;
        for (index_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// y += x, elementwise over n entries.
template <typename T>
void axpy_accum(const T* x, T* y, index_t n) {
  for (index_t i = 0; i < n; ++i) y[i] += x[i];
}

}  // namespace cpgan
