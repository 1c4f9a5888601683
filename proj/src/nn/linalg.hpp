#pragma once
// Private helpers shared by the conv/deconv layers.

#include <cstddef>
#include <type_traits>
#include <vector>

#include "msfcn/simd/kernels.hpp"

namespace msfcn::nn::detail {

template <typename T>
void transpose(int rows, int cols, const T* src, T* dst) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
    }
  }
}

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  if constexpr (std::is_same_v<T, float>) {
    simd::active().sgemm(m, n, k, a, k, b, n, c, n, accumulate);
  } else {
    for (int i = 0; i < m; ++i) {
      T* crow = c + static_cast<std::size_t>(i) * n;
      if (!accumulate) std::fill(crow, crow + n, T(0));
      for (int p = 0; p < k; ++p) {
        const T av = a[static_cast<std::size_t>(i) * k + p];
        const T* brow = b + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

// C[m x n] (+)= op(A) * op(B); op(A) is m x k, op(B) is k x n. A transposed
// operand is stored in its untransposed layout (k x m, resp. n x k).
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate) {
  thread_local std::vector<T> scratch_a;
  thread_local std::vector<T> scratch_b;
  if (trans_a) {
    scratch_a.resize(static_cast<std::size_t>(m) * k);
    transpose(k, m, a, scratch_a.data());
    a = scratch_a.data();
  }
  if (trans_b) {
    scratch_b.resize(static_cast<std::size_t>(k) * n);
    transpose(n, k, b, scratch_b.data());
    b = scratch_b.data();
  }
  gemm_nn(m, n, k, a, b, c, accumulate);
}

// col[(c*k + ki)*k + kj][oh*ow_count + ow] = img[c][oh*stride - pad + ki][ow*stride - pad + kj]
template <typename T>
void im2col(const T* img, int channels, int height, int width, int kernel, int stride, int pad,
            int out_h, int out_w, T* col) {
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    const T* plane = img + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < kernel; ++ki) {
      for (int kj = 0; kj < kernel; ++kj) {
        T* row = col + (static_cast<std::size_t>(c) * kernel * kernel + ki * kernel + kj) * out_plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + ki;
          T* dst = row + static_cast<std::size_t>(oh) * out_w;
          if (ih < 0 || ih >= height) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * stride - pad + kj;
            dst[ow] = (iw >= 0 && iw < width) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters (accumulates) columns back into the image.
template <typename T>
void col2im(const T* col, int channels, int height, int width, int kernel, int stride, int pad,
            int out_h, int out_w, T* img) {
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    T* plane = img + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < kernel; ++ki) {
      for (int kj = 0; kj < kernel; ++kj) {
        const T* row = col + (static_cast<std::size_t>(c) * kernel * kernel + ki * kernel + kj) * out_plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= height) continue;
          const T* src = row + static_cast<std::size_t>(oh) * out_w;
          T* dst = plane + static_cast<std::size_t>(ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  if constexpr (std::is_same_v<T, float>) {
    simd::active().saxpy(n, alpha, x, y);
  } else {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
  }
}

}  // namespace msfcn::nn::detail
