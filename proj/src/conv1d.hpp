#pragma once

// Internal 1-D convolution kernels. Buffers are channel-major, viewed as
// column-major (length x channels) Eigen matrices, so each channel is one
// contiguous column. Stride-1 layers run as one GEMM per kernel tap on
// shifted row ranges; strided layers go through an im2col buffer.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdlib>
#include <vector>

namespace stofnet::detail {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using MatMap = Eigen::Map<Mat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

// y[co][i] = b[co] + sum_{ci,t} w[co][ci][t] * x[ci][i*stride + t - pad],
// zero padded; x is in_ch*n, y is out_ch*(n/stride). n must be divisible
// by stride.
template <class T>
void conv1d_forward(int in_ch, int out_ch, int k, int stride, const T* w,
                    const T* b, const T* x, int n, T* y) {
  const int pad = (k - 1) / 2;
  const int m = n / stride;
  MatMap<T> Y(y, m, out_ch);
  for (int co = 0; co < out_ch; ++co) Y.col(co).setConstant(b[co]);

  if (stride == 1) {
    ConstMatMap<T> X(x, n, in_ch);
    Mat<T> P(in_ch, out_ch);  // per-tap weight slice
    for (int t = 0; t < k; ++t) {
      const int off = t - pad;
      const int len = n - std::abs(off);
      if (len <= 0) continue;
      const int r0 = std::max(0, -off);
      const int s0 = std::max(0, off);
      for (int co = 0; co < out_ch; ++co)
        for (int ci = 0; ci < in_ch; ++ci)
          P(ci, co) = w[(static_cast<size_t>(co) * in_ch + ci) * k + t];
      Y.middleRows(r0, len).noalias() += X.middleRows(s0, len) * P;
    }
    return;
  }

  // im2col: Col(m, ci*k + t) = x[ci][stride*m + t - pad]
  Mat<T> col = Mat<T>::Zero(m, in_ch * k);
  for (int ci = 0; ci < in_ch; ++ci) {
    const T* xc = x + static_cast<size_t>(ci) * n;
    for (int t = 0; t < k; ++t) {
      T* dst = col.data() + static_cast<size_t>(ci * k + t) * m;
      for (int i = 0; i < m; ++i) {
        int src = stride * i + t - pad;
        dst[i] = (src >= 0 && src < n) ? xc[src] : T(0);
      }
    }
  }
  // w viewed column-major is already (in_ch*k) x out_ch
  ConstMatMap<T> W(w, in_ch * k, out_ch);
  Y.noalias() += col * W;
}

// Fixed-order 4-lane summation. Eigen's redux splits at an address-dependent
// alignment boundary, which makes results vary with the heap layout; this
// keeps gradient reductions bit-reproducible run to run.
template <class T>
T fixed_sum(const T* p, int n) {
  T a0 = 0, a1 = 0, a2 = 0, a3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 += p[i];
    a1 += p[i + 1];
    a2 += p[i + 2];
    a3 += p[i + 3];
  }
  T acc = (a0 + a1) + (a2 + a3);
  for (; i < n; ++i) acc += p[i];
  return acc;
}

// Accumulates dw/db (and dx when non-null; dx must be zero-initialized by
// the caller or hold a prior gradient to add into).
template <class T>
void conv1d_backward(int in_ch, int out_ch, int k, int stride, const T* w,
                     const T* x, const T* dy, int n, T* dw, T* db, T* dx) {
  const int pad = (k - 1) / 2;
  const int m = n / stride;
  ConstMatMap<T> dY(dy, m, out_ch);
  for (int co = 0; co < out_ch; ++co)
    db[co] += fixed_sum(dy + static_cast<size_t>(co) * m, m);

  if (stride == 1) {
    ConstMatMap<T> X(x, n, in_ch);
    Mat<T> G(in_ch, out_ch);
    Mat<T> P(in_ch, out_ch);
    for (int t = 0; t < k; ++t) {
      const int off = t - pad;
      const int len = n - std::abs(off);
      if (len <= 0) continue;
      const int r0 = std::max(0, -off);
      const int s0 = std::max(0, off);
      G.noalias() =
          X.middleRows(s0, len).transpose() * dY.middleRows(r0, len);
      for (int co = 0; co < out_ch; ++co)
        for (int ci = 0; ci < in_ch; ++ci)
          dw[(static_cast<size_t>(co) * in_ch + ci) * k + t] += G(ci, co);
      if (dx) {
        for (int co = 0; co < out_ch; ++co)
          for (int ci = 0; ci < in_ch; ++ci)
            P(ci, co) = w[(static_cast<size_t>(co) * in_ch + ci) * k + t];
        MatMap<T> dX(dx, n, in_ch);
        dX.middleRows(s0, len).noalias() +=
            dY.middleRows(r0, len) * P.transpose();
      }
    }
    return;
  }

  Mat<T> col = Mat<T>::Zero(m, in_ch * k);
  for (int ci = 0; ci < in_ch; ++ci) {
    const T* xc = x + static_cast<size_t>(ci) * n;
    for (int t = 0; t < k; ++t) {
      T* dst = col.data() + static_cast<size_t>(ci * k + t) * m;
      for (int i = 0; i < m; ++i) {
        int src = stride * i + t - pad;
        dst[i] = (src >= 0 && src < n) ? xc[src] : T(0);
      }
    }
  }
  MatMap<T> dW(dw, in_ch * k, out_ch);
  dW.noalias() += col.transpose() * dY;
  if (dx) {
    ConstMatMap<T> W(w, in_ch * k, out_ch);
    Mat<T> dcol(m, in_ch * k);
    dcol.noalias() = dY * W.transpose();
    for (int ci = 0; ci < in_ch; ++ci) {
      T* dxc = dx + static_cast<size_t>(ci) * n;
      for (int t = 0; t < k; ++t) {
        const T* src = dcol.data() + static_cast<size_t>(ci * k + t) * m;
        for (int i = 0; i < m; ++i) {
          int dst = stride * i + t - pad;
          if (dst >= 0 && dst < n) dxc[dst] += src[i];
        }
      }
    }
  }
}

}  // namespace stofnet::detail
