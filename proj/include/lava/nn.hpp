#pragma once

#include <cmath>
#include <cstring>
#include <tuple>
#include <type_traits>

#include "lava/common.hpp"
#include "lava/gemm.hpp"
#include "lava/tensor.hpp"

namespace lava::nn {

enum class Activation { ReLU, Sigmoid, Tanh };

inline int64_t conv1d_out_len(int64_t L, int64_t K, int64_t S, int64_t P) {
  return (L + 2 * P - K) / S + 1;
}

inline int64_t conv_transpose1d_out_len(int64_t L, int64_t K, int64_t S, int64_t P, int64_t OP) {
  return (L - 1) * S - 2 * P + K + OP;
}

namespace detail {

// Valid t range for reads x[t*S + off] with t in [0, Lout): returns the
// exclusive upper bound; lower bound comes from t_lo below.
template <class T>
int64_t strided_hi(int64_t L, int64_t off, int64_t S) {
  return (L - 1 - off) < 0 ? 0 : (L - 1 - off) / S + 1;
}

// Unrolls x[C,L] into M[C*K, Lout] with M[c*K+k, t] = x[c, t*S + k - P],
// zero outside [0, L).
template <class T>
void im2col(const T* x, int64_t C, int64_t L, int64_t K, int64_t S, int64_t P, int64_t Lout,
            T* M) {
  for (int64_t c = 0; c < C; ++c) {
    const T* xc = x + c * L;
    for (int64_t k = 0; k < K; ++k) {
      T* row = M + (c * K + k) * Lout;
      const int64_t off = k - P;
      // valid t range: 0 <= t*S + off < L
      int64_t t_lo = off < 0 ? (-off + S - 1) / S : 0;
      int64_t t_hi = strided_hi<T>(L, off, S);
      t_lo = std::min(std::max<int64_t>(t_lo, 0), Lout);
      t_hi = std::min(std::max(t_hi, t_lo), Lout);
      if (t_lo > 0) std::memset(row, 0, sizeof(T) * static_cast<size_t>(t_lo));
      if (S == 1) {
        if (t_hi > t_lo)
          std::memcpy(row + t_lo, xc + t_lo + off, sizeof(T) * static_cast<size_t>(t_hi - t_lo));
      } else {
        for (int64_t t = t_lo; t < t_hi; ++t) row[t] = xc[t * S + off];
      }
      if (t_hi < Lout) std::memset(row + t_hi, 0, sizeof(T) * static_cast<size_t>(Lout - t_hi));
    }
  }
}

// Adjoint of im2col: scatters M[c*K+k, t] into x[c, t*S + k - P] with +=.
template <class T>
void col2im_add(const T* M, int64_t C, int64_t L, int64_t K, int64_t S, int64_t P, int64_t Lcol,
                T* x) {
  for (int64_t c = 0; c < C; ++c) {
    T* xc = x + c * L;
    for (int64_t k = 0; k < K; ++k) {
      const T* row = M + (c * K + k) * Lcol;
      const int64_t off = k - P;
      int64_t t_lo = off < 0 ? (-off + S - 1) / S : 0;
      int64_t t_hi = strided_hi<T>(L, off, S);
      t_lo = std::min(std::max<int64_t>(t_lo, 0), Lcol);
      t_hi = std::min(std::max(t_hi, t_lo), Lcol);
      if (S == 1) {
        T* dst = xc + t_lo + off;
        for (int64_t t = t_lo; t < t_hi; ++t) dst[t - t_lo] += row[t];
      } else {
        for (int64_t t = t_lo; t < t_hi; ++t) xc[t * S + off] += row[t];
      }
    }
  }
}

template <class T, int Tag = 0>
std::vector<T>& scratch(size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

}  // namespace detail

// x: (B, Cin, L), w: (Cout, Cin, K), b: (Cout) -> (B, Cout, Lout)
template <class T>
TensorT<T> conv1d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                          int64_t S, int64_t P) {
  if (x.rank() != 3 || w.rank() != 3) throw ValidationError("conv1d: x and w must be rank 3");
  if (S < 1) throw ValidationError("conv1d: stride must be >= 1");
  const int64_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const int64_t Cout = w.dim(0), K = w.dim(2);
  if (w.dim(1) != Cin)
    throw ValidationError("conv1d: weight expects " + std::to_string(w.dim(1)) +
                          " input channels, got " + std::to_string(Cin));
  if (b.numel() != Cout) throw ValidationError("conv1d: bias size mismatch");
  const int64_t Lout = conv1d_out_len(L, K, S, P);
  if (Lout < 1) throw ValidationError("conv1d: empty output for L=" + std::to_string(L));

  TensorT<T> y({B, Cout, Lout});
  const int64_t R = Cin * K;
  const bool direct = (K == 1 && S == 1 && P == 0);
  auto& M = detail::scratch<T>(direct ? 0 : static_cast<size_t>(R * Lout));
  for (int64_t bi = 0; bi < B; ++bi) {
    const T* xb = x.data() + bi * Cin * L;
    T* yb = y.data() + bi * Cout * Lout;
    const T* cols = xb;
    if (!direct) {
      detail::im2col(xb, Cin, L, K, S, P, Lout, M.data());
      cols = M.data();
    }
    for (int64_t co = 0; co < Cout; ++co)
      std::fill(yb + co * Lout, yb + (co + 1) * Lout, b.at(co));
    gemm_nn(Cout, R, Lout, w.data(), R, cols, Lout, yb, Lout, /*accumulate=*/true);
  }
  return y;
}

// Gradients of conv1d_forward. grad_b is the sum of grad_out over batch and
// time; per-item contributions to grad_w are reduced in batch order.
template <class T>
std::tuple<TensorT<T>, TensorT<T>, TensorT<T>> conv1d_backward(const TensorT<T>& x,
                                                               const TensorT<T>& w,
                                                               const TensorT<T>& gy, int64_t S,
                                                               int64_t P,
                                                               bool need_grad_x = true) {
  const int64_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const int64_t Cout = w.dim(0), K = w.dim(2);
  const int64_t Lout = conv1d_out_len(L, K, S, P);
  if (gy.rank() != 3 || gy.dim(0) != B || gy.dim(1) != Cout || gy.dim(2) != Lout)
    throw ValidationError("conv1d_backward: grad_out shape " + gy.shape_str() +
                          " does not match forward output");

  TensorT<T> gx = need_grad_x ? TensorT<T>({B, Cin, L}) : TensorT<T>({1});
  TensorT<T> gw({Cout, Cin, K});
  TensorT<T> gb({Cout});
  const int64_t R = Cin * K;
  const bool direct = (K == 1 && S == 1 && P == 0);
  auto& M = detail::scratch<T>(direct ? 0 : static_cast<size_t>(R * Lout));

  for (int64_t bi = 0; bi < B; ++bi) {
    const T* gyb = gy.data() + bi * Cout * Lout;
    for (int64_t co = 0; co < Cout; ++co) {
      T s = 0;
      const T* row = gyb + co * Lout;
      for (int64_t t = 0; t < Lout; ++t) s += row[t];
      gb.at(co) += s;
    }
  }

  for (int64_t bi = 0; bi < B; ++bi) {
    const T* xb = x.data() + bi * Cin * L;
    const T* gyb = gy.data() + bi * Cout * Lout;
    const T* cols = xb;
    if (!direct) {
      detail::im2col(xb, Cin, L, K, S, P, Lout, M.data());
      cols = M.data();
    }
    // gw[Cout, R] += gy_b[Cout, Lout] * cols[R, Lout]^T
    gemm_nt(Cout, Lout, R, gyb, Lout, cols, Lout, gw.data(), R, /*accumulate=*/true);
  }

  if (need_grad_x) {
    if (direct) {
      for (int64_t bi = 0; bi < B; ++bi) {
        const T* gyb = gy.data() + bi * Cout * Lout;
        T* gxb = gx.data() + bi * Cin * L;
        gemm_tn(Cin, Cout, Lout, w.data(), R, gyb, Lout, gxb, L, /*accumulate=*/false);
      }
    } else {
      auto& G = detail::scratch<T, 1>(static_cast<size_t>(R * Lout));
      for (int64_t bi = 0; bi < B; ++bi) {
        const T* gyb = gy.data() + bi * Cout * Lout;
        T* gxb = gx.data() + bi * Cin * L;
        gemm_tn(R, Cout, Lout, w.data(), R, gyb, Lout, G.data(), Lout, /*accumulate=*/false);
        std::memset(gxb, 0, sizeof(T) * static_cast<size_t>(Cin * L));
        detail::col2im_add(G.data(), Cin, L, K, S, P, Lout, gxb);
      }
    }
  }
  return {std::move(gx), std::move(gw), std::move(gb)};
}

// x: (B, Cin, L), w: (Cin, Cout, K), b: (Cout) -> (B, Cout, Lout).
// Exact adjoint of conv1d_forward in x for matching K, S, P.
template <class T>
TensorT<T> conv_transpose1d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                                    int64_t S, int64_t P, int64_t OP) {
  if (x.rank() != 3 || w.rank() != 3)
    throw ValidationError("conv_transpose1d: x and w must be rank 3");
  const int64_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const int64_t Cout = w.dim(1), K = w.dim(2);
  if (w.dim(0) != Cin)
    throw ValidationError("conv_transpose1d: weight expects " + std::to_string(w.dim(0)) +
                          " input channels, got " + std::to_string(Cin));
  if (OP < 0 || OP >= S) throw ValidationError("conv_transpose1d: output padding must be in [0, stride)");
  const int64_t Lout = conv_transpose1d_out_len(L, K, S, P, OP);
  if (Lout < 1) throw ValidationError("conv_transpose1d: empty output");

  TensorT<T> y({B, Cout, Lout});
  const int64_t R = Cout * K;
  auto& G = detail::scratch<T>(static_cast<size_t>(R * L));
  for (int64_t bi = 0; bi < B; ++bi) {
    const T* xb = x.data() + bi * Cin * L;
    T* yb = y.data() + bi * Cout * Lout;
    // G[(co,k), t] = sum_ci w[ci, co, k] * x[ci, t]
    gemm_tn(R, Cin, L, w.data(), R, xb, L, G.data(), L, /*accumulate=*/false);
    for (int64_t co = 0; co < Cout; ++co)
      std::fill(yb + co * Lout, yb + (co + 1) * Lout, b.at(co));
    detail::col2im_add(G.data(), Cout, Lout, K, S, P, L, yb);
  }
  return y;
}

template <class T>
std::tuple<TensorT<T>, TensorT<T>, TensorT<T>> conv_transpose1d_backward(
    const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy, int64_t S, int64_t P,
    int64_t OP) {
  const int64_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const int64_t Cout = w.dim(1), K = w.dim(2);
  const int64_t Lout = conv_transpose1d_out_len(L, K, S, P, OP);
  if (gy.rank() != 3 || gy.dim(0) != B || gy.dim(1) != Cout || gy.dim(2) != Lout)
    throw ValidationError("conv_transpose1d_backward: grad_out shape " + gy.shape_str() +
                          " does not match forward output");

  TensorT<T> gx({B, Cin, L});
  TensorT<T> gw({Cin, Cout, K});
  TensorT<T> gb({Cout});
  const int64_t R = Cout * K;
  auto& M = detail::scratch<T>(static_cast<size_t>(R * L));

  for (int64_t bi = 0; bi < B; ++bi) {
    const T* gyb = gy.data() + bi * Cout * Lout;
    for (int64_t co = 0; co < Cout; ++co) {
      T s = 0;
      const T* row = gyb + co * Lout;
      for (int64_t t = 0; t < Lout; ++t) s += row[t];
      gb.at(co) += s;
    }
  }

  for (int64_t bi = 0; bi < B; ++bi) {
    const T* xb = x.data() + bi * Cin * L;
    const T* gyb = gy.data() + bi * Cout * Lout;
    T* gxb = gx.data() + bi * Cin * L;
    // M[(co,k), t] = gy[co, t*S + k - P]; then gx = w * M, gw += x * M^T
    detail::im2col(gyb, Cout, Lout, K, S, P, L, M.data());
    gemm_nn(Cin, R, L, w.data(), R, M.data(), L, gxb, L, /*accumulate=*/false);
    gemm_nt(Cin, L, R, xb, L, M.data(), L, gw.data(), R, /*accumulate=*/true);
  }
  return {std::move(gx), std::move(gw), std::move(gb)};
}

// Cached intermediates for the batch-norm backward pass.
template <class T>
struct BatchNormCache {
  TensorT<T> xhat;         // normalized input (train mode)
  std::vector<T> inv_std;  // per channel
  bool train = false;
};

// Train mode normalizes per channel over (batch, time) and updates running
// stats; eval mode applies the running stats as a fixed affine map.
template <class T>
TensorT<T> batchnorm1d_forward(const TensorT<T>& x, const TensorT<T>& gamma,
                               const TensorT<T>& beta, TensorT<T>& running_mean,
                               TensorT<T>& running_var, bool train,
                               std::type_identity_t<BatchNormCache<T>>* cache, T eps = T(1e-5),
                               T momentum = T(0.1)) {
  if (x.rank() != 3) throw ValidationError("batchnorm1d: input must be rank 3");
  const int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C ||
      running_var.numel() != C)
    throw ValidationError("batchnorm1d: channel count mismatch");

  TensorT<T> y({B, C, L});
  const int64_t N = B * L;
  if (train && N < 2)
    throw ValidationError("batchnorm1d: train mode needs batch*time >= 2");

  if (cache) {
    cache->train = train;
    cache->inv_std.assign(static_cast<size_t>(C), T(0));
    if (train) cache->xhat = TensorT<T>({B, C, L});
  }

  for (int64_t c = 0; c < C; ++c) {
    T mean, inv_std;
    if (train) {
      T s = 0;
      for (int64_t bi = 0; bi < B; ++bi) {
        const T* row = x.data() + (bi * C + c) * L;
        for (int64_t t = 0; t < L; ++t) s += row[t];
      }
      mean = s / static_cast<T>(N);
      T v = 0;
      for (int64_t bi = 0; bi < B; ++bi) {
        const T* row = x.data() + (bi * C + c) * L;
        for (int64_t t = 0; t < L; ++t) {
          const T d = row[t] - mean;
          v += d * d;
        }
      }
      const T var = v / static_cast<T>(N);
      const T var_unbiased = v / static_cast<T>(N - 1);
      running_mean.at(c) = (T(1) - momentum) * running_mean.at(c) + momentum * mean;
      running_var.at(c) = (T(1) - momentum) * running_var.at(c) + momentum * var_unbiased;
      inv_std = T(1) / std::sqrt(var + eps);
    } else {
      mean = running_mean.at(c);
      inv_std = T(1) / std::sqrt(running_var.at(c) + eps);
    }
    const T g = gamma.at(c), bta = beta.at(c);
    for (int64_t bi = 0; bi < B; ++bi) {
      const T* row = x.data() + (bi * C + c) * L;
      T* out = y.data() + (bi * C + c) * L;
      T* xh = (cache && train) ? cache->xhat.data() + (bi * C + c) * L : nullptr;
      for (int64_t t = 0; t < L; ++t) {
        const T h = (row[t] - mean) * inv_std;
        if (xh) xh[t] = h;
        out[t] = g * h + bta;
      }
    }
    if (cache) cache->inv_std[static_cast<size_t>(c)] = inv_std;
  }
  return y;
}

template <class T>
std::tuple<TensorT<T>, TensorT<T>, TensorT<T>> batchnorm1d_backward(const TensorT<T>& gy,
                                                                    const TensorT<T>& gamma,
                                                                    const BatchNormCache<T>& cache,
                                                                    int64_t B, int64_t C,
                                                                    int64_t L) {
  TensorT<T> gx({B, C, L});
  TensorT<T> ggamma({C});
  TensorT<T> gbeta({C});
  const int64_t N = B * L;
  for (int64_t c = 0; c < C; ++c) {
    T sum_gy = 0, sum_gy_xhat = 0;
    if (cache.train) {
      for (int64_t bi = 0; bi < B; ++bi) {
        const T* g = gy.data() + (bi * C + c) * L;
        const T* xh = cache.xhat.data() + (bi * C + c) * L;
        for (int64_t t = 0; t < L; ++t) {
          sum_gy += g[t];
          sum_gy_xhat += g[t] * xh[t];
        }
      }
      ggamma.at(c) = sum_gy_xhat;
      gbeta.at(c) = sum_gy;
      const T scale = gamma.at(c) * cache.inv_std[static_cast<size_t>(c)] / static_cast<T>(N);
      for (int64_t bi = 0; bi < B; ++bi) {
        const T* g = gy.data() + (bi * C + c) * L;
        const T* xh = cache.xhat.data() + (bi * C + c) * L;
        T* out = gx.data() + (bi * C + c) * L;
        for (int64_t t = 0; t < L; ++t)
          out[t] = scale * (static_cast<T>(N) * g[t] - sum_gy - xh[t] * sum_gy_xhat);
      }
    } else {
      // eval mode is a fixed affine map; gamma/beta grads are still defined
      // (they are frozen in practice but the layer stays differentiable)
      const T scale = gamma.at(c) * cache.inv_std[static_cast<size_t>(c)];
      for (int64_t bi = 0; bi < B; ++bi) {
        const T* g = gy.data() + (bi * C + c) * L;
        T* out = gx.data() + (bi * C + c) * L;
        for (int64_t t = 0; t < L; ++t) {
          out[t] = scale * g[t];
          sum_gy += g[t];
        }
      }
      gbeta.at(c) = sum_gy;
      ggamma.at(c) = 0;  // xhat not cached in eval mode; unused for frozen stats
    }
  }
  return {std::move(gx), std::move(ggamma), std::move(gbeta)};
}

template <class T>
TensorT<T> activation_forward(const TensorT<T>& x, Activation kind) {
  TensorT<T> y(x.shape());
  const int64_t n = x.numel();
  switch (kind) {
    case Activation::ReLU:
      for (int64_t i = 0; i < n; ++i) y.at(i) = x.at(i) > T(0) ? x.at(i) : T(0);
      break;
    case Activation::Sigmoid:
      for (int64_t i = 0; i < n; ++i) y.at(i) = T(1) / (T(1) + std::exp(-x.at(i)));
      break;
    case Activation::Tanh:
      for (int64_t i = 0; i < n; ++i) y.at(i) = std::tanh(x.at(i));
      break;
  }
  return y;
}

// Backward from the cached output (all three have output-expressible
// derivatives; ReLU takes the zero subgradient at 0).
template <class T>
TensorT<T> activation_backward(const TensorT<T>& gy, const TensorT<T>& y, Activation kind) {
  TensorT<T> gx(y.shape());
  const int64_t n = y.numel();
  switch (kind) {
    case Activation::ReLU:
      for (int64_t i = 0; i < n; ++i) gx.at(i) = y.at(i) > T(0) ? gy.at(i) : T(0);
      break;
    case Activation::Sigmoid:
      for (int64_t i = 0; i < n; ++i) gx.at(i) = gy.at(i) * y.at(i) * (T(1) - y.at(i));
      break;
    case Activation::Tanh:
      for (int64_t i = 0; i < n; ++i) gx.at(i) = gy.at(i) * (T(1) - y.at(i) * y.at(i));
      break;
  }
  return gx;
}

// (B, C, T) -> (B, C, 1), arithmetic mean over time.
template <class T>
TensorT<T> adaptive_avg_pool1_forward(const TensorT<T>& x) {
  if (x.rank() != 3) throw ValidationError("adaptive_avg_pool1: input must be rank 3");
  const int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  TensorT<T> y({B, C, 1});
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t c = 0; c < C; ++c) {
      const T* row = x.data() + (bi * C + c) * L;
      T s = 0;
      for (int64_t t = 0; t < L; ++t) s += row[t];
      y.at(bi, c, 0) = s / static_cast<T>(L);
    }
  return y;
}

template <class T>
TensorT<T> adaptive_avg_pool1_backward(const TensorT<T>& gy, int64_t L) {
  const int64_t B = gy.dim(0), C = gy.dim(1);
  TensorT<T> gx({B, C, L});
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t c = 0; c < C; ++c) {
      const T g = gy.at(bi, c, 0) / static_cast<T>(L);
      T* row = gx.data() + (bi * C + c) * L;
      for (int64_t t = 0; t < L; ++t) row[t] = g;
    }
  return gx;
}

// x: (B, Fin), w: (Fout, Fin), b: (Fout) -> (B, Fout)
template <class T>
TensorT<T> linear_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  if (x.rank() != 2 || w.rank() != 2) throw ValidationError("linear: x and w must be rank 2");
  const int64_t B = x.dim(0), Fin = x.dim(1), Fout = w.dim(0);
  if (w.dim(1) != Fin)
    throw ValidationError("linear: weight expects " + std::to_string(w.dim(1)) +
                          " features, got " + std::to_string(Fin));
  TensorT<T> y({B, Fout});
  gemm_nt(B, Fin, Fout, x.data(), Fin, w.data(), Fin, y.data(), Fout, /*accumulate=*/false);
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t f = 0; f < Fout; ++f) y.at(bi, f) += b.at(f);
  return y;
}

template <class T>
std::tuple<TensorT<T>, TensorT<T>, TensorT<T>> linear_backward(const TensorT<T>& x,
                                                               const TensorT<T>& w,
                                                               const TensorT<T>& gy) {
  const int64_t B = x.dim(0), Fin = x.dim(1), Fout = w.dim(0);
  if (gy.rank() != 2 || gy.dim(0) != B || gy.dim(1) != Fout)
    throw ValidationError("linear_backward: grad shape mismatch");
  TensorT<T> gx({B, Fin});
  TensorT<T> gw({Fout, Fin});
  TensorT<T> gb({Fout});
  gemm_nn(B, Fout, Fin, gy.data(), Fout, w.data(), Fin, gx.data(), Fin, /*accumulate=*/false);
  gemm_tn(Fout, B, Fin, gy.data(), Fout, x.data(), Fin, gw.data(), Fin, /*accumulate=*/false);
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t f = 0; f < Fout; ++f) gb.at(f) += gy.at(bi, f);
  return {std::move(gx), std::move(gw), std::move(gb)};
}

// Max-subtracted softmax over a contiguous row of n logits.
template <class T>
void softmax_row(const T* logits, int64_t n, T* probs) {
  T mx = logits[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  T s = 0;
  for (int64_t i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - mx);
    s += probs[i];
  }
  const T inv = T(1) / s;
  for (int64_t i = 0; i < n; ++i) probs[i] *= inv;
}

template <class T>
std::vector<T> softmax(const std::vector<T>& logits) {
  if (logits.empty()) throw ValidationError("softmax: empty logits");
  std::vector<T> probs(logits.size());
  softmax_row(logits.data(), static_cast<int64_t>(logits.size()), probs.data());
  return probs;
}

// Mean softmax cross-entropy over the batch; grad w.r.t. logits is
// (softmax - onehot) / B.
template <class T>
T cross_entropy(const TensorT<T>& logits, const std::vector<int>& labels, TensorT<T>* grad) {
  const int64_t B = logits.dim(0), n = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != B)
    throw ValidationError("cross_entropy: label count mismatch");
  if (grad) *grad = TensorT<T>({B, n});
  std::vector<T> p(static_cast<size_t>(n));
  T loss = 0;
  for (int64_t bi = 0; bi < B; ++bi) {
    softmax_row(logits.data() + bi * n, n, p.data());
    const int y = labels[static_cast<size_t>(bi)];
    if (y < 0 || y >= n) throw ValidationError("cross_entropy: label out of range");
    loss -= std::log(std::max(p[static_cast<size_t>(y)], T(1e-30)));
    if (grad) {
      T* g = grad->data() + bi * n;
      for (int64_t c = 0; c < n; ++c) g[c] = p[static_cast<size_t>(c)] / static_cast<T>(B);
      g[y] -= T(1) / static_cast<T>(B);
    }
  }
  return loss / static_cast<T>(B);
}

}  // namespace lava::nn
