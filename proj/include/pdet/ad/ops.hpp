#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "pdet/ad/tensor.hpp"

namespace pdet::ad {

// ---- elementwise, trailing-dimension broadcasting --------------------------
// Two shapes broadcast when, aligned at the back, every pair of extents is
// equal or one of them is 1. Anything else is a ShapeError naming both.
Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// ---- reductions -------------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// ---- shape ------------------------------------------------------------------
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm);
// Swaps the last two axes.
Tensor transpose(const Tensor& a);
// [begin, end) along axis.
Tensor slice(const Tensor& a, std::int64_t axis, std::size_t begin,
             std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis);

// ---- linear algebra ---------------------------------------------------------
// Batched product over the last two axes; leading axes broadcast. With
// trans_a the stored layout of a is [.., k, m] (likewise trans_b: [.., n, k]).
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false,
              bool trans_b = false);

// x[.., in] * w[out, in]^T + bias[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// ---- non-overlapping patching ------------------------------------------------
// x[C, D1..Dn] -> [n_patches, C * P1..Pn]; patches in row-major grid order,
// each row ordered (c, p1, .., pn). Every Di must be divisible by Pi.
Tensor extract_patches(const Tensor& x, const std::vector<std::size_t>& patch);
// Exact inverse of extract_patches: rows [n_patches, C * prod(P)] back to
// [C, D1..Dn].
Tensor fold_patches(const Tensor& rows, std::size_t channels,
                    const Shape& spatial, const std::vector<std::size_t>& patch);

// Strided convolution with stride == kernel extent:
// x[C_in, D..] * kernel[C_out, C_in, P..] (+ bias[C_out]) -> [C_out, D/P..].
Tensor conv_nd(const Tensor& x, const Tensor& kernel,
               const Tensor& bias = Tensor());
// Its adjoint: x[C_in, G..] scatters through kernel[C_in, C_out, P..]
// (+ bias[C_out]) -> [C_out, G*P..].
Tensor deconv_nd(const Tensor& x, const Tensor& kernel,
                 const Tensor& bias = Tensor());

// ---- neural-net primitives ----------------------------------------------------
// Normalizes over the last axis: (x - mean) / sqrt(var + eps) * gamma + beta.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-5);
Tensor softmax(const Tensor& x, std::int64_t axis = -1);
// tanh approximation:
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Tensor gelu(const Tensor& x);

// ---- spectral ---------------------------------------------------------------
// Complex values are a trailing axis of extent 2 holding (re, im).
//
// rfft over the last `naxes` (1 or 2) axes of a real tensor:
//   [.., N] -> [.., N/2+1, 2]               (naxes = 1)
//   [.., Nx, Ny] -> [.., Nx, Ny/2+1, 2]     (naxes = 2)
// Unnormalized forward transform; every transformed extent a power of two.
Tensor rfft(const Tensor& x, int naxes = 1);
// Inverse of rfft with 1/N normalization; n_last is the real output extent of
// the last axis.
Tensor irfft(const Tensor& spec, std::size_t n_last, int naxes = 1);

// Per-mode complex channel mixing of a truncated spectrum:
//   spec[C_in, (Nx,) M, 2], weights[C_in, C_out, (2*mx,) my, 2]
// out[o, k] = sum_i spec[i, k] * weights[i, o, k] for kept modes, 0 elsewhere.
// Kept modes: ky < my on the last axis; in 2D also kx < mx or kx >= Nx - mx.
Tensor spectral_mix(const Tensor& spec, const Tensor& weights,
                    const std::vector<std::size_t>& modes);

}  // namespace pdet::ad
