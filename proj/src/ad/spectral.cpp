#include <string>

#include "pdet/ad/ops.hpp"
#include "pdet/core/error.hpp"
#include "pdet/core/fft.hpp"

namespace pdet::ad {
namespace {

using fft::cplx;

void require_pow2(std::size_t n, const char* what) {
  if (!fft::is_pow2(n) || n < 2) {
    throw ShapeError(std::string(what) + ": extent " + std::to_string(n) +
                     " is not a power of two >= 2");
  }
}

// Real line of length n -> m = n/2+1 bins, written as (re, im) pairs.
void rfft_line(const double* x, std::size_t n, double* out) {
  thread_local std::vector<cplx> buf;
  buf.assign(x, x + n);
  fft::transform(buf, false);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    out[2 * k] = buf[k].real();
    out[2 * k + 1] = buf[k].imag();
  }
}

// Adjoint of rfft_line: x[j] += Re(sum_{k<=n/2} g_k e^{+2 pi i k j / n}).
void rfft_line_adjoint(const double* g, std::size_t n, double* x) {
  thread_local std::vector<cplx> buf;
  buf.assign(n, cplx{});
  for (std::size_t k = 0; k <= n / 2; ++k) buf[k] = {g[2 * k], g[2 * k + 1]};
  fft::transform(buf, true);
  const double nn = static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) x[j] += nn * buf[j].real();
}

// Hermitian inverse: m = n/2+1 bins -> real line of length n.
void irfft_line(const double* spec, std::size_t n, double* out) {
  thread_local std::vector<cplx> buf;
  buf.assign(n, cplx{});
  buf[0] = {spec[0], 0.0};
  for (std::size_t k = 1; k < n / 2; ++k) {
    buf[k] = {spec[2 * k], spec[2 * k + 1]};
    buf[n - k] = std::conj(buf[k]);
  }
  buf[n / 2] = {spec[n], 0.0};
  fft::transform(buf, true);
  for (std::size_t j = 0; j < n; ++j) out[j] = buf[j].real();
}

// Adjoint of irfft_line: g_spec[k] += (c_k / n) rfft(g)[k], c_k = 1 at DC and
// Nyquist (imaginary part dropped there), 2 elsewhere.
void irfft_line_adjoint(const double* g, std::size_t n, double* spec) {
  thread_local std::vector<cplx> buf;
  buf.assign(g, g + n);
  fft::transform(buf, false);
  const double inv = 1.0 / static_cast<double>(n);
  spec[0] += buf[0].real() * inv;
  spec[n] += buf[n / 2].real() * inv;
  for (std::size_t k = 1; k < n / 2; ++k) {
    spec[2 * k] += 2.0 * inv * buf[k].real();
    spec[2 * k + 1] += 2.0 * inv * buf[k].imag();
  }
}

// Complex transform along the row axis of a [rows, cols, 2] block, in place.
// scale multiplies the result (used to build adjoints).
void column_fft(double* block, std::size_t rows, std::size_t cols, bool inverse,
                double scale) {
  thread_local std::vector<cplx> buf;
  buf.resize(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) {
      buf[r] = {block[2 * (r * cols + c)], block[2 * (r * cols + c) + 1]};
    }
    fft::transform(buf, inverse);
    for (std::size_t r = 0; r < rows; ++r) {
      block[2 * (r * cols + c)] = scale * buf[r].real();
      block[2 * (r * cols + c) + 1] = scale * buf[r].imag();
    }
  }
}

void check_naxes(int naxes, std::size_t rank_needed, std::size_t rank) {
  if (naxes != 1 && naxes != 2) throw ShapeError("spectral ops support 1 or 2 axes");
  if (rank < rank_needed) throw ShapeError("spectral op: tensor rank too small");
}

}  // namespace

Tensor rfft(const Tensor& x, int naxes) {
  check_naxes(naxes, static_cast<std::size_t>(naxes), x.ndim());
  const Shape& s = x.shape();
  const std::size_t n = s.back();
  require_pow2(n, "rfft");
  const std::size_t rows = naxes == 2 ? s[s.size() - 2] : 1;
  if (naxes == 2) require_pow2(rows, "rfft");
  const std::size_t m = n / 2 + 1;
  const std::size_t batch = x.numel() / (rows * n);
  Shape out_shape = s;
  out_shape.back() = m;
  out_shape.push_back(2);
  std::vector<double> out(batch * rows * m * 2);
  const double* px = x.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    double* blk = out.data() + b * rows * m * 2;
    for (std::size_t r = 0; r < rows; ++r) {
      rfft_line(px + (b * rows + r) * n, n, blk + r * m * 2);
    }
    if (naxes == 2) column_fft(blk, rows, m, false, 1.0);
  }
  TensorImpl* ix = x.impl();
  return Tape::current().record(
      "rfft", std::move(out_shape), std::move(out), {x},
      [ix, batch, rows, n, m, naxes](const TensorImpl& res) {
        if (!ix->requires_grad) return;
        double* gx = ix->grad_buffer();
        std::vector<double> blk(rows * m * 2);
        for (std::size_t b = 0; b < batch; ++b) {
          const double* g = res.grad.data() + b * rows * m * 2;
          blk.assign(g, g + rows * m * 2);
          // adjoint of the forward column FFT is rows * inverse FFT
          if (naxes == 2) column_fft(blk.data(), rows, m, true, static_cast<double>(rows));
          for (std::size_t r = 0; r < rows; ++r) {
            rfft_line_adjoint(blk.data() + r * m * 2, n, gx + (b * rows + r) * n);
          }
        }
      });
}

Tensor irfft(const Tensor& spec, std::size_t n, int naxes) {
  check_naxes(naxes, static_cast<std::size_t>(naxes) + 1, spec.ndim());
  const Shape& s = spec.shape();
  require_pow2(n, "irfft");
  const std::size_t m = n / 2 + 1;
  if (s.back() != 2 || s[s.size() - 2] != m) {
    throw ShapeError("irfft: spectrum " + to_string(s) + " does not match length " +
                     std::to_string(n));
  }
  const std::size_t rows = naxes == 2 ? s[s.size() - 3] : 1;
  if (naxes == 2) require_pow2(rows, "irfft");
  const std::size_t batch = spec.numel() / (rows * m * 2);
  Shape out_shape(s.begin(), s.end() - 1);
  out_shape.back() = n;
  std::vector<double> out(batch * rows * n);
  const double* ps = spec.data().data();
  std::vector<double> blk(rows * m * 2);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = ps + b * rows * m * 2;
    blk.assign(src, src + rows * m * 2);
    if (naxes == 2) column_fft(blk.data(), rows, m, true, 1.0);
    for (std::size_t r = 0; r < rows; ++r) {
      irfft_line(blk.data() + r * m * 2, n, out.data() + (b * rows + r) * n);
    }
  }
  TensorImpl* is = spec.impl();
  return Tape::current().record(
      "irfft", std::move(out_shape), std::move(out), {spec},
      [is, batch, rows, n, m, naxes](const TensorImpl& res) {
        if (!is->requires_grad) return;
        double* gs = is->grad_buffer();
        std::vector<double> blk(rows * m * 2);
        for (std::size_t b = 0; b < batch; ++b) {
          std::fill(blk.begin(), blk.end(), 0.0);
          for (std::size_t r = 0; r < rows; ++r) {
            irfft_line_adjoint(res.grad.data() + (b * rows + r) * n, n, blk.data() + r * m * 2);
          }
          // adjoint of (1/rows) F^H is (1/rows) F
          if (naxes == 2) column_fft(blk.data(), rows, m, false, 1.0 / static_cast<double>(rows));
          double* dst = gs + b * rows * m * 2;
          for (std::size_t i = 0; i < blk.size(); ++i) dst[i] += blk[i];
        }
      });
}

Tensor spectral_mix(const Tensor& spec, const Tensor& weights,
                    const std::vector<std::size_t>& modes) {
  const std::size_t naxes = modes.size();
  if (naxes != 1 && naxes != 2) throw ShapeError("spectral_mix supports 1 or 2 axes");
  const Shape& s = spec.shape();
  const Shape& w = weights.shape();
  if (s.size() != naxes + 2 || s.back() != 2) {
    throw ShapeError("spectral_mix: spectrum must be [C, (Nx,) M, 2], got " + to_string(s));
  }
  const std::size_t c_in = s[0];
  const std::size_t nx = naxes == 2 ? s[1] : 1;
  const std::size_t my_all = s[s.size() - 2];
  const std::size_t my = modes.back();
  const std::size_t mx = naxes == 2 ? modes[0] : 1;
  if (my > my_all || (naxes == 2 && 2 * mx > nx)) {
    throw ShapeError("spectral_mix: modes " + to_string(Shape(modes)) +
                     " exceed the Nyquist limit of spectrum " + to_string(s));
  }
  const std::size_t wx = naxes == 2 ? 2 * mx : 1;
  Shape expect{c_in, w.size() > 1 ? w[1] : 0};
  if (naxes == 2) expect.push_back(wx);
  expect.push_back(my);
  expect.push_back(2);
  if (w != expect) {
    throw ShapeError("spectral_mix: weights " + to_string(w) + ", expected " + to_string(expect));
  }
  const std::size_t c_out = w[1];

  // kept (spectrum row, weight row) pairs along the x axis
  std::vector<std::pair<std::size_t, std::size_t>> xrows;
  if (naxes == 1) {
    xrows.emplace_back(0, 0);
  } else {
    for (std::size_t r = 0; r < mx; ++r) xrows.emplace_back(r, r);
    for (std::size_t r = 0; r < mx; ++r) xrows.emplace_back(nx - mx + r, mx + r);
  }

  Shape out_shape = s;
  out_shape[0] = c_out;
  std::vector<double> out(c_out * nx * my_all * 2, 0.0);
  const double* px = spec.data().data();
  const double* pw = weights.data().data();
  auto sidx = [&](std::size_t c, std::size_t r, std::size_t k) {
    return 2 * ((c * nx + r) * my_all + k);
  };
  auto widx = [&](std::size_t i, std::size_t o, std::size_t r, std::size_t k) {
    return 2 * (((i * c_out + o) * wx + r) * my + k);
  };
  for (auto [sr, wr] : xrows) {
    for (std::size_t k = 0; k < my; ++k) {
      for (std::size_t i = 0; i < c_in; ++i) {
        const double xr = px[sidx(i, sr, k)], xi = px[sidx(i, sr, k) + 1];
        for (std::size_t o = 0; o < c_out; ++o) {
          const double wr_ = pw[widx(i, o, wr, k)], wi = pw[widx(i, o, wr, k) + 1];
          out[sidx(o, sr, k)] += xr * wr_ - xi * wi;
          out[sidx(o, sr, k) + 1] += xr * wi + xi * wr_;
        }
      }
    }
  }
  TensorImpl* is = spec.impl();
  TensorImpl* iw = weights.impl();
  return Tape::current().record(
      "spectral_mix", std::move(out_shape), std::move(out), {spec, weights},
      [is, iw, xrows, c_in, c_out, nx, my_all, my, wx](const TensorImpl& res) {
        const double* g = res.grad.data();
        const double* px = is->data.data();
        const double* pw = iw->data.data();
        double* gx = is->requires_grad ? is->grad_buffer() : nullptr;
        double* gw = iw->requires_grad ? iw->grad_buffer() : nullptr;
        auto sidx = [&](std::size_t c, std::size_t r, std::size_t k) {
          return 2 * ((c * nx + r) * my_all + k);
        };
        auto widx = [&](std::size_t i, std::size_t o, std::size_t r, std::size_t k) {
          return 2 * (((i * c_out + o) * wx + r) * my + k);
        };
        for (auto [sr, wr] : xrows) {
          for (std::size_t k = 0; k < my; ++k) {
            for (std::size_t i = 0; i < c_in; ++i) {
              const double xr = px[sidx(i, sr, k)], xi = px[sidx(i, sr, k) + 1];
              for (std::size_t o = 0; o < c_out; ++o) {
                const double gr = g[sidx(o, sr, k)], gi = g[sidx(o, sr, k) + 1];
                const std::size_t wj = widx(i, o, wr, k);
                if (gx) {
                  // conj(w) * g
                  gx[sidx(i, sr, k)] += pw[wj] * gr + pw[wj + 1] * gi;
                  gx[sidx(i, sr, k) + 1] += pw[wj] * gi - pw[wj + 1] * gr;
                }
                if (gw) {
                  // conj(x) * g
                  gw[wj] += xr * gr + xi * gi;
                  gw[wj + 1] += xr * gi - xi * gr;
                }
              }
            }
          }
        }
      });
}

}  // namespace pdet::ad
