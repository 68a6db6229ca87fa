#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "pdet/ad/ops.hpp"
#include "pdet/core/error.hpp"

namespace pdet::ad {

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps) {
  if (eps <= 0.0) throw ShapeError("layernorm eps must be positive");
  const std::size_t h = x.shape().back();
  if (gamma.numel() != h || beta.numel() != h) {
    throw ShapeError("layernorm: gamma/beta " + to_string(gamma.shape()) +
                     " do not match last axis of " + to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / h;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const double* px = x.data().data();
  const double* pg = gamma.data().data();
  const double* pb = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = px + r * h;
    double mu = 0.0;
    for (std::size_t j = 0; j < h; ++j) mu += row[j];
    mu /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(h);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < h; ++j) {
      const double xh = (row[j] - mu) * is;
      xhat[r * h + j] = xh;
      out[r * h + j] = xh * pg[j] + pb[j];
    }
  }
  TensorImpl* ix = x.impl();
  TensorImpl* ig = gamma.impl();
  TensorImpl* ib = beta.impl();
  return Tape::current().record(
      "layernorm", x.shape(), std::move(out), {x, gamma, beta},
      [ix, ig, ib, h, rows, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const TensorImpl& res) {
        const double* g = res.grad.data();
        if (ig->requires_grad || ib->requires_grad) {
          std::vector<double> gg(h, 0.0), gbeta(h, 0.0);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < h; ++j) {
              gg[j] += g[r * h + j] * xhat[r * h + j];
              gbeta[j] += g[r * h + j];
            }
          }
          ig->accumulate(gg);
          ib->accumulate(gbeta);
        }
        if (!ix->requires_grad) return;
        double* gx = ix->grad_buffer();
        const double* pg = ig->data.data();
        const double inv_h = 1.0 / static_cast<double>(h);
        for (std::size_t r = 0; r < rows; ++r) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < h; ++j) {
            const double d = g[r * h + j] * pg[j];
            m1 += d;
            m2 += d * xhat[r * h + j];
          }
          m1 *= inv_h;
          m2 *= inv_h;
          for (std::size_t j = 0; j < h; ++j) {
            const double d = g[r * h + j] * pg[j];
            gx[r * h + j] += inv_std[r] * (d - m1 - xhat[r * h + j] * m2);
          }
        }
      });
}

Tensor softmax(const Tensor& x, std::int64_t axis_in) {
  const auto rank = static_cast<std::int64_t>(x.ndim());
  const std::int64_t axis = axis_in < 0 ? axis_in + rank : axis_in;
  if (axis < 0 || axis >= rank) throw ShapeError("softmax axis out of range");
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (std::int64_t i = axis + 1; i < rank; ++i) inner *= s[static_cast<std::size_t>(i)];
  const std::size_t len = s[static_cast<std::size_t>(axis)];
  std::vector<double> out(x.numel());
  const double* px = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double mx = px[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, px[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(px[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] *= inv;
    }
  }
  TensorImpl* ix = x.impl();
  return Tape::current().record(
      "softmax", s, std::move(out), {x},
      [ix, outer, inner, len](const TensorImpl& res) {
        if (!ix->requires_grad) return;
        double* gx = ix->grad_buffer();
        const double* y = res.data.data();
        const double* g = res.grad.data();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * len * inner + i;
            double dotp = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
              dotp += g[base + j * inner] * y[base + j * inner];
            }
            for (std::size_t j = 0; j < len; ++j) {
              const std::size_t q = base + j * inner;
              gx[q] += y[q] * (g[q] - dotp);
            }
          }
        }
      });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

// tanh through a single exp; libm tanh is several times slower and the
// absolute error here stays at the 1e-16 level.
inline double fast_tanh(double u) { return 1.0 - 2.0 / (std::exp(2.0 * u) + 1.0); }

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto th = std::make_shared<std::vector<double>>(x.numel());
  const double* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = px[i];
    const double t = fast_tanh(kGeluC * (v + kGeluA * v * v * v));
    (*th)[i] = t;
    out[i] = 0.5 * v * (1.0 + t);
  }
  TensorImpl* ix = x.impl();
  return Tape::current().record(
      "gelu", x.shape(), std::move(out), {x}, [ix, th](const TensorImpl& res) {
        if (!ix->requires_grad) return;
        double* gx = ix->grad_buffer();
        const double* px = ix->data.data();
        for (std::size_t i = 0; i < res.grad.size(); ++i) {
          const double v = px[i];
          const double t = (*th)[i];
          const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
          gx[i] += res.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
        }
      });
}

}  // namespace pdet::ad
