#include "pdet/core/fft.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "pdet/core/error.hpp"

namespace pdet::fft {
namespace {

// exp(+2 pi i k / n) for k < n/2, evaluated directly (no recurrence) and
// cached per thread.
const std::vector<cplx>& twiddles(std::size_t n) {
  thread_local std::map<std::size_t, std::vector<cplx>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<cplx> tw(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    tw[k] = {std::cos(ang), std::sin(ang)};
  }
  return cache.emplace(n, std::move(tw)).first->second;
}

}  // namespace

void transform(std::span<cplx> data, bool inverse) {
  const std::size_t n = data.size();
  if (!is_pow2(n)) {
    throw ShapeError("fft: extent " + std::to_string(n) +
                     " is not a power of two");
  }
  if (n == 1) return;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }

  const auto& tw = twiddles(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const double wr = tw[k * step].real(), wi = sign * tw[k * step].imag();
        const cplx u = data[i + k];
        const cplx x = data[i + k + half];
        const cplx v(x.real() * wr - x.imag() * wi, x.real() * wi + x.imag() * wr);
        data[i + k] = u + v;
        data[i + k + half] = u - v;
      }
    }
  }

  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& z : data) z *= inv;
  }
}

std::vector<cplx> rfft(std::span<const double> x) {
  std::vector<cplx> buf(x.begin(), x.end());
  transform(buf, false);
  buf.resize(x.size() / 2 + 1);
  return buf;
}

std::vector<double> irfft(std::span<const cplx> bins, std::size_t n) {
  if (bins.size() != n / 2 + 1) {
    throw ShapeError("irfft: expected " + std::to_string(n / 2 + 1) +
                     " bins, got " + std::to_string(bins.size()));
  }
  std::vector<cplx> buf(n);
  buf[0] = {bins[0].real(), 0.0};
  for (std::size_t k = 1; k < n / 2; ++k) {
    buf[k] = bins[k];
    buf[n - k] = std::conj(bins[k]);
  }
  if (n >= 2) buf[n / 2] = {bins[n / 2].real(), 0.0};
  transform(buf, true);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
  return out;
}

}  // namespace pdet::fft
