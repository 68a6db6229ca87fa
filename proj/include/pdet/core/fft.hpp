#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

// Radix-2 complex FFT shared by the autodiff spectral ops and the solvers.
namespace pdet::fft {

using cplx = std::complex<double>;

constexpr bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place transform. Forward is unnormalized with exp(-2*pi*i*k*n/N);
// inverse uses exp(+...) and scales by 1/N. Throws ShapeError unless
// data.size() is a power of two.
void transform(std::span<cplx> data, bool inverse);

// Real input of length N -> N/2 + 1 bins.
std::vector<cplx> rfft(std::span<const double> x);

// N/2 + 1 bins -> real length N. The imaginary parts of the DC and Nyquist
// bins are ignored (Hermitian extension of the remaining bins).
std::vector<double> irfft(std::span<const cplx> bins, std::size_t n);

}  // namespace pdet::fft
