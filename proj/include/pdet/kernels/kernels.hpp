#pragma once

// Dense double-precision inner loops used by the autodiff core.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2+FMA variant. The active table is chosen once at first use from the
// CPU feature bits; PDET_KERNELS=scalar forces the reference path.

#include <cstddef>
#include <string_view>

namespace pdet::kernels {

// C[m x n] (+)= A[m x k] * B[k x n]
// A(i, p) lives at a[i * a_rs + p * a_cs]; B and C are row-major with
// leading dimensions ldb / ldc.
using GemmFn = void (*)(std::size_t m, std::size_t n, std::size_t k,
                        const double* a, std::size_t a_rs, std::size_t a_cs,
                        const double* b, std::size_t ldb, double* c,
                        std::size_t ldc, bool accumulate);
using DotFn = double (*)(const double* x, const double* y, std::size_t n);
using AxpyFn = void (*)(double alpha, const double* x, double* y,
                        std::size_t n);
using BinaryFn = void (*)(const double* x, const double* y, double* out,
                          std::size_t n);
using ScaleFn = void (*)(double alpha, const double* x, double* out,
                         std::size_t n);
using SumFn = double (*)(const double* x, std::size_t n);

struct KernelTable {
  std::string_view name;
  GemmFn gemm;
  DotFn dot;
  AxpyFn axpy;
  BinaryFn add;
  BinaryFn sub;
  BinaryFn mul;
  ScaleFn scale;
  SumFn sum;
};

const KernelTable& scalar_table();
// nullptr when the binary was built without AVX2 support.
const KernelTable* avx2_table();

bool cpu_has_avx2();

// The table selected for this process.
const KernelTable& active();

// Test hook: forces a table for the rest of the process.
void set_active(const KernelTable& table);

}  // namespace pdet::kernels
