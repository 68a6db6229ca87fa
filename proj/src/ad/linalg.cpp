#include <string>

#include "pdet/ad/ops.hpp"
#include "pdet/core/error.hpp"
#include "pdet/kernels/kernels.hpp"

namespace pdet::ad {
namespace {

// C[m x n] (+)= op(A) op(B). A is stored [m, k] ([k, m] when ta); B is stored
// [k, n] ([n, k] when tb).
void gemm_op(std::size_t m, std::size_t n, std::size_t k, const double* a,
             bool ta, const double* b, bool tb, double* c, bool accumulate) {
  thread_local std::vector<double> scratch;
  if (tb) {
    scratch.resize(k * n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) scratch[p * n + j] = b[j * k + p];
    }
    b = scratch.data();
  }
  const std::size_t a_rs = ta ? 1 : k;
  const std::size_t a_cs = ta ? m : 1;
  kernels::active().gemm(m, n, k, a, a_rs, a_cs, b, n, c, n, accumulate);
}

// Matrix-unit strides of a batch shape over the broadcast batch shape.
std::vector<std::size_t> batch_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> st(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = in.size(); i-- > 0;) {
    if (in[i] != 1) st[off + i] = stride;
    stride *= in[i];
  }
  return st;
}

struct BatchPlan {
  Shape batch;
  std::vector<std::size_t> a_index;  // matrix index into a per output batch
  std::vector<std::size_t> b_index;
};

BatchPlan plan_batches(const Shape& a, const Shape& b) {
  const Shape ab(a.begin(), a.end() - 2);
  const Shape bb(b.begin(), b.end() - 2);
  BatchPlan plan;
  plan.batch = broadcast_shape(ab.empty() ? Shape{1} : ab, bb.empty() ? Shape{1} : bb);
  if (ab.empty() && bb.empty()) plan.batch.clear();
  const std::size_t nb = numel(plan.batch);
  const auto sa = batch_strides(ab, plan.batch);
  const auto sb = batch_strides(bb, plan.batch);
  std::vector<std::size_t> idx(plan.batch.size(), 0);
  for (std::size_t t = 0; t < nb; ++t) {
    std::size_t ia = 0, ib = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    plan.a_index.push_back(ia);
    plan.b_index.push_back(ib);
    for (std::size_t d = idx.size(); d-- > 0;) {
      if (++idx[d] < plan.batch[d]) break;
      idx[d] = 0;
    }
  }
  return plan;
}

// Permutation for non-overlapping patching: rows[o] = x[map[o]].
std::vector<std::size_t> patch_map(std::size_t channels, const Shape& spatial,
                                   const std::vector<std::size_t>& patch) {
  const std::size_t nd = spatial.size();
  if (patch.size() != nd) {
    throw ShapeError("patch rank " + std::to_string(patch.size()) +
                     " does not match spatial rank " + std::to_string(nd));
  }
  Shape grid(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    if (patch[i] == 0 || spatial[i] % patch[i] != 0) {
      throw ShapeError("spatial extents " + to_string(spatial) +
                       " are not divisible by patch " + to_string(patch));
    }
    grid[i] = spatial[i] / patch[i];
  }
  std::vector<std::size_t> sp_stride(nd, 1);
  for (std::size_t i = nd; i-- > 1;) sp_stride[i - 1] = sp_stride[i] * spatial[i];
  const std::size_t vol = numel(spatial);
  const std::size_t n_patch = numel(grid);
  const std::size_t patch_vol = numel(patch);

  std::vector<std::size_t> map;
  map.reserve(channels * vol);
  std::vector<std::size_t> g(nd, 0), p(nd, 0);
  for (std::size_t r = 0; r < n_patch; ++r) {
    std::size_t base = 0;
    for (std::size_t i = 0; i < nd; ++i) base += g[i] * patch[i] * sp_stride[i];
    for (std::size_t c = 0; c < channels; ++c) {
      std::fill(p.begin(), p.end(), 0);
      for (std::size_t q = 0; q < patch_vol; ++q) {
        std::size_t off = base;
        for (std::size_t i = 0; i < nd; ++i) off += p[i] * sp_stride[i];
        map.push_back(c * vol + off);
        for (std::size_t i = nd; i-- > 0;) {
          if (++p[i] < patch[i]) break;
          p[i] = 0;
        }
      }
    }
    for (std::size_t i = nd; i-- > 0;) {
      if (++g[i] < grid[i]) break;
      g[i] = 0;
    }
  }
  return map;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.ndim() < 2 || b.ndim() < 2) {
    throw ShapeError("matmul needs rank >= 2 operands, got " + to_string(a.shape()) +
                     " and " + to_string(b.shape()));
  }
  const std::size_t ra = a.ndim(), rb = b.ndim();
  const std::size_t m = trans_a ? a.shape()[ra - 1] : a.shape()[ra - 2];
  const std::size_t k = trans_a ? a.shape()[ra - 2] : a.shape()[ra - 1];
  const std::size_t kb = trans_b ? b.shape()[rb - 1] : b.shape()[rb - 2];
  const std::size_t n = trans_b ? b.shape()[rb - 2] : b.shape()[rb - 1];
  if (k != kb) {
    throw ShapeError("matmul inner dimension mismatch: " + to_string(a.shape()) +
                     " x " + to_string(b.shape()));
  }
  BatchPlan plan = plan_batches(a.shape(), b.shape());
  Shape out_shape = plan.batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  const std::size_t nb = plan.a_index.size();
  std::vector<double> out(nb * m * n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t t = 0; t < nb; ++t) {
    gemm_op(m, n, k, pa + plan.a_index[t] * m * k, trans_a,
            pb + plan.b_index[t] * k * n, trans_b, out.data() + t * m * n, false);
  }
  TensorImpl* ia = a.impl();
  TensorImpl* ib = b.impl();
  return Tape::current().record(
      "matmul", std::move(out_shape), std::move(out), {a, b},
      [ia, ib, m, n, k, trans_a, trans_b, plan = std::move(plan)](const TensorImpl& res) {
        const double* g = res.grad.data();
        const std::size_t nb = plan.a_index.size();
        if (ia->requires_grad) {
          double* ga = ia->grad_buffer();
          const double* pb = ib->data.data();
          for (std::size_t t = 0; t < nb; ++t) {
            const double* gt = g + t * m * n;
            const double* bt = pb + plan.b_index[t] * k * n;
            double* gat = ga + plan.a_index[t] * m * k;
            if (!trans_a) {
              gemm_op(m, k, n, gt, false, bt, !trans_b, gat, true);
            } else {
              gemm_op(k, m, n, bt, trans_b, gt, true, gat, true);
            }
          }
        }
        if (ib->requires_grad) {
          double* gb = ib->grad_buffer();
          const double* pa = ia->data.data();
          for (std::size_t t = 0; t < nb; ++t) {
            const double* gt = g + t * m * n;
            const double* at = pa + plan.a_index[t] * m * k;
            double* gbt = gb + plan.b_index[t] * k * n;
            if (!trans_b) {
              gemm_op(k, n, m, at, !trans_a, gt, false, gbt, true);
            } else {
              gemm_op(n, k, m, gt, true, at, trans_a, gbt, true);
            }
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.ndim() != 2) throw ShapeError("linear weight must be rank 2, got " + to_string(w.shape()));
  const std::size_t out_f = w.shape()[0];
  const std::size_t in_f = w.shape()[1];
  if (x.shape().back() != in_f) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " vs weight " +
                     to_string(w.shape()));
  }
  if (bias.defined() && (bias.numel() != out_f)) {
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " vs weight " +
                     to_string(w.shape()));
  }
  const std::size_t rows = x.numel() / in_f;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  std::vector<double> out(rows * out_f);
  gemm_op(rows, out_f, in_f, x.data().data(), false, w.data().data(), true,
          out.data(), false);
  if (bias.defined()) {
    const auto& kt = kernels::active();
    const double* pb = bias.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      kt.add(out.data() + r * out_f, pb, out.data() + r * out_f, out_f);
    }
  }
  TensorImpl* ix = x.impl();
  TensorImpl* iw = w.impl();
  TensorImpl* ibias = bias.defined() ? bias.impl() : nullptr;
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return Tape::current().record(
      "linear", std::move(out_shape), std::move(out), inputs,
      [ix, iw, ibias, rows, in_f, out_f](const TensorImpl& res) {
        const double* g = res.grad.data();
        if (ix->requires_grad) {
          gemm_op(rows, in_f, out_f, g, false, iw->data.data(), false,
                  ix->grad_buffer(), true);
        }
        if (iw->requires_grad) {
          gemm_op(out_f, in_f, rows, g, true, ix->data.data(), false,
                  iw->grad_buffer(), true);
        }
        if (ibias != nullptr && ibias->requires_grad) {
          double* gb = ibias->grad_buffer();
          const auto& kt = kernels::active();
          for (std::size_t r = 0; r < rows; ++r) kt.axpy(1.0, g + r * out_f, gb, out_f);
        }
      });
}

Tensor extract_patches(const Tensor& x, const std::vector<std::size_t>& patch) {
  if (x.ndim() < 2) throw ShapeError("extract_patches needs [C, D..], got " + to_string(x.shape()));
  const std::size_t channels = x.shape()[0];
  const Shape spatial(x.shape().begin() + 1, x.shape().end());
  auto map = patch_map(channels, spatial, patch);
  const std::size_t cols = channels * numel(Shape(patch.begin(), patch.end()));
  const std::size_t rows = map.size() / cols;
  std::vector<double> out(map.size());
  const double* src = x.data().data();
  for (std::size_t o = 0; o < map.size(); ++o) out[o] = src[map[o]];
  TensorImpl* ix = x.impl();
  return Tape::current().record(
      "extract_patches", {rows, cols}, std::move(out), {x},
      [ix, map = std::move(map)](const TensorImpl& res) {
        if (!ix->requires_grad) return;
        double* g = ix->grad_buffer();
        for (std::size_t o = 0; o < map.size(); ++o) g[map[o]] += res.grad[o];
      });
}

Tensor fold_patches(const Tensor& rows, std::size_t channels, const Shape& spatial,
                    const std::vector<std::size_t>& patch) {
  auto map = patch_map(channels, spatial, patch);
  if (rows.numel() != map.size() || rows.ndim() != 2) {
    throw ShapeError("fold_patches: rows " + to_string(rows.shape()) +
                     " do not tile " + std::to_string(channels) + " x " + to_string(spatial));
  }
  std::vector<double> out(map.size());
  const double* src = rows.data().data();
  for (std::size_t o = 0; o < map.size(); ++o) out[map[o]] = src[o];
  Shape out_shape{channels};
  out_shape.insert(out_shape.end(), spatial.begin(), spatial.end());
  TensorImpl* ir = rows.impl();
  return Tape::current().record(
      "fold_patches", std::move(out_shape), std::move(out), {rows},
      [ir, map = std::move(map)](const TensorImpl& res) {
        if (!ir->requires_grad) return;
        double* g = ir->grad_buffer();
        for (std::size_t o = 0; o < map.size(); ++o) g[o] += res.grad[map[o]];
      });
}

Tensor conv_nd(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (kernel.ndim() != x.ndim() + 1 || kernel.shape()[1] != x.shape()[0]) {
    throw ShapeError("conv_nd: kernel " + to_string(kernel.shape()) +
                     " does not match input " + to_string(x.shape()));
  }
  const std::size_t c_out = kernel.shape()[0];
  const std::vector<std::size_t> patch(kernel.shape().begin() + 2, kernel.shape().end());
  Tensor rows = extract_patches(x, patch);
  Tensor w = reshape(kernel, {c_out, kernel.numel() / c_out});
  Tensor y = linear(rows, w, bias);  // [n_patches, C_out]
  Shape out_shape{c_out};
  for (std::size_t i = 0; i < patch.size(); ++i) out_shape.push_back(x.shape()[i + 1] / patch[i]);
  return reshape(transpose(y), out_shape);
}

Tensor deconv_nd(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (kernel.ndim() != x.ndim() + 1 || kernel.shape()[0] != x.shape()[0]) {
    throw ShapeError("deconv_nd: kernel " + to_string(kernel.shape()) +
                     " does not match input " + to_string(x.shape()));
  }
  const std::size_t c_in = kernel.shape()[0];
  const std::size_t c_out = kernel.shape()[1];
  const std::vector<std::size_t> patch(kernel.shape().begin() + 2, kernel.shape().end());
  const std::size_t n_patch = x.numel() / c_in;
  Tensor tokens = transpose(reshape(x, {c_in, n_patch}));
  Tensor rows = matmul(tokens, reshape(kernel, {c_in, kernel.numel() / c_in}));
  Shape spatial;
  for (std::size_t i = 0; i < patch.size(); ++i) spatial.push_back(x.shape()[i + 1] * patch[i]);
  Tensor out = fold_patches(rows, c_out, spatial, patch);
  if (bias.defined()) {
    if (bias.numel() != c_out) throw ShapeError("deconv_nd: bias size mismatch");
    Shape bshape(out.ndim(), 1);
    bshape[0] = c_out;
    out = add(out, reshape(bias, bshape));
  }
  return out;
}

}  // namespace pdet::ad
