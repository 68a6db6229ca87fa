#include <string>

#include "pdet/ad/ops.hpp"
#include "pdet/core/error.hpp"
#include "pdet/kernels/kernels.hpp"

namespace pdet::ad {
namespace {

// Strides of `in` expressed over the index space of `out` (0 on broadcast
// axes).
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t offset = out.size() - in.size();
  for (std::size_t i = in.size(); i-- > 0;) {
    if (in[i] != 1) strides[offset + i] = stride;
    stride *= in[i];
  }
  return strides;
}

// Calls f(out_index, a_index, b_index) for every element of `out`.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t rank = out.size();
  const std::size_t n = numel(out);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out[d]) {
        ia += sa[d];
        ib += sb[d];
        break;
      }
      ia -= sa[d] * (out[d] - 1);
      ib -= sb[d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) return false;
  }
  return true;
}

// Sum-reduces a gradient over `out` down to the broadcast input shape.
std::vector<double> reduce_to(const std::vector<double>& g, const Shape& out,
                              const Shape& in) {
  if (in == out) return g;
  std::vector<double> r(numel(in), 0.0);
  if (is_suffix(in, out)) {
    const std::size_t inner = r.size();
    const auto& k = kernels::active();
    for (std::size_t o = 0; o < g.size(); o += inner) {
      k.axpy(1.0, g.data() + o, r.data(), inner);
    }
    return r;
  }
  const auto si = broadcast_strides(in, out);
  const std::vector<std::size_t> zero(out.size(), 0);
  for_each_broadcast(out, si, zero,
                     [&](std::size_t o, std::size_t i, std::size_t) { r[i] += g[o]; });
  return r;
}

enum class BinOp { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = numel(out_shape);
  std::vector<double> out(n);
  const auto& k = kernels::active();
  const double* pa = a.data().data();
  const double* pb = b.data().data();

  if (a.shape() == b.shape()) {
    switch (op) {
      case BinOp::kAdd: k.add(pa, pb, out.data(), n); break;
      case BinOp::kSub: k.sub(pa, pb, out.data(), n); break;
      case BinOp::kMul: k.mul(pa, pb, out.data(), n); break;
    }
  } else if (a.shape() == out_shape && is_suffix(b.shape(), out_shape)) {
    const std::size_t inner = b.numel();
    for (std::size_t o = 0; o < n; o += inner) {
      switch (op) {
        case BinOp::kAdd: k.add(pa + o, pb, out.data() + o, inner); break;
        case BinOp::kSub: k.sub(pa + o, pb, out.data() + o, inner); break;
        case BinOp::kMul: k.mul(pa + o, pb, out.data() + o, inner); break;
      }
    }
  } else {
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb,
                       [&](std::size_t o, std::size_t ia, std::size_t ib) {
                         switch (op) {
                           case BinOp::kAdd: out[o] = pa[ia] + pb[ib]; break;
                           case BinOp::kSub: out[o] = pa[ia] - pb[ib]; break;
                           case BinOp::kMul: out[o] = pa[ia] * pb[ib]; break;
                         }
                       });
  }

  TensorImpl* ia = a.impl();
  TensorImpl* ib = b.impl();
  static constexpr const char* kTags[] = {"add", "sub", "mul"};
  return Tape::current().record(
      kTags[static_cast<int>(op)], out_shape, std::move(out), {a, b},
      [ia, ib, op, out_shape](const TensorImpl& res) {
        const auto& g = res.grad;
        if (op == BinOp::kMul) {
          // d(a*b) = g*b, g*a, evaluated on the broadcast grid.
          const auto sa = broadcast_strides(ia->shape, out_shape);
          const auto sb = broadcast_strides(ib->shape, out_shape);
          if (ia->requires_grad) {
            std::vector<double> ga(ia->data.size(), 0.0);
            for_each_broadcast(out_shape, sa, sb,
                               [&](std::size_t o, std::size_t xa, std::size_t xb) {
                                 ga[xa] += g[o] * ib->data[xb];
                               });
            ia->accumulate(ga);
          }
          if (ib->requires_grad) {
            std::vector<double> gb(ib->data.size(), 0.0);
            for_each_broadcast(out_shape, sa, sb,
                               [&](std::size_t o, std::size_t xa, std::size_t xb) {
                                 gb[xb] += g[o] * ia->data[xa];
                               });
            ib->accumulate(gb);
          }
          return;
        }
        if (ia->requires_grad) ia->accumulate(reduce_to(g, out_shape, ia->shape));
        if (ib->requires_grad) {
          auto gb = reduce_to(g, out_shape, ib->shape);
          if (op == BinOp::kSub) {
            for (double& v : gb) v = -v;
          }
          ib->accumulate(gb);
        }
      });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shapes " + to_string(a) + " and " + to_string(b) +
                       " are not broadcastable");
    }
    out[rank - 1 - i] = std::max(da, db);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul); }

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  kernels::active().scale(s, a.data().data(), out.data(), out.size());
  TensorImpl* ia = a.impl();
  return Tape::current().record("scale", a.shape(), std::move(out), {a},
                                [ia, s](const TensorImpl& res) {
                                  std::vector<double> g(res.grad.size());
                                  kernels::active().scale(s, res.grad.data(), g.data(), g.size());
                                  ia->accumulate(g);
                                });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v += s;
  TensorImpl* ia = a.impl();
  return Tape::current().record("add_scalar", a.shape(), std::move(out), {a},
                                [ia](const TensorImpl& res) { ia->accumulate(res.grad); });
}

Tensor sum(const Tensor& a) {
  const double s = kernels::active().sum(a.data().data(), a.numel());
  TensorImpl* ia = a.impl();
  return Tape::current().record("sum", {1}, {s}, {a}, [ia](const TensorImpl& res) {
    ia->accumulate(std::vector<double>(ia->data.size(), res.grad[0]));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  const double s = kernels::active().sum(a.data().data(), a.numel()) / n;
  TensorImpl* ia = a.impl();
  return Tape::current().record("mean", {1}, {s}, {a}, [ia, n](const TensorImpl& res) {
    ia->accumulate(std::vector<double>(ia->data.size(), res.grad[0] / n));
  });
}

}  // namespace pdet::ad
