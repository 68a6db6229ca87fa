#include <algorithm>
#include <cstring>
#include <string>

#include "pdet/ad/ops.hpp"
#include "pdet/core/error.hpp"

namespace pdet::ad {
namespace {

std::size_t norm_axis(std::int64_t axis, std::size_t rank) {
  const auto r = static_cast<std::int64_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return static_cast<std::size_t>(axis);
}

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// out[j] = in[map[j]] for the permutation map produced by permute_index.
std::vector<std::size_t> permute_index(const Shape& in,
                                       const std::vector<std::size_t>& perm) {
  const Shape out = [&] {
    Shape o(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) o[i] = in[perm[i]];
    return o;
  }();
  const auto in_strides = row_major_strides(in);
  std::vector<std::size_t> src_stride(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) src_stride[i] = in_strides[perm[i]];

  const std::size_t n = numel(out);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(out.size(), 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < n; ++o) {
    map[o] = src;
    for (std::size_t d = out.size(); d-- > 0;) {
      if (++idx[d] < out[d]) {
        src += src_stride[d];
        break;
      }
      src -= src_stride[d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
  return map;
}

}  // namespace

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("cannot reshape " + to_string(a.shape()) + " to " +
                     to_string(shape));
  }
  TensorImpl* ia = a.impl();
  return Tape::current().record(
      "reshape", std::move(shape), std::vector<double>(a.data().begin(), a.data().end()),
      {a}, [ia](const TensorImpl& res) { ia->accumulate(res.grad); });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
  const std::size_t rank = a.ndim();
  if (perm.size() != rank) throw ShapeError("permute: rank mismatch");
  std::vector<bool> seen(rank, false);
  for (std::size_t p : perm) {
    if (p >= rank || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = a.shape()[perm[i]];
  auto map = permute_index(a.shape(), perm);
  std::vector<double> out(map.size());
  const double* src = a.data().data();
  for (std::size_t o = 0; o < map.size(); ++o) out[o] = src[map[o]];
  TensorImpl* ia = a.impl();
  return Tape::current().record(
      "permute", std::move(out_shape), std::move(out), {a},
      [ia, map = std::move(map)](const TensorImpl& res) {
        if (!ia->requires_grad) return;
        double* g = ia->grad_buffer();
        for (std::size_t o = 0; o < map.size(); ++o) g[map[o]] += res.grad[o];
      });
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() < 2) throw ShapeError("transpose needs rank >= 2");
  std::vector<std::size_t> perm(a.ndim());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(a, perm);
}

Tensor slice(const Tensor& a, std::int64_t axis_in, std::size_t begin,
             std::size_t end) {
  const std::size_t axis = norm_axis(axis_in, a.ndim());
  const Shape& s = a.shape();
  if (begin >= end || end > s[axis]) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for axis of extent " + std::to_string(s[axis]));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = end - begin;
  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<double> out(outer * len * inner);
  const double* src = a.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::memcpy(out.data() + o * len * inner, src + (o * s[axis] + begin) * inner,
                len * inner * sizeof(double));
  }
  TensorImpl* ia = a.impl();
  const std::size_t full = s[axis];
  return Tape::current().record(
      "slice", std::move(out_shape), std::move(out), {a},
      [ia, outer, inner, len, begin, full](const TensorImpl& res) {
        if (!ia->requires_grad) return;
        double* g = ia->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* gs = res.grad.data() + o * len * inner;
          double* gd = g + (o * full + begin) * inner;
          for (std::size_t i = 0; i < len * inner; ++i) gd[i] += gs[i];
        }
      });
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis_in) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  const std::size_t axis = norm_axis(axis_in, s0.size());
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: " + to_string(s) + " incompatible with " + to_string(s0));
    }
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape out_shape = s0;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::vector<std::size_t> lens;
  std::vector<TensorImpl*> impls;
  std::size_t start = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.shape()[axis];
    const double* src = p.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::memcpy(out.data() + (o * total + start) * inner, src + o * len * inner,
                  len * inner * sizeof(double));
    }
    start += len;
    lens.push_back(len);
    impls.push_back(p.impl());
  }
  return Tape::current().record(
      "concat", std::move(out_shape), std::move(out), parts,
      [impls, lens, outer, inner, total](const TensorImpl& res) {
        std::size_t start = 0;
        for (std::size_t k = 0; k < impls.size(); ++k) {
          const std::size_t len = lens[k];
          if (impls[k]->requires_grad) {
            double* g = impls[k]->grad_buffer();
            for (std::size_t o = 0; o < outer; ++o) {
              const double* gs = res.grad.data() + (o * total + start) * inner;
              double* gd = g + o * len * inner;
              for (std::size_t i = 0; i < len * inner; ++i) gd[i] += gs[i];
            }
          }
          start += len;
        }
      });
}

}  // namespace pdet::ad
