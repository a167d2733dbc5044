#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "mcevit/errors.hpp"
#include "mcevit/rng.hpp"

namespace mcevit {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Per-thread switch that disables graph recording (inference paths).
bool& no_grad_flag();

struct NoGrad {
  NoGrad() : prev_(no_grad_flag()) { no_grad_flag() = true; }
  ~NoGrad() { no_grad_flag() = prev_; }

 private:
  bool prev_;
};

// Dense row-major tensor with reverse-mode autodiff. A TensorT is a cheap
// shared handle; ops build a graph of nodes whose backprop closures
// accumulate into parent gradients. Gradients accumulate across backward()
// calls until zero_grad(). A graph (one forward pass) is single-threaded;
// distinct graphs may run on distinct threads.
template <typename T>
class TensorT {
 public:
  struct Impl {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated on first use
    bool requires_grad = false;
    bool track = false;  // participates in some recorded graph
    std::vector<std::shared_ptr<Impl>> parents;
    std::function<void(Impl&)> backprop;

    std::vector<T>& ensure_grad() {
      if (grad.empty()) grad.assign(value.size(), T(0));
      return grad;
    }
  };

  TensorT() : impl_(std::make_shared<Impl>()) {}

  static TensorT zeros(Shape shape) { return filled(std::move(shape), T(0)); }

  static TensorT filled(Shape shape, T v) {
    TensorT t;
    t.impl_->value.assign(static_cast<std::size_t>(shape_numel(shape)), v);
    t.impl_->shape = std::move(shape);
    return t;
  }

  static TensorT from_vector(Shape shape, std::vector<T> data) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
      throw ShapeError("from_vector: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
    TensorT t;
    t.impl_->shape = std::move(shape);
    t.impl_->value = std::move(data);
    return t;
  }

  static TensorT randn(Shape shape, Rng& rng, double stddev) {
    TensorT t = zeros(std::move(shape));
    for (auto& v : t.impl_->value) v = static_cast<T>(rng.normal(0.0, stddev));
    return t;
  }

  const Shape& shape() const { return impl_->shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(impl_->shape.size()); }
  std::int64_t dim(std::int64_t i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return impl_->value.size(); }

  const std::vector<T>& values() const { return impl_->value; }
  std::vector<T>& mutable_values() { return impl_->value; }
  T item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor of shape " + shape_str(shape()));
    return impl_->value[0];
  }

  void set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    impl_->track = impl_->track || rg;
  }
  bool requires_grad() const { return impl_->requires_grad; }
  bool tracked() const { return impl_->track; }

  const std::vector<T>& grad() const { return impl_->grad; }
  std::vector<T>& mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad() { impl_->grad.clear(); }

  // Value copy with no graph attachment.
  TensorT detach() const { return from_vector(impl_->shape, impl_->value); }

  std::shared_ptr<Impl> impl() const { return impl_; }

  // Builds a result node. parents that are untracked carry no backprop work.
  static TensorT make_node(Shape shape, std::vector<T> value, std::vector<TensorT> parents,
                           std::function<void(Impl&)> backprop) {
    TensorT t = from_vector(std::move(shape), std::move(value));
    if (no_grad_flag()) return t;
    bool track = false;
    for (const auto& p : parents) track = track || p.tracked();
    if (!track) return t;
    t.impl_->track = true;
    t.impl_->parents.reserve(parents.size());
    for (auto& p : parents) t.impl_->parents.push_back(p.impl_);
    t.impl_->backprop = std::move(backprop);
    return t;
  }

 private:
  std::shared_ptr<Impl> impl_;
};

using Tensor = TensorT<float>;

// --- graph traversal ---------------------------------------------------

template <typename T>
void backward(const TensorT<T>& loss) {
  using Impl = typename TensorT<T>::Impl;
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  // Iterative postorder DFS over tracked parents.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  if (!loss.impl()->track) return;
  stack.emplace_back(loss.impl().get(), 0);
  visited.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Impl* parent = node->parents[idx++].get();
      if (parent->track && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

namespace detail {

// True when b's shape equals the trailing axes of a's shape (bias-style
// broadcast).
inline bool trailing_broadcast(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  const std::size_t off = a.size() - b.size();
  for (std::size_t i = 0; i < b.size(); ++i)
    if (a[off + i] != b[i]) return false;
  return true;
}

template <typename T, typename Fwd, typename BwdA, typename BwdB>
TensorT<T> binary_elementwise(const char* name, const TensorT<T>& a, const TensorT<T>& b, Fwd fwd,
                              BwdA bwd_a, BwdB bwd_b) {
  const bool same = a.shape() == b.shape();
  if (!same && !trailing_broadcast(a.shape(), b.shape())) {
    throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.size();
  const std::size_t bn = b.size();
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[bn == n ? i : i % bn]);
  auto ai = a.impl();
  auto bi = b.impl();
  return TensorT<T>::make_node(
      a.shape(), std::move(out), {a, b}, [ai, bi, bwd_a, bwd_b, n, bn](auto& self) {
        if (ai->track) {
          auto& ga = ai->ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            ga[i] += bwd_a(self.grad[i], ai->value[i], bi->value[bn == n ? i : i % bn]);
        }
        if (bi->track) {
          auto& gb = bi->ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            gb[bn == n ? i : i % bn] += bwd_b(self.grad[i], ai->value[i], bi->value[bn == n ? i : i % bn]);
        }
      });
}

template <typename T, typename Fwd, typename Bwd>
TensorT<T> unary_elementwise(const TensorT<T>& a, Fwd fwd, Bwd bwd) {
  const std::size_t n = a.size();
  const auto& av = a.values();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
  auto ai = a.impl();
  return TensorT<T>::make_node(a.shape(), std::move(out), {a}, [ai, bwd, n](auto& self) {
    if (!ai->track) return;
    auto& ga = ai->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) ga[i] += bwd(self.grad[i], ai->value[i], self.value[i]);
  });
}

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void mm_acc(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = b + kk * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[m,k] += dC[m,n] * B[k,n]^T
template <typename T>
void mm_acc_bt(const T* dc, const T* b, T* da, std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const T* dcrow = dc + i * n;
    T* darow = da + i * k;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const T* brow = b + kk * n;
      T acc = 0;
      for (std::int64_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
      darow[kk] += acc;
    }
  }
}

// dB[k,n] += A[m,k]^T * dC[m,n]
template <typename T>
void mm_acc_at(const T* a, const T* dc, T* db, std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* dcrow = dc + i * n;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      T* dbrow = db + kk * n;
      for (std::int64_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

}  // namespace detail

// --- arithmetic ---------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary_elementwise(
      "add", a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return g; });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary_elementwise(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return -g; });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary_elementwise(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
      [](T g, T x, T) { return g * x; });
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T c) {
  return detail::unary_elementwise(
      a, [c](T x) { return x * c; }, [c](T g, T, T) { return g * c; });
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
  return detail::unary_elementwise(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T g, T x, T) { return x > T(0) ? g : T(0); });
}

template <typename T>
TensorT<T> gelu(const TensorT<T>& a) {
  // Exact (erf) form; derivative is Phi(x) + x*phi(x).
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return detail::unary_elementwise(
      a,
      [](T x) {
        return static_cast<T>(0.5 * static_cast<double>(x) *
                              (1.0 + std::erf(static_cast<double>(x) * kInvSqrt2)));
      },
      [](T g, T x, T) {
        const double xd = static_cast<double>(x);
        const double cdf = 0.5 * (1.0 + std::erf(xd * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xd * xd);
        return static_cast<T>(static_cast<double>(g) * (cdf + xd * pdf));
      });
}

// --- matmul ---------------------------------------------------------------

// Supports [m,k]x[k,n], batched [b,m,k]x[b,k,n], and [b,m,k]x[k,n] (shared
// right operand).
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const auto fail = [&] {
    throw ShapeError("matmul: shape mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  };
  std::int64_t batches = 1, m = 0, k = 0, n = 0;
  Shape out_shape;
  bool b_shared = false;
  if (sa.size() == 2 && sb.size() == 2) {
    m = sa[0], k = sa[1], n = sb[1];
    if (sb[0] != k) fail();
    out_shape = {m, n};
  } else if (sa.size() == 3 && sb.size() == 3) {
    batches = sa[0], m = sa[1], k = sa[2], n = sb[2];
    if (sb[0] != batches || sb[1] != k) fail();
    out_shape = {batches, m, n};
  } else if (sa.size() == 3 && sb.size() == 2) {
    batches = sa[0], m = sa[1], k = sa[2], n = sb[1];
    if (sb[0] != k) fail();
    out_shape = {batches, m, n};
    b_shared = true;
  } else {
    fail();
  }
  std::vector<T> out(static_cast<std::size_t>(batches * m * n), T(0));
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  for (std::int64_t bi = 0; bi < batches; ++bi) {
    detail::mm_acc(pa + bi * m * k, b_shared ? pb : pb + bi * k * n, out.data() + bi * m * n, m, k, n);
  }
  auto ai = a.impl();
  auto bi_ = b.impl();
  return TensorT<T>::make_node(
      out_shape, std::move(out), {a, b},
      [ai, bi_, batches, m, k, n, b_shared](auto& self) {
        const T* dc = self.grad.data();
        if (ai->track) {
          auto& ga = ai->ensure_grad();
          for (std::int64_t bb = 0; bb < batches; ++bb) {
            detail::mm_acc_bt(dc + bb * m * n, bi_->value.data() + (b_shared ? 0 : bb * k * n),
                              ga.data() + bb * m * k, m, k, n);
          }
        }
        if (bi_->track) {
          auto& gb = bi_->ensure_grad();
          for (std::int64_t bb = 0; bb < batches; ++bb) {
            detail::mm_acc_at(ai->value.data() + bb * m * k, dc + bb * m * n,
                              gb.data() + (b_shared ? 0 : bb * k * n), m, k, n);
          }
        }
      });
}

// --- shape ops --------------------------------------------------------------

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape new_shape) {
  if (shape_numel(new_shape) != static_cast<std::int64_t>(a.size())) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(new_shape));
  }
  auto ai = a.impl();
  const std::size_t n = a.size();
  return TensorT<T>::make_node(std::move(new_shape), std::vector<T>(a.values()), {a},
                               [ai, n](auto& self) {
                                 if (!ai->track) return;
                                 auto& ga = ai->ensure_grad();
                                 for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i];
                               });
}

namespace detail {

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Index map out_index -> in_index for a permutation of axes.
inline std::vector<std::size_t> permute_index_map(const Shape& in_shape,
                                                  const std::vector<std::int64_t>& perm) {
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[static_cast<std::size_t>(perm[i])];
  const auto in_strides = row_major_strides(in_shape);
  const std::size_t n = static_cast<std::size_t>(shape_numel(in_shape));
  std::vector<std::size_t> map(n);
  std::vector<std::int64_t> idx(perm.size(), 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::int64_t in_off = 0;
    for (std::size_t d = 0; d < perm.size(); ++d)
      in_off += idx[d] * in_strides[static_cast<std::size_t>(perm[d])];
    map[o] = static_cast<std::size_t>(in_off);
    for (std::size_t d = perm.size(); d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return map;
}

}  // namespace detail

template <typename T>
TensorT<T> transpose(const TensorT<T>& a, std::vector<std::int64_t> perm) {
  if (perm.size() != a.shape().size()) {
    throw ShapeError("transpose: perm rank " + std::to_string(perm.size()) + " vs tensor " +
                     shape_str(a.shape()));
  }
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    out_shape[i] = a.shape()[static_cast<std::size_t>(perm[i])];
  const auto map = detail::permute_index_map(a.shape(), perm);
  const auto& av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = av[map[o]];
  auto ai = a.impl();
  return TensorT<T>::make_node(std::move(out_shape), std::move(out), {a}, [ai, map](auto& self) {
    if (!ai->track) return;
    auto& ga = ai->ensure_grad();
    for (std::size_t o = 0; o < map.size(); ++o) ga[map[o]] += self.grad[o];
  });
}

// Matrix transpose shorthand for rank-2 tensors.
template <typename T>
TensorT<T> transpose(const TensorT<T>& a) {
  return transpose(a, {1, 0});
}

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, std::int64_t axis) {
  if (parts.empty()) throw ShapeError("concat: empty input list");
  const auto& ref = parts[0].shape();
  const std::size_t rank = ref.size();
  if (axis < 0 || static_cast<std::size_t>(axis) >= rank) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(ref));
  }
  std::int64_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != rank) {
      throw ShapeError("concat: rank mismatch " + shape_str(ref) + " vs " + shape_str(p.shape()));
    }
    for (std::size_t d = 0; d < rank; ++d) {
      if (d != static_cast<std::size_t>(axis) && p.shape()[d] != ref[d]) {
        throw ShapeError("concat: shape mismatch " + shape_str(ref) + " vs " + shape_str(p.shape()));
      }
    }
    axis_total += p.shape()[static_cast<std::size_t>(axis)];
  }
  Shape out_shape = ref;
  out_shape[static_cast<std::size_t>(axis)] = axis_total;

  std::int64_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < static_cast<std::size_t>(axis); ++d) outer *= ref[d];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < rank; ++d) inner *= ref[d];

  std::vector<T> out(static_cast<std::size_t>(outer * axis_total * inner));
  std::vector<std::int64_t> offsets(parts.size());
  std::int64_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    offsets[p] = off;
    const std::int64_t ax = parts[p].shape()[static_cast<std::size_t>(axis)];
    const auto& pv = parts[p].values();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * ax * inner, ax * inner,
                  out.data() + (o * axis_total + off) * inner);
    }
    off += ax;
  }
  std::vector<typename TensorT<T>::Impl*> raw;
  std::vector<std::int64_t> ax_sizes;
  for (const auto& p : parts) {
    raw.push_back(p.impl().get());
    ax_sizes.push_back(p.shape()[static_cast<std::size_t>(axis)]);
  }
  return TensorT<T>::make_node(
      std::move(out_shape), std::move(out), parts,
      [raw, ax_sizes, offsets, outer, inner, axis_total](auto& self) {
        for (std::size_t p = 0; p < raw.size(); ++p) {
          if (!raw[p]->track) continue;
          auto& g = raw[p]->ensure_grad();
          for (std::int64_t o = 0; o < outer; ++o) {
            const T* src = self.grad.data() + (o * axis_total + offsets[p]) * inner;
            T* dst = g.data() + o * ax_sizes[p] * inner;
            for (std::int64_t i = 0; i < ax_sizes[p] * inner; ++i) dst[i] += src[i];
          }
        }
      });
}

template <typename T>
TensorT<T> slice(const TensorT<T>& a, std::int64_t axis, std::int64_t start, std::int64_t len) {
  const auto& s = a.shape();
  if (axis < 0 || static_cast<std::size_t>(axis) >= s.size() || start < 0 || len <= 0 ||
      start + len > s[static_cast<std::size_t>(axis)]) {
    throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") on axis " + std::to_string(axis) + " of " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(axis)] = len;
  std::int64_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < static_cast<std::size_t>(axis); ++d) outer *= s[d];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) inner *= s[d];
  const std::int64_t ax = s[static_cast<std::size_t>(axis)];
  std::vector<T> out(static_cast<std::size_t>(outer * len * inner));
  const auto& av = a.values();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(av.data() + (o * ax + start) * inner, len * inner, out.data() + o * len * inner);
  }
  auto ai = a.impl();
  return TensorT<T>::make_node(std::move(out_shape), std::move(out), {a},
                               [ai, outer, inner, ax, start, len](auto& self) {
                                 if (!ai->track) return;
                                 auto& g = ai->ensure_grad();
                                 for (std::int64_t o = 0; o < outer; ++o) {
                                   const T* src = self.grad.data() + o * len * inner;
                                   T* dst = g.data() + (o * ax + start) * inner;
                                   for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                                 }
                               });
}

// --- reductions ---------------------------------------------------------

template <typename T>
TensorT<T> sum(const TensorT<T>& a) {
  T acc = 0;
  for (T v : a.values()) acc += v;
  auto ai = a.impl();
  const std::size_t n = a.size();
  return TensorT<T>::make_node({}, {acc}, {a}, [ai, n](auto& self) {
    if (!ai->track) return;
    auto& g = ai->ensure_grad();
    const T gv = self.grad[0];
    for (std::size_t i = 0; i < n; ++i) g[i] += gv;
  });
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a, std::int64_t axis) {
  const auto& s = a.shape();
  if (axis < 0 || static_cast<std::size_t>(axis) >= s.size()) {
    throw ShapeError("mean: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  std::int64_t outer = 1, inner = 1;
  const std::int64_t ax = s[static_cast<std::size_t>(axis)];
  for (std::size_t d = 0; d < static_cast<std::size_t>(axis); ++d) outer *= s[d];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d)
    if (d != static_cast<std::size_t>(axis)) out_shape.push_back(s[d]);
  std::vector<T> out(static_cast<std::size_t>(outer * inner), T(0));
  const auto& av = a.values();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t k = 0; k < ax; ++k)
      for (std::int64_t i = 0; i < inner; ++i) out[o * inner + i] += av[(o * ax + k) * inner + i];
  const T inv = T(1) / static_cast<T>(ax);
  for (auto& v : out) v *= inv;
  auto ai = a.impl();
  return TensorT<T>::make_node(std::move(out_shape), std::move(out), {a},
                               [ai, outer, inner, ax, inv](auto& self) {
                                 if (!ai->track) return;
                                 auto& g = ai->ensure_grad();
                                 for (std::int64_t o = 0; o < outer; ++o)
                                   for (std::int64_t k = 0; k < ax; ++k)
                                     for (std::int64_t i = 0; i < inner; ++i)
                                       g[(o * ax + k) * inner + i] += self.grad[o * inner + i] * inv;
                               });
}

template <typename T>
TensorT<T> softmax(const TensorT<T>& a, std::int64_t axis) {
  const auto& s = a.shape();
  if (axis < 0) axis += static_cast<std::int64_t>(s.size());
  if (axis < 0 || static_cast<std::size_t>(axis) >= s.size()) {
    throw ShapeError("softmax: axis out of range for " + shape_str(s));
  }
  std::int64_t outer = 1, inner = 1;
  const std::int64_t ax = s[static_cast<std::size_t>(axis)];
  for (std::size_t d = 0; d < static_cast<std::size_t>(axis); ++d) outer *= s[d];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) inner *= s[d];
  const auto& av = a.values();
  std::vector<T> out(av.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const auto at = [&](std::int64_t k) -> std::size_t {
        return static_cast<std::size_t>((o * ax + k) * inner + i);
      };
      T mx = av[at(0)];
      for (std::int64_t k = 1; k < ax; ++k) mx = std::max(mx, av[at(k)]);
      T denom = 0;
      for (std::int64_t k = 0; k < ax; ++k) {
        const T e = std::exp(av[at(k)] - mx);
        out[at(k)] = e;
        denom += e;
      }
      const T inv = T(1) / denom;
      for (std::int64_t k = 0; k < ax; ++k) out[at(k)] *= inv;
    }
  }
  auto ai = a.impl();
  return TensorT<T>::make_node(s, std::move(out), {a}, [ai, outer, inner, ax](auto& self) {
    if (!ai->track) return;
    auto& g = ai->ensure_grad();
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t i = 0; i < inner; ++i) {
        const auto at = [&](std::int64_t k) -> std::size_t {
          return static_cast<std::size_t>((o * ax + k) * inner + i);
        };
        T dot = 0;
        for (std::int64_t k = 0; k < ax; ++k) dot += self.grad[at(k)] * self.value[at(k)];
        for (std::int64_t k = 0; k < ax; ++k)
          g[at(k)] += (self.grad[at(k)] - dot) * self.value[at(k)];
      }
    }
  });
}

// Normalizes the last axis to zero mean / unit variance, then applies the
// learned per-feature scale and shift.
template <typename T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps = static_cast<T>(1e-5)) {
  const auto& s = x.shape();
  if (s.empty()) throw ShapeError("layer_norm: scalar input");
  const std::int64_t f = s.back();
  if (gamma.shape() != Shape{f} || beta.shape() != Shape{f}) {
    throw ShapeError("layer_norm: feature size " + std::to_string(f) + " vs gamma " +
                     shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  const std::int64_t rows = static_cast<std::int64_t>(x.size()) / f;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<T> out(xv.size());
  std::vector<T> xhat(xv.size());
  std::vector<T> inv_sigma(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * f;
    T mu = 0;
    for (std::int64_t j = 0; j < f; ++j) mu += row[j];
    mu /= static_cast<T>(f);
    T var = 0;
    for (std::int64_t j = 0; j < f; ++j) {
      const T d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<T>(f);
    const T is = T(1) / std::sqrt(var + eps);
    inv_sigma[static_cast<std::size_t>(r)] = is;
    for (std::int64_t j = 0; j < f; ++j) {
      const T h = (row[j] - mu) * is;
      xhat[r * f + j] = h;
      out[r * f + j] = h * gv[j] + bv[j];
    }
  }
  auto xi = x.impl();
  auto gi = gamma.impl();
  auto bi = beta.impl();
  return TensorT<T>::make_node(
      s, std::move(out), {x, gamma, beta},
      [xi, gi, bi, rows, f, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](auto& self) {
        const auto& dy = self.grad;
        if (gi->track) {
          auto& gg = gi->ensure_grad();
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < f; ++j) gg[j] += dy[r * f + j] * xhat[r * f + j];
        }
        if (bi->track) {
          auto& gb = bi->ensure_grad();
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < f; ++j) gb[j] += dy[r * f + j];
        }
        if (xi->track) {
          auto& gx = xi->ensure_grad();
          const auto& gv2 = gi->value;
          for (std::int64_t r = 0; r < rows; ++r) {
            T mean_dxhat = 0, mean_dxhat_xhat = 0;
            for (std::int64_t j = 0; j < f; ++j) {
              const T dxh = dy[r * f + j] * gv2[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat[r * f + j];
            }
            mean_dxhat /= static_cast<T>(f);
            mean_dxhat_xhat /= static_cast<T>(f);
            const T is = inv_sigma[static_cast<std::size_t>(r)];
            for (std::int64_t j = 0; j < f; ++j) {
              const T dxh = dy[r * f + j] * gv2[j];
              gx[r * f + j] += is * (dxh - mean_dxhat - xhat[r * f + j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

// Non-overlapping mean pooling over a rank-1 vector (general stride).
template <typename T>
TensorT<T> avg_pool_1d(const TensorT<T>& a, std::int64_t kernel, std::int64_t stride) {
  if (a.rank() != 1) throw ShapeError("avg_pool_1d: expected rank-1 input, got " + shape_str(a.shape()));
  if (kernel <= 0 || stride <= 0) throw ShapeError("avg_pool_1d: kernel and stride must be positive");
  const std::int64_t n = a.dim(0);
  if (n < kernel) {
    throw ShapeError("avg_pool_1d: kernel " + std::to_string(kernel) + " exceeds length " +
                     std::to_string(n));
  }
  const std::int64_t out_len = (n - kernel) / stride + 1;
  const auto& av = a.values();
  std::vector<T> out(static_cast<std::size_t>(out_len));
  const T inv = T(1) / static_cast<T>(kernel);
  for (std::int64_t o = 0; o < out_len; ++o) {
    T acc = 0;
    for (std::int64_t k = 0; k < kernel; ++k) acc += av[o * stride + k];
    out[o] = acc * inv;
  }
  auto ai = a.impl();
  return TensorT<T>::make_node({out_len}, std::move(out), {a},
                               [ai, out_len, kernel, stride, inv](auto& self) {
                                 if (!ai->track) return;
                                 auto& g = ai->ensure_grad();
                                 for (std::int64_t o = 0; o < out_len; ++o)
                                   for (std::int64_t k = 0; k < kernel; ++k)
                                     g[o * stride + k] += self.grad[o] * inv;
                               });
}

// Mean over the batch of -sum(onehot * log(p)), p clamped to [1e-12, 1].
// Rows of `probs` must sum to 1 within 1e-4.
template <typename T>
TensorT<T> crossentropy(const TensorT<T>& probs, const TensorT<T>& onehot) {
  if (probs.rank() != 2 || probs.shape() != onehot.shape()) {
    throw ShapeError("crossentropy: shape mismatch " + shape_str(probs.shape()) + " vs " +
                     shape_str(onehot.shape()));
  }
  const std::int64_t batch = probs.dim(0), classes = probs.dim(1);
  const auto& pv = probs.values();
  const auto& yv = onehot.values();
  constexpr T kLo = static_cast<T>(1e-12);
  for (std::int64_t r = 0; r < batch; ++r) {
    T rowsum = 0;
    for (std::int64_t c = 0; c < classes; ++c) rowsum += pv[r * classes + c];
    if (std::abs(rowsum - T(1)) > static_cast<T>(1e-4)) {
      throw ShapeError("crossentropy: row " + std::to_string(r) + " sums to " +
                       std::to_string(static_cast<double>(rowsum)) + ", expected 1");
    }
  }
  T loss = 0;
  for (std::int64_t r = 0; r < batch; ++r)
    for (std::int64_t c = 0; c < classes; ++c) {
      const T p = std::clamp(pv[r * classes + c], kLo, T(1));
      loss -= yv[r * classes + c] * std::log(p);
    }
  loss /= static_cast<T>(batch);
  auto pi = probs.impl();
  auto yi = onehot.impl();
  return TensorT<T>::make_node({}, {loss}, {probs, onehot}, [pi, yi, batch, classes](auto& self) {
    if (!pi->track) return;
    auto& g = pi->ensure_grad();
    const T gv = self.grad[0] / static_cast<T>(batch);
    for (std::int64_t r = 0; r < batch; ++r)
      for (std::int64_t c = 0; c < classes; ++c) {
        const T p = pi->value[r * classes + c];
        if (p < kLo || p > T(1)) continue;  // clamped region has zero slope
        g[r * classes + c] -= gv * yi->value[r * classes + c] / p;
      }
  });
}

}  // namespace mcevit
