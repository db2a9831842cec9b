#pragma once

// Dense row-major matrices and a reverse-mode tape.
//
// Every value is a rank-2 Matrix (vectors are 1xN rows). A Tape records the
// forward computation as an ordered list of nodes; backward() walks that list
// in exact reverse order and accumulates adjoints into each node that
// requires a gradient. Tapes are single-writer. A Tape constructed with
// record=false stores values only and is the inference path.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coldguess {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <class T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{0}) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::initializer_list<T> values)
      : rows(r), cols(c), data(values) {
    if (data.size() != r * c) throw ShapeError("Matrix: initializer size does not match shape");
  }

  static Matrix row_vector(std::initializer_list<T> values) {
    return Matrix(1, values.size(), values);
  }
  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Matrix&) const = default;

  template <class U>
  Matrix<U> cast() const {
    Matrix<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

namespace detail {

template <class T>
using EigenRowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<EigenRowMajor<T>> as_eigen(Matrix<T>& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}
template <class T>
Eigen::Map<const EigenRowMajor<T>> as_eigen(const Matrix<T>& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

inline std::string shape_str(std::size_t r, std::size_t c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

}  // namespace detail

/// Row groups for segment reductions: output row i reduces input rows
/// indices[offsets[i] .. offsets[i+1]).
struct SegmentIndex {
  std::vector<std::uint32_t> offsets{0};
  std::vector<std::uint32_t> indices;

  std::size_t segments() const { return offsets.size() - 1; }
  std::size_t segment_size(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
  std::span<const std::uint32_t> segment(std::size_t i) const {
    return {indices.data() + offsets[i], segment_size(i)};
  }
  void push_segment(std::span<const std::uint32_t> members) {
    indices.insert(indices.end(), members.begin(), members.end());
    offsets.push_back(static_cast<std::uint32_t>(indices.size()));
  }
};

enum class Activation { identity, relu, sigmoid };

template <class T>
class Tape;

template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<T>& value() const { return tape->value(*this); }
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
};

template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix<T>& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Matrix<T> value) { return push(std::move(value), false, nullptr); }

  /// Leaf whose gradient is collected by backward().
  Var<T> parameter(Matrix<T> value) { return push(std::move(value), record_, nullptr); }

  const Matrix<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient of the last backward() target with respect to v; zeros when
  /// v did not influence it.
  Matrix<T> grad(Var<T> v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty() && !n.value.empty()) return Matrix<T>(n.value.rows, n.value.cols);
    return n.grad;
  }

  Var<T> push(Matrix<T> value, bool requires_grad, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && record_;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>{this, nodes_.size() - 1};
  }

  /// Accumulation slot for the adjoint of v, allocated on first use.
  Matrix<T>& grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Matrix<T>(n.value.rows, n.value.cols);
    return n.grad;
  }

  void backward(Var<T> loss) {
    if (loss.tape != this) throw std::logic_error("backward: variable belongs to another tape");
    Node& target = nodes_.at(loss.id);
    if (!record_ || !target.requires_grad)
      throw std::logic_error("backward: target was not recorded with a gradient path");
    if (target.value.rows != 1 || target.value.cols != 1)
      throw ShapeError("backward: loss must be scalar, got " +
                       detail::shape_str(target.value.rows, target.value.cols));
    for (Node& n : nodes_) n.grad = Matrix<T>();
    grad_slot(loss.id).data[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      // The callback may allocate grads on earlier nodes, never on node i.
      Matrix<T> g = std::move(n.grad);
      n.backward(*this, g);
      nodes_[i].grad = std::move(g);
    }
  }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
};

namespace detail {

template <class T>
void require_same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape || a.tape == nullptr) throw std::logic_error("variables from different tapes");
}

template <class T>
bool any_requires(Tape<T>& t, std::initializer_list<Var<T>> vs) {
  for (Var<T> v : vs)
    if (t.requires_grad(v)) return true;
  return false;
}

}  // namespace detail

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  Tape<T>& t = *a.tape;
  const Matrix<T>& A = t.value(a);
  const Matrix<T>& B = t.value(b);
  if (A.cols != B.rows)
    throw ShapeError("matmul: " + detail::shape_str(A.rows, A.cols) + " x " +
                     detail::shape_str(B.rows, B.cols));
  Matrix<T> out(A.rows, B.cols);
  if (A.rows && B.cols && A.cols) detail::as_eigen(out).noalias() = detail::as_eigen(A) * detail::as_eigen(B);
  const std::size_t ia = a.id, ib = b.id;
  return t.push(std::move(out), detail::any_requires(t, {a, b}), [ia, ib](Tape<T>& tp, const Matrix<T>& g) {
    const Matrix<T>& A = tp.value(Var<T>{&tp, ia});
    const Matrix<T>& B = tp.value(Var<T>{&tp, ib});
    if (tp.requires_grad(Var<T>{&tp, ia}) && A.size())
      detail::as_eigen(tp.grad_slot(ia)).noalias() += detail::as_eigen(g) * detail::as_eigen(B).transpose();
    if (tp.requires_grad(Var<T>{&tp, ib}) && B.size())
      detail::as_eigen(tp.grad_slot(ib)).noalias() += detail::as_eigen(A).transpose() * detail::as_eigen(g);
  });
}

/// x[n x a] * W[a x b] + bias[1 x b], bias broadcast over rows.
template <class T>
Var<T> affine(Var<T> x, Var<T> W, Var<T> bias) {
  detail::require_same_tape(x, W);
  detail::require_same_tape(x, bias);
  Tape<T>& t = *x.tape;
  const Matrix<T>& X = t.value(x);
  const Matrix<T>& Wm = t.value(W);
  const Matrix<T>& b = t.value(bias);
  if (X.cols != Wm.rows || b.rows != 1 || b.cols != Wm.cols)
    throw ShapeError("affine: x" + detail::shape_str(X.rows, X.cols) + " W" +
                     detail::shape_str(Wm.rows, Wm.cols) + " b" + detail::shape_str(b.rows, b.cols));
  Matrix<T> out(X.rows, Wm.cols);
  auto O = detail::as_eigen(out);
  if (X.rows && Wm.cols && X.cols) O.noalias() = detail::as_eigen(X) * detail::as_eigen(Wm);
  O.rowwise() += detail::as_eigen(b).row(0);
  const std::size_t ix = x.id, iw = W.id, ib = bias.id;
  return t.push(std::move(out), detail::any_requires(t, {x, W, bias}),
                [ix, iw, ib](Tape<T>& tp, const Matrix<T>& g) {
                  const Matrix<T>& X = tp.value(Var<T>{&tp, ix});
                  const Matrix<T>& Wm = tp.value(Var<T>{&tp, iw});
                  auto G = detail::as_eigen(g);
                  if (tp.requires_grad(Var<T>{&tp, ix}) && X.size())
                    detail::as_eigen(tp.grad_slot(ix)).noalias() += G * detail::as_eigen(Wm).transpose();
                  if (tp.requires_grad(Var<T>{&tp, iw}) && Wm.size() && X.rows)
                    detail::as_eigen(tp.grad_slot(iw)).noalias() += detail::as_eigen(X).transpose() * G;
                  if (tp.requires_grad(Var<T>{&tp, ib}))
                    detail::as_eigen(tp.grad_slot(ib)).row(0) += G.colwise().sum();
                });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  Tape<T>& t = *a.tape;
  const Matrix<T>& A = t.value(a);
  const Matrix<T>& B = t.value(b);
  if (!A.same_shape(B))
    throw ShapeError("add: " + detail::shape_str(A.rows, A.cols) + " vs " + detail::shape_str(B.rows, B.cols));
  Matrix<T> out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.push(std::move(out), detail::any_requires(t, {a, b}), [ia, ib](Tape<T>& tp, const Matrix<T>& g) {
    for (std::size_t id : {ia, ib}) {
      if (!tp.requires_grad(Var<T>{&tp, id})) continue;
      Matrix<T>& s = tp.grad_slot(id);
      for (std::size_t i = 0; i < g.size(); ++i) s.data[i] += g.data[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> x, T factor) {
  Tape<T>& t = *x.tape;
  Matrix<T> out = t.value(x);
  for (T& v : out.data) v *= factor;
  const std::size_t ix = x.id;
  return t.push(std::move(out), t.requires_grad(x), [ix, factor](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T>& s = tp.grad_slot(ix);
    for (std::size_t i = 0; i < g.size(); ++i) s.data[i] += factor * g.data[i];
  });
}

/// Row i of x times factors[i].
template <class T>
Var<T> scale_rows(Var<T> x, std::shared_ptr<const std::vector<T>> factors) {
  Tape<T>& t = *x.tape;
  Matrix<T> out = t.value(x);
  if (factors->size() != out.rows) throw ShapeError("scale_rows: one factor per row expected");
  for (std::size_t i = 0; i < out.rows; ++i)
    for (T& v : out.row(i)) v *= (*factors)[i];
  const std::size_t ix = x.id;
  return t.push(std::move(out), t.requires_grad(x), [ix, factors](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T>& s = tp.grad_slot(ix);
    for (std::size_t i = 0; i < g.rows; ++i) {
      auto dst = s.row(i);
      auto src = g.row(i);
      for (std::size_t c = 0; c < g.cols; ++c) dst[c] += (*factors)[i] * src[c];
    }
  });
}

/// Elementwise square; used by tests and the finite-difference harness.
template <class T>
Var<T> square(Var<T> x) {
  Tape<T>& t = *x.tape;
  Matrix<T> out = t.value(x);
  for (T& v : out.data) v *= v;
  const std::size_t ix = x.id;
  return t.push(std::move(out), t.requires_grad(x), [ix](Tape<T>& tp, const Matrix<T>& g) {
    const Matrix<T>& X = tp.value(Var<T>{&tp, ix});
    Matrix<T>& s = tp.grad_slot(ix);
    for (std::size_t i = 0; i < g.size(); ++i) s.data[i] += T{2} * X.data[i] * g.data[i];
  });
}

/// Sum of all elements as a 1x1 scalar.
template <class T>
Var<T> sum(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Matrix<T>& X = t.value(x);
  double acc = 0.0;
  for (T v : X.data) acc += static_cast<double>(v);
  const std::size_t ix = x.id;
  return t.push(Matrix<T>(1, 1, static_cast<T>(acc)), t.requires_grad(x), [ix](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T>& s = tp.grad_slot(ix);
    for (T& v : s.data) v += g.data[0];
  });
}

/// Column-wise concatenation in argument order. Zero-width parts are allowed.
template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  Tape<T>& t = *parts.front().tape;
  const std::size_t rows = t.value(parts.front()).rows;
  std::size_t width = 0;
  bool needs = false;
  std::vector<std::size_t> ids;
  for (Var<T> p : parts) {
    detail::require_same_tape(parts.front(), p);
    const Matrix<T>& m = t.value(p);
    if (m.rows != rows)
      throw ShapeError("concat_cols: row mismatch " + std::to_string(m.rows) + " vs " + std::to_string(rows));
    width += m.cols;
    needs = needs || t.requires_grad(p);
    ids.push_back(p.id);
  }
  Matrix<T> out(rows, width);
  std::size_t offset = 0;
  for (Var<T> p : parts) {
    const Matrix<T>& m = t.value(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(m.row(r).begin(), m.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    offset += m.cols;
  }
  return t.push(std::move(out), needs, [ids = std::move(ids)](Tape<T>& tp, const Matrix<T>& g) {
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t w = tp.value(Var<T>{&tp, id}).cols;
      if (tp.requires_grad(Var<T>{&tp, id}) && w) {
        Matrix<T>& s = tp.grad_slot(id);
        for (std::size_t r = 0; r < g.rows; ++r)
          for (std::size_t c = 0; c < w; ++c) s(r, c) += g(r, off + c);
      }
      off += w;
    }
  });
}

template <class T>
Var<T> concat_cols(std::initializer_list<Var<T>> parts) {
  return concat_cols(std::span<const Var<T>>(parts.begin(), parts.size()));
}

/// Per-segment arithmetic mean of input rows. Empty segments produce a zero row.
template <class T>
Var<T> segment_mean(Var<T> x, std::shared_ptr<const SegmentIndex> segments) {
  Tape<T>& t = *x.tape;
  const Matrix<T>& X = t.value(x);
  const std::size_t m = segments->segments();
  Matrix<T> out(m, X.cols);
  for (std::size_t i = 0; i < m; ++i) {
    auto members = segments->segment(i);
    if (members.empty()) continue;
    auto dst = out.row(i);
    for (std::uint32_t u : members) {
      if (u >= X.rows) throw ShapeError("segment_mean: index out of range");
      auto src = X.row(u);
      for (std::size_t c = 0; c < X.cols; ++c) dst[c] += src[c];
    }
    const T inv = T{1} / static_cast<T>(members.size());
    for (T& v : dst) v *= inv;
  }
  const std::size_t ix = x.id;
  return t.push(std::move(out), t.requires_grad(x), [ix, segments](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T>& s = tp.grad_slot(ix);
    for (std::size_t i = 0; i < segments->segments(); ++i) {
      auto members = segments->segment(i);
      if (members.empty()) continue;
      const T inv = T{1} / static_cast<T>(members.size());
      auto gr = g.row(i);
      for (std::uint32_t u : members) {
        auto dst = s.row(u);
        for (std::size_t c = 0; c < g.cols; ++c) dst[c] += inv * gr[c];
      }
    }
  });
}

/// Column means of x as a 1 x d row; zero row when x has no rows.
template <class T>
Var<T> mean_rows(Var<T> x) {
  auto seg = std::make_shared<SegmentIndex>();
  std::vector<std::uint32_t> all(x.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
  seg->push_segment(all);
  return segment_mean(x, std::move(seg));
}

template <class T>
Var<T> gather_rows(Var<T> x, std::shared_ptr<const std::vector<std::uint32_t>> idx) {
  Tape<T>& t = *x.tape;
  const Matrix<T>& X = t.value(x);
  Matrix<T> out(idx->size(), X.cols);
  for (std::size_t i = 0; i < idx->size(); ++i) {
    if ((*idx)[i] >= X.rows) throw ShapeError("gather_rows: index out of range");
    auto src = X.row((*idx)[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  const std::size_t ix = x.id;
  return t.push(std::move(out), t.requires_grad(x), [ix, idx](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T>& s = tp.grad_slot(ix);
    for (std::size_t i = 0; i < idx->size(); ++i) {
      auto dst = s.row((*idx)[i]);
      auto src = g.row(i);
      for (std::size_t c = 0; c < g.cols; ++c) dst[c] += src[c];
    }
  });
}

template <class T>
Var<T> gather_rows(Var<T> x, std::vector<std::uint32_t> idx) {
  return gather_rows(x, std::make_shared<const std::vector<std::uint32_t>>(std::move(idx)));
}

/// out = base; out[idx[i]] += x[i].
template <class T>
Var<T> scatter_add_rows(Var<T> base, Var<T> x, std::shared_ptr<const std::vector<std::uint32_t>> idx) {
  detail::require_same_tape(base, x);
  Tape<T>& t = *base.tape;
  const Matrix<T>& X = t.value(x);
  Matrix<T> out = t.value(base);
  if (X.rows != idx->size() || (X.rows && X.cols != out.cols)) throw ShapeError("scatter_add_rows: shape mismatch");
  for (std::size_t i = 0; i < idx->size(); ++i) {
    if ((*idx)[i] >= out.rows) throw ShapeError("scatter_add_rows: index out of range");
    auto dst = out.row((*idx)[i]);
    auto src = X.row(i);
    for (std::size_t c = 0; c < X.cols; ++c) dst[c] += src[c];
  }
  const std::size_t ib = base.id, ix = x.id;
  return t.push(std::move(out), detail::any_requires(t, {base, x}), [ib, ix, idx](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(Var<T>{&tp, ib})) {
      Matrix<T>& s = tp.grad_slot(ib);
      for (std::size_t i = 0; i < g.size(); ++i) s.data[i] += g.data[i];
    }
    if (tp.requires_grad(Var<T>{&tp, ix})) {
      Matrix<T>& s = tp.grad_slot(ix);
      for (std::size_t i = 0; i < idx->size(); ++i) {
        auto src = g.row((*idx)[i]);
        auto dst = s.row(i);
        for (std::size_t c = 0; c < g.cols; ++c) dst[c] += src[c];
      }
    }
  });
}

namespace detail {

template <class T>
T stable_sigmoid(T x) {
  T s;
  if (x >= T{0}) {
    s = T{1} / (T{1} + std::exp(-x));
  } else {
    const T e = std::exp(x);
    s = e / (T{1} + e);
  }
  // Keep the result strictly inside (0, 1) even where it rounds to an endpoint.
  constexpr T lo = std::numeric_limits<T>::denorm_min();
  constexpr T hi = T{1} - std::numeric_limits<T>::epsilon() / T{2};
  return std::clamp(s, lo, hi);
}

}  // namespace detail

template <class T>
Var<T> activation(Var<T> x, Activation kind) {
  if (kind == Activation::identity) return x;
  Tape<T>& t = *x.tape;
  Matrix<T> out = t.value(x);
  if (kind == Activation::relu) {
    for (T& v : out.data) v = v > T{0} ? v : T{0};
  } else {
    for (T& v : out.data) v = detail::stable_sigmoid(v);
  }
  const std::size_t ix = x.id;
  // The backward rule reads its own output, which sits at the next node id.
  const std::size_t iout = t.size();
  return t.push(std::move(out), t.requires_grad(x), [ix, iout, kind](Tape<T>& tp, const Matrix<T>& g) {
    const Matrix<T>& Y = tp.value(Var<T>{&tp, iout});
    Matrix<T>& s = tp.grad_slot(ix);
    if (kind == Activation::relu) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (Y.data[i] > T{0}) s.data[i] += g.data[i];
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) s.data[i] += g.data[i] * Y.data[i] * (T{1} - Y.data[i]);
    }
  });
}

/// Inverted dropout. Identity when rate is 0 or the tape is not recording.
template <class T, class Rng>
Var<T> dropout(Var<T> x, double rate, Rng& rng) {
  Tape<T>& t = *x.tape;
  if (rate <= 0.0 || !t.recording()) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  auto keep = std::make_shared<std::vector<T>>(t.value(x).size());
  const T scale_kept = static_cast<T>(1.0 / (1.0 - rate));
  std::bernoulli_distribution coin(1.0 - rate);
  for (T& k : *keep) k = coin(rng) ? scale_kept : T{0};
  Matrix<T> out = t.value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= (*keep)[i];
  const std::size_t ix = x.id;
  return t.push(std::move(out), t.requires_grad(x), [ix, keep](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T>& s = tp.grad_slot(ix);
    for (std::size_t i = 0; i < g.size(); ++i) s.data[i] += g.data[i] * (*keep)[i];
  });
}

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean binary cross-entropy over all elements of p against constant labels z.
/// Probabilities are clamped to [1e-7, 1 - 1e-7]; the clamp passes no gradient
/// outside that interval.
template <class T>
Var<T> bce_loss(Var<T> p, const Matrix<T>& z) {
  Tape<T>& t = *p.tape;
  const Matrix<T>& P = t.value(p);
  if (!P.same_shape(z))
    throw ShapeError("bce_loss: p" + detail::shape_str(P.rows, P.cols) + " vs z" + detail::shape_str(z.rows, z.cols));
  if (P.empty()) throw ShapeError("bce_loss: empty input");
  const double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;
  double acc = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double q = std::clamp(static_cast<double>(P.data[i]), lo, hi);
    const double y = static_cast<double>(z.data[i]);
    acc -= y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
  }
  const double n = static_cast<double>(P.size());
  const std::size_t ip = p.id;
  auto labels = std::make_shared<const Matrix<T>>(z);
  return t.push(Matrix<T>(1, 1, static_cast<T>(acc / n)), t.requires_grad(p),
                [ip, labels, n, lo, hi](Tape<T>& tp, const Matrix<T>& g) {
                  const Matrix<T>& P = tp.value(Var<T>{&tp, ip});
                  Matrix<T>& s = tp.grad_slot(ip);
                  const double up = static_cast<double>(g.data[0]);
                  for (std::size_t i = 0; i < P.size(); ++i) {
                    const double raw = static_cast<double>(P.data[i]);
                    if (raw < lo || raw > hi) continue;
                    const double y = static_cast<double>(labels->data[i]);
                    s.data[i] += static_cast<T>(up * (-(y / raw) + (1.0 - y) / (1.0 - raw)) / n);
                  }
                });
}

}  // namespace coldguess
