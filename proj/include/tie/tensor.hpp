#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tie {

using Shape = std::vector<std::size_t>;

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

[[noreturn]] inline void tensor_fail(const std::string& msg) {
  throw TensorError(msg);
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

}  // namespace detail

// Shared handle onto a value buffer plus (optionally) its gradient buffer.
// Copying a Tensor aliases the same storage.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    node_->shape = std::move(shape);
    node_->value.assign(detail::numel(node_->shape), fill);
    node_->requires_grad = requires_grad;
  }

  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false) {
    if (detail::numel(shape) != data.size())
      tensor_fail("tensor: data size " + std::to_string(data.size()) +
                  " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<detail::Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t size() const { return node_->value.size(); }

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }
  double& at(std::size_t i) { return node_->value[i]; }
  double at(std::size_t i) const { return node_->value[i]; }

  double item() const {
    if (size() != 1)
      tensor_fail("item: tensor is not scalar, shape " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  // gradient buffer; empty vector when nothing has been accumulated yet
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }

  void ensure_grad() const {
    if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  }

  void zero_grad() { node_->grad.clear(); }

  // true iff every entry is finite
  bool all_finite() const {
    for (double v : node_->value)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// ------------------------------------------------------------------ tape --

// Thread-local record of backward closures, replayed in reverse by
// backward(). Parameter gradients accumulate additively across calls; the
// tape itself is cleared after each replay.
class Tape {
 public:
  static Tape& get() {
    static thread_local Tape t;
    return t;
  }

  bool recording = true;
  std::vector<std::function<void()>> ops;

  void record(std::function<void()> fn) { ops.push_back(std::move(fn)); }
  std::size_t size() const { return ops.size(); }
  void clear() { ops.clear(); }
};

inline bool grad_enabled() { return Tape::get().recording; }

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(Tape::get().recording) { Tape::get().recording = false; }
  ~NoGradGuard() { Tape::get().recording = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    tensor_fail("backward: loss must be scalar, got shape " +
                shape_str(loss.shape()));
  Tape& tape = Tape::get();
  if (tape.ops.empty())
    tensor_fail("backward: tape is empty, no operations were recorded");
  loss.ensure_grad();
  loss.node()->grad[0] = 1.0;
  for (auto it = tape.ops.rbegin(); it != tape.ops.rend(); ++it) (*it)();
  tape.clear();
}

namespace detail {

using NodePtr = std::shared_ptr<Node>;

inline bool track(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

inline void accumulate(const NodePtr& n, std::size_t i, double v) {
  if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
  n->grad[i] += v;
}

inline std::vector<double>& grad_buf(const NodePtr& n) {
  if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
  return n->grad;
}

}  // namespace detail

// ------------------------------------------------------------ primitives --

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    tensor_fail("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                shape_str(b.shape()));
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor out(Shape{M, N});
  {
    const double* av = a.data().data();
    const double* bv = b.data().data();
    double* ov = out.data().data();
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t k = 0; k < K; ++k) {
        const double aik = av[i * K + k];
        if (aik == 0.0) continue;
        const double* brow = bv + k * N;
        double* orow = ov + i * N;
        for (std::size_t j = 0; j < N; ++j) orow[j] += aik * brow[j];
      }
  }
  if (detail::track({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::get().record([an, bn, on, M, K, N] {
      if (on->grad.empty()) return;
      const double* g = on->grad.data();
      if (an->requires_grad) {
        double* da = detail::grad_buf(an).data();
        const double* bv = bn->value.data();
        for (std::size_t i = 0; i < M; ++i)
          for (std::size_t k = 0; k < K; ++k) {
            double acc = 0.0;
            const double* grow = g + i * N;
            const double* brow = bv + k * N;
            for (std::size_t j = 0; j < N; ++j) acc += grow[j] * brow[j];
            da[i * K + k] += acc;
          }
      }
      if (bn->requires_grad) {
        double* db = detail::grad_buf(bn).data();
        const double* av = an->value.data();
        for (std::size_t i = 0; i < M; ++i)
          for (std::size_t k = 0; k < K; ++k) {
            const double aik = av[i * K + k];
            if (aik == 0.0) continue;
            const double* grow = g + i * N;
            double* drow = db + k * N;
            for (std::size_t j = 0; j < N; ++j) drow[j] += aik * grow[j];
          }
      }
    });
  }
  return out;
}

// elementwise add; b may also be a row vector [N] or [1xN] broadcast over
// the rows of a [MxN]
inline Tensor add(const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool row_bcast =
      a.ndim() == 2 &&
      ((b.ndim() == 1 && b.dim(0) == a.dim(1)) ||
       (b.ndim() == 2 && b.dim(0) == 1 && b.dim(1) == a.dim(1)));
  if (!same && !row_bcast)
    tensor_fail("add: incompatible shapes " + shape_str(a.shape()) + " and " +
                shape_str(b.shape()));
  Tensor out(a.shape());
  const std::size_t n = a.size(), bn_sz = b.size();
  for (std::size_t i = 0; i < n; ++i)
    out.at(i) = a.at(i) + b.at(same ? i : i % bn_sz);
  if (detail::track({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::get().record([an, bn, on, same, n, bn_sz] {
      if (on->grad.empty()) return;
      const double* g = on->grad.data();
      if (an->requires_grad) {
        double* da = detail::grad_buf(an).data();
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
      }
      if (bn->requires_grad) {
        double* db = detail::grad_buf(bn).data();
        for (std::size_t i = 0; i < n; ++i) db[same ? i : i % bn_sz] += g[i];
      }
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    tensor_fail("mul: shapes differ, " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
  Tensor out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) * b.at(i);
  if (detail::track({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::get().record([an, bn, on, n] {
      if (on->grad.empty()) return;
      const double* g = on->grad.data();
      if (an->requires_grad) {
        double* da = detail::grad_buf(an).data();
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        double* db = detail::grad_buf(bn).data();
        for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * an->value[i];
      }
    });
  }
  return out;
}

inline Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) * c;
  if (detail::track({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    Tape::get().record([an, on, c, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      double* da = detail::grad_buf(an).data();
      for (std::size_t i = 0; i < n; ++i) da[i] += on->grad[i] * c;
    });
  }
  return out;
}

inline Tensor add_scalar(const Tensor& a, double c) {
  Tensor out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) + c;
  if (detail::track({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    Tape::get().record([an, on, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      double* da = detail::grad_buf(an).data();
      for (std::size_t i = 0; i < n; ++i) da[i] += on->grad[i];
    });
  }
  return out;
}

inline Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) > 0.0 ? a.at(i) : 0.0;
  if (detail::track({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    Tape::get().record([an, on, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      double* da = detail::grad_buf(an).data();
      for (std::size_t i = 0; i < n; ++i)
        if (an->value[i] > 0.0) da[i] += on->grad[i];
    });
  }
  return out;
}

inline Tensor tanh(const Tensor& a) {
  Tensor out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = std::tanh(a.at(i));
  if (detail::track({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    Tape::get().record([an, on, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      double* da = detail::grad_buf(an).data();
      for (std::size_t i = 0; i < n; ++i) {
        const double t = on->value[i];
        da[i] += on->grad[i] * (1.0 - t * t);
      }
    });
  }
  return out;
}

inline Tensor sigmoid(const Tensor& a) {
  Tensor out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.at(i);
    out.at(i) = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                         : std::exp(x) / (1.0 + std::exp(x));
  }
  if (detail::track({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    Tape::get().record([an, on, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      double* da = detail::grad_buf(an).data();
      for (std::size_t i = 0; i < n; ++i) {
        const double s = on->value[i];
        da[i] += on->grad[i] * s * (1.0 - s);
      }
    });
  }
  return out;
}

// row-wise softmax of a [BxK] matrix, max subtracted per row
inline Tensor softmax(const Tensor& a) {
  if (a.ndim() != 2)
    tensor_fail("softmax: expected 2-d input, got " + shape_str(a.shape()));
  const std::size_t B = a.dim(0), K = a.dim(1);
  Tensor out(a.shape());
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = a.data().data() + b * K;
    double* orow = out.data().data() + b * K;
    double m = row[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      orow[k] = std::exp(row[k] - m);
      z += orow[k];
    }
    for (std::size_t k = 0; k < K; ++k) orow[k] /= z;
  }
  if (detail::track({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    Tape::get().record([an, on, B, K] {
      if (on->grad.empty() || !an->requires_grad) return;
      double* da = detail::grad_buf(an).data();
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = on->value.data() + b * K;
        const double* g = on->grad.data() + b * K;
        double dot = 0.0;
        for (std::size_t k = 0; k < K; ++k) dot += g[k] * p[k];
        for (std::size_t k = 0; k < K; ++k)
          da[b * K + k] += p[k] * (g[k] - dot);
      }
    });
  }
  return out;
}

// row-wise log softmax of a [BxK] matrix
inline Tensor log_softmax(const Tensor& a) {
  if (a.ndim() != 2)
    tensor_fail("log_softmax: expected 2-d input, got " + shape_str(a.shape()));
  const std::size_t B = a.dim(0), K = a.dim(1);
  Tensor out(a.shape());
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = a.data().data() + b * K;
    double* orow = out.data().data() + b * K;
    double m = row[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - m);
    const double lz = m + std::log(z);
    for (std::size_t k = 0; k < K; ++k) orow[k] = row[k] - lz;
  }
  if (detail::track({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    Tape::get().record([an, on, B, K] {
      if (on->grad.empty() || !an->requires_grad) return;
      double* da = detail::grad_buf(an).data();
      for (std::size_t b = 0; b < B; ++b) {
        const double* lp = on->value.data() + b * K;
        const double* g = on->grad.data() + b * K;
        double gs = 0.0;
        for (std::size_t k = 0; k < K; ++k) gs += g[k];
        for (std::size_t k = 0; k < K; ++k)
          da[b * K + k] += g[k] - std::exp(lp[k]) * gs;
      }
    });
  }
  return out;
}

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (detail::track({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    Tape::get().record([an, on] {
      if (on->grad.empty() || !an->requires_grad) return;
      const double g = on->grad[0];
      double* da = detail::grad_buf(an).data();
      for (std::size_t i = 0; i < an->value.size(); ++i) da[i] += g;
    });
  }
  return out;
}

inline Tensor mean(const Tensor& a) {
  if (a.size() == 0) tensor_fail("mean: empty tensor");
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  Tensor out = Tensor::scalar(acc * inv);
  if (detail::track({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    Tape::get().record([an, on, inv] {
      if (on->grad.empty() || !an->requires_grad) return;
      const double g = on->grad[0] * inv;
      double* da = detail::grad_buf(an).data();
      for (std::size_t i = 0; i < an->value.size(); ++i) da[i] += g;
    });
  }
  return out;
}

// concatenate two 2-d tensors along the last axis
inline Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0))
    tensor_fail("concat: incompatible shapes " + shape_str(a.shape()) +
                " and " + shape_str(b.shape()));
  const std::size_t B = a.dim(0), A = a.dim(1), C = b.dim(1);
  Tensor out(Shape{B, A + C});
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < A; ++j) out.at(i * (A + C) + j) = a.at(i * A + j);
    for (std::size_t j = 0; j < C; ++j)
      out.at(i * (A + C) + A + j) = b.at(i * C + j);
  }
  if (detail::track({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::get().record([an, bn, on, B, A, C] {
      if (on->grad.empty()) return;
      const double* g = on->grad.data();
      if (an->requires_grad) {
        double* da = detail::grad_buf(an).data();
        for (std::size_t i = 0; i < B; ++i)
          for (std::size_t j = 0; j < A; ++j)
            da[i * A + j] += g[i * (A + C) + j];
      }
      if (bn->requires_grad) {
        double* db = detail::grad_buf(bn).data();
        for (std::size_t i = 0; i < B; ++i)
          for (std::size_t j = 0; j < C; ++j)
            db[i * C + j] += g[i * (A + C) + A + j];
      }
    });
  }
  return out;
}

inline Tensor reshape(const Tensor& a, Shape new_shape) {
  if (detail::numel(new_shape) != a.size())
    tensor_fail("reshape: cannot view " + shape_str(a.shape()) + " as " +
                shape_str(new_shape));
  Tensor out = Tensor::from_data(std::move(new_shape), a.data());
  if (detail::track({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    Tape::get().record([an, on] {
      if (on->grad.empty() || !an->requires_grad) return;
      double* da = detail::grad_buf(an).data();
      for (std::size_t i = 0; i < an->value.size(); ++i) da[i] += on->grad[i];
    });
  }
  return out;
}

// columns [c0, c1) of a 2-d tensor
inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  if (a.ndim() != 2 || c0 >= c1 || c1 > a.dim(1))
    tensor_fail("slice_cols: invalid range [" + std::to_string(c0) + "," +
                std::to_string(c1) + ") for shape " + shape_str(a.shape()));
  const std::size_t B = a.dim(0), K = a.dim(1), W = c1 - c0;
  Tensor out(Shape{B, W});
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < W; ++j) out.at(i * W + j) = a.at(i * K + c0 + j);
  if (detail::track({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    Tape::get().record([an, on, B, K, W, c0] {
      if (on->grad.empty() || !an->requires_grad) return;
      double* da = detail::grad_buf(an).data();
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < W; ++j)
          da[i * K + c0 + j] += on->grad[i * W + j];
    });
  }
  return out;
}

// per-row entry selection: out[b] = a[b, idx[b]], shape [Bx1]
inline Tensor gather_labels(const Tensor& a, const std::vector<std::size_t>& idx) {
  if (a.ndim() != 2 || idx.size() != a.dim(0))
    tensor_fail("gather_labels: need one index per row of " +
                shape_str(a.shape()) + ", got " + std::to_string(idx.size()));
  const std::size_t B = a.dim(0), K = a.dim(1);
  for (std::size_t b = 0; b < B; ++b)
    if (idx[b] >= K)
      tensor_fail("gather_labels: index " + std::to_string(idx[b]) +
                  " out of range for " + std::to_string(K) + " columns");
  Tensor out(Shape{B, 1});
  for (std::size_t b = 0; b < B; ++b) out.at(b) = a.at(b * K + idx[b]);
  if (detail::track({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    auto ix = idx;
    Tape::get().record([an, on, ix, B, K] {
      if (on->grad.empty() || !an->requires_grad) return;
      double* da = detail::grad_buf(an).data();
      for (std::size_t b = 0; b < B; ++b) da[b * K + ix[b]] += on->grad[b];
    });
  }
  return out;
}

// ------------------------------------------------------------- fused ops --

// Class-weighted cross entropy over integer labels:
//   loss = sum_b w[y_b] * (-log softmax(logits)[b, y_b]) / sum_b w[y_b]
// With uniform weights this reduces to the plain mean cross entropy, and
// rescaling all weights by a constant leaves the value unchanged.
inline Tensor weighted_cross_entropy(const Tensor& logits,
                                     const std::vector<std::size_t>& labels,
                                     const std::vector<double>& class_weights) {
  if (logits.ndim() != 2)
    tensor_fail("weighted_cross_entropy: logits must be 2-d, got " +
                shape_str(logits.shape()));
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (labels.size() != B)
    tensor_fail("weighted_cross_entropy: got " + std::to_string(labels.size()) +
                " labels for " + std::to_string(B) + " rows");
  if (class_weights.size() != K)
    tensor_fail("weighted_cross_entropy: got " +
                std::to_string(class_weights.size()) + " class weights for " +
                std::to_string(K) + " classes");
  for (double w : class_weights)
    if (!(w > 0.0))
      tensor_fail("weighted_cross_entropy: class weights must be positive");
  for (std::size_t b = 0; b < B; ++b)
    if (labels[b] >= K)
      tensor_fail("weighted_cross_entropy: label " + std::to_string(labels[b]) +
                  " out of range for " + std::to_string(K) + " classes");

  // log softmax rows computed in place
  std::vector<double> lsm(B * K);
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = logits.data().data() + b * K;
    double m = row[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - m);
    const double lz = m + std::log(z);
    for (std::size_t k = 0; k < K; ++k) lsm[b * K + k] = row[k] - lz;
  }
  double wsum = 0.0, acc = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double w = class_weights[labels[b]];
    wsum += w;
    acc -= w * lsm[b * K + labels[b]];
  }
  Tensor out = Tensor::scalar(acc / wsum);
  if (detail::track({&logits})) {
    out.set_requires_grad(true);
    auto ln = logits.node(), on = out.node();
    auto lab = labels;
    auto cw = class_weights;
    auto lsm_copy = std::make_shared<std::vector<double>>(std::move(lsm));
    Tape::get().record([ln, on, lab, cw, lsm_copy, B, K, wsum] {
      if (on->grad.empty() || !ln->requires_grad) return;
      const double g = on->grad[0] / wsum;
      double* dl = detail::grad_buf(ln).data();
      const std::vector<double>& l = *lsm_copy;
      for (std::size_t b = 0; b < B; ++b) {
        const double w = cw[lab[b]];
        for (std::size_t k = 0; k < K; ++k) {
          const double p = std::exp(l[b * K + k]);
          dl[b * K + k] += g * w * (p - (k == lab[b] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

// Cross entropy against fixed soft target rows, averaged over the batch:
//   loss = mean_b( -sum_k t[b,k] * log softmax(logits)[b,k] )
// Targets are treated as constants.
inline Tensor soft_cross_entropy(const Tensor& logits, const Tensor& targets) {
  if (logits.ndim() != 2 || logits.shape() != targets.shape())
    tensor_fail("soft_cross_entropy: logits " + shape_str(logits.shape()) +
                " and targets " + shape_str(targets.shape()) + " must match");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  std::vector<double> lsm(B * K);
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = logits.data().data() + b * K;
    double m = row[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - m);
    const double lz = m + std::log(z);
    for (std::size_t k = 0; k < K; ++k) lsm[b * K + k] = row[k] - lz;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < B * K; ++i) acc -= targets.at(i) * lsm[i];
  Tensor out = Tensor::scalar(acc / static_cast<double>(B));
  if (detail::track({&logits})) {
    out.set_requires_grad(true);
    auto ln = logits.node(), tn = targets.node(), on = out.node();
    auto lsm_copy = std::make_shared<std::vector<double>>(std::move(lsm));
    Tape::get().record([ln, tn, on, lsm_copy, B, K] {
      if (on->grad.empty() || !ln->requires_grad) return;
      const double g = on->grad[0] / static_cast<double>(B);
      double* dl = detail::grad_buf(ln).data();
      const std::vector<double>& l = *lsm_copy;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k)
          dl[b * K + k] += g * (std::exp(l[b * K + k]) - tn->value[b * K + k]);
    });
  }
  return out;
}

// Mean pairwise cosine distance over the rows of h [BxF]:
//   1/(B(B-1)) * sum_{i != j} (1 - cos(u_i, u_j))
//   = 1 - (|sum_i u_i|^2 - B) / (B(B-1))
// where u_i = h_i / max(|h_i|, 1e-12). Identical rows give 0, pairwise
// orthogonal rows give 1, opposite rows give 2.
inline Tensor cosine_diversity(const Tensor& h) {
  if (h.ndim() != 2)
    tensor_fail("cosine_diversity: expected 2-d input, got " +
                shape_str(h.shape()));
  const std::size_t B = h.dim(0), F = h.dim(1);
  if (B < 2)
    tensor_fail("cosine_diversity: need at least 2 rows, got " +
                std::to_string(B));
  constexpr double kNormFloor = 1e-12;
  std::vector<double> norms(B);
  std::vector<double> u(B * F);
  std::vector<double> s(F, 0.0);
  for (std::size_t i = 0; i < B; ++i) {
    double nn = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
      const double v = h.at(i * F + f);
      nn += v * v;
    }
    norms[i] = std::max(std::sqrt(nn), kNormFloor);
    for (std::size_t f = 0; f < F; ++f) {
      u[i * F + f] = h.at(i * F + f) / norms[i];
      s[f] += u[i * F + f];
    }
  }
  double s2 = 0.0;
  for (std::size_t f = 0; f < F; ++f) s2 += s[f] * s[f];
  const double denom = static_cast<double>(B) * static_cast<double>(B - 1);
  Tensor out = Tensor::scalar(1.0 - (s2 - static_cast<double>(B)) / denom);
  if (detail::track({&h})) {
    out.set_requires_grad(true);
    auto hn = h.node(), on = out.node();
    auto u_copy = std::make_shared<std::vector<double>>(std::move(u));
    auto s_copy = std::make_shared<std::vector<double>>(std::move(s));
    auto norm_copy = std::make_shared<std::vector<double>>(std::move(norms));
    Tape::get().record([hn, on, u_copy, s_copy, norm_copy, B, F, denom] {
      if (on->grad.empty() || !hn->requires_grad) return;
      const double g = on->grad[0];
      double* dh = detail::grad_buf(hn).data();
      const std::vector<double>& uu = *u_copy;
      const std::vector<double>& ss = *s_copy;
      const std::vector<double>& nr = *norm_copy;
      // d out / d u_i = -2 s / denom, then through row normalization
      for (std::size_t i = 0; i < B; ++i) {
        double cdot = 0.0;
        for (std::size_t f = 0; f < F; ++f)
          cdot += (-2.0 * ss[f] / denom) * uu[i * F + f];
        for (std::size_t f = 0; f < F; ++f) {
          const double c = -2.0 * ss[f] / denom;
          dh[i * F + f] += g * (c - cdot * uu[i * F + f]) / nr[i];
        }
      }
    });
  }
  return out;
}

// ------------------------------------------------------------- utilities --

inline std::size_t argmax_row(const double* row, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < k; ++i)
    if (row[i] > row[best]) best = i;  // ties keep the lowest index
  return best;
}

inline std::vector<double> softmax_row(const std::vector<double>& logits) {
  std::vector<double> p(logits.size());
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

}  // namespace tie
