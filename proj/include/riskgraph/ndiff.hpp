#pragma once

// Minimal reverse-mode autodiff over dense tensors of up to three axes.
//
// Design notes that matter for reproducibility:
//  * Every kernel is handrolled with a fixed accumulation order (ikj loops,
//    single threaded). A row of any matmul/layernorm/softmax result depends
//    only on that row's inputs, never on which other rows share the batch, so
//    forward outputs are bit-identical across batch compositions.
//  * No fast-math, no BLAS: identical bytes on any IEEE-754 platform.
//  * double instantiation exists purely so tests can finite-difference-check
//    the same code paths at 64-bit precision.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "riskgraph/rng.hpp"

namespace riskgraph::nd {

// Process-wide count of backward() invocations. Forward-only contracts
// (attention-based explanation) are tested by asserting this stays flat.
inline std::atomic<int64_t>& backward_counter() {
  static std::atomic<int64_t> n{0};
  return n;
}
inline int64_t backward_invocations() { return backward_counter().load(); }

struct Shape {
  int ndim = 0;
  std::array<int64_t, 3> d = {1, 1, 1};

  int64_t numel() const { return d[0] * d[1] * d[2]; }
  bool operator==(const Shape& o) const { return ndim == o.ndim && d == o.d; }
  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < ndim; ++i) s += (i ? "," : "") + std::to_string(d[size_t(i)]);
    return s + "]";
  }
};

inline Shape s1(int64_t n) { return Shape{1, {n, 1, 1}}; }
inline Shape s2(int64_t m, int64_t n) { return Shape{2, {m, n, 1}}; }
inline Shape s3(int64_t b, int64_t m, int64_t n) { return Shape{3, {b, m, n}}; }

template <class T>
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;

  void zero_grad() { grad.assign(value.size(), T(0)); }
};

// Named parameters in deterministic (lexicographic) order.
template <class T>
using ParamStore = std::map<std::string, Parameter<T>>;

template <class T>
Parameter<T>& add_param(ParamStore<T>& store, const std::string& name, Shape shape) {
  auto [it, fresh] = store.emplace(name, Parameter<T>{});
  if (!fresh) throw std::invalid_argument("duplicate parameter: " + name);
  it->second.name = name;
  it->second.shape = shape;
  it->second.value.assign(size_t(shape.numel()), T(0));
  it->second.grad.assign(size_t(shape.numel()), T(0));
  return it->second;
}

// Xavier-uniform init seeded per parameter name, so values do not depend on
// creation order.
template <class T>
void init_xavier(Parameter<T>& p, uint64_t seed, int64_t fan_in, int64_t fan_out) {
  Rng rng = sub_rng(seed, "init/" + p.name);
  double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  for (T& v : p.value) v = T(rng.uniform(-limit, limit));
}

template <class T>
void init_normal(Parameter<T>& p, uint64_t seed, double stddev) {
  Rng rng = sub_rng(seed, "init/" + p.name);
  for (T& v : p.value) v = T(rng.normal(0.0, stddev));
}

template <class T>
void init_const(Parameter<T>& p, T c) {
  for (T& v : p.value) v = c;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

template <class T>
class Tape {
 public:
  struct Node {
    Shape shape;
    std::vector<T> val;
    std::vector<T> grad;  // sized lazily during backward
    bool requires_grad = false;
    std::function<void(Tape&, int)> backward;  // nullptr for constants
  };

  int constant(Shape shape, std::vector<T> val) {
    check_size(shape, val.size());
    nodes_.push_back(Node{shape, std::move(val), {}, false, nullptr});
    return int(nodes_.size()) - 1;
  }

  // Registers a parameter leaf; its gradient is accumulated back into the
  // parameter by backward().
  int leaf(Parameter<T>& p) {
    Node n{p.shape, p.value, {}, true, nullptr};
    Parameter<T>* bound = &p;
    n.backward = [bound](Tape& t, int id) {
      const std::vector<T>& g = t.nodes_[size_t(id)].grad;
      for (size_t i = 0; i < g.size(); ++i) bound->grad[i] += g[i];
    };
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  int emit(Shape shape, std::vector<T> val, bool requires_grad,
           std::function<void(Tape&, int)> backward) {
    check_size(shape, val.size());
    nodes_.push_back(Node{shape, std::move(val), {}, requires_grad,
                          requires_grad ? std::move(backward) : nullptr});
    return int(nodes_.size()) - 1;
  }

  const Node& at(int id) const {
    if (id < 0 || id >= int(nodes_.size()))
      throw std::invalid_argument("tape id out of range: " + std::to_string(id));
    return nodes_[size_t(id)];
  }
  Node& at(int id) { return const_cast<Node&>(std::as_const(*this).at(id)); }

  const std::vector<T>& val(int id) const { return at(id).val; }
  const Shape& shape(int id) const { return at(id).shape; }

  // Gradient of the last backward() target w.r.t. node `id` (zeros if the
  // node did not participate).
  std::vector<T> grad(int id) const {
    const Node& n = at(id);
    if (n.grad.empty()) return std::vector<T>(size_t(n.shape.numel()), T(0));
    return n.grad;
  }

  std::vector<T>& grad_buf(int id) {
    Node& n = at(id);
    if (n.grad.empty()) n.grad.assign(size_t(n.shape.numel()), T(0));
    return n.grad;
  }

  // Reverse pass from a scalar node. Node ids are already topologically
  // ordered (parents precede children), so a reverse id sweep suffices.
  void backward(int id) {
    const Node& target = at(id);
    if (target.shape.numel() != 1)
      throw std::invalid_argument("backward: target must be scalar, got " + target.shape.str());
    if (!target.requires_grad)
      throw std::invalid_argument("backward: target does not depend on any parameter");
    backward_counter().fetch_add(1);
    grad_buf(id)[0] = T(1);
    for (int i = id; i >= 0; --i) {
      Node& n = nodes_[size_t(i)];
      if (n.backward && !n.grad.empty()) n.backward(*this, i);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  static void check_size(const Shape& s, size_t n) {
    if (int64_t(n) != s.numel())
      throw std::invalid_argument("value size " + std::to_string(n) + " != shape " + s.str());
  }
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Kernels (fixed accumulation order)
// ---------------------------------------------------------------------------

template <class T>
void matmul_kernel(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) ci[j] = T(0);
    const T* ai = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      T av = ai[kk];
      const T* bk = b + kk * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

// c[m,k] += a[m,n] * b[k,n]^T  (i.e. a times b-transposed), used in backward.
template <class T>
void matmul_nt_acc_kernel(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t k) {
  for (int64_t i = 0; i < m; ++i) {
    const T* ai = a + i * n;
    T* ci = c + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const T* bk = b + kk * n;
      T acc = T(0);
      for (int64_t j = 0; j < n; ++j) acc += ai[j] * bk[j];
      ci[kk] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n], used in backward.
template <class T>
void matmul_tn_acc_kernel(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    const T* bi = b + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      T av = ai[kk];
      T* ck = c + kk * n;
      for (int64_t j = 0; j < n; ++j) ck[j] += av * bi[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

template <class T>
int add(Tape<T>& t, int a, int b) {
  const auto& na = t.at(a);
  const auto& nb = t.at(b);
  if (!(na.shape == nb.shape))
    throw std::invalid_argument("add: shape mismatch " + na.shape.str() + " vs " + nb.shape.str());
  std::vector<T> v(na.val.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = na.val[i] + nb.val[i];
  bool rg = na.requires_grad || nb.requires_grad;
  return t.emit(na.shape, std::move(v), rg, [a, b](Tape<T>& tp, int id) {
    const std::vector<T>& g = tp.at(id).grad;
    if (tp.at(a).requires_grad) {
      auto& ga = tp.grad_buf(a);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.at(b).requires_grad) {
      auto& gb = tp.grad_buf(b);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

template <class T>
int scale(Tape<T>& t, int a, double c) {
  const auto& na = t.at(a);
  std::vector<T> v(na.val.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = T(na.val[i] * T(c));
  return t.emit(na.shape, std::move(v), na.requires_grad, [a, c](Tape<T>& tp, int id) {
    const std::vector<T>& g = tp.at(id).grad;
    if (!tp.at(a).requires_grad) return;
    auto& ga = tp.grad_buf(a);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * T(c);
  });
}

// Adds a length-n bias row vector to every row of a 2-D matrix.
template <class T>
int add_bias(Tape<T>& t, int a, int bias) {
  const auto& na = t.at(a);
  const auto& nb = t.at(bias);
  if (na.shape.ndim != 2 || nb.shape.ndim != 1 || nb.shape.d[0] != na.shape.d[1])
    throw std::invalid_argument("add_bias: want [m,n] + [n]");
  int64_t m = na.shape.d[0], n = na.shape.d[1];
  std::vector<T> v(na.val.size());
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) v[size_t(i * n + j)] = na.val[size_t(i * n + j)] + nb.val[size_t(j)];
  bool rg = na.requires_grad || nb.requires_grad;
  return t.emit(na.shape, std::move(v), rg, [a, bias, m, n](Tape<T>& tp, int id) {
    const std::vector<T>& g = tp.at(id).grad;
    if (tp.at(a).requires_grad) {
      auto& ga = tp.grad_buf(a);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.at(bias).requires_grad) {
      auto& gb = tp.grad_buf(bias);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) gb[size_t(j)] += g[size_t(i * n + j)];
    }
  });
}

template <class T>
int matmul(Tape<T>& t, int a, int b) {
  const auto& na = t.at(a);
  const auto& nb = t.at(b);
  if (na.shape.ndim != 2 || nb.shape.ndim != 2 || na.shape.d[1] != nb.shape.d[0])
    throw std::invalid_argument("matmul: bad shapes " + na.shape.str() + " x " + nb.shape.str());
  int64_t m = na.shape.d[0], k = na.shape.d[1], n = nb.shape.d[1];
  std::vector<T> v(size_t(m * n));
  matmul_kernel(na.val.data(), nb.val.data(), v.data(), m, k, n);
  bool rg = na.requires_grad || nb.requires_grad;
  return t.emit(s2(m, n), std::move(v), rg, [a, b, m, k, n](Tape<T>& tp, int id) {
    const std::vector<T>& g = tp.at(id).grad;
    if (tp.at(a).requires_grad)
      matmul_nt_acc_kernel(g.data(), tp.at(b).val.data(), tp.grad_buf(a).data(), m, n, k);
    if (tp.at(b).requires_grad)
      matmul_tn_acc_kernel(tp.at(a).val.data(), g.data(), tp.grad_buf(b).data(), m, k, n);
  });
}

// Batched matmul over the leading axis: [B,m,k] x [B,k,n] -> [B,m,n].
template <class T>
int bmm(Tape<T>& t, int a, int b) {
  const auto& na = t.at(a);
  const auto& nb = t.at(b);
  if (na.shape.ndim != 3 || nb.shape.ndim != 3 || na.shape.d[0] != nb.shape.d[0] ||
      na.shape.d[2] != nb.shape.d[1])
    throw std::invalid_argument("bmm: bad shapes " + na.shape.str() + " x " + nb.shape.str());
  int64_t B = na.shape.d[0], m = na.shape.d[1], k = na.shape.d[2], n = nb.shape.d[2];
  std::vector<T> v(size_t(B * m * n));
  for (int64_t bb = 0; bb < B; ++bb)
    matmul_kernel(na.val.data() + bb * m * k, nb.val.data() + bb * k * n, v.data() + bb * m * n,
                  m, k, n);
  bool rg = na.requires_grad || nb.requires_grad;
  return t.emit(s3(B, m, n), std::move(v), rg, [a, b, B, m, k, n](Tape<T>& tp, int id) {
    const std::vector<T>& g = tp.at(id).grad;
    if (tp.at(a).requires_grad) {
      auto& ga = tp.grad_buf(a);
      for (int64_t bb = 0; bb < B; ++bb)
        matmul_nt_acc_kernel(g.data() + bb * m * n, tp.at(b).val.data() + bb * k * n,
                             ga.data() + bb * m * k, m, n, k);
    }
    if (tp.at(b).requires_grad) {
      auto& gb = tp.grad_buf(b);
      for (int64_t bb = 0; bb < B; ++bb)
        matmul_tn_acc_kernel(tp.at(a).val.data() + bb * m * k, g.data() + bb * m * n,
                             gb.data() + bb * k * n, m, k, n);
    }
  });
}

template <class T>
int relu(Tape<T>& t, int a) {
  const auto& na = t.at(a);
  std::vector<T> v(na.val.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = na.val[i] > T(0) ? na.val[i] : T(0);
  return t.emit(na.shape, std::move(v), na.requires_grad, [a](Tape<T>& tp, int id) {
    if (!tp.at(a).requires_grad) return;
    const std::vector<T>& g = tp.at(id).grad;
    const std::vector<T>& x = tp.at(a).val;
    auto& ga = tp.grad_buf(a);
    for (size_t i = 0; i < g.size(); ++i)
      if (x[i] > T(0)) ga[i] += g[i];
  });
}

// Inverted dropout; draws one mask per call from the supplied stream.
template <class T>
int dropout(Tape<T>& t, int a, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
  const auto& na = t.at(a);
  std::vector<T> v(na.val.size());
  auto mask = std::make_shared<std::vector<uint8_t>>(na.val.size());
  T keep_scale = T(1.0 / (1.0 - p));
  for (size_t i = 0; i < v.size(); ++i) {
    bool keep = rng.uniform() >= p;
    (*mask)[i] = keep;
    v[i] = keep ? na.val[i] * keep_scale : T(0);
  }
  return t.emit(na.shape, std::move(v), na.requires_grad,
                [a, mask, keep_scale](Tape<T>& tp, int id) {
                  if (!tp.at(a).requires_grad) return;
                  const std::vector<T>& g = tp.at(id).grad;
                  auto& ga = tp.grad_buf(a);
                  for (size_t i = 0; i < g.size(); ++i)
                    if ((*mask)[i]) ga[i] += g[i] * keep_scale;
                });
}

template <class T>
int reshape(Tape<T>& t, int a, Shape shape) {
  const auto& na = t.at(a);
  if (shape.numel() != na.shape.numel())
    throw std::invalid_argument("reshape: numel mismatch " + na.shape.str() + " -> " + shape.str());
  std::vector<T> v = na.val;
  return t.emit(shape, std::move(v), na.requires_grad, [a](Tape<T>& tp, int id) {
    if (!tp.at(a).requires_grad) return;
    const std::vector<T>& g = tp.at(id).grad;
    auto& ga = tp.grad_buf(a);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <class T>
int slice_cols(Tape<T>& t, int a, int64_t c0, int64_t c1) {
  const auto& na = t.at(a);
  if (na.shape.ndim != 2 || c0 < 0 || c1 > na.shape.d[1] || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range");
  int64_t m = na.shape.d[0], n = na.shape.d[1], w = c1 - c0;
  std::vector<T> v(size_t(m * w));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < w; ++j) v[size_t(i * w + j)] = na.val[size_t(i * n + c0 + j)];
  return t.emit(s2(m, w), std::move(v), na.requires_grad, [a, c0, m, n, w](Tape<T>& tp, int id) {
    if (!tp.at(a).requires_grad) return;
    const std::vector<T>& g = tp.at(id).grad;
    auto& ga = tp.grad_buf(a);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j) ga[size_t(i * n + c0 + j)] += g[size_t(i * w + j)];
  });
}

template <class T>
int concat_cols(Tape<T>& t, const std::vector<int>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  int64_t m = t.at(parts[0]).shape.d[0], total = 0;
  bool rg = false;
  for (int p : parts) {
    const auto& np = t.at(p);
    if (np.shape.ndim != 2 || np.shape.d[0] != m)
      throw std::invalid_argument("concat_cols: row mismatch");
    total += np.shape.d[1];
    rg = rg || np.requires_grad;
  }
  std::vector<T> v(size_t(m * total));
  int64_t off = 0;
  for (int p : parts) {
    const auto& np = t.at(p);
    int64_t w = np.shape.d[1];
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j) v[size_t(i * total + off + j)] = np.val[size_t(i * w + j)];
    off += w;
  }
  auto parts_copy = parts;
  return t.emit(s2(m, total), std::move(v), rg, [parts_copy, m, total](Tape<T>& tp, int id) {
    const std::vector<T>& g = tp.at(id).grad;
    int64_t off = 0;
    for (int p : parts_copy) {
      int64_t w = tp.at(p).shape.d[1];
      if (tp.at(p).requires_grad) {
        auto& gp = tp.grad_buf(p);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < w; ++j) gp[size_t(i * w + j)] += g[size_t(i * total + off + j)];
      }
      off += w;
    }
  });
}

template <class T>
int concat_rows(Tape<T>& t, const std::vector<int>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  int64_t n = t.at(parts[0]).shape.d[1], total = 0;
  bool rg = false;
  for (int p : parts) {
    const auto& np = t.at(p);
    if (np.shape.ndim != 2 || np.shape.d[1] != n)
      throw std::invalid_argument("concat_rows: col mismatch");
    total += np.shape.d[0];
    rg = rg || np.requires_grad;
  }
  std::vector<T> v;
  v.reserve(size_t(total * n));
  for (int p : parts) {
    const auto& pv = t.at(p).val;
    v.insert(v.end(), pv.begin(), pv.end());
  }
  auto parts_copy = parts;
  return t.emit(s2(total, n), std::move(v), rg, [parts_copy](Tape<T>& tp, int id) {
    const std::vector<T>& g = tp.at(id).grad;
    size_t off = 0;
    for (int p : parts_copy) {
      size_t cnt = tp.at(p).val.size();
      if (tp.at(p).requires_grad) {
        auto& gp = tp.grad_buf(p);
        for (size_t i = 0; i < cnt; ++i) gp[i] += g[off + i];
      }
      off += cnt;
    }
  });
}

// Row gather with -1 producing a zero row; backward scatter-adds.
template <class T>
int gather_rows(Tape<T>& t, int a, const std::vector<int64_t>& index) {
  const auto& na = t.at(a);
  if (na.shape.ndim != 2) throw std::invalid_argument("gather_rows: want 2-D source");
  int64_t n = na.shape.d[1], rows = na.shape.d[0];
  std::vector<T> v(index.size() * size_t(n), T(0));
  for (size_t i = 0; i < index.size(); ++i) {
    int64_t r = index[i];
    if (r < 0) continue;
    if (r >= rows) throw std::invalid_argument("gather_rows: index out of range");
    for (int64_t j = 0; j < n; ++j) v[i * size_t(n) + size_t(j)] = na.val[size_t(r * n + j)];
  }
  auto idx = std::make_shared<std::vector<int64_t>>(index);
  return t.emit(s2(int64_t(index.size()), n), std::move(v), na.requires_grad,
                [a, idx, n](Tape<T>& tp, int id) {
                  if (!tp.at(a).requires_grad) return;
                  const std::vector<T>& g = tp.at(id).grad;
                  auto& ga = tp.grad_buf(a);
                  for (size_t i = 0; i < idx->size(); ++i) {
                    int64_t r = (*idx)[i];
                    if (r < 0) continue;
                    for (int64_t j = 0; j < n; ++j)
                      ga[size_t(r * n + j)] += g[i * size_t(n) + size_t(j)];
                  }
                });
}

// out[i] = mean over r in segments[i] of a[r]; an empty segment yields a zero
// row (no in-neighbors -> no message).
template <class T>
int segment_mean_rows(Tape<T>& t, int a, const std::vector<std::vector<int64_t>>& segments) {
  const auto& na = t.at(a);
  if (na.shape.ndim != 2) throw std::invalid_argument("segment_mean_rows: want 2-D source");
  int64_t n = na.shape.d[1], rows = na.shape.d[0];
  int64_t m = int64_t(segments.size());
  std::vector<T> v(size_t(m * n), T(0));
  for (int64_t i = 0; i < m; ++i) {
    const auto& seg = segments[size_t(i)];
    if (seg.empty()) continue;
    for (int64_t r : seg) {
      if (r < 0 || r >= rows) throw std::invalid_argument("segment_mean_rows: index out of range");
      for (int64_t j = 0; j < n; ++j) v[size_t(i * n + j)] += na.val[size_t(r * n + j)];
    }
    T inv = T(1) / T(seg.size());
    for (int64_t j = 0; j < n; ++j) v[size_t(i * n + j)] *= inv;
  }
  auto segs = std::make_shared<std::vector<std::vector<int64_t>>>(segments);
  return t.emit(s2(m, n), std::move(v), na.requires_grad, [a, segs, n](Tape<T>& tp, int id) {
    if (!tp.at(a).requires_grad) return;
    const std::vector<T>& g = tp.at(id).grad;
    auto& ga = tp.grad_buf(a);
    for (size_t i = 0; i < segs->size(); ++i) {
      const auto& seg = (*segs)[i];
      if (seg.empty()) continue;
      T inv = T(1) / T(seg.size());
      for (int64_t r : seg)
        for (int64_t j = 0; j < n; ++j)
          ga[size_t(r * n + j)] += g[i * size_t(n) + size_t(j)] * inv;
    }
  });
}

// Row-wise layer normalization with affine terms: gamma,beta of length n.
template <class T>
int layer_norm(Tape<T>& t, int a, int gamma, int beta, double eps = 1e-5) {
  const auto& na = t.at(a);
  if (na.shape.ndim != 2) throw std::invalid_argument("layer_norm: want 2-D input");
  int64_t m = na.shape.d[0], n = na.shape.d[1];
  const auto& ng = t.at(gamma);
  const auto& nb = t.at(beta);
  if (ng.shape.ndim != 1 || ng.shape.d[0] != n || nb.shape.ndim != 1 || nb.shape.d[0] != n)
    throw std::invalid_argument("layer_norm: gamma/beta must be [n]");
  std::vector<T> v(na.val.size());
  auto norm = std::make_shared<std::vector<T>>(na.val.size());  // (x-mu)/s, reused in backward
  auto inv_s = std::make_shared<std::vector<T>>(size_t(m));
  for (int64_t i = 0; i < m; ++i) {
    const T* x = na.val.data() + i * n;
    T mu = T(0);
    for (int64_t j = 0; j < n; ++j) mu += x[j];
    mu /= T(n);
    T var = T(0);
    for (int64_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= T(n);
    T is = T(1) / std::sqrt(var + T(eps));
    (*inv_s)[size_t(i)] = is;
    for (int64_t j = 0; j < n; ++j) {
      T y = (x[j] - mu) * is;
      (*norm)[size_t(i * n + j)] = y;
      v[size_t(i * n + j)] = ng.val[size_t(j)] * y + nb.val[size_t(j)];
    }
  }
  bool rg = na.requires_grad || ng.requires_grad || nb.requires_grad;
  return t.emit(na.shape, std::move(v), rg, [a, gamma, beta, norm, inv_s, m, n](Tape<T>& tp, int id) {
    const std::vector<T>& g = tp.at(id).grad;
    const std::vector<T>& gam = tp.at(gamma).val;
    if (tp.at(gamma).requires_grad) {
      auto& gg = tp.grad_buf(gamma);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
          gg[size_t(j)] += g[size_t(i * n + j)] * (*norm)[size_t(i * n + j)];
    }
    if (tp.at(beta).requires_grad) {
      auto& gb = tp.grad_buf(beta);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) gb[size_t(j)] += g[size_t(i * n + j)];
    }
    if (tp.at(a).requires_grad) {
      auto& ga = tp.grad_buf(a);
      for (int64_t i = 0; i < m; ++i) {
        // dx = (h - mean(h) - y*mean(h*y)) * inv_s, where h = gamma*dy
        T mean_h = T(0), mean_hy = T(0);
        for (int64_t j = 0; j < n; ++j) {
          T h = gam[size_t(j)] * g[size_t(i * n + j)];
          mean_h += h;
          mean_hy += h * (*norm)[size_t(i * n + j)];
        }
        mean_h /= T(n);
        mean_hy /= T(n);
        T is = (*inv_s)[size_t(i)];
        for (int64_t j = 0; j < n; ++j) {
          T h = gam[size_t(j)] * g[size_t(i * n + j)];
          ga[size_t(i * n + j)] +=
              (h - mean_h - (*norm)[size_t(i * n + j)] * mean_hy) * is;
        }
      }
    }
  });
}

// Row-wise softmax with a 0/1 keep-mask. Masked entries get exactly zero;
// a fully masked row yields an all-zero row (callers flag those rows).
template <class T>
int softmax_masked(Tape<T>& t, int a, const std::vector<uint8_t>& mask) {
  const auto& na = t.at(a);
  if (na.shape.ndim != 2) throw std::invalid_argument("softmax_masked: want 2-D input");
  if (mask.size() != na.val.size())
    throw std::invalid_argument("softmax_masked: mask size mismatch");
  int64_t m = na.shape.d[0], n = na.shape.d[1];
  std::vector<T> v(na.val.size(), T(0));
  for (int64_t i = 0; i < m; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (int64_t j = 0; j < n; ++j)
      if (mask[size_t(i * n + j)] && na.val[size_t(i * n + j)] > mx) mx = na.val[size_t(i * n + j)];
    if (mx == -std::numeric_limits<T>::infinity()) continue;  // fully masked row
    T denom = T(0);
    for (int64_t j = 0; j < n; ++j)
      if (mask[size_t(i * n + j)]) denom += std::exp(na.val[size_t(i * n + j)] - mx);
    for (int64_t j = 0; j < n; ++j)
      if (mask[size_t(i * n + j)]) v[size_t(i * n + j)] = std::exp(na.val[size_t(i * n + j)] - mx) / denom;
  }
  auto out = std::make_shared<std::vector<T>>(v);
  return t.emit(na.shape, std::move(v), na.requires_grad, [a, out, m, n](Tape<T>& tp, int id) {
    if (!tp.at(a).requires_grad) return;
    const std::vector<T>& g = tp.at(id).grad;
    auto& ga = tp.grad_buf(a);
    for (int64_t i = 0; i < m; ++i) {
      T dot = T(0);
      for (int64_t j = 0; j < n; ++j) dot += g[size_t(i * n + j)] * (*out)[size_t(i * n + j)];
      for (int64_t j = 0; j < n; ++j) {
        T y = (*out)[size_t(i * n + j)];
        ga[size_t(i * n + j)] += y * (g[size_t(i * n + j)] - dot);
      }
    }
  });
}

// Scalar pick of a single entry (used to target one logit).
template <class T>
int select_entry(Tape<T>& t, int a, int64_t row, int64_t col) {
  const auto& na = t.at(a);
  if (na.shape.ndim != 2 || row < 0 || row >= na.shape.d[0] || col < 0 || col >= na.shape.d[1])
    throw std::invalid_argument("select_entry: out of range");
  int64_t n = na.shape.d[1];
  std::vector<T> v = {na.val[size_t(row * n + col)]};
  return t.emit(s1(1), std::move(v), na.requires_grad, [a, row, col, n](Tape<T>& tp, int id) {
    if (!tp.at(a).requires_grad) return;
    tp.grad_buf(a)[size_t(row * n + col)] += tp.at(id).grad[0];
  });
}

template <class T>
int sum_all(Tape<T>& t, int a) {
  const auto& na = t.at(a);
  T s = T(0);
  for (T x : na.val) s += x;
  return t.emit(s1(1), {s}, na.requires_grad, [a](Tape<T>& tp, int id) {
    if (!tp.at(a).requires_grad) return;
    T g = tp.at(id).grad[0];
    auto& ga = tp.grad_buf(a);
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

// Class-weighted cross entropy over logits [m,c]:
//   L = sum_i w[y_i] * (logsumexp(logit_i) - logit_i[y_i]) / sum_i w[y_i]
template <class T>
int weighted_cross_entropy(Tape<T>& t, int logits, const std::vector<int>& labels,
                           const std::vector<T>& class_weights) {
  const auto& nl = t.at(logits);
  if (nl.shape.ndim != 2) throw std::invalid_argument("weighted_cross_entropy: want 2-D logits");
  int64_t m = nl.shape.d[0], c = nl.shape.d[1];
  if (int64_t(labels.size()) != m)
    throw std::invalid_argument("weighted_cross_entropy: label count mismatch");
  if (int64_t(class_weights.size()) != c)
    throw std::invalid_argument("weighted_cross_entropy: weight count mismatch");
  if (m == 0) throw std::invalid_argument("weighted_cross_entropy: empty batch");
  T wsum = T(0), loss = T(0);
  auto probs = std::make_shared<std::vector<T>>(size_t(m * c));
  for (int64_t i = 0; i < m; ++i) {
    int y = labels[size_t(i)];
    if (y < 0 || y >= c) throw std::invalid_argument("weighted_cross_entropy: label out of range");
    const T* row = nl.val.data() + i * c;
    T mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T denom = T(0);
    for (int64_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    for (int64_t j = 0; j < c; ++j) (*probs)[size_t(i * c + j)] = std::exp(row[j] - mx) / denom;
    T w = class_weights[size_t(y)];
    wsum += w;
    loss += w * (std::log(denom) + mx - row[y]);
  }
  loss /= wsum;
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  auto weights_copy = std::make_shared<std::vector<T>>(class_weights);
  return t.emit(s1(1), {loss}, nl.requires_grad,
                [logits, probs, labels_copy, weights_copy, wsum, m, c](Tape<T>& tp, int id) {
                  if (!tp.at(logits).requires_grad) return;
                  T g = tp.at(id).grad[0];
                  auto& gl = tp.grad_buf(logits);
                  for (int64_t i = 0; i < m; ++i) {
                    int y = (*labels_copy)[size_t(i)];
                    T w = (*weights_copy)[size_t(y)];
                    for (int64_t j = 0; j < c; ++j) {
                      T p = (*probs)[size_t(i * c + j)];
                      T onehot = j == y ? T(1) : T(0);
                      gl[size_t(i * c + j)] += g * w * (p - onehot) / wsum;
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// Adam optimizer
// ---------------------------------------------------------------------------

template <class T>
struct AdamState {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::map<std::string, std::pair<std::vector<T>, std::vector<T>>> moments;

  void step(ParamStore<T>& params) {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, double(t));
    double bc2 = 1.0 - std::pow(beta2, double(t));
    for (auto& [name, p] : params) {
      for (T g : p.grad)
        if (!std::isfinite(double(g)))
          throw std::runtime_error("Adam: non-finite gradient in parameter " + name);
      auto& [m, v] = moments[name];
      if (m.empty()) {
        m.assign(p.value.size(), T(0));
        v.assign(p.value.size(), T(0));
      }
      for (size_t i = 0; i < p.value.size(); ++i) {
        double g = double(p.grad[i]);
        double mi = beta1 * double(m[i]) + (1.0 - beta1) * g;
        double vi = beta2 * double(v[i]) + (1.0 - beta2) * g * g;
        m[i] = T(mi);
        v[i] = T(vi);
        p.value[i] -= T(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
      }
    }
  }
};

template <class T>
void zero_grads(ParamStore<T>& params) {
  for (auto& [name, p] : params) p.zero_grad();
}

}  // namespace riskgraph::nd
