#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace geothinker {

using Shape = std::vector<int>;

inline long long numel(const Shape& s) {
  long long n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor extent must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + ")";
}

// Value container, f64 throughout. `grad` stays empty until a backward pass
// (or an explicit binding) fills it; `node` links back into the tape that
// produced the value, -1 for detached tensors.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  int node = -1;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != static_cast<long long>(data.size()))
      throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) {
    long long n = numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  long long size() const { return static_cast<long long>(data.size()); }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// exact erf formulation
inline double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476));
}

inline double gelu_derivative(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * 0.7071067811865476)) +
         x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// Reverse-mode tape. Nodes are appended in construction order, which is the
// topological order; backward() walks them once in reverse. Ops validate
// shapes eagerly so misuse fails at record time, not inside backward.
class Tape {
 public:
  int leaf(const Tensor& t) {
    Tensor copy;
    copy.shape = t.shape;
    copy.data = t.data;
    return push(std::move(copy), {}, nullptr);
  }

  int leaf(Shape shape, std::vector<double> data) {
    return push(Tensor(std::move(shape), std::move(data)), {}, nullptr);
  }

  int scalar_leaf(double v) { return leaf({1}, {v}); }

  const Tensor& at(int id) const { return nodes_[check(id)].t; }
  Tensor& at(int id) { return nodes_[check(id)].t; }
  const std::vector<double>& val(int id) const { return at(id).data; }
  const std::vector<double>& grad(int id) const {
    const Tensor& t = at(id);
    if (t.grad.empty()) throw std::logic_error("gradient not populated; run backward first");
    return t.grad;
  }

  size_t size() const { return nodes_.size(); }
  void reset() { nodes_.clear(); macs_ = 0; }

  // forward multiply-accumulate count over all matmuls recorded so far
  long long mac_count() const { return macs_; }

  // ---- elementwise ----

  int add(int a, int b) { return binary(a, b, BinKind::add); }
  int sub(int a, int b) { return binary(a, b, BinKind::sub); }
  int mul(int a, int b) { return binary(a, b, BinKind::mul); }

  int scale(int a, double k) {
    const Tensor& x = at(a);
    Tensor out = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] * k;
    return push(std::move(out), {a}, [a, k](Tape& tp, int self) {
      const std::vector<double>& go = tp.node(self).t.grad;
      std::vector<double>& ga = tp.node(a).t.grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * k;
    });
  }

  int sigmoid(int a) {
    const Tensor& x = at(a);
    Tensor out = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = stable_sigmoid(x.data[i]);
    return push(std::move(out), {a}, [a](Tape& tp, int self) {
      const Tensor& o = tp.node(self).t;
      std::vector<double>& ga = tp.node(a).t.grad;
      for (size_t i = 0; i < o.data.size(); ++i) {
        double s = o.data[i];
#ifdef GEOTHINKER_CORRUPT_BACKWARD
        // negative-control build: wrong derivative on purpose
        ga[i] += o.grad[i] * s * s;
#else
        ga[i] += o.grad[i] * s * (1.0 - s);
#endif
      }
    });
  }

  int tanh(int a) {
    const Tensor& x = at(a);
    Tensor out = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = std::tanh(x.data[i]);
    return push(std::move(out), {a}, [a](Tape& tp, int self) {
      const Tensor& o = tp.node(self).t;
      std::vector<double>& ga = tp.node(a).t.grad;
      for (size_t i = 0; i < o.data.size(); ++i)
        ga[i] += o.grad[i] * (1.0 - o.data[i] * o.data[i]);
    });
  }

  int gelu(int a) {
    const Tensor& x = at(a);
    Tensor out = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = gelu_value(x.data[i]);
    std::vector<double> saved = x.data;
    return push(std::move(out), {a}, [a, saved](Tape& tp, int self) {
      const std::vector<double>& go = tp.node(self).t.grad;
      std::vector<double>& ga = tp.node(a).t.grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * gelu_derivative(saved[i]);
    });
  }

  // ln(x + eps); requires every entry > -eps
  int log_shifted(int a, double eps) {
    const Tensor& x = at(a);
    Tensor out = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) {
      if (!(x.data[i] > -eps))
        throw std::domain_error("log_shifted: input " + std::to_string(x.data[i]) +
                                " not greater than -eps = " + std::to_string(-eps));
      out.data[i] = std::log(x.data[i] + eps);
    }
    std::vector<double> saved = x.data;
    return push(std::move(out), {a}, [a, saved, eps](Tape& tp, int self) {
      const std::vector<double>& go = tp.node(self).t.grad;
      std::vector<double>& ga = tp.node(a).t.grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / (saved[i] + eps);
    });
  }

  // ---- structural ----

  int reshape(int a, Shape s) {
    const Tensor& x = at(a);
    if (numel(s) != x.size())
      throw std::invalid_argument("reshape: element count mismatch " + shape_str(x.shape) +
                                  " -> " + shape_str(s));
    Tensor out(std::move(s), x.data);
    return push(std::move(out), {a}, [a](Tape& tp, int self) {
      const std::vector<double>& go = tp.node(self).t.grad;
      std::vector<double>& ga = tp.node(a).t.grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
  }

  int transpose_last2(int a) {
    const Tensor& x = at(a);
    if (x.shape.size() < 2) throw std::invalid_argument("transpose_last2: rank must be >= 2");
    int r = x.shape[x.shape.size() - 2];
    int cdim = x.shape[x.shape.size() - 1];
    Shape os = x.shape;
    os[os.size() - 2] = cdim;
    os[os.size() - 1] = r;
    long long batch = x.size() / (static_cast<long long>(r) * cdim);
    Tensor out = Tensor::zeros(os);
    for (long long b = 0; b < batch; ++b) {
      const double* src = x.data.data() + b * r * cdim;
      double* dst = out.data.data() + b * r * cdim;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < cdim; ++j) dst[j * r + i] = src[i * cdim + j];
    }
    return push(std::move(out), {a}, [a, r, cdim, batch](Tape& tp, int self) {
      const std::vector<double>& go = tp.node(self).t.grad;
      std::vector<double>& ga = tp.node(a).t.grad;
      for (long long b = 0; b < batch; ++b) {
        const double* src = go.data() + b * r * cdim;
        double* dst = ga.data() + b * r * cdim;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < cdim; ++j) dst[i * cdim + j] += src[j * r + i];
      }
    });
  }

  // x[frame] along axis 0
  int slice_frame(int a, int frame) {
    const Tensor& x = at(a);
    if (x.shape.empty()) throw std::invalid_argument("slice_frame: rank must be >= 1");
    int n = x.shape[0];
    if (frame < 0 || frame >= n) throw std::invalid_argument("slice_frame: index out of range");
    Shape os(x.shape.begin() + 1, x.shape.end());
    if (os.empty()) os = {1};
    long long block = numel(os);
    Tensor out = Tensor::zeros(os);
    for (long long i = 0; i < block; ++i) out.data[i] = x.data[frame * block + i];
    return push(std::move(out), {a}, [a, frame, block](Tape& tp, int self) {
      const std::vector<double>& go = tp.node(self).t.grad;
      std::vector<double>& ga = tp.node(a).t.grad;
      for (long long i = 0; i < block; ++i) ga[frame * block + i] += go[i];
    });
  }

  // [k] + common shape from k same-shape parts
  int stack_frames(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("stack_frames: no parts");
    const Shape& s0 = at(parts[0]).shape;
    for (int p : parts)
      if (at(p).shape != s0)
        throw std::invalid_argument("stack_frames: parts must share a shape");
    long long block = numel(s0);
    Shape os;
    os.push_back(static_cast<int>(parts.size()));
    os.insert(os.end(), s0.begin(), s0.end());
    Tensor out = Tensor::zeros(os);
    for (size_t f = 0; f < parts.size(); ++f) {
      const std::vector<double>& src = at(parts[f]).data;
      for (long long i = 0; i < block; ++i) out.data[f * block + i] = src[i];
    }
    std::vector<int> ins = parts;
    return push(std::move(out), ins, [ins, block](Tape& tp, int self) {
      const std::vector<double>& go = tp.node(self).t.grad;
      for (size_t f = 0; f < ins.size(); ++f) {
        std::vector<double>& ga = tp.node(ins[f]).t.grad;
        for (long long i = 0; i < block; ++i) ga[i] += go[f * block + i];
      }
    });
  }

  // ---- contractions / reductions ----

  // a: (..., m, k) x b: (k, p) -> (..., m, p); leading dims of a broadcast
  // over the shared 2-d b
  int matmul(int a, int b) {
    const Tensor& x = at(a);
    const Tensor& y = at(b);
    if (x.shape.size() < 2 || y.shape.size() != 2)
      throw std::invalid_argument("matmul: need a rank >= 2 and b rank == 2, got " +
                                  shape_str(x.shape) + " x " + shape_str(y.shape));
    int m = x.shape[x.shape.size() - 2];
    int k = x.shape[x.shape.size() - 1];
    int k2 = y.shape[0];
    int p = y.shape[1];
    if (k != k2)
      throw std::invalid_argument("matmul: inner extents disagree, " + shape_str(x.shape) +
                                  " x " + shape_str(y.shape));
    long long batch = x.size() / (static_cast<long long>(m) * k);
    Shape os = x.shape;
    os[os.size() - 1] = p;
    Tensor out = Tensor::zeros(os);
    for (long long bi = 0; bi < batch; ++bi) {
      const double* A = x.data.data() + bi * m * k;
      double* C = out.data.data() + bi * m * p;
      for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
          double aik = A[i * k + kk];
          const double* Brow = y.data.data() + kk * p;
          double* Crow = C + i * p;
          for (int j = 0; j < p; ++j) Crow[j] += aik * Brow[j];
        }
    }
    macs_ += batch * m * k * p;
    return push(std::move(out), {a, b}, [a, b, m, k, p, batch](Tape& tp, int self) {
      const std::vector<double>& go = tp.node(self).t.grad;
      const std::vector<double>& Av = tp.node(a).t.data;
      const std::vector<double>& Bv = tp.node(b).t.data;
      std::vector<double>& ga = tp.node(a).t.grad;
      std::vector<double>& gb = tp.node(b).t.grad;
      for (long long bi = 0; bi < batch; ++bi) {
        const double* A = Av.data() + bi * m * k;
        const double* dC = go.data() + bi * m * p;
        double* dA = ga.data() + bi * m * k;
        // dA = dC * B^T
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < p; ++j) {
            double d = dC[i * p + j];
            const double* Brow = Bv.data() + 0;
            for (int kk = 0; kk < k; ++kk) dA[i * k + kk] += d * Brow[kk * p + j];
          }
        // dB += A^T * dC
        for (int kk = 0; kk < k; ++kk)
          for (int i = 0; i < m; ++i) {
            double av = A[i * k + kk];
            const double* dCrow = dC + i * p;
            double* gBrow = gb.data() + kk * p;
            for (int j = 0; j < p; ++j) gBrow[j] += av * dCrow[j];
          }
      }
    });
  }

  // softmax over the trailing axis, max-subtracted
  int softmax_lastdim(int a) {
    const Tensor& x = at(a);
    if (x.shape.empty()) throw std::invalid_argument("softmax_lastdim: rank must be >= 1");
    int k = x.shape.back();
    long long rows = x.size() / k;
    Tensor out = Tensor::zeros(x.shape);
    for (long long r = 0; r < rows; ++r) {
      const double* in = x.data.data() + r * k;
      double* o = out.data.data() + r * k;
      double mx = in[0];
      for (int i = 1; i < k; ++i) mx = std::max(mx, in[i]);
      double sum = 0.0;
      for (int i = 0; i < k; ++i) {
        o[i] = std::exp(in[i] - mx);
        sum += o[i];
      }
      for (int i = 0; i < k; ++i) o[i] /= sum;
    }
    return push(std::move(out), {a}, [a, k, rows](Tape& tp, int self) {
      const Tensor& o = tp.node(self).t;
      std::vector<double>& ga = tp.node(a).t.grad;
      for (long long r = 0; r < rows; ++r) {
        const double* s = o.data.data() + r * k;
        const double* dy = o.grad.data() + r * k;
        double dot = 0.0;
        for (int i = 0; i < k; ++i) dot += dy[i] * s[i];
        double* g = ga.data() + r * k;
        for (int i = 0; i < k; ++i) g[i] += s[i] * (dy[i] - dot);
      }
    });
  }

  // x: (..., k) plus v: (k) broadcast over every leading index
  int add_lastdim(int x_id, int v_id) {
    const Tensor& x = at(x_id);
    const Tensor& v = at(v_id);
    if (x.shape.empty() || v.shape.size() != 1 || v.shape[0] != x.shape.back())
      throw std::invalid_argument("add_lastdim: expected (..,k) + (k), got " +
                                  shape_str(x.shape) + " + " + shape_str(v.shape));
    int k = x.shape.back();
    long long rows = x.size() / k;
    Tensor out = Tensor::zeros(x.shape);
    for (long long r = 0; r < rows; ++r)
      for (int i = 0; i < k; ++i) out.data[r * k + i] = x.data[r * k + i] + v.data[i];
    return push(std::move(out), {x_id, v_id}, [x_id, v_id, k, rows](Tape& tp, int self) {
      const std::vector<double>& go = tp.node(self).t.grad;
      std::vector<double>& gx = tp.node(x_id).t.grad;
      std::vector<double>& gv = tp.node(v_id).t.grad;
      for (long long r = 0; r < rows; ++r)
        for (int i = 0; i < k; ++i) {
          gx[r * k + i] += go[r * k + i];
          gv[i] += go[r * k + i];
        }
    });
  }

  // affine map: matmul then bias broadcast, recorded as that composition
  int linear(int x, int w, int b) { return add_lastdim(matmul(x, w), b); }

  int sum(int a) {
    const Tensor& x = at(a);
    double s = 0.0;
    for (double v : x.data) s += v;
    long long count = x.size();
    return push(Tensor::scalar(s), {a}, [a, count](Tape& tp, int self) {
      double go = tp.node(self).t.grad[0];
      std::vector<double>& ga = tp.node(a).t.grad;
      for (long long i = 0; i < count; ++i) ga[i] += go;
    });
  }

  // ---- backward ----

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse creation
  // order. Every node gets a zeroed grad first, so parameters the loss never
  // touches report zero rather than stale or missing gradients.
  void backward(int loss) {
    check(loss);
    if (at(loss).size() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  shape_str(at(loss).shape));
    std::vector<char> reachable(nodes_.size(), 0);
    reachable[loss] = 1;
    for (int id = loss; id >= 0; --id) {
      if (!reachable[id]) continue;
      for (int in : nodes_[id].inputs) reachable[in] = 1;
    }
    for (Node& n : nodes_) {
      n.t.grad.assign(n.t.data.size(), 0.0);
      n.visited = false;
    }
    nodes_[loss].t.grad[0] = 1.0;
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!reachable[id] || !n.back) continue;
      if (n.visited) throw std::logic_error("backward: node visited twice");
      n.visited = true;
      n.back(*this, id);
    }
  }

 private:
  enum class BinKind { add, sub, mul };

  struct Node {
    Tensor t;
    std::vector<int> inputs;
    std::function<void(Tape&, int)> back;
    bool visited = false;
  };

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }

  int check(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
      throw std::invalid_argument("tape: bad node id " + std::to_string(id));
    return id;
  }

  int push(Tensor t, std::vector<int> inputs, std::function<void(Tape&, int)> back) {
    for (int in : inputs) check(in);
    int id = static_cast<int>(nodes_.size());
    t.node = id;
    nodes_.push_back(Node{std::move(t), std::move(inputs), std::move(back), false});
    return id;
  }

  // same shapes, or scalar broadcast from either side
  int binary(int a, int b, BinKind kind) {
    const Tensor& x = at(a);
    const Tensor& y = at(b);
    bool xs = x.size() == 1;
    bool ys = y.size() == 1;
    if (!xs && !ys && x.shape != y.shape)
      throw std::invalid_argument("elementwise: shape mismatch " + shape_str(x.shape) +
                                  " vs " + shape_str(y.shape));
    const Tensor& big = ys ? x : y;
    Tensor out = Tensor::zeros(xs && ys ? Shape{1} : big.shape);
    long long n = out.size();
    for (long long i = 0; i < n; ++i) {
      double xv = xs ? x.data[0] : x.data[i];
      double yv = ys ? y.data[0] : y.data[i];
      switch (kind) {
        case BinKind::add: out.data[i] = xv + yv; break;
        case BinKind::sub: out.data[i] = xv - yv; break;
        case BinKind::mul: out.data[i] = xv * yv; break;
      }
    }
    return push(std::move(out), {a, b}, [a, b, xs, ys, n, kind](Tape& tp, int self) {
      const std::vector<double>& go = tp.node(self).t.grad;
      const std::vector<double>& xv = tp.node(a).t.data;
      const std::vector<double>& yv = tp.node(b).t.data;
      std::vector<double>& gx = tp.node(a).t.grad;
      std::vector<double>& gy = tp.node(b).t.grad;
      for (long long i = 0; i < n; ++i) {
        double g = go[i];
        double dx, dy;
        switch (kind) {
          case BinKind::add: dx = g; dy = g; break;
          case BinKind::sub: dx = g; dy = -g; break;
          case BinKind::mul:
            dx = g * (ys ? yv[0] : yv[i]);
            dy = g * (xs ? xv[0] : xv[i]);
            break;
        }
        gx[xs ? 0 : i] += dx;
        gy[ys ? 0 : i] += dy;
      }
    });
  }

  std::vector<Node> nodes_;
  long long macs_ = 0;
};

// Persistent parameter bound to its tape id for the current step.
struct ParamBinding {
  Tensor* param = nullptr;
  int id = -1;
};

inline int bind_param(Tape& tape, Tensor& param, std::vector<ParamBinding>& binds) {
  int id = tape.leaf(param);
  param.node = id;
  binds.push_back({&param, id});
  return id;
}

// copy tape gradients back into the owning tensors
inline void fetch_grads(const Tape& tape, const std::vector<ParamBinding>& binds) {
  for (const ParamBinding& b : binds) b.param->grad = tape.grad(b.id);
}

// p <- p - lr * grad, then clear the grads
inline void sgd_step(const std::vector<Tensor*>& params, double lr) {
  for (Tensor* p : params) {
    if (p->grad.size() != p->data.size())
      throw std::logic_error("sgd_step: gradient not populated");
    for (size_t i = 0; i < p->data.size(); ++i) p->data[i] -= lr * p->grad[i];
    p->grad.clear();
  }
}

}  // namespace geothinker
