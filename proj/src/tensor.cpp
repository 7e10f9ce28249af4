#include "provmark/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace provmark {

namespace {

thread_local bool g_grad_enabled = true;

using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

int shape_numel(const std::vector<int>& s) {
  int n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw Error("ShapeMismatch", std::string(op) + ": " + shape_str(a.shape()) +
                                     " vs " + shape_str(b.shape()));
}

void require_ndim(const Tensor& a, int nd, const char* op) {
  if (a.ndim() != nd)
    throw Error("ShapeMismatch",
                std::string(op) + ": expected " + std::to_string(nd) +
                    "-d tensor, got " + shape_str(a.shape()));
}

using detail::Node;

Tensor make_op(std::vector<int> shape, ArrayX value, std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool rg = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) rg = rg || p.requires_grad();
  }
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(n);
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::wrap(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = ArrayX::Zero(shape_numel(shape));
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return wrap(n);
}

Tensor Tensor::constant(std::vector<int> shape, Scalar v) {
  auto n = std::make_shared<Node>();
  n->value = ArrayX::Constant(shape_numel(shape), v);
  n->shape = std::move(shape);
  return wrap(n);
}

Tensor Tensor::from_array(std::vector<int> shape, ArrayX data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int>(data.size()))
    throw Error("ShapeMismatch", "from_array: " + shape_str(shape) + " with " +
                                     std::to_string(data.size()) + " elements");
  auto n = std::make_shared<Node>();
  n->value = std::move(data);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return wrap(n);
}

const ArrayX& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->ensure_grad();
  node_->grad.setZero();
}

void Tensor::backward() const {
  if (!node_ || node_->value.size() != 1)
    throw Error("BadShape", "backward() requires a scalar root");
  if (!node_->requires_grad) return;

  // Iterative postorder DFS; reversed it yields a topological order with the
  // root first, so every consumer runs before its inputs.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [cur, idx] = stack.back();
    if (idx < cur->parents.size()) {
      Node* p = cur->parents[idx].get();
      ++idx;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(cur);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad.setConstant(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_op(a.shape(), a.value() + b.value(), {a, b}, [](Node& n) {
    for (int i = 0; i < 2; ++i) {
      auto& p = n.parents[static_cast<size_t>(i)];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      p->grad += n.grad;
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.shape(), a.value() - b.value(), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      pa->grad += n.grad;
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      pb->grad -= n.grad;
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return make_op(a.shape(), a.value() * b.value(), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      pa->grad += n.grad * pb->value;
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      pb->grad += n.grad * pa->value;
    }
  });
}

Tensor div_elem(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div_elem");
  return make_op(a.shape(), a.value() / b.value(), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      pa->grad += n.grad / pb->value;
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      pb->grad -= n.grad * n.value / pb->value;
    }
  });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, Scalar s) {
  return make_op(a.shape(), a.value() + s, {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad;
  });
}

Tensor mul_scalar(const Tensor& a, Scalar s) {
  return make_op(a.shape(), a.value() * s, {a}, [s](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad * s;
  });
}

Tensor relu(const Tensor& a) {
  return make_op(a.shape(), a.value().max(0.0), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad * (p->value > 0.0).cast<Scalar>();
  });
}

Tensor leaky_relu(const Tensor& a, Scalar slope) {
  ArrayX v = a.value().max(a.value() * slope);
  return make_op(a.shape(), std::move(v), {a}, [slope](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad +=
        n.grad * (p->value > 0.0).select(ArrayX::Constant(p->value.size(), 1.0),
                                         ArrayX::Constant(p->value.size(), slope));
  });
}

namespace {
inline ArrayX gauss_cdf(const ArrayX& x) {
  return x.unaryExpr([](Scalar v) {
    return 0.5 * (1.0 + std::erf(v * 0.7071067811865475244));
  });
}
}  // namespace

Tensor gelu(const Tensor& a) {
  ArrayX v = a.value() * gauss_cdf(a.value());
  return make_op(a.shape(), std::move(v), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    const Scalar inv_sqrt2pi = 0.3989422804014326779;
    ArrayX pdf = inv_sqrt2pi * (-0.5 * p->value.square()).exp();
    p->grad += n.grad * (gauss_cdf(p->value) + p->value * pdf);
  });
}

Tensor sigmoid(const Tensor& a) {
  ArrayX v = 0.5 * (0.5 * a.value()).tanh() + 0.5;  // stable logistic
  return make_op(a.shape(), std::move(v), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad * n.value * (1.0 - n.value);
  });
}

Tensor tanh_op(const Tensor& a) {
  return make_op(a.shape(), a.value().tanh(), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad * (1.0 - n.value.square());
  });
}

Tensor exp_op(const Tensor& a) {
  return make_op(a.shape(), a.value().exp(), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad * n.value;
  });
}

Tensor log_op(const Tensor& a) {
  return make_op(a.shape(), a.value().log(), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad / p->value;
  });
}

Tensor sqrt_op(const Tensor& a) {
  return make_op(a.shape(), a.value().sqrt(), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad * 0.5 / n.value;
  });
}

Tensor square(const Tensor& a) {
  return make_op(a.shape(), a.value().square(), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad * 2.0 * p->value;
  });
}

Tensor abs_op(const Tensor& a) {
  return make_op(a.shape(), a.value().abs(), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad * p->value.sign();
  });
}

Tensor clamp_min(const Tensor& a, Scalar lo) {
  return make_op(a.shape(), a.value().max(lo), {a}, [lo](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad * (p->value > lo).cast<Scalar>();
  });
}

Tensor clamp(const Tensor& a, Scalar lo, Scalar hi) {
  return make_op(a.shape(), a.value().max(lo).min(hi), {a}, [lo, hi](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad * ((p->value > lo) && (p->value < hi)).cast<Scalar>();
  });
}

Tensor clamp01_ste(const Tensor& a) {
  return make_op(a.shape(), a.value().max(0.0).min(1.0), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad;
  });
}

Tensor stop_gradient(const Tensor& a) {
  auto n = std::make_shared<Node>();
  n->value = a.value();
  n->shape = a.shape();
  return Tensor::wrap(n);
}

Tensor ste_replace(const Tensor& x, ArrayX forward_value) {
  if (static_cast<int>(forward_value.size()) != x.numel())
    throw Error("ShapeMismatch", "ste_replace: size mismatch");
  return make_op(x.shape(), std::move(forward_value), {x}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad;
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  ArrayX v(1);
  v[0] = a.value().sum();
  return make_op({1}, std::move(v), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  ArrayX v(1);
  v[0] = a.value().mean();
  return make_op({1}, std::move(v), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad[0] / static_cast<Scalar>(p->value.size());
  });
}

Tensor sum_channels(const Tensor& x) {
  require_ndim(x, 3, "sum_channels");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2), hw = H * W;
  ArrayX v = ArrayX::Zero(hw);
  for (int c = 0; c < C; ++c) v += x.value().segment(c * hw, hw);
  return make_op({1, H, W}, std::move(v), {x}, [C, hw](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (int c = 0; c < C; ++c) p->grad.segment(c * hw, hw) += n.grad;
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require_ndim(x, 3, "global_avg_pool");
  const int C = x.dim(0), hw = x.dim(1) * x.dim(2);
  ArrayX v(C);
  for (int c = 0; c < C; ++c) v[c] = x.value().segment(c * hw, hw).mean();
  return make_op({C}, std::move(v), {x}, [C, hw](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (int c = 0; c < C; ++c)
      p->grad.segment(c * hw, hw) += n.grad[c] / static_cast<Scalar>(hw);
  });
}

// ---------------------------------------------------------------------------
// shape / layout
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (shape_numel(shape) != a.numel())
    throw Error("ShapeMismatch", "reshape: " + shape_str(a.shape()) + " -> " +
                                     shape_str(shape));
  return make_op(std::move(shape), a.value(), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad;
  });
}

Tensor concat_dim0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("ShapeMismatch", "concat_dim0: empty input");
  std::vector<int> shape = parts[0].shape();
  int rows = 0;
  const int rowsz = parts[0].numel() / parts[0].dim(0);
  for (const auto& p : parts) {
    auto s = p.shape();
    if (std::vector<int>(s.begin() + 1, s.end()) !=
        std::vector<int>(shape.begin() + 1, shape.end()))
      throw Error("ShapeMismatch", "concat_dim0: trailing dims differ");
    rows += p.dim(0);
  }
  shape[0] = rows;
  ArrayX v(rows * rowsz);
  int off = 0;
  for (const auto& p : parts) {
    v.segment(off, p.numel()) = p.value();
    off += p.numel();
  }
  std::vector<int> sizes;
  for (const auto& p : parts) sizes.push_back(p.numel());
  return make_op(std::move(shape), std::move(v), parts, [sizes](Node& n) {
    int off = 0;
    for (size_t i = 0; i < n.parents.size(); ++i) {
      auto& p = n.parents[i];
      if (p->requires_grad) {
        p->ensure_grad();
        p->grad += n.grad.segment(off, sizes[i]);
      }
      off += sizes[i];
    }
  });
}

Tensor slice_dim0(const Tensor& a, int start, int len) {
  if (start < 0 || len <= 0 || start + len > a.dim(0))
    throw Error("ShapeMismatch", "slice_dim0: out of range");
  const int rowsz = a.numel() / a.dim(0);
  std::vector<int> shape = a.shape();
  shape[0] = len;
  ArrayX v = a.value().segment(start * rowsz, len * rowsz);
  return make_op(std::move(shape), std::move(v), {a}, [start, len, rowsz](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad.segment(start * rowsz, len * rowsz) += n.grad;
  });
}

Tensor slice_cols(const Tensor& a, int start, int len) {
  require_ndim(a, 2, "slice_cols");
  const int T = a.dim(0), D = a.dim(1);
  if (start < 0 || len <= 0 || start + len > D)
    throw Error("ShapeMismatch", "slice_cols: out of range");
  ArrayX v(T * len);
  for (int t = 0; t < T; ++t)
    v.segment(t * len, len) = a.value().segment(t * D + start, len);
  return make_op({T, len}, std::move(v), {a}, [T, D, start, len](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (int t = 0; t < T; ++t)
      p->grad.segment(t * D + start, len) += n.grad.segment(t * len, len);
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("ShapeMismatch", "concat_cols: empty input");
  const int T = parts[0].dim(0);
  int D = 0;
  for (const auto& p : parts) {
    require_ndim(p, 2, "concat_cols");
    if (p.dim(0) != T) throw Error("ShapeMismatch", "concat_cols: row counts differ");
    D += p.dim(1);
  }
  ArrayX v(T * D);
  int off = 0;
  for (const auto& p : parts) {
    const int d = p.dim(1);
    for (int t = 0; t < T; ++t)
      v.segment(t * D + off, d) = p.value().segment(t * d, d);
    off += d;
  }
  std::vector<int> widths;
  for (const auto& p : parts) widths.push_back(p.dim(1));
  return make_op({T, D}, std::move(v), parts, [T, D, widths](Node& n) {
    int off = 0;
    for (size_t i = 0; i < n.parents.size(); ++i) {
      const int d = widths[i];
      auto& p = n.parents[i];
      if (p->requires_grad) {
        p->ensure_grad();
        for (int t = 0; t < T; ++t)
          p->grad.segment(t * d, d) += n.grad.segment(t * D + off, d);
      }
      off += d;
    }
  });
}

Tensor transpose2d(const Tensor& a) {
  require_ndim(a, 2, "transpose2d");
  const int R = a.dim(0), C = a.dim(1);
  ArrayX v(R * C);
  CMapRM src(a.value().data(), R, C);
  MapRM dst(v.data(), C, R);
  dst = src.transpose();
  return make_op({C, R}, std::move(v), {a}, [R, C](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    CMapRM g(n.grad.data(), C, R);
    MapRM pg(p->grad.data(), R, C);
    pg += g.transpose();
  });
}

// ---------------------------------------------------------------------------
// dense algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_ndim(a, 2, "matmul");
  require_ndim(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n_ = b.dim(1);
  if (b.dim(0) != k)
    throw Error("ShapeMismatch", "matmul: " + shape_str(a.shape()) + " x " +
                                     shape_str(b.shape()));
  ArrayX v(m * n_);
  {
    CMapRM A(a.value().data(), m, k);
    CMapRM B(b.value().data(), k, n_);
    MapRM C(v.data(), m, n_);
    C.noalias() = A * B;
  }
  return make_op({m, n_}, std::move(v), {a, b}, [m, k, n_](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    CMapRM G(n.grad.data(), m, n_);
    if (pa->requires_grad) {
      pa->ensure_grad();
      CMapRM B(pb->value.data(), k, n_);
      MapRM GA(pa->grad.data(), m, k);
      GA.noalias() += G * B.transpose();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      CMapRM A(pa->value.data(), m, k);
      MapRM GB(pb->grad.data(), k, n_);
      GB.noalias() += A.transpose() * G;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_ndim(x, 2, "linear");
  require_ndim(w, 2, "linear");
  const int T = x.dim(0), Di = x.dim(1), Do = w.dim(1);
  if (w.dim(0) != Di || b.numel() != Do)
    throw Error("ShapeMismatch", "linear: incompatible weight/bias shapes");
  ArrayX v(T * Do);
  {
    CMapRM X(x.value().data(), T, Di);
    CMapRM W(w.value().data(), Di, Do);
    MapRM Y(v.data(), T, Do);
    Y.noalias() = X * W;
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), Do);
  }
  return make_op({T, Do}, std::move(v), {x, w, b}, [T, Di, Do](Node& n) {
    auto& px = n.parents[0];
    auto& pw = n.parents[1];
    auto& pb = n.parents[2];
    CMapRM G(n.grad.data(), T, Do);
    if (px->requires_grad) {
      px->ensure_grad();
      CMapRM W(pw->value.data(), Di, Do);
      MapRM GX(px->grad.data(), T, Di);
      GX.noalias() += G * W.transpose();
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      CMapRM X(px->value.data(), T, Di);
      MapRM GW(pw->grad.data(), Di, Do);
      GW.noalias() += X.transpose() * G;
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      Eigen::Map<Eigen::RowVectorXd> GB(pb->grad.data(), Do);
      GB += G.colwise().sum();
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  require_ndim(a, 2, "softmax_rows");
  const int T = a.dim(0), D = a.dim(1);
  ArrayX v(T * D);
  for (int t = 0; t < T; ++t) {
    auto row = a.value().segment(t * D, D);
    ArrayX e = (row - row.maxCoeff()).exp();
    v.segment(t * D, D) = e / e.sum();
  }
  return make_op({T, D}, std::move(v), {a}, [T, D](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (int t = 0; t < T; ++t) {
      auto pr = n.value.segment(t * D, D);
      auto gr = n.grad.segment(t * D, D);
      Scalar dot = (pr * gr).sum();
      p->grad.segment(t * D, D) += pr * (gr - dot);
    }
  });
}

namespace {

// Shared normalization core. N blocks of contiguous length M.
// mode row: gamma/beta indexed by position within block (layer norm).
// mode block: gamma/beta indexed by block (instance norm).
enum class NormMode { PerPosition, PerBlock };

Tensor block_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Scalar eps, int N, int M, NormMode mode, const char* opname) {
  ArrayX xhat(N * M), v(N * M), inv_std(N);
  for (int i = 0; i < N; ++i) {
    auto blk = x.value().segment(i * M, M);
    Scalar mu = blk.mean();
    Scalar var = (blk - mu).square().mean();
    Scalar is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    xhat.segment(i * M, M) = (blk - mu) * is;
    if (mode == NormMode::PerPosition)
      v.segment(i * M, M) = xhat.segment(i * M, M) * gamma.value() + beta.value();
    else
      v.segment(i * M, M) = xhat.segment(i * M, M) * gamma.value()[i] + beta.value()[i];
  }
  (void)opname;
  return make_op(x.shape(), std::move(v), {x, gamma, beta},
                 [N, M, mode, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)](Node& n) {
                   auto& px = n.parents[0];
                   auto& pg = n.parents[1];
                   auto& pb = n.parents[2];
                   if (pg->requires_grad) pg->ensure_grad();
                   if (pb->requires_grad) pb->ensure_grad();
                   if (px->requires_grad) px->ensure_grad();
                   for (int i = 0; i < N; ++i) {
                     auto g = n.grad.segment(i * M, M);
                     auto xh = xhat.segment(i * M, M);
                     if (pg->requires_grad) {
                       if (mode == NormMode::PerPosition)
                         pg->grad += g * xh;
                       else
                         pg->grad[i] += (g * xh).sum();
                     }
                     if (pb->requires_grad) {
                       if (mode == NormMode::PerPosition)
                         pb->grad += g;
                       else
                         pb->grad[i] += g.sum();
                     }
                     if (px->requires_grad) {
                       ArrayX gg(M);
                       if (mode == NormMode::PerPosition)
                         gg = g * pg->value;
                       else
                         gg = g * pg->value[i];
                       Scalar m1 = gg.mean();
                       Scalar m2 = (gg * xh).mean();
                       px->grad.segment(i * M, M) +=
                           inv_std[i] * (gg - m1 - xh * m2);
                     }
                   }
                 });
}

}  // namespace

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       Scalar eps) {
  require_ndim(x, 2, "layer_norm_rows");
  const int T = x.dim(0), D = x.dim(1);
  if (gamma.numel() != D || beta.numel() != D)
    throw Error("ShapeMismatch", "layer_norm_rows: gamma/beta must have size D");
  return block_norm(x, gamma, beta, eps, T, D, NormMode::PerPosition,
                    "layer_norm_rows");
}

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     Scalar eps) {
  require_ndim(x, 3, "instance_norm");
  const int C = x.dim(0), hw = x.dim(1) * x.dim(2);
  if (gamma.numel() != C || beta.numel() != C)
    throw Error("ShapeMismatch", "instance_norm: gamma/beta must have size C");
  return block_norm(x, gamma, beta, eps, C, hw, NormMode::PerBlock,
                    "instance_norm");
}

// ---------------------------------------------------------------------------
// broadcast helpers
// ---------------------------------------------------------------------------

Tensor mul_bcast_channel(const Tensor& x, const Tensor& plane) {
  require_ndim(x, 3, "mul_bcast_channel");
  require_ndim(plane, 3, "mul_bcast_channel");
  const int C = x.dim(0), hw = x.dim(1) * x.dim(2);
  if (plane.dim(0) != 1 || plane.dim(1) != x.dim(1) || plane.dim(2) != x.dim(2))
    throw Error("ShapeMismatch", "mul_bcast_channel: plane must be (1,H,W)");
  ArrayX v(C * hw);
  for (int c = 0; c < C; ++c)
    v.segment(c * hw, hw) = x.value().segment(c * hw, hw) * plane.value();
  return make_op(x.shape(), std::move(v), {x, plane}, [C, hw](Node& n) {
    auto& px = n.parents[0];
    auto& pm = n.parents[1];
    if (px->requires_grad) {
      px->ensure_grad();
      for (int c = 0; c < C; ++c)
        px->grad.segment(c * hw, hw) += n.grad.segment(c * hw, hw) * pm->value;
    }
    if (pm->requires_grad) {
      pm->ensure_grad();
      for (int c = 0; c < C; ++c)
        pm->grad += n.grad.segment(c * hw, hw) * px->value.segment(c * hw, hw);
    }
  });
}

Tensor mul_rows(const Tensor& x, const Tensor& gate) {
  require_ndim(x, 2, "mul_rows");
  const int T = x.dim(0), D = x.dim(1);
  if (gate.numel() != T)
    throw Error("ShapeMismatch", "mul_rows: gate must have one entry per row");
  ArrayX v(T * D);
  for (int t = 0; t < T; ++t)
    v.segment(t * D, D) = x.value().segment(t * D, D) * gate.value()[t];
  return make_op({T, D}, std::move(v), {x, gate}, [T, D](Node& n) {
    auto& px = n.parents[0];
    auto& pg = n.parents[1];
    if (px->requires_grad) {
      px->ensure_grad();
      for (int t = 0; t < T; ++t)
        px->grad.segment(t * D, D) += n.grad.segment(t * D, D) * pg->value[t];
    }
    if (pg->requires_grad) {
      pg->ensure_grad();
      for (int t = 0; t < T; ++t)
        pg->grad[t] +=
            (n.grad.segment(t * D, D) * px->value.segment(t * D, D)).sum();
    }
  });
}

// ---------------------------------------------------------------------------
// spatial ops
// ---------------------------------------------------------------------------

namespace {

void im2col(const Scalar* x, int Ci, int H, int W, int kh, int kw, int stride,
            int pad, int Ho, int Wo, MatRM& col) {
  col.resize(Ci * kh * kw, Ho * Wo);
  for (int ci = 0; ci < Ci; ++ci) {
    const Scalar* xc = x + ci * H * W;
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx) {
        const int r = (ci * kh + dy) * kw + dx;
        Scalar* dst = col.data() + static_cast<ptrdiff_t>(r) * Ho * Wo;
        for (int ho = 0; ho < Ho; ++ho) {
          const int hi = ho * stride + dy - pad;
          if (hi < 0 || hi >= H) {
            std::fill(dst, dst + Wo, 0.0);
            dst += Wo;
            continue;
          }
          const Scalar* xr = xc + hi * W;
          for (int wo = 0; wo < Wo; ++wo) {
            const int wi = wo * stride + dx - pad;
            *dst++ = (wi >= 0 && wi < W) ? xr[wi] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const MatRM& col, int Ci, int H, int W, int kh, int kw,
                int stride, int pad, int Ho, int Wo, Scalar* gx) {
  for (int ci = 0; ci < Ci; ++ci) {
    Scalar* gc = gx + ci * H * W;
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx) {
        const int r = (ci * kh + dy) * kw + dx;
        const Scalar* src = col.data() + static_cast<ptrdiff_t>(r) * Ho * Wo;
        for (int ho = 0; ho < Ho; ++ho) {
          const int hi = ho * stride + dy - pad;
          if (hi < 0 || hi >= H) {
            src += Wo;
            continue;
          }
          Scalar* gr = gc + hi * W;
          for (int wo = 0; wo < Wo; ++wo) {
            const int wi = wo * stride + dx - pad;
            if (wi >= 0 && wi < W) gr[wi] += src[wo];
          }
          src += Wo;
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad) {
  require_ndim(x, 3, "conv2d");
  require_ndim(w, 4, "conv2d");
  const int Ci = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != Ci)
    throw Error("ShapeMismatch", "conv2d: input channels " + std::to_string(Ci) +
                                     " vs kernel " + std::to_string(w.dim(1)));
  if (b.numel() != Co) throw Error("ShapeMismatch", "conv2d: bias size");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw Error("ShapeMismatch", "conv2d: empty output");

  MatRM col;
  im2col(x.value().data(), Ci, H, W, kh, kw, stride, pad, Ho, Wo, col);
  ArrayX v(Co * Ho * Wo);
  {
    CMapRM Wm(w.value().data(), Co, Ci * kh * kw);
    MapRM Y(v.data(), Co, Ho * Wo);
    Y.noalias() = Wm * col;
    Y.colwise() += Eigen::Map<const Eigen::VectorXd>(b.value().data(), Co);
  }
  return make_op(
      {Co, Ho, Wo}, std::move(v), {x, w, b},
      [Ci, H, W, Co, kh, kw, stride, pad, Ho, Wo](Node& n) {
        auto& px = n.parents[0];
        auto& pw = n.parents[1];
        auto& pb = n.parents[2];
        CMapRM G(n.grad.data(), Co, Ho * Wo);
        if (pb->requires_grad) {
          pb->ensure_grad();
          Eigen::Map<Eigen::VectorXd> GB(pb->grad.data(), Co);
          GB += G.rowwise().sum();
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          // im2col recomputed from the stored input: cheaper than caching the
          // full column matrix on every conv node.
          MatRM col;
          im2col(px->value.data(), Ci, H, W, kh, kw, stride, pad, Ho, Wo, col);
          MapRM GW(pw->grad.data(), Co, Ci * kh * kw);
          GW.noalias() += G * col.transpose();
        }
        if (px->requires_grad) {
          px->ensure_grad();
          CMapRM Wm(pw->value.data(), Co, Ci * kh * kw);
          MatRM gcol(Ci * kh * kw, Ho * Wo);
          gcol.noalias() = Wm.transpose() * G;
          col2im_add(gcol, Ci, H, W, kh, kw, stride, pad, Ho, Wo,
                     px->grad.data());
        }
      });
}

Tensor upsample_nearest2(const Tensor& x) {
  require_ndim(x, 3, "upsample_nearest2");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int Ho = 2 * H, Wo = 2 * W;
  ArrayX v(C * Ho * Wo);
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < Ho; ++h) {
      const Scalar* src = x.value().data() + (c * H + h / 2) * W;
      Scalar* dst = v.data() + (c * Ho + h) * Wo;
      for (int w_ = 0; w_ < Wo; ++w_) dst[w_] = src[w_ / 2];
    }
  return make_op({C, Ho, Wo}, std::move(v), {x}, [C, H, W, Ho, Wo](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < Ho; ++h) {
        const Scalar* g = n.grad.data() + (c * Ho + h) * Wo;
        Scalar* dst = p->grad.data() + (c * H + h / 2) * W;
        for (int w_ = 0; w_ < Wo; ++w_) dst[w_ / 2] += g[w_];
      }
  });
}

namespace {

struct LerpAxis {
  std::vector<int> i0, i1;
  std::vector<Scalar> w1;  // weight of i1; weight of i0 is 1-w1
};

LerpAxis make_lerp_axis(int in, int out) {
  LerpAxis ax;
  ax.i0.resize(out);
  ax.i1.resize(out);
  ax.w1.resize(out);
  const Scalar scale = static_cast<Scalar>(in) / out;
  for (int o = 0; o < out; ++o) {
    Scalar src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    if (src > in - 1) src = in - 1;
    int lo = static_cast<int>(std::floor(src));
    ax.i0[o] = lo;
    ax.i1[o] = std::min(lo + 1, in - 1);
    ax.w1[o] = src - lo;
  }
  return ax;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  require_ndim(x, 3, "resize_bilinear");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (out_h == H && out_w == W) {
    return make_op(x.shape(), x.value(), {x}, [](Node& n) {
      auto& p = n.parents[0];
      p->ensure_grad();
      p->grad += n.grad;
    });
  }
  LerpAxis ay = make_lerp_axis(H, out_h), ax = make_lerp_axis(W, out_w);
  ArrayX v(C * out_h * out_w);
  for (int c = 0; c < C; ++c) {
    const Scalar* src = x.value().data() + c * H * W;
    Scalar* dst = v.data() + c * out_h * out_w;
    for (int ho = 0; ho < out_h; ++ho) {
      const Scalar* r0 = src + ay.i0[ho] * W;
      const Scalar* r1 = src + ay.i1[ho] * W;
      const Scalar fy = ay.w1[ho];
      for (int wo = 0; wo < out_w; ++wo) {
        const Scalar fx = ax.w1[wo];
        const Scalar top = r0[ax.i0[wo]] * (1 - fx) + r0[ax.i1[wo]] * fx;
        const Scalar bot = r1[ax.i0[wo]] * (1 - fx) + r1[ax.i1[wo]] * fx;
        dst[ho * out_w + wo] = top * (1 - fy) + bot * fy;
      }
    }
  }
  return make_op({C, out_h, out_w}, std::move(v), {x},
                 [C, H, W, out_h, out_w, ay, ax](Node& n) {
                   auto& p = n.parents[0];
                   p->ensure_grad();
                   for (int c = 0; c < C; ++c) {
                     const Scalar* g = n.grad.data() + c * out_h * out_w;
                     Scalar* dst = p->grad.data() + c * H * W;
                     for (int ho = 0; ho < out_h; ++ho) {
                       const Scalar fy = ay.w1[ho];
                       Scalar* r0 = dst + ay.i0[ho] * W;
                       Scalar* r1 = dst + ay.i1[ho] * W;
                       for (int wo = 0; wo < out_w; ++wo) {
                         const Scalar fx = ax.w1[wo];
                         const Scalar gv = g[ho * out_w + wo];
                         r0[ax.i0[wo]] += gv * (1 - fx) * (1 - fy);
                         r0[ax.i1[wo]] += gv * fx * (1 - fy);
                         r1[ax.i0[wo]] += gv * (1 - fx) * fy;
                         r1[ax.i1[wo]] += gv * fx * fy;
                       }
                     }
                   }
                 });
}

Tensor avg_pool(const Tensor& x, int factor) {
  require_ndim(x, 3, "avg_pool");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (factor <= 0 || H % factor || W % factor)
    throw Error("ShapeMismatch", "avg_pool: factor must divide H and W");
  const int Ho = H / factor, Wo = W / factor;
  const Scalar inv = 1.0 / (factor * factor);
  ArrayX v = ArrayX::Zero(C * Ho * Wo);
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < H; ++h) {
      const Scalar* src = x.value().data() + (c * H + h) * W;
      Scalar* dst = v.data() + (c * Ho + h / factor) * Wo;
      for (int w_ = 0; w_ < W; ++w_) dst[w_ / factor] += src[w_] * inv;
    }
  return make_op({C, Ho, Wo}, std::move(v), {x}, [C, H, W, Ho, Wo, factor, inv](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h) {
        const Scalar* g = n.grad.data() + (c * Ho + h / factor) * Wo;
        Scalar* dst = p->grad.data() + (c * H + h) * W;
        for (int w_ = 0; w_ < W; ++w_) dst[w_] += g[w_ / factor] * inv;
      }
  });
}

Tensor patchify(const Tensor& x, int patch) {
  require_ndim(x, 3, "patchify");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % patch || W % patch)
    throw Error("ShapeMismatch", "patchify: patch must divide H and W");
  const int gh = H / patch, gw = W / patch, T = gh * gw, D = C * patch * patch;
  ArrayX v(T * D);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      const int t = gy * gw + gx;
      for (int c = 0; c < C; ++c)
        for (int py = 0; py < patch; ++py)
          for (int px = 0; px < patch; ++px)
            v[t * D + (c * patch + py) * patch + px] =
                x.value()[(c * H + gy * patch + py) * W + gx * patch + px];
    }
  return make_op({T, D}, std::move(v), {x}, [C, H, W, patch, gh, gw, D](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        const int t = gy * gw + gx;
        for (int c = 0; c < C; ++c)
          for (int py = 0; py < patch; ++py)
            for (int px = 0; px < patch; ++px)
              p->grad[(c * H + gy * patch + py) * W + gx * patch + px] +=
                  n.grad[t * D + (c * patch + py) * patch + px];
      }
  });
}

Tensor unpatchify(const Tensor& tokens, int channels, int height, int width,
                  int patch) {
  require_ndim(tokens, 2, "unpatchify");
  const int gh = height / patch, gw = width / patch;
  const int D = channels * patch * patch;
  if (tokens.dim(0) != gh * gw || tokens.dim(1) != D)
    throw Error("ShapeMismatch", "unpatchify: token grid does not match target");
  ArrayX v(channels * height * width);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      const int t = gy * gw + gx;
      for (int c = 0; c < channels; ++c)
        for (int py = 0; py < patch; ++py)
          for (int px = 0; px < patch; ++px)
            v[(c * height + gy * patch + py) * width + gx * patch + px] =
                tokens.value()[t * D + (c * patch + py) * patch + px];
    }
  return make_op({channels, height, width}, std::move(v), {tokens},
                 [channels, height, width, patch, gh, gw, D](Node& n) {
                   auto& p = n.parents[0];
                   p->ensure_grad();
                   for (int gy = 0; gy < gh; ++gy)
                     for (int gx = 0; gx < gw; ++gx) {
                       const int t = gy * gw + gx;
                       for (int c = 0; c < channels; ++c)
                         for (int py = 0; py < patch; ++py)
                           for (int px = 0; px < patch; ++px)
                             p->grad[t * D + (c * patch + py) * patch + px] +=
                                 n.grad[(c * height + gy * patch + py) * width +
                                        gx * patch + px];
                     }
                 });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits_mean");
  const auto& l = logits.value();
  const auto& t = targets.value();
  ArrayX per = l.max(0.0) - l * t + (1.0 + (-l.abs()).exp()).log();
  ArrayX v(1);
  v[0] = per.mean();
  return make_op({1}, std::move(v), {logits, targets}, [](Node& n) {
    auto& pl = n.parents[0];
    auto& pt = n.parents[1];
    const Scalar invN = 1.0 / static_cast<Scalar>(pl->value.size());
    ArrayX s = 0.5 * (0.5 * pl->value).tanh() + 0.5;
    if (pl->requires_grad) {
      pl->ensure_grad();
      pl->grad += n.grad[0] * invN * (s - pt->value);
    }
    if (pt->requires_grad) {
      pt->ensure_grad();
      pt->grad += n.grad[0] * invN * (-pl->value);
    }
  });
}

Tensor mse_mean(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse_mean");
  ArrayX v(1);
  v[0] = (a.value() - b.value()).square().mean();
  return make_op({1}, std::move(v), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    const Scalar c = 2.0 * n.grad[0] / static_cast<Scalar>(pa->value.size());
    ArrayX d = pa->value - pb->value;
    if (pa->requires_grad) {
      pa->ensure_grad();
      pa->grad += c * d;
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      pb->grad -= c * d;
    }
  });
}

Tensor l1_mean(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l1_mean");
  ArrayX v(1);
  v[0] = (a.value() - b.value()).abs().mean();
  return make_op({1}, std::move(v), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    const Scalar c = n.grad[0] / static_cast<Scalar>(pa->value.size());
    ArrayX s = (pa->value - pb->value).sign();
    if (pa->requires_grad) {
      pa->ensure_grad();
      pa->grad += c * s;
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      pb->grad -= c * s;
    }
  });
}

}  // namespace provmark
