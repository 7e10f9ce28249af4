#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace provmark {

using Scalar = double;
using ArrayX = Eigen::ArrayXd;

// Raised by every operation whose spec names an error condition. kind() is a
// stable identifier ("ShapeMismatch", "OutOfRange", ...); what() prepends it
// to the human-readable message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// Thread-local autograd mode. Inference code wraps itself in NoGradGuard so
// no graph is recorded.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

struct Node {
  ArrayX value;
  ArrayX grad;  // allocated lazily by ensure_grad()
  std::vector<int> shape;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grads. Empty for leaves.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = ArrayX::Zero(value.size());
  }
};

}  // namespace detail

// Value-semantics handle to a graph node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor constant(std::vector<int> shape, Scalar v);
  static Tensor from_array(std::vector<int> shape, ArrayX data,
                           bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int numel() const { return static_cast<int>(node_->value.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }

  const ArrayX& value() const { return node_->value; }
  // Direct mutation is reserved for leaf tensors (parameter updates, init).
  ArrayX& mutable_value() { return node_->value; }
  const ArrayX& grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();

  // Reverse-mode sweep from a scalar root.
  void backward() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div_elem(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, Scalar s);
Tensor mul_scalar(const Tensor& a, Scalar s);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, Scalar slope);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor sqrt_op(const Tensor& a);
Tensor square(const Tensor& a);
Tensor abs_op(const Tensor& a);
Tensor clamp_min(const Tensor& a, Scalar lo);
Tensor clamp(const Tensor& a, Scalar lo, Scalar hi);
// Forward clamps to [0,1]; backward passes gradients through untouched so
// saturated pixels still steer the producer.
Tensor clamp01_ste(const Tensor& a);
Tensor stop_gradient(const Tensor& a);
// Forward takes `forward_value`, backward is identity into `x`.
Tensor ste_replace(const Tensor& x, ArrayX forward_value);

// ---- reductions ----
Tensor sum_all(const Tensor& a);   // shape {1}
Tensor mean_all(const Tensor& a);  // shape {1}
Tensor sum_channels(const Tensor& x);     // (C,H,W) -> (1,H,W)
Tensor global_avg_pool(const Tensor& x);  // (C,H,W) -> (C)

// ---- shape / layout ----
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor concat_dim0(const std::vector<Tensor>& parts);
Tensor slice_dim0(const Tensor& a, int start, int len);
Tensor slice_cols(const Tensor& a, int start, int len);  // 2D
Tensor concat_cols(const std::vector<Tensor>& parts);    // 2D
Tensor transpose2d(const Tensor& a);

// ---- dense algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k)x(k,n)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x(T,Di) w(Di,Do) b(Do)
Tensor softmax_rows(const Tensor& a);  // 2D, softmax over each row
// y = gamma * (x-mu)/sqrt(var+eps) + beta per row; gamma/beta sized D.
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       Scalar eps = 1e-5);
// Per-channel spatial normalization for (C,H,W); gamma/beta sized C.
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     Scalar eps = 1e-5);

// ---- broadcast helpers ----
Tensor mul_bcast_channel(const Tensor& x, const Tensor& plane);  // (C,H,W)*(1,H,W)
Tensor mul_rows(const Tensor& x, const Tensor& gate);            // (T,D)*(T)

// ---- spatial ----
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);
Tensor upsample_nearest2(const Tensor& x);
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
Tensor avg_pool(const Tensor& x, int factor);
// (C,H,W) -> (T, C*P*P) tokens in row-major grid order; features ordered (c,py,px).
Tensor patchify(const Tensor& x, int patch);
Tensor unpatchify(const Tensor& tokens, int channels, int height, int width,
                  int patch);

// ---- losses ----
Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets);
Tensor mse_mean(const Tensor& a, const Tensor& b);
Tensor l1_mean(const Tensor& a, const Tensor& b);

}  // namespace provmark
