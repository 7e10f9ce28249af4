#pragma once

#include <string>
#include <vector>

#include "provmark/rng.hpp"
#include "provmark/tensor.hpp"

namespace provmark {

// Owns every learnable tensor of a network, in creation order. Creation
// order is the serialization order, and initialization draws from a seeded
// stream, so identical construction code + seed gives identical weights.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor t;
  };

  explicit ParamStore(uint64_t seed) : rng_(seed) {}

  // He-normal fan-in init, the right scale for relu-family conv stacks
  Tensor conv_filter(const std::string& name, int co, int ci, int kh, int kw);
  // Glorot-normal init for dense projections
  Tensor dense_matrix(const std::string& name, int di, int dout);
  Tensor fill(const std::string& name, std::vector<int> shape, Scalar v);
  Tensor normal(const std::string& name, std::vector<int> shape, Scalar stddev);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  const Tensor& find(const std::string& name) const;  // throws MissingParam
  int64_t total_size() const;
  bool all_finite() const;

 private:
  Tensor add(const std::string& name, std::vector<int> shape, ArrayX data);

  Rng rng_;
  std::vector<Entry> entries_;
};

struct Conv2d {
  Tensor w, b;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int ci, int co, int k,
         int stride_, int pad_);
  Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
};

struct Dense {
  Tensor w, b;

  Dense() = default;
  Dense(ParamStore& ps, const std::string& name, int di, int dout);
  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
};

struct LayerNorm {
  Tensor gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int d);
  Tensor operator()(const Tensor& x) const {
    return layer_norm_rows(x, gamma, beta);
  }
};

struct InstanceNorm {
  Tensor gamma, beta;

  InstanceNorm() = default;
  InstanceNorm(ParamStore& ps, const std::string& name, int c);
  Tensor operator()(const Tensor& x) const {
    return instance_norm(x, gamma, beta);
  }
};

// queries from one token stream, keys/values from another (self-attention
// when both are the same tensor)
struct MultiHeadAttention {
  Dense wq, wk, wv, wo;
  int heads = 8;
  int dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& ps, const std::string& name, int d, int heads_);
  Tensor operator()(const Tensor& q_in, const Tensor& kv_in) const;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, Scalar lr, Scalar beta1 = 0.9,
       Scalar beta2 = 0.999, Scalar eps = 1e-8);

  void zero_grad();
  void step();
  Scalar lr() const { return lr_; }
  void set_lr(Scalar lr) { lr_ = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<ArrayX> m_, v_;
  Scalar lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace provmark
