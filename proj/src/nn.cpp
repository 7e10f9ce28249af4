#include "provmark/nn.hpp"

#include <cmath>

namespace provmark {

Tensor ParamStore::add(const std::string& name, std::vector<int> shape,
                       ArrayX data) {
  for (const auto& e : entries_)
    if (e.name == name)
      throw Error("DuplicateParam", "parameter '" + name + "' already exists");
  Tensor t = Tensor::from_array(std::move(shape), std::move(data), true);
  entries_.push_back({name, t});
  return t;
}

Tensor ParamStore::conv_filter(const std::string& name, int co, int ci, int kh,
                               int kw) {
  const int fan_in = ci * kh * kw;
  const Scalar stddev = std::sqrt(2.0 / fan_in);
  ArrayX data(static_cast<Eigen::Index>(co) * ci * kh * kw);
  for (Eigen::Index i = 0; i < data.size(); ++i) data[i] = rng_.normal(0, stddev);
  return add(name, {co, ci, kh, kw}, std::move(data));
}

Tensor ParamStore::dense_matrix(const std::string& name, int di, int dout) {
  const Scalar stddev = std::sqrt(2.0 / (di + dout));
  ArrayX data(static_cast<Eigen::Index>(di) * dout);
  for (Eigen::Index i = 0; i < data.size(); ++i) data[i] = rng_.normal(0, stddev);
  return add(name, {di, dout}, std::move(data));
}

Tensor ParamStore::fill(const std::string& name, std::vector<int> shape,
                        Scalar v) {
  int n = 1;
  for (int d : shape) n *= d;
  return add(name, std::move(shape), ArrayX::Constant(n, v));
}

Tensor ParamStore::normal(const std::string& name, std::vector<int> shape,
                          Scalar stddev) {
  int n = 1;
  for (int d : shape) n *= d;
  ArrayX data(n);
  for (Eigen::Index i = 0; i < data.size(); ++i) data[i] = rng_.normal(0, stddev);
  return add(name, std::move(shape), std::move(data));
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.t);
  return out;
}

const Tensor& ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.t;
  throw Error("MissingParam", "no parameter named '" + name + "'");
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.t.numel();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& e : entries_)
    if (!e.t.value().isFinite().all()) return false;
  return true;
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int ci, int co, int k,
               int stride_, int pad_)
    : w(ps.conv_filter(name + ".w", co, ci, k, k)),
      b(ps.fill(name + ".b", {co}, 0.0)),
      stride(stride_),
      pad(pad_) {}

Dense::Dense(ParamStore& ps, const std::string& name, int di, int dout)
    : w(ps.dense_matrix(name + ".w", di, dout)),
      b(ps.fill(name + ".b", {dout}, 0.0)) {}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int d)
    : gamma(ps.fill(name + ".g", {d}, 1.0)), beta(ps.fill(name + ".b", {d}, 0.0)) {}

InstanceNorm::InstanceNorm(ParamStore& ps, const std::string& name, int c)
    : gamma(ps.fill(name + ".g", {c}, 1.0)), beta(ps.fill(name + ".b", {c}, 0.0)) {}

MultiHeadAttention::MultiHeadAttention(ParamStore& ps, const std::string& name,
                                       int d, int heads_)
    : wq(ps, name + ".q", d, d),
      wk(ps, name + ".k", d, d),
      wv(ps, name + ".v", d, d),
      wo(ps, name + ".o", d, d),
      heads(heads_),
      dim(d) {
  if (d % heads_)
    throw Error("BadConfig", "attention dim must be divisible by head count");
}

Tensor MultiHeadAttention::operator()(const Tensor& q_in,
                                      const Tensor& kv_in) const {
  const int dh = dim / heads;
  const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(dh));
  Tensor Q = wq(q_in), K = wk(kv_in), V = wv(kv_in);
  std::vector<Tensor> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor Qh = slice_cols(Q, h * dh, dh);
    Tensor Kh = slice_cols(K, h * dh, dh);
    Tensor Vh = slice_cols(V, h * dh, dh);
    Tensor scores = mul_scalar(matmul(Qh, transpose2d(Kh)), scale);
    outs.push_back(matmul(softmax_rows(scores), Vh));
  }
  return wo(concat_cols(outs));
}

Adam::Adam(std::vector<Tensor> params, Scalar lr, Scalar beta1, Scalar beta2,
           Scalar eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(ArrayX::Zero(p.numel()));
    v_.push_back(ArrayX::Zero(p.numel()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const Scalar bc1 = 1.0 - std::pow(beta1_, static_cast<Scalar>(t_));
  const Scalar bc2 = 1.0 - std::pow(beta2_, static_cast<Scalar>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    const ArrayX& g = params_[i].grad();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.square();
    params_[i].mutable_value() -=
        lr_ * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + eps_);
  }
}

}  // namespace provmark
