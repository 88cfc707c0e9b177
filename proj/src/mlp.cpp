#include "fieldslam/mlp.hpp"

#include "fieldslam/test_hook.hpp"

#include <cmath>

namespace fieldslam {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<const VecX>;
}  // namespace

Eigen::Index Mlp::param_count(int in_dim, int hidden, int out_dim) {
  return static_cast<Eigen::Index>(hidden) * in_dim + hidden +
         static_cast<Eigen::Index>(hidden) * hidden + hidden +
         static_cast<Eigen::Index>(out_dim) * hidden + out_dim;
}

Mlp::Mlp(int in_dim, int hidden, int out_dim, ParamStore& store, ParamGroup group, Rng& init)
    : in_(in_dim), hidden_(hidden), out_(out_dim) {
  block_ = store.allocate(param_count(in_dim, hidden, out_dim), group);
  w1_ = block_.offset;
  b1_ = w1_ + static_cast<Eigen::Index>(hidden) * in_dim;
  w2_ = b1_ + hidden;
  b2_ = w2_ + static_cast<Eigen::Index>(hidden) * hidden;
  w3_ = b2_ + hidden;
  b3_ = w3_ + static_cast<Eigen::Index>(out_dim) * hidden;

  // Kaiming-style uniform fan-in init for the weights, zero biases.
  auto fill = [&](Eigen::Index at, Eigen::Index n, int fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < n; ++i) store.values()[at + i] = init.uniform(-bound, bound);
  };
  fill(w1_, static_cast<Eigen::Index>(hidden) * in_dim, in_dim);
  fill(w2_, static_cast<Eigen::Index>(hidden) * hidden, hidden);
  fill(w3_, static_cast<Eigen::Index>(out_dim) * hidden, hidden);
}

void Mlp::forward(const VecX& values, const double* in, double* out, Cache* cache) const {
  MapMat W1(values.data() + w1_, hidden_, in_);
  MapMat W2(values.data() + w2_, hidden_, hidden_);
  MapMat W3(values.data() + w3_, out_, hidden_);
  MapVec x(in, in_);

  SmallVec<kMaxWidth> h1 = W1 * x + values.segment(b1_, hidden_);
  h1 = h1.cwiseMax(0.0);
  SmallVec<kMaxWidth> h2 = W2 * h1 + values.segment(b2_, hidden_);
  h2 = h2.cwiseMax(0.0);
  Eigen::Map<VecX> y(out, out_);
  y = W3 * h2 + values.segment(b3_, out_);
  if (cache) {
    cache->h1 = h1;
    cache->h2 = h2;
  }
}

void Mlp::backward(const VecX& values, VecX* grads, const double* in, const Cache& cache,
                   const double* dout, double* din, bool scatter) const {
  MapMat W2(values.data() + w2_, hidden_, hidden_);
  MapMat W3(values.data() + w3_, out_, hidden_);
  MapVec x(in, in_);
  MapVec d3(dout, out_);

  const double fault = testhook::adjoint_fault("mlp");

  SmallVec<kMaxWidth> d2 = W3.transpose() * d3;
  for (int i = 0; i < hidden_; ++i) {
    if (cache.h2[i] <= 0.0) d2[i] = 0.0;
  }
  SmallVec<kMaxWidth> d1 = W2.transpose() * d2;
  for (int i = 0; i < hidden_; ++i) {
    if (cache.h1[i] <= 0.0) d1[i] = 0.0;
  }

  if (scatter) {
    using GradMat = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    GradMat gW3(grads->data() + w3_, out_, hidden_);
    gW3.noalias() += d3 * cache.h2.transpose();
    grads->segment(b3_, out_) += d3;
    GradMat gW2(grads->data() + w2_, hidden_, hidden_);
    gW2.noalias() += d2 * cache.h1.transpose();
    grads->segment(b2_, hidden_) += d2;
    GradMat gW1(grads->data() + w1_, hidden_, in_);
    gW1.noalias() += d1 * x.transpose();
    grads->segment(b1_, hidden_) += d1;
    if (fault != 0.0) grads->segment(b1_, hidden_).array() += fault;
  }

  MapMat W1(values.data() + w1_, hidden_, in_);
  Eigen::Map<VecX> dx(din, in_);
  dx.noalias() = W1.transpose() * d1;
  if (fault != 0.0) dx.array() += fault;
}

}  // namespace fieldslam
