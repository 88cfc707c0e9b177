#pragma once

#include "fieldslam/param_store.hpp"
#include "fieldslam/rng.hpp"
#include "fieldslam/types.hpp"

namespace fieldslam {

// Shallow ReLU MLP with two hidden layers, weights registered in a
// ParamStore. Output activation is identity; callers apply their own head
// nonlinearity (the color decoder squashes with a logistic).
class Mlp {
 public:
  static constexpr int kMaxWidth = 64;

  Mlp() = default;
  Mlp(int in_dim, int hidden, int out_dim, ParamStore& store, ParamGroup group, Rng& init);

  int in_dim() const { return in_; }
  int hidden_dim() const { return hidden_; }
  int out_dim() const { return out_; }

  static Eigen::Index param_count(int in_dim, int hidden, int out_dim);
  Eigen::Index param_count() const { return param_count(in_, hidden_, out_); }
  const ParamBlock& block() const { return block_; }

  struct Cache {
    SmallVec<kMaxWidth> h1, h2;  // post-ReLU activations
  };

  void forward(const VecX& values, const double* in, double* out, Cache* cache) const;

  // Accumulates weight/bias grads into grads (when scatter is true) and
  // writes dL/din. `in` and `cache` must come from the matching forward.
  void backward(const VecX& values, VecX* grads, const double* in, const Cache& cache,
                const double* dout, double* din, bool scatter) const;

 private:
  int in_ = 0, hidden_ = 0, out_ = 0;
  ParamBlock block_;
  // Layout inside the block: W1 (hidden x in, row-major), b1, W2 (hidden x
  // hidden), b2, W3 (out x hidden), b3.
  Eigen::Index w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0;
};

}  // namespace fieldslam
