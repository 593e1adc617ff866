#pragma once

#include <functional>
#include <vector>

#include "osdec/neuro/tensor.hpp"

namespace osdec::neuro {

// Forward tape for one fixed computation graph. Operators append nodes in
// topological order; backward() walks the tape in reverse. A tape is owned
// by a single thread for its whole lifetime.
class Tape {
 public:
  using Ref = int;

  Ref leaf(Tensor t);

  const Tensor& value(Ref r) const { return nodes_[static_cast<size_t>(r)].value; }
  const Tensor& grad(Ref r) const { return nodes_[static_cast<size_t>(r)].grad; }
  double scalar(Ref r) const { return value(r).values[0]; }

  // [n x k] * [k x m]
  Ref matmul(Ref a, Ref b);
  // [n x k] * [m x k]^T
  Ref matmul_nt(Ref a, Ref b);
  Ref add(Ref a, Ref b);
  Ref sub(Ref a, Ref b);
  Ref mul(Ref a, Ref b);  // elementwise
  Ref div(Ref a, Ref b);  // elementwise
  // [n x m] + broadcast [1 x m]
  Ref add_rowvec(Ref x, Ref b);
  Ref scale(Ref a, double c);
  Ref add_const(Ref a, double c);
  Ref tanh_op(Ref a);
  Ref sigmoid_op(Ref a);
  // ln(1 + e^x); returns x unchanged above the overflow guard at x > 30
  Ref softplus_op(Ref a);
  Ref exp_op(Ref a);
  Ref log_op(Ref a);
  Ref square(Ref a);
  // per-row standardization with epsilon 1e-5, then gain/bias ([1 x d] each)
  Ref layer_norm(Ref x, Ref gain, Ref bias);
  // row-wise softmax over unmasked key columns; masked columns get zero
  // weight. Throws ContractError if every key is masked.
  Ref masked_softmax_rows(Ref logits, const std::vector<char>& keyMask);
  // zeroes rows where rowMask is false
  Ref mask_rows(Ref x, const std::vector<char>& rowMask);
  Ref slice_rows(Ref x, size_t start, size_t count);
  Ref concat_cols(const std::vector<Ref>& parts);  // all [1 x *]
  Ref sum(Ref a);  // -> [1 x 1]
  // PPO clipped surrogate for one transition; logProbNew is a scalar node.
  // Forward value is min(r*A, clip(r, 1-eps, 1+eps)*A) with
  // r = exp(logProbNew - logProbOld).
  Ref ppo_surrogate(Ref logProbNew, double logProbOld, double advantage,
                    double eps);

  // xW + b with W [d_in x d_out], b [1 x d_out]
  Ref linear(Ref x, Ref W, Ref b) { return add_rowvec(matmul(x, W), b); }

  // softmax(QK^T / sqrt(d)) V with masked keys excluded and masked query
  // rows zeroed.
  Ref self_attention(Ref x, Ref Wq, Ref Wk, Ref Wv,
                     const std::vector<char>& mask);

  // h' = (1-z) h + z h_tilde; x and h are [1 x d] rows.
  Ref gru_cell(Ref x, Ref h, Ref Wz, Ref Uz, Ref bz, Ref Wr, Ref Ur, Ref br,
               Ref Wh, Ref Uh, Ref bh);

  // Accumulates d(root)/d(node) into every node's grad.
  void backward(Ref root);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> back;  // empty for leaves
  };

  Ref push(Tensor value, std::function<void()> back = {});
  Tensor& grad_mut(Ref r) { return nodes_[static_cast<size_t>(r)].grad; }

  std::vector<Node> nodes_;
};

}  // namespace osdec::neuro
