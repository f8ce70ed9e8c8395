#pragma once

#include <functional>
#include <vector>

#include "graphpde/tensor.hpp"

namespace gpde {

// Dynamic reverse-mode autodiff tape. Each recorded op appends one node
// holding its output value; backward() walks the tape once in reverse and
// accumulates gradients into every differentiable ancestor. A node is
// differentiable iff it is a leaf() or has a differentiable parent;
// constant() inputs are never tracked, so subgraphs that depend only on
// constants cost nothing at backward time.
//
// One tape per thread; tapes share nothing.
class Tape {
public:
  int leaf(Tensor value);
  int constant(Tensor value);

  // Elementwise, both operands the same shape.
  int add(int a, int b);
  int mul(int a, int b);
  // x * c and x + c for a compile-time constant c.
  int scale(int a, double c);
  int add_const(int a, double c);
  // Tile `a` up to `shape`; a's shape must be a suffix of `shape` (a scalar
  // counts). Backward sums over the tiled leading dimensions.
  int broadcast_to(int a, std::vector<int64_t> shape);

  // C = op(A) * op(B) for 2D A, B with optional transposes.
  int matmul(int a, int b, bool trans_a = false, bool trans_b = false);
  // y = x * W^T + b with x [n,in], W [out,in], b [out] -> y [n,out].
  int affine(int x, int w, int b);

  int sum(int a);
  int mean(int a);

  int sqrt_(int a);
  int sin_(int a);
  int cos_(int a);
  int exp_(int a);
  int log_(int a);
  int powc(int a, double p);  // a^p, p constant
  int gelu(int a);
  int relu(int a);

  // Row-wise softmax of a 2D tensor; entries may be -inf (masked out).
  int softmax_rows(int a);
  // Row-wise layer norm over the last axis of 2D x, with learnable gamma and
  // beta vectors of length x.shape[1].
  int layer_norm(int x, int gamma, int beta, double eps = 1e-5);

  // Valid-padding 2D convolution. x [Cin,H,W], w [Cout,Cin,k,k], b [Cout].
  int conv2d(int x, int w, int b, int stride);

  // y[r] = x[idx[r]] over the leading axis of a 1D or 2D x. Rows may repeat;
  // backward scatter-adds.
  int gather_rows(int x, std::vector<int64_t> idx);
  int slice_cols(int x, int64_t c0, int64_t len);
  int concat_cols(const std::vector<int>& xs);
  // Stack k tensors of shape [d] into [k,d].
  int stack_rows(const std::vector<int>& xs);
  int reshape(int a, std::vector<int64_t> shape);

  // Convenience compounds (recorded in terms of the primitives above).
  int sub(int a, int b) { return add(a, scale(b, -1.0)); }
  int square(int a) { return powc(a, 2.0); }

  const Tensor& val(int id) const { return nodes_[size_t(id)].val; }
  size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 (loss must be scalar) and back-propagates.
  // Each node's backward runs at most once.
  void backward(int loss_id);
  // Gradient of the last backward() w.r.t. node id, nullptr if untouched.
  const Tensor* grad(int id) const;

private:
  struct Node {
    Tensor val;
    std::vector<int> parents;
    std::function<void(Tape&, int)> back;  // nullptr for leaves/constants
    bool needs_grad = false;
  };

  int push(Tensor val, std::vector<int> parents,
           std::function<void(Tape&, int)> back);
  // Zero-initialized gradient buffer for node id, created on first use.
  Tensor& gbuf(int id);
  bool wants(int id) const { return nodes_[size_t(id)].needs_grad; }

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;

  friend struct TapeOps;
};

}  // namespace gpde
