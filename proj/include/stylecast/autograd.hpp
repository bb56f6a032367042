#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stylecast/params.hpp"
#include "stylecast/tensor.hpp"

namespace stylecast {

// Handle into a Graph. Carries the shape so callers can wire modules
// together without touching node storage.
struct Var {
  int id = -1;
  int rows = 0;
  int cols = 0;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. One Graph per forward pass; ops append nodes and
// backward() runs the recorded closures in reverse creation order.
// Reductions accumulate in double so results are stable against the
// double-precision oracles used by the tests.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  Var input(Tensor t);                 // constant, no gradient
  Var leaf(Tensor t);                  // gradient-tracked input
  Var param(ParamTensor& p);           // cached per graph; grads flow to p.grad
  Var zero_scalar();                   // constant 0 scalar

  // Elementwise / linear algebra.
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_rowvec(Var a, Var bias);     // a[m x n] + bias[1 x n]
  Var scale(Var a, float c);
  Var affine(Var x, Var w, Var bias);              // x*w + bias
  Var affine2(Var x, Var wx, Var h, Var wh, Var bias);  // x*wx + h*wh + bias
  Var tanh_(Var a);
  Var sigmoid_(Var a);
  Var hardswish_(Var a);

  // Gradient reversal: identity forward, -lambda * grad backward.
  Var grl(Var a, float lambda);

  // Structural ops.
  Var concat_cols(const std::vector<Var>& xs);
  Var concat_rows(const std::vector<Var>& xs);
  Var slice_rows(Var a, int r0, int r1);
  Var row(Var a, int r) { return slice_rows(a, r, r + 1); }
  Var mean_rows(Var a);                              // [1 x n] column means
  Var shift_rows(Var a, int offset);                 // zero-padded shift along rows
  Var repeat_row(Var a, int n);                      // [1 x c] -> [n x c]
  Var segment_mean_rows(Var a, const std::vector<int>& durations);
  Var length_regulate(Var a, const std::vector<int>& durations);
  Var rows_gather(Var table, const std::vector<int>& ids);

  // Unidirectional GRU over the row axis; returns all hidden states
  // [T x H]. Single fused node with hand-rolled BPTT, initial state zero.
  struct GruVars {
    Var w_ir, w_iz, w_in;                  // [I x H]
    Var w_hr, w_hz, w_hn;                  // [H x H]
    Var b_ir, b_iz, b_in, b_hr, b_hz, b_hn;  // [1 x H]
  };
  Var gru_seq(Var x, const GruVars& p);

  // Losses (scalar outputs).
  Var softmax_ce(Var logits, const std::vector<int>& labels);
  Var mae(Var pred, const Tensor& target);
  Var mse(Var pred, const Tensor& target);
  Var weighted_sum(const std::vector<Var>& scalars, const std::vector<float>& weights);

  // Execution.
  void backward(Var loss);
  const Tensor& value(Var v) const { return nodes_[v.id].val; }
  float scalar(Var v) const;
  const Tensor& grad(Var v);         // valid for gradient-tracked nodes after backward()
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
    bool grad_alloc = false;
    ParamTensor* param = nullptr;
    std::function<void(Graph&)> back;
  };

  int push(Tensor val, bool needs_grad, std::function<void(Graph&)> back);
  Tensor& grad_buf(int id);
  void accumulate(int id, const Tensor& g);
  void check_same_shape(Var a, Var b, const char* op) const;

  std::vector<Node> nodes_;
  std::unordered_map<const ParamTensor*, int> param_nodes_;
};

// Scalar Hardswish, shared with oracles: x * clip(x + 3, 0, 6) / 6.
inline float hardswish(float x) {
  float t = x + 3.0f;
  if (t < 0.0f) t = 0.0f;
  if (t > 6.0f) t = 6.0f;
  return x * t / 6.0f;
}

inline float hardswish_grad(float x) {
  if (x <= -3.0f) return 0.0f;
  if (x >= 3.0f) return 1.0f;
  return (2.0f * x + 3.0f) / 6.0f;
}

}  // namespace stylecast
