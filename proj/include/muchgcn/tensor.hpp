#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "muchgcn/array.hpp"

namespace muchgcn {

/// Named trainable value. Gradients accumulate into `grad` across backward
/// passes until zeroed by the optimizer step.
struct Parameter {
  std::string name;
  Array value;
  Array grad;
  bool trainable = true;

  Parameter(std::string n, Array v, bool t = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape), trainable(t) {}
};

/// Registry owning parameters in stable registration order (the order defines
/// checkpoint layout and the flat gradient vector used by clipping/Adam).
class ParamStore {
 public:
  Parameter* add(std::string name, Array init, bool trainable = true) {
    params_.emplace_back(std::move(name), std::move(init), trainable);
    return &params_.back();
  }

  Parameter* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grads() {
    for (auto& p : params_)
      for (double& g : p.grad.data) g = 0.0;
  }

  size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;  // deque: pointers stay valid as params are added
};

enum class Mode { kTrain, kEval };

/// Batch-norm per-feature state. All four pieces live in a ParamStore so
/// checkpoints capture them; the running statistics are non-trainable and are
/// updated in place during training forward passes.
struct BatchNormState {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;
  double eps = 1e-5;
  double momentum = 0.1;
};

class Tape;

/// Handle to a node on a tape; cheap to copy, valid while the tape lives.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr; }
  const Array& value() const;
  const std::vector<int>& shape() const { return value().shape; }
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
};

/// Define-by-run reverse-mode tape. Each operation records its result and a
/// closure that scatters the result's gradient to its inputs; backward()
/// replays the recording in reverse. Tapes are single-threaded and rebuilt for
/// every forward pass; every op validates shapes and finite values eagerly so
/// failures point at the op that produced them.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable input.
  Tensor leaf(Array value);
  /// Differentiable leaf bound to a parameter. Repeated calls with the same
  /// parameter return the same node, so each use shares the node's gradient.
  Tensor param(Parameter& p);

  // --- elementwise and linear algebra ---
  Tensor matmul(Tensor a, Tensor b);
  /// a^T * b without materializing the transpose.
  Tensor matmul_ta(Tensor a, Tensor b);
  Tensor add(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);
  Tensor scalar_mul(Tensor a, double c);
  Tensor scalar_add(Tensor a, double c);
  /// Multiply / shift by a one-element tensor (gradients flow to it too).
  Tensor scale_by(Tensor a, Tensor s);
  Tensor shift_by(Tensor a, Tensor s);
  Tensor relu(Tensor a);
  /// x*w + b broadcast over rows; the affine core of every MLP layer.
  Tensor linear(Tensor x, Tensor w, Tensor b);

  // --- row-wise transforms ---
  /// Softmax per row. With col_mask (length cols, 0/1), masked columns get
  /// probability zero and the normalization runs over unmasked entries.
  Tensor row_softmax(Tensor a, const Array* col_mask = nullptr);
  /// Divide each row by max(l2-norm, eps).
  Tensor row_l2_normalize(Tensor a, double eps = 1e-12);
  /// Batch norm over rows. In kTrain with >=2 unmasked rows, batch statistics
  /// are used and running stats updated; otherwise running stats are used.
  /// Masked rows produce zero output and contribute nothing to statistics.
  Tensor batch_norm(Tensor a, BatchNormState& st, Mode mode, const Array* row_mask = nullptr);

  // --- reductions ---
  Tensor reduce_sum(Tensor a);  // -> shape {1}
  /// Column-wise max over (unmasked) rows -> shape {cols}. Ties resolve to the
  /// lowest row index, which fixes the subgradient deterministically.
  Tensor max_over_rows(Tensor a, const Array* row_mask = nullptr);
  /// Mean over (unmasked) rows of the entropy -sum_j p*ln(p) -> shape {1}.
  Tensor row_entropy_mean(Tensor p, const Array* row_mask = nullptr);

  // --- shape plumbing ---
  Tensor concat(std::span<const Tensor> vecs);                    // rank-1 concat
  Tensor stack_rows(std::span<const Tensor> vecs);                // k vectors {d} -> {k,d}
  Tensor concat_rows(std::span<const Tensor> mats);               // {n_i,d} -> {sum n_i, d}
  Tensor slice_rows(Tensor a, int row_begin, int row_end);        // half-open

  /// sum_i theta_i * entry_i + bias (entries share one shape; theta has one
  /// coefficient per entry; bias is a one-element tensor added everywhere).
  Tensor multiset_combine(std::span<const Tensor> entries, Tensor theta, Tensor bias);

  /// Row/column scaling by a constant vector (masking; no gradient to the mask).
  Tensor scale_rows(Tensor a, const Array& s);
  Tensor scale_cols(Tensor a, const Array& s);

  // --- losses ---
  /// Mean over rows of softmax cross-entropy against integer labels -> {1}.
  Tensor mean_softmax_cross_entropy(Tensor logits, const std::vector<int>& labels);

  /// Reverse sweep from a one-element node. Gradients land in node buffers and
  /// accumulate into bound trainable parameters.
  void backward(Tensor loss);

  const Array& value(Tensor t) const { return node(t.id).value; }
  /// Gradient buffer of a node; valid after backward(), zero-shaped before.
  const Array& grad(Tensor t) const { return node(t.id).grad; }
  size_t size() const { return nodes_.size(); }

 private:
  friend struct Tensor;

  struct Node {
    Array value;
    Array grad;  // allocated lazily during backward
    std::vector<int> parents;
    std::function<void(Tape&, const Node&)> back;  // null for leaves
    Parameter* bound = nullptr;
    bool needs_grad = false;
  };

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  Array& grad_of(int id) { return nodes_[static_cast<size_t>(id)].grad; }

  int push(Array value, std::vector<int> parents, std::function<void(Tape&, const Node&)> back,
           const char* op_name);
  Tensor wrap(int id) { return Tensor{this, id}; }
  void check_same_tape(Tensor t) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

inline const Array& Tensor::value() const { return tape->value(*this); }

}  // namespace muchgcn
