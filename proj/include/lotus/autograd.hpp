#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation in creation order together with a closure
// that propagates the output gradient to its inputs. Creation order is a
// valid topological order, so backward() simply walks the nodes in reverse.
// Parameters are referenced, not copied; their gradients are accumulated
// into caller-provided buffers indexed by parameter number.

#include "lotus/corpus.hpp"
#include "lotus/matrix.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace lotus::ad {

struct Var {
  std::size_t id = 0;
};

// Which keys each query row may attend to: the first `key_len` keys, and with
// `causal` set only keys at positions <= the query position.
struct AttentionMask {
  std::size_t key_len = 0;
  bool causal = false;
};

class Tape {
public:
  // With record = false no backward closures are kept (inference mode).
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Matrix value);
  Var parameter(const Matrix& value, std::size_t param_index);

  const Matrix& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  // a[n x m] + row[1 x m] broadcast over rows
  Var add_row(Var a, Var row);
  Var scale(Var x, double s);
  Var gelu(Var x);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  // rows of table[V x d] selected by ids, times `scale`
  Var embedding(Var table, std::span<const TokenId> ids, double scale = 1.0);
  // Multi-head scaled dot-product attention; q [n x d], k and v [m x d].
  Var attention(Var q, Var k, Var v, std::size_t heads, AttentionMask mask);

  // Seeds d(output) with `seed` and propagates to every recorded node.
  // param_grads[i] receives the gradient of parameter i and must already
  // have that parameter's shape.
  void backward(Var output, const Matrix& seed, std::span<Matrix> param_grads);

private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool grad_ready = false;
    bool requires_grad = false;
    long param = -1;
    std::function<void(Tape&, Var)> backprop;
  };

  Var push(Matrix value, bool requires_grad, std::function<void(Tape&, Var)> backprop);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  Matrix& grad(Var v);

  std::deque<Node> nodes_;
  std::span<Matrix> param_grads_;
  bool record_ = true;
};

} // namespace lotus::ad
