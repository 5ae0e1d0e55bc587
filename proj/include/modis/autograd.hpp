#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "modis/kernels.hpp"
#include "modis/matrix.hpp"

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// Every backward rule is itself written with the differentiable ops below, so
// gradients returned by Tape::grad are ordinary Vars on the same tape and can
// be differentiated again. The zero-centered gradient penalty relies on this.
namespace modis::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const noexcept { return *tape_; }
  int id() const noexcept { return id_; }

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Value of a 1×1 node.
  double scalar() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Produces one gradient per parent given the gradient of the node's output.
/// Entries may be left invalid for parents that do not require a gradient.
using BackwardFn = std::function<std::vector<Var>(const Var& grad_out)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value) { return constant(Matrix(1, 1, value)); }
  /// A leaf that gradients can be requested for.
  Var variable(Matrix value);

  /// Gradients of the scalar `output` with respect to each of `wrt`. Results
  /// are differentiable Vars; inputs that `output` does not depend on get a
  /// zero constant.
  std::vector<Var> grad(const Var& output, std::span<const Var> wrt);

  std::size_t size() const noexcept { return nodes_.size(); }

  Var record(Matrix value, std::vector<Var> parents, BackwardFn backward);

 private:
  friend class Var;
  struct Node {
    Matrix value;
    bool requires_grad = false;
    std::vector<Var> parents;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

// Linear algebra.
Var matmul(const Var& a, const Var& b, kernels::Transpose ta = kernels::Transpose::no,
           kernels::Transpose tb = kernels::Transpose::no);
Var transpose(const Var& a);

// Elementwise, shapes must match.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var sigmoid(const Var& a);
/// ln(1 + e^x), evaluated stably.
Var softplus(const Var& a);
Var leaky_relu(const Var& a, double slope);
/// Clamp to [lo, hi]; zero gradient outside the interval.
Var clamp(const Var& a, double lo, double hi);
/// Elementwise product with a constant matrix (no gradient to the mask).
Var mul_const(const Var& a, const Matrix& mask);

// Reductions and broadcasts.
Var sum(const Var& a);       // -> 1×1
Var mean(const Var& a);      // -> 1×1
Var sum_rows(const Var& a);  // column sums, n×m -> 1×m
Var sum_cols(const Var& a);  // row sums, n×m -> n×1
Var broadcast_rows(const Var& a, std::size_t n);  // 1×m -> n×m
Var broadcast_cols(const Var& a, std::size_t m);  // n×1 -> n×m
Var add_bias(const Var& a, const Var& bias);      // n×m + 1×m

// Structural.
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);
/// Places `a` at rows [begin, begin + a.rows()) of a zero matrix with `total` rows.
Var pad_rows(const Var& a, std::size_t begin, std::size_t total);
Var vstack(std::span<const Var> blocks);
Var column(const Var& a, std::size_t j);  // n×m -> n×1
/// Places an n×1 `a` into column j of an n×m zero matrix.
Var scatter_column(const Var& a, std::size_t j, std::size_t m);

/// Row-wise log-softmax; the row max is treated as a constant shift.
Var log_softmax_rows(const Var& a);
Var softmax_rows(const Var& a);

}  // namespace modis::ad
