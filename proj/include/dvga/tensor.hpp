#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dvga {

/// Dense row-major real matrix. All values in the library are stored this way.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// The single random engine type used everywhere. Seeded explicitly by callers.
using Rng = std::mt19937_64;

/// Raised when a shape precondition of a primitive is violated.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation produces NaN/Inf or leaves its domain.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients produced by Tape::backward, indexed by node id.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Matrix> grads) : grads_(std::move(grads)) {}

  const Matrix& of(const Var& v) const;

 private:
  std::vector<Matrix> grads_;
};

/// Accumulator handed to backward closures. Lazily zero-initializes a slot
/// on first write so non-participating nodes cost nothing.
class GradSink {
 public:
  GradSink(std::vector<Matrix>& grads, const Tape& tape) : grads_(grads), tape_(tape) {}

  bool wants(std::size_t id) const;
  Matrix& slot(std::size_t id);

  template <typename Expr>
  void add(std::size_t id, const Expr& expr) {
    if (!wants(id)) return;
    Matrix& g = grads_[id];
    if (g.size() == 0) {
      g = expr;
    } else {
      g += expr;
    }
  }

 private:
  std::vector<Matrix>& grads_;
  const Tape& tape_;
};

using BackwardFn = std::function<void(const Matrix& grad_out, GradSink& sink)>;

/// Records primitive operations in topological order for reverse-mode
/// differentiation. Single-threaded; one tape per forward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var leaf(Matrix value);
  /// Leaf that never receives a gradient.
  Var constant(Matrix value);

  /// Records an op node. `backward` may be empty when no input requires grad.
  Var record(const char* op, Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Reverse sweep from a 1x1 loss. Every requires_grad leaf gets a gradient
  /// (zeros when it did not participate).
  Gradients backward(const Var& loss) const;

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(std::span<const Var> vars) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op;
    Matrix value;
    bool requires_grad;
    bool is_leaf;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

enum class Axis { kRows, kCols };

// Primitive set. Every op records itself on the tape of its first operand.
// Bias-style broadcast is limited to adding a 1 x cols row to every row.

Var matmul(const Var& a, const Var& b);
/// Constant sparse matrix times a Var.
Var matmul_sparse(std::shared_ptr<const SparseMatrix> a, const Var& b);
/// a * b^T without materializing the transpose.
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// a scaled by a 1x1 Var.
Var scale_by(const Var& a, const Var& factor);
Var add_scalar(const Var& a, double offset);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi);
/// Softmax along an axis: kCols normalizes each row, kRows each column.
Var softmax(const Var& a, Axis axis);
/// Row-wise L2 normalization; rows with norm below 1e-12 map to zero.
Var normalize_rows(const Var& a);
/// Row-wise L2 normalization of each of `blocks` equal-width column blocks.
Var normalize_blocks(const Var& a, Index blocks);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, Index begin, Index width);
Var reverse_cols(const Var& a);
/// Row-major reinterpretation to new dimensions.
Var reshape(const Var& a, Index rows, Index cols);
Var sum(const Var& a);
Var mean(const Var& a);
/// rows x 1 column of row sums.
Var row_sum(const Var& a);
/// rows x blocks matrix of per-block row sums.
Var block_sums(const Var& a, Index blocks);
/// Inverse of block_sums' layout: each column copied `width` times.
Var repeat_blocks(const Var& a, Index width);
Var gather_rows(const Var& a, std::span<const std::int64_t> index);
/// out[index[i]] += a[i]; result has `out_rows` rows.
Var scatter_add_rows(const Var& a, std::span<const std::int64_t> index, Index out_rows);
/// Column-wise softmax within contiguous row segments [offsets[s], offsets[s+1]).
Var segment_softmax(const Var& a, std::span<const std::int64_t> offsets);
/// Mean cross-entropy of row-wise softmax(logits) against integer labels.
Var cross_entropy_logits(const Var& logits, std::span<const int> labels);

double finite_or_throw(double x, const char* what);

/// True when no entry is NaN or infinite (x * 0 sums to exactly 0).
bool all_finite(const Matrix& m);

}  // namespace dvga
