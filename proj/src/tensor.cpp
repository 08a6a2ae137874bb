#include "dvga/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

namespace dvga {
namespace {

constexpr double kNormEps = 1e-12;

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

Tape& tape_of(const Var& v) {
  if (!v.valid()) throw std::invalid_argument("operation on a detached Var");
  return *v.tape();
}

void same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("operands live on different tapes");
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double finite_or_throw(double x, const char* what) {
  if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
  return x;
}

const Matrix& Var::value() const {
  if (!valid()) throw std::invalid_argument("value() of a detached Var");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar() of non-1x1 value " + shape_str(v));
  return v(0, 0);
}

bool Var::requires_grad() const { return valid() && tape_->requires_grad(id_); }

const Matrix& Gradients::of(const Var& v) const {
  const bool missing = v.id() >= grads_.size() || grads_[v.id()].size() == 0;
  if (missing && v.rows() * v.cols() != 0) {
    throw std::invalid_argument("no gradient recorded for this Var (constant or non-ancestor)");
  }
  return grads_[v.id()];
}

bool GradSink::wants(std::size_t id) const { return tape_.requires_grad(id); }

Matrix& GradSink::slot(std::size_t id) {
  Matrix& g = grads_[id];
  if (g.size() == 0) g = Matrix::Zero(tape_.value(id).rows(), tape_.value(id).cols());
  return g;
}

bool all_finite(const Matrix& m) { return (m.array() * 0.0).sum() == 0.0; }

Var Tape::leaf(Matrix value) {
  if (!all_finite(value)) throw NumericError("non-finite leaf value");
  nodes_.push_back(Node{"leaf", std::move(value), true, true, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  if (!all_finite(value)) throw NumericError("non-finite constant value");
  nodes_.push_back(Node{"constant", std::move(value), false, true, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Matrix value, std::vector<std::size_t> inputs,
                 BackwardFn backward) {
  if (!all_finite(value)) throw NumericError(std::string("non-finite value produced by ") + op);
  bool grad = false;
  for (std::size_t id : inputs) grad = grad || nodes_[id].requires_grad;
  if (!grad) backward = nullptr;
  nodes_.push_back(Node{op, std::move(value), grad, false, std::move(inputs), std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

bool Tape::requires_grad(std::span<const Var> vars) const {
  return std::any_of(vars.begin(), vars.end(), [&](const Var& v) { return requires_grad(v.id()); });
}

Gradients Tape::backward(const Var& loss) const {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss is not on this tape");
  const Matrix& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be 1x1, got " + shape_str(lv));
  }
  std::vector<Matrix> grads(nodes_.size());
  GradSink sink(grads, *this);
  if (nodes_[loss.id()].requires_grad) grads[loss.id()] = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.requires_grad || node.is_leaf || !node.backward || grads[i].size() == 0) continue;
    node.backward(grads[i], sink);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf && nodes_[i].requires_grad && grads[i].size() == 0) {
      grads[i] = Matrix::Zero(nodes_[i].value.rows(), nodes_[i].value.cols());
    }
  }
  return Gradients(std::move(grads));
}

// ---------------------------------------------------------------------------

Var matmul_sparse(std::shared_ptr<const SparseMatrix> a, const Var& b) {
  const Matrix& bv = b.value();
  if (a->cols() != bv.rows()) {
    throw ShapeError("matmul_sparse: shapes " + std::to_string(a->rows()) + "x" +
                     std::to_string(a->cols()) + " and " + shape_str(bv));
  }
  Matrix out = *a * bv;
  const std::size_t ib = b.id();
  return tape_of(b).record("matmul_sparse", std::move(out), {ib},
                           [a, ib](const Matrix& g, GradSink& s) {
                             if (s.wants(ib)) s.add(ib, Matrix(a->transpose() * g));
                           });
}

Var matmul(const Var& a, const Var& b) {
  same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  Matrix out = av * bv;
  const std::size_t ia = a.id(), ib = b.id();
  Tape& t = tape_of(a);
  return t.record("matmul", std::move(out), {ia, ib}, [&t, ia, ib](const Matrix& g, GradSink& s) {
    if (s.wants(ia)) s.slot(ia).noalias() += g * t.value(ib).transpose();
    if (s.wants(ib)) s.slot(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) shape_fail("matmul_nt", av, bv);
  Matrix out = av * bv.transpose();
  const std::size_t ia = a.id(), ib = b.id();
  Tape& t = tape_of(a);
  return t.record("matmul_nt", std::move(out), {ia, ib},
                  [&t, ia, ib](const Matrix& g, GradSink& s) {
                    if (s.wants(ia)) s.slot(ia).noalias() += g * t.value(ib);
                    if (s.wants(ib)) s.slot(ib).noalias() += g.transpose() * t.value(ia);
                  });
}

Var transpose(const Var& a) {
  const std::size_t ia = a.id();
  return tape_of(a).record("transpose", a.value().transpose(), {ia},
                           [ia](const Matrix& g, GradSink& s) { s.add(ia, g.transpose()); });
}

Var add(const Var& a, const Var& b) {
  same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("add", a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record("add", a.value() + b.value(), {ia, ib},
                           [ia, ib](const Matrix& g, GradSink& s) {
                             s.add(ia, g);
                             s.add(ib, g);
                           });
}

Var add_row(const Var& a, const Var& row) {
  same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) shape_fail("add_row", a.value(), row.value());
  Matrix out = a.value().rowwise() + row.value().row(0);
  const std::size_t ia = a.id(), ir = row.id();
  return tape_of(a).record("add_row", std::move(out), {ia, ir},
                           [ia, ir](const Matrix& g, GradSink& s) {
                             s.add(ia, g);
                             s.add(ir, g.colwise().sum());
                           });
}

Var sub(const Var& a, const Var& b) {
  same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("sub", a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record("sub", a.value() - b.value(), {ia, ib},
                           [ia, ib](const Matrix& g, GradSink& s) {
                             s.add(ia, g);
                             s.add(ib, -g);
                           });
}

Var mul(const Var& a, const Var& b) {
  same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("mul", a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  Tape& t = tape_of(a);
  return t.record("mul", a.value().cwiseProduct(b.value()), {ia, ib},
                  [&t, ia, ib](const Matrix& g, GradSink& s) {
                    s.add(ia, g.cwiseProduct(t.value(ib)));
                    s.add(ib, g.cwiseProduct(t.value(ia)));
                  });
}

Var scale(const Var& a, double factor) {
  const std::size_t ia = a.id();
  return tape_of(a).record("scale", a.value() * factor, {ia},
                           [ia, factor](const Matrix& g, GradSink& s) { s.add(ia, g * factor); });
}

Var scale_by(const Var& a, const Var& factor) {
  same_tape(a, factor);
  const double f = factor.scalar();
  const std::size_t ia = a.id(), ifac = factor.id();
  Tape& t = tape_of(a);
  return t.record("scale_by", a.value() * f, {ia, ifac},
                  [&t, ia, ifac, f](const Matrix& g, GradSink& s) {
                    s.add(ia, g * f);
                    if (s.wants(ifac)) s.slot(ifac)(0, 0) += g.cwiseProduct(t.value(ia)).sum();
                  });
}

Var add_scalar(const Var& a, double offset) {
  const std::size_t ia = a.id();
  return tape_of(a).record("add_scalar", (a.value().array() + offset).matrix(), {ia},
                           [ia](const Matrix& g, GradSink& s) { s.add(ia, g); });
}

Var relu(const Var& a) {
  const std::size_t ia = a.id();
  Tape& t = tape_of(a);
  return t.record("relu", a.value().cwiseMax(0.0), {ia}, [&t, ia](const Matrix& g, GradSink& s) {
    s.add(ia, (t.value(ia).array() > 0.0).select(g, 0.0));
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  const std::size_t ia = a.id();
  auto y = std::make_shared<Matrix>(out);
  return tape_of(a).record("sigmoid", std::move(out), {ia}, [ia, y](const Matrix& g, GradSink& s) {
    s.add(ia, g.cwiseProduct(y->cwiseProduct((1.0 - y->array()).matrix())));
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  const std::size_t ia = a.id();
  Tape& t = tape_of(a);
  auto y = std::make_shared<Matrix>(out);
  return t.record("tanh", std::move(out), {ia}, [ia, y](const Matrix& g, GradSink& s) {
    s.add(ia, g.cwiseProduct((1.0 - y->array().square()).matrix()));
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp().matrix();
  const std::size_t ia = a.id();
  auto y = std::make_shared<Matrix>(out);
  return tape_of(a).record("exp", std::move(out), {ia}, [ia, y](const Matrix& g, GradSink& s) {
    s.add(ia, g.cwiseProduct(*y));
  });
}

Var log(const Var& a) {
  const Matrix& av = a.value();
  if ((av.array() <= 0.0).any()) throw NumericError("log: non-positive argument");
  const std::size_t ia = a.id();
  Tape& t = tape_of(a);
  return t.record("log", av.array().log().matrix(), {ia}, [&t, ia](const Matrix& g, GradSink& s) {
    s.add(ia, g.cwiseQuotient(t.value(ia)));
  });
}

Var square(const Var& a) {
  const std::size_t ia = a.id();
  Tape& t = tape_of(a);
  return t.record("square", a.value().array().square().matrix(), {ia},
                  [&t, ia](const Matrix& g, GradSink& s) {
                    s.add(ia, 2.0 * g.cwiseProduct(t.value(ia)));
                  });
}

Var clamp(const Var& a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  const std::size_t ia = a.id();
  Tape& t = tape_of(a);
  return t.record("clamp", a.value().cwiseMax(lo).cwiseMin(hi), {ia},
                  [&t, ia, lo, hi](const Matrix& g, GradSink& s) {
                    const auto& x = t.value(ia).array();
                    s.add(ia, (x > lo && x < hi).select(g, 0.0));
                  });
}

Var softmax(const Var& a, Axis axis) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  if (axis == Axis::kCols) {
    for (Index r = 0; r < av.rows(); ++r) {
      const double m = av.row(r).maxCoeff();
      out.row(r) = (av.row(r).array() - m).exp().matrix();
      out.row(r) /= out.row(r).sum();
    }
  } else {
    for (Index c = 0; c < av.cols(); ++c) {
      const double m = av.col(c).maxCoeff();
      out.col(c) = (av.col(c).array() - m).exp().matrix();
      out.col(c) /= out.col(c).sum();
    }
  }
  const std::size_t ia = a.id();
  auto y = std::make_shared<Matrix>(out);
  return tape_of(a).record("softmax", std::move(out), {ia},
                           [ia, y, axis](const Matrix& g, GradSink& s) {
                             const Matrix gy = g.cwiseProduct(*y);
                             if (axis == Axis::kCols) {
                               Eigen::VectorXd dot = gy.rowwise().sum();
                               s.add(ia, gy - (y->array().colwise() * dot.array()).matrix());
                             } else {
                               Eigen::RowVectorXd dot = gy.colwise().sum();
                               s.add(ia, gy - (y->array().rowwise() * dot.array()).matrix());
                             }
                           });
}

Var normalize_blocks(const Var& a, Index blocks) {
  const Matrix& av = a.value();
  if (blocks < 1 || av.cols() % blocks != 0) {
    throw ShapeError("normalize_blocks: " + std::to_string(av.cols()) +
                     " columns not divisible into " + std::to_string(blocks) + " blocks");
  }
  const Index width = av.cols() / blocks;
  Matrix out(av.rows(), av.cols());
  auto norms = std::make_shared<Matrix>(av.rows(), blocks);
  for (Index r = 0; r < av.rows(); ++r) {
    for (Index k = 0; k < blocks; ++k) {
      const auto seg = av.row(r).segment(k * width, width);
      const double n = seg.norm();
      (*norms)(r, k) = n;
      if (n < kNormEps) {
        out.row(r).segment(k * width, width).setZero();
      } else {
        out.row(r).segment(k * width, width) = seg / n;
      }
    }
  }
  const std::size_t ia = a.id();
  auto y = std::make_shared<Matrix>(out);
  return tape_of(a).record(
      "normalize_blocks", std::move(out), {ia},
      [ia, y, norms, blocks, width](const Matrix& g, GradSink& s) {
        if (!s.wants(ia)) return;
        Matrix& da = s.slot(ia);
        for (Index r = 0; r < g.rows(); ++r) {
          for (Index k = 0; k < blocks; ++k) {
            const double n = (*norms)(r, k);
            if (n < kNormEps) continue;
            const auto gy = g.row(r).segment(k * width, width);
            const auto yy = y->row(r).segment(k * width, width);
            const double dot = gy.dot(yy);
            da.row(r).segment(k * width, width) += (gy - dot * yy) / n;
          }
        }
      });
}

Var normalize_rows(const Var& a) { return normalize_blocks(a, 1); }

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  const Index rows = parts[0].rows();
  Index cols = 0;
  std::vector<std::size_t> ids;
  std::vector<Index> widths;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].value(), p.value());
    ids.push_back(p.id());
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return tape_of(parts[0]).record("concat_cols", std::move(out), ids,
                                  [ids, widths](const Matrix& g, GradSink& s) {
                                    Index at = 0;
                                    for (std::size_t i = 0; i < ids.size(); ++i) {
                                      if (s.wants(ids[i])) {
                                        s.slot(ids[i]) += g.middleCols(at, widths[i]);
                                      }
                                      at += widths[i];
                                    }
                                  });
}

Var slice_cols(const Var& a, Index begin, Index width) {
  if (begin < 0 || width < 0 || begin + width > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + width) + ") outside " + shape_str(a.value()));
  }
  const std::size_t ia = a.id();
  return tape_of(a).record("slice_cols", a.value().middleCols(begin, width), {ia},
                           [ia, begin, width](const Matrix& g, GradSink& s) {
                             if (s.wants(ia)) s.slot(ia).middleCols(begin, width) += g;
                           });
}

Var reverse_cols(const Var& a) {
  const std::size_t ia = a.id();
  return tape_of(a).record("reverse_cols", a.value().rowwise().reverse(), {ia},
                           [ia](const Matrix& g, GradSink& s) {
                             s.add(ia, g.rowwise().reverse());
                           });
}

Var reshape(const Var& a, Index rows, Index cols) {
  if (rows * cols != a.rows() * a.cols()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.value()) + " as " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const std::size_t ia = a.id();
  const Index r0 = a.rows(), c0 = a.cols();
  return tape_of(a).record("reshape", std::move(out), {ia},
                           [ia, r0, c0](const Matrix& g, GradSink& s) {
                             s.add(ia, Eigen::Map<const Matrix>(g.data(), r0, c0));
                           });
}

Var sum(const Var& a) {
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape_of(a).record("sum", std::move(out), {ia}, [ia, r, c](const Matrix& g, GradSink& s) {
    s.add(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.rows() * a.cols());
  if (n == 0) throw ShapeError("mean of an empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(const Var& a) {
  const std::size_t ia = a.id();
  const Index c = a.cols();
  Matrix out = a.value().rowwise().sum();
  return tape_of(a).record("row_sum", std::move(out), {ia}, [ia, c](const Matrix& g, GradSink& s) {
    if (s.wants(ia)) s.slot(ia).colwise() += g.col(0);
  });
}

Var block_sums(const Var& a, Index blocks) {
  const Matrix& av = a.value();
  if (blocks < 1 || av.cols() % blocks != 0) {
    throw ShapeError("block_sums: columns not divisible into blocks");
  }
  const Index width = av.cols() / blocks;
  Matrix out(av.rows(), blocks);
  for (Index k = 0; k < blocks; ++k) out.col(k) = av.middleCols(k * width, width).rowwise().sum();
  const std::size_t ia = a.id();
  return tape_of(a).record("block_sums", std::move(out), {ia},
                           [ia, blocks, width](const Matrix& g, GradSink& s) {
                             if (!s.wants(ia)) return;
                             Matrix& da = s.slot(ia);
                             for (Index k = 0; k < blocks; ++k) {
                               da.middleCols(k * width, width).colwise() += g.col(k);
                             }
                           });
}

Var repeat_blocks(const Var& a, Index width) {
  if (width < 1) throw ShapeError("repeat_blocks: width must be positive");
  const Matrix& av = a.value();
  const Index blocks = av.cols();
  Matrix out(av.rows(), blocks * width);
  for (Index k = 0; k < blocks; ++k) out.middleCols(k * width, width).colwise() = av.col(k);
  const std::size_t ia = a.id();
  return tape_of(a).record("repeat_blocks", std::move(out), {ia},
                           [ia, blocks, width](const Matrix& g, GradSink& s) {
                             if (!s.wants(ia)) return;
                             Matrix& da = s.slot(ia);
                             for (Index k = 0; k < blocks; ++k) {
                               da.col(k) += g.middleCols(k * width, width).rowwise().sum();
                             }
                           });
}

Var gather_rows(const Var& a, std::span<const std::int64_t> index) {
  const Matrix& av = a.value();
  Matrix out(static_cast<Index>(index.size()), av.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= av.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = av.row(index[i]);
  }
  const std::size_t ia = a.id();
  std::vector<std::int64_t> idx(index.begin(), index.end());
  return tape_of(a).record("gather_rows", std::move(out), {ia},
                           [ia, idx = std::move(idx)](const Matrix& g, GradSink& s) {
                             if (!s.wants(ia)) return;
                             Matrix& da = s.slot(ia);
                             for (std::size_t i = 0; i < idx.size(); ++i) {
                               da.row(idx[i]) += g.row(static_cast<Index>(i));
                             }
                           });
}

Var scatter_add_rows(const Var& a, std::span<const std::int64_t> index, Index out_rows) {
  const Matrix& av = a.value();
  if (static_cast<Index>(index.size()) != av.rows()) {
    throw ShapeError("scatter_add_rows: index length differs from row count");
  }
  Matrix out = Matrix::Zero(out_rows, av.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= out_rows) {
      throw ShapeError("scatter_add_rows: index out of range");
    }
    out.row(index[i]) += av.row(static_cast<Index>(i));
  }
  const std::size_t ia = a.id();
  std::vector<std::int64_t> idx(index.begin(), index.end());
  return tape_of(a).record("scatter_add_rows", std::move(out), {ia},
                           [ia, idx = std::move(idx)](const Matrix& g, GradSink& s) {
                             if (!s.wants(ia)) return;
                             Matrix& da = s.slot(ia);
                             for (std::size_t i = 0; i < idx.size(); ++i) {
                               da.row(static_cast<Index>(i)) += g.row(idx[i]);
                             }
                           });
}

Var segment_softmax(const Var& a, std::span<const std::int64_t> offsets) {
  const Matrix& av = a.value();
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != av.rows()) {
    throw ShapeError("segment_softmax: offsets must run from 0 to the row count");
  }
  Matrix out(av.rows(), av.cols());
  for (std::size_t sgm = 0; sgm + 1 < offsets.size(); ++sgm) {
    const Index b = offsets[sgm], len = offsets[sgm + 1] - b;
    if (len < 0) throw ShapeError("segment_softmax: offsets must be non-decreasing");
    if (len == 0) continue;
    auto block = av.middleRows(b, len);
    Eigen::RowVectorXd m = block.colwise().maxCoeff();
    auto e = out.middleRows(b, len);
    e = (block.rowwise() - m).array().exp().matrix();
    Eigen::RowVectorXd z = e.colwise().sum();
    e.array().rowwise() /= z.array();
  }
  const std::size_t ia = a.id();
  auto y = std::make_shared<Matrix>(out);
  std::vector<std::int64_t> off(offsets.begin(), offsets.end());
  return tape_of(a).record(
      "segment_softmax", std::move(out), {ia},
      [ia, y, off = std::move(off)](const Matrix& g, GradSink& s) {
        if (!s.wants(ia)) return;
        Matrix& da = s.slot(ia);
        for (std::size_t sgm = 0; sgm + 1 < off.size(); ++sgm) {
          const Index b = off[sgm], len = off[sgm + 1] - b;
          if (len == 0) continue;
          const Matrix gy = g.middleRows(b, len).cwiseProduct(y->middleRows(b, len));
          Eigen::RowVectorXd dot = gy.colwise().sum();
          da.middleRows(b, len) +=
              gy - (y->middleRows(b, len).array().rowwise() * dot.array()).matrix();
        }
      });
}

Var cross_entropy_logits(const Var& logits, std::span<const int> labels) {
  const Matrix& lv = logits.value();
  if (static_cast<Index>(labels.size()) != lv.rows()) {
    throw ShapeError("cross_entropy_logits: one label per row required");
  }
  if (lv.rows() == 0) throw ShapeError("cross_entropy_logits: empty batch");
  auto probs = std::make_shared<Matrix>(lv.rows(), lv.cols());
  double total = 0.0;
  for (Index r = 0; r < lv.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= lv.cols()) throw ShapeError("cross_entropy_logits: label out of range");
    const double m = lv.row(r).maxCoeff();
    const double z = (lv.row(r).array() - m).exp().sum();
    probs->row(r) = (lv.row(r).array() - m).exp().matrix() / z;
    total += -(lv(r, y) - m - std::log(z));
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(lv.rows());
  const std::size_t il = logits.id();
  std::vector<int> lab(labels.begin(), labels.end());
  return tape_of(logits).record(
      "cross_entropy_logits", std::move(out), {il},
      [il, probs, lab = std::move(lab)](const Matrix& g, GradSink& s) {
        if (!s.wants(il)) return;
        Matrix d = *probs;
        for (std::size_t r = 0; r < lab.size(); ++r) d(static_cast<Index>(r), lab[r]) -= 1.0;
        s.slot(il) += d * (g(0, 0) / static_cast<double>(lab.size()));
      });
}

}  // namespace dvga
