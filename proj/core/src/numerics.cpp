#include "cold/numerics.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cold {

namespace {

using Matrix = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const Matrix>;
using Map = Eigen::Map<Matrix>;

MapC view(const Array& a) { return MapC(a.values().data(), Eigen::Index(a.rows()), Eigen::Index(a.cols())); }
Map view(Array& a) { return Map(a.values().data(), Eigen::Index(a.rows()), Eigen::Index(a.cols())); }

void require_same_shape(const char* op, const Array& a, const Array& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) {
    throw Error("operation on a Var that is not attached to a tape");
  }
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) {
    throw Error("operands belong to different tapes");
  }
  return tape_of(a);
}

}  // namespace

// ---- Array ----------------------------------------------------------------

Array::Array(std::size_t rows, std::size_t cols, real fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Array Array::uninitialized(std::size_t rows, std::size_t cols) {
  Array a;
  a.rows_ = rows;
  a.cols_ = cols;
  a.data_.resize(rows * cols);
  return a;
}

Array::Array(std::size_t rows, std::size_t cols, std::vector<real> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("array data length " + std::to_string(data_.size()) + " does not match shape [" +
                     std::to_string(rows_) + "x" + std::to_string(cols_) + "]");
  }
}

Array Array::from_rows(std::initializer_list<std::initializer_list<real>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<real> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw ShapeError("ragged initializer list");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return Array(r, c, std::move(data));
}

Array Array::identity(std::size_t n) {
  Array a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = 1;
  }
  return a;
}

bool Array::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](real v) { return std::isfinite(v); });
}

void Array::fill(real v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const Array& a) {
  std::ostringstream os;
  os << "[" << a.rows() << "x" << a.cols() << "]";
  return os.str();
}

const char* op_name(OpTag tag) {
  switch (tag) {
    case OpTag::leaf: return "leaf";
    case OpTag::constant: return "constant";
    case OpTag::add: return "add";
    case OpTag::sub: return "sub";
    case OpTag::mul: return "mul";
    case OpTag::affine: return "affine";
    case OpTag::matmul: return "matmul";
    case OpTag::add_row: return "add_row";
    case OpTag::softmax_rows: return "softmax_rows";
    case OpTag::log_softmax_rows: return "log_softmax_rows";
    case OpTag::log: return "log";
    case OpTag::exp: return "exp";
    case OpTag::tanh: return "tanh";
    case OpTag::sigmoid: return "sigmoid";
    case OpTag::sum: return "sum";
    case OpTag::mean: return "mean";
    case OpTag::sum_cols: return "sum_cols";
    case OpTag::gather_rows: return "gather_rows";
    case OpTag::pick: return "pick";
    case OpTag::minimum: return "minimum";
    case OpTag::concat_rows: return "concat_rows";
  }
  return "unknown";
}

// ---- Var / Tape -----------------------------------------------------------

const Array& Var::value() const { return tape->value(*this); }
const Array& Var::grad() const { return tape->grad(*this); }
bool Var::requires_grad() const { return tape->requires_grad(*this); }

Var Tape::leaf(Array value) {
  Node n;
  n.owned = std::move(value);
  n.tag = OpTag::leaf;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Array value) {
  Node n;
  n.owned = std::move(value);
  n.tag = OpTag::constant;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::leaf_ref(const Array& value) {
  Node n;
  n.external = &value;
  n.tag = OpTag::leaf;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::constant_ref(const Array& value) {
  Node n;
  n.external = &value;
  n.tag = OpTag::constant;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Array& Tape::value(Var v) const { return nodes_.at(v.index).value(); }

const Array& Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.index);
  if (!n.requires_grad) {
    throw Error("gradient requested for a node that does not depend on any leaf");
  }
  return n.grad;
}

const Array& Tape::value_at(std::size_t index) const { return nodes_[index].value(); }

Array& Tape::grad_mut(std::size_t index) { return nodes_[index].grad; }

Var Tape::record(OpTag tag, Array value, std::vector<std::size_t> parents, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  n.tag = tag;
  n.requires_grad = std::any_of(parents.begin(), parents.end(), [&](std::size_t p) { return nodes_[p].requires_grad; });
  n.parents = std::move(parents);
  if (n.requires_grad) {
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var out) {
  Node& root = nodes_.at(out.index);
  const Array& v = root.value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("backward requires a scalar output, got " + shape_string(v));
  }
  for (std::size_t i = 0; i <= out.index; ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) {
      const Array& val = n.value();
      if (n.grad.rows() != val.rows() || n.grad.cols() != val.cols()) {
        n.grad = Array(val.rows(), val.cols());
      } else {
        n.grad.fill(0);
      }
    }
  }
  if (!root.requires_grad) {
    return;
  }
  root.grad(0, 0) = 1;
  for (std::size_t i = out.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) {
      n.backward(*this, i);
    }
  }
}

// ---- ops ------------------------------------------------------------------

namespace {

// Accumulates `delta` into parent p's gradient when that parent needs one.
template <typename F>
void accumulate(Tape& t, std::size_t parent, F&& f) {
  if (t.requires_grad_at(parent)) {
    f(t.grad_mut(parent));
  }
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  require_same_shape("add", x, y);
  Array out = Array::uninitialized(x.rows(), x.cols());
  view(out) = view(x) + view(y);
  return t.record(OpTag::add, std::move(out), {a.index, b.index}, [ia = a.index, ib = b.index](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    accumulate(tp, ia, [&](Array& ga) { view(ga) += view(g); });
    accumulate(tp, ib, [&](Array& gb) { view(gb) += view(g); });
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  require_same_shape("sub", x, y);
  Array out = Array::uninitialized(x.rows(), x.cols());
  view(out) = view(x) - view(y);
  return t.record(OpTag::sub, std::move(out), {a.index, b.index}, [ia = a.index, ib = b.index](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    accumulate(tp, ia, [&](Array& ga) { view(ga) += view(g); });
    accumulate(tp, ib, [&](Array& gb) { view(gb) -= view(g); });
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  require_same_shape("mul", x, y);
  Array out = Array::uninitialized(x.rows(), x.cols());
  view(out) = view(x).cwiseProduct(view(y));
  return t.record(OpTag::mul, std::move(out), {a.index, b.index}, [ia = a.index, ib = b.index](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    accumulate(tp, ia, [&](Array& ga) { view(ga) += view(g).cwiseProduct(view(tp.value_at(ib))); });
    accumulate(tp, ib, [&](Array& gb) { view(gb) += view(g).cwiseProduct(view(tp.value_at(ia))); });
  });
}

Var affine(Var a, real scale, real shift) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  Array out = Array::uninitialized(x.rows(), x.cols());
  view(out) = (view(x) * scale).array() + shift;
  return t.record(OpTag::affine, std::move(out), {a.index}, [ia = a.index, scale](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    accumulate(tp, ia, [&](Array& ga) { view(ga) += view(g) * scale; });
  });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  if (x.cols() != y.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_string(x) + " vs " + shape_string(y));
  }
  Array out = Array::uninitialized(x.rows(), y.cols());
  view(out).noalias() = view(x) * view(y);
  return t.record(OpTag::matmul, std::move(out), {a.index, b.index}, [ia = a.index, ib = b.index](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    accumulate(tp, ia, [&](Array& ga) { view(ga).noalias() += view(g) * view(tp.value_at(ib)).transpose(); });
    accumulate(tp, ib, [&](Array& gb) { view(gb).noalias() += view(tp.value_at(ia)).transpose() * view(g); });
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const Array& x = a.value();
  const Array& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols()) {
    throw ShapeError("add_row: shape mismatch " + shape_string(x) + " vs " + shape_string(r));
  }
  Array out = Array::uninitialized(x.rows(), x.cols());
  view(out) = view(x).rowwise() + view(r).row(0);
  return t.record(OpTag::add_row, std::move(out), {a.index, row.index}, [ia = a.index, ir = row.index](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    accumulate(tp, ia, [&](Array& ga) { view(ga) += view(g); });
    accumulate(tp, ir, [&](Array& gr) { view(gr) += view(g).colwise().sum(); });
  });
}

namespace {

void check_tau(real tau) {
  if (!(tau > 0) || !std::isfinite(tau)) {
    throw DomainError("softmax temperature must be positive and finite");
  }
}

}  // namespace

Var softmax_rows(Var a, real tau) {
  check_tau(tau);
  Tape& t = tape_of(a);
  const Array& x = a.value();
  Array out = Array::uninitialized(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const real m = *std::max_element(in.begin(), in.end());
    real z = 0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp((in[c] - m) / tau);
      z += o[c];
    }
    for (auto& v : o) {
      v /= z;
    }
  }
  return t.record(OpTag::softmax_rows, std::move(out), {a.index}, [ia = a.index, tau](Tape& tp, std::size_t s) {
    accumulate(tp, ia, [&](Array& ga) {
      const Array& g = tp.grad_mut(s);
      const Array& y = tp.value_at(s);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row(r);
        auto gr = g.row(r);
        real dot = 0;
        for (std::size_t c = 0; c < yr.size(); ++c) {
          dot += gr[c] * yr[c];
        }
        auto out_r = ga.row(r);
        for (std::size_t c = 0; c < yr.size(); ++c) {
          out_r[c] += yr[c] * (gr[c] - dot) / tau;
        }
      }
    });
  });
}

Var log_softmax_rows(Var a, real tau) {
  check_tau(tau);
  Tape& t = tape_of(a);
  const Array& x = a.value();
  Array out = Array::uninitialized(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const real m = *std::max_element(in.begin(), in.end());
    real z = 0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      z += std::exp((in[c] - m) / tau);
    }
    const real lse = std::log(z);
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = (in[c] - m) / tau - lse;
    }
  }
  return t.record(OpTag::log_softmax_rows, std::move(out), {a.index}, [ia = a.index, tau](Tape& tp, std::size_t s) {
    accumulate(tp, ia, [&](Array& ga) {
      const Array& g = tp.grad_mut(s);
      const Array& y = tp.value_at(s);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row(r);
        auto gr = g.row(r);
        real gsum = 0;
        for (real v : gr) {
          gsum += v;
        }
        auto out_r = ga.row(r);
        for (std::size_t c = 0; c < yr.size(); ++c) {
          out_r[c] += (gr[c] - std::exp(yr[c]) * gsum) / tau;
        }
      }
    });
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  Array out = Array::uninitialized(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0)) {
      throw DomainError("log of non-positive value " + std::to_string(x[i]) + " at flat index " + std::to_string(i));
    }
    out[i] = std::log(x[i]);
  }
  return t.record(OpTag::log, std::move(out), {a.index}, [ia = a.index](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    accumulate(tp, ia, [&](Array& ga) { view(ga) += view(g).cwiseQuotient(view(tp.value_at(ia))); });
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  Array out = Array::uninitialized(x.rows(), x.cols());
  view(out) = view(x).array().exp().matrix();
  return t.record(OpTag::exp, std::move(out), {a.index}, [ia = a.index](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    accumulate(tp, ia, [&](Array& ga) { view(ga) += view(g).cwiseProduct(view(tp.value_at(s))); });
  });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  Array out = Array::uninitialized(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::tanh(x[i]);
  }
  return t.record(OpTag::tanh, std::move(out), {a.index}, [ia = a.index](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    const Array& y = tp.value_at(s);
    accumulate(tp, ia, [&](Array& ga) {
      for (std::size_t i = 0; i < y.size(); ++i) {
        ga[i] += g[i] * (1 - y[i] * y[i]);
      }
    });
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  Array out = Array::uninitialized(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] >= 0 ? 1 / (1 + std::exp(-x[i])) : std::exp(x[i]) / (1 + std::exp(x[i]));
  }
  return t.record(OpTag::sigmoid, std::move(out), {a.index}, [ia = a.index](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    const Array& y = tp.value_at(s);
    accumulate(tp, ia, [&](Array& ga) {
      for (std::size_t i = 0; i < y.size(); ++i) {
        ga[i] += g[i] * y[i] * (1 - y[i]);
      }
    });
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  real total = 0;
  for (real v : x.values()) {
    total += v;
  }
  return t.record(OpTag::sum, Array::scalar(total), {a.index}, [ia = a.index](Tape& tp, std::size_t s) {
    const real g = tp.grad_mut(s)(0, 0);
    accumulate(tp, ia, [&](Array& ga) { view(ga).array() += g; });
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) {
    throw ShapeError("mean of an empty array");
  }
  return scale(sum(a), real{1} / static_cast<real>(n));
}

Var sum_cols(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  Array out = Array::uninitialized(x.rows(), 1);
  view(out) = view(x).rowwise().sum();
  return t.record(OpTag::sum_cols, std::move(out), {a.index}, [ia = a.index](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    accumulate(tp, ia, [&](Array& ga) { view(ga).colwise() += view(g).col(0); });
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  Array out = Array::uninitialized(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows()) {
      throw DomainError("gather_rows: row index " + std::to_string(rows[i]) + " out of range for " + shape_string(x));
    }
    std::copy_n(x.row(rows[i]).begin(), x.cols(), out.row(i).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return t.record(OpTag::gather_rows, std::move(out), {a.index}, [ia = a.index, idx = std::move(idx)](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    accumulate(tp, ia, [&](Array& ga) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = g.row(i);
        auto dst = ga.row(idx[i]);
        for (std::size_t c = 0; c < src.size(); ++c) {
          dst[c] += src[c];
        }
      }
    });
  });
}

Var pick(Var a, std::span<const std::size_t> cols) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  if (cols.size() != x.rows()) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " column indices for " + shape_string(x));
  }
  Array out = Array::uninitialized(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (cols[r] >= x.cols()) {
      throw DomainError("pick: column index " + std::to_string(cols[r]) + " out of range for " + shape_string(x));
    }
    out(r, 0) = x(r, cols[r]);
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  return t.record(OpTag::pick, std::move(out), {a.index}, [ia = a.index, idx = std::move(idx)](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    accumulate(tp, ia, [&](Array& ga) {
      for (std::size_t r = 0; r < idx.size(); ++r) {
        ga(r, idx[r]) += g(r, 0);
      }
    });
  });
}

Var minimum(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  require_same_shape("minimum", x, y);
  Array out = Array::uninitialized(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = y[i] < x[i] ? y[i] : x[i];
  }
  return t.record(OpTag::minimum, std::move(out), {a.index, b.index}, [ia = a.index, ib = b.index](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    const Array& x = tp.value_at(ia);
    const Array& y = tp.value_at(ib);
    accumulate(tp, ia, [&](Array& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(y[i] < x[i])) {
          ga[i] += g[i];
        }
      }
    });
    accumulate(tp, ib, [&](Array& gb) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (y[i] < x[i]) {
          gb[i] += g[i];
        }
      }
    });
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) {
    throw ShapeError("concat_rows of zero arrays");
  }
  Tape& t = tape_of(parts[0]);
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> parents;
  for (const Var& p : parts) {
    tape_of(parts[0], p);
    if (p.value().cols() != cols) {
      throw ShapeError("concat_rows: shape mismatch " + shape_string(parts[0].value()) + " vs " + shape_string(p.value()));
    }
    rows += p.value().rows();
    parents.push_back(p.index);
  }
  Array out = Array::uninitialized(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Array& v = p.value();
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(offset * cols));
    offset += v.rows();
  }
  std::vector<std::size_t> ps = parents;
  return t.record(OpTag::concat_rows, std::move(out), std::move(parents), [ps = std::move(ps)](Tape& tp, std::size_t s) {
    const Array& g = tp.grad_mut(s);
    std::size_t off = 0;
    for (std::size_t p : ps) {
      const std::size_t n = tp.value_at(p).size();
      accumulate(tp, p, [&](Array& gp) {
        for (std::size_t i = 0; i < n; ++i) {
          gp[i] += g[off + i];
        }
      });
      off += n;
    }
  });
}

// ---- gradient checking ----------------------------------------------------

std::pair<double, Array> value_and_grad(const ScalarGraphFn& f, const Array& x) {
  Tape tape;
  Var leaf = tape.leaf(x);
  Var out = f(tape, leaf);
  tape.backward(out);
  return {static_cast<double>(out.value()(0, 0)), leaf.grad()};
}

namespace {

double evaluate_at(const ScalarGraphFn& f, const Array& x) {
  Tape tape;
  Var c = tape.constant_ref(x);
  return static_cast<double>(f(tape, c).value()(0, 0));
}

}  // namespace

GradientCheck check_gradient(const ScalarGraphFn& f, const Array& x, double h) {
  if (!(h > 0)) {
    throw DomainError("check_gradient: step h must be positive");
  }
  const auto [value, analytic] = value_and_grad(f, x);
  if (!std::isfinite(value)) {
    throw NumericalError("check_gradient: non-finite function value at the base point");
  }
  GradientCheck result;
  Array probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const real saved = probe[i];
    double up = 0;
    double down = 0;
    try {
      probe[i] = saved + static_cast<real>(h);
      up = evaluate_at(f, probe);
      probe[i] = saved - static_cast<real>(h);
      down = evaluate_at(f, probe);
    } catch (const DomainError& e) {
      throw NumericalError("check_gradient: probing coordinate " + std::to_string(i) + " failed: " + e.what());
    }
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("check_gradient: non-finite function value when probing coordinate " + std::to_string(i));
    }
    const double numeric = (up - down) / (2 * h);
    const double err = std::abs(static_cast<double>(analytic[i]) - numeric) / (std::abs(numeric) + 1e-8);
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace cold
