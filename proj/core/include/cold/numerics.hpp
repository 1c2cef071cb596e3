#pragma once

// Dense 2-D arrays and a define-by-run reverse-mode tape.
//
// Every quantity handled by the decoder is a matrix: soft sequences are
// T x V, embeddings V x d, batched hidden states B x d, scalars 1 x 1.
// A Tape records operations as they are applied; backward() walks the
// records in reverse creation order, which is a valid topological order.

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "cold/error.hpp"

namespace cold {

#ifdef COLD_FLOAT32
using real = float;
#else
using real = double;
#endif

// Leaves elements default-initialized so op outputs skip a zero fill.
// Buffers are 64-byte aligned: vectorized reductions peel by address, so a
// fixed alignment keeps results bitwise reproducible across runs.
template <typename T>
struct DefaultInitAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  template <typename U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  DefaultInitAllocator() = default;
  template <typename U>
  DefaultInitAllocator(const DefaultInitAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }
  template <typename U>
  bool operator==(const DefaultInitAllocator<U>&) const noexcept {
    return true;
  }

  template <typename U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

class Array {
 public:
  Array() = default;
  Array(std::size_t rows, std::size_t cols, real fill = real{0});
  Array(std::size_t rows, std::size_t cols, std::vector<real> data);

  static Array scalar(real v) { return Array(1, 1, v); }
  // Contents unspecified; callers overwrite every element.
  static Array uninitialized(std::size_t rows, std::size_t cols);
  static Array from_rows(std::initializer_list<std::initializer_list<real>> rows);
  static Array identity(std::size_t n);

  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }

  std::span<real> values() { return data_; }
  std::span<const real> values() const { return data_; }
  std::span<real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const real> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool all_finite() const;
  void fill(real v);

  bool operator==(const Array&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<real, DefaultInitAllocator<real>> data_;
};

std::string shape_string(const Array& a);

enum class OpTag {
  leaf,
  constant,
  add,
  sub,
  mul,
  affine,
  matmul,
  add_row,
  softmax_rows,
  log_softmax_rows,
  log,
  exp,
  tanh,
  sigmoid,
  sum,
  mean,
  sum_cols,
  gather_rows,
  pick,
  minimum,
  concat_rows,
};

const char* op_name(OpTag tag);

class Tape;

// Lightweight handle to a node on a tape. Valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Array& value() const;
  const Array& grad() const;
  bool requires_grad() const;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves receive gradients; constants never do.
  Var leaf(Array value);
  Var constant(Array value);
  // Non-owning variants: the referenced array must outlive the tape and stay
  // unmodified while the tape is in use.
  Var leaf_ref(const Array& value);
  Var constant_ref(const Array& value);

  const Array& value(Var v) const;
  const Array& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.index].requires_grad; }
  OpTag tag(Var v) const { return nodes_[v.index].tag; }
  std::span<const std::size_t> parents(Var v) const { return nodes_[v.index].parents; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(out)/d(out) = 1 and accumulates gradients into every node that
  // depends on a leaf. Throws if `out` is not 1 x 1.
  void backward(Var out);

  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  // Used by the op implementations.
  Var record(OpTag tag, Array value, std::vector<std::size_t> parents, BackwardFn fn);
  Array& grad_mut(std::size_t index);
  const Array& value_at(std::size_t index) const;
  bool requires_grad_at(std::size_t index) const { return nodes_[index].requires_grad; }

 private:
  struct Node {
    Array owned;
    const Array* external = nullptr;
    Array grad;
    std::vector<std::size_t> parents;
    OpTag tag = OpTag::leaf;
    bool requires_grad = false;
    BackwardFn backward;

    const Array& value() const { return external ? *external : owned; }
  };
  std::vector<Node> nodes_;
};

// ---- operations -----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// Elementwise a * scale + shift.
Var affine(Var a, real scale, real shift = real{0});
inline Var scale(Var a, real s) { return affine(a, s, real{0}); }
Var matmul(Var a, Var b);
// Adds a 1 x n row to every row of an m x n matrix.
Var add_row(Var a, Var row);
// Row-wise softmax(a / tau).
Var softmax_rows(Var a, real tau = real{1});
// Row-wise log(softmax(a / tau)), computed stably.
Var log_softmax_rows(Var a, real tau = real{1});
Var log(Var a);
Var exp(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var sum(Var a);
Var mean(Var a);
// m x n -> m x 1, summing across columns.
Var sum_cols(Var a);
Var gather_rows(Var a, std::span<const std::size_t> rows);
// m x n -> m x 1 with element (i, cols[i]).
Var pick(Var a, std::span<const std::size_t> cols);
// Elementwise minimum; the gradient flows to the smaller operand, ties go to `a`.
Var minimum(Var a, Var b);
Var concat_rows(std::span<const Var> parts);

// ---- gradient checking ----------------------------------------------------

using ScalarGraphFn = std::function<Var(Tape&, Var)>;

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
};

// Compares the tape gradient of f at x against central differences with
// step h, returning max_i |analytic - numeric| / (|numeric| + 1e-8).
GradientCheck check_gradient(const ScalarGraphFn& f, const Array& x, double h = 1e-5);

// Evaluates f at x and returns the scalar value and gradient.
std::pair<double, Array> value_and_grad(const ScalarGraphFn& f, const Array& x);

}  // namespace cold
