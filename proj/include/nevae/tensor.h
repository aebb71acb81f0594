#pragma once

// Dense row-major tensors with a reverse-mode autodiff tape.
//
// A Tape is rebuilt for every forward pass. Parameters live outside the tape
// as plain Tensors and are bound as leaves with Tape::variable(); gradients()
// then returns d(loss)/d(leaf) for the requested leaves.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nevae {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor filled(Shape shape, double value);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix view. Rank-1 tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }

  /// Value of a one-element tensor.
  double item() const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;
using NodeId = std::size_t;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Rule that accumulates input gradients given the output gradient.
/// `in_grads[i]` is null when input i does not require a gradient.
using BackwardFn = std::function<void(const Tape& tape, NodeId self, const Tensor& out_grad,
                                      std::span<Tensor* const> in_grads)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  NodeId input(NodeId id, std::size_t i) const { return nodes_[id].inputs[i]; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Appends an op node. Throws NumericError if `value` is not finite.
  Var record(const char* op, Tensor value, std::vector<NodeId> inputs, BackwardFn backward);

  /// Reverse sweep from a one-element `loss`. Leaves never reached get zeros.
  std::vector<Tensor> gradients(Var loss, std::span<const Var> params) const;

 private:
  struct Node {
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

std::vector<Tensor> gradients(Var loss, std::span<const Var> params);

// ---- forward ops -----------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a (m x n) plus a row vector of length n broadcast over rows.
Var add_row(Var a, Var row);
Var scale(Var a, double factor);
Var add_const(Var a, double c);
Var neg(Var a);
Var exp(Var a);
Var log(Var a);
/// log(1 + exp(x)) as max(x, 0) + log1p(exp(-|x|)).
Var softplus(Var a);
Var square(Var a);
/// Sum of a rank-2 tensor along `axis`; the reduced axis keeps size 1.
Var sum(Var a, std::size_t axis);
Var sum_all(Var a);
Var gather_rows(Var a, std::span<const std::size_t> rows);
/// Flat-index gather into a rank-1 result.
Var gather(Var a, std::span<const std::size_t> index);
/// Row-wise logsumexp of a rank-2 tensor, result m x 1.
Var logsumexp(Var a);
Var logsumexp_all(Var a);
Var concat_cols(std::span<const Var> parts);

struct Segment {
  std::vector<std::size_t> index;  // flat indices into the operand
  std::vector<double> offset;      // added before exponentiation; empty means zero
};
/// For each segment s: log sum_j exp(a[index_j] + offset_j). Rank-1 result.
Var segment_logsumexp(Var a, std::span<const Segment> segments);

/// Weighted neighbour lists: adjacency[u] = {(v, weight), ...}.
using WeightedAdjacency = std::vector<std::vector<std::pair<std::size_t, double>>>;
/// out[u] = sum over (v, w) in adjacency[u] of w * c[v]. Terms are added in
/// ascending lexicographic order of their values, so the result does not
/// depend on how neighbours are numbered.
Var neighbor_sum(Var c, const WeightedAdjacency& adjacency);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Plain softplus / logsumexp on doubles, shared by non-tape code paths.
double softplus(double x);
double logsumexp(std::span<const double> values);

}  // namespace nevae
