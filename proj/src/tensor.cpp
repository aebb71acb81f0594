#include "nevae/tensor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "nevae/error.h"

namespace nevae {

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                   shape_string(b));
}

[[noreturn]] void bad_shape(const char* op, const Shape& a, const char* expected) {
  throw ShapeError(std::string(op) + ": operand shape " + shape_string(a) + ", expected " +
                   expected);
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) bad_shape(op, t.shape(), "rank 2");
}

Tape& tape_of(Var a) { return *a.tape; }

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw Error("operands recorded on different tapes");
  return *a.tape;
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename F, typename DF>
Var unary(const char* op, Var a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return tape_of(a).record(op, std::move(y), {a.id},
                           [df](const Tape& tape, NodeId self, const Tensor& g,
                                std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             const Tensor& xv = tape.value(tape.input(self, 0));
                             const Tensor& yv = tape.value(self);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               (*in[0])[i] += g[i] * df(xv[i], yv[i]);
                           });
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(product(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size())
    throw ShapeError("tensor: shape " + shape_string(shape_) + " does not hold " +
                     std::to_string(data_.size()) + " values");
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  return 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  return 1;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---- Tape ------------------------------------------------------------------

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back({std::move(value), {}, {}, false});
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back({std::move(value), {}, {}, true});
  return {this, nodes_.size() - 1};
}

Var Tape::record(const char* op, Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
  bool needs = false;
  for (NodeId in : inputs) needs = needs || nodes_[in].requires_grad;
  if (!needs) backward = nullptr;
  nodes_.push_back({std::move(value), std::move(inputs), std::move(backward), needs});
  return {this, nodes_.size() - 1};
}

std::vector<Tensor> Tape::gradients(Var loss, std::span<const Var> params) const {
  if (loss.tape != this) throw Error("gradients: loss recorded on a different tape");
  const Tensor& lv = value(loss);
  if (lv.size() != 1)
    throw ShapeError("gradients: loss must be scalar, got shape " + shape_string(lv.shape()));

  std::vector<Tensor> grads(loss.id + 1);
  grads[loss.id] = Tensor::filled(lv.shape(), 1.0);
  std::vector<Tensor*> in_grads;
  for (NodeId id = loss.id + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (grads[id].empty() || !node.backward) continue;
    in_grads.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const NodeId in = node.inputs[i];
      if (!nodes_[in].requires_grad) continue;
      if (grads[in].empty()) grads[in] = Tensor(nodes_[in].value.shape());
      in_grads[i] = &grads[in];
    }
    node.backward(*this, id, grads[id], in_grads);
  }

  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Var& p : params) {
    if (p.tape != this) throw Error("gradients: parameter recorded on a different tape");
    if (p.id <= loss.id && !grads[p.id].empty()) {
      if (!grads[p.id].all_finite()) throw NumericError("gradients: non-finite gradient");
      out.push_back(grads[p.id]);
    } else {
      out.emplace_back(value(p).shape());
    }
  }
  return out;
}

std::vector<Tensor> gradients(Var loss, std::span<const Var> params) {
  return loss.tape->gradients(loss, params);
}

// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows())
    shape_mismatch("matmul", x.shape(), y.shape());
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += x(i, p) * y(p, j);
      out(i, j) = acc;
    }
  return tape.record("matmul", std::move(out), {a.id, b.id},
                     [m, k, n](const Tape& t, NodeId self, const Tensor& g,
                               std::span<Tensor* const> in) {
                       const Tensor& xv = t.value(t.input(self, 0));
                       const Tensor& yv = t.value(t.input(self, 1));
                       if (in[0])
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) acc += g(i, j) * yv(p, j);
                             (*in[0])(i, p) += acc;
                           }
                       if (in[1])
                         for (std::size_t p = 0; p < k; ++p)
                           for (std::size_t j = 0; j < n; ++j) {
                             double acc = 0.0;
                             for (std::size_t i = 0; i < m; ++i) acc += xv(i, p) * g(i, j);
                             (*in[1])(p, j) += acc;
                           }
                     });
}

namespace {

template <typename F>
Var binary_same_shape(const char* op, Var a, Var b, F f, double sign_b) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) shape_mismatch(op, x.shape(), y.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  return tape.record(op, std::move(out), {a.id, b.id},
                     [sign_b](const Tape&, NodeId, const Tensor& g, std::span<Tensor* const> in) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (in[0]) (*in[0])[i] += g[i];
                         if (in[1]) (*in[1])[i] += sign_b * g[i];
                       }
                     });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_same_shape("add", a, b, [](double x, double y) { return x + y; }, 1.0);
}

Var sub(Var a, Var b) {
  return binary_same_shape("sub", a, b, [](double x, double y) { return x - y; }, -1.0);
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) shape_mismatch("mul", x.shape(), y.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return tape.record("mul", std::move(out), {a.id, b.id},
                     [](const Tape& t, NodeId self, const Tensor& g, std::span<Tensor* const> in) {
                       const Tensor& xv = t.value(t.input(self, 0));
                       const Tensor& yv = t.value(t.input(self, 1));
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (in[0]) (*in[0])[i] += g[i] * yv[i];
                         if (in[1]) (*in[1])[i] += g[i] * xv[i];
                       }
                     });
}

Var add_row(Var a, Var row) {
  Tape& tape = tape_of(a, row);
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  if (x.rank() != 2 || r.size() != x.cols() || r.rank() > 2 || (r.rank() == 2 && r.rows() != 1))
    shape_mismatch("add_row", x.shape(), r.shape());
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = x(i, j) + r[j];
  return tape.record("add_row", std::move(out), {a.id, row.id},
                     [m, n](const Tape&, NodeId, const Tensor& g, std::span<Tensor* const> in) {
                       if (in[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
                       if (in[1])
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) (*in[1])[j] += g(i, j);
                     });
}

Var scale(Var a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_const(Var a, double c) {
  return unary(
      "add_const", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Var softplus(Var a) {
  return unary(
      "softplus", a, [](double x) { return softplus(x); },
      [](double x, double) {
        // Logistic sigmoid, evaluated without overflow.
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var square(Var a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  require_matrix("sum", x);
  if (axis > 1) bad_shape("sum", x.shape(), "axis 0 or 1");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out(axis == 0 ? Shape{1, n} : Shape{m, 1});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += x(i, j);
  return tape_of(a).record("sum", std::move(out), {a.id},
                           [m, n, axis](const Tape&, NodeId, const Tensor& g,
                                        std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j)
                                 (*in[0])(i, j) += g[axis == 0 ? j : i];
                           });
}

Var sum_all(Var a) {
  const Tensor& x = a.value();
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return tape_of(a).record("sum_all", Tensor::scalar(acc), {a.id},
                           [](const Tape&, NodeId, const Tensor& g, std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             const double gv = g[0];
                             for (double& v : in[0]->data()) v += gv;
                           });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& x = a.value();
  require_matrix("gather_rows", x);
  const std::size_t n = x.cols();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor out({idx.size(), n});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= x.rows())
      throw ShapeError("gather_rows: row " + std::to_string(idx[r]) + " out of range for " +
                       shape_string(x.shape()));
    for (std::size_t j = 0; j < n; ++j) out(r, j) = x(idx[r], j);
  }
  return tape_of(a).record("gather_rows", std::move(out), {a.id},
                           [idx = std::move(idx), n](const Tape&, NodeId, const Tensor& g,
                                                     std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             for (std::size_t r = 0; r < idx.size(); ++r)
                               for (std::size_t j = 0; j < n; ++j)
                                 (*in[0])(idx[r], j) += g(r, j);
                           });
}

Var gather(Var a, std::span<const std::size_t> index) {
  const Tensor& x = a.value();
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor out({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.size())
      throw ShapeError("gather: index " + std::to_string(idx[i]) + " out of range for " +
                       shape_string(x.shape()));
    out[i] = x[idx[i]];
  }
  return tape_of(a).record("gather", std::move(out), {a.id},
                           [idx = std::move(idx)](const Tape&, NodeId, const Tensor& g,
                                                  std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             for (std::size_t i = 0; i < idx.size(); ++i) (*in[0])[idx[i]] += g[i];
                           });
}

double logsumexp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - mx);
  return mx + std::log(acc);
}

Var logsumexp(Var a) {
  const Tensor& x = a.value();
  require_matrix("logsumexp", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (n == 0) bad_shape("logsumexp", x.shape(), "at least one column");
  Tensor out({m, 1});
  for (std::size_t i = 0; i < m; ++i) out[i] = logsumexp(x.data().subspan(i * n, n));
  return tape_of(a).record("logsumexp", std::move(out), {a.id},
                           [m, n](const Tape& t, NodeId self, const Tensor& g,
                                  std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             const Tensor& xv = t.value(t.input(self, 0));
                             const Tensor& yv = t.value(self);
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j)
                                 (*in[0])(i, j) += g[i] * std::exp(xv(i, j) - yv[i]);
                           });
}

Var logsumexp_all(Var a) {
  const Tensor& x = a.value();
  if (x.size() == 0) bad_shape("logsumexp_all", x.shape(), "non-empty");
  return tape_of(a).record("logsumexp_all", Tensor::scalar(logsumexp(x.data())), {a.id},
                           [](const Tape& t, NodeId self, const Tensor& g,
                              std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             const Tensor& xv = t.value(t.input(self, 0));
                             const double y = t.value(self)[0];
                             for (std::size_t i = 0; i < xv.size(); ++i)
                               (*in[0])[i] += g[0] * std::exp(xv[i] - y);
                           });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& tape = *parts[0].tape;
  const std::size_t m = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::vector<NodeId> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    if (p.tape != &tape) throw Error("concat_cols: operands on different tapes");
    if (x.rank() != 2 || x.rows() != m)
      shape_mismatch("concat_cols", parts[0].value().shape(), x.shape());
    widths.push_back(x.cols());
    ids.push_back(p.id);
    total += x.cols();
  }
  Tensor out({m, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, offset + j) = x(i, j);
    offset += x.cols();
  }
  return tape.record("concat_cols", std::move(out), std::move(ids),
                     [widths = std::move(widths), m, total](const Tape&, NodeId,
                                                            const Tensor& g,
                                                            std::span<Tensor* const> in) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (in[k])
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               (*in[k])(i, j) += g[i * total + off + j];
                         off += widths[k];
                       }
                     });
}

Var segment_logsumexp(Var a, std::span<const Segment> segments) {
  const Tensor& x = a.value();
  std::vector<Segment> segs(segments.begin(), segments.end());
  Tensor out({segs.size()});
  std::vector<double> buf;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const Segment& seg = segs[s];
    if (seg.index.empty()) throw ShapeError("segment_logsumexp: empty segment");
    if (!seg.offset.empty() && seg.offset.size() != seg.index.size())
      throw ShapeError("segment_logsumexp: offset length does not match index length");
    buf.resize(seg.index.size());
    for (std::size_t j = 0; j < seg.index.size(); ++j) {
      if (seg.index[j] >= x.size())
        throw ShapeError("segment_logsumexp: index out of range for " + shape_string(x.shape()));
      buf[j] = x[seg.index[j]] + (seg.offset.empty() ? 0.0 : seg.offset[j]);
    }
    out[s] = logsumexp(buf);
  }
  return tape_of(a).record(
      "segment_logsumexp", std::move(out), {a.id},
      [segs = std::move(segs)](const Tape& t, NodeId self, const Tensor& g,
                               std::span<Tensor* const> in) {
        if (!in[0]) return;
        const Tensor& xv = t.value(t.input(self, 0));
        const Tensor& yv = t.value(self);
        for (std::size_t s = 0; s < segs.size(); ++s) {
          const Segment& seg = segs[s];
          for (std::size_t j = 0; j < seg.index.size(); ++j) {
            const double off = seg.offset.empty() ? 0.0 : seg.offset[j];
            (*in[0])[seg.index[j]] += g[s] * std::exp(xv[seg.index[j]] + off - yv[s]);
          }
        }
      });
}

Var neighbor_sum(Var c, const WeightedAdjacency& adjacency) {
  const Tensor& x = c.value();
  require_matrix("neighbor_sum", x);
  const std::size_t n = x.rows(), d = x.cols();
  if (adjacency.size() != n)
    throw ShapeError("neighbor_sum: adjacency has " + std::to_string(adjacency.size()) +
                     " rows for operand " + shape_string(x.shape()));
  Tensor out({n, d});
  std::vector<std::vector<double>> terms;
  for (std::size_t u = 0; u < n; ++u) {
    terms.assign(adjacency[u].size(), std::vector<double>(d));
    for (std::size_t t = 0; t < adjacency[u].size(); ++t) {
      const auto [v, w] = adjacency[u][t];
      if (v >= n) throw ShapeError("neighbor_sum: neighbour index out of range");
      for (std::size_t j = 0; j < d; ++j) terms[t][j] = w * x(v, j);
    }
    std::sort(terms.begin(), terms.end());
    for (const auto& term : terms)
      for (std::size_t j = 0; j < d; ++j) out(u, j) += term[j];
  }
  return tape_of(c).record("neighbor_sum", std::move(out), {c.id},
                           [adjacency, d](const Tape&, NodeId, const Tensor& g,
                                          std::span<Tensor* const> in) {
                             if (!in[0]) return;
                             for (std::size_t u = 0; u < adjacency.size(); ++u)
                               for (const auto& [v, w] : adjacency[u])
                                 for (std::size_t j = 0; j < d; ++j)
                                   (*in[0])(v, j) += w * g(u, j);
                           });
}

}  // namespace nevae
