#include "modis/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "modis/error.hpp"

namespace modis::ad {

using kernels::Transpose;

namespace {

template <class F>
Matrix map(const Matrix& a, F f) {
  Matrix out(a.rows(), a.cols());
  auto src = a.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <class F>
Matrix zip(const Matrix& a, const Matrix& b, F f, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
  Matrix out(a.rows(), a.cols());
  auto x = a.values();
  auto y = b.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw Error("autograd: use of an invalid Var");
  return a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (&tape_of(b) != &t) throw Error("autograd: operands live on different tapes");
  return t;
}

Transpose flip(Transpose t) { return t == Transpose::no ? Transpose::yes : Transpose::no; }

// Backward rules receive the node itself and the incoming gradient.
using Rule = std::function<std::vector<Var>(const Var& self, const Var& g)>;

Var make(Tape& tape, Matrix value, std::vector<Var> parents, Rule rule) {
  // Tape::record hands the node id back only after creation, so the rule gets
  // its own node through a small indirection.
  auto self = std::make_shared<Var>();
  Var out = tape.record(std::move(value), std::move(parents),
                        [self, rule = std::move(rule)](const Var& g) { return rule(*self, g); });
  *self = out;
  return out;
}

}  // namespace

const Matrix& Var::value() const { return tape_->nodes_[static_cast<std::size_t>(id_)].value; }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar() on a " + shape_string(v) + " node");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->nodes_[static_cast<std::size_t>(id_)].requires_grad; }

Var Tape::constant(Matrix value) { return record(std::move(value), {}, nullptr); }

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), true, {}, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, std::vector<Var> parents, BackwardFn backward) {
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  Node node{std::move(value), needs, {}, nullptr};
  if (needs) {
    node.parents = std::move(parents);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

std::vector<Var> Tape::grad(const Var& output, std::span<const Var> wrt) {
  if (&tape_of(output) != this) throw Error("grad: output belongs to another tape");
  if (output.value().size() != 1) throw ShapeError("grad: output must be a scalar");

  const auto top = static_cast<std::size_t>(output.id());
  std::vector<Var> accum(top + 1);
  accum[top] = constant(1.0);
  for (std::size_t id = top + 1; id-- > 0;) {
    if (!accum[id].valid()) continue;
    const Node& node = nodes_[id];
    if (!node.requires_grad || !node.backward) continue;
    const std::vector<Var> parents = node.parents;
    const BackwardFn fn = node.backward;
    const std::vector<Var> grads = fn(accum[id]);
    for (std::size_t k = 0; k < parents.size(); ++k) {
      if (k >= grads.size() || !grads[k].valid() || !parents[k].requires_grad()) continue;
      auto pid = static_cast<std::size_t>(parents[k].id());
      accum[pid] = accum[pid].valid() ? add(accum[pid], grads[k]) : grads[k];
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto wid = static_cast<std::size_t>(w.id());
    if (wid <= top && accum[wid].valid()) {
      out.push_back(accum[wid]);
    } else {
      out.push_back(constant(Matrix(w.rows(), w.cols())));
    }
  }
  return out;
}

Var matmul(const Var& a, const Var& b, Transpose ta, Transpose tb) {
  Tape& t = tape_of(a, b);
  Matrix value = kernels::gemm(a.value(), ta, b.value(), tb);
  return make(t, std::move(value), {a, b}, [a, b, ta, tb](const Var&, const Var& g) {
    Var da, db;
    if (a.requires_grad()) {
      da = ta == Transpose::no ? matmul(g, b, Transpose::no, flip(tb)) : matmul(b, g, tb, Transpose::yes);
    }
    if (b.requires_grad()) {
      db = tb == Transpose::no ? matmul(a, g, flip(ta), Transpose::no) : matmul(g, a, Transpose::yes, ta);
    }
    return std::vector<Var>{da, db};
  });
}

Var transpose(const Var& a) {
  return make(tape_of(a), a.value().transposed(), {a},
              [](const Var&, const Var& g) { return std::vector<Var>{transpose(g)}; });
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return make(t, zip(a.value(), b.value(), std::plus<>{}, "add"), {a, b},
              [](const Var&, const Var& g) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return make(t, zip(a.value(), b.value(), std::minus<>{}, "sub"), {a, b},
              [b](const Var&, const Var& g) {
                return std::vector<Var>{g, b.requires_grad() ? neg(g) : Var{}};
              });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return make(t, zip(a.value(), b.value(), std::multiplies<>{}, "mul"), {a, b},
              [a, b](const Var&, const Var& g) {
                return std::vector<Var>{a.requires_grad() ? mul(g, b) : Var{},
                                        b.requires_grad() ? mul(g, a) : Var{}};
              });
}

Var div(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return make(t, zip(a.value(), b.value(), std::divides<>{}, "div"), {a, b},
              [a, b](const Var& self, const Var& g) {
                return std::vector<Var>{a.requires_grad() ? div(g, b) : Var{},
                                        b.requires_grad() ? neg(div(mul(g, self), b)) : Var{}};
              });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
  return make(tape_of(a), map(a.value(), [c](double x) { return c * x; }), {a},
              [c](const Var&, const Var& g) { return std::vector<Var>{scale(g, c)}; });
}

Var add_scalar(const Var& a, double c) {
  return make(tape_of(a), map(a.value(), [c](double x) { return x + c; }), {a},
              [](const Var&, const Var& g) { return std::vector<Var>{g}; });
}

Var exp(const Var& a) {
  return make(tape_of(a), map(a.value(), [](double x) { return std::exp(x); }), {a},
              [](const Var& self, const Var& g) { return std::vector<Var>{mul(g, self)}; });
}

Var log(const Var& a) {
  return make(tape_of(a), map(a.value(), [](double x) { return std::log(x); }), {a},
              [a](const Var&, const Var& g) { return std::vector<Var>{div(g, a)}; });
}

Var sqrt(const Var& a) {
  return make(tape_of(a), map(a.value(), [](double x) { return std::sqrt(x); }), {a},
              [](const Var& self, const Var& g) { return std::vector<Var>{div(scale(g, 0.5), self)}; });
}

Var sigmoid(const Var& a) {
  auto f = [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return make(tape_of(a), map(a.value(), f), {a}, [](const Var& self, const Var& g) {
    return std::vector<Var>{mul(g, mul(self, add_scalar(neg(self), 1.0)))};
  });
}

Var softplus(const Var& a) {
  auto f = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
  return make(tape_of(a), map(a.value(), f), {a},
              [a](const Var&, const Var& g) { return std::vector<Var>{mul(g, sigmoid(a))}; });
}

Var leaky_relu(const Var& a, double slope) {
  Matrix mask = map(a.value(), [slope](double x) { return x > 0 ? 1.0 : slope; });
  Matrix value = zip(a.value(), mask, std::multiplies<>{}, "leaky_relu");
  return make(tape_of(a), std::move(value), {a}, [mask = std::move(mask)](const Var&, const Var& g) {
    return std::vector<Var>{mul_const(g, mask)};
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Matrix mask = map(a.value(), [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
  Matrix value = map(a.value(), [lo, hi](double x) { return std::clamp(x, lo, hi); });
  return make(tape_of(a), std::move(value), {a}, [mask = std::move(mask)](const Var&, const Var& g) {
    return std::vector<Var>{mul_const(g, mask)};
  });
}

Var mul_const(const Var& a, const Matrix& mask) {
  Matrix value = zip(a.value(), mask, std::multiplies<>{}, "mul_const");
  return make(tape_of(a), std::move(value), {a},
              [mask](const Var&, const Var& g) { return std::vector<Var>{mul_const(g, mask)}; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t n = a.rows(), m = a.cols();
  return make(tape_of(a), Matrix(1, 1, s), {a}, [n, m](const Var&, const Var& g) {
    return std::vector<Var>{broadcast_rows(broadcast_cols(g, m), n)};
  });
}

Var mean(const Var& a) {
  const auto count = static_cast<double>(a.value().size());
  if (count == 0) throw ShapeError("mean of an empty matrix");
  return scale(sum(a), 1.0 / count);
}

Var sum_rows(const Var& a) {
  const std::size_t n = a.rows();
  return make(tape_of(a), kernels::col_sums(a.value()), {a},
              [n](const Var&, const Var& g) { return std::vector<Var>{broadcast_rows(g, n)}; });
}

Var sum_cols(const Var& a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v;
    out(i, 0) = s;
  }
  const std::size_t m = x.cols();
  return make(tape_of(a), std::move(out), {a},
              [m](const Var&, const Var& g) { return std::vector<Var>{broadcast_cols(g, m)}; });
}

Var broadcast_rows(const Var& a, std::size_t n) {
  const Matrix& x = a.value();
  if (x.rows() != 1) throw ShapeError("broadcast_rows expects a row vector, got " + shape_string(x));
  Matrix out(n, x.cols());
  for (std::size_t i = 0; i < n; ++i) std::copy(x.values().begin(), x.values().end(), out.row(i).begin());
  return make(tape_of(a), std::move(out), {a},
              [](const Var&, const Var& g) { return std::vector<Var>{sum_rows(g)}; });
}

Var broadcast_cols(const Var& a, std::size_t m) {
  const Matrix& x = a.value();
  if (x.cols() != 1) throw ShapeError("broadcast_cols expects a column vector, got " + shape_string(x));
  Matrix out(x.rows(), m);
  for (std::size_t i = 0; i < x.rows(); ++i) std::fill(out.row(i).begin(), out.row(i).end(), x(i, 0));
  return make(tape_of(a), std::move(out), {a},
              [](const Var&, const Var& g) { return std::vector<Var>{sum_cols(g)}; });
}

Var add_bias(const Var& a, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_bias: bias " + shape_string(bias.value()) + " for input " + shape_string(a.value()));
  }
  return add(a, broadcast_rows(bias, a.rows()));
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
  const std::size_t total = a.rows();
  return make(tape_of(a), a.value().slice_rows(begin, count), {a}, [begin, total](const Var&, const Var& g) {
    return std::vector<Var>{pad_rows(g, begin, total)};
  });
}

Var pad_rows(const Var& a, std::size_t begin, std::size_t total) {
  const Matrix& x = a.value();
  if (begin + x.rows() > total) throw ShapeError("pad_rows out of range");
  Matrix out(total, x.cols());
  std::copy(x.values().begin(), x.values().end(), out.data() + begin * x.cols());
  const std::size_t count = x.rows();
  return make(tape_of(a), std::move(out), {a}, [begin, count](const Var&, const Var& g) {
    return std::vector<Var>{slice_rows(g, begin, count)};
  });
}

Var vstack(std::span<const Var> blocks) {
  if (blocks.empty()) throw ShapeError("vstack of zero blocks");
  Tape& t = tape_of(blocks.front());
  std::vector<Matrix> values;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    if (&tape_of(b) != &t) throw Error("vstack: blocks on different tapes");
    values.push_back(b.value());
    offsets.push_back(offset);
    offset += b.rows();
  }
  std::vector<std::size_t> counts;
  for (const auto& v : values) counts.push_back(v.rows());
  return make(t, modis::vstack(values), std::vector<Var>(blocks.begin(), blocks.end()),
              [offsets, counts](const Var&, const Var& g) {
                std::vector<Var> out;
                for (std::size_t k = 0; k < offsets.size(); ++k) out.push_back(slice_rows(g, offsets[k], counts[k]));
                return out;
              });
}

Var column(const Var& a, std::size_t j) {
  const Matrix& x = a.value();
  if (j >= x.cols()) throw ShapeError("column index out of range");
  Matrix out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) out(i, 0) = x(i, j);
  const std::size_t m = x.cols();
  return make(tape_of(a), std::move(out), {a},
              [j, m](const Var&, const Var& g) { return std::vector<Var>{scatter_column(g, j, m)}; });
}

Var scatter_column(const Var& a, std::size_t j, std::size_t m) {
  const Matrix& x = a.value();
  if (x.cols() != 1 || j >= m) throw ShapeError("scatter_column: bad shape or index");
  Matrix out(x.rows(), m);
  for (std::size_t i = 0; i < x.rows(); ++i) out(i, j) = x(i, 0);
  return make(tape_of(a), std::move(out), {a},
              [j](const Var&, const Var& g) { return std::vector<Var>{column(g, j)}; });
}

Var log_softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix shift(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    const double mx = r.empty() ? 0.0 : *std::max_element(r.begin(), r.end());
    std::fill(shift.row(i).begin(), shift.row(i).end(), mx);
  }
  Tape& t = tape_of(a);
  Var shifted = sub(a, t.constant(std::move(shift)));
  Var lse = log(sum_cols(exp(shifted)));
  return sub(shifted, broadcast_cols(lse, x.cols()));
}

Var softmax_rows(const Var& a) { return exp(log_softmax_rows(a)); }

}  // namespace modis::ad
