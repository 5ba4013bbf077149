#include "cfie/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cfie/errors.hpp"

namespace cfie::num {

std::string to_string(Shape shape) {
  return "(" + std::to_string(shape.rows) + "x" + std::to_string(shape.cols) + ")";
}

namespace {

[[noreturn]] void shape_mismatch(const char* op, Shape a, Shape b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                       to_string(b));
}

void require_same(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_mismatch(op, a.shape(), b.shape());
}

void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw UsageError("operands recorded on different tapes");
}

// c += a * b with a (m x k), b (k x n).
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c += a * b^T with a (m x k), b (n x k).
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

// c += a^T * b with a (k x m), b (k x n).
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
                 std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename F, typename DF>
Var unary(Var a, F f, DF df_from_output) {
  const Array& av = a.value();
  Array out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, df_from_output](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Array& y = t.value(self);
    const Array& g = t.grad_buffer(self);
    Array& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * df_from_output(y[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Array

Array::Array(std::size_t rows, std::size_t cols, double fill)
    : shape_{rows, cols}, data_(rows * cols, fill) {}

Array::Array(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size())
    throw DimensionError("array data length " + std::to_string(data_.size()) +
                         " does not match shape " + to_string(shape_));
}

Array Array::row_vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array(Shape{1, n}, std::move(values));
}

Array Array::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Array::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Array(Shape{r, c}, std::move(data));
}

Array Array::identity(std::size_t n) {
  Array a(n, n);
  for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
  return a;
}

Array Array::row_copy(std::size_t r) const {
  auto src = row(r);
  return Array::row_vector(std::vector<double>(src.begin(), src.end()));
}

void Array::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Array::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// ParameterSet

Parameter& ParameterSet::add(std::string name, Array value) {
  if (index_.count(name)) throw UsageError("duplicate parameter name " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Array(value.shape());
  p->value = std::move(value);
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterSet::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw UsageError("unknown parameter " + std::string(name));
  return *params_[it->second];
}

const Parameter& ParameterSet::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw UsageError("unknown parameter " + std::string(name));
  return *params_[it->second];
}

bool ParameterSet::contains(std::string_view name) const {
  return index_.count(std::string(name)) > 0;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void init_uniform(Array& a, std::mt19937_64& rng, double bound) {
  if (bound <= 0.0) bound = std::sqrt(6.0 / static_cast<double>(a.rows() + a.cols()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : a.data()) v = dist(rng);
}

// ---------------------------------------------------------------------------
// Tape

const Array& Var::value() const {
  if (!tape_) throw UsageError("use of an empty Var");
  return tape_->value(id_);
}

Var Tape::constant(Array value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = recording();
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

const Array& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external ? *n.external : n.value;
}

const Array& Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.param) return n.param->grad;
  return n.grad;
}

Array& Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.param) {
    if (n.param->grad.shape() != n.param->value.shape()) n.param->grad = Array(n.param->value.shape());
    return n.param->grad;
  }
  if (n.grad.empty() && !n.value.empty()) n.grad = Array(n.value.shape());
  return n.grad;
}

Var Tape::record(Array value, std::initializer_list<Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (recording()) {
    for (const Var& v : inputs) {
      if (&v.tape() != this) throw UsageError("operands recorded on different tapes");
      if (nodes_[static_cast<std::size_t>(v.id())].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw UsageError("backward on a Var from another tape");
  if (loss.shape() != Shape{1, 1})
    throw UsageError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  if (!recording()) throw UsageError("backward on an inference-mode tape");
  Node& root = nodes_[static_cast<std::size_t>(loss.id())];
  if (!root.requires_grad) return;
  grad_buffer(loss.id())[0] += 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

// ---------------------------------------------------------------------------
// Ops

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.cols() != bv.rows()) shape_mismatch("matmul", av.shape(), bv.shape());
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Array out(m, n);
  gemm_acc(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, int self) {
    const Array& g = t.grad_buffer(self);
    if (t.requires_grad(ia)) {
      // dA += dC * B^T
      gemm_nt_acc(g.data().data(), t.value(ib).data().data(), t.grad_buffer(ia).data().data(), m,
                  n, k);
    }
    if (t.requires_grad(ib)) {
      // dB += A^T * dC
      gemm_tn_acc(t.value(ia).data().data(), g.data().data(), t.grad_buffer(ib).data().data(), m,
                  k, n);
    }
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.cols() != bv.cols()) shape_mismatch("matmul_nt", av.shape(), bv.shape());
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Array out(m, n);
  gemm_nt_acc(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, int self) {
    const Array& g = t.grad_buffer(self);  // m x n
    if (t.requires_grad(ia)) {
      // dA (m x k) += dC (m x n) * B (n x k)
      gemm_acc(g.data().data(), t.value(ib).data().data(), t.grad_buffer(ia).data().data(), m, n,
               k);
    }
    if (t.requires_grad(ib)) {
      // dB (n x k) += dC^T (n x m) * A (m x k)
      gemm_tn_acc(g.data().data(), t.value(ia).data().data(), t.grad_buffer(ib).data().data(), m,
                  n, k);
    }
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same("add", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  Array out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Array& g = t.grad_buffer(self);
    for (int id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      Array& gi = t.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same("sub", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  Array out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Array& g = t.grad_buffer(self);
    if (t.requires_grad(ia)) {
      Array& gi = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Array& gi = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same("mul", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  Array out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Array& g = t.grad_buffer(self);
    if (t.requires_grad(ia)) {
      const Array& bv = t.value(ib);
      Array& gi = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      const Array& av = t.value(ia);
      Array& gi = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  const Array& av = a.value();
  Array out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, s](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Array& g = t.grad_buffer(self);
    Array& gi = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * s;
  });
}

Var add_bias(Var a, Var bias) {
  require_same_tape(a, bias);
  const Array& av = a.value();
  const Array& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) shape_mismatch("add_bias", av.shape(), bv.shape());
  Array out(av.shape());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = av(r, c) + bv[c];
  const int ia = a.id(), ib = bias.id();
  return a.tape().record(std::move(out), {a, bias}, [ia, ib](Tape& t, int self) {
    const Array& g = t.grad_buffer(self);
    if (t.requires_grad(ia)) {
      Array& gi = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Array& gb = t.grad_buffer(ib);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    }
  });
}

Var repeat_rows(Var row, std::size_t n) {
  const Array& rv = row.value();
  if (rv.rows() != 1) throw DimensionError("repeat_rows expects a single row, got " + to_string(rv.shape()));
  Array out(n, rv.cols());
  for (std::size_t r = 0; r < n; ++r) std::copy(rv.data().begin(), rv.data().end(), out.row(r).begin());
  const int ia = row.id();
  return row.tape().record(std::move(out), {row}, [ia](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Array& g = t.grad_buffer(self);
    Array& gi = t.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gi[c] += g(r, c);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat_cols of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.rows() != rows) shape_mismatch("concat_cols", parts.front().shape(), p.shape());
    cols += p.cols();
  }
  Array out(rows, cols);
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Array& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(off));
    ids.push_back(p.id());
    offsets.push_back(off);
    off += pv.cols();
  }
  Tape& tape = parts.front().tape();
  std::size_t first = ids.size();
  for (std::size_t k = 0; k < ids.size(); ++k)
    if (tape.requires_grad(ids[k])) {
      first = k;
      break;
    }
  if (first == ids.size()) return tape.record(std::move(out), {}, {});
  // record() derives requires_grad from its listed inputs; listing one
  // grad-carrying part is enough, the closure handles all of them.
  return tape.record(std::move(out), {parts[first]}, [ids, offsets](Tape& t, int self) {
    const Array& g = t.grad_buffer(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Array& gi = t.grad_buffer(ids[k]);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < gi.cols(); ++c) gi(r, c) += g(r, offsets[k] + c);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat_rows of nothing");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.cols() != cols) shape_mismatch("concat_rows", parts.front().shape(), p.shape());
    rows += p.rows();
  }
  Array out(rows, cols);
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Array& pv = p.value();
    std::copy(pv.data().begin(), pv.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off * cols));
    ids.push_back(p.id());
    offsets.push_back(off);
    off += pv.rows();
  }
  Tape& tape = parts.front().tape();
  std::size_t first = ids.size();
  for (std::size_t k = 0; k < ids.size(); ++k)
    if (tape.requires_grad(ids[k])) {
      first = k;
      break;
    }
  if (first == ids.size()) return tape.record(std::move(out), {}, {});
  return tape.record(std::move(out), {parts[first]}, [ids, offsets](Tape& t, int self) {
    const Array& g = t.grad_buffer(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Array& gi = t.grad_buffer(ids[k]);
      const std::size_t base = offsets[k] * g.cols();
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[base + i];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Array& av = a.value();
  if (begin > end || end > av.rows())
    throw IndexError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + to_string(av.shape()));
  const std::size_t cols = av.cols();
  Array out(Shape{end - begin, cols},
            std::vector<double>(av.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                                av.data().begin() + static_cast<std::ptrdiff_t>(end * cols)));
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, begin, cols](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Array& g = t.grad_buffer(self);
    Array& gi = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gi[begin * cols + i] += g[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Array& av = a.value();
  if (begin > end || end > av.cols())
    throw IndexError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + to_string(av.shape()));
  Array out(av.rows(), end - begin);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = av(r, c);
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, begin](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Array& g = t.grad_buffer(self);
    Array& gi = t.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gi(r, begin + c) += g(r, c);
  });
}

Var gather_rows(Var table, std::vector<std::size_t> ids) {
  const Array& tv = table.value();
  const std::size_t cols = tv.cols();
  Array out(ids.size(), cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows())
      throw IndexError("gather_rows index " + std::to_string(ids[r]) + " out of range for " +
                       to_string(tv.shape()));
    auto src = tv.row(ids[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  const int it = table.id();
  return table.tape().record(std::move(out), {table}, [it, ids = std::move(ids)](Tape& t, int self) {
    if (!t.requires_grad(it)) return;
    const Array& g = t.grad_buffer(self);
    Array& gt = t.grad_buffer(it);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      auto dst = gt.row(ids[r]);
      auto src = g.row(r);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

Var mean_rows(Var a) {
  const Array& av = a.value();
  if (av.rows() == 0) throw DimensionError("mean_rows of an empty matrix");
  Array out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out[c] += av(r, c);
  const double inv = 1.0 / static_cast<double>(av.rows());
  for (auto& v : out.data()) v *= inv;
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, inv](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Array& g = t.grad_buffer(self);
    Array& gi = t.grad_buffer(ia);
    for (std::size_t r = 0; r < gi.rows(); ++r)
      for (std::size_t c = 0; c < gi.cols(); ++c) gi(r, c) += g[c] * inv;
  });
}

Var sum(Var a) {
  const Array& av = a.value();
  Array out(1, 1, std::accumulate(av.data().begin(), av.data().end(), 0.0));
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const double g = t.grad_buffer(self)[0];
    for (auto& v : t.grad_buffer(ia).data()) v += g;
  });
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_scalar, [](double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

Var softmax(Var a, int axis) {
  if (axis != 0 && axis != 1) throw UsageError("softmax axis must be 0 or 1");
  const Array& av = a.value();
  Array out(av.shape());
  const std::size_t outer = axis == 1 ? av.rows() : av.cols();
  const std::size_t inner = axis == 1 ? av.cols() : av.rows();
  auto at = [&](Array& m, std::size_t o, std::size_t i) -> double& {
    return axis == 1 ? m(o, i) : m(i, o);
  };
  for (std::size_t o = 0; o < outer; ++o) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inner; ++i) mx = std::max(mx, axis == 1 ? av(o, i) : av(i, o));
    double z = 0.0;
    for (std::size_t i = 0; i < inner; ++i) {
      double e = std::exp((axis == 1 ? av(o, i) : av(i, o)) - mx);
      at(out, o, i) = e;
      z += e;
    }
    for (std::size_t i = 0; i < inner; ++i) at(out, o, i) /= z;
  }
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, axis, outer, inner](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Array& y = t.value(self);
    const Array& g = t.grad_buffer(self);
    Array& gi = t.grad_buffer(ia);
    for (std::size_t o = 0; o < outer; ++o) {
      double dot = 0.0;
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = axis == 1 ? o * y.cols() + i : i * y.cols() + o;
        dot += g[k] * y[k];
      }
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = axis == 1 ? o * y.cols() + i : i * y.cols() + o;
        gi[k] += y[k] * (g[k] - dot);
      }
    }
  });
}

Var cross_entropy(Var logits, std::span<const int> golds) {
  const Array& lv = logits.value();
  if (golds.size() != lv.rows())
    throw DimensionError("cross_entropy: " + std::to_string(golds.size()) + " golds for logits " +
                         to_string(lv.shape()));
  if (lv.cols() < 2) throw DimensionError("cross_entropy needs at least 2 classes, got " + to_string(lv.shape()));
  if (lv.rows() == 0) throw DimensionError("cross_entropy over zero rows");
  Array probs(lv.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    const int g = golds[r];
    if (g < 0 || static_cast<std::size_t>(g) >= lv.cols())
      throw IndexError("gold class " + std::to_string(g) + " out of range for " +
                       std::to_string(lv.cols()) + " classes");
    auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      probs(r, c) = std::exp(row[c] - mx);
      z += probs(r, c);
    }
    for (std::size_t c = 0; c < row.size(); ++c) probs(r, c) /= z;
    total += -(row[static_cast<std::size_t>(g)] - mx - std::log(z));
  }
  const double inv = 1.0 / static_cast<double>(lv.rows());
  const int il = logits.id();
  std::vector<int> gold_copy(golds.begin(), golds.end());
  return logits.tape().record(
      Array(1, 1, total * inv), {logits},
      [il, inv, probs = std::move(probs), gold_copy = std::move(gold_copy)](Tape& t, int self) {
        if (!t.requires_grad(il)) return;
        const double g = t.grad_buffer(self)[0] * inv;
        Array& gl = t.grad_buffer(il);
        for (std::size_t r = 0; r < probs.rows(); ++r)
          for (std::size_t c = 0; c < probs.cols(); ++c) {
            const double target = static_cast<int>(c) == gold_copy[r] ? 1.0 : 0.0;
            gl(r, c) += g * (probs(r, c) - target);
          }
      });
}

Var lstm(Var inputs, Var w_ih, Var w_hh, Var bias, bool reverse) {
  const Array& x = inputs.value();
  const Array& wi = w_ih.value();
  const Array& wh = w_hh.value();
  const Array& b = bias.value();
  const std::size_t n = x.rows(), f = x.cols(), h = wh.rows();
  if (wi.rows() != f || wi.cols() != 4 * h) shape_mismatch("lstm w_ih", x.shape(), wi.shape());
  if (wh.cols() != 4 * h) shape_mismatch("lstm w_hh", wi.shape(), wh.shape());
  if (b.rows() != 1 || b.cols() != 4 * h) shape_mismatch("lstm bias", wi.shape(), b.shape());

  struct Saved {
    Array gates;   // n x 4h, post-activation
    Array cells;   // n x h
    Array tanh_c;  // n x h
  };
  auto saved = std::make_shared<Saved>();
  saved->gates = Array(n, 4 * h);
  saved->cells = Array(n, h);
  saved->tanh_c = Array(n, h);
  Array out(n, h);

  Array pre(n, 4 * h);
  gemm_acc(x.data().data(), wi.data().data(), pre.data().data(), n, f, 4 * h);
  std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0), gate(4 * h);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse ? n - 1 - step : step;
    for (std::size_t j = 0; j < 4 * h; ++j) gate[j] = pre(t, j) + b[j];
    gemm_acc(h_prev.data(), wh.data().data(), gate.data(), 1, h, 4 * h);
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = sigmoid_scalar(gate[j]);
      const double fg = sigmoid_scalar(gate[h + j]);
      const double gg = std::tanh(gate[2 * h + j]);
      const double og = sigmoid_scalar(gate[3 * h + j]);
      const double c = fg * c_prev[j] + ig * gg;
      const double tc = std::tanh(c);
      saved->gates(t, j) = ig;
      saved->gates(t, h + j) = fg;
      saved->gates(t, 2 * h + j) = gg;
      saved->gates(t, 3 * h + j) = og;
      saved->cells(t, j) = c;
      saved->tanh_c(t, j) = tc;
      out(t, j) = og * tc;
      c_prev[j] = c;
      h_prev[j] = og * tc;
    }
  }

  const int ix = inputs.id(), iwi = w_ih.id(), iwh = w_hh.id(), ib = bias.id();
  Tape& tape = inputs.tape();
  if (&w_ih.tape() != &tape || &w_hh.tape() != &tape || &bias.tape() != &tape)
    throw UsageError("operands recorded on different tapes");
  return tape.record(std::move(out), {inputs, w_ih, w_hh, bias},
                     [=](Tape& tp, int self) {
    const Array& g = tp.grad_buffer(self);
    const Array& xv = tp.value(ix);
    const Array& wiv = tp.value(iwi);
    const Array& whv = tp.value(iwh);
    const Array& hv = tp.value(self);
    Array dpre(n, 4 * h);
    std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0), dh(h);
    for (std::size_t step = 0; step < n; ++step) {
      // Walk backwards through processing order.
      const std::size_t t = reverse ? step : n - 1 - step;
      const bool has_prev = reverse ? t + 1 < n : t > 0;
      const std::size_t tp_idx = reverse ? t + 1 : t - 1;
      for (std::size_t j = 0; j < h; ++j) dh[j] = g(t, j) + dh_next[j];
      for (std::size_t j = 0; j < h; ++j) {
        const double ig = saved->gates(t, j);
        const double fg = saved->gates(t, h + j);
        const double gg = saved->gates(t, 2 * h + j);
        const double og = saved->gates(t, 3 * h + j);
        const double tc = saved->tanh_c(t, j);
        const double cp = has_prev ? saved->cells(tp_idx, j) : 0.0;
        const double dc = dh[j] * og * (1.0 - tc * tc) + dc_next[j];
        dpre(t, j) = dc * gg * ig * (1.0 - ig);
        dpre(t, h + j) = dc * cp * fg * (1.0 - fg);
        dpre(t, 2 * h + j) = dc * ig * (1.0 - gg * gg);
        dpre(t, 3 * h + j) = dh[j] * tc * og * (1.0 - og);
        dc_next[j] = dc * fg;
      }
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      // dh_prev = dpre_t * W_hh^T
      gemm_nt_acc(dpre.row(t).data(), whv.data().data(), dh_next.data(), 1, 4 * h, h);
      if (tp.requires_grad(iwh) && has_prev) {
        gemm_tn_acc(hv.row(tp_idx).data(), dpre.row(t).data(), tp.grad_buffer(iwh).data().data(), 1,
                    h, 4 * h);
      }
    }
    if (tp.requires_grad(ix))
      gemm_nt_acc(dpre.data().data(), wiv.data().data(), tp.grad_buffer(ix).data().data(), n, 4 * h, f);
    if (tp.requires_grad(iwi))
      gemm_tn_acc(xv.data().data(), dpre.data().data(), tp.grad_buffer(iwi).data().data(), n, f, 4 * h);
    if (tp.requires_grad(ib)) {
      Array& gb = tp.grad_buffer(ib);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < 4 * h; ++j) gb[j] += dpre(t, j);
    }
  });
}

// ---------------------------------------------------------------------------
// Value helpers

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

double cross_entropy(std::span<const double> logits, int gold) {
  if (logits.size() < 2) throw DimensionError("cross_entropy needs at least 2 classes");
  if (gold < 0 || static_cast<std::size_t>(gold) >= logits.size())
    throw IndexError("gold class " + std::to_string(gold) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return -(logits[static_cast<std::size_t>(gold)] - mx - std::log(z));
}

double sigmoid(double x) { return sigmoid_scalar(x); }

}  // namespace cfie::num
