#pragma once

// Dense row-major matrices with a reverse-mode recording tape.
//
// Everything is rank-2: a vector of c values is a 1 x c Array. A Tape records
// one forward pass; Var is a handle into it. Parameters live outside the tape
// and receive accumulated gradients when backward() runs, so several tapes
// can contribute to one minibatch before the optimizer steps.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cfie::num {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(Shape shape);

class Array {
 public:
  Array() = default;
  Array(std::size_t rows, std::size_t cols, double fill = 0.0);
  explicit Array(Shape shape, double fill = 0.0) : Array(shape.rows, shape.cols, fill) {}
  Array(Shape shape, std::vector<double> data);

  static Array row_vector(std::vector<double> values);
  static Array from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Array identity(std::size_t n);

  Shape shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * shape_.cols, shape_.cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * shape_.cols, shape_.cols};
  }
  Array row_copy(std::size_t r) const;

  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Array&, const Array&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct Parameter {
  std::string name;
  Array value;
  Array grad;

  void zero_grad() { grad.fill(0.0); }
};

/// Owns parameters with stable addresses, in insertion order.
class ParameterSet {
 public:
  Parameter& add(std::string name, Array value);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform(-bound, bound) fill with a Glorot bound when `bound` <= 0.
void init_uniform(Array& a, std::mt19937_64& rng, double bound = 0.0);

class Tape;

class Var {
 public:
  Var() = default;

  const Array& value() const;
  Shape shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  enum class Mode { Record, Inference };
  using Backward = std::function<void(Tape&, int self)>;

  explicit Tape(Mode mode = Mode::Record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::Record; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Array value);
  /// Leaf bound to `p`; repeated calls return the same node. Gradients flow
  /// straight into p.grad.
  Var parameter(Parameter& p);

  /// Seeds d(loss)=1 and propagates. `loss` must be 1x1.
  void backward(Var loss);

  const Array& value(int id) const;
  /// Empty when no gradient reached the node.
  const Array& grad(Var v) const;

  // Op-author interface.
  Var record(Array value, std::initializer_list<Var> inputs, Backward backward);
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  Array& grad_buffer(int id);

 private:
  struct Node {
    Array value;
    const Array* external = nullptr;
    Parameter* param = nullptr;
    Array grad;
    bool requires_grad = false;
    Backward backward;
  };

  Mode mode_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// Differentiable ops. Shape mismatches throw DimensionError naming both shapes.
Var matmul(Var a, Var b);
/// a * b^T, so an (n x d) batch times a (c x d) weight gives (n x c).
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1 x c row to every row of an n x c matrix.
Var add_bias(Var a, Var bias);
Var repeat_rows(Var row, std::size_t n);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var gather_rows(Var table, std::vector<std::size_t> ids);
Var mean_rows(Var a);
Var sum(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
/// axis 1 normalizes each row, axis 0 each column.
Var softmax(Var a, int axis = 1);
/// Mean over rows of -log softmax(row)[gold]. Returns 1x1.
Var cross_entropy(Var logits, std::span<const int> golds);

/// One LSTM direction over the rows of `inputs` (n x f). Gate order i, f, g, o
/// in the 4h columns of w_ih (f x 4h), w_hh (h x 4h), bias (1 x 4h). Output row
/// t is the hidden state at token t regardless of direction.
Var lstm(Var inputs, Var w_ih, Var w_hh, Var bias, bool reverse);

// Plain value helpers.
double cross_entropy(std::span<const double> logits, int gold);
std::vector<double> softmax(std::span<const double> logits);
double sigmoid(double x);

}  // namespace cfie::num
