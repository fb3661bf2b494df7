#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "genderfuse/rng.hpp"

namespace genderfuse {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(T v);
  // New shape must have the same element count.
  void reshape(Shape shape);

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

// A trainable array with its gradient buffer.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool decay = false;      // included in the L2 penalty
  bool trainable = true;   // updated by the optimizer

  Param() = default;
  Param(std::string n, Tensor<T> v, bool decay_ = false)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), decay(decay_) {}

  void zero_grad();
};

enum class Mode { kTrain, kEval };
enum class Padding { kSame, kValid };

struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

// Records operations during a forward pass and replays them in reverse.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  Var constant(Tensor<T> value);
  Var variable(Tensor<T> value);
  // Gradients accumulate into p.grad, which the caller zeroes between steps.
  Var param(Param<T>& p);

  const Tensor<T>& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  // Gradient buffer of `v`, zero-initialized on first access.
  Tensor<T>& grad(Var v);

  // Seeds d(out)/d(out) = 1 for a single-element `out` and propagates.
  void backward(Var out);

  Var record(Tensor<T> value, bool requires_grad, Backward fn);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Param<T>* param = nullptr;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

// Kernels ------------------------------------------------------------------

// Row i of the result is table[ids[i]]; ids must lie in [0, V).
template <typename T>
Var embedding_lookup(Tape<T>& tape, Var table, std::span<const std::int32_t> ids);

// As embedding_lookup, but a negative id yields a zero row.
template <typename T>
Var gather_rows(Tape<T>& tape, Var table, std::span<const std::int32_t> ids);

// Concatenates rank-2 operands with equal row counts along columns.
template <typename T>
Var concat_cols(Tape<T>& tape, std::span<const Var> parts);

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape);

// input [n x c_in] or [B x n x c_in]; filters [w x c_in x c_out]; bias [c_out].
// Same padding uses offset (w-1)/2 with zeros outside [0, n).
template <typename T>
Var conv1d(Tape<T>& tape, Var input, Var filters, Var bias, Padding padding);

template <typename T>
Var relu(Tape<T>& tape, Var x);

// input [n x c] (one valid length, result [c]) or [B x n x c] (result [B x c]).
// The gradient goes to the first maximal position only.
template <typename T>
Var max_over_time(Tape<T>& tape, Var input, std::span<const std::size_t> valid_lens);

// [b x f_in] * [f_in x f_out] + bias.
template <typename T>
Var dense(Tape<T>& tape, Var x, Var weights, Var bias);

template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

// Train mode normalizes by the (biased) batch statistics and folds them into
// the running averages: running = momentum * running + (1 - momentum) * batch.
template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, BatchNormStats<T>& stats,
               Mode mode, double momentum, double eps);

// Inverted dropout; identity in eval mode or at rate 0.
template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, Mode mode, Rng& rng);

template <typename T>
struct SoftmaxXent {
  Var loss;          // mean negative log-likelihood, shape [1]
  Tensor<T> probs;   // [b x k]
};

template <typename T>
SoftmaxXent<T> softmax_xent(Tape<T>& tape, Var logits, std::span<const int> labels);

// lambda * sum of squares over all operands, shape [1].
template <typename T>
Var l2_penalty(Tape<T>& tape, std::span<const Var> weights, double lambda);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

template <typename T>
Var sum(Tape<T>& tape, Var x);

// Row-wise softmax without a tape.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits);

// Optimizers ----------------------------------------------------------------

enum class OptimizerKind { kAdam, kSgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction (plain SGD when configured). Moment buffers are
// bound to parameters by position in the span passed to step().
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  // Throws DataError naming the first parameter with a non-finite gradient,
  // before any parameter is modified.
  void step(std::span<Param<T>* const> params);

  std::uint64_t steps() const { return step_; }
  const OptimizerConfig& config() const { return config_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

 private:
  OptimizerConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
};

// Finite-difference verification ------------------------------------------

// A coordinate that fails at `step` is retried at step/10, step/100, ... up
// to `refinements` times, so a step that straddles a ReLU or max-pool kink
// does not count against a correct gradient.
struct GradCheckOptions {
  double step = 1e-4;
  std::size_t refinements = 2;
  double tolerance = 1e-4;
  std::size_t max_coords_per_tensor = 0;  // 0 checks every coordinate
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t coords_checked = 0;
  std::size_t failures = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;

  bool passed() const;
  double max_rel_error() const;
  std::string to_string() const;
};

double relative_error(double analytic, double numeric);

// Compares each parameter's analytic gradient (already in .grad) with the
// central difference (loss(w+h) - loss(w-h)) / 2h.
GradCheckReport grad_check(const std::function<double()>& loss,
                           std::span<Param<double>* const> params,
                           const GradCheckOptions& options = {});

}  // namespace genderfuse
