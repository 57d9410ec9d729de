#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mimo/error.hpp"
#include "mimo/numerics/rng.hpp"

namespace mimo {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline void check_shape(const Shape& s, const char* where) {
  if (s.empty()) throw ShapeError(std::string(where) + ": empty shape");
  for (auto e : s)
    if (e == 0) throw ShapeError(std::string(where) + ": zero extent in " + shape_str(s));
}

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t tape_epoch = 0;  // nonzero iff produced by a recorded op

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

namespace fill {
struct Zeros {};
struct Ones {};
struct Constant {
  double value;
};
struct Uniform {
  double lo, hi;
};
struct Normal {
  double mean, stddev;
};
}  // namespace fill

using FillRule = std::variant<fill::Zeros, fill::Ones, fill::Constant, fill::Uniform, fill::Normal>;

/// Handle to a dense row-major float64 array.
///
/// Copies share storage. Operations never mutate their inputs; parameters are
/// the only tensors whose data is written in place (by the optimizer).
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : impl_(std::make_shared<TensorImpl>()) {
    check_shape(shape, "Tensor");
    if (shape_numel(shape) != data.size())
      throw ShapeError("Tensor: shape " + shape_str(shape) + " does not match " +
                       std::to_string(data.size()) + " values");
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
  }

  static Tensor build(const Shape& shape, const FillRule& rule, Rng* rng = nullptr) {
    check_shape(shape, "build");
    std::vector<double> data(shape_numel(shape), 0.0);
    std::visit(
        [&](const auto& r) {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, fill::Ones>) {
            std::fill(data.begin(), data.end(), 1.0);
          } else if constexpr (std::is_same_v<R, fill::Constant>) {
            if (!std::isfinite(r.value)) throw ShapeError("build: non-finite fill constant");
            std::fill(data.begin(), data.end(), r.value);
          } else if constexpr (std::is_same_v<R, fill::Uniform>) {
            if (!rng) throw ShapeError("build: uniform fill needs an rng");
            for (auto& v : data) v = rng->uniform(r.lo, r.hi);
          } else if constexpr (std::is_same_v<R, fill::Normal>) {
            if (!rng) throw ShapeError("build: normal fill needs an rng");
            for (auto& v : data) v = rng->normal(r.mean, r.stddev);
          }
        },
        rule);
    return Tensor(shape, std::move(data));
  }

  static Tensor zeros(const Shape& shape) { return build(shape, fill::Zeros{}); }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double item() const {
    if (numel() != 1) throw ShapeError("item: tensor is not a scalar");
    return impl_->data[0];
  }
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (!on) impl_->grad.clear();
    return *this;
  }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad() { impl_->grad.clear(); }

  // New storage, no graph history.
  Tensor clone() const { return Tensor(shape(), impl_->data); }
  Tensor detach() const { return clone(); }

  bool all_finite() const {
    for (double v : impl_->data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// One recorded operation. The closure holds input/output references and any
// intermediates saved for the backward rule.
struct TapeNode {
  const char* op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  std::function<void()> backward;
};

/// Append-only record of the forward pass, one per thread.
class Tape {
 public:
  static Tape& current() {
    thread_local Tape tape;
    return tape;
  }

  bool recording() const { return enabled_; }
  std::uint64_t epoch() const { return epoch_; }
  std::size_t size() const { return nodes_.size(); }

  void push(TapeNode node) {
    node.output->requires_grad = true;
    node.output->tape_epoch = epoch_;
    nodes_.push_back(std::move(node));
  }

  // Drops the recorded graph without running it.
  void reset() {
    nodes_.clear();
    ++epoch_;
  }

  void run_backward(TensorImpl& loss) {
    if (loss.data.size() != 1) throw ShapeError("backward: loss is not a scalar");
    if (loss.tape_epoch == 0) throw Error("backward: loss is detached from any recorded graph");
    if (loss.tape_epoch != epoch_)
      throw Error("backward: graph already consumed; run the forward pass again");
    loss.grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->output->grad.empty()) it->backward();
    }
    reset();
  }

  friend class NoGradGuard;

 private:
  std::vector<TapeNode> nodes_;
  std::uint64_t epoch_ = 1;
  bool enabled_ = true;
};

// Disables recording for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(Tape::current().enabled_) { Tape::current().enabled_ = false; }
  ~NoGradGuard() { Tape::current().enabled_ = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline void backward(const Tensor& loss) { Tape::current().run_backward(*loss.impl()); }

namespace detail {

inline bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::current().recording()) return false;
  for (auto* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

// Records `fn` as the backward rule of `out` when any input requires grad.
template <class Fn>
void record(const char* op, std::initializer_list<const Tensor*> inputs, const Tensor& out, Fn&& fn) {
  if (!needs_grad(inputs)) return;
  TapeNode node{op, {}, out.impl(), std::forward<Fn>(fn)};
  for (auto* t : inputs)
    if (t && t->defined()) node.inputs.push_back(t->impl());
  Tape::current().push(std::move(node));
}

}  // namespace detail
}  // namespace mimo
