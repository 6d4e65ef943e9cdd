#pragma once

// Dense N-D tensor with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto shared storage. Values are immutable once an
// op has produced them; only leaves (parameters, buffers) expose mutable data,
// and only gradients accumulate. Every op that sees an input with
// requires_grad records a node holding whatever it needs for backward.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace docbin {

#ifdef DOCBIN_F64
using Scalar = double;
#else
using Scalar = float;
#endif

using Shape = std::vector<std::int64_t>;

/// Raised when operand shapes are incompatible. The message names the dimension.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Misuse of the autodiff machinery (non-scalar loss, stale grads, missing grad).
class GradError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// NaN/Inf where a finite value was required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
struct Node;
}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<Scalar> data, bool requires_grad = false);
    static Tensor scalar(Scalar value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::int64_t dim(int axis) const;
    int ndim() const;
    std::int64_t numel() const;

    std::span<const Scalar> data() const;
    /// Writable view; only valid on leaves (parameters and buffers).
    std::span<Scalar> mutable_data();
    Scalar item() const;
    std::vector<Scalar> to_vector() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool is_leaf() const;

    bool has_grad() const;
    std::span<const Scalar> grad() const;
    void zero_grad();

    /// Same values, no history.
    Tensor detach() const;
    /// Deep copy of values into a fresh leaf with the same requires_grad flag.
    Tensor clone() const;

    /// Reverse sweep from a scalar. Throws if any reachable leaf already holds a
    /// gradient (call zero_grad first) or if this tensor is not a scalar.
    void backward() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    // Op-construction interface used by ops.cpp.
    using BackwardFn = std::function<void(std::span<const Scalar> grad_out)>;
    static Tensor make_result(Shape shape, std::vector<Scalar> data,
                              std::vector<Tensor> inputs, BackwardFn backward);
    /// Accumulates into this tensor's gradient buffer, allocating it on first use.
    void accumulate_grad(std::span<const Scalar> g) const;
    std::span<Scalar> grad_buffer() const;

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    const detail::TensorImpl& impl() const;
    detail::TensorImpl& impl();

    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables graph recording for its lifetime (thread-local).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_mode_enabled();

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

}  // namespace docbin
