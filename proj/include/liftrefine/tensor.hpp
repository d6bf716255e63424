// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace liftrefine {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Storage behind a Tensor. Shared between Tensor handles and tape nodes.
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until a gradient reaches this tensor
    bool requires_grad = false;
    bool is_leaf = true;
};

/// Dense row-major float64 tensor handle with reverse-mode autodiff participation.
///
/// Copies are shallow: two handles to the same storage observe each other's
/// updates. Use clone() or detach() for an independent copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor ones(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor eye(std::int64_t n);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
    /// Size of dimension `axis`; negative axes count from the end.
    std::int64_t dim(std::int64_t axis) const;
    std::int64_t numel() const;

    std::span<const double> data() const;
    /// Direct write access. Only safe on leaves not referenced by a live tape.
    std::span<double> mutable_data();
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    bool has_grad() const;
    void zero_grad();

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);
    bool is_leaf() const;

    /// Value of a single-element tensor.
    double item() const;
    /// Element access by full multi-index.
    double at(std::initializer_list<std::int64_t> index) const;

    /// New leaf with copied data, no gradient participation.
    Tensor detach() const;
    /// New leaf with copied data and the same requires_grad flag.
    Tensor clone() const;

    TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

/// Append-only record of differentiable operations for one thread.
///
/// Nodes are appended in execution order, so inputs always precede the node
/// that consumes them. backward() walks the nodes once in reverse.
class Tape {
public:
    struct Node {
        std::string_view op;
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        std::shared_ptr<TensorImpl> output;
        std::function<void(Node&)> backward;
    };

    void record(Node node);
    /// Propagates d(loss)/d(leaf) into every reachable requires_grad leaf,
    /// accumulating into existing leaf gradients, then clears the tape.
    void backward(const Tensor& loss);
    void clear();
    std::size_t size() const { return nodes_.size(); }
    const std::vector<Node>& nodes() const { return nodes_; }

private:
    std::vector<Node> nodes_;
};

/// The calling thread's active tape.
Tape& current_tape();
bool grad_enabled();

/// Disables recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Runs reverse-mode differentiation from a scalar loss on the current tape.
void backward(const Tensor& loss);

namespace detail {
// Adds `values` into impl.grad, allocating it on first use.
void accumulate_grad(TensorImpl& impl, std::span<const double> values);
std::vector<double>& grad_buffer(TensorImpl& impl);
bool needs_grad(std::initializer_list<const Tensor*> inputs);
Tensor make_result(Shape shape, std::vector<double> data);
// Records a node if any input requires grad; marks `out` as non-leaf.
void record_op(std::string_view op, std::initializer_list<const Tensor*> inputs, Tensor& out,
               std::function<void(Tape::Node&)> backward);
void record_op(std::string_view op, const std::vector<Tensor>& inputs, Tensor& out,
               std::function<void(Tape::Node&)> backward);
} // namespace detail

} // namespace liftrefine
