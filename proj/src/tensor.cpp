// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/tensor.hpp"

#include "liftrefine/error.hpp"

#include <algorithm>
#include <sstream>

namespace liftrefine {

std::int64_t numel_of(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    for (auto d : shape) {
        if (d <= 0) throw ShapeError("tensor: non-positive dimension in shape " + shape_str(shape));
    }
}

const TensorImpl& require(const std::shared_ptr<TensorImpl>& impl) {
    if (!impl) throw ValueError("tensor: access to undefined tensor");
    return *impl;
}

} // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::ones(Shape shape, bool requires_grad) { return full(std::move(shape), 1.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    check_shape(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(static_cast<std::size_t>(numel_of(shape)), value);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    check_shape(shape);
    if (numel_of(shape) != static_cast<std::int64_t>(values.size())) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::eye(std::int64_t n) {
    Tensor t = zeros({n, n});
    auto d = t.mutable_data();
    for (std::int64_t i = 0; i < n; ++i) d[static_cast<std::size_t>(i * n + i)] = 1.0;
    return t;
}

const Shape& Tensor::shape() const { return require(impl_).shape; }

std::int64_t Tensor::dim(std::int64_t axis) const {
    const auto& s = shape();
    const auto r = static_cast<std::int64_t>(s.size());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("tensor: axis out of range for shape " + shape_str(s));
    return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(require(impl_).data.size()); }

std::span<const double> Tensor::data() const { return require(impl_).data; }

std::span<double> Tensor::mutable_data() {
    require(impl_);
    return impl_->data;
}

std::span<const double> Tensor::grad() const { return require(impl_).grad; }

std::span<double> Tensor::mutable_grad() {
    require(impl_);
    return detail::grad_buffer(*impl_);
}

bool Tensor::has_grad() const { return !require(impl_).grad.empty(); }

void Tensor::zero_grad() {
    require(impl_);
    impl_->grad.clear();
}

bool Tensor::requires_grad() const { return require(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    require(impl_);
    impl_->requires_grad = value;
    return *this;
}

bool Tensor::is_leaf() const { return require(impl_).is_leaf; }

double Tensor::item() const {
    const auto& impl = require(impl_);
    if (impl.data.size() != 1) throw ShapeError("item: tensor of shape " + shape_str(impl.shape) + " is not a scalar");
    return impl.data[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
    const auto& impl = require(impl_);
    if (index.size() != impl.shape.size()) throw ShapeError("at: index rank mismatch for " + shape_str(impl.shape));
    std::int64_t flat = 0;
    std::size_t i = 0;
    for (auto v : index) {
        const auto d = impl.shape[i++];
        if (v < 0 || v >= d) throw ValueError("at: index out of range for " + shape_str(impl.shape));
        flat = flat * d + v;
    }
    return impl.data[static_cast<std::size_t>(flat)];
}

Tensor Tensor::detach() const {
    const auto& impl = require(impl_);
    return from(impl.shape, impl.data, false);
}

Tensor Tensor::clone() const {
    const auto& impl = require(impl_);
    return from(impl.shape, impl.data, impl.requires_grad);
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape g_tape;
thread_local bool g_grad_enabled = true;
} // namespace

Tape& current_tape() { return g_tape; }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void Tape::record(Node node) { nodes_.push_back(std::move(node)); }

void Tape::clear() { nodes_.clear(); }

void Tape::backward(const Tensor& loss) {
    if (!loss.defined()) throw ValueError("backward: undefined loss");
    if (!loss.shape().empty()) {
        throw ShapeError("backward: loss must be a scalar of shape [], got " + shape_str(loss.shape()));
    }
    auto* root = loss.impl();
    if (!root->requires_grad) {
        clear();
        return;
    }
    if (!root->is_leaf) {
        const bool on_tape = std::any_of(nodes_.begin(), nodes_.end(),
                                         [root](const Node& n) { return n.output.get() == root; });
        if (!on_tape) throw ValueError("backward: loss was not produced on the active tape");
    }
    const double one = 1.0;
    detail::accumulate_grad(*root, std::span<const double>(&one, 1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty()) continue;
        it->backward(*it);
    }
    // Intermediate gradients are scratch space; leaves keep theirs.
    for (auto& node : nodes_) {
        if (!node.output->is_leaf) {
            node.output->grad.clear();
            node.output->grad.shrink_to_fit();
        }
    }
    clear();
}

void backward(const Tensor& loss) { current_tape().backward(loss); }

namespace detail {

std::vector<double>& grad_buffer(TensorImpl& impl) {
    if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
    return impl.grad;
}

void accumulate_grad(TensorImpl& impl, std::span<const double> values) {
    if (!impl.requires_grad) return;
    auto& g = grad_buffer(impl);
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += values[i];
}

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
    if (!g_grad_enabled) return false;
    for (const auto* t : inputs) {
        if (t && t->defined() && t->requires_grad()) return true;
    }
    return false;
}

Tensor make_result(Shape shape, std::vector<double> data) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    return Tensor(std::move(impl));
}

void record_op(std::string_view op, std::initializer_list<const Tensor*> inputs, Tensor& out,
               std::function<void(Tape::Node&)> backward) {
    if (!needs_grad(inputs)) return;
    Tape::Node node;
    node.op = op;
    for (const auto* t : inputs) {
        node.inputs.push_back(t && t->defined() ? t->impl_ptr() : nullptr);
    }
    out.impl()->requires_grad = true;
    out.impl()->is_leaf = false;
    node.output = out.impl_ptr();
    node.backward = std::move(backward);
    g_tape.record(std::move(node));
}

void record_op(std::string_view op, const std::vector<Tensor>& inputs, Tensor& out,
               std::function<void(Tape::Node&)> backward) {
    if (!g_grad_enabled) return;
    bool any = false;
    for (const auto& t : inputs) any = any || (t.defined() && t.requires_grad());
    if (!any) return;
    Tape::Node node;
    node.op = op;
    for (const auto& t : inputs) node.inputs.push_back(t.impl_ptr());
    out.impl()->requires_grad = true;
    out.impl()->is_leaf = false;
    node.output = out.impl_ptr();
    node.backward = std::move(backward);
    g_tape.record(std::move(node));
}

} // namespace detail

} // namespace liftrefine
