// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/nn.hpp"

#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"

#include <cmath>

namespace liftrefine {

Linear::Linear(std::int64_t in, std::int64_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight = rng.uniform_tensor({in, out}, -bound, bound).set_requires_grad(true);
    bias = Tensor::zeros({out}, true);
}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, weight), bias); }

Tensor Linear::forward_vector(const Tensor& x) const {
    return reshape(forward(reshape(x, {1, x.numel()})), {weight.dim(1)});
}

void Linear::zero_init() {
    for (auto& v : weight.mutable_data()) v = 0.0;
    for (auto& v : bias.mutable_data()) v = 0.0;
}

void Linear::collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

Conv2d::Conv2d(std::int64_t in, std::int64_t out, std::int64_t kernel, Rng& rng) {
    if (kernel % 2 == 0) throw ValueError("Conv2d: kernel size must be odd");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
    weight = rng.uniform_tensor({out, in, kernel, kernel}, -bound, bound).set_requires_grad(true);
    bias = Tensor::zeros({out}, true);
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight, bias); }

void Conv2d::zero_init() {
    for (auto& v : weight.mutable_data()) v = 0.0;
    for (auto& v : bias.mutable_data()) v = 0.0;
}

void Conv2d::collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

Tensor make_parameter(Shape shape, Rng& rng, double scale) {
    Tensor t = rng.normal_tensor(std::move(shape), scale);
    t.set_requires_grad(true);
    return t;
}

Adam::Adam(ParameterList params, AdamOptions options) : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
    }
}

double grad_norm_squared(const ParameterList& params) {
    double total = 0.0;
    for (const auto& p : params) {
        for (double g : p.tensor.grad()) total += g * g;
    }
    return total;
}

void Adam::step() {
    ++steps_;
    double clip = 1.0;
    if (options_.grad_clip > 0.0) {
        const double norm = std::sqrt(grad_norm_squared(params_));
        if (norm > options_.grad_clip) clip = options_.grad_clip / norm;
    }
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& t = params_[i].tensor;
        if (!t.has_grad()) continue;
        auto data = t.mutable_data();
        const auto grad = t.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double g = grad[j] * clip;
            m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g;
            v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            data[j] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
        }
    }
    zero_grad();
}

void Adam::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

} // namespace liftrefine
