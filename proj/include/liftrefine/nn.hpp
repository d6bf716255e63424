// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/rng.hpp"
#include "liftrefine/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace liftrefine {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

/// Fully connected layer: y = x W + b with W: [in, out]. Accepts [N,in] or [B,N,in].
class Linear {
public:
    Linear() = default;
    Linear(std::int64_t in, std::int64_t out, Rng& rng);

    Tensor forward(const Tensor& x) const;
    /// Applies the layer to a single vector [in] -> [out].
    Tensor forward_vector(const Tensor& x) const;
    void zero_init();
    void collect(ParameterList& out, const std::string& prefix) const;

    Tensor weight;
    Tensor bias;
};

/// Stride-1 same-padded 2-D convolution layer.
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::int64_t in, std::int64_t out, std::int64_t kernel, Rng& rng);

    Tensor forward(const Tensor& x) const;
    void zero_init();
    void collect(ParameterList& out, const std::string& prefix) const;

    Tensor weight;
    Tensor bias;
};

/// A learned tensor outside any layer (queries, null tokens, mixing matrices).
Tensor make_parameter(Shape shape, Rng& rng, double scale);

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Global gradient-norm clip; <= 0 disables.
    double grad_clip = 0.0;
};

class Adam {
public:
    Adam(ParameterList params, AdamOptions options);

    /// Applies one update from the accumulated gradients, then clears them.
    void step();
    void zero_grad();
    void set_lr(double lr) { options_.lr = lr; }
    double lr() const { return options_.lr; }
    std::int64_t steps() const { return steps_; }

private:
    ParameterList params_;
    AdamOptions options_;
    std::vector<std::vector<double>> m_, v_;
    std::int64_t steps_ = 0;
};

/// Sum of squared gradient entries over all parameters.
double grad_norm_squared(const ParameterList& params);

} // namespace liftrefine
