// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/camera.hpp"
#include "liftrefine/nn.hpp"
#include "liftrefine/triplane.hpp"

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace liftrefine {

/// Field values at a batch of points.
struct FieldSamples {
    Tensor sigma;    ///< [N], >= 0
    Tensor color;    ///< [N, 3], in [0, 1]
    Tensor feature;  ///< [N, F]
};

class RadianceField {
public:
    virtual ~RadianceField() = default;
    /// points: [N, 3] inside the unit cube.
    virtual FieldSamples evaluate(const Tensor& points) const = 0;
    virtual std::int64_t feature_channels() const = 0;
};

/// Two hidden layers (silu) mapping a tri-plane feature to density
/// (softplus), colour (sigmoid) and a render feature.
class FieldDecoder {
public:
    FieldDecoder() = default;
    FieldDecoder(std::int64_t in_channels, std::int64_t feature_channels, Rng& rng, std::int64_t hidden = 64);

    FieldSamples decode(const Tensor& features) const;
    void zero_init_output() { l3.zero_init(); }
    std::int64_t feature_channels() const { return feature_channels_; }
    void collect(ParameterList& out, const std::string& prefix) const;

    Linear l1, l2, l3;

private:
    std::int64_t feature_channels_ = 0;
};

class TriplaneField final : public RadianceField {
public:
    TriplaneField(const TriPlane& triplane, const FieldDecoder& decoder) : triplane_(triplane), decoder_(decoder) {}
    FieldSamples evaluate(const Tensor& points) const override;
    std::int64_t feature_channels() const override { return decoder_.feature_channels(); }

private:
    const TriPlane& triplane_;
    const FieldDecoder& decoder_;
};

struct RenderOptions {
    std::int64_t n_samples = 32;
    /// Jitter each sample inside its stratum; otherwise use stratum midpoints.
    bool stratified = true;
    std::uint64_t seed = 0;
    std::array<double, 3> background{1.0, 1.0, 1.0};
};

struct RenderOutput {
    Tensor image;        ///< [3, H, W]
    Tensor feature_map;  ///< [F, H, W]
    Tensor weight_sums;  ///< [H, W]
};

/// Per-ray composited values for a set of rays.
struct RayBatchOutput {
    Tensor color;       ///< [R, 3]
    Tensor feature;     ///< [R, F]
    Tensor weight_sum;  ///< [R]
};

/// Quadrature over per-sample densities: alpha_i = 1 - exp(-sigma_i delta_i),
/// T_i = exp(-sum_{j<i} sigma_j delta_j), w_i = T_i alpha_i. The weight sum
/// is evaluated as 1 - exp(-sum_i sigma_i delta_i) and the background gets
/// exp(-sum_i sigma_i delta_i).
/// sigma, delta: [R, S]; color: [R, S, 3]; feature: [R, S, F] or undefined.
RayBatchOutput composite(const Tensor& sigma, const Tensor& color, const Tensor& feature, const Tensor& delta,
                         const std::array<double, 3>& background);

/// Sample distances inside [t0, t1]: stratum i spans [t0 + i*d, t0 + (i+1)*d]
/// with d = (t1 - t0)/n. Returns (t_i, delta_i) where delta_i = t_{i+1} - t_i
/// and the last delta closes the interval so the deltas sum to t1 - t0.
std::pair<std::vector<double>, std::vector<double>> sample_interval(double t0, double t1, std::int64_t n,
                                                                    bool stratified, std::uint64_t stream);

/// Marches the rays through pixels (row, col) of `pose`. Jitter for pixel
/// (row, col) depends only on the seed and row * width + col.
RayBatchOutput render_pixels(const RadianceField& field, const CameraPose& pose,
                             const std::vector<std::pair<std::int64_t, std::int64_t>>& pixels,
                             const RenderOptions& options);

/// Marches one ray; `stream` selects its jitter.
RayBatchOutput march_ray(const RadianceField& field, const Ray& ray, const RenderOptions& options,
                         std::uint64_t stream);

/// Renders a (height x width) window whose top-left pixel is (row0, col0).
RenderOutput render_window(const RadianceField& field, const CameraPose& pose, std::int64_t row0, std::int64_t col0,
                           std::int64_t height, std::int64_t width, const RenderOptions& options);

/// Full image at the pose's resolution.
RenderOutput render(const RadianceField& field, const CameraPose& pose, const RenderOptions& options);

} // namespace liftrefine
