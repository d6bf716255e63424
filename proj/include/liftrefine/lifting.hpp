// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/camera.hpp"
#include "liftrefine/nn.hpp"
#include "liftrefine/tensor.hpp"

#include <cstdint>
#include <vector>

namespace liftrefine {

struct VolumeDims {
    std::int64_t channels = 16;
    std::int64_t depth = 16;
    std::int64_t height = 16;
    std::int64_t width = 16;

    std::int64_t voxels() const { return depth * height * width; }
};

/// Coarse feature grid over the unit cube. Voxel (d, h, w) has its centre at
/// world ((w+0.5)/W - 0.5, (h+0.5)/H - 0.5, (d+0.5)/D - 0.5).
struct FeatureVolume {
    VolumeDims dims;
    Tensor data;               ///< [C, D, H, W]
    std::vector<double> mask;  ///< per voxel, number of views that see it

    Vec3 voxel_center(std::int64_t d, std::int64_t h, std::int64_t w) const;
};

/// Small convolutional image encoder producing features at half resolution:
/// conv3x3 -> silu -> 2x2 average pool -> conv3x3 -> silu -> conv1x1.
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    FeatureExtractor(std::int64_t channels, Rng& rng);

    /// image: [3,H,W] or [B,3,H,W] with even H, W. Returns [C,H/2,W/2] or [B,C,H/2,W/2].
    Tensor forward(const Tensor& image) const;
    void zero_init_output() { out_.zero_init(); }
    std::int64_t channels() const { return channels_; }
    void collect(ParameterList& out, const std::string& prefix) const;

private:
    std::int64_t channels_ = 0;
    Conv2d conv1_, conv2_, out_;
};

/// Unprojects a feature map [C,h,w] into a volume by projecting every voxel
/// centre with `pose` (whose width/height give the image size the map was
/// computed from) and sampling bilinearly. Voxels behind the camera or outside
/// the image get zeros and mask 0.
FeatureVolume lift_view(const Tensor& features, const CameraPose& pose, const VolumeDims& dims);

/// Fuses per-view volumes with per-voxel attention pooling (one learned query,
/// keys from a learned projection, values = view features, unseen views
/// masked), followed by a residual refinement of per-depth-slice convolutions
/// and a cross-slice mixing layer. Residual branches start at zero.
class ViewAggregator {
public:
    ViewAggregator() = default;
    ViewAggregator(const VolumeDims& dims, Rng& rng);

    /// Attention pooling only; exposed for tests.
    Tensor pool(const std::vector<FeatureVolume>& volumes) const;
    FeatureVolume forward(const std::vector<FeatureVolume>& volumes) const;
    void collect(ParameterList& out, const std::string& prefix) const;

    Tensor query;       ///< [1, C]
    Tensor key_proj;    ///< [C, C]
    Conv2d slice_a, slice_b;
    Tensor depth_mix;   ///< [D, D]

private:
    VolumeDims dims_;
};

} // namespace liftrefine
