// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/camera.hpp"
#include "liftrefine/lifting.hpp"
#include "liftrefine/nn.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace liftrefine {

/// Three axis-aligned feature planes stored as [C, 3, R, R] in the order
/// xy (row = y, col = x), xz (row = z, col = x), yz (row = z, col = y).
struct TriPlane {
    Tensor planes;

    std::int64_t channels() const { return planes.dim(0); }
    std::int64_t resolution() const { return planes.dim(2); }
};

/// Projects the volume onto three planes by averaging along depth, height
/// and width respectively, then mixes channels with one 1x1 conv per plane.
class PlaneProjector {
public:
    PlaneProjector() = default;
    /// The 1x1 convs start as identity maps.
    PlaneProjector(std::int64_t channels, Rng& rng);

    /// Returns {xy, xz, yz}, each [C, R, R].
    std::array<Tensor, 3> forward(const FeatureVolume& volume) const;
    void collect(ParameterList& out, const std::string& prefix) const;

    std::array<Conv2d, 3> mix;
};

enum class UpsampleMode { learned, bicubic };
enum class AttentionPlacement { none, final_block, all_blocks };

struct UpsamplerConfig {
    /// Number of x2 stages; output resolution = input resolution * 2^levels.
    std::int64_t levels = 2;
    UpsampleMode mode = UpsampleMode::learned;
    AttentionPlacement attention = AttentionPlacement::none;
};

/// Doubles plane resolution `levels` times. Learned mode: per block a residual
/// conv pair, nearest x2 upsample, a residual conv and optionally residual
/// spatial self-attention; weights shared by the three planes and every
/// residual branch starts at zero. Bicubic mode has no parameters.
class PlaneUpsampler {
public:
    PlaneUpsampler() = default;
    PlaneUpsampler(std::int64_t channels, const UpsamplerConfig& config, Rng& rng);

    /// planes: [3, C, R, R] -> [3, C, R*2^levels, R*2^levels].
    Tensor forward(const Tensor& planes) const;
    void collect(ParameterList& out, const std::string& prefix) const;
    const UpsamplerConfig& config() const { return config_; }

    struct Block {
        Conv2d res_a, res_b, post;
        bool attend = false;
        Linear q, k, v, o;
    };
    std::vector<Block> blocks;

private:
    UpsamplerConfig config_;
};

/// Power-of-two check shared with config validation; throws ValueError.
std::int64_t upsample_levels_for(std::int64_t coarse, std::int64_t fine);

/// Stacks planes {xy, xz, yz} ([3, C, R, R]) into the TriPlane layout.
TriPlane make_triplane(const Tensor& stacked);

/// Sum of bilinear samples from the three planes for points [N,3] in the
/// unit cube; returns [N, C]. Throws ValueError for points outside the cube
/// by more than 1e-9. Differentiable with respect to planes and points.
Tensor query_triplane(const TriPlane& triplane, const Tensor& points);

} // namespace liftrefine
