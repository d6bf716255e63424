// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/camera.hpp"
#include "liftrefine/lifting.hpp"
#include "liftrefine/nn.hpp"
#include "liftrefine/renderer.hpp"
#include "liftrefine/triplane.hpp"

#include <cstdint>
#include <vector>

namespace liftrefine {

struct ReconstructorConfig {
    std::int64_t image_size = 32;
    std::int64_t feature_channels = 16;  ///< image features, volume and tri-plane channels
    std::int64_t volume_resolution = 16;
    std::int64_t triplane_resolution = 64;
    UpsampleMode upsample_mode = UpsampleMode::learned;
    AttentionPlacement upsample_attention = AttentionPlacement::none;
    std::int64_t render_feature_channels = 16;
    std::int64_t mlp_hidden = 64;
    std::int64_t n_samples = 32;

    VolumeDims volume_dims() const {
        return {feature_channels, volume_resolution, volume_resolution, volume_resolution};
    }
    /// Throws ValueError on inconsistent settings.
    void validate() const;
};

struct PosedImage {
    Tensor image;  ///< [3, H, W]
    CameraPose pose;
};

/// The complete lift stage: image encoder, per-view lifting, view
/// aggregation, plane projection, plane upsampling and the field decoder.
class Reconstructor {
public:
    Reconstructor(const ReconstructorConfig& config, std::uint64_t seed);

    TriPlane reconstruct(const std::vector<PosedImage>& views) const;
    FeatureVolume encode_volume(const std::vector<PosedImage>& views) const;
    RenderOutput render_view(const TriPlane& triplane, const CameraPose& pose, const RenderOptions& options) const;
    RenderOutput render_window(const TriPlane& triplane, const CameraPose& pose, std::int64_t row0, std::int64_t col0,
                               std::int64_t height, std::int64_t width, const RenderOptions& options) const;

    ParameterList parameters() const;
    const ReconstructorConfig& config() const { return config_; }
    RenderOptions default_render_options(std::uint64_t seed, bool stratified) const;

    FeatureExtractor extractor;
    ViewAggregator aggregator;
    PlaneProjector projector;
    PlaneUpsampler upsampler;
    FieldDecoder decoder;

private:
    ReconstructorConfig config_;
};

} // namespace liftrefine
