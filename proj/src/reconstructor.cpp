// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/reconstructor.hpp"

#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"
#include "liftrefine/rng.hpp"

namespace liftrefine {

void ReconstructorConfig::validate() const {
    if (image_size < 2 || image_size % 2 != 0) throw ValueError("image_size must be even and >= 2");
    if (feature_channels < 1 || volume_resolution < 1 || render_feature_channels < 0 || mlp_hidden < 1) {
        throw ValueError("reconstructor channel counts and resolutions must be positive");
    }
    if (n_samples < 1) throw ValueError("n_samples must be >= 1");
    upsample_levels_for(volume_resolution, triplane_resolution);
}

Reconstructor::Reconstructor(const ReconstructorConfig& config, std::uint64_t seed) : config_(config) {
    config.validate();
    Rng rng(mix_seed(seed, 0x4ec0));
    extractor = FeatureExtractor(config.feature_channels, rng);
    aggregator = ViewAggregator(config.volume_dims(), rng);
    projector = PlaneProjector(config.feature_channels, rng);
    UpsamplerConfig up;
    up.levels = upsample_levels_for(config.volume_resolution, config.triplane_resolution);
    up.mode = config.upsample_mode;
    up.attention = config.upsample_attention;
    upsampler = PlaneUpsampler(config.feature_channels, up, rng);
    decoder = FieldDecoder(config.feature_channels, config.render_feature_channels, rng, config.mlp_hidden);
}

FeatureVolume Reconstructor::encode_volume(const std::vector<PosedImage>& views) const {
    if (views.empty()) throw ValueError("reconstruct: at least one input view is required");
    std::vector<Tensor> images;
    for (const auto& v : views) {
        if (v.image.rank() != 3 || v.image.dim(0) != 3) {
            throw ShapeError("reconstruct: input image must be [3,H,W], got " + shape_str(v.image.shape()));
        }
        images.push_back(reshape(v.image, {1, 3, v.image.dim(1), v.image.dim(2)}));
    }
    const Tensor batch = images.size() == 1 ? images[0] : concat(images, 0);
    const Tensor feats = extractor.forward(batch);
    const auto dims = config_.volume_dims();
    std::vector<FeatureVolume> lifted;
    for (std::size_t i = 0; i < views.size(); ++i) {
        const auto k = static_cast<std::int64_t>(i);
        const Tensor f = reshape(slice(feats, 0, k, k + 1), {feats.dim(1), feats.dim(2), feats.dim(3)});
        lifted.push_back(lift_view(f, views[i].pose, dims));
    }
    return aggregator.forward(lifted);
}

TriPlane Reconstructor::reconstruct(const std::vector<PosedImage>& views) const {
    const FeatureVolume volume = encode_volume(views);
    const auto planes = projector.forward(volume);
    const std::int64_t c = config_.feature_channels, r = config_.volume_resolution;
    std::vector<Tensor> stack;
    for (const auto& p : planes) stack.push_back(reshape(p, {1, c, r, r}));
    // Normalising each plane keeps decoder inputs at unit scale while the encoder weights move.
    const Tensor fine = upsampler.forward(concat(stack, 0));
    return make_triplane(group_norm(fine, c % 4 == 0 ? 4 : 1));
}

RenderOutput Reconstructor::render_view(const TriPlane& triplane, const CameraPose& pose,
                                        const RenderOptions& options) const {
    return liftrefine::render(TriplaneField(triplane, decoder), pose, options);
}

RenderOutput Reconstructor::render_window(const TriPlane& triplane, const CameraPose& pose, std::int64_t row0,
                                          std::int64_t col0, std::int64_t height, std::int64_t width,
                                          const RenderOptions& options) const {
    return liftrefine::render_window(TriplaneField(triplane, decoder), pose, row0, col0, height, width, options);
}

ParameterList Reconstructor::parameters() const {
    ParameterList out;
    extractor.collect(out, "extractor");
    aggregator.collect(out, "aggregator");
    projector.collect(out, "projector");
    upsampler.collect(out, "upsampler");
    decoder.collect(out, "decoder");
    return out;
}

RenderOptions Reconstructor::default_render_options(std::uint64_t seed, bool stratified) const {
    RenderOptions opt;
    opt.n_samples = config_.n_samples;
    opt.stratified = stratified;
    opt.seed = seed;
    return opt;
}

} // namespace liftrefine
