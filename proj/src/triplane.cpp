// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/triplane.hpp"

#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"

#include <cmath>

namespace liftrefine {

PlaneProjector::PlaneProjector(std::int64_t channels, Rng& rng) {
    for (auto& m : mix) {
        m = Conv2d(channels, channels, 1, rng);
        m.zero_init();
        auto w = m.weight.mutable_data();
        for (std::int64_t c = 0; c < channels; ++c) w[static_cast<std::size_t>(c * channels + c)] = 1.0;
    }
}

std::array<Tensor, 3> PlaneProjector::forward(const FeatureVolume& volume) const {
    const auto& d = volume.dims;
    if (d.depth != d.height || d.height != d.width) {
        throw ShapeError("volume_to_planes: volume must be cubic, got " + shape_str(volume.data.shape()));
    }
    return {mix[0].forward(mean(volume.data, 1)), mix[1].forward(mean(volume.data, 2)),
            mix[2].forward(mean(volume.data, 3))};
}

void PlaneProjector::collect(ParameterList& out, const std::string& prefix) const {
    static const char* names[3] = {"xy", "xz", "yz"};
    for (int i = 0; i < 3; ++i) mix[static_cast<std::size_t>(i)].collect(out, prefix + "." + names[i]);
}

std::int64_t upsample_levels_for(std::int64_t coarse, std::int64_t fine) {
    if (coarse < 1 || fine < coarse || fine % coarse != 0) {
        throw ValueError("upsample_planes: resolution " + std::to_string(fine) + " is not a power-of-two multiple of " +
                         std::to_string(coarse));
    }
    std::int64_t factor = fine / coarse;
    std::int64_t levels = 0;
    while (factor > 1) {
        if (factor % 2 != 0) {
            throw ValueError("upsample_planes: factor " + std::to_string(fine / coarse) + " is not a power of two");
        }
        factor /= 2;
        ++levels;
    }
    return levels;
}

PlaneUpsampler::PlaneUpsampler(std::int64_t channels, const UpsamplerConfig& config, Rng& rng) : config_(config) {
    if (config.levels < 0) throw ValueError("upsample_planes: levels must be >= 0");
    if (config.mode == UpsampleMode::bicubic) return;
    for (std::int64_t i = 0; i < config.levels; ++i) {
        Block b;
        b.res_a = Conv2d(channels, channels, 3, rng);
        b.res_b = Conv2d(channels, channels, 3, rng);
        b.res_b.zero_init();
        b.post = Conv2d(channels, channels, 3, rng);
        b.post.zero_init();
        b.attend = config.attention == AttentionPlacement::all_blocks ||
                   (config.attention == AttentionPlacement::final_block && i + 1 == config.levels);
        if (b.attend) {
            b.q = Linear(channels, channels, rng);
            b.k = Linear(channels, channels, rng);
            b.v = Linear(channels, channels, rng);
            b.o = Linear(channels, channels, rng);
            b.o.zero_init();
        }
        blocks.push_back(std::move(b));
    }
}

Tensor PlaneUpsampler::forward(const Tensor& planes) const {
    if (planes.rank() != 4 || planes.dim(0) != 3 || planes.dim(2) != planes.dim(3)) {
        throw ShapeError("upsample_planes: expected [3,C,R,R], got " + shape_str(planes.shape()));
    }
    if (config_.mode == UpsampleMode::bicubic) {
        if (config_.levels == 0) return planes;
        return bicubic_upsample(planes, std::int64_t{1} << config_.levels);
    }
    // Residual branches see group-normalised inputs so their gain does not compound across blocks.
    const std::int64_t groups = planes.dim(1) % 4 == 0 ? 4 : 1;
    Tensor x = planes;
    for (const auto& b : blocks) {
        x = add(x, b.res_b.forward(silu(b.res_a.forward(silu(group_norm(x, groups))))));
        x = upsample_nearest2x(x);
        x = add(x, b.post.forward(silu(group_norm(x, groups))));
        if (b.attend) {
            const std::int64_t c = x.dim(1), r = x.dim(2);
            const Tensor tokens = transpose(reshape(group_norm(x, groups), {3, c, r * r}));  // [3, R*R, C]
            const Tensor att = attention(b.q.forward(tokens), b.k.forward(tokens), b.v.forward(tokens));
            x = add(x, reshape(transpose(b.o.forward(att)), {3, c, r, r}));
        }
    }
    return x;
}

void PlaneUpsampler::collect(ParameterList& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto p = prefix + ".block" + std::to_string(i);
        const auto& b = blocks[i];
        b.res_a.collect(out, p + ".res_a");
        b.res_b.collect(out, p + ".res_b");
        b.post.collect(out, p + ".post");
        if (b.attend) {
            b.q.collect(out, p + ".q");
            b.k.collect(out, p + ".k");
            b.v.collect(out, p + ".v");
            b.o.collect(out, p + ".o");
        }
    }
}

TriPlane make_triplane(const Tensor& stacked) {
    if (stacked.rank() != 4 || stacked.dim(0) != 3 || stacked.dim(2) != stacked.dim(3)) {
        throw ShapeError("make_triplane: expected [3,C,R,R], got " + shape_str(stacked.shape()));
    }
    return TriPlane{permute(stacked, {1, 0, 2, 3})};
}

Tensor query_triplane(const TriPlane& triplane, const Tensor& points) {
    if (points.rank() != 2 || points.dim(1) != 3) {
        throw ShapeError("query: points must be [N,3], got " + shape_str(points.shape()));
    }
    for (double v : points.data()) {
        if (!(v >= -0.5 - 1e-9 && v <= 0.5 + 1e-9)) {
            throw ValueError("query: point coordinate " + std::to_string(v) + " lies outside the unit cube");
        }
    }
    const std::int64_t c = triplane.channels();
    const std::int64_t r = triplane.resolution();
    const double scale = static_cast<double>(r - 1);
    const Tensor idx = affine(points, scale, 0.5 * scale);
    auto plane = [&](std::int64_t i) { return reshape(slice(triplane.planes, 1, i, i + 1), {c, r, r}); };
    const Tensor xy = slice(idx, 1, 0, 2);
    const Tensor xz = concat({slice(idx, 1, 0, 1), slice(idx, 1, 2, 3)}, 1);
    const Tensor yz = slice(idx, 1, 1, 3);
    return add(add(bilinear_sample_2d(plane(0), xy), bilinear_sample_2d(plane(1), xz)),
               bilinear_sample_2d(plane(2), yz));
}

} // namespace liftrefine
