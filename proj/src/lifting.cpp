// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/lifting.hpp"

#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"

#include <algorithm>
#include <cmath>

namespace liftrefine {

namespace {

// Coordinate assigned to voxels a view cannot see; every bilinear tap falls
// outside the map and reads zero.
constexpr double kOffMap = -10.0;

} // namespace

Vec3 FeatureVolume::voxel_center(std::int64_t d, std::int64_t h, std::int64_t w) const {
    auto c = [](std::int64_t i, std::int64_t n) { return (static_cast<double>(i) + 0.5) / static_cast<double>(n) - 0.5; };
    return {c(w, dims.width), c(h, dims.height), c(d, dims.depth)};
}

FeatureExtractor::FeatureExtractor(std::int64_t channels, Rng& rng)
    : channels_(channels), conv1_(3, channels, 3, rng), conv2_(channels, channels, 3, rng), out_(channels, channels, 1, rng) {}

Tensor FeatureExtractor::forward(const Tensor& image) const {
    if (image.rank() < 3 || image.dim(-3) != 3) {
        throw ShapeError("extract_features: expected [3,H,W] or [B,3,H,W], got " + shape_str(image.shape()));
    }
    if (image.dim(-1) % 2 != 0 || image.dim(-2) % 2 != 0) {
        throw ValueError("extract_features: image height and width must be even, got " + shape_str(image.shape()));
    }
    Tensor h = silu(conv1_.forward(image));
    h = avg_pool2x(h);
    h = silu(conv2_.forward(h));
    return out_.forward(h);
}

void FeatureExtractor::collect(ParameterList& out, const std::string& prefix) const {
    conv1_.collect(out, prefix + ".conv1");
    conv2_.collect(out, prefix + ".conv2");
    out_.collect(out, prefix + ".out");
}

FeatureVolume lift_view(const Tensor& features, const CameraPose& pose, const VolumeDims& dims) {
    if (features.rank() != 3) throw ShapeError("lift_view: features must be [C,h,w], got " + shape_str(features.shape()));
    if (dims.channels != features.dim(0)) {
        throw ShapeError("lift_view: volume has " + std::to_string(dims.channels) + " channels, features " +
                         shape_str(features.shape()));
    }
    if (dims.depth < 1 || dims.height < 1 || dims.width < 1) throw ValueError("lift_view: dims must be positive");
    const std::int64_t fh = features.dim(1);
    const std::int64_t fw = features.dim(2);
    const double sx = static_cast<double>(fw) / static_cast<double>(pose.width);
    const double sy = static_cast<double>(fh) / static_cast<double>(pose.height);
    const double img_w = static_cast<double>(pose.width);
    const double img_h = static_cast<double>(pose.height);

    FeatureVolume vol;
    vol.dims = dims;
    const auto n = static_cast<std::size_t>(dims.voxels());
    vol.mask.assign(n, 0.0);
    std::vector<double> coords(2 * n, kOffMap);
    std::size_t idx = 0;
    for (std::int64_t d = 0; d < dims.depth; ++d)
        for (std::int64_t h = 0; h < dims.height; ++h)
            for (std::int64_t w = 0; w < dims.width; ++w, ++idx) {
                const Vec3 p = pose.to_camera(vol.voxel_center(d, h, w));
                if (p.z() <= kMinDepth) continue;
                const double u = pose.fx * p.x() / p.z() + pose.cx;
                const double v = pose.fy * p.y() / p.z() + pose.cy;
                if (!(u >= 0.0 && u < img_w && v >= 0.0 && v < img_h)) continue;
                coords[2 * idx] = std::clamp(u * sx - 0.5, 0.0, static_cast<double>(fw - 1));
                coords[2 * idx + 1] = std::clamp(v * sy - 0.5, 0.0, static_cast<double>(fh - 1));
                vol.mask[idx] = 1.0;
            }
    const Tensor sampled = bilinear_sample_2d(features, Tensor::from({dims.voxels(), 2}, std::move(coords)));
    vol.data = reshape(transpose(sampled), {dims.channels, dims.depth, dims.height, dims.width});
    return vol;
}

ViewAggregator::ViewAggregator(const VolumeDims& dims, Rng& rng)
    : slice_a(dims.channels, dims.channels, 3, rng), slice_b(dims.channels, dims.channels, 3, rng), dims_(dims) {
    query = make_parameter({1, dims.channels}, rng, 1.0);
    key_proj = make_parameter({dims.channels, dims.channels}, rng, 1.0 / std::sqrt(static_cast<double>(dims.channels)));
    slice_b.zero_init();
    depth_mix = Tensor::zeros({dims.depth, dims.depth}, true);
}

Tensor ViewAggregator::pool(const std::vector<FeatureVolume>& volumes) const {
    if (volumes.empty()) throw ValueError("aggregate_views: empty view list");
    const std::int64_t c = dims_.channels;
    const std::int64_t n = dims_.voxels();
    const auto m = static_cast<std::int64_t>(volumes.size());
    std::vector<Tensor> per_view;
    std::vector<double> mask(static_cast<std::size_t>(n * m));
    for (std::int64_t j = 0; j < m; ++j) {
        const auto& v = volumes[static_cast<std::size_t>(j)];
        if (v.data.shape() != Shape{c, dims_.depth, dims_.height, dims_.width}) {
            throw ShapeError("aggregate_views: volume " + std::to_string(j) + " has shape " + shape_str(v.data.shape()) +
                             ", expected " + shape_str({c, dims_.depth, dims_.height, dims_.width}));
        }
        per_view.push_back(reshape(transpose(reshape(v.data, {c, n})), {n, 1, c}));
        for (std::int64_t i = 0; i < n; ++i) {
            mask[static_cast<std::size_t>(i * m + j)] = v.mask[static_cast<std::size_t>(i)] > 0.0 ? 1.0 : 0.0;
        }
    }
    const Tensor values = m == 1 ? per_view[0] : concat(per_view, 1);  // [N, M, C]
    const Tensor keys = matmul(values, key_proj);
    const Tensor pooled = attention(query, keys, values, Tensor::from({n, m}, std::move(mask)),
                                    AttentionOptions{.order_invariant = true});  // [N, 1, C]
    return reshape(transpose(reshape(pooled, {n, c})), {c, dims_.depth, dims_.height, dims_.width});
}

FeatureVolume ViewAggregator::forward(const std::vector<FeatureVolume>& volumes) const {
    const Tensor x = pool(volumes);
    const std::int64_t c = dims_.channels, d = dims_.depth, h = dims_.height, w = dims_.width;

    // Per-slice convolutions: depth slices form the batch.
    const Tensor slices = permute(x, {1, 0, 2, 3});
    const Tensor conv = permute(slice_b.forward(silu(slice_a.forward(slices))), {1, 0, 2, 3});
    Tensor y = add(x, conv);

    const Tensor along_depth = reshape(permute(y, {0, 2, 3, 1}), {c * h * w, d});
    const Tensor mixed = permute(reshape(matmul(along_depth, depth_mix), {c, h, w, d}), {0, 3, 1, 2});
    y = add(y, mixed);

    FeatureVolume out;
    out.dims = dims_;
    out.mask.assign(static_cast<std::size_t>(dims_.voxels()), 0.0);
    for (const auto& v : volumes) {
        for (std::size_t i = 0; i < out.mask.size(); ++i) out.mask[i] += v.mask[i];
    }
    std::vector<double> seen(out.mask.size());
    for (std::size_t i = 0; i < seen.size(); ++i) seen[i] = out.mask[i] > 0.0 ? 1.0 : 0.0;
    out.data = mul(y, Tensor::from({d, h, w}, std::move(seen)));
    return out;
}

void ViewAggregator::collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".query", query});
    out.push_back({prefix + ".key_proj", key_proj});
    slice_a.collect(out, prefix + ".slice_a");
    slice_b.collect(out, prefix + ".slice_b");
    out.push_back({prefix + ".depth_mix", depth_mix});
}

} // namespace liftrefine
