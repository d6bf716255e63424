// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/renderer.hpp"

#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"
#include "liftrefine/rng.hpp"

#include <algorithm>

namespace liftrefine {

namespace {

Tensor strict_upper_ones(std::int64_t n) {
    std::vector<double> u(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t j = 0; j < n; ++j)
        for (std::int64_t i = j + 1; i < n; ++i) u[static_cast<std::size_t>(j * n + i)] = 1.0;
    return Tensor::from({n, n}, std::move(u));
}

double unit_from_bits(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

struct RaySetup {
    std::vector<double> points;  // [R*S*3]
    std::vector<double> delta;   // [R*S]
};

void append_ray(RaySetup& setup, const Ray& ray, const RenderOptions& options, std::uint64_t stream) {
    const std::int64_t s = options.n_samples;
    const auto hit = intersect_cube(ray);
    if (!hit) {
        // Off-cube rays get in-cube dummy points with zero length so they
        // contribute nothing.
        setup.points.insert(setup.points.end(), static_cast<std::size_t>(3 * s), 0.0);
        setup.delta.insert(setup.delta.end(), static_cast<std::size_t>(s), 0.0);
        return;
    }
    const auto [ts, ds] = sample_interval(hit->first, hit->second, s, options.stratified, stream);
    for (std::int64_t i = 0; i < s; ++i) {
        const Vec3 p = ray.origin + ts[static_cast<std::size_t>(i)] * ray.direction;
        for (int a = 0; a < 3; ++a) setup.points.push_back(std::clamp(p[a], -0.5, 0.5));
    }
    setup.delta.insert(setup.delta.end(), ds.begin(), ds.end());
}

RayBatchOutput march(const RadianceField& field, RaySetup setup, std::int64_t rays, const RenderOptions& options) {
    const std::int64_t s = options.n_samples;
    const FieldSamples f = field.evaluate(Tensor::from({rays * s, 3}, std::move(setup.points)));
    const std::int64_t fc = f.feature.defined() ? f.feature.dim(1) : 0;
    return composite(reshape(f.sigma, {rays, s}), reshape(f.color, {rays, s, 3}),
                     fc > 0 ? reshape(f.feature, {rays, s, fc}) : Tensor(), Tensor::from({rays, s}, std::move(setup.delta)),
                     options.background);
}

} // namespace

FieldDecoder::FieldDecoder(std::int64_t in_channels, std::int64_t feature_channels, Rng& rng, std::int64_t hidden)
    : l1(in_channels, hidden, rng), l2(hidden, hidden, rng), l3(hidden, 4 + feature_channels, rng),
      feature_channels_(feature_channels) {}

FieldSamples FieldDecoder::decode(const Tensor& features) const {
    const Tensor h = silu(l2.forward(silu(l1.forward(features))));
    const Tensor out = l3.forward(h);
    const std::int64_t n = features.dim(0);
    FieldSamples s;
    s.sigma = reshape(softplus(slice(out, 1, 0, 1)), {n});
    s.color = sigmoid(slice(out, 1, 1, 4));
    if (feature_channels_ > 0) s.feature = slice(out, 1, 4, 4 + feature_channels_);
    return s;
}

void FieldDecoder::collect(ParameterList& out, const std::string& prefix) const {
    l1.collect(out, prefix + ".l1");
    l2.collect(out, prefix + ".l2");
    l3.collect(out, prefix + ".l3");
}

FieldSamples TriplaneField::evaluate(const Tensor& points) const {
    return decoder_.decode(query_triplane(triplane_, points));
}

RayBatchOutput composite(const Tensor& sigma, const Tensor& color, const Tensor& feature, const Tensor& delta,
                         const std::array<double, 3>& background) {
    if (sigma.rank() != 2 || delta.shape() != sigma.shape()) {
        throw ShapeError("composite: sigma " + shape_str(sigma.shape()) + " and delta " + shape_str(delta.shape()) +
                         " must both be [R,S]");
    }
    const std::int64_t r = sigma.dim(0), s = sigma.dim(1);
    if (color.shape() != Shape{r, s, 3}) throw ShapeError("composite: color must be [R,S,3], got " + shape_str(color.shape()));

    const Tensor sd = mul(sigma, delta);
    const Tensor alpha = affine(exp(neg(sd)), -1.0, 1.0);
    const Tensor trans = exp(neg(matmul(sd, strict_upper_ones(s))));
    const Tensor w = reshape(mul(trans, alpha), {r, 1, s});

    RayBatchOutput out;
    // 1 - exp(-total) equals the sum of w but stays inside [0, 1] under rounding.
    const Tensor residual = exp(neg(sum(sd, 1)));
    out.weight_sum = affine(residual, -1.0, 1.0);
    const Tensor bg_share = matmul(reshape(residual, {r, 1}),
                                   Tensor::from({1, 3}, {background[0], background[1], background[2]}));
    out.color = add(reshape(matmul(w, color), {r, 3}), bg_share);
    if (feature.defined()) out.feature = reshape(matmul(w, feature), {r, feature.dim(2)});
    return out;
}

std::pair<std::vector<double>, std::vector<double>> sample_interval(double t0, double t1, std::int64_t n,
                                                                    bool stratified, std::uint64_t stream) {
    if (n < 1) throw ValueError("march_ray: n_samples must be >= 1");
    const double step = (t1 - t0) / static_cast<double>(n);
    std::vector<double> t(static_cast<std::size_t>(n));
    std::vector<double> d(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const double u = stratified ? unit_from_bits(mix_seed(stream, static_cast<std::uint64_t>(i))) : 0.5;
        t[static_cast<std::size_t>(i)] = t0 + (static_cast<double>(i) + u) * step;
    }
    for (std::int64_t i = 0; i + 1 < n; ++i) {
        d[static_cast<std::size_t>(i)] = t[static_cast<std::size_t>(i + 1)] - t[static_cast<std::size_t>(i)];
    }
    d[static_cast<std::size_t>(n - 1)] = (t1 - t0) - (t[static_cast<std::size_t>(n - 1)] - t[0]);
    return {std::move(t), std::move(d)};
}

RayBatchOutput render_pixels(const RadianceField& field, const CameraPose& pose,
                             const std::vector<std::pair<std::int64_t, std::int64_t>>& pixels,
                             const RenderOptions& options) {
    if (pixels.empty()) throw ValueError("render: no pixels requested");
    RaySetup setup;
    setup.points.reserve(pixels.size() * static_cast<std::size_t>(3 * options.n_samples));
    setup.delta.reserve(pixels.size() * static_cast<std::size_t>(options.n_samples));
    for (const auto& [row, col] : pixels) {
        const Ray ray = pixel_to_ray(pose, static_cast<double>(col) + 0.5, static_cast<double>(row) + 0.5);
        append_ray(setup, ray, options, mix_seed(options.seed, static_cast<std::uint64_t>(row * pose.width + col)));
    }
    return march(field, std::move(setup), static_cast<std::int64_t>(pixels.size()), options);
}

RayBatchOutput march_ray(const RadianceField& field, const Ray& ray, const RenderOptions& options,
                         std::uint64_t stream) {
    RaySetup setup;
    append_ray(setup, ray, options, stream);
    return march(field, std::move(setup), 1, options);
}

RenderOutput render_window(const RadianceField& field, const CameraPose& pose, std::int64_t row0, std::int64_t col0,
                           std::int64_t height, std::int64_t width, const RenderOptions& options) {
    if (height < 1 || width < 1) throw ValueError("render: output size must be positive");
    std::vector<std::pair<std::int64_t, std::int64_t>> pixels;
    pixels.reserve(static_cast<std::size_t>(height * width));
    for (std::int64_t i = 0; i < height; ++i)
        for (std::int64_t j = 0; j < width; ++j) pixels.emplace_back(row0 + i, col0 + j);
    const RayBatchOutput rays = render_pixels(field, pose, pixels, options);
    RenderOutput out;
    out.image = reshape(transpose(rays.color), {3, height, width});
    if (rays.feature.defined()) {
        out.feature_map = reshape(transpose(rays.feature), {rays.feature.dim(1), height, width});
    }
    out.weight_sums = reshape(rays.weight_sum, {height, width});
    return out;
}

RenderOutput render(const RadianceField& field, const CameraPose& pose, const RenderOptions& options) {
    return render_window(field, pose, 0, 0, pose.height, pose.width, options);
}

} // namespace liftrefine
