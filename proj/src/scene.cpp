// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/scene.hpp"

#include "liftrefine/error.hpp"
#include "liftrefine/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace liftrefine {

double Primitive::signed_distance(const Vec3& p) const {
    const Vec3 q = p - center;
    if (kind == PrimitiveKind::sphere) return q.norm() - size.x();
    const Vec3 d = q.cwiseAbs() - size;
    return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
}

Vec3 Primitive::extent() const { return kind == PrimitiveKind::sphere ? Vec3::Constant(size.x()) : size; }

SyntheticScene generate_scene(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x5ce9e));
    SyntheticScene scene;
    scene.seed = seed;
    char id[32];
    std::snprintf(id, sizeof id, "scene_%06llu", static_cast<unsigned long long>(seed));
    scene.id = id;
    const auto count = rng.uniform_int(1, 4);
    for (std::int64_t i = 0; i < count; ++i) {
        Primitive p;
        p.kind = rng.uniform() < 0.5 ? PrimitiveKind::sphere : PrimitiveKind::box;
        if (p.kind == PrimitiveKind::sphere) {
            p.size = Vec3::Constant(rng.uniform(0.1, 0.25));
        } else {
            p.size = Vec3(rng.uniform(0.08, 0.22), rng.uniform(0.08, 0.22), rng.uniform(0.08, 0.22));
        }
        const Vec3 ext = p.extent();
        for (int a = 0; a < 3; ++a) {
            const double limit = std::min(0.4, 0.5 - ext[a] - 2.0 * kEdgeSoftness);
            p.center[a] = std::clamp(rng.uniform(-0.4, 0.4), -limit, limit);
        }
        p.albedo = Vec3(rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95));
        p.density = rng.uniform(30.0, 60.0);
        scene.primitives.push_back(p);
    }
    return scene;
}

FieldSamples AnalyticField::evaluate(const Tensor& points) const {
    if (points.rank() != 2 || points.dim(1) != 3) {
        throw ShapeError("AnalyticField: points must be [N,3], got " + shape_str(points.shape()));
    }
    const std::int64_t n = points.dim(0);
    const auto pts = points.data();
    std::vector<double> sigma(static_cast<std::size_t>(n), 0.0);
    std::vector<double> color(static_cast<std::size_t>(3 * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const Vec3 p(pts[3 * k], pts[3 * k + 1], pts[3 * k + 2]);
        Vec3 acc = Vec3::Zero();
        double total = 0.0;
        for (const auto& prim : scene_.primitives) {
            const double s = prim.density / (1.0 + std::exp(prim.signed_distance(p) / kEdgeSoftness));
            total += s;
            acc += s * prim.albedo;
        }
        sigma[k] = total;
        if (total > 0.0) {
            for (int a = 0; a < 3; ++a) color[3 * k + static_cast<std::size_t>(a)] = acc[a] / total;
        }
    }
    return {Tensor::from({n}, std::move(sigma)), Tensor::from({n, 3}, std::move(color)), Tensor()};
}

Tensor render_ground_truth(const SyntheticScene& scene, const CameraPose& pose, std::int64_t n_samples,
                           std::uint64_t seed) {
    RenderOptions opt;
    opt.n_samples = n_samples;
    opt.stratified = false;
    opt.seed = seed;
    return render(AnalyticField(scene), pose, opt).image;
}

std::vector<CameraPose> random_orbit(std::uint64_t seed, std::int64_t count, std::int64_t resolution,
                                     const OrbitConfig& config) {
    if (count < 0 || resolution < 1) throw ValueError("random_orbit: count must be >= 0 and resolution >= 1");
    constexpr double kDeg = std::numbers::pi / 180.0;
    Rng rng(mix_seed(seed, 0x0cb17));
    std::vector<CameraPose> poses;
    for (std::int64_t i = 0; i < count; ++i) {
        const double az = rng.uniform(-std::numbers::pi, std::numbers::pi);
        const double el = rng.uniform(config.min_elevation_deg, config.max_elevation_deg) * kDeg;
        poses.push_back(orbit_pose(config.radius, az, el, config.focal_ratio * static_cast<double>(resolution),
                                   resolution, resolution));
    }
    return poses;
}

} // namespace liftrefine
