// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/camera.hpp"
#include "liftrefine/renderer.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace liftrefine {

enum class PrimitiveKind { box, sphere };

/// Soft-edged solid. Density is density * sigmoid(-distance / kEdgeSoftness)
/// where distance is the signed distance to the surface.
struct Primitive {
    PrimitiveKind kind = PrimitiveKind::sphere;
    Vec3 center = Vec3::Zero();
    /// Sphere: radius in x. Box: half extents.
    Vec3 size = Vec3::Constant(0.2);
    Vec3 albedo = Vec3::Constant(0.5);
    double density = 40.0;

    double signed_distance(const Vec3& p) const;
    /// Largest distance from the centre to the surface along any axis.
    Vec3 extent() const;
};

inline constexpr double kEdgeSoftness = 0.01;

struct SyntheticScene {
    std::uint64_t seed = 0;
    std::string id;
    std::vector<Primitive> primitives;
};

/// 1-4 primitives with seed-deterministic parameters. Centres lie in
/// [-0.4, 0.4]^3 and are pulled inward so every primitive fits the unit cube.
SyntheticScene generate_scene(std::uint64_t seed);

/// Density is the sum of primitive densities; colour is the density-weighted
/// albedo mix. Produces no render features.
class AnalyticField final : public RadianceField {
public:
    explicit AnalyticField(SyntheticScene scene) : scene_(std::move(scene)) {}
    FieldSamples evaluate(const Tensor& points) const override;
    std::int64_t feature_channels() const override { return 0; }
    const SyntheticScene& scene() const { return scene_; }

private:
    SyntheticScene scene_;
};

/// Image of the analytic field through the renderer's compositing.
Tensor render_ground_truth(const SyntheticScene& scene, const CameraPose& pose, std::int64_t n_samples,
                           std::uint64_t seed = 0);

struct OrbitConfig {
    double radius = 1.3;
    double min_elevation_deg = -30.0;
    double max_elevation_deg = 60.0;
    /// Focal length as a fraction of the image width.
    double focal_ratio = 0.9;
};

/// `count` look-at-origin cameras with uniform azimuth and elevation drawn
/// from the configured range.
std::vector<CameraPose> random_orbit(std::uint64_t seed, std::int64_t count, std::int64_t resolution,
                                     const OrbitConfig& config = {});

} // namespace liftrefine
