// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/error.hpp"
#include "liftrefine/lifting.hpp"
#include "liftrefine/ops.hpp"
#include "liftrefine/reconstructor.hpp"
#include "liftrefine/renderer.hpp"
#include "liftrefine/rng.hpp"
#include "liftrefine/scene.hpp"
#include "liftrefine/triplane.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace liftrefine;

namespace {

CameraPose front_camera(std::int64_t size = 32) { return orbit_pose(1.3, 0.0, 0.0, 0.9 * size, size, size); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

class EmptyField final : public RadianceField {
public:
    FieldSamples evaluate(const Tensor& points) const override {
        const std::int64_t n = points.dim(0);
        return {Tensor::zeros({n}), Tensor::full({n, 3}, 0.3), Tensor()};
    }
    std::int64_t feature_channels() const override { return 0; }
};

} // namespace

// --- lifting ---------------------------------------------------------------

TEST(Lifting, VoxelCentres) {
    FeatureVolume v;
    v.dims = {1, 4, 4, 4};
    const Vec3 c = v.voxel_center(0, 1, 3);
    EXPECT_DOUBLE_EQ(c.x(), 3.5 / 4 - 0.5);
    EXPECT_DOUBLE_EQ(c.y(), 1.5 / 4 - 0.5);
    EXPECT_DOUBLE_EQ(c.z(), 0.5 / 4 - 0.5);
}

TEST(Lifting, ConstantFeaturesLiftToConstantVoxels) {
    const VolumeDims dims{2, 8, 8, 8};
    const Tensor features = Tensor::full({2, 16, 16}, 0.7);
    const FeatureVolume vol = lift_view(features, front_camera(), dims);
    ASSERT_EQ(vol.data.shape(), (Shape{2, 8, 8, 8}));
    std::int64_t seen = 0;
    for (std::int64_t d = 0; d < 8; ++d) {
        for (std::int64_t h = 0; h < 8; ++h) {
            for (std::int64_t w = 0; w < 8; ++w) {
                const auto idx = static_cast<std::size_t>((d * 8 + h) * 8 + w);
                const double value = vol.data.at({1, d, h, w});
                if (vol.mask[idx] > 0.0) {
                    ++seen;
                    // Centre voxels project well inside the image.
                    if (std::abs(h - 3.5) < 2 && std::abs(w - 3.5) < 2) EXPECT_NEAR(value, 0.7, 1e-12);
                } else {
                    EXPECT_EQ(value, 0.0);
                }
            }
        }
    }
    EXPECT_GT(seen, 0);
}

TEST(Lifting, VoxelsOutsideTheImageAreMasked) {
    // A narrow field of view sees only the middle of the cube.
    CameraPose narrow = orbit_pose(1.3, 0.0, 0.0, 200.0, 32, 32);
    const FeatureVolume vol = lift_view(Tensor::ones({1, 16, 16}), narrow, {1, 8, 8, 8});
    EXPECT_EQ(vol.mask[0], 0.0);
    EXPECT_EQ(vol.data.at({0, 0, 0, 0}), 0.0);
}

TEST(Lifting, SingleViewPoolingReturnsThatView) {
    Rng rng(1);
    const VolumeDims dims{4, 4, 4, 4};
    ViewAggregator agg(dims, rng);
    FeatureVolume v;
    v.dims = dims;
    v.data = rng.normal_tensor({4, 4, 4, 4});
    v.mask.assign(64, 1.0);
    EXPECT_LT(max_abs_diff(agg.pool({v}), v.data), 1e-12);
}

TEST(Lifting, PoolingIgnoresViewOrder) {
    Rng rng(2);
    const VolumeDims dims{4, 4, 4, 4};
    ViewAggregator agg(dims, rng);
    agg.query = rng.normal_tensor({1, 4});
    std::vector<FeatureVolume> views(3);
    for (auto& v : views) {
        v.dims = dims;
        v.data = rng.normal_tensor({4, 4, 4, 4});
        v.mask.assign(64, 1.0);
        v.mask[5] = 0.0;
    }
    const Tensor a = agg.pool(views);
    const Tensor b = agg.pool({views[2], views[0], views[1]});
    EXPECT_EQ(max_abs_diff(a, b), 0.0);
    const Tensor fa = agg.forward(views).data;
    const Tensor fb = agg.forward({views[1], views[2], views[0]}).data;
    EXPECT_EQ(max_abs_diff(fa, fb), 0.0);
}

TEST(Lifting, ExtractorHalvesResolution) {
    Rng rng(3);
    FeatureExtractor ex(8, rng);
    EXPECT_EQ(ex.forward(Tensor::zeros({3, 32, 32})).shape(), (Shape{8, 16, 16}));
    EXPECT_EQ(ex.forward(Tensor::zeros({2, 3, 8, 8})).shape(), (Shape{2, 8, 4, 4}));
}

// --- tri-plane -------------------------------------------------------------

TEST(Triplane, ProjectorStartsAsAxisMeans) {
    Rng rng(4);
    PlaneProjector proj(3, rng);
    FeatureVolume v;
    v.dims = {3, 4, 4, 4};
    v.data = rng.normal_tensor({3, 4, 4, 4});
    const auto planes = proj.forward(v);
    const Tensor xy = mean(v.data, 1);
    const Tensor xz = mean(v.data, 2);
    const Tensor yz = mean(v.data, 3);
    EXPECT_LT(max_abs_diff(planes[0], xy), 1e-12);
    EXPECT_LT(max_abs_diff(planes[1], xz), 1e-12);
    EXPECT_LT(max_abs_diff(planes[2], yz), 1e-12);
}

TEST(Triplane, QuerySumsThePlanes) {
    Tensor planes = Tensor::zeros({2, 3, 4, 4});
    auto data = planes.mutable_data();
    for (std::int64_t c = 0; c < 2; ++c) {
        for (std::int64_t p = 0; p < 3; ++p) {
            for (std::int64_t i = 0; i < 16; ++i) data[static_cast<std::size_t>((c * 3 + p) * 16 + i)] = p + 1.0 + 10.0 * c;
        }
    }
    Rng rng(5);
    const Tensor pts = rng.uniform_tensor({20, 3}, -0.5, 0.5);
    const Tensor f = query_triplane(make_triplane(permute(planes, {1, 0, 2, 3})), pts);
    ASSERT_EQ(f.shape(), (Shape{20, 2}));
    for (std::int64_t n = 0; n < 20; ++n) {
        EXPECT_NEAR(f.at({n, 0}), 6.0, 1e-12);
        EXPECT_NEAR(f.at({n, 1}), 36.0, 1e-12);
    }
}

TEST(Triplane, QueryRejectsPointsOutsideTheCube) {
    const TriPlane tp{Tensor::zeros({1, 3, 4, 4})};
    EXPECT_THROW(query_triplane(tp, Tensor::from({1, 3}, {0.0, 0.6, 0.0})), ValueError);
    EXPECT_NO_THROW(query_triplane(tp, Tensor::from({1, 3}, {0.5, -0.5, 0.5})));
}

TEST(Triplane, UpsampleLevels) {
    EXPECT_EQ(upsample_levels_for(16, 64), 2);
    EXPECT_EQ(upsample_levels_for(16, 16), 0);
    EXPECT_THROW(upsample_levels_for(16, 48), ValueError);
    EXPECT_THROW(upsample_levels_for(16, 8), ValueError);
}

TEST(Triplane, UpsamplersKeepConstantPlanesConstant) {
    Rng rng(6);
    for (const auto mode : {UpsampleMode::learned, UpsampleMode::bicubic}) {
        UpsamplerConfig cfg;
        cfg.mode = mode;
        cfg.attention = mode == UpsampleMode::learned ? AttentionPlacement::final_block : AttentionPlacement::none;
        PlaneUpsampler up(2, cfg, rng);
        const Tensor out = up.forward(Tensor::full({3, 2, 4, 4}, 0.25));
        ASSERT_EQ(out.shape(), (Shape{3, 2, 16, 16}));
        EXPECT_LT(max_abs_diff(out, Tensor::full({3, 2, 16, 16}, 0.25)), 1e-12);
        ParameterList params;
        up.collect(params, "up");
        EXPECT_EQ(params.empty(), mode == UpsampleMode::bicubic);
    }
}

// --- renderer --------------------------------------------------------------

TEST(Renderer, SampleIntervalCoversTheSegment) {
    for (const bool stratified : {false, true}) {
        const auto [t, delta] = sample_interval(1.0, 3.0, 8, stratified, 42);
        ASSERT_EQ(t.size(), 8u);
        double total = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            EXPECT_GE(t[i], 1.0 + 0.25 * static_cast<double>(i));
            EXPECT_LE(t[i], 1.0 + 0.25 * static_cast<double>(i + 1));
            if (!stratified) EXPECT_NEAR(t[i], 1.125 + 0.25 * static_cast<double>(i), 1e-12);
            total += delta[i];
        }
        EXPECT_NEAR(total, 2.0, 1e-12);
    }
}

TEST(Renderer, EmptyFieldShowsBackground) {
    RenderOptions opts;
    opts.background = {0.1, 0.2, 0.3};
    const RenderOutput out = render(EmptyField(), front_camera(8), opts);
    for (std::int64_t i = 0; i < 8; ++i) {
        EXPECT_DOUBLE_EQ(out.image.at({0, i, 3}), 0.1);
        EXPECT_DOUBLE_EQ(out.image.at({2, 3, i}), 0.3);
        EXPECT_DOUBLE_EQ(out.weight_sums.at({i, i}), 0.0);
    }
}

TEST(Renderer, OpaqueSampleTakesItsColour) {
    const Tensor sigma = Tensor::from({1, 2}, {1e6, 1.0});
    const Tensor color = Tensor::from({1, 2, 3}, {0.2, 0.4, 0.6, 1.0, 1.0, 1.0});
    const auto out = composite(sigma, color, Tensor(), Tensor::from({1, 2}, {0.1, 0.1}), {0.0, 0.0, 0.0});
    EXPECT_DOUBLE_EQ(out.color.at({0, 0}), 0.2);
    EXPECT_DOUBLE_EQ(out.color.at({0, 2}), 0.6);
    EXPECT_DOUBLE_EQ(out.weight_sum.at({0}), 1.0);
}

TEST(Renderer, WindowMatchesFullRender) {
    const AnalyticField field(generate_scene(9));
    RenderOptions opts;
    opts.n_samples = 16;
    opts.seed = 3;
    const CameraPose pose = front_camera(12);
    const RenderOutput full = render(field, pose, opts);
    const RenderOutput win = render_window(field, pose, 2, 5, 4, 6, opts);
    for (std::int64_t c = 0; c < 3; ++c) {
        for (std::int64_t i = 0; i < 4; ++i) {
            for (std::int64_t j = 0; j < 6; ++j) EXPECT_EQ(win.image.at({c, i, j}), full.image.at({c, i + 2, j + 5}));
        }
    }
}

TEST(Renderer, ReconstructorRenderShapes) {
    ReconstructorConfig cfg;
    cfg.image_size = 8;
    cfg.feature_channels = 4;
    cfg.volume_resolution = 4;
    cfg.triplane_resolution = 8;
    cfg.render_feature_channels = 3;
    cfg.mlp_hidden = 8;
    cfg.n_samples = 4;
    const Reconstructor model(cfg, 0);
    Rng rng(1);
    const PosedImage view{rng.uniform_tensor({3, 8, 8}, 0.0, 1.0), front_camera(8)};
    const TriPlane tp = model.reconstruct({view});
    EXPECT_EQ(tp.planes.shape(), (Shape{4, 3, 8, 8}));
    const RenderOutput out = model.render_view(tp, orbit_pose(1.3, 1.0, 0.3, 7.2, 8, 8), model.default_render_options(0, true));
    EXPECT_EQ(out.image.shape(), (Shape{3, 8, 8}));
    EXPECT_EQ(out.feature_map.shape(), (Shape{3, 8, 8}));
    for (const double w : out.weight_sums.data()) {
        EXPECT_GE(w, 0.0);
        EXPECT_LE(w, 1.0);
    }
}

// --- synthetic scenes ------------------------------------------------------

TEST(Scene, GenerationIsDeterministicAndInsideTheCube) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const SyntheticScene a = generate_scene(seed), b = generate_scene(seed);
        EXPECT_EQ(a.id, b.id);
        ASSERT_GE(a.primitives.size(), 1u);
        ASSERT_LE(a.primitives.size(), 4u);
        for (const auto& p : a.primitives) {
            const Vec3 hi = p.center + p.extent(), lo = p.center - p.extent();
            EXPECT_LE(hi.maxCoeff(), 0.5 + 1e-12);
            EXPECT_GE(lo.minCoeff(), -0.5 - 1e-12);
        }
    }
}

TEST(Scene, OrbitCamerasLookAtTheOrigin) {
    const auto poses = random_orbit(4, 40, 32);
    for (const auto& p : poses) {
        const auto s = spherical_coords(p.center());
        EXPECT_NEAR(s.radius, 1.3, 1e-12);
        EXPECT_GE(s.elevation, -30.0 * std::numbers::pi / 180.0 - 1e-12);
        EXPECT_LE(s.elevation, 60.0 * std::numbers::pi / 180.0 + 1e-12);
        const Vec2 uv = project(p, Vec3::Zero());
        EXPECT_NEAR(uv.x(), 16.0, 1e-9);
        EXPECT_NEAR(uv.y(), 16.0, 1e-9);
    }
}

TEST(Scene, BoxAndSphereDistances) {
    Primitive box;
    box.kind = PrimitiveKind::box;
    box.size = Vec3(0.1, 0.2, 0.3);
    EXPECT_NEAR(box.signed_distance(Vec3(0.3, 0, 0)), 0.2, 1e-12);
    EXPECT_NEAR(box.signed_distance(Vec3::Zero()), -0.1, 1e-12);
    Primitive sphere;
    sphere.size = Vec3::Constant(0.2);
    EXPECT_NEAR(sphere.signed_distance(Vec3(0, 0.5, 0)), 0.3, 1e-12);
}

TEST(Scene, GroundTruthConvergesWithSamples) {
    const SyntheticScene scene = generate_scene(12);
    const CameraPose pose = front_camera(16);
    const Tensor ref = render_ground_truth(scene, pose, 512);
    const double coarse = max_abs_diff(render_ground_truth(scene, pose, 16), ref);
    const double fine = max_abs_diff(render_ground_truth(scene, pose, 128), ref);
    EXPECT_LT(fine, coarse);
    EXPECT_LT(fine, 0.05);
}
