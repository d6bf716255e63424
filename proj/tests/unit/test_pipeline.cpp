// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/checkpoint.hpp"
#include "liftrefine/cli.hpp"
#include "liftrefine/dataset.hpp"
#include "liftrefine/error.hpp"
#include "liftrefine/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace liftrefine;
namespace fs = std::filesystem;

namespace {

ReconstructorConfig tiny_recon() {
    ReconstructorConfig c;
    c.image_size = 8;
    c.feature_channels = 4;
    c.volume_resolution = 4;
    c.triplane_resolution = 8;
    c.render_feature_channels = 2;
    c.mlp_hidden = 8;
    c.n_samples = 6;
    return c;
}

DatasetConfig tiny_dataset() {
    DatasetConfig d;
    d.seed = 9;
    d.train_scenes = 2;
    d.val_scenes = 1;
    d.test_scenes = 1;
    d.views = 4;
    d.resolution = 8;
    d.gt_samples = 32;
    return d;
}

SceneData tiny_scene(std::uint64_t seed = 1) { return make_scene_data(seed, "train", tiny_dataset()); }

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "liftrefine_unit" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Returns a constant grey image and counts calls.
class GreyGenerator final : public ViewGenerator {
public:
    int calls = 0;
    Tensor generate(const RenderOutput& rendered, const Tensor&, std::int64_t) override {
        ++calls;
        return Tensor::full(rendered.image.shape(), 0.5);
    }
};

int cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    return run_cli(args, out, err);
}

} // namespace

TEST(Pipeline, TrainSamplesComeFromTheScene) {
    const SceneData scene = tiny_scene();
    ReconTrainConfig cfg;
    cfg.target = TargetStrategy::anchored;
    cfg.anchor_prob = 1.0;
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        const TrainSample s = draw_train_sample(scene, cfg, rng);
        EXPECT_GE(s.inputs.size(), 1u);
        EXPECT_LE(s.inputs.size(), 3u);
        EXPECT_EQ(s.target.image.impl(), s.inputs.front().image.impl());
    }
}

TEST(Pipeline, ShortTrainingRunsAndLogs) {
    const SceneData scene = tiny_scene();
    Reconstructor model(tiny_recon(), 0);
    ReconTrainConfig cfg;
    cfg.steps = 6;
    cfg.patch = 4;
    cfg.log_every = 2;
    cfg.val_every = 3;
    const TrainResult r = train_reconstructor(model, {scene}, {}, cfg);
    EXPECT_EQ(r.steps_run, 6);
    EXPECT_EQ(r.losses.size(), 6u);
    EXPECT_FALSE(std::isnan(r.best_val_psnr));
    const fs::path log = fresh_dir("log") / "loss.tsv";
    write_loss_log(log, r.log);
    EXPECT_EQ(read_file(log).rfind("step\tloss\tpsnr\n", 0), 0u);
}

TEST(Pipeline, BufferGrowsByOnePerIteration) {
    const SceneData scene = tiny_scene();
    const Reconstructor model(tiny_recon(), 0);
    GreyGenerator gen;
    const auto opts = model.default_render_options(0, false);
    const ProgressiveResult r = infer_progressive(model, {scene.views[0]}, scene.views[2].pose, 3, gen, opts);
    EXPECT_EQ(gen.calls, 3);
    ASSERT_EQ(r.buffer_sizes.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(r.buffer_sizes[k], k + 2);
    EXPECT_EQ(r.buffer.size(), 4u);
    EXPECT_EQ(r.buffer.entries().front().provenance, Provenance::input);
    EXPECT_EQ(r.buffer.entries().back().provenance, Provenance::generated);
    EXPECT_EQ(r.intermediates.size(), 3u);
    EXPECT_EQ(r.poses.size(), 3u);
    // The final render is the deterministic reconstruction from the whole buffer.
    const RenderOutput det = infer_deterministic(model, r.buffer.views(), scene.views[2].pose, opts);
    for (std::int64_t i = 0; i < det.image.numel(); ++i) EXPECT_EQ(det.image.data()[i], r.final.image.data()[i]);
}

TEST(Pipeline, ZeroIterationsMatchDeterministicBitwise) {
    const SceneData scene = tiny_scene();
    const Reconstructor model(tiny_recon(), 0);
    EchoGenerator echo;
    const auto opts = model.default_render_options(0, false);
    const std::vector<PosedImage> inputs{scene.views[0], scene.views[1]};
    const RenderOutput det = infer_deterministic(model, inputs, scene.views[3].pose, opts);
    const ProgressiveResult prog = infer_progressive(model, inputs, scene.views[3].pose, 0, echo, opts);
    ASSERT_EQ(det.image.numel(), prog.final.image.numel());
    for (std::int64_t i = 0; i < det.image.numel(); ++i) EXPECT_EQ(det.image.data()[i], prog.final.image.data()[i]);
}

TEST(Pipeline, EchoReturnsTheRendering) {
    EchoGenerator echo;
    RenderOutput r;
    r.image = Tensor::full({3, 2, 2}, 0.25);
    EXPECT_EQ(echo.generate(r, Tensor(), 0).at({1, 1, 1}), 0.25);
}

TEST(Pipeline, ConditionRecordsAreDeterministic) {
    const std::vector<SceneData> scenes{tiny_scene(1), tiny_scene(2)};
    const Reconstructor model(tiny_recon(), 0);
    const auto a = precompute_conditions(model, scenes, 5);
    const auto b = precompute_conditions(model, scenes, 5);
    ASSERT_EQ(a.size(), 8u);
    EXPECT_EQ(encode_tensors(conditions_to_tensors(a)), encode_tensors(conditions_to_tensors(b)));
    EXPECT_EQ(a[0].feature.shape(), (Shape{2, 8, 8}));
    const auto back = conditions_from_tensors(conditions_to_tensors(a));
    ASSERT_EQ(back.size(), a.size());
    EXPECT_EQ(back[3].target.at({0, 1, 1}), a[3].target.at({0, 1, 1}));
}

TEST(Pipeline, MovingAverages) {
    const std::vector<double> v{4, 4, 2, 2, 3, 3};
    EXPECT_DOUBLE_EQ(initial_moving_average(v, 2), 4.0);
    EXPECT_DOUBLE_EQ(min_moving_average(v, 2), 2.0);
}

// --- dataset ---------------------------------------------------------------

TEST(Dataset, GenerationIsByteDeterministicAndLoadable) {
    const fs::path a = fresh_dir("data_a"), b = fresh_dir("data_b");
    const DatasetManifest m = generate_dataset(a, tiny_dataset());
    generate_dataset(b, tiny_dataset());
    ASSERT_EQ(m.scenes.size(), 4u);
    EXPECT_EQ(read_file(a / "manifest.txt"), read_file(b / "manifest.txt"));
    const auto& e = m.scenes.front();
    EXPECT_EQ(read_file(view_image_path(m, e, 1, "pfm")),
              read_file(b / e.image_dir / view_image_path(m, e, 1, "pfm").filename()));

    const DatasetManifest loaded = load_manifest(a / "manifest.txt");
    EXPECT_EQ(load_scenes(loaded, "train").size(), 2u);
    EXPECT_EQ(load_scenes(loaded, "test").size(), 1u);
    EXPECT_EQ(load_scenes(loaded).front().views.size(), 4u);
}

TEST(Dataset, ManifestErrorsAreReported) {
    const fs::path dir = fresh_dir("bad_manifest");
    generate_dataset(dir, tiny_dataset());
    const std::string good = read_file(dir / "manifest.txt");
    const std::string first = good.substr(0, good.find('\n') + 1);
    std::ofstream(dir / "dup.txt") << first << first;
    EXPECT_THROW(load_manifest(dir / "dup.txt"), ValueError);
    std::ofstream(dir / "split.txt") << "x a b 4 holdout\n";
    EXPECT_THROW(load_manifest(dir / "split.txt"), ValueError);
    std::ofstream(dir / "missing.txt") << "x nowhere/poses.txt nowhere 4 train\n";
    EXPECT_THROW(load_manifest(dir / "missing.txt"), ValueError);
}

// --- command line ----------------------------------------------------------

TEST(Cli, ExitCodes) {
    EXPECT_EQ(cli({"no-such-command"}), kExitValidation);
    EXPECT_EQ(cli({"gen-data", "--bogus-flag", "1"}), kExitValidation);
    EXPECT_EQ(cli({"train-recon", "--out", (fresh_dir("cli_missing") / "run").string()}), kExitValidation);
    EXPECT_EQ(cli({"gen-data", "--out", fresh_dir("cli_bad").string(), "--views", "0"}), kExitValidation);
    EXPECT_EQ(cli({"gen-data", "--out", fresh_dir("cli_set").string(), "--set", "novalue"}), kExitValidation);
}

TEST(Cli, SnapshotReproducesTheRun) {
    const fs::path dir = fresh_dir("cli_snapshot");
    ASSERT_EQ(cli({"gen-data", "--out", (dir / "a").string(), "--scenes", "1", "--val-scenes", "0", "--test-scenes", "0",
                   "--views", "2", "--resolution", "8", "--set", "data.gt_samples=16", "--seed", "4"}),
              kExitOk);
    const Config snap = Config::load(dir / "a" / "config.txt");
    EXPECT_EQ(snap.get_string("seed", ""), "4");
    EXPECT_EQ(snap.get_string("data.gt_samples", ""), "16");
    // Replaying the snapshot with a different output reproduces the data.
    ASSERT_EQ(cli({"gen-data", "--config", (dir / "a" / "config.txt").string(), "--out", (dir / "b").string()}), kExitOk);
    EXPECT_EQ(read_file(dir / "a" / "manifest.txt"), read_file(dir / "b" / "manifest.txt"));
}

TEST(Cli, ConfigKeysRoundTrip) {
    ReconstructorConfig rc = tiny_recon();
    rc.upsample_mode = UpsampleMode::bicubic;
    Config c;
    store_reconstructor_config(c, rc);
    const ReconstructorConfig back = reconstructor_config_from(c);
    EXPECT_EQ(back.triplane_resolution, 8);
    EXPECT_EQ(back.upsample_mode, UpsampleMode::bicubic);
    DenoiserConfig dc;
    dc.base_channels = 8;
    store_denoiser_config(c, dc);
    EXPECT_EQ(denoiser_config_from(c).base_channels, 8);
}
