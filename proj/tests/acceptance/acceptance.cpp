// SPDX-License-Identifier: Apache-2.0
// Acceptance runner. `acceptance 5 7` runs criteria 5 and 7; no arguments runs
// all nine. Prints one PASS/FAIL line per criterion and exits non-zero if any
// criterion fails.
#include "liftrefine/checks.hpp"
#include "liftrefine/cli.hpp"
#include "liftrefine/dataset.hpp"
#include "liftrefine/diffusion.hpp"
#include "liftrefine/losses.hpp"
#include "liftrefine/ops.hpp"
#include "liftrefine/pipeline.hpp"
#include "liftrefine/reconstructor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace liftrefine;
namespace fs = std::filesystem;

namespace {

// Pilot-derived thresholds (single synthetic scene, 24 views at 32x32).
constexpr double kHeldInPsnr = 25.0;
constexpr double kHeldOutPsnr = 18.0;
constexpr std::uint64_t kOverfitSceneSeed = 3;

struct Outcome {
    bool passed = false;
    std::string detail;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, a, b, c, d);
    return buf;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("liftrefine_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

SceneData overfit_scene() {
    DatasetConfig dc;
    dc.views = 24;
    dc.resolution = 32;
    return make_scene_data(kOverfitSceneSeed, "train", dc);
}

/// Poses of the overfit scene that are not among its training views.
std::vector<CameraPose> held_out_poses() { return random_orbit(kOverfitSceneSeed + 1000, 4, 32); }

/// Mean PSNR over held-out poses with the same evenly spaced inputs as evaluate_scene.
double held_out_psnr(const Reconstructor& model, const SceneData& scene) {
    NoGradGuard guard;
    const auto gt_scene = generate_scene(kOverfitSceneSeed);
    const std::vector<PosedImage> inputs{scene.views[0], scene.views[8], scene.views[16]};
    const TriPlane tp = model.reconstruct(inputs);
    double total = 0.0;
    const auto poses = held_out_poses();
    for (const auto& pose : poses) {
        const auto out = model.render_view(tp, pose, model.default_render_options(0, false));
        total += psnr(out.image, render_ground_truth(gt_scene, pose, 128, kOverfitSceneSeed));
    }
    return total / static_cast<double>(poses.size());
}

bool same_bits(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin(),
                                                [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; });
}

constexpr std::int64_t kOverfitSteps = 2000;

void train_overfit(Reconstructor& model, const SceneData& scene) {
    ReconTrainConfig tc;
    tc.steps = kOverfitSteps;
    tc.val_every = 250;
    tc.seed = 0;
    train_reconstructor(model, {scene}, {}, tc);
}

double tail_mean(const std::vector<double>& v, std::size_t n) {
    n = std::min(n, v.size());
    return std::accumulate(v.end() - static_cast<std::ptrdiff_t>(n), v.end(), 0.0) / static_cast<double>(n);
}

Outcome criterion1() {
    Stopwatch sw;
    const auto results = gradient_suite(5);
    std::size_t failed = 0;
    std::string first_failure;
    for (const auto& r : results) {
        if (!r.passed) {
            if (failed++ == 0) first_failure = r.name + " " + r.detail;
        }
    }
    const double secs = sw.seconds();
    Outcome o;
    o.passed = failed == 0 && secs < 300.0;
    o.detail = std::to_string(results.size() - failed) + "/" + std::to_string(results.size()) + " gradient checks, " +
               fmt("%.1f s", secs) + (failed ? ", first failure: " + first_failure : "");
    return o;
}

Outcome from_check(const CheckResult& r) { return {r.passed, r.name + ": " + r.detail}; }

Outcome criterion2() { return from_check(rendering_oracle_check(100, 0)); }
Outcome criterion3() { return from_check(camera_roundtrip_check(50, 20, 0)); }
Outcome criterion4() { return from_check(ddim_inversion_check(20, 0)); }

Outcome criterion5() {
    Stopwatch sw;
    const SceneData scene = overfit_scene();
    Reconstructor model(ReconstructorConfig{}, 0);
    train_overfit(model, scene);
    const double held_in = evaluate_scene(model, scene, 3);
    const double held_out = held_out_psnr(model, scene);
    const double secs = sw.seconds();
    return {held_in > kHeldInPsnr && held_out > kHeldOutPsnr && secs < 600.0,
            fmt("held-in %.2f dB (> %.0f), held-out %.2f dB (> %.0f), ", held_in, kHeldInPsnr, held_out, kHeldOutPsnr) +
                fmt("%.0f steps, %.1f s", static_cast<double>(kOverfitSteps), secs)};
}

Outcome criterion6() {
    const SceneData scene = overfit_scene();
    Reconstructor model(ReconstructorConfig{}, 0);
    train_overfit(model, scene);

    // Default inference settings: input view 0, target view views/2, 4 iterations.
    const std::vector<PosedImage> inputs{scene.views[0]};
    const PosedImage& target = scene.views[scene.views.size() / 2];
    const std::int64_t iters = 4;
    const RenderOptions opts = model.default_render_options(0, false);
    const RenderOutput det = infer_deterministic(model, inputs, target.pose, opts);

    EchoGenerator echo;
    const ProgressiveResult zero = infer_progressive(model, inputs, target.pose, 0, echo, opts);
    const bool bit_exact = same_bits(zero.final.image, det.image) && same_bits(zero.final.feature_map, det.feature_map);

    const ProgressiveResult prog = infer_progressive(model, inputs, target.pose, iters, echo, opts);
    bool grows = prog.buffer_sizes.size() == static_cast<std::size_t>(iters);
    for (std::size_t k = 0; grows && k < prog.buffer_sizes.size(); ++k) {
        grows = prog.buffer_sizes[k] == inputs.size() + k + 1;
    }
    // The final image is the deterministic reconstruction from inputs plus echoed renders.
    const bool consistent = same_bits(prog.final.image, infer_deterministic(model, prog.buffer.views(), target.pose, opts).image);

    // Control: the same poses filled with ground-truth images instead of echoes.
    std::vector<PosedImage> gt_buffer = inputs;
    const auto gt_scene = generate_scene(kOverfitSceneSeed);
    for (const auto& pose : prog.poses) gt_buffer.push_back({render_ground_truth(gt_scene, pose, 128, kOverfitSceneSeed), pose});
    const double p_gt = psnr(infer_deterministic(model, gt_buffer, target.pose, opts).image, target.image);

    const double p_det = psnr(det.image, target.image);
    const double p_prog = psnr(prog.final.image, target.image);
    const bool close = std::abs(p_prog - p_det) <= 0.5;
    return {bit_exact && grows && consistent && close,
            std::string("n_iters=0 bit-exact: ") + (bit_exact ? "yes" : "no") + ", buffer +1 per iteration: " +
                (grows ? "yes" : "no") + ", final = reconstruction from buffer: " + (consistent ? "yes" : "no") +
                fmt(", echo PSNR %.2f dB vs deterministic %.2f dB (|diff| <= 0.5), ground-truth buffer %.2f dB", p_prog,
                    p_det, p_gt)};
}

Outcome criterion7() {
    const SceneData scene = overfit_scene();
    int upsample_wins = 0, resolution_wins = 0;
    std::ostringstream detail;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ReconTrainConfig tc;
        tc.steps = 3000;
        tc.patch = 8;
        tc.val_every = 0;
        tc.seed = seed;
        // Arms: learned upsampler at tri-plane 64 (the default), bicubic at 64, learned at 16.
        ReconstructorConfig arms[3];
        arms[1].upsample_mode = UpsampleMode::bicubic;
        arms[2].triplane_resolution = 16;
        double loss[3], quality[3];
        for (int m = 0; m < 3; ++m) {
            Reconstructor model(arms[m], seed);
            loss[m] = tail_mean(train_reconstructor(model, {scene}, {}, tc).losses, 250);
            quality[m] = m == 1 ? 0.0 : evaluate_scene(model, scene, 3);
        }
        upsample_wins += loss[0] <= loss[1];
        resolution_wins += quality[0] >= quality[2];
        detail << fmt(" [seed %.0f: loss %.5f/%.5f, PSNR %.2f", static_cast<double>(seed), loss[0], loss[1], quality[0])
               << fmt("/%.2f]", quality[2]);
    }
    return {upsample_wins >= 4 && resolution_wins >= 4,
            "learned<=bicubic loss " + std::to_string(upsample_wins) + "/5, res64>=res16 PSNR " +
                std::to_string(resolution_wins) + "/5 (3000 steps each);" + detail.str()};
}

Outcome criterion8() {
    DatasetConfig dc;
    dc.seed = 11;
    dc.train_scenes = 4;
    dc.val_scenes = 0;
    dc.test_scenes = 0;
    std::vector<SceneData> scenes;
    for (std::int64_t i = 0; i < dc.train_scenes; ++i) scenes.push_back(make_scene_data(scene_seed(dc.seed, i), "train", dc));

    Reconstructor recon(ReconstructorConfig{}, 0);
    ReconTrainConfig tc;
    tc.steps = 300;
    tc.patch = 8;
    tc.val_every = 0;
    train_reconstructor(recon, scenes, {}, tc);
    const auto records = precompute_conditions(recon, scenes, 0);

    DenoiserConfig cfg;
    cfg.cond_channels = recon.config().render_feature_channels;
    const NoiseSchedule schedule = NoiseSchedule::linear(1000);
    int drops = 0;
    std::ostringstream detail;
    Denoiser first(cfg, 0);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Denoiser model(cfg, seed);
        DiffTrainConfig dtc;
        dtc.steps = 3000;
        dtc.seed = seed;
        const auto result = train_diffusion(model, records, schedule, dtc);
        const double initial = initial_moving_average(result.losses, 100);
        const double best = min_moving_average(result.losses, 100);
        drops += best < 0.9 * initial;
        detail << fmt(" [seed %.0f: %.4f -> %.4f]", static_cast<double>(seed), initial, best);
        if (seed == 0) first = model;
    }

    const auto& rec = records.front();
    const Tensor emb = first.embed_image(rec.input);
    const Shape shape = rec.target.shape();
    const Tensor a = ddim_sample(first, rec.feature, emb, schedule, 50, 2.0, 1, shape);
    const Tensor b = ddim_sample(first, rec.feature, emb, schedule, 50, 2.0, 2, shape);
    double l2 = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) l2 += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    l2 = std::sqrt(l2);
    return {drops >= 4 && l2 > 0.0,
            "loss < 0.9x initial moving average for " + std::to_string(drops) + "/5 seeds, sample L2 distance " +
                fmt("%.4f;", l2) + detail.str()};
}

/// Every file under `root` keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        files[fs::relative(e.path(), root).generic_string()] =
            std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    return files;
}

Outcome criterion9() {
    const fs::path dir = scratch_dir("determinism");
    const std::string d = (dir / "data").string(), r = (dir / "recon").string(), c = (dir / "cond").string(),
                      t = (dir / "diff").string();
    struct Command {
        std::string name;
        fs::path output;
        std::vector<std::string> args;
    };
    const std::vector<Command> commands{
        {"gen-data", d, {"gen-data", "--out", d, "--scenes", "2", "--val-scenes", "1", "--test-scenes", "1", "--views", "6", "--seed", "5"}},
        {"train-recon", r, {"train-recon", "--data", d, "--out", r, "--steps", "30", "--patch", "8", "--val-every", "10", "--seed", "1"}},
        {"precompute-cond", c, {"precompute-cond", "--data", d, "--recon", r, "--out", c, "--seed", "2"}},
        {"train-diff", t, {"train-diff", "--cond", c, "--out", t, "--steps", "30", "--T", "100", "--seed", "3"}},
        {"infer det", dir / "infer_det", {"infer", "--data", d, "--recon", r, "--out", (dir / "infer_det").string(), "--inputs", "0,2", "--target", "4"}},
        {"infer prog", dir / "infer_prog", {"infer", "--data", d, "--recon", r, "--diff", t, "--out", (dir / "infer_prog").string(), "--mode", "prog", "--iters", "2", "--steps", "10", "--seed", "4"}},
        {"eval", dir / "eval", {"eval", "--data", d, "--recon", r, "--diff", t, "--out", (dir / "eval").string(), "--mode", "prog", "--iters", "1", "--steps", "5"}},
        {"grad-check", dir / "grad", {"grad-check", "--out", (dir / "grad").string(), "--seeds", "1"}},
        {"oracle-check", dir / "oracle", {"oracle-check", "--out", (dir / "oracle").string()}},
    };
    std::vector<std::string> mismatched;
    std::size_t files = 0;
    for (const auto& cmd : commands) {
        std::ostringstream out, err;
        std::map<std::string, std::string> runs[2];
        bool ok = true;
        for (int k = 0; k < 2; ++k) {
            fs::remove_all(cmd.output);
            ok = ok && run_cli(cmd.args, out, err) == kExitOk;
            if (ok) runs[k] = snapshot(cmd.output);
        }
        // Leave the second run in place for the commands that consume it.
        if (!ok || runs[0].empty() || runs[0] != runs[1]) mismatched.push_back(cmd.name + (ok ? "" : " (exit)"));
        files += runs[1].size();
    }
    fs::remove_all(dir);
    std::string detail = std::to_string(commands.size() - mismatched.size()) + "/" + std::to_string(commands.size()) +
                         " subcommands byte-identical over " + std::to_string(files) + " files";
    for (const auto& m : mismatched) detail += "; differs: " + m;
    return {mismatched.empty(), detail};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                         criterion6, criterion7, criterion8, criterion9};
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        const int n = std::atoi(argv[i]);
        if (n < 1 || n > static_cast<int>(criteria.size())) {
            std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
            return 1;
        }
        selected.push_back(n);
    }
    if (selected.empty()) {
        for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) selected.push_back(n);
    }
    int failures = 0;
    for (const int n : selected) {
        Outcome o;
        try {
            o = criteria[static_cast<std::size_t>(n - 1)]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("criterion %d: %s  %s\n", n, o.passed ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
        failures += !o.passed;
    }
    return failures == 0 ? 0 : 1;
}
