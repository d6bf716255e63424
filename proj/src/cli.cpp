// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/cli.hpp"

#include "liftrefine/checkpoint.hpp"
#include "liftrefine/checks.hpp"
#include "liftrefine/dataset.hpp"
#include "liftrefine/error.hpp"
#include "liftrefine/image_io.hpp"
#include "liftrefine/losses.hpp"
#include "liftrefine/pipeline.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

namespace liftrefine {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

// Reads settings with defaults and records every value used, so the saved
// snapshot reproduces the run.
class Settings {
public:
    explicit Settings(Config& c) : c_(c) {}
    std::int64_t i(const std::string& key, std::int64_t def) {
        if (!c_.has(key)) c_.set(key, std::to_string(def));
        return c_.get_int(key, def);
    }
    std::uint64_t u(const std::string& key, std::uint64_t def) {
        if (!c_.has(key)) c_.set(key, std::to_string(def));
        return c_.get_uint(key, def);
    }
    double d(const std::string& key, double def) {
        if (!c_.has(key)) c_.set(key, format_double(def));
        return c_.get_double(key, def);
    }
    bool b(const std::string& key, bool def) {
        if (!c_.has(key)) c_.set(key, def ? "true" : "false");
        return c_.get_bool(key, def);
    }
    std::string s(const std::string& key, const std::string& def) {
        if (!c_.has(key)) c_.set(key, def);
        return c_.get_string(key, def);
    }
    std::string required(const std::string& key) {
        if (!c_.has(key) || c_.get_string(key, "").empty()) throw ValueError("missing required setting '" + key + "'");
        return c_.get_string(key, "");
    }
    template <typename E>
    E choice(const std::string& key, const std::string& def, const std::map<std::string, E>& options) {
        const std::string v = s(key, def);
        const auto it = options.find(v);
        if (it == options.end()) {
            std::string names;
            for (const auto& [k, _] : options) names += (names.empty() ? "" : ", ") + k;
            throw ValueError("setting '" + key + "' must be one of {" + names + "}, got '" + v + "'");
        }
        return it->second;
    }

private:
    Config& c_;
};

const std::map<std::string, UpsampleMode> kUpsampleModes{{"learned", UpsampleMode::learned},
                                                         {"bicubic", UpsampleMode::bicubic}};
const std::map<std::string, AttentionPlacement> kAttention{{"none", AttentionPlacement::none},
                                                           {"final_block", AttentionPlacement::final_block},
                                                           {"all_blocks", AttentionPlacement::all_blocks}};
const std::map<std::string, TargetStrategy> kTargets{{"uniform", TargetStrategy::uniform},
                                                     {"anchored", TargetStrategy::anchored}};
const std::map<std::string, PerceptualMode> kPerceptual{{"off", PerceptualMode::off},
                                                        {"gradient_pyramid", PerceptualMode::gradient_pyramid}};

template <typename E>
std::string name_of(const std::map<std::string, E>& options, E value) {
    for (const auto& [k, v] : options) {
        if (v == value) return k;
    }
    return {};
}

std::vector<std::int64_t> parse_index_list(const std::string& text) {
    std::vector<std::int64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::int64_t v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) throw ValueError("bad view index list '" + text + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ValueError("empty view index list");
    return out;
}

const SceneData& find_scene(const std::vector<SceneData>& scenes, const std::string& id) {
    for (const auto& s : scenes) {
        if (s.id == id) return s;
    }
    throw ValueError("scene '" + id + "' not found in dataset");
}

const PosedImage& view_at(const SceneData& scene, std::int64_t index) {
    if (index < 0 || index >= static_cast<std::int64_t>(scene.views.size())) {
        throw ValueError("view index " + std::to_string(index) + " out of range for scene " + scene.id);
    }
    return scene.views[static_cast<std::size_t>(index)];
}

Reconstructor load_reconstructor(const fs::path& run_dir) {
    const Config cfg = Config::load(run_dir / "config.txt");
    Reconstructor model(reconstructor_config_from(cfg), cfg.get_uint("seed", 0));
    ParameterList params = model.parameters();
    assign_tensors(params, load_tensors(run_dir / "checkpoints" / "recon.lrtn"));
    return model;
}

std::unique_ptr<Denoiser> load_denoiser(const fs::path& run_dir, NoiseSchedule* schedule) {
    const Config cfg = Config::load(run_dir / "config.txt");
    auto model = std::make_unique<Denoiser>(denoiser_config_from(cfg), cfg.get_uint("seed", 0));
    ParameterList params = model->parameters();
    assign_tensors(params, load_tensors(run_dir / "checkpoints" / "diffusion.lrtn"));
    if (schedule) *schedule = NoiseSchedule::linear(cfg.get_int("diff.T", 1000));
    return model;
}

void save_image_pair(const fs::path& stem, const Tensor& image) {
    fs::create_directories(stem.parent_path());
    write_png(fs::path(stem).replace_extension(".png"), image);
    write_pfm(fs::path(stem).replace_extension(".pfm"), image);
}

// --- subcommands -------------------------------------------------------------

int cmd_gen_data(Config& cfg, std::ostream& out) {
    Settings s(cfg);
    DatasetConfig dc;
    dc.seed = s.u("seed", 0);
    dc.train_scenes = s.i("data.train_scenes", dc.train_scenes);
    dc.val_scenes = s.i("data.val_scenes", dc.val_scenes);
    dc.test_scenes = s.i("data.test_scenes", dc.test_scenes);
    dc.views = s.i("data.views", dc.views);
    dc.resolution = s.i("data.resolution", dc.resolution);
    dc.gt_samples = s.i("data.gt_samples", dc.gt_samples);
    const fs::path root = s.required("paths.out");
    const auto manifest = generate_dataset(root, dc);
    cfg.save(root / "config.txt");
    out << "wrote " << manifest.scenes.size() << " scenes to " << root.string() << "\n";
    return kExitOk;
}

ReconTrainConfig recon_train_config(Settings& s) {
    ReconTrainConfig tc;
    tc.seed = s.u("seed", 0);
    tc.steps = s.i("train.steps", tc.steps);
    tc.lr = s.d("train.lr", tc.lr);
    tc.patch = s.i("train.patch", tc.patch);
    tc.max_inputs = s.i("train.max_inputs", tc.max_inputs);
    tc.target = s.choice("train.target", "uniform", kTargets);
    tc.anchor_prob = s.d("train.anchor_prob", tc.anchor_prob);
    tc.loss.lambda_perc = s.d("train.lambda_perc", tc.loss.lambda_perc);
    tc.loss.perceptual_mode = s.choice("train.perceptual", "gradient_pyramid", kPerceptual);
    tc.grad_clip = s.d("train.grad_clip", tc.grad_clip);
    tc.log_every = s.i("train.log_every", tc.log_every);
    tc.val_every = s.i("train.val_every", tc.val_every);
    tc.patience = s.i("train.patience", 4);
    return tc;
}

int cmd_train_recon(Config& cfg, std::ostream& out) {
    Settings s(cfg);
    const fs::path data = s.required("paths.data");
    const fs::path run = s.required("paths.out");
    const auto manifest = load_manifest(data / "manifest.txt");
    const auto train = load_scenes(manifest, "train");
    const auto val = load_scenes(manifest, "val");
    if (train.empty()) throw ValueError("dataset has no train scenes");
    ReconTrainConfig tc = recon_train_config(s);
    tc.dump_dir = run / "logs";
    ReconstructorConfig rc = reconstructor_config_from(cfg);
    if (!cfg.has("recon.image_size")) rc.image_size = train.front().views.front().image.dim(1);
    store_reconstructor_config(cfg, rc);
    cfg.save(run / "config.txt");

    Reconstructor model(rc, tc.seed);
    const TrainResult result = train_reconstructor(model, train, val, tc);
    save_tensors(run / "checkpoints" / "recon.lrtn", model.parameters());
    write_loss_log(run / "logs" / "loss.tsv", result.log);
    out << "trained " << result.steps_run << " steps" << (result.early_stopped ? " (early stop)" : "");
    if (!std::isnan(result.best_val_psnr)) out << ", best validation PSNR " << result.best_val_psnr << " dB at step " << result.best_step;
    out << "\n";
    return kExitOk;
}

int cmd_precompute(Config& cfg, std::ostream& out) {
    Settings s(cfg);
    const fs::path data = s.required("paths.data");
    const fs::path recon = s.required("paths.recon");
    const fs::path run = s.required("paths.out");
    const std::uint64_t seed = s.u("seed", 0);
    const std::string split = s.s("cond.split", "train");
    cfg.save(run / "config.txt");
    const Reconstructor model = load_reconstructor(recon);
    const auto scenes = load_scenes(load_manifest(data / "manifest.txt"), split);
    const auto records = precompute_conditions(model, scenes, seed);
    save_tensors(run / "conditions.lrtn", conditions_to_tensors(records));
    out << "wrote " << records.size() << " condition records\n";
    return kExitOk;
}

int cmd_train_diff(Config& cfg, std::ostream& out) {
    Settings s(cfg);
    const fs::path cond = s.required("paths.cond");
    const fs::path run = s.required("paths.out");
    const auto records = conditions_from_tensors(load_tensors(cond / "conditions.lrtn"));
    if (records.empty()) throw ValueError("no condition records in " + cond.string());
    DiffTrainConfig tc;
    tc.seed = s.u("seed", 0);
    tc.steps = s.i("diff.steps", tc.steps);
    tc.lr = s.d("diff.lr", tc.lr);
    tc.p_uncond = s.d("diff.p_uncond", tc.p_uncond);
    tc.grad_clip = s.d("diff.grad_clip", tc.grad_clip);
    tc.log_every = s.i("diff.log_every", tc.log_every);
    tc.dump_dir = run / "logs";
    const auto schedule = NoiseSchedule::linear(s.i("diff.T", 1000));
    DenoiserConfig dc = denoiser_config_from(cfg);
    dc.image_size = records.front().target.dim(1);
    dc.cond_channels = records.front().feature.dim(0);
    store_denoiser_config(cfg, dc);
    cfg.save(run / "config.txt");

    Denoiser model(dc, tc.seed);
    const TrainResult result = train_diffusion(model, records, schedule, tc);
    save_tensors(run / "checkpoints" / "diffusion.lrtn", model.parameters());
    write_loss_log(run / "logs" / "loss.tsv", result.log);
    out << "trained " << result.steps_run << " steps; loss moving average " << initial_moving_average(result.losses, 100)
        << " -> " << min_moving_average(result.losses, 100) << "\n";
    return kExitOk;
}

struct InferSetup {
    std::vector<PosedImage> inputs;
    PosedImage target;
};

int cmd_infer(Config& cfg, std::ostream& out) {
    Settings s(cfg);
    const fs::path data = s.required("paths.data");
    const fs::path recon = s.required("paths.recon");
    const fs::path run = s.required("paths.out");
    const std::uint64_t seed = s.u("seed", 0);
    const std::string mode = s.s("infer.mode", "det");
    if (mode != "det" && mode != "prog") throw ValueError("infer.mode must be det or prog, got '" + mode + "'");
    const auto scenes = load_scenes(load_manifest(data / "manifest.txt"));
    if (scenes.empty()) throw ValueError("dataset is empty");
    const SceneData& scene = find_scene(scenes, s.s("infer.scene", scenes.back().id));
    InferSetup setup;
    for (auto i : parse_index_list(s.s("infer.inputs", "0"))) setup.inputs.push_back(view_at(scene, i));
    setup.target = view_at(scene, s.i("infer.target", static_cast<std::int64_t>(scene.views.size()) / 2));
    const std::int64_t iters = s.i("infer.iters", 4);
    const double guidance = s.d("infer.guidance", 2.0);
    const std::int64_t steps = s.i("infer.steps", 200);
    if (mode == "prog") s.required("paths.diff");
    cfg.save(run / "config.txt");

    const Reconstructor model = load_reconstructor(recon);
    const RenderOptions ro = model.default_render_options(seed, false);
    RenderOutput final;
    if (mode == "det") {
        final = infer_deterministic(model, setup.inputs, setup.target.pose, ro);
    } else {
        NoiseSchedule schedule = NoiseSchedule::linear(1);
        const auto denoiser = load_denoiser(s.required("paths.diff"), &schedule);
        DiffusionGenerator gen(*denoiser, schedule, steps, guidance, seed);
        const auto result = infer_progressive(model, setup.inputs, setup.target.pose, iters, gen, ro);
        for (std::size_t i = 0; i < result.intermediates.size(); ++i) {
            save_image_pair(run / "renders" / ("intermediate_" + std::to_string(i + 1)), result.intermediates[i]);
        }
        write_poses(run / "renders" / "intermediate_poses.txt", result.poses);
        final = result.final;
    }
    save_image_pair(run / "renders" / "final", final.image);
    save_tensors(run / "renders" / "final_features.lrtn", {{"feature_map", final.feature_map}});
    const double p = psnr(final.image, setup.target.image);
    const double q = ssim(final.image, setup.target.image);
    std::ofstream ms(run / "metrics.tsv", std::ios::binary);
    write_metrics_report(ms, {{scene.id + "/final", p, q}});
    out << "mode " << mode << ": PSNR " << p << " dB, SSIM " << q << "\n";
    return kExitOk;
}

int cmd_eval(Config& cfg, std::ostream& out) {
    Settings s(cfg);
    const fs::path data = s.required("paths.data");
    const fs::path recon = s.required("paths.recon");
    const fs::path run = s.required("paths.out");
    const std::uint64_t seed = s.u("seed", 0);
    const std::string split = s.s("eval.split", "test");
    const auto input_idx = parse_index_list(s.s("eval.inputs", "0"));
    const std::string mode = s.s("eval.mode", "det");
    if (mode != "det" && mode != "prog") throw ValueError("eval.mode must be det or prog, got '" + mode + "'");
    const std::int64_t iters = s.i("infer.iters", 4);
    const double guidance = s.d("infer.guidance", 2.0);
    const std::int64_t steps = s.i("infer.steps", 200);
    if (mode == "prog") s.required("paths.diff");
    cfg.save(run / "config.txt");

    const Reconstructor model = load_reconstructor(recon);
    const RenderOptions ro = model.default_render_options(seed, false);
    std::unique_ptr<Denoiser> denoiser;
    NoiseSchedule schedule = NoiseSchedule::linear(1);
    if (mode == "prog") denoiser = load_denoiser(s.required("paths.diff"), &schedule);
    const auto scenes = load_scenes(load_manifest(data / "manifest.txt"), split);
    if (scenes.empty()) throw ValueError("split '" + split + "' is empty");
    std::vector<MetricRow> rows;
    for (const auto& scene : scenes) {
        std::vector<PosedImage> inputs;
        for (auto i : input_idx) inputs.push_back(view_at(scene, i));
        for (std::int64_t v = 0; v < static_cast<std::int64_t>(scene.views.size()); ++v) {
            if (std::find(input_idx.begin(), input_idx.end(), v) != input_idx.end()) continue;
            const auto& target = scene.views[static_cast<std::size_t>(v)];
            RenderOutput r;
            if (mode == "det") {
                r = infer_deterministic(model, inputs, target.pose, ro);
            } else {
                DiffusionGenerator gen(*denoiser, schedule, steps, guidance, mix_seed(seed, static_cast<std::uint64_t>(v)));
                r = infer_progressive(model, inputs, target.pose, iters, gen, ro).final;
            }
            char name[64];
            std::snprintf(name, sizeof name, "%s/view_%03lld", scene.id.c_str(), static_cast<long long>(v));
            rows.push_back({name, psnr(r.image, target.image), ssim(r.image, target.image)});
        }
    }
    std::ofstream ms(run / "metrics.tsv", std::ios::binary);
    write_metrics_report(ms, rows);
    double mp = 0.0, mq = 0.0;
    for (const auto& r : rows) {
        mp += r.psnr;
        mq += r.ssim;
    }
    out << rows.size() << " views: mean PSNR " << mp / static_cast<double>(rows.size()) << " dB, mean SSIM "
        << mq / static_cast<double>(rows.size()) << "\n";
    return kExitOk;
}

int report_checks(const std::vector<CheckResult>& results, Config& cfg, std::ostream& out) {
    Settings s(cfg);
    const std::string run = s.s("paths.out", "");
    std::size_t failed = 0;
    std::ostringstream report;
    for (const auto& r : results) {
        report << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
        if (!r.passed) ++failed;
    }
    if (!run.empty()) {
        cfg.save(fs::path(run) / "config.txt");
        std::ofstream(fs::path(run) / "report.txt", std::ios::binary) << report.str();
    }
    for (const auto& r : results) {
        if (!r.passed || results.size() <= 8) out << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
    }
    out << results.size() - failed << "/" << results.size() << " checks passed\n";
    return failed == 0 ? kExitOk : kExitNumerical;
}

int cmd_grad_check(Config& cfg, std::ostream& out) {
    Settings s(cfg);
    return report_checks(gradient_suite(s.i("check.seeds", 5)), cfg, out);
}

int cmd_oracle_check(Config& cfg, std::ostream& out) {
    Settings s(cfg);
    const std::uint64_t seed = s.u("seed", 0);
    return report_checks({rendering_oracle_check(s.i("check.render_configs", 100), seed),
                          camera_roundtrip_check(s.i("check.poses", 50), s.i("check.pixels_per_pose", 20), seed),
                          ddim_inversion_check(s.i("check.ddim_pairs", 20), seed)},
                         cfg, out);
}

struct Subcommand {
    CLI::App* app;
    std::function<int(Config&, std::ostream&)> run;
    std::vector<std::pair<CLI::Option*, std::string>> bindings;
};

} // namespace

ReconstructorConfig reconstructor_config_from(const Config& config) {
    Config c = config;
    Settings s(c);
    ReconstructorConfig rc;
    rc.image_size = s.i("recon.image_size", rc.image_size);
    rc.feature_channels = s.i("recon.feature_channels", rc.feature_channels);
    rc.volume_resolution = s.i("recon.volume_resolution", rc.volume_resolution);
    rc.triplane_resolution = s.i("recon.triplane_resolution", rc.triplane_resolution);
    rc.upsample_mode = s.choice("recon.upsample_mode", "learned", kUpsampleModes);
    rc.upsample_attention = s.choice("recon.upsample_attention", "none", kAttention);
    rc.render_feature_channels = s.i("recon.render_feature_channels", rc.render_feature_channels);
    rc.mlp_hidden = s.i("recon.mlp_hidden", rc.mlp_hidden);
    rc.n_samples = s.i("recon.n_samples", rc.n_samples);
    rc.validate();
    return rc;
}

void store_reconstructor_config(Config& c, const ReconstructorConfig& rc) {
    c.set("recon.image_size", std::to_string(rc.image_size));
    c.set("recon.feature_channels", std::to_string(rc.feature_channels));
    c.set("recon.volume_resolution", std::to_string(rc.volume_resolution));
    c.set("recon.triplane_resolution", std::to_string(rc.triplane_resolution));
    c.set("recon.upsample_mode", name_of(kUpsampleModes, rc.upsample_mode));
    c.set("recon.upsample_attention", name_of(kAttention, rc.upsample_attention));
    c.set("recon.render_feature_channels", std::to_string(rc.render_feature_channels));
    c.set("recon.mlp_hidden", std::to_string(rc.mlp_hidden));
    c.set("recon.n_samples", std::to_string(rc.n_samples));
}

DenoiserConfig denoiser_config_from(const Config& config) {
    DenoiserConfig dc;
    dc.image_size = config.get_int("diff.image_size", dc.image_size);
    dc.cond_channels = config.get_int("diff.cond_channels", dc.cond_channels);
    dc.base_channels = config.get_int("diff.base_channels", dc.base_channels);
    dc.time_dim = config.get_int("diff.time_dim", dc.time_dim);
    dc.embed_dim = config.get_int("diff.embed_dim", dc.embed_dim);
    return dc;
}

void store_denoiser_config(Config& c, const DenoiserConfig& dc) {
    c.set("diff.image_size", std::to_string(dc.image_size));
    c.set("diff.cond_channels", std::to_string(dc.cond_channels));
    c.set("diff.base_channels", std::to_string(dc.base_channels));
    c.set("diff.time_dim", std::to_string(dc.time_dim));
    c.set("diff.embed_dim", std::to_string(dc.embed_dim));
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Few-view 3D reconstruction with tri-plane lifting and diffusion refinement"};
    app.name("liftrefine");
    app.require_subcommand(1, 1);

    std::vector<Subcommand> subs;
    std::map<std::string, std::string> values;  // storage for bound options, keyed by setting
    std::string config_path;
    std::vector<std::string> overrides;

    auto add = [&](const std::string& name, const std::string& help, std::function<int(Config&, std::ostream&)> run,
                   const std::vector<std::tuple<std::string, std::string, std::string>>& options) {
        Subcommand sc{app.add_subcommand(name, help), std::move(run), {}};
        sc.app->add_option("--config", config_path, "flat key = value settings file");
        sc.app->add_option("--set", overrides, "override any setting, KEY=VALUE (repeatable)");
        auto bind = [&](const std::string& flag, const std::string& key, const std::string& desc) {
            sc.bindings.emplace_back(sc.app->add_option(flag, values[key], desc + " [" + key + "]"), key);
        };
        bind("--seed", "seed", "random seed");
        for (const auto& [flag, key, desc] : options) bind(flag, key, desc);
        subs.push_back(std::move(sc));
    };

    add("gen-data", "render a synthetic multi-view dataset", cmd_gen_data,
        {{"--out", "paths.out", "dataset directory"},
         {"--scenes", "data.train_scenes", "training scenes"},
         {"--val-scenes", "data.val_scenes", "validation scenes"},
         {"--test-scenes", "data.test_scenes", "test scenes"},
         {"--views", "data.views", "views per scene"},
         {"--resolution", "data.resolution", "image side in pixels"},
         {"--gt-samples", "data.gt_samples", "ray samples for ground truth"}});
    add("train-recon", "train the lift stage", cmd_train_recon,
        {{"--data", "paths.data", "dataset directory"},
         {"--out", "paths.out", "run directory"},
         {"--steps", "train.steps", "optimizer steps"},
         {"--lr", "train.lr", "learning rate"},
         {"--patch", "train.patch", "rendered window side, 0 = full image"},
         {"--target", "train.target", "uniform|anchored"},
         {"--lambda", "train.lambda_perc", "perceptual proxy weight"},
         {"--patience", "train.patience", "validations without improvement before stopping"},
         {"--val-every", "train.val_every", "validation period in steps, 0 = off"},
         {"--triplane-res", "recon.triplane_resolution", "tri-plane resolution"},
         {"--upsample", "recon.upsample_mode", "learned|bicubic"},
         {"--upsample-attention", "recon.upsample_attention", "none|final_block|all_blocks"}});
    add("precompute-cond", "render feature-map conditions for the diffusion stage", cmd_precompute,
        {{"--data", "paths.data", "dataset directory"},
         {"--recon", "paths.recon", "train-recon run directory"},
         {"--out", "paths.out", "output directory"},
         {"--split", "cond.split", "dataset split"}});
    add("train-diff", "train the conditional diffusion model", cmd_train_diff,
        {{"--cond", "paths.cond", "precompute-cond output directory"},
         {"--out", "paths.out", "run directory"},
         {"--steps", "diff.steps", "optimizer steps"},
         {"--lr", "diff.lr", "learning rate"},
         {"--T", "diff.T", "diffusion timesteps"},
         {"--p-uncond", "diff.p_uncond", "condition dropout probability"}});
    add("infer", "render a novel view", cmd_infer,
        {{"--data", "paths.data", "dataset directory"},
         {"--recon", "paths.recon", "train-recon run directory"},
         {"--diff", "paths.diff", "train-diff run directory"},
         {"--out", "paths.out", "output directory"},
         {"--scene", "infer.scene", "scene id (default: last scene)"},
         {"--inputs", "infer.inputs", "comma-separated input view indices"},
         {"--target", "infer.target", "target view index"},
         {"--mode", "infer.mode", "det|prog"},
         {"--iters", "infer.iters", "progressive iterations"},
         {"--guidance", "infer.guidance", "classifier-free guidance weight"},
         {"--steps", "infer.steps", "DDIM steps"}});
    add("eval", "PSNR/SSIM over a dataset split", cmd_eval,
        {{"--data", "paths.data", "dataset directory"},
         {"--recon", "paths.recon", "train-recon run directory"},
         {"--diff", "paths.diff", "train-diff run directory"},
         {"--out", "paths.out", "output directory"},
         {"--split", "eval.split", "train|val|test"},
         {"--inputs", "eval.inputs", "comma-separated input view indices"},
         {"--mode", "eval.mode", "det|prog"},
         {"--iters", "infer.iters", "progressive iterations"},
         {"--guidance", "infer.guidance", "classifier-free guidance weight"},
         {"--steps", "infer.steps", "DDIM steps"}});
    add("grad-check", "finite-difference gradient suite", cmd_grad_check,
        {{"--out", "paths.out", "report directory"}, {"--seeds", "check.seeds", "random instances per check"}});
    add("oracle-check", "rendering, camera and DDIM inversion oracles", cmd_oracle_check,
        {{"--out", "paths.out", "report directory"}});

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitValidation;
    }

    for (auto& sc : subs) {
        if (!sc.app->parsed()) continue;
        try {
            Config cfg = config_path.empty() ? Config{} : Config::load(config_path);
            for (const auto& [opt, key] : sc.bindings) {
                if (opt->count() > 0) cfg.set(key, values[key]);
            }
            for (const auto& kv : overrides) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos || eq == 0) throw ValueError("--set expects KEY=VALUE, got '" + kv + "'");
                cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
            }
            return sc.run(cfg, out);
        } catch (const NumericalError& e) {
            err << "numerical failure: " << e.what() << "\n";
            return kExitNumerical;
        } catch (const Error& e) {
            err << "error: " << e.what() << "\n";
            return kExitValidation;
        } catch (const std::filesystem::filesystem_error& e) {
            err << "error: " << e.what() << "\n";
            return kExitValidation;
        }
    }
    return kExitValidation;
}

} // namespace liftrefine
