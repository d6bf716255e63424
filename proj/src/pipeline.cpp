// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/pipeline.hpp"

#include "liftrefine/checkpoint.hpp"
#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace liftrefine {

namespace {

std::vector<std::vector<double>> snapshot(const ParameterList& params) {
    std::vector<std::vector<double>> out;
    for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    return out;
}

void restore(ParameterList& params, const std::vector<std::vector<double>>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = params[i].tensor.mutable_data();
        std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
}

Tensor pose_tensor(const CameraPose& p) {
    std::vector<double> v = {p.fx, p.fy, p.cx, p.cy, static_cast<double>(p.width), static_cast<double>(p.height)};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) v.push_back(p.rotation(r, c));
    }
    for (int r = 0; r < 3; ++r) v.push_back(p.translation[r]);
    return Tensor::from({18}, std::move(v));
}

[[noreturn]] void fail_nonfinite(const std::filesystem::path& dump_dir, std::int64_t step, const ParameterList& batch) {
    std::string where;
    if (!dump_dir.empty()) {
        std::filesystem::create_directories(dump_dir);
        const auto path = dump_dir / ("nonfinite_step_" + std::to_string(step) + ".lrtn");
        save_tensors(path, batch);
        where = "; batch written to " + path.string();
    }
    throw NumericalError("non-finite loss at step " + std::to_string(step) + where);
}

Tensor crop(const Tensor& image, std::int64_t row0, std::int64_t col0, std::int64_t h, std::int64_t w) {
    return slice(slice(image, 1, row0, row0 + h), 2, col0, col0 + w);
}

std::vector<std::int64_t> spread_indices(std::int64_t count, std::int64_t n) {
    std::vector<std::int64_t> out;
    for (std::int64_t i = 0; i < std::min(count, n); ++i) out.push_back(i * n / std::min(count, n));
    return out;
}

} // namespace

TrainSample draw_train_sample(const SceneData& scene, const ReconTrainConfig& config, Rng& rng) {
    const auto n = static_cast<std::int64_t>(scene.views.size());
    if (n == 0) throw ValueError("scene " + scene.id + " has no views");
    if (config.max_inputs < 1 || config.max_inputs > 3) throw ValueError("max_inputs must lie in [1, 3]");
    TrainSample s;
    const auto count = rng.uniform_int(1, config.max_inputs);
    for (std::int64_t i = 0; i < count; ++i) s.inputs.push_back(scene.views[static_cast<std::size_t>(rng.uniform_int(0, n - 1))]);
    if (config.target == TargetStrategy::anchored && rng.uniform() < config.anchor_prob) {
        s.target = s.inputs.front();
    } else {
        s.target = scene.views[static_cast<std::size_t>(rng.uniform_int(0, n - 1))];
    }
    return s;
}

double evaluate_scene(const Reconstructor& model, const SceneData& scene, std::int64_t n_inputs) {
    NoGradGuard guard;
    const auto n = static_cast<std::int64_t>(scene.views.size());
    const auto in_idx = spread_indices(n_inputs, n);
    std::vector<PosedImage> inputs;
    for (auto i : in_idx) inputs.push_back(scene.views[static_cast<std::size_t>(i)]);
    const TriPlane tp = model.reconstruct(inputs);
    const RenderOptions opt = model.default_render_options(0, false);
    double total = 0.0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (n > static_cast<std::int64_t>(in_idx.size()) && std::find(in_idx.begin(), in_idx.end(), i) != in_idx.end()) continue;
        const auto& v = scene.views[static_cast<std::size_t>(i)];
        total += psnr(model.render_view(tp, v.pose, opt).image, v.image);
        ++count;
    }
    return total / static_cast<double>(count);
}

TrainResult train_reconstructor(Reconstructor& model, const std::vector<SceneData>& train,
                                const std::vector<SceneData>& val, const ReconTrainConfig& config) {
    if (train.empty()) throw ValueError("train_reconstructor: dataset is empty");
    if (config.steps < 0) throw ValueError("train_reconstructor: steps must be >= 0");
    const auto& eval_set = val.empty() ? train : val;
    ParameterList params = model.parameters();
    AdamOptions ao;
    ao.lr = config.lr;
    ao.grad_clip = config.grad_clip;
    Adam opt(params, ao);
    Rng rng(mix_seed(config.seed, 0x7e1));
    TrainResult result;
    std::vector<std::vector<double>> best;
    std::int64_t stale = 0;
    double window_loss = 0.0;
    std::int64_t window_count = 0;

    auto validate = [&](std::int64_t step) {
        double total = 0.0;
        for (const auto& s : eval_set) total += evaluate_scene(model, s);
        const double p = total / static_cast<double>(eval_set.size());
        if (!(p <= result.best_val_psnr)) {  // also true while best is NaN
            result.best_val_psnr = p;
            result.best_step = step;
            best = snapshot(params);
            stale = 0;
        } else {
            ++stale;
        }
        return p;
    };

    for (std::int64_t step = 0; step < config.steps; ++step) {
        const auto& scene = train[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(train.size()) - 1))];
        const TrainSample sample = draw_train_sample(scene, config, rng);
        const std::int64_t h = sample.target.image.dim(1), w = sample.target.image.dim(2);
        const std::int64_t ph = config.patch > 0 ? std::min(config.patch, h) : h;
        const std::int64_t pw = config.patch > 0 ? std::min(config.patch, w) : w;
        const std::int64_t r0 = rng.uniform_int(0, h - ph), c0 = rng.uniform_int(0, w - pw);

        const TriPlane tp = model.reconstruct(sample.inputs);
        const auto out = model.render_window(tp, sample.target.pose, r0, c0, ph, pw,
                                             model.default_render_options(mix_seed(config.seed, static_cast<std::uint64_t>(step)), true));
        const Tensor loss = recon_loss(out.image, crop(sample.target.image, r0, c0, ph, pw), config.loss);
        const double lv = loss.item();
        if (!std::isfinite(lv)) {
            ParameterList batch;
            for (std::size_t i = 0; i < sample.inputs.size(); ++i) {
                batch.push_back({"input_" + std::to_string(i) + "/image", sample.inputs[i].image});
                batch.push_back({"input_" + std::to_string(i) + "/pose", pose_tensor(sample.inputs[i].pose)});
            }
            batch.push_back({"target/image", sample.target.image});
            batch.push_back({"target/pose", pose_tensor(sample.target.pose)});
            fail_nonfinite(config.dump_dir, step, batch);
        }
        backward(loss);
        opt.step();
        result.losses.push_back(lv);
        result.steps_run = step + 1;
        window_loss += lv;
        ++window_count;

        const bool last = step + 1 == config.steps;
        const bool do_val = config.val_every > 0 && ((step + 1) % config.val_every == 0 || last);
        const bool do_log = config.log_every > 0 && ((step + 1) % config.log_every == 0 || last);
        LogRow row;
        row.step = step + 1;
        if (do_val) row.psnr = validate(step + 1);
        if (do_log || do_val) {
            row.loss = window_loss / static_cast<double>(window_count);
            window_loss = 0.0;
            window_count = 0;
            result.log.push_back(row);
        }
        if (do_val && config.patience > 0 && stale >= config.patience) {
            result.early_stopped = true;
            break;
        }
    }
    if (!best.empty()) restore(params, best);
    return result;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LogRow>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw ValueError("cannot write " + path.string());
    os << "step\tloss\tpsnr\n";
    char buf[96];
    for (const auto& r : rows) {
        if (std::isnan(r.psnr)) {
            std::snprintf(buf, sizeof buf, "%lld\t%.8g\tnan\n", static_cast<long long>(r.step), r.loss);
        } else {
            std::snprintf(buf, sizeof buf, "%lld\t%.8g\t%.4f\n", static_cast<long long>(r.step), r.loss, r.psnr);
        }
        os << buf;
    }
}

std::vector<ConditionRecord> precompute_conditions(const Reconstructor& model, const std::vector<SceneData>& scenes,
                                                   std::uint64_t seed) {
    NoGradGuard guard;
    Rng rng(mix_seed(seed, 0xc0d));
    std::vector<ConditionRecord> out;
    const RenderOptions opt = model.default_render_options(seed, false);
    for (const auto& scene : scenes) {
        const auto n = static_cast<std::int64_t>(scene.views.size());
        for (std::int64_t i = 0; i < n; ++i) {
            std::int64_t j = i;
            if (n > 1) {
                j = rng.uniform_int(0, n - 2);
                if (j >= i) ++j;
            }
            const auto& input = scene.views[static_cast<std::size_t>(j)];
            const auto& target = scene.views[static_cast<std::size_t>(i)];
            const TriPlane tp = model.reconstruct({input});
            const RenderOutput r = model.render_view(tp, target.pose, opt);
            out.push_back({target.image, r.feature_map, input.image});
        }
    }
    return out;
}

ParameterList conditions_to_tensors(const std::vector<ConditionRecord>& records) {
    ParameterList out;
    char prefix[32];
    for (std::size_t i = 0; i < records.size(); ++i) {
        std::snprintf(prefix, sizeof prefix, "record_%06zu/", i);
        out.push_back({std::string(prefix) + "target", records[i].target});
        out.push_back({std::string(prefix) + "feature", records[i].feature});
        out.push_back({std::string(prefix) + "input", records[i].input});
    }
    return out;
}

std::vector<ConditionRecord> conditions_from_tensors(const ParameterList& tensors) {
    if (tensors.size() % 3 != 0) throw ValueError("condition container must hold three tensors per record");
    std::vector<ConditionRecord> out;
    char prefix[32];
    for (std::size_t i = 0; i < tensors.size() / 3; ++i) {
        std::snprintf(prefix, sizeof prefix, "record_%06zu/", i);
        const std::string p(prefix);
        out.push_back({find_tensor(tensors, p + "target"), find_tensor(tensors, p + "feature"),
                       find_tensor(tensors, p + "input")});
    }
    return out;
}

TrainResult train_diffusion(Denoiser& model, const std::vector<ConditionRecord>& records,
                            const NoiseSchedule& schedule, const DiffTrainConfig& config) {
    if (records.empty()) throw ValueError("train_diffusion: no condition records");
    if (config.steps < 0) throw ValueError("train_diffusion: steps must be >= 0");
    ParameterList params = model.parameters();
    AdamOptions ao;
    ao.lr = config.lr;
    ao.grad_clip = config.grad_clip;
    Adam opt(params, ao);
    Rng rng(mix_seed(config.seed, 0xd1f7));
    TrainResult result;
    double window_loss = 0.0;
    std::int64_t window_count = 0;
    for (std::int64_t step = 0; step < config.steps; ++step) {
        const auto& rec = records[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(records.size()) - 1))];
        const DiffusionSample sample = draw_diffusion_sample(rng, rec.target.shape(), schedule, config.p_uncond);
        const Tensor embedding = model.embed_image(rec.input);
        const Tensor loss = diffusion_loss(model, rec.target, rec.feature, embedding, schedule, sample);
        const double lv = loss.item();
        if (!std::isfinite(lv)) {
            fail_nonfinite(config.dump_dir, step,
                           {{"target", rec.target}, {"feature", rec.feature}, {"input", rec.input}, {"eps", sample.eps},
                            {"t", Tensor::scalar(static_cast<double>(sample.t))}});
        }
        backward(loss);
        opt.step();
        result.losses.push_back(lv);
        result.steps_run = step + 1;
        window_loss += lv;
        ++window_count;
        if (config.log_every > 0 && ((step + 1) % config.log_every == 0 || step + 1 == config.steps)) {
            LogRow row;
            row.step = step + 1;
            row.loss = window_loss / static_cast<double>(window_count);
            result.log.push_back(row);
            window_loss = 0.0;
            window_count = 0;
        }
    }
    return result;
}

double initial_moving_average(const std::vector<double>& values, std::size_t window) {
    if (values.empty() || window == 0) throw ValueError("moving average of an empty series");
    const std::size_t n = std::min(window, values.size());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[i];
    return s / static_cast<double>(n);
}

double min_moving_average(const std::vector<double>& values, std::size_t window) {
    if (values.empty() || window == 0) throw ValueError("moving average of an empty series");
    const std::size_t n = std::min(window, values.size());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[i];
    double best = s;
    for (std::size_t i = n; i < values.size(); ++i) {
        s += values[i] - values[i - n];
        best = std::min(best, s);
    }
    return best / static_cast<double>(n);
}

RenderOutput infer_deterministic(const Reconstructor& model, const std::vector<PosedImage>& inputs,
                                 const CameraPose& target, const RenderOptions& options) {
    NoGradGuard guard;
    return model.render_view(model.reconstruct(inputs), target, options);
}

DiffusionGenerator::DiffusionGenerator(const Denoiser& model, NoiseSchedule schedule, std::int64_t n_steps,
                                       double guidance_w, std::uint64_t seed)
    : model_(model), schedule_(std::move(schedule)), n_steps_(n_steps), guidance_w_(guidance_w), seed_(seed) {
    if (n_steps < 1 || n_steps > schedule_.steps()) throw ValueError("sampling steps must lie in [1, T]");
    if (guidance_w < 0.0) throw ValueError("guidance weight must be >= 0");
}

Tensor DiffusionGenerator::generate(const RenderOutput& rendered, const Tensor& input_image, std::int64_t iteration) {
    NoGradGuard guard;
    const Tensor embedding = model_.embed_image(input_image);
    return ddim_sample(model_, rendered.feature_map, embedding, schedule_, n_steps_, guidance_w_,
                       mix_seed(seed_, static_cast<std::uint64_t>(iteration)), rendered.image.shape());
}

Tensor EchoGenerator::generate(const RenderOutput& rendered, const Tensor&, std::int64_t) { return rendered.image; }

SceneBuffer::SceneBuffer(const std::vector<PosedImage>& inputs) {
    if (inputs.empty()) throw ValueError("scene buffer needs at least one input view");
    for (const auto& v : inputs) entries_.push_back({v, Provenance::input});
}

void SceneBuffer::append_generated(PosedImage view) { entries_.push_back({std::move(view), Provenance::generated}); }

std::vector<PosedImage> SceneBuffer::views() const {
    std::vector<PosedImage> out;
    for (const auto& e : entries_) out.push_back(e.view);
    return out;
}

ProgressiveResult infer_progressive(const Reconstructor& model, const std::vector<PosedImage>& inputs,
                                    const CameraPose& target, std::int64_t n_iters, ViewGenerator& generator,
                                    const RenderOptions& options, InterpolationMode mode) {
    if (n_iters < 0) throw ValueError("progressive inference: n_iters must be >= 0");
    NoGradGuard guard;
    ProgressiveResult result{{}, {}, {}, SceneBuffer(inputs), {}};
    if (n_iters > 0) result.poses = interpolate_poses(inputs.front().pose, target, n_iters, mode);
    for (std::int64_t i = 0; i < n_iters; ++i) {
        const CameraPose& pose = result.poses[static_cast<std::size_t>(i)];
        const RenderOutput r = model.render_view(model.reconstruct(result.buffer.views()), pose, options);
        Tensor image = generator.generate(r, inputs.front().image, i + 1);
        result.intermediates.push_back(image);
        result.buffer.append_generated({image, pose});
        result.buffer_sizes.push_back(result.buffer.size());
    }
    result.final = infer_deterministic(model, result.buffer.views(), target, options);
    return result;
}

} // namespace liftrefine
