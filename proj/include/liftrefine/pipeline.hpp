// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/camera.hpp"
#include "liftrefine/diffusion.hpp"
#include "liftrefine/losses.hpp"
#include "liftrefine/reconstructor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace liftrefine {

/// All posed views of one scene.
struct SceneData {
    std::string id;
    std::string split = "train";
    std::vector<PosedImage> views;
};

struct TrainSample {
    std::vector<PosedImage> inputs;  ///< 1 to 3 views
    PosedImage target;
};

enum class TargetStrategy {
    uniform,   ///< target drawn uniformly from the scene's views
    anchored,  ///< target is the first input with probability anchor_prob
};

struct ReconTrainConfig {
    std::int64_t steps = 2000;
    double lr = 1e-3;
    /// Side of the square pixel window rendered per step; 0 renders the full image.
    std::int64_t patch = 16;
    std::int64_t max_inputs = 3;
    TargetStrategy target = TargetStrategy::uniform;
    double anchor_prob = 0.8;
    LossConfig loss;
    double grad_clip = 0.0;
    std::int64_t log_every = 50;
    /// Validation period in steps; 0 disables validation and early stopping.
    std::int64_t val_every = 250;
    /// Validations without improvement before stopping; 0 never stops early.
    std::int64_t patience = 0;
    std::uint64_t seed = 0;
    /// Where the offending batch is written on a non-finite loss; empty skips the dump.
    std::filesystem::path dump_dir;
};

struct LogRow {
    std::int64_t step = 0;
    double loss = 0.0;
    double psnr = std::numeric_limits<double>::quiet_NaN();  ///< NaN when not evaluated
};

struct TrainResult {
    std::int64_t steps_run = 0;
    bool early_stopped = false;
    double best_val_psnr = std::numeric_limits<double>::quiet_NaN();
    std::int64_t best_step = -1;
    std::vector<LogRow> log;
    /// Per-step training loss, one entry per executed step.
    std::vector<double> losses;
};

TrainSample draw_train_sample(const SceneData& scene, const ReconTrainConfig& config, Rng& rng);

/// Inputs at evenly spaced view indices (up to `n_inputs`) and every other
/// view as a target; returns the mean PSNR over targets with full renders.
double evaluate_scene(const Reconstructor& model, const SceneData& scene, std::int64_t n_inputs = 3);

/// Adam on recon_loss. With validation scenes (or the training scenes when
/// `val` is empty) the best-PSNR weights are restored at the end.
TrainResult train_reconstructor(Reconstructor& model, const std::vector<SceneData>& train,
                                const std::vector<SceneData>& val, const ReconTrainConfig& config);

/// "step\tloss\tpsnr" header then one row per log entry; missing PSNR is "nan".
void write_loss_log(const std::filesystem::path& path, const std::vector<LogRow>& rows);

// --- stage 2 ---------------------------------------------------------------

struct ConditionRecord {
    Tensor target;   ///< ground-truth novel view [3,H,W]
    Tensor feature;  ///< rendered feature map at the novel pose [F,H,W]
    Tensor input;    ///< the input view the feature map was lifted from [3,H,W]
};

/// One record per view of every scene: the view is the target and a seeded
/// random other view of the same scene is the input.
std::vector<ConditionRecord> precompute_conditions(const Reconstructor& model, const std::vector<SceneData>& scenes,
                                                   std::uint64_t seed);

ParameterList conditions_to_tensors(const std::vector<ConditionRecord>& records);
std::vector<ConditionRecord> conditions_from_tensors(const ParameterList& tensors);

struct DiffTrainConfig {
    std::int64_t steps = 3000;
    double lr = 1e-4;
    double p_uncond = 0.1;
    double grad_clip = 1.0;
    std::int64_t log_every = 50;
    std::uint64_t seed = 0;
    std::filesystem::path dump_dir;
};

TrainResult train_diffusion(Denoiser& model, const std::vector<ConditionRecord>& records,
                            const NoiseSchedule& schedule, const DiffTrainConfig& config);

/// Mean of the first `window` entries.
double initial_moving_average(const std::vector<double>& values, std::size_t window);
/// Smallest trailing moving average over `window` entries.
double min_moving_average(const std::vector<double>& values, std::size_t window);

// --- inference -------------------------------------------------------------

RenderOutput infer_deterministic(const Reconstructor& model, const std::vector<PosedImage>& inputs,
                                 const CameraPose& target, const RenderOptions& options);

/// Produces an intermediate image at a pose from the rendered feature map.
class ViewGenerator {
public:
    virtual ~ViewGenerator() = default;
    virtual Tensor generate(const RenderOutput& rendered, const Tensor& input_image, std::int64_t iteration) = 0;
};

/// Classifier-free guided DDIM sampling conditioned on the feature map and
/// the input-view embedding.
class DiffusionGenerator final : public ViewGenerator {
public:
    DiffusionGenerator(const Denoiser& model, NoiseSchedule schedule, std::int64_t n_steps, double guidance_w,
                       std::uint64_t seed);
    Tensor generate(const RenderOutput& rendered, const Tensor& input_image, std::int64_t iteration) override;

private:
    const Denoiser& model_;
    NoiseSchedule schedule_;
    std::int64_t n_steps_;
    double guidance_w_;
    std::uint64_t seed_;
};

/// Returns the reconstructor's own rendering unchanged.
class EchoGenerator final : public ViewGenerator {
public:
    Tensor generate(const RenderOutput& rendered, const Tensor& input_image, std::int64_t iteration) override;
};

enum class Provenance { input, generated };

/// Append-only list of posed views; inputs precede generated entries.
class SceneBuffer {
public:
    struct Entry {
        PosedImage view;
        Provenance provenance;
    };

    explicit SceneBuffer(const std::vector<PosedImage>& inputs);
    void append_generated(PosedImage view);
    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<PosedImage> views() const;

private:
    std::vector<Entry> entries_;
};

struct ProgressiveResult {
    RenderOutput final;
    std::vector<Tensor> intermediates;
    std::vector<CameraPose> poses;
    SceneBuffer buffer;
    std::vector<std::size_t> buffer_sizes;  ///< buffer size after each iteration
};

/// Walks interpolated poses from the first input to the target, generating
/// one view per pose and adding it to the buffer, then reconstructs from the
/// whole buffer and renders the target.
ProgressiveResult infer_progressive(const Reconstructor& model, const std::vector<PosedImage>& inputs,
                                    const CameraPose& target, std::int64_t n_iters, ViewGenerator& generator,
                                    const RenderOptions& options,
                                    InterpolationMode mode = InterpolationMode::spherical);

} // namespace liftrefine
