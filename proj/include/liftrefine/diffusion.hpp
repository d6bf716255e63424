// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/nn.hpp"
#include "liftrefine/rng.hpp"
#include "liftrefine/tensor.hpp"

#include <cstdint>
#include <vector>

namespace liftrefine {

/// Linear beta schedule. Timesteps are 1-based; alpha_bar(0) = 1.
class NoiseSchedule {
public:
    /// betas from beta_start to beta_end over T steps. For T < 1000 both ends
    /// are scaled by 1000/T (capped at 0.999) so the total noise stays
    /// comparable to the 1000-step schedule.
    static NoiseSchedule linear(std::int64_t steps, double beta_start = 1e-4, double beta_end = 0.02);

    std::int64_t steps() const { return static_cast<std::int64_t>(betas_.size()); }
    double beta(std::int64_t t) const;
    double alpha_bar(std::int64_t t) const;
    double snr(std::int64_t t) const { return alpha_bar(t) / (1.0 - alpha_bar(t)); }

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;  // index t, alpha_bars_[0] = 1
};

/// sqrt(ab) x0 + sqrt(1 - ab) eps with ab = alpha_bar(t); t in [1, T].
Tensor add_noise(const Tensor& x0, std::int64_t t, const Tensor& eps, const NoiseSchedule& schedule);

struct DenoiserInput {
    Tensor x_t;             ///< [3, H, W]
    std::int64_t t = 1;
    Tensor cond_feature;    ///< [C_f, H, W]
    Tensor cond_embedding;  ///< [E]
    bool cond_dropped = false;
};

/// Anything that predicts the added noise.
class EpsilonModel {
public:
    virtual ~EpsilonModel() = default;
    virtual Tensor predict_eps(const DenoiserInput& input) const = 0;
};

struct DenoiserConfig {
    std::int64_t image_size = 32;
    std::int64_t cond_channels = 16;
    std::int64_t base_channels = 16;
    std::int64_t time_dim = 32;
    std::int64_t embed_dim = 32;
};

/// U-shaped conv network over concat(x_t, cond_feature): two pooled
/// downsampling stages, an attention bottleneck and skip concatenations.
/// Time enters every residual block as a per-channel shift; the input-view
/// embedding as a per-channel affine modulation. Dropped conditions are
/// replaced with learned null tokens. The output conv starts at zero.
class Denoiser final : public EpsilonModel {
public:
    Denoiser(const DenoiserConfig& config, std::uint64_t seed);

    Tensor predict_eps(const DenoiserInput& input) const override;
    /// Global embedding [E] of an input view [3,H,W].
    Tensor embed_image(const Tensor& image) const;

    ParameterList parameters() const;
    const DenoiserConfig& config() const { return config_; }
    void zero_init_output();

    struct ResBlock {
        Conv2d conv1, conv2, skip;
        bool has_skip = false;
        Linear time_shift, cond_scale, cond_shift;
    };

private:
    Tensor res_block(const ResBlock& b, const Tensor& x, const Tensor& temb, const Tensor& cemb) const;
    ResBlock make_block(std::int64_t in, std::int64_t out, Rng& rng) const;
    void collect_block(ParameterList& out, const ResBlock& b, const std::string& prefix) const;

    DenoiserConfig config_;
    Conv2d in_conv_, out_conv_;
    Linear time1_, time2_;
    ResBlock down0_, down1_, mid_, up1_, up0_;
    Linear att_q_, att_k_, att_v_, att_o_;
    Conv2d embed_conv1_, embed_conv2_;
    Tensor null_feature_;    ///< [C_f]
    Tensor null_embedding_;  ///< [E]
};

/// Sinusoidal embedding of a timestep, [dim] with dim even.
Tensor timestep_embedding(std::int64_t t, std::int64_t dim);

struct DiffusionSample {
    std::int64_t t;
    Tensor eps;
    bool dropped;
};

/// Draws t uniform in [1, T], eps ~ N(0, I) and the drop flag (p_uncond).
DiffusionSample draw_diffusion_sample(Rng& rng, const Shape& shape, const NoiseSchedule& schedule, double p_uncond);

/// Mean squared error between predicted and true noise for one drawn sample.
Tensor diffusion_loss(const EpsilonModel& model, const Tensor& x0, const Tensor& cond_feature,
                      const Tensor& cond_embedding, const NoiseSchedule& schedule, const DiffusionSample& sample);

/// Convenience overload drawing the sample from `rng`.
Tensor diffusion_loss(const EpsilonModel& model, const Tensor& x0, const Tensor& cond_feature,
                      const Tensor& cond_embedding, const NoiseSchedule& schedule, double p_uncond, Rng& rng);

/// eps_uncond + w (eps_cond - eps_uncond). w == 1 returns the conditional
/// prediction itself and w == 0 the unconditional one.
Tensor guided_eps(const EpsilonModel& model, const DenoiserInput& input, double guidance_w);

/// Descending timesteps t_start = tau_n > ... > tau_1 >= 1, evenly spaced.
std::vector<std::int64_t> ddim_timesteps(std::int64_t t_start, std::int64_t n_steps);

/// Deterministic DDIM (eta = 0) from x_t at `t_start` down to t = 0.
/// Returns the final estimate without clamping.
Tensor ddim_from(const EpsilonModel& model, const Tensor& x_t, std::int64_t t_start, const Tensor& cond_feature,
                 const Tensor& cond_embedding, const NoiseSchedule& schedule, std::int64_t n_steps,
                 double guidance_w);

/// Samples x_T ~ N(0, I) of `shape` from `seed`, runs DDIM from T and
/// clamps to [0, 1].
Tensor ddim_sample(const EpsilonModel& model, const Tensor& cond_feature, const Tensor& cond_embedding,
                   const NoiseSchedule& schedule, std::int64_t n_steps, double guidance_w, std::uint64_t seed,
                   const Shape& shape);

} // namespace liftrefine
