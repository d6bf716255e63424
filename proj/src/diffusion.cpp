// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/diffusion.hpp"

#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"

#include <algorithm>
#include <cmath>

namespace liftrefine {

NoiseSchedule NoiseSchedule::linear(std::int64_t steps, double beta_start, double beta_end) {
    if (steps < 1) throw ValueError("noise schedule needs at least one step");
    if (!(beta_start > 0.0) || !(beta_end >= beta_start) || !(beta_end < 1.0)) {
        throw ValueError("noise schedule needs 0 < beta_start <= beta_end < 1");
    }
    const double scale = steps < 1000 ? 1000.0 / static_cast<double>(steps) : 1.0;
    const double b0 = std::min(beta_start * scale, 0.999);
    const double b1 = std::min(beta_end * scale, 0.999);
    NoiseSchedule s;
    s.alpha_bars_.push_back(1.0);
    for (std::int64_t t = 1; t <= steps; ++t) {
        const double f = steps == 1 ? 1.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
        const double b = b0 + f * (b1 - b0);
        s.betas_.push_back(b);
        s.alpha_bars_.push_back(s.alpha_bars_.back() * (1.0 - b));
    }
    return s;
}

double NoiseSchedule::beta(std::int64_t t) const {
    if (t < 1 || t > steps()) throw ValueError("timestep " + std::to_string(t) + " outside [1, T]");
    return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(std::int64_t t) const {
    if (t < 0 || t > steps()) throw ValueError("timestep " + std::to_string(t) + " outside [0, T]");
    return alpha_bars_[static_cast<std::size_t>(t)];
}

Tensor add_noise(const Tensor& x0, std::int64_t t, const Tensor& eps, const NoiseSchedule& schedule) {
    if (t < 1) throw ValueError("add_noise: timestep must be >= 1");
    if (x0.shape() != eps.shape()) throw ShapeError("add_noise: x0 and eps shapes differ");
    const double ab = schedule.alpha_bar(t);
    return x0 * std::sqrt(ab) + eps * std::sqrt(1.0 - ab);
}

Tensor timestep_embedding(std::int64_t t, std::int64_t dim) {
    if (dim < 2 || dim % 2 != 0) throw ValueError("timestep_embedding: dim must be even");
    const std::int64_t half = dim / 2;
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (std::int64_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        const double a = static_cast<double>(t) * freq;
        v[static_cast<std::size_t>(i)] = std::sin(a);
        v[static_cast<std::size_t>(i + half)] = std::cos(a);
    }
    return Tensor::from({dim}, std::move(v));
}

Denoiser::Denoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
    if (config.image_size < 4 || config.image_size % 4 != 0) throw ValueError("denoiser image_size must be a multiple of 4");
    if (config.base_channels < 1 || config.cond_channels < 0 || config.embed_dim < 1) {
        throw ValueError("denoiser channel counts must be positive");
    }
    if (config.time_dim < 2 || config.time_dim % 2 != 0) throw ValueError("denoiser time_dim must be even");
    Rng rng(mix_seed(seed, 0xd1ff));
    const std::int64_t c = config.base_channels, c2 = 2 * c;
    in_conv_ = Conv2d(3 + config.cond_channels, c, 3, rng);
    time1_ = Linear(config.time_dim, config.time_dim, rng);
    time2_ = Linear(config.time_dim, config.time_dim, rng);
    down0_ = make_block(c, c, rng);
    down1_ = make_block(c, c2, rng);
    mid_ = make_block(c2, c2, rng);
    att_q_ = Linear(c2, c2, rng);
    att_k_ = Linear(c2, c2, rng);
    att_v_ = Linear(c2, c2, rng);
    att_o_ = Linear(c2, c2, rng);
    att_o_.zero_init();
    up1_ = make_block(c2 + c2, c2, rng);
    up0_ = make_block(c2 + c, c, rng);
    out_conv_ = Conv2d(c, 3, 3, rng);
    out_conv_.zero_init();
    embed_conv1_ = Conv2d(3, c, 3, rng);
    embed_conv2_ = Conv2d(c, config.embed_dim, 3, rng);
    null_feature_ = make_parameter({std::max<std::int64_t>(config.cond_channels, 1)}, rng, 0.02);
    null_embedding_ = make_parameter({config.embed_dim}, rng, 0.02);
}

Denoiser::ResBlock Denoiser::make_block(std::int64_t in, std::int64_t out, Rng& rng) const {
    ResBlock b;
    b.conv1 = Conv2d(in, out, 3, rng);
    b.conv2 = Conv2d(out, out, 3, rng);
    b.has_skip = in != out;
    if (b.has_skip) b.skip = Conv2d(in, out, 1, rng);
    b.time_shift = Linear(config_.time_dim, out, rng);
    b.cond_scale = Linear(config_.embed_dim, out, rng);
    b.cond_shift = Linear(config_.embed_dim, out, rng);
    b.cond_scale.zero_init();
    b.cond_shift.zero_init();
    return b;
}

Tensor Denoiser::res_block(const ResBlock& b, const Tensor& x, const Tensor& temb, const Tensor& cemb) const {
    const std::int64_t h = x.dim(1), w = x.dim(2);
    Tensor y = b.conv1.forward(silu(x));
    y = y + expand_channels(b.time_shift.forward_vector(temb), h, w);
    y = channel_modulate(y, b.cond_scale.forward_vector(cemb), b.cond_shift.forward_vector(cemb));
    y = b.conv2.forward(silu(y));
    return (b.has_skip ? b.skip.forward(x) : x) + y;
}

Tensor Denoiser::predict_eps(const DenoiserInput& in) const {
    const std::int64_t s = config_.image_size;
    if (in.x_t.shape() != Shape{3, s, s}) {
        throw ShapeError("denoiser: x_t must be " + shape_str({3, s, s}) + ", got " + shape_str(in.x_t.shape()));
    }
    Tensor feature, embedding;
    if (in.cond_dropped) {
        feature = config_.cond_channels > 0 ? expand_channels(null_feature_, s, s) : Tensor();
        embedding = null_embedding_;
    } else {
        if (config_.cond_channels > 0 && in.cond_feature.shape() != Shape{config_.cond_channels, s, s}) {
            throw ShapeError("denoiser: cond_feature must be " + shape_str({config_.cond_channels, s, s}) +
                             ", got " + shape_str(in.cond_feature.shape()));
        }
        if (in.cond_embedding.shape() != Shape{config_.embed_dim}) {
            throw ShapeError("denoiser: cond_embedding must be [" + std::to_string(config_.embed_dim) + "], got " +
                             shape_str(in.cond_embedding.shape()));
        }
        feature = in.cond_feature;
        embedding = in.cond_embedding;
    }
    const Tensor temb = time2_.forward_vector(silu(time1_.forward_vector(timestep_embedding(in.t, config_.time_dim))));
    const Tensor x = config_.cond_channels > 0 ? concat({in.x_t, feature}, 0) : in.x_t;

    const Tensor h0 = res_block(down0_, in_conv_.forward(x), temb, embedding);
    const Tensor h1 = res_block(down1_, avg_pool2x(h0), temb, embedding);
    Tensor m = res_block(mid_, avg_pool2x(h1), temb, embedding);

    const std::int64_t c2 = m.dim(0), mh = m.dim(1), mw = m.dim(2);
    const Tensor tokens = transpose(reshape(m, {c2, mh * mw}));
    const Tensor att = attention(att_q_.forward(tokens), att_k_.forward(tokens), att_v_.forward(tokens));
    m = m + reshape(transpose(att_o_.forward(att)), {c2, mh, mw});

    const Tensor u1 = res_block(up1_, concat({upsample_nearest2x(m), h1}, 0), temb, embedding);
    const Tensor u0 = res_block(up0_, concat({upsample_nearest2x(u1), h0}, 0), temb, embedding);
    return out_conv_.forward(silu(u0));
}

Tensor Denoiser::embed_image(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) % 2 != 0 || image.dim(2) % 2 != 0) {
        throw ShapeError("embed_image: image must be [3,H,W] with even H and W, got " + shape_str(image.shape()));
    }
    const Tensor f = embed_conv2_.forward(silu(avg_pool2x(silu(embed_conv1_.forward(image)))));
    return mean(reshape(f, {f.dim(0), f.dim(1) * f.dim(2)}), 1);
}

void Denoiser::zero_init_output() { out_conv_.zero_init(); }

void Denoiser::collect_block(ParameterList& out, const ResBlock& b, const std::string& prefix) const {
    b.conv1.collect(out, prefix + ".conv1");
    b.conv2.collect(out, prefix + ".conv2");
    if (b.has_skip) b.skip.collect(out, prefix + ".skip");
    b.time_shift.collect(out, prefix + ".time_shift");
    b.cond_scale.collect(out, prefix + ".cond_scale");
    b.cond_shift.collect(out, prefix + ".cond_shift");
}

ParameterList Denoiser::parameters() const {
    ParameterList out;
    in_conv_.collect(out, "in_conv");
    time1_.collect(out, "time1");
    time2_.collect(out, "time2");
    collect_block(out, down0_, "down0");
    collect_block(out, down1_, "down1");
    collect_block(out, mid_, "mid");
    att_q_.collect(out, "att_q");
    att_k_.collect(out, "att_k");
    att_v_.collect(out, "att_v");
    att_o_.collect(out, "att_o");
    collect_block(out, up1_, "up1");
    collect_block(out, up0_, "up0");
    out_conv_.collect(out, "out_conv");
    embed_conv1_.collect(out, "embed_conv1");
    embed_conv2_.collect(out, "embed_conv2");
    out.push_back({"null_feature", null_feature_});
    out.push_back({"null_embedding", null_embedding_});
    return out;
}

DiffusionSample draw_diffusion_sample(Rng& rng, const Shape& shape, const NoiseSchedule& schedule, double p_uncond) {
    if (p_uncond < 0.0 || p_uncond > 1.0) throw ValueError("p_uncond must lie in [0, 1]");
    DiffusionSample s;
    s.t = rng.uniform_int(1, schedule.steps());
    s.eps = rng.normal_tensor(shape);
    s.dropped = rng.uniform() < p_uncond;
    return s;
}

Tensor diffusion_loss(const EpsilonModel& model, const Tensor& x0, const Tensor& cond_feature,
                      const Tensor& cond_embedding, const NoiseSchedule& schedule, const DiffusionSample& sample) {
    DenoiserInput in;
    in.x_t = add_noise(x0, sample.t, sample.eps, schedule);
    in.t = sample.t;
    in.cond_feature = cond_feature;
    in.cond_embedding = cond_embedding;
    in.cond_dropped = sample.dropped;
    return mean(square(model.predict_eps(in) - sample.eps));
}

Tensor diffusion_loss(const EpsilonModel& model, const Tensor& x0, const Tensor& cond_feature,
                      const Tensor& cond_embedding, const NoiseSchedule& schedule, double p_uncond, Rng& rng) {
    const DiffusionSample s = draw_diffusion_sample(rng, x0.shape(), schedule, p_uncond);
    return diffusion_loss(model, x0, cond_feature, cond_embedding, schedule, s);
}

Tensor guided_eps(const EpsilonModel& model, const DenoiserInput& input, double guidance_w) {
    DenoiserInput in = input;
    if (guidance_w == 1.0) {
        in.cond_dropped = false;
        return model.predict_eps(in);
    }
    in.cond_dropped = true;
    const Tensor eu = model.predict_eps(in);
    if (guidance_w == 0.0) return eu;
    in.cond_dropped = false;
    const Tensor ec = model.predict_eps(in);
    return eu + (ec - eu) * guidance_w;
}

std::vector<std::int64_t> ddim_timesteps(std::int64_t t_start, std::int64_t n_steps) {
    if (t_start < 1) throw ValueError("ddim: start timestep must be >= 1");
    if (n_steps < 1 || n_steps > t_start) {
        throw ValueError("ddim: n_steps must lie in [1, " + std::to_string(t_start) + "], got " + std::to_string(n_steps));
    }
    std::vector<std::int64_t> ts;
    for (std::int64_t i = n_steps; i >= 1; --i) ts.push_back(i * t_start / n_steps);
    return ts;
}

Tensor ddim_from(const EpsilonModel& model, const Tensor& x_t, std::int64_t t_start, const Tensor& cond_feature,
                 const Tensor& cond_embedding, const NoiseSchedule& schedule, std::int64_t n_steps,
                 double guidance_w) {
    if (!(guidance_w >= 0.0)) throw ValueError("guidance weight must be >= 0");
    NoGradGuard guard;
    const auto ts = ddim_timesteps(t_start, n_steps);
    Tensor x = x_t.detach();
    DenoiserInput in;
    in.cond_feature = cond_feature;
    in.cond_embedding = cond_embedding;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const std::int64_t t = ts[i];
        const std::int64_t prev = i + 1 < ts.size() ? ts[i + 1] : 0;
        in.x_t = x;
        in.t = t;
        const Tensor eps = guided_eps(model, in, guidance_w);
        const double ab = schedule.alpha_bar(t), ab_prev = schedule.alpha_bar(prev);
        const Tensor x0 = (x - eps * std::sqrt(1.0 - ab)) * (1.0 / std::sqrt(ab));
        x = prev == 0 ? x0 : x0 * std::sqrt(ab_prev) + eps * std::sqrt(1.0 - ab_prev);
    }
    return x;
}

Tensor ddim_sample(const EpsilonModel& model, const Tensor& cond_feature, const Tensor& cond_embedding,
                   const NoiseSchedule& schedule, std::int64_t n_steps, double guidance_w, std::uint64_t seed,
                   const Shape& shape) {
    Rng rng(seed);
    const Tensor x_t = rng.normal_tensor(shape);
    const Tensor x = ddim_from(model, x_t, schedule.steps(), cond_feature, cond_embedding, schedule, n_steps, guidance_w);
    std::vector<double> v(x.data().begin(), x.data().end());
    for (double& e : v) e = std::clamp(e, 0.0, 1.0);
    return Tensor::from(x.shape(), std::move(v));
}

} // namespace liftrefine
