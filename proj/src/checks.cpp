// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/checks.hpp"

#include "liftrefine/camera.hpp"
#include "liftrefine/checkpoint.hpp"
#include "liftrefine/diffusion.hpp"
#include "liftrefine/grad_check.hpp"
#include "liftrefine/losses.hpp"
#include "liftrefine/ops.hpp"
#include "liftrefine/reconstructor.hpp"
#include "liftrefine/renderer.hpp"
#include "liftrefine/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

namespace liftrefine {

namespace {

Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
    Rng rng(seed);
    return sum(mul(y, rng.uniform_tensor(y.shape(), -1.0, 1.0)));
}

struct GradCase {
    std::string name;
    std::function<Tensor(const Tensor&)> f;
    Tensor x;
};

std::vector<GradCase> primitive_cases(std::uint64_t seed) {
    Rng rng(1000 + seed);
    const auto x23 = rng.normal_tensor({2, 3});
    const auto other = rng.normal_tensor({2, 3});
    const auto row = rng.normal_tensor({3});
    const auto positive = rng.uniform_tensor({2, 3}, 0.5, 2.0);
    const auto ws = [seed](const Tensor& y) { return weighted_sum(y, seed); };
    std::vector<GradCase> c;
    c.push_back({"add", [=](const Tensor& x) { return ws(add(x, other)); }, x23});
    c.push_back({"add_broadcast", [=](const Tensor& x) { return ws(add(other, x)); }, row});
    c.push_back({"sub", [=](const Tensor& x) { return ws(sub(x, row)); }, x23});
    c.push_back({"sub_broadcast", [=](const Tensor& x) { return ws(sub(other, x)); }, row});
    c.push_back({"mul", [=](const Tensor& x) { return ws(mul(x, other)); }, x23});
    c.push_back({"div_denominator", [=](const Tensor& x) { return ws(div(other, x)); }, positive});
    c.push_back({"div_numerator", [=](const Tensor& x) { return ws(div(x, positive)); }, x23});
    c.push_back({"affine", [=](const Tensor& x) { return ws(affine(x, 1.7, -0.3)); }, x23});
    c.push_back({"neg", [=](const Tensor& x) { return ws(neg(x)); }, x23});
    c.push_back({"relu", [=](const Tensor& x) { return ws(relu(x)); }, x23});
    c.push_back({"silu", [=](const Tensor& x) { return ws(silu(x)); }, x23});
    c.push_back({"sigmoid", [=](const Tensor& x) { return ws(sigmoid(x)); }, x23});
    c.push_back({"softplus", [=](const Tensor& x) { return ws(softplus(x)); }, x23});
    c.push_back({"exp", [=](const Tensor& x) { return ws(exp(x)); }, x23});
    c.push_back({"log", [=](const Tensor& x) { return ws(log(x)); }, positive});
    c.push_back({"sin", [=](const Tensor& x) { return ws(sin(x)); }, x23});
    c.push_back({"abs", [=](const Tensor& x) { return ws(abs(x)); }, x23});
    c.push_back({"square", [=](const Tensor& x) { return ws(square(x)); }, x23});
    c.push_back({"softmax", [=](const Tensor& x) { return ws(softmax(x)); }, x23});
    c.push_back({"sum_axis", [=](const Tensor& x) { return ws(sum(x, 0)); }, x23});
    c.push_back({"mean_axis", [=](const Tensor& x) { return ws(mean(x, 1)); }, x23});
    c.push_back({"mean", [=](const Tensor& x) { return mean(x) * 3.0; }, x23});
    c.push_back({"concat", [=](const Tensor& x) { return ws(concat({x, other, x}, 1)); }, x23});
    c.push_back({"reshape", [=](const Tensor& x) { return ws(reshape(x, {3, 2})); }, x23});
    c.push_back({"slice", [=](const Tensor& x) { return ws(slice(x, 1, 1, 3)); }, x23});
    c.push_back({"transpose", [=](const Tensor& x) { return ws(transpose(x)); }, x23});

    const auto x234 = rng.normal_tensor({2, 3, 4});
    c.push_back({"permute", [=](const Tensor& x) { return ws(permute(x, {2, 0, 1})); }, x234});
    const auto mb = rng.normal_tensor({3, 4});
    c.push_back({"matmul_lhs", [=](const Tensor& x) { return ws(matmul(x, mb)); }, x23});
    c.push_back({"matmul_rhs", [=](const Tensor& x) { return ws(matmul(x23, x)); }, mb});
    const auto bb = rng.normal_tensor({2, 4, 2});
    c.push_back({"bmm_lhs", [=](const Tensor& x) { return ws(matmul(x, bb)); }, x234});
    c.push_back({"bmm_rhs", [=](const Tensor& x) { return ws(matmul(x234, x)); }, bb});
    const auto shared = rng.normal_tensor({4, 2});
    c.push_back({"bmm_shared_rhs", [=](const Tensor& x) { return ws(matmul(x234, x)); }, shared});

    const auto img = rng.normal_tensor({2, 4, 6});
    const auto wconv = rng.normal_tensor({3, 2, 3, 3});
    const auto bconv = rng.normal_tensor({3});
    c.push_back({"conv2d_input", [=](const Tensor& x) { return ws(conv2d(x, wconv, bconv)); }, img});
    c.push_back({"conv2d_weight", [=](const Tensor& w) { return ws(conv2d(img, w, bconv)); }, wconv});
    c.push_back({"conv2d_bias", [=](const Tensor& b) { return ws(conv2d(img, wconv, b)); }, bconv});
    const auto batch = rng.normal_tensor({2, 2, 4, 4});
    c.push_back({"conv2d_batched", [=](const Tensor& x) { return ws(conv2d(x, wconv, bconv)); }, batch});
    c.push_back({"upsample_nearest2x", [=](const Tensor& x) { return ws(upsample_nearest2x(x)); }, img});
    c.push_back({"avg_pool2x", [=](const Tensor& x) { return ws(avg_pool2x(x)); }, img});
    c.push_back({"group_norm", [=](const Tensor& x) { return ws(group_norm(x, 1)); }, img});
    c.push_back({"group_norm_batched", [=](const Tensor& x) { return ws(group_norm(x, 2)); }, batch});
    c.push_back({"bicubic_upsample", [=](const Tensor& x) { return ws(bicubic_upsample(x, 2)); }, img});

    std::vector<double> cvals;
    for (int i = 0; i < 7; ++i) {
        cvals.push_back(std::floor(rng.uniform(-1.0, 6.0)) + rng.uniform(0.1, 0.9));
        cvals.push_back(std::floor(rng.uniform(-1.0, 4.0)) + rng.uniform(0.1, 0.9));
    }
    const auto coords = Tensor::from({7, 2}, cvals);
    c.push_back({"bilinear_image", [=](const Tensor& x) { return ws(bilinear_sample_2d(x, coords)); }, img});
    c.push_back({"bilinear_coords", [=](const Tensor& x) { return ws(bilinear_sample_2d(img, x)); }, coords});

    const auto vol = rng.normal_tensor({2, 3, 4, 5});
    std::vector<double> c3;
    for (int i = 0; i < 6; ++i) {
        c3.push_back(std::floor(rng.uniform(0.0, 4.0)) + rng.uniform(0.1, 0.9));
        c3.push_back(std::floor(rng.uniform(0.0, 3.0)) + rng.uniform(0.1, 0.9));
        c3.push_back(std::floor(rng.uniform(0.0, 2.0)) + rng.uniform(0.1, 0.9));
    }
    const auto coords3 = Tensor::from({6, 3}, c3);
    c.push_back({"trilinear_volume", [=](const Tensor& x) { return ws(trilinear_sample_3d(x, coords3)); }, vol});
    c.push_back({"trilinear_coords", [=](const Tensor& x) { return ws(trilinear_sample_3d(vol, x)); }, coords3});

    const auto q = rng.normal_tensor({2, 3, 4});
    const auto k = rng.normal_tensor({2, 5, 4});
    const auto v = rng.normal_tensor({2, 5, 3});
    const auto mask = Tensor::from({2, 5}, {1, 0, 1, 1, 1, 1, 1, 0, 0, 1});
    c.push_back({"attention_q", [=](const Tensor& x) { return ws(attention(x, k, v, mask)); }, q});
    c.push_back({"attention_k", [=](const Tensor& x) { return ws(attention(q, x, v, mask)); }, k});
    c.push_back({"attention_v", [=](const Tensor& x) { return ws(attention(q, k, x, mask)); }, v});
    const auto qshared = rng.normal_tensor({1, 4});
    c.push_back({"attention_order_invariant",
                 [=](const Tensor& x) { return ws(attention(x, k, v, Tensor(), {.order_invariant = true})); }, qshared});

    const auto chw = rng.normal_tensor({3, 4, 4});
    const auto cvec = rng.normal_tensor({3});
    c.push_back({"expand_channels", [=](const Tensor& x) { return ws(expand_channels(x, 4, 4)); }, cvec});
    c.push_back({"channel_modulate", [=](const Tensor& x) { return ws(channel_modulate(chw, x, cvec)); }, cvec});
    return c;
}

// Zero-initialised layers cut gradient paths; fill them so every weight is exercised.
void fill_zero_parameters(ParameterList& params, Rng& rng, double scale) {
    for (auto& p : params) {
        auto d = p.tensor.mutable_data();
        if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
            for (double& v : d) v = rng.normal() * scale;
        }
    }
}

std::string fmt_report(const GradCheckReport& r) { return r.summary(); }

// Coordinates are compared relative to their own magnitude; errors below
// 1e-6 of the largest gradient anywhere in the model count as rounding noise.
void check_parameters(std::vector<CheckResult>& out, const std::string& prefix, ParameterList& params,
                      const std::function<Tensor()>& loss, double tol, std::uint64_t seed) {
    current_tape().clear();
    for (auto& p : params) p.tensor.zero_grad();
    backward(loss());
    double model_scale = 0.0;
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) model_scale = std::max(model_scale, std::abs(g));
    }
    bool ok = true;
    double worst = 0.0, largest = 0.0, worst_abs = 0.0;
    std::string first_fail;
    std::int64_t checked = 0;
    for (auto& p : params) {
        GradCheckOptions opt;
        opt.tol = tol;
        opt.abs_tol = 1e-6 * model_scale;
        opt.max_coords = 3;
        opt.seed = mix_seed(seed, static_cast<std::uint64_t>(checked));
        const auto r = grad_check_parameter(loss, p.tensor, opt);
        checked += r.checked;
        worst = std::max(worst, r.max_rel_err);
        worst_abs = std::max(worst_abs, r.max_abs_err);
        largest = std::max(largest, r.max_grad);
        if (!r.passed && first_fail.empty()) first_fail = p.name + ": " + fmt_report(r);
        ok = ok && r.passed;
    }
    std::ostringstream os;
    os << params.size() << " tensors, " << checked << " coords, max_rel_err=" << worst << " max_abs_err=" << worst_abs
       << " max_grad=" << largest;
    if (!first_fail.empty()) os << "; first failure " << first_fail;
    out.push_back({prefix + "/parameters", ok, os.str()});
}

void reconstruction_path(std::vector<CheckResult>& out, std::uint64_t seed) {
    ReconstructorConfig cfg;
    cfg.image_size = 8;
    cfg.feature_channels = 4;
    cfg.volume_resolution = 4;
    cfg.triplane_resolution = 8;
    cfg.render_feature_channels = 2;
    cfg.mlp_hidden = 8;
    cfg.n_samples = 6;
    Reconstructor model(cfg, seed);
    ParameterList params = model.parameters();
    Rng rng(mix_seed(seed, 0x9a7));
    fill_zero_parameters(params, rng, 0.1);

    const auto poses = std::vector<CameraPose>{orbit_pose(1.3, 0.3 + rng.uniform(), 0.2, 7.2, 8, 8),
                                               orbit_pose(1.3, -1.5 + rng.uniform(), 0.5, 7.2, 8, 8)};
    const CameraPose target = orbit_pose(1.3, rng.uniform(-3.0, 3.0), rng.uniform(-0.4, 0.9), 7.2, 8, 8);
    const Tensor image0 = rng.uniform_tensor({3, 8, 8}, 0.0, 1.0);
    const Tensor image1 = rng.uniform_tensor({3, 8, 8}, 0.0, 1.0);
    const Tensor gt = rng.uniform_tensor({3, 8, 8}, 0.0, 1.0);
    LossConfig lc;
    const RenderOptions ro = model.default_render_options(seed, true);
    const std::string prefix = "composite/reconstruction[seed=" + std::to_string(seed) + "]";

    const auto loss_from = [&](const Tensor& img0) {
        const TriPlane tp = model.reconstruct({{img0, poses[0]}, {image1, poses[1]}});
        return recon_loss(model.render_view(tp, target, ro).image, gt, lc);
    };
    GradCheckOptions opt;
    opt.tol = 1e-3;
    opt.abs_tol = 0.0;
    opt.scale_floor = 1e-6;
    opt.max_coords = 24;
    opt.seed = seed;
    const auto r = grad_check(loss_from, image0, opt);
    out.push_back({prefix + "/input_image", r.passed, fmt_report(r)});
    check_parameters(out, prefix, params, [&]() { return loss_from(image0); }, 1e-3, seed);
}

void denoiser_path(std::vector<CheckResult>& out, std::uint64_t seed) {
    DenoiserConfig cfg;
    cfg.image_size = 8;
    cfg.cond_channels = 2;
    cfg.base_channels = 4;
    cfg.time_dim = 4;
    cfg.embed_dim = 4;
    Denoiser model(cfg, seed);
    ParameterList params = model.parameters();
    Rng rng(mix_seed(seed, 0xde5));
    fill_zero_parameters(params, rng, 0.1);
    const auto schedule = NoiseSchedule::linear(100);
    const Tensor x0 = rng.uniform_tensor({3, 8, 8}, 0.0, 1.0);
    const Tensor feature = rng.normal_tensor({2, 8, 8});
    const Tensor input = rng.uniform_tensor({3, 8, 8}, 0.0, 1.0);
    DiffusionSample sample = draw_diffusion_sample(rng, x0.shape(), schedule, 0.0);
    const std::string prefix = "composite/denoiser[seed=" + std::to_string(seed) + "]";

    const auto loss = [&]() { return diffusion_loss(model, x0, feature, model.embed_image(input), schedule, sample); };
    check_parameters(out, prefix + "/cond", params, loss, 1e-4, seed);
    sample.dropped = true;
    check_parameters(out, prefix + "/dropped", params, loss, 1e-4, seed + 1);

    GradCheckOptions opt;
    opt.tol = 1e-4;
    opt.abs_tol = 0.0;
    opt.scale_floor = 1e-6;
    opt.max_coords = 24;
    opt.seed = seed;
    sample.dropped = false;
    const auto r = grad_check(
        [&](const Tensor& f) { return diffusion_loss(model, x0, f, model.embed_image(input), schedule, sample); },
        feature, opt);
    out.push_back({prefix + "/cond_feature", r.passed, fmt_report(r)});
}

// Scalar-loop quadrature written independently of composite().
struct RayResult {
    std::array<double, 3> color{};
    double weight_sum = 0.0;
};

RayResult scalar_composite(const std::vector<double>& sigma, const std::vector<std::array<double, 3>>& color,
                           const std::vector<double>& delta, const std::array<double, 3>& bg) {
    RayResult r;
    double transmittance = 1.0;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        const double alpha = 1.0 - std::exp(-sigma[i] * delta[i]);
        const double w = transmittance * alpha;
        for (int a = 0; a < 3; ++a) r.color[static_cast<std::size_t>(a)] += w * color[i][static_cast<std::size_t>(a)];
        r.weight_sum += w;
        transmittance *= 1.0 - alpha;
    }
    for (int a = 0; a < 3; ++a) r.color[static_cast<std::size_t>(a)] += (1.0 - r.weight_sum) * bg[static_cast<std::size_t>(a)];
    return r;
}

// Smooth closed-form field: a Gaussian density blob with position-dependent colour.
class BlobField final : public RadianceField {
public:
    BlobField(Vec3 center, double peak, double width) : center_(center), peak_(peak), width_(width) {}

    static double density(const Vec3& p, const Vec3& c, double peak, double width) {
        return peak * std::exp(-(p - c).squaredNorm() / (width * width));
    }
    static std::array<double, 3> colour(const Vec3& p) {
        return {0.5 + 0.5 * std::sin(3.0 * p.x()), 0.5 + 0.4 * p.y(), 0.5 - 0.3 * p.z()};
    }

    FieldSamples evaluate(const Tensor& points) const override {
        const std::int64_t n = points.dim(0);
        const auto d = points.data();
        std::vector<double> s(static_cast<std::size_t>(n)), c(static_cast<std::size_t>(3 * n));
        for (std::int64_t i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            const Vec3 p(d[3 * k], d[3 * k + 1], d[3 * k + 2]);
            s[k] = density(p, center_, peak_, width_);
            const auto col = colour(p);
            for (std::size_t a = 0; a < 3; ++a) c[3 * k + a] = col[a];
        }
        return {Tensor::from({n}, std::move(s)), Tensor::from({n, 3}, std::move(c)), Tensor()};
    }
    std::int64_t feature_channels() const override { return 0; }

private:
    Vec3 center_;
    double peak_, width_;
};

} // namespace

std::vector<CheckResult> gradient_suite(std::int64_t n_seeds) {
    std::vector<CheckResult> out;
    for (std::int64_t s = 0; s < n_seeds; ++s) {
        const auto seed = static_cast<std::uint64_t>(s);
        for (const auto& c : primitive_cases(seed)) {
            GradCheckOptions opt;
            opt.tol = 1e-4;
            const auto r = grad_check(c.f, c.x, opt);
            out.push_back({"primitive/" + c.name + "[seed=" + std::to_string(s) + "]", r.passed, r.summary()});
        }
        reconstruction_path(out, seed);
        denoiser_path(out, seed);
    }
    return out;
}

CheckResult rendering_oracle_check(std::int64_t n_configs, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x0ac1e));
    double worst = 0.0;
    bool sums_ok = true;
    const std::array<double, 3> bg{1.0, 1.0, 1.0};
    NoGradGuard guard;
    for (std::int64_t c = 0; c < n_configs; ++c) {
        // composite() on random (sigma, colour, delta).
        const auto s = rng.uniform_int(1, 48);
        std::vector<double> sigma(static_cast<std::size_t>(s)), delta(static_cast<std::size_t>(s));
        std::vector<std::array<double, 3>> colour(static_cast<std::size_t>(s));
        std::vector<double> flat;
        for (std::int64_t i = 0; i < s; ++i) {
            const auto k = static_cast<std::size_t>(i);
            sigma[k] = rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.0, 50.0);
            delta[k] = rng.uniform(0.0, 0.1);
            for (std::size_t a = 0; a < 3; ++a) {
                colour[k][a] = rng.uniform();
                flat.push_back(colour[k][a]);
            }
        }
        const auto got = composite(Tensor::from({1, s}, sigma), Tensor::from({1, s, 3}, flat), Tensor(),
                                   Tensor::from({1, s}, delta), bg);
        const auto want = scalar_composite(sigma, colour, delta, bg);
        for (std::size_t a = 0; a < 3; ++a) worst = std::max(worst, std::abs(got.color.data()[a] - want.color[a]));
        worst = std::max(worst, std::abs(got.weight_sum.data()[0] - want.weight_sum));
        const double ws = got.weight_sum.data()[0];
        sums_ok = sums_ok && ws >= 0.0 && ws <= 1.0;

        // march_ray() through a closed-form field against independent midpoint sampling.
        const Vec3 centre(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));
        const double peak = rng.uniform(1.0, 80.0), width = rng.uniform(0.1, 0.4);
        const BlobField field(centre, peak, width);
        const CameraPose pose = orbit_pose(1.3, rng.uniform(-3.1, 3.1), rng.uniform(-0.5, 1.0), 28.8, 32, 32);
        const Ray ray = pixel_to_ray(pose, rng.uniform(0.0, 32.0), rng.uniform(0.0, 32.0));
        RenderOptions ro;
        ro.n_samples = rng.uniform_int(1, 64);
        ro.stratified = false;
        const auto marched = march_ray(field, ray, ro, 0);

        double t0 = ray.t_near, t1 = ray.t_far;
        for (int a = 0; a < 3; ++a) {
            const double inv = 1.0 / ray.direction[a];
            double ta = (-0.5 - ray.origin[a]) * inv, tb = (0.5 - ray.origin[a]) * inv;
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
        RayResult want_ray;
        if (t1 > t0) {
            const double d = (t1 - t0) / static_cast<double>(ro.n_samples);
            std::vector<double> rs, rd;
            std::vector<std::array<double, 3>> rc;
            for (std::int64_t i = 0; i < ro.n_samples; ++i) {
                Vec3 p = ray.origin + (t0 + (static_cast<double>(i) + 0.5) * d) * ray.direction;
                p = p.cwiseMax(-0.5).cwiseMin(0.5);
                rs.push_back(BlobField::density(p, centre, peak, width));
                rc.push_back(BlobField::colour(p));
                rd.push_back(d);
            }
            want_ray = scalar_composite(rs, rc, rd, bg);
        } else {
            want_ray = scalar_composite({}, {}, {}, bg);
        }
        for (std::size_t a = 0; a < 3; ++a) worst = std::max(worst, std::abs(marched.color.data()[a] - want_ray.color[a]));
        const double mws = marched.weight_sum.data()[0];
        worst = std::max(worst, std::abs(mws - want_ray.weight_sum));
        sums_ok = sums_ok && mws >= 0.0 && mws <= 1.0;
    }

    // Opaque limit: the first sample absorbs everything. Transparent limit: background only.
    const auto opaque = composite(Tensor::from({1, 3}, {1e6, 5.0, 5.0}), Tensor::from({1, 3, 3}, {0.2, 0.4, 0.6, 1, 1, 1, 0, 0, 0}),
                                  Tensor(), Tensor::from({1, 3}, {0.1, 0.1, 0.1}), {0.9, 0.8, 0.7});
    const bool opaque_ok = opaque.color.data()[0] == 0.2 && opaque.color.data()[1] == 0.4 &&
                           opaque.color.data()[2] == 0.6 && opaque.weight_sum.data()[0] == 1.0;
    const auto clear = composite(Tensor::zeros({1, 4}), Tensor::ones({1, 4, 3}), Tensor(), Tensor::full({1, 4}, 0.2),
                                 {0.9, 0.8, 0.7});
    const bool clear_ok = clear.color.data()[0] == 0.9 && clear.color.data()[1] == 0.8 &&
                          clear.color.data()[2] == 0.7 && clear.weight_sum.data()[0] == 0.0;

    std::ostringstream os;
    os << n_configs << " composite + " << n_configs << " march_ray configs, max_abs_err=" << worst
       << ", weight sums in [0,1]: " << (sums_ok ? "yes" : "no") << ", opaque limit exact: " << (opaque_ok ? "yes" : "no")
       << ", transparent limit exact: " << (clear_ok ? "yes" : "no");
    return {"rendering_oracle", worst < 1e-9 && sums_ok && opaque_ok && clear_ok, os.str()};
}

CheckResult camera_roundtrip_check(std::int64_t n_poses, std::int64_t pixels_per_pose, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0xca3));
    double worst = 0.0;
    for (std::int64_t i = 0; i < n_poses; ++i) {
        const std::int64_t w = rng.uniform_int(8, 128), h = rng.uniform_int(8, 128);
        const double f = rng.uniform(0.5, 2.0) * static_cast<double>(w);
        const Vec3 eye = spherical_to_cartesian(rng.uniform(0.8, 4.0), rng.uniform(-std::numbers::pi, std::numbers::pi),
                                                rng.uniform(-1.3, 1.3));
        const Vec3 target(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
        const CameraPose pose = look_at(eye, target, f, f * rng.uniform(0.9, 1.1), static_cast<double>(w) / 2.0 + rng.uniform(-2, 2),
                                        static_cast<double>(h) / 2.0 + rng.uniform(-2, 2), w, h);
        for (std::int64_t k = 0; k < pixels_per_pose; ++k) {
            const double u = rng.uniform(0.0, static_cast<double>(w)), v = rng.uniform(0.0, static_cast<double>(h));
            const Ray ray = pixel_to_ray(pose, u, v);
            const Vec2 uv = project(pose, ray.origin + rng.uniform(0.1, 5.0) * ray.direction);
            worst = std::max({worst, std::abs(uv.x() - u), std::abs(uv.y() - v)});
        }
    }
    std::ostringstream os;
    os << n_poses << " poses x " << pixels_per_pose << " pixels, max_err=" << worst << " px";
    return {"camera_roundtrip", worst < 1e-9, os.str()};
}

namespace {

class OracleDenoiser final : public EpsilonModel {
public:
    Tensor eps;
    Tensor predict_eps(const DenoiserInput&) const override { return eps; }
};

} // namespace

CheckResult ddim_inversion_check(std::int64_t n_pairs, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0xdd1));
    const auto schedule = NoiseSchedule::linear(1000);
    OracleDenoiser oracle;
    double worst = 0.0;
    for (std::int64_t i = 0; i < n_pairs; ++i) {
        const Tensor x0 = rng.uniform_tensor({3, 8, 8}, 0.0, 1.0);
        const auto t = rng.uniform_int(1, schedule.steps());
        oracle.eps = rng.normal_tensor({3, 8, 8});
        const Tensor xt = add_noise(x0, t, oracle.eps, schedule);
        const Tensor rec = ddim_from(oracle, xt, t, Tensor(), Tensor(), schedule, 1, 2.0);
        for (std::size_t k = 0; k < static_cast<std::size_t>(x0.numel()); ++k) {
            worst = std::max(worst, std::abs(rec.data()[k] - x0.data()[k]));
        }
    }

    DenoiserConfig cfg;
    cfg.image_size = 8;
    cfg.cond_channels = 2;
    cfg.base_channels = 4;
    cfg.time_dim = 4;
    cfg.embed_dim = 4;
    Denoiser model(cfg, seed);
    ParameterList params = model.parameters();
    fill_zero_parameters(params, rng, 0.1);
    DenoiserInput in;
    in.x_t = rng.normal_tensor({3, 8, 8});
    in.t = 37;
    in.cond_feature = rng.normal_tensor({2, 8, 8});
    in.cond_embedding = rng.normal_tensor({4});
    NoGradGuard guard;
    const Tensor cond = model.predict_eps(in);
    const Tensor guided = guided_eps(model, in, 1.0);
    const bool bitwise = std::equal(cond.data().begin(), cond.data().end(), guided.data().begin(), guided.data().end());

    std::ostringstream os;
    os << n_pairs << " (x0, t) pairs, max_abs_err=" << worst << ", w=1 bitwise conditional: " << (bitwise ? "yes" : "no");
    return {"ddim_inversion", worst < 1e-9 && bitwise, os.str()};
}

} // namespace liftrefine
