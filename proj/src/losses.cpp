// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/losses.hpp"

#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"

#include <cmath>
#include <cstdio>

namespace liftrefine {

namespace {

void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
    }
}

Tensor diff_along(const Tensor& x, std::int64_t axis) {
    const std::int64_t n = x.dim(axis);
    return sub(slice(x, axis, 1, n), slice(x, axis, 0, n - 1));
}

std::vector<double> grayscale(const Tensor& x) {
    const std::int64_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
    std::vector<double> g(static_cast<std::size_t>(hw), 0.0);
    const auto d = x.data();
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < hw; ++i) g[static_cast<std::size_t>(i)] += d[static_cast<std::size_t>(ch * hw + i)];
    for (auto& v : g) v /= static_cast<double>(c);
    return g;
}

} // namespace

Tensor gradient_pyramid_loss(const Tensor& pred, const Tensor& target) {
    check_same(pred, target, "gradient_pyramid_loss");
    if (pred.rank() < 2) throw ShapeError("gradient_pyramid_loss: need at least [H,W], got " + shape_str(pred.shape()));
    Tensor p = pred, t = target;
    Tensor total;
    int levels = 0;
    for (int level = 0; level < 3; ++level) {
        if (p.dim(-1) < 2 || p.dim(-2) < 2) break;
        const Tensor gx = mean(abs(sub(diff_along(p, p.rank() - 1), diff_along(t, t.rank() - 1))));
        const Tensor gy = mean(abs(sub(diff_along(p, p.rank() - 2), diff_along(t, t.rank() - 2))));
        const Tensor term = affine(add(gx, gy), 0.5, 0.0);
        total = total.defined() ? add(total, term) : term;
        ++levels;
        if (p.dim(-1) % 2 != 0 || p.dim(-2) % 2 != 0) break;
        p = avg_pool2x(p);
        t = avg_pool2x(t);
    }
    if (!total.defined()) return Tensor::scalar(0.0);
    return affine(total, 1.0 / levels, 0.0);
}

Tensor recon_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg) {
    check_same(pred, target, "recon_loss");
    if (cfg.lambda_perc < 0.0) throw ValueError("recon_loss: lambda_perc must be >= 0");
    const Tensor mse = mean(square(sub(pred, target)));
    if (cfg.perceptual_mode == PerceptualMode::off || cfg.lambda_perc == 0.0) return mse;
    return add(mse, affine(gradient_pyramid_loss(pred, target), cfg.lambda_perc, 0.0));
}

double psnr(const Tensor& pred, const Tensor& target, double peak) {
    check_same(pred, target, "psnr");
    if (!(peak > 0.0)) throw ValueError("psnr: peak must be positive");
    const auto a = pred.data();
    const auto b = target.data();
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    const double mse = se / static_cast<double>(a.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Tensor& pred, const Tensor& target, double peak) {
    check_same(pred, target, "ssim");
    if (pred.rank() != 3) throw ShapeError("ssim: expected [C,H,W], got " + shape_str(pred.shape()));
    constexpr int kWin = 11;
    const std::int64_t h = pred.dim(1), w = pred.dim(2);
    if (h < kWin || w < kWin) throw ValueError("ssim: images must be at least 11x11, got " + shape_str(pred.shape()));

    double kernel[kWin];
    double ksum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double x = i - kWin / 2;
        kernel[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
        ksum += kernel[i];
    }
    for (double& k : kernel) k /= ksum;

    const auto x = grayscale(pred);
    const auto y = grayscale(target);
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    double total = 0.0;
    std::int64_t count = 0;
    for (std::int64_t r = 0; r + kWin <= h; ++r)
        for (std::int64_t c = 0; c + kWin <= w; ++c) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double k = kernel[i] * kernel[j];
                    const auto idx = static_cast<std::size_t>((r + i) * w + (c + j));
                    mx += k * x[idx];
                    my += k * y[idx];
                    sxx += k * x[idx] * x[idx];
                    syy += k * y[idx] * y[idx];
                    sxy += k * x[idx] * y[idx];
                }
            const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

void write_metrics_report(std::ostream& os, const std::vector<MetricRow>& rows) {
    char buf[256];
    double sp = 0.0, ss = 0.0;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s\t%.4f\t%.4f\n", r.name.c_str(), r.psnr, r.ssim);
        os << buf;
        sp += r.psnr;
        ss += r.ssim;
    }
    const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
    std::snprintf(buf, sizeof buf, "mean\t%.4f\t%.4f\n", sp / n, ss / n);
    os << buf;
}

} // namespace liftrefine
