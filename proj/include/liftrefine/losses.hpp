// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/tensor.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace liftrefine {

enum class PerceptualMode { off, gradient_pyramid };

struct LossConfig {
    double lambda_perc = 0.1;
    PerceptualMode perceptual_mode = PerceptualMode::gradient_pyramid;
};

/// Mean absolute difference between horizontal and vertical finite
/// differences of two images, averaged over a 3-level 2x average-pool pyramid.
/// Levels stop early once a side is too small or odd.
Tensor gradient_pyramid_loss(const Tensor& pred, const Tensor& target);

/// MSE + lambda * perceptual proxy.
Tensor recon_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg = {});

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE), capped at 99 dB (identical images report the cap).
double psnr(const Tensor& pred, const Tensor& target, double peak = 1.0);

/// Mean SSIM of the channel-mean grayscale images over valid 11x11 Gaussian
/// (sigma 1.5) windows. Images must be at least 11x11.
double ssim(const Tensor& pred, const Tensor& target, double peak = 1.0);

struct MetricRow {
    std::string name;
    double psnr;
    double ssim;
};

/// One tab-separated "name psnr ssim" line per row, then a "mean" line.
void write_metrics_report(std::ostream& os, const std::vector<MetricRow>& rows);

} // namespace liftrefine
