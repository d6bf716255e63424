// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace liftrefine {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Finite-difference checks of every autodiff primitive (tol 1e-4), the
/// image-to-loss reconstruction path (tol 1e-3) and the denoiser loss path
/// (tol 1e-4), each on `n_seeds` seeded random instances.
std::vector<CheckResult> gradient_suite(std::int64_t n_seeds = 5);

/// march_ray and composite against a scalar-loop quadrature on `n_configs`
/// random cases (tol 1e-9), weight sums in [0, 1], and the opaque and
/// transparent limits compared exactly.
CheckResult rendering_oracle_check(std::int64_t n_configs = 100, std::uint64_t seed = 0);

/// project(pixel_to_ray(u, v)) == (u, v) within 1e-9 over random poses and
/// in-frustum pixels.
CheckResult camera_roundtrip_check(std::int64_t n_poses = 50, std::int64_t pixels_per_pose = 20,
                                   std::uint64_t seed = 0);

/// An oracle denoiser returning the true noise makes a one-step DDIM jump from
/// t to 0 recover x0 within 1e-9; guidance w = 1 equals the conditional
/// prediction bitwise.
CheckResult ddim_inversion_check(std::int64_t n_pairs = 20, std::uint64_t seed = 0);

} // namespace liftrefine
