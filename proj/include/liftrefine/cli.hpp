// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/config.hpp"
#include "liftrefine/diffusion.hpp"
#include "liftrefine/reconstructor.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace liftrefine {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

/// Runs one subcommand: gen-data, train-recon, precompute-cond, train-diff,
/// infer, eval, grad-check or oracle-check. Returns 0 on success, 1 on
/// validation errors (including bad flags) and 2 on numerical failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

ReconstructorConfig reconstructor_config_from(const Config& config);
void store_reconstructor_config(Config& config, const ReconstructorConfig& rc);
DenoiserConfig denoiser_config_from(const Config& config);
void store_denoiser_config(Config& config, const DenoiserConfig& dc);

} // namespace liftrefine
