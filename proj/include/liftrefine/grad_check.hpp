// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace liftrefine {

struct GradCheckOptions {
    double h = 1e-5;
    double tol = 1e-4;
    /// Coordinates whose absolute error is below this pass regardless of relative error.
    double abs_tol = 1e-8;
    /// Also pass coordinates whose absolute error is below
    /// scale_floor * max |autodiff| over the whole tensor; 0 disables.
    double scale_floor = 0.0;
    /// Check at most this many coordinates (chosen with `seed`); <= 0 checks all.
    std::int64_t max_coords = 0;
    std::uint64_t seed = 0;
    /// A coordinate is a kink when its one-sided slopes differ by more than
    /// kink_ratio * max(|slope+|, |slope-|, kink_floor).
    double kink_ratio = 0.1;
    double kink_floor = 1e-2;
};

struct CoordinateCheck {
    std::int64_t index = 0;
    double autodiff = 0.0;
    double numeric = 0.0;
    double abs_err = 0.0;
    double rel_err = 0.0;
    bool kink = false;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<CoordinateCheck> coords;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    /// Largest |autodiff| among checked coordinates.
    double max_grad = 0.0;
    std::int64_t checked = 0;
    std::int64_t kinks = 0;
    bool passed = false;

    std::string summary() const;
};

/// Compares the autodiff gradient of scalar-valued `f` at `x` with central
/// differences (f(x+h e_i) - f(x-h e_i)) / 2h. Kink coordinates are reported
/// and excluded from the verdict.
///
/// `f` must be a pure function of its argument; any other tensors it touches
/// that require grad will have gradients accumulated into them.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           const GradCheckOptions& options = {});

/// Same comparison for a leaf parameter used inside `f`: the parameter's
/// values are perturbed in place and restored afterwards. Other parameters
/// reached by `f` accumulate gradients.
GradCheckReport grad_check_parameter(const std::function<Tensor()>& f, Tensor& parameter,
                                     const GradCheckOptions& options = {});

} // namespace liftrefine
