// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/grad_check.hpp"

#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"
#include "liftrefine/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace liftrefine {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (passed ? "pass" : "FAIL") << " checked=" << checked << " kinks=" << kinks << " max_rel_err=" << max_rel_err
       << " max_abs_err=" << max_abs_err
       << " max_grad=" << max_grad;
    return os.str();
}

namespace {

std::vector<std::int64_t> pick_coords(std::int64_t n, const GradCheckOptions& options) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    if (options.max_coords > 0 && options.max_coords < n) {
        Rng rng(options.seed);
        std::shuffle(order.begin(), order.end(), rng.engine());
        order.resize(static_cast<std::size_t>(options.max_coords));
        std::sort(order.begin(), order.end());
    }
    return order;
}

// `values` is perturbed in place; `eval` must read it.
GradCheckReport compare(const std::vector<double>& analytic, std::span<double> values,
                        const std::function<double()>& eval, const GradCheckOptions& options) {
    NoGradGuard no_grad;
    double gmax = 0.0;
    for (double g : analytic) gmax = std::max(gmax, std::abs(g));
    const double floor = std::max(options.abs_tol, options.scale_floor * gmax);
    const double f0 = eval();
    GradCheckReport report;
    report.passed = true;
    for (auto i : pick_coords(static_cast<std::int64_t>(values.size()), options)) {
        const auto idx = static_cast<std::size_t>(i);
        const double orig = values[idx];
        values[idx] = orig + options.h;
        const double fp = eval();
        values[idx] = orig - options.h;
        const double fm = eval();
        values[idx] = orig;

        CoordinateCheck c;
        c.index = i;
        c.autodiff = analytic[idx];
        c.numeric = (fp - fm) / (2.0 * options.h);
        const double slope_plus = (fp - f0) / options.h;
        const double slope_minus = (f0 - fm) / options.h;
        const double scale = std::max({std::abs(slope_plus), std::abs(slope_minus), options.kink_floor});
        c.kink = std::abs(slope_plus - slope_minus) > options.kink_ratio * scale;
        c.abs_err = std::abs(c.autodiff - c.numeric);
        const double denom = std::max(std::abs(c.autodiff), std::abs(c.numeric));
        c.rel_err = denom > 0.0 ? c.abs_err / denom : 0.0;
        c.pass = c.kink || c.abs_err < floor || c.rel_err < options.tol;
        if (c.kink) {
            ++report.kinks;
        } else {
            ++report.checked;
            if (std::max(std::abs(c.autodiff), std::abs(c.numeric)) >= floor) report.max_rel_err = std::max(report.max_rel_err, c.rel_err);
            report.max_abs_err = std::max(report.max_abs_err, c.abs_err);
            report.max_grad = std::max(report.max_grad, std::abs(c.autodiff));
        }
        report.passed = report.passed && c.pass;
        report.coords.push_back(c);
    }
    return report;
}

Tensor as_scalar(Tensor y, const char* who) {
    if (y.numel() != 1) throw ShapeError(std::string(who) + ": f must be scalar-valued, got " + shape_str(y.shape()));
    return y.shape().empty() ? y : reshape(y, {});
}

} // namespace

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           const GradCheckOptions& options) {
    if (!(options.h > 0.0)) throw ValueError("grad_check: step h must be positive");

    Tensor leaf = x.detach();
    leaf.set_requires_grad(true);
    current_tape().clear();
    backward(as_scalar(f(leaf), "grad_check"));
    std::vector<double> analytic(static_cast<std::size_t>(leaf.numel()), 0.0);
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

    Tensor probe = x.detach();
    return compare(analytic, probe.mutable_data(), [&]() { return f(probe).item(); }, options);
}

GradCheckReport grad_check_parameter(const std::function<Tensor()>& f, Tensor& parameter,
                                     const GradCheckOptions& options) {
    if (!(options.h > 0.0)) throw ValueError("grad_check: step h must be positive");
    if (!parameter.requires_grad()) throw ValueError("grad_check_parameter: tensor does not require grad");
    current_tape().clear();
    parameter.zero_grad();
    backward(as_scalar(f(), "grad_check_parameter"));
    std::vector<double> analytic(static_cast<std::size_t>(parameter.numel()), 0.0);
    if (parameter.has_grad()) std::copy(parameter.grad().begin(), parameter.grad().end(), analytic.begin());
    parameter.zero_grad();
    return compare(analytic, parameter.mutable_data(), [&]() { return f().item(); }, options);
}

} // namespace liftrefine
