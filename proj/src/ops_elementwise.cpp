// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"

#include <algorithm>
#include <cmath>

namespace liftrefine {

namespace {

using detail::make_result;
using detail::record_op;

struct BroadcastPlan {
    Shape out;
    bool a_is_long = true;
    std::int64_t outer = 1;
    std::int64_t inner = 1;
};

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

BroadcastPlan plan_broadcast(const char* op, const Tensor& a, const Tensor& b) {
    BroadcastPlan p;
    if (is_suffix(b.shape(), a.shape())) {
        p.out = a.shape();
        p.a_is_long = true;
        p.inner = b.numel();
        p.outer = a.numel() / p.inner;
    } else if (is_suffix(a.shape(), b.shape())) {
        p.out = b.shape();
        p.a_is_long = false;
        p.inner = a.numel();
        p.outer = b.numel() / p.inner;
    } else {
        throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    return p;
}

// Forward f(x, y); backward uses partials da(x, y, out) and db(x, y, out).
template <typename F, typename DA, typename DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
    const auto plan = plan_broadcast(name, a, b);
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(static_cast<std::size_t>(plan.outer * plan.inner));
    for (std::int64_t o = 0; o < plan.outer; ++o) {
        for (std::int64_t i = 0; i < plan.inner; ++i) {
            const auto li = static_cast<std::size_t>(o * plan.inner + i);
            const auto si = static_cast<std::size_t>(i);
            const double x = plan.a_is_long ? ad[li] : ad[si];
            const double y = plan.a_is_long ? bd[si] : bd[li];
            out[li] = f(x, y);
        }
    }
    Tensor result = make_result(plan.out, std::move(out));
    record_op(name, {&a, &b}, result, [plan, da, db](Tape::Node& node) {
        auto& ai = *node.inputs[0];
        auto& bi = *node.inputs[1];
        const auto& g = node.output->grad;
        const auto& od = node.output->data;
        std::vector<double>* ga = ai.requires_grad ? &detail::grad_buffer(ai) : nullptr;
        std::vector<double>* gb = bi.requires_grad ? &detail::grad_buffer(bi) : nullptr;
        for (std::int64_t o = 0; o < plan.outer; ++o) {
            for (std::int64_t i = 0; i < plan.inner; ++i) {
                const auto li = static_cast<std::size_t>(o * plan.inner + i);
                const auto si = static_cast<std::size_t>(i);
                const auto aidx = plan.a_is_long ? li : si;
                const auto bidx = plan.a_is_long ? si : li;
                const double x = ai.data[aidx];
                const double y = bi.data[bidx];
                if (ga) (*ga)[aidx] += g[li] * da(x, y, od[li]);
                if (gb) (*gb)[bidx] += g[li] * db(x, y, od[li]);
            }
        }
    });
    return result;
}

// Forward f(x); backward df(x, y) where y = f(x).
template <typename F, typename DF>
Tensor unary(const char* name, const Tensor& x, F f, DF df) {
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
    Tensor result = make_result(x.shape(), std::move(out));
    record_op(name, {&x}, result, [df](Tape::Node& node) {
        auto& xi = *node.inputs[0];
        const auto& g = node.output->grad;
        const auto& y = node.output->data;
        auto& gx = detail::grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xi.data[i], y[i]);
    });
    return result;
}

double sigmoid_value(double x) {
    if (x >= 0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    for (double v : b.data()) {
        if (v == 0.0) throw ValueError("div: divisor of shape " + shape_str(b.shape()) + " contains zero");
    }
    return binary(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double x, double y, double) { return -x / (y * y); });
}

Tensor affine(const Tensor& x, double scale, double shift) {
    return unary(
        "affine", x, [scale, shift](double v) { return scale * v + shift; },
        [scale](double, double) { return scale; });
}

Tensor neg(const Tensor& x) { return affine(x, -1.0, 0.0); }

Tensor relu(const Tensor& x) {
    return unary(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& x) {
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    std::vector<double> sig(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) {
        sig[i] = sigmoid_value(xd[i]);
        out[i] = xd[i] * sig[i];
    }
    Tensor result = make_result(x.shape(), std::move(out));
    record_op("silu", {&x}, result, [sig = std::move(sig)](Tape::Node& node) {
        auto& xi = *node.inputs[0];
        const auto& g = node.output->grad;
        auto& gx = detail::grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sig[i] * (1.0 + xi.data[i] * (1.0 - sig[i]));
    });
    return result;
}

Tensor sigmoid(const Tensor& x) {
    return unary("sigmoid", x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
    return unary(
        "softplus", x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        [](double v, double) { return sigmoid_value(v); });
}

Tensor exp(const Tensor& x) {
    return unary(
        "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    for (double v : x.data()) {
        if (!(v > 0.0)) throw ValueError("log: non-positive input in tensor of shape " + shape_str(x.shape()));
    }
    return unary(
        "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sin(const Tensor& x) {
    return unary(
        "sin", x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Tensor abs(const Tensor& x) {
    return unary(
        "abs", x, [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
    return unary(
        "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& x) { return neg(x); }
Tensor operator+(const Tensor& x, double s) { return affine(x, 1.0, s); }
Tensor operator+(double s, const Tensor& x) { return affine(x, 1.0, s); }
Tensor operator-(const Tensor& x, double s) { return affine(x, 1.0, -s); }
Tensor operator-(double s, const Tensor& x) { return affine(x, -1.0, s); }
Tensor operator*(const Tensor& x, double s) { return affine(x, s, 0.0); }
Tensor operator*(double s, const Tensor& x) { return affine(x, s, 0.0); }

// --- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    Tensor result = make_result({}, {total});
    record_op("sum", {&x}, result, [](Tape::Node& node) {
        const double g = node.output->grad[0];
        auto& gx = detail::grad_buffer(*node.inputs[0]);
        for (auto& v : gx) v += g;
    });
    return result;
}

Tensor mean(const Tensor& x) { return affine(sum(x), 1.0 / static_cast<double>(x.numel()), 0.0); }

namespace {

struct AxisSplit {
    std::int64_t outer = 1, extent = 1, inner = 1;
    Shape reduced;
};

AxisSplit split_axis(const char* op, const Shape& shape, std::int64_t& axis) {
    const auto r = static_cast<std::int64_t>(shape.size());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) {
        throw ShapeError(std::string(op) + ": axis out of range for shape " + shape_str(shape));
    }
    AxisSplit s;
    for (std::int64_t i = 0; i < r; ++i) {
        const auto d = shape[static_cast<std::size_t>(i)];
        if (i < axis) s.outer *= d;
        if (i == axis) s.extent = d;
        if (i > axis) s.inner *= d;
        if (i != axis) s.reduced.push_back(d);
    }
    return s;
}

} // namespace

Tensor sum(const Tensor& x, std::int64_t axis) {
    const auto s = split_axis("sum", x.shape(), axis);
    const auto xd = x.data();
    std::vector<double> out(static_cast<std::size_t>(s.outer * s.inner), 0.0);
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t e = 0; e < s.extent; ++e) {
            const double* src = xd.data() + (o * s.extent + e) * s.inner;
            double* dst = out.data() + o * s.inner;
            for (std::int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
    }
    Tensor result = make_result(s.reduced, std::move(out));
    record_op("sum_axis", {&x}, result, [s](Tape::Node& node) {
        const auto& g = node.output->grad;
        auto& gx = detail::grad_buffer(*node.inputs[0]);
        for (std::int64_t o = 0; o < s.outer; ++o) {
            for (std::int64_t e = 0; e < s.extent; ++e) {
                double* dst = gx.data() + (o * s.extent + e) * s.inner;
                const double* src = g.data() + o * s.inner;
                for (std::int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
            }
        }
    });
    return result;
}

Tensor mean(const Tensor& x, std::int64_t axis) {
    const auto extent = x.dim(axis);
    return affine(sum(x, axis), 1.0 / static_cast<double>(extent), 0.0);
}

Tensor softmax(const Tensor& x) {
    if (x.rank() == 0) throw ShapeError("softmax: scalar input");
    const auto n = x.dim(-1);
    const auto rows = x.numel() / n;
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* src = xd.data() + r * n;
        double* dst = out.data() + r * n;
        const double mx = *std::max_element(src, src + n);
        double z = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            dst[i] = std::exp(src[i] - mx);
            z += dst[i];
        }
        for (std::int64_t i = 0; i < n; ++i) dst[i] /= z;
    }
    Tensor result = make_result(x.shape(), std::move(out));
    record_op("softmax", {&x}, result, [n, rows](Tape::Node& node) {
        const auto& g = node.output->grad;
        const auto& y = node.output->data;
        auto& gx = detail::grad_buffer(*node.inputs[0]);
        for (std::int64_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::int64_t i = 0; i < n; ++i) dot += g[r * n + i] * y[r * n + i];
            for (std::int64_t i = 0; i < n; ++i) gx[r * n + i] += y[r * n + i] * (g[r * n + i] - dot);
        }
    });
    return result;
}

} // namespace liftrefine
