// SPDX-License-Identifier: Apache-2.0
#include "kernels.hpp"
#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"

#include <algorithm>
#include <cmath>

namespace liftrefine {

using detail::make_result;
using detail::record_op;
using kernels::gemm;

namespace {

struct AttentionGeometry {
    std::int64_t batch = 1, n = 0, m = 0, d = 0, dv = 0;
    bool q_batched = false, kv_batched = false, mask_batched = false, has_mask = false, out_batched = false;
};

// Sum of `values` accumulated in ascending order; independent of input order.
double sorted_sum(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

} // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask, AttentionOptions options) {
    auto fail = [&]() {
        throw ShapeError("attention: incompatible shapes q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                         ", v " + shape_str(v.shape()) +
                         (mask.defined() ? ", mask " + shape_str(mask.shape()) : std::string()));
    };
    AttentionGeometry g;
    if ((q.rank() != 2 && q.rank() != 3) || (k.rank() != 2 && k.rank() != 3) || k.rank() != v.rank()) fail();
    g.q_batched = q.rank() == 3;
    g.kv_batched = k.rank() == 3;
    g.out_batched = g.q_batched || g.kv_batched;
    g.n = q.dim(-2);
    g.d = q.dim(-1);
    g.m = k.dim(-2);
    g.dv = v.dim(-1);
    if (k.dim(-1) != g.d || v.dim(-2) != g.m) fail();
    if (g.q_batched) g.batch = q.dim(0);
    if (g.kv_batched) {
        if (g.q_batched && k.dim(0) != g.batch) fail();
        g.batch = k.dim(0);
        if (v.dim(0) != g.batch) fail();
    }
    if (mask.defined()) {
        g.has_mask = true;
        g.mask_batched = mask.rank() == 2;
        if (mask.rank() == 1) {
            if (mask.dim(0) != g.m) fail();
        } else if (mask.rank() == 2) {
            if (mask.dim(0) != g.batch || mask.dim(1) != g.m) fail();
        } else {
            fail();
        }
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(g.d));
    const auto qd = q.data();
    const auto kd = k.data();
    const auto vd = v.data();
    const auto md = mask.defined() ? mask.data() : std::span<const double>();
    auto q_ptr = [&](std::int64_t b) { return qd.data() + (g.q_batched ? b * g.n * g.d : 0); };
    auto k_ptr = [&](std::int64_t b) { return kd.data() + (g.kv_batched ? b * g.m * g.d : 0); };
    auto v_ptr = [&](std::int64_t b) { return vd.data() + (g.kv_batched ? b * g.m * g.dv : 0); };
    auto keep = [&](std::int64_t b, std::int64_t j) {
        if (!g.has_mask) return true;
        return md[static_cast<std::size_t>(g.mask_batched ? b * g.m + j : j)] != 0.0;
    };

    // probs holds the softmax weights P[b, i, j]; masked entries are zero.
    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(g.batch * g.n * g.m));
    std::vector<double> out(static_cast<std::size_t>(g.batch * g.n * g.dv), 0.0);
    std::vector<double> scratch;
    for (std::int64_t b = 0; b < g.batch; ++b) {
        double* P = probs->data() + b * g.n * g.m;
        gemm(false, true, g.n, g.m, g.d, q_ptr(b), k_ptr(b), P, false);
        double* O = out.data() + b * g.n * g.dv;
        for (std::int64_t i = 0; i < g.n; ++i) {
            double* row = P + i * g.m;
            double mx = -INFINITY;
            for (std::int64_t j = 0; j < g.m; ++j) {
                row[j] *= scale;
                if (keep(b, j)) mx = std::max(mx, row[j]);
            }
            if (mx == -INFINITY) {
                std::fill(row, row + g.m, 0.0);
                continue;
            }
            for (std::int64_t j = 0; j < g.m; ++j) row[j] = keep(b, j) ? std::exp(row[j] - mx) : 0.0;
            double z = 0.0;
            if (options.order_invariant) {
                scratch.assign(row, row + g.m);
                z = sorted_sum(scratch);
            } else {
                for (std::int64_t j = 0; j < g.m; ++j) z += row[j];
            }
            for (std::int64_t j = 0; j < g.m; ++j) row[j] /= z;
        }
        if (options.order_invariant) {
            const double* V = v_ptr(b);
            for (std::int64_t i = 0; i < g.n; ++i) {
                for (std::int64_t c = 0; c < g.dv; ++c) {
                    scratch.clear();
                    for (std::int64_t j = 0; j < g.m; ++j) {
                        if (keep(b, j)) scratch.push_back(P[i * g.m + j] * V[j * g.dv + c]);
                    }
                    O[i * g.dv + c] = sorted_sum(scratch);
                }
            }
        } else {
            gemm(false, false, g.n, g.dv, g.m, P, v_ptr(b), O, false);
        }
    }

    Shape out_shape = g.out_batched ? Shape{g.batch, g.n, g.dv} : Shape{g.n, g.dv};
    Tensor result = make_result(std::move(out_shape), std::move(out));
    record_op("attention", {&q, &k, &v}, result, [g, scale, probs](Tape::Node& node) {
        auto& qi = *node.inputs[0];
        auto& ki = *node.inputs[1];
        auto& vi = *node.inputs[2];
        const double* gout = node.output->grad.data();
        double* gq = qi.requires_grad ? detail::grad_buffer(qi).data() : nullptr;
        double* gk = ki.requires_grad ? detail::grad_buffer(ki).data() : nullptr;
        double* gv = vi.requires_grad ? detail::grad_buffer(vi).data() : nullptr;
        std::vector<double> dP(static_cast<std::size_t>(g.n * g.m));
        for (std::int64_t b = 0; b < g.batch; ++b) {
            const double* P = probs->data() + b * g.n * g.m;
            const double* dO = gout + b * g.n * g.dv;
            const double* Q = qi.data.data() + (g.q_batched ? b * g.n * g.d : 0);
            const double* K = ki.data.data() + (g.kv_batched ? b * g.m * g.d : 0);
            const double* V = vi.data.data() + (g.kv_batched ? b * g.m * g.dv : 0);
            if (gv) gemm(true, false, g.m, g.dv, g.n, P, dO, gv + (g.kv_batched ? b * g.m * g.dv : 0), true);
            if (!gq && !gk) continue;
            gemm(false, true, g.n, g.m, g.dv, dO, V, dP.data(), false);
            for (std::int64_t i = 0; i < g.n; ++i) {
                const double* prow = P + i * g.m;
                double* drow = dP.data() + i * g.m;
                double dot = 0.0;
                for (std::int64_t j = 0; j < g.m; ++j) dot += prow[j] * drow[j];
                for (std::int64_t j = 0; j < g.m; ++j) drow[j] = prow[j] * (drow[j] - dot) * scale;
            }
            if (gq) gemm(false, false, g.n, g.d, g.m, dP.data(), K, gq + (g.q_batched ? b * g.n * g.d : 0), true);
            if (gk) gemm(true, false, g.m, g.d, g.n, dP.data(), Q, gk + (g.kv_batched ? b * g.m * g.d : 0), true);
        }
    });
    return result;
}

Tensor expand_channels(const Tensor& v, std::int64_t height, std::int64_t width) {
    if (v.rank() != 1) throw ShapeError("expand_channels: expected [C], got " + shape_str(v.shape()));
    const auto c = v.dim(0);
    const Tensor ones = Tensor::ones({1, height * width});
    return reshape(matmul(reshape(v, {c, 1}), ones), {c, height, width});
}

Tensor channel_modulate(const Tensor& x, const Tensor& scale, const Tensor& shift) {
    if (x.rank() != 3) throw ShapeError("channel_modulate: expected [C,H,W], got " + shape_str(x.shape()));
    const auto h = x.dim(1), w = x.dim(2);
    return x * (expand_channels(scale, h, w) + 1.0) + expand_channels(shift, h, w);
}

} // namespace liftrefine
