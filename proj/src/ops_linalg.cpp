// SPDX-License-Identifier: Apache-2.0
#include "kernels.hpp"
#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"

namespace liftrefine {

using detail::make_result;
using detail::record_op;
using kernels::gemm;

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    auto fail = [&]() {
        throw ShapeError("matmul: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
    };
    std::int64_t batch = 1, m = 0, k = 0, n = 0;
    bool batched_b = false;
    Shape out_shape;
    if (as.size() == 2 && bs.size() == 2) {
        m = as[0], k = as[1], n = bs[1];
        if (bs[0] != k) fail();
        out_shape = {m, n};
    } else if (as.size() == 3 && bs.size() == 3) {
        batch = as[0], m = as[1], k = as[2], n = bs[2];
        if (bs[0] != batch || bs[1] != k) fail();
        batched_b = true;
        out_shape = {batch, m, n};
    } else if (as.size() == 3 && bs.size() == 2) {
        // Shared right operand: fold the batch into rows.
        batch = 1, m = as[0] * as[1], k = as[2], n = bs[1];
        if (bs[0] != k) fail();
        out_shape = {as[0], as[1], n};
    } else {
        fail();
    }
    std::vector<double> out(static_cast<std::size_t>(batch * m * n));
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::int64_t i = 0; i < batch; ++i) {
        gemm(false, false, m, n, k, ad + i * m * k, bd + (batched_b ? i * k * n : 0), out.data() + i * m * n, false);
    }
    Tensor result = make_result(std::move(out_shape), std::move(out));
    record_op("matmul", {&a, &b}, result, [batch, m, n, k, batched_b](Tape::Node& node) {
        auto& ai = *node.inputs[0];
        auto& bi = *node.inputs[1];
        const double* g = node.output->grad.data();
        for (std::int64_t i = 0; i < batch; ++i) {
            const double* gi = g + i * m * n;
            const double* bptr = bi.data.data() + (batched_b ? i * k * n : 0);
            const double* aptr = ai.data.data() + i * m * k;
            if (ai.requires_grad) {
                gemm(false, true, m, k, n, gi, bptr, detail::grad_buffer(ai).data() + i * m * k, true);
            }
            if (bi.requires_grad) {
                gemm(true, false, k, n, m, aptr, gi, detail::grad_buffer(bi).data() + (batched_b ? i * k * n : 0),
                     true);
            }
        }
    });
    return result;
}

namespace {

struct ConvGeometry {
    std::int64_t batch, cin, cout, h, w, ksize, pad;
    std::int64_t rows() const { return cin * ksize * ksize; }
    std::int64_t pixels() const { return h * w; }
};

void im2col(const ConvGeometry& g, const double* x, double* cols) {
    const auto hw = g.pixels();
    for (std::int64_t c = 0; c < g.cin; ++c) {
        for (std::int64_t ky = 0; ky < g.ksize; ++ky) {
            for (std::int64_t kx = 0; kx < g.ksize; ++kx) {
                double* row = cols + ((c * g.ksize + ky) * g.ksize + kx) * hw;
                const double* plane = x + c * hw;
                for (std::int64_t y = 0; y < g.h; ++y) {
                    const auto sy = y + ky - g.pad;
                    double* dst = row + y * g.w;
                    if (sy < 0 || sy >= g.h) {
                        std::fill(dst, dst + g.w, 0.0);
                        continue;
                    }
                    for (std::int64_t xx = 0; xx < g.w; ++xx) {
                        const auto sx = xx + kx - g.pad;
                        dst[xx] = (sx >= 0 && sx < g.w) ? plane[sy * g.w + sx] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* dx) {
    const auto hw = g.pixels();
    for (std::int64_t c = 0; c < g.cin; ++c) {
        for (std::int64_t ky = 0; ky < g.ksize; ++ky) {
            for (std::int64_t kx = 0; kx < g.ksize; ++kx) {
                const double* row = cols + ((c * g.ksize + ky) * g.ksize + kx) * hw;
                double* plane = dx + c * hw;
                for (std::int64_t y = 0; y < g.h; ++y) {
                    const auto sy = y + ky - g.pad;
                    if (sy < 0 || sy >= g.h) continue;
                    const double* src = row + y * g.w;
                    for (std::int64_t xx = 0; xx < g.w; ++xx) {
                        const auto sx = xx + kx - g.pad;
                        if (sx >= 0 && sx < g.w) plane[sy * g.w + sx] += src[xx];
                    }
                }
            }
        }
    }
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    const bool batched = xs.size() == 4;
    if ((xs.size() != 3 && xs.size() != 4) || ws.size() != 4 || ws[2] != ws[3] || ws[2] % 2 == 0 ||
        ws[1] != xs[xs.size() - 3] || (bias.defined() && (bias.rank() != 1 || bias.dim(0) != ws[0]))) {
        throw ShapeError("conv2d: incompatible shapes input " + shape_str(xs) + ", weight " + shape_str(ws) +
                         ", bias " + (bias.defined() ? shape_str(bias.shape()) : std::string("none")));
    }
    ConvGeometry geo{batched ? xs[0] : 1, ws[1], ws[0], xs[xs.size() - 2], xs[xs.size() - 1], ws[2], ws[2] / 2};
    const auto hw = geo.pixels();
    const bool pointwise = geo.ksize == 1;
    std::vector<double> out(static_cast<std::size_t>(geo.batch * geo.cout * hw));
    std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(geo.rows() * hw));
    const double* xd = x.data().data();
    const double* wd = weight.data().data();
    for (std::int64_t b = 0; b < geo.batch; ++b) {
        const double* xb = xd + b * geo.cin * hw;
        const double* src = xb;
        if (!pointwise) {
            im2col(geo, xb, cols.data());
            src = cols.data();
        }
        double* ob = out.data() + b * geo.cout * hw;
        if (bias.defined()) {
            const auto bd = bias.data();
            for (std::int64_t c = 0; c < geo.cout; ++c) std::fill(ob + c * hw, ob + (c + 1) * hw, bd[c]);
        }
        gemm(false, false, geo.cout, hw, geo.rows(), wd, src, ob, bias.defined());
    }
    Shape out_shape = batched ? Shape{geo.batch, geo.cout, geo.h, geo.w} : Shape{geo.cout, geo.h, geo.w};
    Tensor result = make_result(std::move(out_shape), std::move(out));
    record_op("conv2d", {&x, &weight, &bias}, result, [geo, pointwise](Tape::Node& node) {
        auto& xi = *node.inputs[0];
        auto& wi = *node.inputs[1];
        auto* bi = node.inputs[2].get();
        const auto hw = geo.pixels();
        const double* g = node.output->grad.data();
        std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(geo.rows() * hw));
        std::vector<double> dcols(pointwise ? 0 : static_cast<std::size_t>(geo.rows() * hw));
        for (std::int64_t b = 0; b < geo.batch; ++b) {
            const double* gb = g + b * geo.cout * hw;
            const double* xb = xi.data.data() + b * geo.cin * hw;
            if (wi.requires_grad) {
                const double* src = xb;
                if (!pointwise) {
                    im2col(geo, xb, cols.data());
                    src = cols.data();
                }
                gemm(false, true, geo.cout, geo.rows(), hw, gb, src, detail::grad_buffer(wi).data(), true);
            }
            if (bi && bi->requires_grad) {
                auto& gbias = detail::grad_buffer(*bi);
                for (std::int64_t c = 0; c < geo.cout; ++c) {
                    double s = 0.0;
                    for (std::int64_t p = 0; p < hw; ++p) s += gb[c * hw + p];
                    gbias[static_cast<std::size_t>(c)] += s;
                }
            }
            if (xi.requires_grad) {
                double* dxb = detail::grad_buffer(xi).data() + b * geo.cin * hw;
                if (pointwise) {
                    gemm(true, false, geo.rows(), hw, geo.cout, wi.data.data(), gb, dxb, true);
                } else {
                    gemm(true, false, geo.rows(), hw, geo.cout, wi.data.data(), gb, dcols.data(), false);
                    col2im_add(geo, dcols.data(), dxb);
                }
            }
        }
    });
    return result;
}

} // namespace liftrefine
