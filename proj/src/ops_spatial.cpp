// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"

#include <array>
#include <cmath>

namespace liftrefine {

using detail::make_result;
using detail::record_op;

namespace {

struct PlaneLayout {
    std::int64_t planes, h, w;
};

PlaneLayout plane_layout(const char* op, const Tensor& x) {
    if (x.rank() < 2) throw ShapeError(std::string(op) + ": rank < 2 for " + shape_str(x.shape()));
    const auto h = x.dim(-2);
    const auto w = x.dim(-1);
    return {x.numel() / (h * w), h, w};
}

Shape with_spatial(const Shape& s, std::int64_t h, std::int64_t w) {
    Shape out = s;
    out[out.size() - 2] = h;
    out[out.size() - 1] = w;
    return out;
}

} // namespace

Tensor upsample_nearest2x(const Tensor& x) {
    const auto L = plane_layout("upsample_nearest2x", x);
    const auto oh = 2 * L.h, ow = 2 * L.w;
    const auto xd = x.data();
    std::vector<double> out(static_cast<std::size_t>(L.planes * oh * ow));
    for (std::int64_t p = 0; p < L.planes; ++p) {
        const double* src = xd.data() + p * L.h * L.w;
        double* dst = out.data() + p * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
            for (std::int64_t xx = 0; xx < ow; ++xx) dst[y * ow + xx] = src[(y / 2) * L.w + xx / 2];
        }
    }
    Tensor result = make_result(with_spatial(x.shape(), oh, ow), std::move(out));
    record_op("upsample_nearest2x", {&x}, result, [L, oh, ow](Tape::Node& node) {
        const auto& g = node.output->grad;
        auto& gx = detail::grad_buffer(*node.inputs[0]);
        for (std::int64_t p = 0; p < L.planes; ++p) {
            const double* src = g.data() + p * oh * ow;
            double* dst = gx.data() + p * L.h * L.w;
            for (std::int64_t y = 0; y < oh; ++y) {
                for (std::int64_t xx = 0; xx < ow; ++xx) dst[(y / 2) * L.w + xx / 2] += src[y * ow + xx];
            }
        }
    });
    return result;
}

Tensor avg_pool2x(const Tensor& x) {
    const auto L = plane_layout("avg_pool2x", x);
    if (L.h % 2 || L.w % 2) throw ShapeError("avg_pool2x: odd spatial size in " + shape_str(x.shape()));
    const auto oh = L.h / 2, ow = L.w / 2;
    const auto xd = x.data();
    std::vector<double> out(static_cast<std::size_t>(L.planes * oh * ow));
    for (std::int64_t p = 0; p < L.planes; ++p) {
        const double* src = xd.data() + p * L.h * L.w;
        double* dst = out.data() + p * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
            for (std::int64_t xx = 0; xx < ow; ++xx) {
                const double* s = src + 2 * y * L.w + 2 * xx;
                dst[y * ow + xx] = 0.25 * (s[0] + s[1] + s[L.w] + s[L.w + 1]);
            }
        }
    }
    Tensor result = make_result(with_spatial(x.shape(), oh, ow), std::move(out));
    record_op("avg_pool2x", {&x}, result, [L, oh, ow](Tape::Node& node) {
        const auto& g = node.output->grad;
        auto& gx = detail::grad_buffer(*node.inputs[0]);
        for (std::int64_t p = 0; p < L.planes; ++p) {
            const double* src = g.data() + p * oh * ow;
            double* dst = gx.data() + p * L.h * L.w;
            for (std::int64_t y = 0; y < oh; ++y) {
                for (std::int64_t xx = 0; xx < ow; ++xx) {
                    const double v = 0.25 * src[y * ow + xx];
                    double* d = dst + 2 * y * L.w + 2 * xx;
                    d[0] += v;
                    d[1] += v;
                    d[L.w] += v;
                    d[L.w + 1] += v;
                }
            }
        }
    });
    return result;
}

Tensor group_norm(const Tensor& x, std::int64_t groups, double eps) {
    if (x.rank() != 3 && x.rank() != 4) throw ShapeError("group_norm: expected [C,H,W] or [B,C,H,W], got " + shape_str(x.shape()));
    const std::int64_t c = x.dim(-3);
    if (groups < 1 || c % groups != 0) {
        throw ValueError("group_norm: " + std::to_string(c) + " channels do not split into " + std::to_string(groups) + " groups");
    }
    const std::int64_t n = (c / groups) * x.dim(-2) * x.dim(-1);  // elements per group
    const std::int64_t count = x.numel() / n;
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    std::vector<double> rstd(static_cast<std::size_t>(count));
    for (std::int64_t g = 0; g < count; ++g) {
        const double* src = xd.data() + g * n;
        double mu = 0.0;
        for (std::int64_t i = 0; i < n; ++i) mu += src[i];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::int64_t i = 0; i < n; ++i) var += (src[i] - mu) * (src[i] - mu);
        const double r = 1.0 / std::sqrt(var / static_cast<double>(n) + eps);
        rstd[static_cast<std::size_t>(g)] = r;
        for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(g * n + i)] = (src[i] - mu) * r;
    }
    Tensor result = make_result(x.shape(), std::move(out));
    record_op("group_norm", {&x}, result, [n, count, rstd = std::move(rstd)](Tape::Node& node) {
        const auto& g = node.output->grad;
        const auto& y = node.output->data;
        auto& gx = detail::grad_buffer(*node.inputs[0]);
        for (std::int64_t k = 0; k < count; ++k) {
            const std::int64_t o = k * n;
            double mg = 0.0, mgy = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                mg += g[o + i];
                mgy += g[o + i] * y[o + i];
            }
            mg /= static_cast<double>(n);
            mgy /= static_cast<double>(n);
            const double r = rstd[static_cast<std::size_t>(k)];
            for (std::int64_t i = 0; i < n; ++i) gx[o + i] += r * (g[o + i] - mg - y[o + i] * mgy);
        }
    });
    return result;
}

namespace {

struct CubicTaps {
    std::array<std::int64_t, 4> index;
    std::array<double, 4> weight;
};

double keys_kernel(double d) {
    constexpr double a = -0.5;
    d = std::abs(d);
    if (d <= 1.0) return ((a + 2.0) * d - (a + 3.0)) * d * d + 1.0;
    if (d < 2.0) return ((a * d - 5.0 * a) * d + 8.0 * a) * d - 4.0 * a;
    return 0.0;
}

std::vector<CubicTaps> cubic_taps(std::int64_t in_size, std::int64_t factor) {
    std::vector<CubicTaps> taps(static_cast<std::size_t>(in_size * factor));
    for (std::int64_t o = 0; o < in_size * factor; ++o) {
        const double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
        const auto base = static_cast<std::int64_t>(std::floor(src));
        const double t = src - static_cast<double>(base);
        auto& tp = taps[static_cast<std::size_t>(o)];
        for (int j = 0; j < 4; ++j) {
            const auto idx = base - 1 + j;
            tp.index[static_cast<std::size_t>(j)] = std::clamp<std::int64_t>(idx, 0, in_size - 1);
            tp.weight[static_cast<std::size_t>(j)] = keys_kernel(t - static_cast<double>(j - 1));
        }
    }
    return taps;
}

} // namespace

Tensor bicubic_upsample(const Tensor& x, std::int64_t factor) {
    if (factor < 1) throw ValueError("bicubic_upsample: factor must be >= 1");
    const auto L = plane_layout("bicubic_upsample", x);
    if (factor == 1) return reshape(x, x.shape());
    const auto oh = L.h * factor, ow = L.w * factor;
    const auto ty = cubic_taps(L.h, factor);
    const auto tx = cubic_taps(L.w, factor);
    const auto xd = x.data();
    std::vector<double> out(static_cast<std::size_t>(L.planes * oh * ow));
    for (std::int64_t p = 0; p < L.planes; ++p) {
        const double* src = xd.data() + p * L.h * L.w;
        double* dst = out.data() + p * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
            const auto& cy = ty[static_cast<std::size_t>(y)];
            for (std::int64_t xx = 0; xx < ow; ++xx) {
                const auto& cx = tx[static_cast<std::size_t>(xx)];
                double acc = 0.0;
                for (int a = 0; a < 4; ++a) {
                    const double* row = src + cy.index[static_cast<std::size_t>(a)] * L.w;
                    double r = 0.0;
                    for (int b = 0; b < 4; ++b) r += cx.weight[static_cast<std::size_t>(b)] * row[cx.index[static_cast<std::size_t>(b)]];
                    acc += cy.weight[static_cast<std::size_t>(a)] * r;
                }
                dst[y * ow + xx] = acc;
            }
        }
    }
    Tensor result = make_result(with_spatial(x.shape(), oh, ow), std::move(out));
    record_op("bicubic_upsample", {&x}, result, [L, oh, ow, ty, tx](Tape::Node& node) {
        const auto& g = node.output->grad;
        auto& gx = detail::grad_buffer(*node.inputs[0]);
        for (std::int64_t p = 0; p < L.planes; ++p) {
            const double* src = g.data() + p * oh * ow;
            double* dst = gx.data() + p * L.h * L.w;
            for (std::int64_t y = 0; y < oh; ++y) {
                const auto& cy = ty[static_cast<std::size_t>(y)];
                for (std::int64_t xx = 0; xx < ow; ++xx) {
                    const auto& cx = tx[static_cast<std::size_t>(xx)];
                    const double gv = src[y * ow + xx];
                    for (int a = 0; a < 4; ++a) {
                        double* row = dst + cy.index[static_cast<std::size_t>(a)] * L.w;
                        const double ga = gv * cy.weight[static_cast<std::size_t>(a)];
                        for (int b = 0; b < 4; ++b) row[cx.index[static_cast<std::size_t>(b)]] += ga * cx.weight[static_cast<std::size_t>(b)];
                    }
                }
            }
        }
    });
    return result;
}

Tensor bilinear_sample_2d(const Tensor& image, const Tensor& coords) {
    if (image.rank() != 3 || coords.rank() != 2 || coords.dim(1) != 2) {
        throw ShapeError("bilinear_sample_2d: incompatible shapes image " + shape_str(image.shape()) + ", coords " +
                         shape_str(coords.shape()));
    }
    const auto C = image.dim(0), H = image.dim(1), W = image.dim(2), N = coords.dim(0);
    const auto img = image.data();
    const auto cd = coords.data();
    std::vector<double> out(static_cast<std::size_t>(N * C), 0.0);
    auto tap = [&](std::int64_t c, std::int64_t y, std::int64_t x) -> double {
        return (x < 0 || x >= W || y < 0 || y >= H) ? 0.0 : img[static_cast<std::size_t>((c * H + y) * W + x)];
    };
    for (std::int64_t n = 0; n < N; ++n) {
        const double x = cd[static_cast<std::size_t>(2 * n)];
        const double y = cd[static_cast<std::size_t>(2 * n + 1)];
        const double fx0 = std::floor(x), fy0 = std::floor(y);
        const auto x0 = static_cast<std::int64_t>(fx0), y0 = static_cast<std::int64_t>(fy0);
        const double ax = x - fx0, ay = y - fy0;
        const double w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay), w01 = (1 - ax) * ay, w11 = ax * ay;
        double* o = out.data() + n * C;
        for (std::int64_t c = 0; c < C; ++c) {
            o[c] = w00 * tap(c, y0, x0) + w10 * tap(c, y0, x0 + 1) + w01 * tap(c, y0 + 1, x0) +
                   w11 * tap(c, y0 + 1, x0 + 1);
        }
    }
    Tensor result = make_result({N, C}, std::move(out));
    record_op("bilinear_sample_2d", {&image, &coords}, result, [C, H, W, N](Tape::Node& node) {
        auto& ii = *node.inputs[0];
        auto& ci = *node.inputs[1];
        const auto& g = node.output->grad;
        const auto& img = ii.data;
        const auto& cd = ci.data;
        double* gi = ii.requires_grad ? detail::grad_buffer(ii).data() : nullptr;
        double* gc = ci.requires_grad ? detail::grad_buffer(ci).data() : nullptr;
        auto inside = [&](std::int64_t y, std::int64_t x) { return x >= 0 && x < W && y >= 0 && y < H; };
        for (std::int64_t n = 0; n < N; ++n) {
            const double x = cd[static_cast<std::size_t>(2 * n)];
            const double y = cd[static_cast<std::size_t>(2 * n + 1)];
            const double fx0 = std::floor(x), fy0 = std::floor(y);
            const auto x0 = static_cast<std::int64_t>(fx0), y0 = static_cast<std::int64_t>(fy0);
            const double ax = x - fx0, ay = y - fy0;
            const std::array<std::int64_t, 4> ty{y0, y0, y0 + 1, y0 + 1};
            const std::array<std::int64_t, 4> tx{x0, x0 + 1, x0, x0 + 1};
            const std::array<double, 4> w{(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
            // d(weight)/dx and d(weight)/dy for each tap.
            const std::array<double, 4> wx{-(1 - ay), (1 - ay), -ay, ay};
            const std::array<double, 4> wy{-(1 - ax), -ax, (1 - ax), ax};
            const double* gn = g.data() + n * C;
            double dx = 0.0, dy = 0.0;
            for (std::size_t t = 0; t < 4; ++t) {
                if (!inside(ty[t], tx[t])) continue;
                const auto base = ty[t] * W + tx[t];
                for (std::int64_t c = 0; c < C; ++c) {
                    const auto idx = static_cast<std::size_t>(c * H * W + base);
                    if (gi) gi[idx] += gn[c] * w[t];
                    if (gc) {
                        dx += gn[c] * wx[t] * img[idx];
                        dy += gn[c] * wy[t] * img[idx];
                    }
                }
            }
            if (gc) {
                gc[2 * n] += dx;
                gc[2 * n + 1] += dy;
            }
        }
    });
    return result;
}

Tensor trilinear_sample_3d(const Tensor& volume, const Tensor& coords) {
    if (volume.rank() != 4 || coords.rank() != 2 || coords.dim(1) != 3) {
        throw ShapeError("trilinear_sample_3d: incompatible shapes volume " + shape_str(volume.shape()) +
                         ", coords " + shape_str(coords.shape()));
    }
    const auto C = volume.dim(0), D = volume.dim(1), H = volume.dim(2), W = volume.dim(3), N = coords.dim(0);

    struct Taps {
        std::array<std::int64_t, 8> offset; // -1 when outside
        std::array<double, 8> w;
        std::array<std::array<double, 3>, 8> dw; // d w / d(x,y,z)
    };
    auto make_taps = [=](const double* p) {
        Taps t{};
        const double fx = std::floor(p[0]), fy = std::floor(p[1]), fz = std::floor(p[2]);
        const auto x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy),
                   z0 = static_cast<std::int64_t>(fz);
        const double ax = p[0] - fx, ay = p[1] - fy, az = p[2] - fz;
        for (int i = 0; i < 8; ++i) {
            const int bx = i & 1, by = (i >> 1) & 1, bz = (i >> 2) & 1;
            const auto x = x0 + bx, y = y0 + by, z = z0 + bz;
            const double wx = bx ? ax : 1 - ax, wy = by ? ay : 1 - ay, wz = bz ? az : 1 - az;
            const double sx = bx ? 1.0 : -1.0, sy = by ? 1.0 : -1.0, sz = bz ? 1.0 : -1.0;
            const auto k = static_cast<std::size_t>(i);
            const bool in = x >= 0 && x < W && y >= 0 && y < H && z >= 0 && z < D;
            t.offset[k] = in ? (z * H + y) * W + x : -1;
            t.w[k] = wx * wy * wz;
            t.dw[k] = {sx * wy * wz, wx * sy * wz, wx * wy * sz};
        }
        return t;
    };

    const auto vd = volume.data();
    const auto cd = coords.data();
    const auto spatial = D * H * W;
    std::vector<double> out(static_cast<std::size_t>(N * C), 0.0);
    for (std::int64_t n = 0; n < N; ++n) {
        const auto t = make_taps(cd.data() + 3 * n);
        double* o = out.data() + n * C;
        for (std::size_t k = 0; k < 8; ++k) {
            if (t.offset[k] < 0) continue;
            for (std::int64_t c = 0; c < C; ++c) o[c] += t.w[k] * vd[static_cast<std::size_t>(c * spatial + t.offset[k])];
        }
    }
    Tensor result = make_result({N, C}, std::move(out));
    record_op("trilinear_sample_3d", {&volume, &coords}, result, [=](Tape::Node& node) {
        auto& vi = *node.inputs[0];
        auto& ci = *node.inputs[1];
        const auto& g = node.output->grad;
        double* gv = vi.requires_grad ? detail::grad_buffer(vi).data() : nullptr;
        double* gc = ci.requires_grad ? detail::grad_buffer(ci).data() : nullptr;
        for (std::int64_t n = 0; n < N; ++n) {
            const auto t = make_taps(ci.data.data() + 3 * n);
            const double* gn = g.data() + n * C;
            std::array<double, 3> dp{0.0, 0.0, 0.0};
            for (std::size_t k = 0; k < 8; ++k) {
                if (t.offset[k] < 0) continue;
                for (std::int64_t c = 0; c < C; ++c) {
                    const auto idx = static_cast<std::size_t>(c * spatial + t.offset[k]);
                    if (gv) gv[idx] += gn[c] * t.w[k];
                    if (gc) {
                        for (std::size_t a = 0; a < 3; ++a) dp[a] += gn[c] * t.dw[k][a] * vi.data[idx];
                    }
                }
            }
            if (gc) {
                for (std::size_t a = 0; a < 3; ++a) gc[3 * n + static_cast<std::int64_t>(a)] += dp[a];
            }
        }
    });
    return result;
}

} // namespace liftrefine
