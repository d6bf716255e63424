// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/error.hpp"
#include "liftrefine/ops.hpp"

#include <numeric>

namespace liftrefine {

using detail::make_result;
using detail::record_op;

Tensor reshape(const Tensor& x, Shape shape) {
    std::int64_t known = 1;
    int infer = -1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) throw ShapeError("reshape: more than one inferred dimension");
            infer = static_cast<int>(i);
        } else {
            known *= shape[i];
        }
    }
    if (infer >= 0 && known > 0) shape[static_cast<std::size_t>(infer)] = x.numel() / known;
    if (numel_of(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    for (auto d : shape) {
        if (d <= 0) throw ShapeError("reshape: invalid target shape " + shape_str(shape));
    }
    Tensor result = make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
    record_op("reshape", {&x}, result, [](Tape::Node& node) {
        detail::accumulate_grad(*node.inputs[0], node.output->grad);
    });
    return result;
}

Tensor permute(const Tensor& x, const std::vector<std::int64_t>& axes) {
    const auto& in_shape = x.shape();
    const auto r = in_shape.size();
    if (axes.size() != r) throw ShapeError("permute: axes rank mismatch for " + shape_str(in_shape));
    std::vector<bool> seen(r, false);
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) {
        const auto a = axes[i];
        if (a < 0 || static_cast<std::size_t>(a) >= r || seen[static_cast<std::size_t>(a)]) {
            throw ShapeError("permute: invalid axes for " + shape_str(in_shape));
        }
        seen[static_cast<std::size_t>(a)] = true;
        out_shape[i] = in_shape[static_cast<std::size_t>(a)];
    }
    // in_strides[a] is the input stride of input axis a.
    std::vector<std::int64_t> in_strides(r, 1);
    for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
    std::vector<std::int64_t> src_stride(r);
    for (std::size_t i = 0; i < r; ++i) src_stride[i] = in_strides[static_cast<std::size_t>(axes[i])];

    const auto n = static_cast<std::size_t>(x.numel());
    // map[out_flat] = in_flat
    auto index_map = std::make_shared<std::vector<std::int64_t>>(n);
    std::vector<std::int64_t> counter(r, 0);
    std::int64_t src = 0;
    for (std::size_t o = 0; o < n; ++o) {
        (*index_map)[o] = src;
        for (std::size_t d = r; d-- > 0;) {
            ++counter[d];
            src += src_stride[d];
            if (counter[d] < out_shape[d]) break;
            src -= src_stride[d] * out_shape[d];
            counter[d] = 0;
        }
    }
    const auto xd = x.data();
    std::vector<double> out(n);
    for (std::size_t o = 0; o < n; ++o) out[o] = xd[static_cast<std::size_t>((*index_map)[o])];
    Tensor result = make_result(std::move(out_shape), std::move(out));
    record_op("permute", {&x}, result, [index_map](Tape::Node& node) {
        const auto& g = node.output->grad;
        auto& gx = detail::grad_buffer(*node.inputs[0]);
        for (std::size_t o = 0; o < g.size(); ++o) gx[static_cast<std::size_t>((*index_map)[o])] += g[o];
    });
    return result;
}

Tensor transpose(const Tensor& x) {
    if (x.rank() < 2) throw ShapeError("transpose: rank < 2 for " + shape_str(x.shape()));
    std::vector<std::int64_t> axes(static_cast<std::size_t>(x.rank()));
    std::iota(axes.begin(), axes.end(), 0);
    std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
    return permute(x, axes);
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const auto& first = parts.front().shape();
    const auto r = static_cast<std::int64_t>(first.size());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("concat: axis out of range for " + shape_str(first));
    std::int64_t outer = 1, inner = 1, total = 0;
    for (std::int64_t i = 0; i < axis; ++i) outer *= first[static_cast<std::size_t>(i)];
    for (std::int64_t i = axis + 1; i < r; ++i) inner *= first[static_cast<std::size_t>(i)];
    std::vector<std::int64_t> extents;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        bool ok = static_cast<std::int64_t>(s.size()) == r;
        for (std::int64_t i = 0; ok && i < r; ++i) {
            if (i != axis && s[static_cast<std::size_t>(i)] != first[static_cast<std::size_t>(i)]) ok = false;
        }
        if (!ok) throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
        extents.push_back(s[static_cast<std::size_t>(axis)]);
        total += s[static_cast<std::size_t>(axis)];
    }
    Shape out_shape = first;
    out_shape[static_cast<std::size_t>(axis)] = total;
    std::vector<double> out(static_cast<std::size_t>(outer * total * inner));
    std::int64_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto pd = parts[p].data();
        const auto chunk = extents[p] * inner;
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy_n(pd.data() + o * chunk, chunk, out.data() + o * total * inner + offset * inner);
        }
        offset += extents[p];
    }
    Tensor result = make_result(std::move(out_shape), std::move(out));
    record_op("concat", parts, result, [extents, outer, inner, total](Tape::Node& node) {
        const auto& g = node.output->grad;
        std::int64_t off = 0;
        for (std::size_t p = 0; p < node.inputs.size(); ++p) {
            auto& in = *node.inputs[p];
            const auto chunk = extents[p] * inner;
            if (in.requires_grad) {
                auto& gi = detail::grad_buffer(in);
                for (std::int64_t o = 0; o < outer; ++o) {
                    const double* src = g.data() + o * total * inner + off * inner;
                    double* dst = gi.data() + o * chunk;
                    for (std::int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
                }
            }
            off += extents[p];
        }
    });
    return result;
}

Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t begin, std::int64_t end) {
    const auto& shape = x.shape();
    const auto r = static_cast<std::int64_t>(shape.size());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("slice: axis out of range for " + shape_str(shape));
    const auto extent = shape[static_cast<std::size_t>(axis)];
    if (begin < 0 || end > extent || begin >= end) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for axis of size " + std::to_string(extent));
    }
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
    for (std::int64_t i = axis + 1; i < r; ++i) inner *= shape[static_cast<std::size_t>(i)];
    const auto len = end - begin;
    Shape out_shape = shape;
    out_shape[static_cast<std::size_t>(axis)] = len;
    const auto xd = x.data();
    std::vector<double> out(static_cast<std::size_t>(outer * len * inner));
    for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(xd.data() + (o * extent + begin) * inner, len * inner, out.data() + o * len * inner);
    }
    Tensor result = make_result(std::move(out_shape), std::move(out));
    record_op("slice", {&x}, result, [outer, inner, extent, begin, len](Tape::Node& node) {
        const auto& g = node.output->grad;
        auto& gx = detail::grad_buffer(*node.inputs[0]);
        for (std::int64_t o = 0; o < outer; ++o) {
            const double* src = g.data() + o * len * inner;
            double* dst = gx.data() + (o * extent + begin) * inner;
            for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
    return result;
}

} // namespace liftrefine
