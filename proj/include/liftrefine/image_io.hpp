// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/tensor.hpp"

#include <filesystem>

namespace liftrefine {

/// 8-bit RGB PNG from a [3,H,W] image; values are clamped to [0,1] and rounded.
void write_png(const std::filesystem::path& path, const Tensor& image);

/// Little-endian colour PFM ("PF", scale -1, rows stored bottom to top).
void write_pfm(const std::filesystem::path& path, const Tensor& image);
Tensor read_pfm(const std::filesystem::path& path);

} // namespace liftrefine
