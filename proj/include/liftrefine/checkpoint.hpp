// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace liftrefine {

/// Tensor container format, all integers little-endian:
///
///   "LRTN" | u32 version | u32 count |
///   count x ( u32 name_len | name (UTF-8) | u32 rank | rank x u64 dim | f64 payload )
///
/// Used for model checkpoints, rendered feature maps and precomputed
/// conditioning datasets.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_tensors(const ParameterList& tensors);
ParameterList decode_tensors(const std::vector<std::uint8_t>& bytes);

void save_tensors(const std::filesystem::path& path, const ParameterList& tensors);
ParameterList load_tensors(const std::filesystem::path& path);

/// Copies values from `source` into the same-named tensors of `target`.
/// Every target name must be present with an identical shape.
void assign_tensors(ParameterList& target, const ParameterList& source);

/// Looks up a tensor by name; throws ValueError if absent.
const Tensor& find_tensor(const ParameterList& tensors, const std::string& name);

} // namespace liftrefine
