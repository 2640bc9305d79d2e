// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "simtoken/tensor.hpp"

namespace simtoken {

// Tensor file layout, all little-endian:
//   8 bytes   magic "STKTENS1"
//   u32       rank
//   u32*rank  dims
//   f32*N     row-major values
// Values are stored as 32-bit floats and widened to 64-bit on load.

inline constexpr char kTensorMagic[8] = {'S', 'T', 'K', 'T', 'E', 'N', 'S', '1'};

void write_tensor(std::ostream& os, const Tensor& t);
/// `source` names the stream in error messages.
Tensor read_tensor(std::istream& is, const std::string& source);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// The value a tensor takes after a save/load cycle.
Tensor round_to_storage(const Tensor& t);

}  // namespace simtoken
