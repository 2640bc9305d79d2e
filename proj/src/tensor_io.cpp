// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "simtoken/errors.hpp"

namespace simtoken {

namespace {

static_assert(std::endian::native == std::endian::little, "tensor I/O assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::istream& is, const std::string& source, const char* what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw FormatError(source + ": truncated tensor header (" + what + ")");
  }
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kTensorMagic, sizeof kTensorMagic);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  std::vector<float> buf(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<float>(t[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Tensor read_tensor(std::istream& is, const std::string& source) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size())) throw FormatError(source + ": truncated tensor header (magic)");
  if (std::memcmp(magic.data(), kTensorMagic, magic.size()) != 0) throw FormatError(source + ": bad tensor magic");
  const std::uint32_t rank = get_u32(is, source, "rank");
  if (rank > 8) throw FormatError(source + ": implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = get_u32(is, source, "dims");
    if (shape[i] == 0) throw FormatError(source + ": zero tensor dimension");
    n *= shape[i];
  }
  std::vector<float> buf(n);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)))) {
    throw FormatError(source + ": truncated tensor data, expected " + std::to_string(n) + " values");
  }
  std::vector<double> data(buf.begin(), buf.end());
  try {
    return Tensor(std::move(shape), std::move(data));
  } catch (const Error& e) {
    throw FormatError(source + ": " + e.what());
  }
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
  if (!os) throw FormatError("write failed for " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  Tensor t = read_tensor(is, path.string());
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes after tensor");
  return t;
}

Tensor round_to_storage(const Tensor& t) {
  std::vector<double> data(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) data[i] = static_cast<double>(static_cast<float>(t[i]));
  return Tensor(t.shape(), std::move(data));
}

}  // namespace simtoken
