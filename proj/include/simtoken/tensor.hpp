// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace simtoken {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of 64-bit floats. Immutable once constructed.
///
/// An empty shape denotes a scalar holding one element. In checked mode
/// (the default) construction rejects NaN and infinity.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double at(std::initializer_list<std::size_t> index) const;
  double item() const;

  /// Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  /// Bitwise comparison of shape and every element.
  bool identical(const Tensor& other) const noexcept;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Finite-value checking at Tensor construction. Enabled by default.
bool checked_mode() noexcept;
void set_checked_mode(bool enabled) noexcept;

class ScopedCheckedMode {
 public:
  explicit ScopedCheckedMode(bool enabled) : previous_(checked_mode()) { set_checked_mode(enabled); }
  ~ScopedCheckedMode() { set_checked_mode(previous_); }
  ScopedCheckedMode(const ScopedCheckedMode&) = delete;
  ScopedCheckedMode& operator=(const ScopedCheckedMode&) = delete;

 private:
  bool previous_;
};

}  // namespace simtoken
