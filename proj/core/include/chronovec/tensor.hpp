#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chronovec {

enum class DType { F32, F16, BF16 };

std::string_view dtype_name(DType dtype);
DType parse_dtype(std::string_view name);  // throws Error("unsupported dtype ...")
std::size_t dtype_width(DType dtype);

using Shape = std::vector<std::int64_t>;

// Number of scalars described by a shape; the empty shape is a scalar.
std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor. Storage keeps the on-disk little-endian bytes so
// that F16/BF16 payloads survive load/write unchanged; arithmetic goes
// through to_f32().
class Tensor {
 public:
  Tensor() = default;
  Tensor(DType dtype, Shape shape, std::vector<std::byte> data);

  static Tensor from_f32(Shape shape, std::vector<float> values);
  static Tensor zeros(Shape shape);

  DType dtype() const { return dtype_; }
  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return element_count(shape_); }
  std::span<const std::byte> bytes() const { return data_; }

  float at(std::size_t index) const;
  std::vector<float> to_f32() const;

  // Converts to dtype; *saturated receives the count of finite values that
  // overflowed the target range.
  Tensor cast(DType dtype, std::size_t* saturated = nullptr) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  DType dtype_ = DType::F32;
  Shape shape_;
  std::vector<std::byte> data_;
};

}  // namespace chronovec
