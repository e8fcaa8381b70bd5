#include "chronovec/tensor.hpp"

#include <cstring>

#include "chronovec/error.hpp"
#include "chronovec/half.hpp"

namespace chronovec {

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::F32: return "F32";
    case DType::F16: return "F16";
    case DType::BF16: return "BF16";
  }
  return "?";
}

DType parse_dtype(std::string_view name) {
  if (name == "F32") return DType::F32;
  if (name == "F16") return DType::F16;
  if (name == "BF16") return DType::BF16;
  throw Error("unsupported dtype \"" + std::string(name) + "\"");
}

std::size_t dtype_width(DType dtype) { return dtype == DType::F32 ? 4 : 2; }

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto dim : shape) {
    if (dim < 0) throw Error("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(dim);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(DType dtype, Shape shape, std::vector<std::byte> data)
    : dtype_(dtype), shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_) * dtype_width(dtype_)) {
    throw Error("tensor byte length " + std::to_string(data_.size()) + " does not match shape " +
                shape_string(shape_) + " for dtype " + std::string(dtype_name(dtype_)));
  }
}

Tensor Tensor::from_f32(Shape shape, std::vector<float> values) {
  if (values.size() != element_count(shape)) {
    throw Error("value count " + std::to_string(values.size()) + " does not match shape " +
                shape_string(shape));
  }
  std::vector<std::byte> bytes(values.size() * 4);
  if (!values.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
  return Tensor(DType::F32, std::move(shape), std::move(bytes));
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = element_count(shape);
  return from_f32(std::move(shape), std::vector<float>(n, 0.0f));
}

namespace {

std::uint16_t load_u16(const std::byte* p) {
  return static_cast<std::uint16_t>(std::to_integer<unsigned>(p[0]) |
                                    (std::to_integer<unsigned>(p[1]) << 8));
}

void store_u16(std::byte* p, std::uint16_t v) {
  p[0] = static_cast<std::byte>(v & 0xFF);
  p[1] = static_cast<std::byte>(v >> 8);
}

}  // namespace

float Tensor::at(std::size_t index) const {
  const std::byte* p = data_.data() + index * dtype_width(dtype_);
  switch (dtype_) {
    case DType::F32: {
      float v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case DType::F16: return half::f16_to_f32(load_u16(p));
    case DType::BF16: return half::bf16_to_f32(load_u16(p));
  }
  return 0.0f;
}

std::vector<float> Tensor::to_f32() const {
  const auto n = numel();
  std::vector<float> out(n);
  if (dtype_ == DType::F32) {
    if (n) std::memcpy(out.data(), data_.data(), n * 4);
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = at(i);
  return out;
}

Tensor Tensor::cast(DType dtype, std::size_t* saturated) const {
  if (dtype == dtype_) return *this;
  if (dtype == DType::F32) return from_f32(shape_, to_f32());
  const auto n = numel();
  std::vector<std::byte> bytes(n * 2);
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool sat = false;
    const float v = at(i);
    const auto bits = dtype == DType::F16 ? half::f32_to_f16(v, &sat) : half::f32_to_bf16(v, &sat);
    clamped += sat ? 1 : 0;
    store_u16(bytes.data() + 2 * i, bits);
  }
  if (saturated) *saturated += clamped;
  return Tensor(dtype, shape_, std::move(bytes));
}

}  // namespace chronovec
