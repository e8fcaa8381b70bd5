#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chronovec/tensor.hpp"

namespace chronovec {

// Ordered map name -> tensor. std::map gives the canonical lexicographic
// (byte-wise) iteration order regardless of insertion order.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> metadata;

  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
  void insert(std::string name, Tensor tensor);  // validates the name

  std::vector<std::string> names() const;
  std::size_t total_elements() const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Throws Error if the name is empty or contains control characters.
void validate_tensor_name(std::string_view name);

struct Fingerprint {
  std::string hex;  // 64 lowercase hex chars (SHA-256)

  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

// Digest over the sorted (name, dtype, shape) inventory. Values are not
// hashed, so a pretrained model and its finetunes share a fingerprint.
Fingerprint fingerprint(const Checkpoint& ckpt);

struct WriteReport {
  std::size_t saturated = 0;  // finite values clamped during a downcast
};

Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint decode_checkpoint(std::string_view bytes);

WriteReport write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path,
                             std::optional<DType> dtype_override = std::nullopt);
std::string encode_checkpoint(const Checkpoint& ckpt,
                              std::optional<DType> dtype_override = std::nullopt,
                              WriteReport* report = nullptr);

}  // namespace chronovec
