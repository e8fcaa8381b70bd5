#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chronovec/checkpoint.hpp"
#include "chronovec/groups.hpp"
#include "chronovec/period.hpp"

namespace chronovec {

// tau = theta_finetuned - theta_pretrained, tagged with the fingerprint of the
// pretrained checkpoint it must be applied to.
struct TimeVector {
  Checkpoint delta;
  Fingerprint base;
  std::optional<TimePeriod> period;  // nullopt = unlabeled mixture
  std::string provenance;
};

namespace metadata_keys {
inline constexpr const char* kBaseFingerprint = "chronovec.base_fingerprint";
inline constexpr const char* kPeriodKind = "chronovec.period_kind";
inline constexpr const char* kPeriodOrdinal = "chronovec.period_ordinal";
inline constexpr const char* kRole = "chronovec.role";
inline constexpr const char* kProvenance = "chronovec.provenance";
}  // namespace metadata_keys

// Container round trip: metadata carries base fingerprint, period and role.
Checkpoint to_container(const TimeVector& v);
TimeVector from_container(const Checkpoint& ckpt);
void save_time_vector(const TimeVector& v, const std::filesystem::path& path);
TimeVector load_time_vector(const std::filesystem::path& path);

enum class InventoryPolicy {
  Strict,     // inventories must match exactly
  Intersect,  // operate on the common name set, report dropped names
};

Checkpoint restrict_to(const Checkpoint& ckpt, const std::vector<std::string>& names);

TimeVector diff(const Checkpoint& finetuned, const Checkpoint& pretrained,
                std::optional<TimePeriod> period,
                InventoryPolicy policy = InventoryPolicy::Strict,
                std::vector<std::string>* dropped = nullptr);

// theta = base + scale * delta. Under Intersect, tensors of base that the
// vector does not cover pass through unchanged.
Checkpoint apply(const Checkpoint& base, const TimeVector& v, double scale = 1.0,
                 InventoryPolicy policy = InventoryPolicy::Strict);

TimeVector lincomb(const std::vector<std::pair<double, const TimeVector*>>& terms);
TimeVector lincomb(const std::vector<std::pair<double, TimeVector>>& terms);

// alpha * vj + (1 - alpha) * vk, alpha in [0, 1].
TimeVector interpolate(const TimeVector& vj, const TimeVector& vk, double alpha);

// a1 * task_j + a2 * lm_k - a3 * lm_j; the result is labeled with lm_k's period.
TimeVector analogy(const TimeVector& task_j, const TimeVector& lm_j, const TimeVector& lm_k,
                   double a1, double a2, double a3);

// base + mean(delta_i)
Checkpoint uniform_soup(const std::vector<const TimeVector*>& vectors, const Checkpoint& base);
Checkpoint uniform_soup(const std::vector<TimeVector>& vectors, const Checkpoint& base);

struct LoraPair {
  Tensor a;  // r x k
  Tensor b;  // d x r
};

struct LoraAdapter {
  std::map<std::string, LoraPair> pairs;  // keyed by target tensor name
  std::int64_t rank = 0;
  double alpha = 0.0;

  // Tensors "<target>.lora_A" / "<target>.lora_B"; metadata
  // "chronovec.lora_alpha" (required) and "chronovec.lora_rank" (optional).
  static LoraAdapter from_container(const Checkpoint& ckpt);
  Checkpoint to_container() const;
};

// W <- W + (alpha / r) * B A for each adapted W.
Checkpoint merge_lora(const Checkpoint& base, const LoraAdapter& adapter);

struct GroupFilter {
  ParamGroupRules rules;
  GroupSet groups;
};

// Cosine over the lexicographically flattened (optionally group-filtered)
// deltas, accumulated in F64. Throws on a zero-norm operand.
double cosine_similarity(const TimeVector& v1, const TimeVector& v2,
                         const GroupFilter* filter = nullptr);

struct GroupNorm {
  double norm = 0.0;
  std::size_t tensors = 0;
};
std::map<ParamGroup, GroupNorm> group_norms(const TimeVector& v, const ParamGroupRules& rules);

// Tensors whose group is selected come from donor, the rest from base.
Checkpoint swap_groups(const Checkpoint& base_model, const Checkpoint& donor_model,
                       const GroupSet& groups, const ParamGroupRules& rules);

}  // namespace chronovec
