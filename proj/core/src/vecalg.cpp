#include "chronovec/vecalg.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "chronovec/error.hpp"
#include "chronovec/numeric.hpp"

namespace chronovec {

namespace mk = metadata_keys;

namespace {

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += "\"" + n + "\"";
  }
  return out;
}

void require_same_shape(const std::string& name, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error("shape mismatch on \"" + name + "\": " + shape_string(a.shape()) + " vs " +
                shape_string(b.shape()));
  }
}

void require_same_base(const TimeVector& a, const TimeVector& b) {
  if (a.base != b.base) {
    throw Error("time vectors have different base fingerprints (" + a.base.hex.substr(0, 12) + "... vs " +
                b.base.hex.substr(0, 12) + "...)");
  }
  if (a.delta.tensors.size() != b.delta.tensors.size()) {
    throw Error("time vectors with one base fingerprint cover different tensor sets");
  }
  auto ia = a.delta.tensors.begin();
  for (const auto& [name, t] : b.delta.tensors) {
    if (ia->first != name) throw Error("time vectors with one base fingerprint cover different tensor sets");
    require_same_shape(name, ia->second, t);
    ++ia;
  }
}

std::optional<TimePeriod> shared_period(const std::vector<const TimeVector*>& vs) {
  auto p = vs.front()->period;
  for (const auto* v : vs) {
    if (v->period != p) return std::nullopt;
  }
  return p;
}

}  // namespace

Checkpoint to_container(const TimeVector& v) {
  Checkpoint out;
  out.tensors = v.delta.tensors;
  out.metadata[mk::kBaseFingerprint] = v.base.hex;
  out.metadata[mk::kRole] = "time_vector";
  if (v.period) {
    out.metadata[mk::kPeriodKind] = std::string(period_kind_name(v.period->kind));
    out.metadata[mk::kPeriodOrdinal] = std::to_string(v.period->ordinal);
  }
  if (!v.provenance.empty()) out.metadata[mk::kProvenance] = v.provenance;
  return out;
}

TimeVector from_container(const Checkpoint& ckpt) {
  auto get = [&](const char* key) -> const std::string* {
    auto it = ckpt.metadata.find(key);
    return it == ckpt.metadata.end() ? nullptr : &it->second;
  };
  const auto* role = get(mk::kRole);
  if (!role || *role != "time_vector") {
    throw Error("checkpoint is not a time vector (metadata chronovec.role != time_vector)");
  }
  const auto* fp = get(mk::kBaseFingerprint);
  if (!fp) throw Error("time vector lacks chronovec.base_fingerprint");

  TimeVector v;
  v.base.hex = *fp;
  const auto* kind = get(mk::kPeriodKind);
  const auto* ordinal = get(mk::kPeriodOrdinal);
  if (kind && ordinal) {
    try {
      v.period = TimePeriod{parse_period_kind(*kind), std::stoll(*ordinal)};
    } catch (const std::logic_error&) {
      throw Error("malformed chronovec.period_ordinal \"" + *ordinal + "\"");
    }
  }
  if (const auto* prov = get(mk::kProvenance)) v.provenance = *prov;
  v.delta.tensors = ckpt.tensors;
  return v;
}

void save_time_vector(const TimeVector& v, const std::filesystem::path& path) {
  write_checkpoint(to_container(v), path);
}

TimeVector load_time_vector(const std::filesystem::path& path) {
  try {
    return from_container(load_checkpoint(path));
  } catch (const Error& e) {
    std::string msg = e.what();
    if (msg.rfind(path.string(), 0) == 0) throw;
    throw Error(path.string() + ": " + msg);
  }
}

Checkpoint restrict_to(const Checkpoint& ckpt, const std::vector<std::string>& names) {
  Checkpoint out;
  out.metadata = ckpt.metadata;
  for (const auto& n : names) out.tensors.emplace(n, ckpt.at(n));
  return out;
}

TimeVector diff(const Checkpoint& finetuned, const Checkpoint& pretrained,
                std::optional<TimePeriod> period, InventoryPolicy policy,
                std::vector<std::string>* dropped) {
  std::vector<std::string> common, missing, extra;
  for (const auto& [name, _] : pretrained.tensors) {
    (finetuned.contains(name) ? common : missing).push_back(name);
  }
  for (const auto& [name, _] : finetuned.tensors) {
    if (!pretrained.contains(name)) extra.push_back(name);
  }
  for (const auto& name : common) require_same_shape(name, finetuned.at(name), pretrained.at(name));

  if (policy == InventoryPolicy::Strict && (!missing.empty() || !extra.empty())) {
    std::string msg = "inventory mismatch between finetuned and pretrained checkpoints";
    if (!missing.empty()) msg += "; missing from finetuned: " + join_names(missing);
    if (!extra.empty()) msg += "; extra in finetuned: " + join_names(extra);
    throw Error(msg);
  }
  if (dropped) {
    dropped->clear();
    dropped->insert(dropped->end(), missing.begin(), missing.end());
    dropped->insert(dropped->end(), extra.begin(), extra.end());
    std::sort(dropped->begin(), dropped->end());
  }

  TimeVector v;
  v.period = period;
  v.base = policy == InventoryPolicy::Strict ? fingerprint(pretrained)
                                              : fingerprint(restrict_to(pretrained, common));
  for (const auto& name : common) {
    const auto ft = finetuned.at(name).to_f32();
    const auto pre = pretrained.at(name).to_f32();
    std::vector<float> d(ft.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = ft[i] - pre[i];
    v.delta.tensors.emplace(name, Tensor::from_f32(finetuned.at(name).shape(), std::move(d)));
  }
  return v;
}

Checkpoint apply(const Checkpoint& base, const TimeVector& v, double scale, InventoryPolicy policy) {
  const Fingerprint fp =
      policy == InventoryPolicy::Strict ? fingerprint(base) : fingerprint(restrict_to(base, v.delta.names()));
  if (fp != v.base) {
    throw Error("base checkpoint fingerprint " + fp.hex.substr(0, 12) +
                "... does not match the time vector's base " + v.base.hex.substr(0, 12) + "...");
  }
  Checkpoint out;
  out.metadata = base.metadata;
  for (const auto& [name, bt] : base.tensors) {
    auto it = v.delta.tensors.find(name);
    if (it == v.delta.tensors.end()) {
      out.tensors.emplace(name, bt);
      continue;
    }
    require_same_shape(name, bt, it->second);
    auto values = bt.to_f32();
    const auto delta = it->second.to_f32();
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = static_cast<float>(static_cast<double>(values[i]) + scale * static_cast<double>(delta[i]));
    }
    out.tensors.emplace(name, Tensor::from_f32(bt.shape(), std::move(values)));
  }
  return out;
}

TimeVector lincomb(const std::vector<std::pair<double, const TimeVector*>>& terms) {
  if (terms.empty()) throw Error("lincomb needs at least one term");
  std::vector<const TimeVector*> vs;
  for (const auto& [_, v] : terms) {
    require_same_base(*terms.front().second, *v);
    vs.push_back(v);
  }
  const TimeVector& first = *terms.front().second;

  TimeVector out;
  out.base = first.base;
  out.period = shared_period(vs);
  for (const auto& [name, t] : first.delta.tensors) {
    std::vector<double> acc(t.numel(), 0.0);
    for (const auto& [coef, v] : terms) {
      const auto values = v->delta.at(name).to_f32();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += coef * static_cast<double>(values[i]);
    }
    std::vector<float> result(acc.begin(), acc.end());
    out.delta.tensors.emplace(name, Tensor::from_f32(t.shape(), std::move(result)));
  }
  return out;
}

TimeVector lincomb(const std::vector<std::pair<double, TimeVector>>& terms) {
  std::vector<std::pair<double, const TimeVector*>> refs;
  refs.reserve(terms.size());
  for (const auto& [c, v] : terms) refs.emplace_back(c, &v);
  return lincomb(refs);
}

TimeVector interpolate(const TimeVector& vj, const TimeVector& vk, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error("interpolation alpha " + std::to_string(alpha) + " outside [0, 1]; use lincomb to extrapolate");
  }
  return lincomb(std::vector<std::pair<double, const TimeVector*>>{{alpha, &vj}, {1.0 - alpha, &vk}});
}

TimeVector analogy(const TimeVector& task_j, const TimeVector& lm_j, const TimeVector& lm_k,
                   double a1, double a2, double a3) {
  auto out = lincomb(std::vector<std::pair<double, const TimeVector*>>{{a1, &task_j}, {a2, &lm_k}, {-a3, &lm_j}});
  out.period = lm_k.period;
  return out;
}

Checkpoint uniform_soup(const std::vector<const TimeVector*>& vectors, const Checkpoint& base) {
  if (vectors.empty()) throw Error("uniform soup needs at least one time vector");
  for (const auto* v : vectors) require_same_base(*vectors.front(), *v);
  const Fingerprint fp = fingerprint(base);
  if (fp != vectors.front()->base) {
    throw Error("base checkpoint fingerprint " + fp.hex.substr(0, 12) +
                "... does not match the time vectors' base " + vectors.front()->base.hex.substr(0, 12) + "...");
  }
  // One rounding to F32 at the end, so base + mean stays accurate when the two nearly cancel.
  const double n = static_cast<double>(vectors.size());
  Checkpoint out;
  out.metadata = base.metadata;
  for (const auto& [name, bt] : base.tensors) {
    auto values = bt.to_f32();
    std::vector<double> acc(values.size(), 0.0);
    for (const auto* v : vectors) {
      const auto delta = v->delta.at(name).to_f32();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(delta[i]);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = static_cast<float>(static_cast<double>(values[i]) + acc[i] / n);
    }
    out.tensors.emplace(name, Tensor::from_f32(bt.shape(), std::move(values)));
  }
  return out;
}

Checkpoint uniform_soup(const std::vector<TimeVector>& vectors, const Checkpoint& base) {
  std::vector<const TimeVector*> refs;
  for (const auto& v : vectors) refs.push_back(&v);
  return uniform_soup(refs, base);
}

LoraAdapter LoraAdapter::from_container(const Checkpoint& ckpt) {
  LoraAdapter adapter;
  std::map<std::string, const Tensor*> a_side, b_side;
  for (const auto& [name, t] : ckpt.tensors) {
    const auto dot = name.rfind('.');
    const std::string suffix = dot == std::string::npos ? "" : name.substr(dot + 1);
    const std::string target = dot == std::string::npos ? "" : name.substr(0, dot);
    if (suffix == "lora_A") {
      a_side[target] = &t;
    } else if (suffix == "lora_B") {
      b_side[target] = &t;
    } else {
      throw Error("adapter tensor \"" + name + "\" is neither <target>.lora_A nor <target>.lora_B");
    }
  }
  for (const auto& [target, a] : a_side) {
    auto it = b_side.find(target);
    if (it == b_side.end()) throw Error("adapter target \"" + target + "\" has lora_A but no lora_B");
    adapter.pairs.emplace(target, LoraPair{*a, *it->second});
  }
  for (const auto& [target, _] : b_side) {
    if (!a_side.count(target)) throw Error("adapter target \"" + target + "\" has lora_B but no lora_A");
  }
  if (adapter.pairs.empty()) throw Error("adapter has no lora pairs");

  const auto& first = adapter.pairs.begin()->second.a;
  if (first.shape().size() != 2) throw Error("lora_A must be a matrix");
  adapter.rank = first.shape()[0];
  if (auto it = ckpt.metadata.find("chronovec.lora_rank"); it != ckpt.metadata.end()) {
    if (std::stoll(it->second) != adapter.rank) {
      throw Error("chronovec.lora_rank " + it->second + " disagrees with lora_A rows " +
                  std::to_string(adapter.rank));
    }
  }
  auto alpha = ckpt.metadata.find("chronovec.lora_alpha");
  if (alpha == ckpt.metadata.end()) throw Error("adapter lacks chronovec.lora_alpha metadata");
  try {
    adapter.alpha = std::stod(alpha->second);
  } catch (const std::logic_error&) {
    throw Error("malformed chronovec.lora_alpha \"" + alpha->second + "\"");
  }
  return adapter;
}

Checkpoint LoraAdapter::to_container() const {
  Checkpoint out;
  for (const auto& [target, pair] : pairs) {
    out.tensors.emplace(target + ".lora_A", pair.a);
    out.tensors.emplace(target + ".lora_B", pair.b);
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", alpha);
  out.metadata["chronovec.lora_alpha"] = buf;
  out.metadata["chronovec.lora_rank"] = std::to_string(rank);
  return out;
}

Checkpoint merge_lora(const Checkpoint& base, const LoraAdapter& adapter) {
  if (adapter.rank <= 0) throw Error("lora rank must be positive");
  if (!(adapter.alpha > 0.0)) throw Error("lora alpha must be positive");
  const double factor = adapter.alpha / static_cast<double>(adapter.rank);

  Checkpoint out = base;
  for (const auto& [target, pair] : adapter.pairs) {
    if (!base.contains(target)) throw Error("lora target \"" + target + "\" not found in base checkpoint");
    const Tensor& w = base.at(target);
    const auto& as = pair.a.shape();
    const auto& bs = pair.b.shape();
    if (as.size() != 2 || bs.size() != 2 || as[0] != adapter.rank || bs[1] != adapter.rank) {
      throw Error("lora pair for \"" + target + "\" has shapes A" + shape_string(as) + " B" +
                  shape_string(bs) + " inconsistent with rank " + std::to_string(adapter.rank));
    }
    const Shape merged{bs[0], as[1]};
    if (w.shape() != merged) {
      throw Error("lora product for \"" + target + "\" has shape " + shape_string(merged) +
                  " but the target is " + shape_string(w.shape()));
    }
    const auto rows = static_cast<std::size_t>(bs[0]);
    const auto cols = static_cast<std::size_t>(as[1]);
    const auto r = static_cast<std::size_t>(adapter.rank);
    const auto a = pair.a.to_f32();
    const auto b = pair.b.to_f32();
    auto values = w.to_f32();
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < r; ++p) s += static_cast<double>(b[i * r + p]) * a[p * cols + j];
        values[i * cols + j] = static_cast<float>(values[i * cols + j] + factor * s);
      }
    }
    out.tensors.insert_or_assign(target, Tensor::from_f32(w.shape(), std::move(values)));
  }
  return out;
}

double cosine_similarity(const TimeVector& v1, const TimeVector& v2, const GroupFilter* filter) {
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  std::size_t selected = 0;
  for (const auto& [name, t1] : v1.delta.tensors) {
    if (filter && !filter->groups.contains(filter->rules.classify(name))) continue;
    auto it = v2.delta.tensors.find(name);
    if (it == v2.delta.tensors.end()) {
      throw Error("cosine similarity: \"" + name + "\" missing from the second vector");
    }
    require_same_shape(name, t1, it->second);
    const auto a = t1.to_f32();
    const auto b = it->second.to_f32();
    dot += dot_f64(a, b);
    n1 += sum_squares_f64(a);
    n2 += sum_squares_f64(b);
    ++selected;
  }
  for (const auto& [name, _] : v2.delta.tensors) {
    if (filter && !filter->groups.contains(filter->rules.classify(name))) continue;
    if (!v1.delta.contains(name)) {
      throw Error("cosine similarity: \"" + name + "\" missing from the first vector");
    }
  }
  if (selected == 0 || n1 == 0.0 || n2 == 0.0) {
    throw Error("undefined similarity: zero-norm operand");
  }
  return std::clamp(dot / (std::sqrt(n1) * std::sqrt(n2)), -1.0, 1.0);
}

std::map<ParamGroup, GroupNorm> group_norms(const TimeVector& v, const ParamGroupRules& rules) {
  std::map<ParamGroup, double> squares;
  std::map<ParamGroup, GroupNorm> out;
  for (auto g : kAllGroups) {
    out[g] = {};
    squares[g] = 0.0;
  }
  for (const auto& [name, t] : v.delta.tensors) {
    const auto g = rules.classify(name);
    squares[g] += sum_squares_f64(t.to_f32());
    ++out[g].tensors;
  }
  for (auto g : kAllGroups) out[g].norm = std::sqrt(squares[g]);
  return out;
}

Checkpoint swap_groups(const Checkpoint& base_model, const Checkpoint& donor_model, const GroupSet& groups,
                       const ParamGroupRules& rules) {
  if (fingerprint(base_model) != fingerprint(donor_model)) {
    throw Error("swap requires checkpoints with identical inventories (fingerprints differ)");
  }
  Checkpoint out;
  out.metadata = base_model.metadata;
  for (const auto& [name, t] : base_model.tensors) {
    out.tensors.emplace(name, groups.contains(rules.classify(name)) ? donor_model.at(name) : t);
  }
  return out;
}

}  // namespace chronovec
