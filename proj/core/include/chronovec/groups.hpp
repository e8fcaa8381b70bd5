#pragma once

#include <array>
#include <filesystem>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace chronovec {

enum class ParamGroup { Embeddings = 0, Attention = 1, FeedForward = 2, Other = 3 };
inline constexpr std::array<ParamGroup, 4> kAllGroups = {ParamGroup::Embeddings, ParamGroup::Attention,
                                                         ParamGroup::FeedForward, ParamGroup::Other};

std::string_view group_name(ParamGroup group);
ParamGroup parse_group(std::string_view name);

// A pattern is a plain substring, or an ECMAScript regex when prefixed "re:".
struct GroupRule {
  ParamGroup group;
  std::string pattern;
};

// Ordered name-pattern rules; the first match wins, unmatched names fall into
// ParamGroup::Other.
class ParamGroupRules {
 public:
  ParamGroupRules() = default;
  explicit ParamGroupRules(std::vector<GroupRule> rules);

  ParamGroup classify(std::string_view tensor_name) const;
  const std::vector<GroupRule>& rules() const { return rules_; }

  // T5-style names ("shared", "SelfAttention", "DenseReluDense", ...).
  static ParamGroupRules t5();
  // Toy bigram model names ("embed.*", "ff.*", "out.*").
  static ParamGroupRules toy();

  // One rule per line: "group<TAB>pattern". Blank lines and '#' comments skipped.
  static ParamGroupRules parse(std::string_view text);
  // "builtin:t5", "builtin:toy", or a path to a rules file.
  static ParamGroupRules resolve(std::string_view spec);

 private:
  std::vector<GroupRule> rules_;
  std::vector<std::regex> compiled_;  // parallel to rules_, empty regex for substrings
};

// A selection of groups, parsed from tokens embeddings/attention/feed_forward/
// other plus the aliases non_embedding and all.
class GroupSet {
 public:
  GroupSet() = default;
  static GroupSet all();
  static GroupSet of(std::initializer_list<ParamGroup> groups);
  static GroupSet parse(const std::vector<std::string>& tokens);
  static GroupSet parse_list(std::string_view comma_separated);

  bool contains(ParamGroup g) const { return members_[static_cast<std::size_t>(g)]; }
  bool empty() const;
  void add(ParamGroup g) { members_[static_cast<std::size_t>(g)] = true; }
  std::string to_string() const;

 private:
  std::array<bool, 4> members_{};
};

}  // namespace chronovec
