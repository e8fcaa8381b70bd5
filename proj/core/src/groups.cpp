#include "chronovec/groups.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "chronovec/error.hpp"

namespace chronovec {

std::string_view group_name(ParamGroup group) {
  switch (group) {
    case ParamGroup::Embeddings: return "embeddings";
    case ParamGroup::Attention: return "attention";
    case ParamGroup::FeedForward: return "feed_forward";
    case ParamGroup::Other: return "other";
  }
  return "?";
}

ParamGroup parse_group(std::string_view name) {
  for (auto g : kAllGroups) {
    if (group_name(g) == name) return g;
  }
  throw Error("unknown group \"" + std::string(name) + "\"");
}

ParamGroupRules::ParamGroupRules(std::vector<GroupRule> rules) : rules_(std::move(rules)) {
  compiled_.reserve(rules_.size());
  for (const auto& rule : rules_) {
    if (rule.pattern.rfind("re:", 0) == 0) {
      try {
        compiled_.emplace_back(rule.pattern.substr(3), std::regex::ECMAScript);
      } catch (const std::regex_error& e) {
        throw Error("invalid rule regex \"" + rule.pattern + "\": " + e.what());
      }
    } else {
      if (rule.pattern.empty()) throw Error("empty rule pattern");
      compiled_.emplace_back();
    }
  }
}

ParamGroup ParamGroupRules::classify(std::string_view tensor_name) const {
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& rule = rules_[i];
    const bool hit = rule.pattern.rfind("re:", 0) == 0
                         ? std::regex_search(tensor_name.begin(), tensor_name.end(), compiled_[i])
                         : tensor_name.find(rule.pattern) != std::string_view::npos;
    if (hit) return rule.group;
  }
  return ParamGroup::Other;
}

ParamGroupRules ParamGroupRules::t5() {
  using G = ParamGroup;
  return ParamGroupRules({
      {G::Embeddings, "embed"},
      {G::Embeddings, "shared"},
      {G::Attention, "SelfAttention"},
      {G::Attention, "EncDecAttention"},
      {G::Attention, ".q."},
      {G::Attention, ".k."},
      {G::Attention, ".v."},
      {G::Attention, ".o."},
      {G::FeedForward, "DenseReluDense"},
      {G::FeedForward, "wi"},
      {G::FeedForward, "wo"},
  });
}

ParamGroupRules ParamGroupRules::toy() {
  using G = ParamGroup;
  return ParamGroupRules({
      {G::Embeddings, "re:^embed\\."},
      {G::Attention, "re:^attn\\."},
      {G::FeedForward, "re:^ff\\."},
  });
}

ParamGroupRules ParamGroupRules::parse(std::string_view text) {
  std::vector<GroupRule> rules;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error("rules line " + std::to_string(lineno) + ": expected \"group<TAB>pattern\"");
    }
    rules.push_back({parse_group(line.substr(0, tab)), line.substr(tab + 1)});
  }
  return ParamGroupRules(std::move(rules));
}

ParamGroupRules ParamGroupRules::resolve(std::string_view spec) {
  if (spec == "builtin:t5") return t5();
  if (spec == "builtin:toy") return toy();
  std::ifstream in{std::string(spec)};
  if (!in) throw Error("cannot open rules file " + std::string(spec));
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text);
}

GroupSet GroupSet::all() { return of({ParamGroup::Embeddings, ParamGroup::Attention, ParamGroup::FeedForward, ParamGroup::Other}); }

GroupSet GroupSet::of(std::initializer_list<ParamGroup> groups) {
  GroupSet s;
  for (auto g : groups) s.add(g);
  return s;
}

GroupSet GroupSet::parse(const std::vector<std::string>& tokens) {
  GroupSet s;
  for (const auto& tok : tokens) {
    if (tok == "all") {
      for (auto g : kAllGroups) s.add(g);
    } else if (tok == "non_embedding") {
      s.add(ParamGroup::Attention);
      s.add(ParamGroup::FeedForward);
      s.add(ParamGroup::Other);
    } else {
      s.add(parse_group(tok));
    }
  }
  return s;
}

GroupSet GroupSet::parse_list(std::string_view comma_separated) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start <= comma_separated.size()) {
    const auto comma = comma_separated.find(',', start);
    const auto end = comma == std::string_view::npos ? comma_separated.size() : comma;
    if (end > start) tokens.emplace_back(comma_separated.substr(start, end - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return parse(tokens);
}

bool GroupSet::empty() const {
  for (bool m : members_) {
    if (m) return false;
  }
  return true;
}

std::string GroupSet::to_string() const {
  std::string out;
  for (auto g : kAllGroups) {
    if (!contains(g)) continue;
    if (!out.empty()) out += ",";
    out += group_name(g);
  }
  return out;
}

}  // namespace chronovec
