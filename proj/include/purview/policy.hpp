/*
 * Copyright (c) the purview authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "purview/condition.hpp"
#include "purview/errors.hpp"
#include "purview/field_path.hpp"
#include "purview/schema.hpp"

namespace purview {

enum class PolicyAction { Keep, Mask };

inline const char* toString(PolicyAction a) {
  return a == PolicyAction::Keep ? "KEEP" : "MASK";
}

inline PolicyAction policyActionFromString(std::string_view s) {
  if (s == "KEEP") return PolicyAction::Keep;
  if (s == "MASK") return PolicyAction::Mask;
  throw ValidationError("unknown policy action: " + std::string(s));
}

/// A (purpose, label, <condition, action>) rule. KEEP preserves the labeled
/// element when the condition holds and masks it otherwise; MASK redacts when
/// the condition holds.
struct Policy {
  std::string id;
  std::string purpose;
  std::string label;
  ConditionPtr condition;
  PolicyAction action = PolicyAction::Keep;

  /// Normalized keep-form condition: the element survives iff this holds.
  ConditionPtr keepCondition() const {
    if (action == PolicyAction::Keep) {
      return condition;
    }
    return Condition::notOf(condition);
  }

  /// Consent attributes referenced by the condition.
  std::set<std::string> consents() const {
    return consentAttributes(*condition);
  }

  bool sameIdentity(const Policy& o) const {
    return id == o.id && purpose == o.purpose && label == o.label;
  }
};

struct Purpose {
  std::string name;
  std::vector<std::string> parents;
};

/// The purpose DAG. Construction validates acyclicity and parent existence.
class PurposeGraph {
 public:
  PurposeGraph() = default;

  explicit PurposeGraph(std::vector<Purpose> purposes) {
    for (auto& p : purposes) {
      if (byName_.count(p.name) != 0) {
        throw ValidationError("duplicate purpose: " + p.name);
      }
      byName_.emplace(p.name, std::move(p));
    }
    for (const auto& [name, purpose] : byName_) {
      for (const auto& parent : purpose.parents) {
        if (byName_.count(parent) == 0) {
          throw ValidationError("purpose " + name + " names unknown parent " +
                                parent);
        }
      }
    }
    checkAcyclic();
  }

  bool contains(const std::string& name) const {
    return byName_.count(name) != 0;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(byName_.size());
    for (const auto& [name, p] : byName_) {
      out.push_back(name);
    }
    return out;
  }

  const std::map<std::string, Purpose>& all() const { return byName_; }

  /// Proper ancestors (transitive parents), excluding the purpose itself.
  std::set<std::string> ancestors(const std::string& name) const {
    auto it = byName_.find(name);
    if (it == byName_.end()) {
      throw UnknownPurposeError(name);
    }
    std::set<std::string> out;
    std::vector<std::string> stack(it->second.parents.begin(),
                                   it->second.parents.end());
    while (!stack.empty()) {
      std::string cur = stack.back();
      stack.pop_back();
      if (!out.insert(cur).second) {
        continue;
      }
      const auto& parents = byName_.at(cur).parents;
      stack.insert(stack.end(), parents.begin(), parents.end());
    }
    return out;
  }

 private:
  void checkAcyclic() const {
    // Colors: 0 unvisited, 1 on stack, 2 done.
    std::map<std::string, int> color;
    for (const auto& [name, p] : byName_) {
      if (color[name] == 0) {
        dfs(name, color);
      }
    }
  }

  void dfs(const std::string& node, std::map<std::string, int>& color) const {
    color[node] = 1;
    for (const auto& parent : byName_.at(node).parents) {
      if (color[parent] == 1) {
        throw ValidationError("purpose graph has a cycle through " + parent);
      }
      if (color[parent] == 0) {
        dfs(parent, color);
      }
    }
    color[node] = 2;
  }

  std::map<std::string, Purpose> byName_;
};

/// Assignment of a label to a field path of a relation.
struct LabelAssignment {
  std::string relation;
  FieldPath path;
  std::string label;
};

/// File-backed catalog: purposes, the attribute registry, and policies.
struct PolicyCatalog {
  PurposeGraph purposes;
  AttributeRegistry attributes;
  std::vector<Policy> policies;

  static PolicyCatalog fromJson(const nlohmann::json& j) {
    PolicyCatalog catalog;

    std::vector<Purpose> purposeList;
    for (const auto& p : j.at("purposes")) {
      Purpose purpose;
      purpose.name = p.at("name").get<std::string>();
      if (p.contains("parents")) {
        for (const auto& parent : p.at("parents")) {
          purpose.parents.push_back(parent.get<std::string>());
        }
      }
      purposeList.push_back(std::move(purpose));
    }
    catalog.purposes = PurposeGraph(std::move(purposeList));

    if (j.contains("attributes")) {
      for (const auto& [name, cls] : j.at("attributes").items()) {
        catalog.attributes.classes[name] =
            attrClassFromString(cls.get<std::string>());
      }
    }

    std::set<std::tuple<std::string, std::string, std::string>> identities;
    for (const auto& p : j.at("policies")) {
      Policy policy;
      policy.id = p.at("id").get<std::string>();
      policy.purpose = p.at("purpose").get<std::string>();
      policy.label = p.at("label").get<std::string>();
      policy.action = p.contains("action")
                          ? policyActionFromString(p.at("action").get<std::string>())
                          : PolicyAction::Keep;
      ConditionPtr raw;
      try {
        raw = parseCondition(p.at("condition").get<std::string>());
      } catch (const SyntaxError& e) {
        throw ValidationError("policy " + policy.id + ": " + e.what());
      }
      try {
        policy.condition = tagAttributeClasses(raw, catalog.attributes);
      } catch (const ValidationError& e) {
        throw ValidationError("policy " + policy.id + ": " + e.what());
      }
      if (!catalog.purposes.contains(policy.purpose)) {
        throw ValidationError("policy " + policy.id +
                              " names unknown purpose " + policy.purpose);
      }
      if (!identities
               .emplace(policy.purpose, policy.label, policy.id)
               .second) {
        throw ValidationError("duplicate policy identity (" + policy.purpose +
                              ", " + policy.label + ", " + policy.id + ")");
      }
      catalog.policies.push_back(std::move(policy));
    }
    return catalog;
  }

  nlohmann::ordered_json toJson() const {
    nlohmann::ordered_json j;
    auto purposeArr = nlohmann::ordered_json::array();
    for (const auto& [name, purpose] : purposes.all()) {
      purposeArr.push_back({{"name", name}, {"parents", purpose.parents}});
    }
    j["purposes"] = std::move(purposeArr);
    auto attrObj = nlohmann::ordered_json::object();
    for (const auto& [name, cls] : attributes.classes) {
      attrObj[name] = toString(cls);
    }
    j["attributes"] = std::move(attrObj);
    auto policyArr = nlohmann::ordered_json::array();
    for (const auto& p : policies) {
      policyArr.push_back({{"id", p.id},
                           {"purpose", p.purpose},
                           {"label", p.label},
                           {"condition", renderCondition(p.condition)},
                           {"action", toString(p.action)}});
    }
    j["policies"] = std::move(policyArr);
    return j;
  }
};

/// Policies in force for a purpose: its own plus all ancestors', deduplicated
/// by identity, with MASK beating KEEP per label when both appear.
inline std::vector<Policy> effectivePolicies(const std::string& purpose,
                                             const PolicyCatalog& catalog) {
  if (!catalog.purposes.contains(purpose)) {
    throw UnknownPurposeError(purpose);
  }
  std::set<std::string> scope = catalog.purposes.ancestors(purpose);
  scope.insert(purpose);

  std::vector<Policy> collected;
  for (const auto& p : catalog.policies) {
    if (scope.count(p.purpose) == 0) {
      continue;
    }
    bool duplicate = false;
    for (const auto& existing : collected) {
      if (existing.sameIdentity(p)) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) {
      collected.push_back(p);
    }
  }

  std::set<std::string> maskedLabels;
  for (const auto& p : collected) {
    if (p.action == PolicyAction::Mask) {
      maskedLabels.insert(p.label);
    }
  }
  std::vector<Policy> result;
  for (auto& p : collected) {
    if (p.action == PolicyAction::Keep && maskedLabels.count(p.label) != 0) {
      continue;  // more restrictive MASK on the same label wins
    }
    result.push_back(std::move(p));
  }
  std::sort(result.begin(), result.end(), [](const Policy& a, const Policy& b) {
    return std::tie(a.id, a.purpose, a.label) <
           std::tie(b.id, b.purpose, b.label);
  });
  return result;
}

/// Joins label assignments with policies on label name. Output is ordered by
/// (canonical path text, policy id) so downstream stages are deterministic.
inline std::vector<std::pair<FieldPath, Policy>> matchPolicies(
    const RelationSchema& relation,
    const std::vector<LabelAssignment>& assignments,
    const std::vector<Policy>& policies) {
  std::vector<std::pair<FieldPath, Policy>> pairs;
  for (const auto& assignment : assignments) {
    if (assignment.relation != relation.name) {
      continue;
    }
    resolvePath(relation, assignment.path);
    for (const auto& policy : policies) {
      if (policy.label == assignment.label) {
        pairs.emplace_back(assignment.path, policy);
      }
    }
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) {
              std::string at = a.first.render();
              std::string bt = b.first.render();
              return std::tie(at, a.second.id) < std::tie(bt, b.second.id);
            });
  return pairs;
}

/// Parses a label-assignment file: an array of {relation, path, label}.
inline std::vector<LabelAssignment> assignmentsFromJson(
    const nlohmann::json& j) {
  std::vector<LabelAssignment> out;
  for (const auto& a : j) {
    out.push_back(LabelAssignment{
        a.at("relation").get<std::string>(),
        FieldPath::parse(a.at("path").get<std::string>()),
        a.at("label").get<std::string>()});
  }
  return out;
}

inline nlohmann::ordered_json assignmentsToJson(
    const std::vector<LabelAssignment>& assignments) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& a : assignments) {
    arr.push_back({{"relation", a.relation},
                   {"path", a.path.render()},
                   {"label", a.label}});
  }
  return arr;
}

}  // namespace purview
