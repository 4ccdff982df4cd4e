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
#include <set>
#include <string>
#include <vector>

#include "purview/field_path.hpp"
#include "purview/policy.hpp"

namespace purview {

/// Prefix-merged tree of matched field paths. Each node is one path operator;
/// policies sit on the node that terminates their path. After pruning,
/// `pruned` records what was dropped at each node.
struct SchemaTreeNode {
  PathOp op;
  std::vector<SchemaTreeNode> children;
  std::vector<Policy> policies;
  std::vector<Policy> pruned;
};

/// Merges the pairs into a tree, sharing common prefixes. Child order follows
/// first insertion, so sorted input yields a canonically ordered tree.
inline SchemaTreeNode buildSchemaTree(
    const std::vector<std::pair<FieldPath, Policy>>& pairs) {
  SchemaTreeNode root{PathOp::root(), {}, {}, {}};
  for (const auto& [path, policy] : pairs) {
    SchemaTreeNode* node = &root;
    const auto& ops = path.ops();
    for (size_t i = 1; i < ops.size(); ++i) {
      SchemaTreeNode* child = nullptr;
      for (auto& candidate : node->children) {
        if (candidate.op == ops[i]) {
          child = &candidate;
          break;
        }
      }
      if (child == nullptr) {
        node->children.push_back(SchemaTreeNode{ops[i], {}, {}, {}});
        child = &node->children.back();
      }
      node = child;
    }
    node->policies.push_back(policy);
  }
  return root;
}

namespace detail {

/// A policy participates in consent-set reasoning only when its keep-form
/// condition is a pure positive consent conjunction. Everything else is
/// retained untouched and contributes nothing to coverage.
inline std::optional<std::set<std::string>> comparableConsents(
    const Policy& policy) {
  return consentConjunction(*policy.keepCondition());
}

inline void pruneNode(SchemaTreeNode& node,
                      const std::set<std::string>& covered) {
  std::vector<Policy> retained;
  std::vector<Policy> dropped;

  struct Candidate {
    size_t index;
    std::set<std::string> consents;
  };
  std::vector<Candidate> candidates;
  std::set<std::string> nodeConsents;
  for (size_t i = 0; i < node.policies.size(); ++i) {
    auto consents = comparableConsents(node.policies[i]);
    if (!consents) {
      retained.push_back(node.policies[i]);
      continue;
    }
    nodeConsents.insert(consents->begin(), consents->end());
    candidates.push_back(Candidate{i, std::move(*consents)});
  }

  std::set<std::string> uncovered;
  for (const auto& c : nodeConsents) {
    if (covered.count(c) == 0) {
      uncovered.insert(c);
    }
  }

  std::vector<bool> selected(candidates.size(), false);
  while (!uncovered.empty()) {
    size_t best = candidates.size();
    size_t bestGain = 0;
    for (size_t i = 0; i < candidates.size(); ++i) {
      if (selected[i]) continue;
      size_t gain = 0;
      for (const auto& c : candidates[i].consents) {
        if (uncovered.count(c) != 0) ++gain;
      }
      if (gain == 0) continue;
      if (best == candidates.size() || gain > bestGain) {
        best = i;
        bestGain = gain;
        continue;
      }
      if (gain == bestGain) {
        // Ties: larger consent set first, then lexicographic policy id.
        const Policy& a = node.policies[candidates[i].index];
        const Policy& b = node.policies[candidates[best].index];
        size_t aSize = candidates[i].consents.size();
        size_t bSize = candidates[best].consents.size();
        if (aSize > bSize || (aSize == bSize && a.id < b.id)) {
          best = i;
        }
      }
    }
    if (best == candidates.size()) {
      break;  // leftover consents have no remaining source policy
    }
    selected[best] = true;
    for (const auto& c : candidates[best].consents) {
      uncovered.erase(c);
    }
  }

  for (size_t i = 0; i < candidates.size(); ++i) {
    if (selected[i]) {
      retained.push_back(node.policies[candidates[i].index]);
    } else {
      dropped.push_back(node.policies[candidates[i].index]);
    }
  }

  // Keep the original relative order for determinism of downstream plans.
  auto originalOrder = [&](const Policy& a, const Policy& b) {
    auto pos = [&](const Policy& p) {
      for (size_t i = 0; i < node.policies.size(); ++i) {
        if (node.policies[i].sameIdentity(p)) return i;
      }
      return node.policies.size();
    };
    return pos(a) < pos(b);
  };
  std::sort(retained.begin(), retained.end(), originalOrder);
  std::sort(dropped.begin(), dropped.end(), originalOrder);

  node.policies = std::move(retained);
  node.pruned = std::move(dropped);

  std::set<std::string> childCovered = covered;
  childCovered.insert(nodeConsents.begin(), nodeConsents.end());
  for (auto& child : node.children) {
    pruneNode(child, childCovered);
  }
}

}  // namespace detail

/// Drops maskings whose consent sets are already covered by ancestors or by
/// co-located policies, keeping a greedy minimal cover of each node's
/// uncovered consents. Pure: returns a new tree.
inline SchemaTreeNode prunePolicies(const SchemaTreeNode& root) {
  SchemaTreeNode result = root;
  detail::pruneNode(result, {});
  return result;
}

/// Flattens terminal policies back into (path, policy) pairs in pre-order.
inline std::vector<std::pair<FieldPath, Policy>> collectPairs(
    const SchemaTreeNode& root) {
  std::vector<std::pair<FieldPath, Policy>> out;
  std::vector<PathOp> prefix;
  auto walk = [&](auto&& self, const SchemaTreeNode& node) -> void {
    prefix.push_back(node.op);
    for (const auto& policy : node.policies) {
      out.emplace_back(FieldPath(prefix), policy);
    }
    for (const auto& child : node.children) {
      self(self, child);
    }
    prefix.pop_back();
  };
  walk(walk, root);
  return out;
}

inline size_t countPolicies(const SchemaTreeNode& node) {
  size_t n = node.policies.size();
  for (const auto& child : node.children) {
    n += countPolicies(child);
  }
  return n;
}

/// Indented text dump: operator, retained policy ids, pruned policy ids.
inline std::string dumpTree(const SchemaTreeNode& node, int indent = 0) {
  std::string out(static_cast<size_t>(indent) * 2, ' ');
  out += node.op.render();
  if (!node.policies.empty()) {
    out += " policies=[";
    for (size_t i = 0; i < node.policies.size(); ++i) {
      if (i > 0) out += ", ";
      out += node.policies[i].id;
    }
    out += "]";
  }
  if (!node.pruned.empty()) {
    out += " pruned=[";
    for (size_t i = 0; i < node.pruned.size(); ++i) {
      if (i > 0) out += ", ";
      out += node.pruned[i].id;
    }
    out += "]";
  }
  out += "\n";
  for (const auto& child : node.children) {
    out += dumpTree(child, indent + 1);
  }
  return out;
}

}  // namespace purview
