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
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "purview/condition.hpp"
#include "purview/errors.hpp"
#include "purview/field_path.hpp"
#include "purview/planner.hpp"
#include "purview/policy.hpp"
#include "purview/schema.hpp"
#include "purview/time_util.hpp"

namespace purview {

/// What the masking function does at the addressed element, determined by the
/// shape of the path: attribute/struct-field targets are set to NULL, array
/// elements are removed, map keys remove their pair, map values become NULL.
enum class MaskBehavior {
  NullValue,
  RemoveArrayElements,
  RemoveMapPairs,
  NullMapValues
};

inline const char* toString(MaskBehavior b) {
  switch (b) {
    case MaskBehavior::NullValue:
      return "null_value";
    case MaskBehavior::RemoveArrayElements:
      return "remove_array_elements";
    case MaskBehavior::RemoveMapPairs:
      return "remove_map_pairs";
    case MaskBehavior::NullMapValues:
      return "null_map_values";
  }
  return "?";
}

inline MaskBehavior maskBehaviorFromString(std::string_view s) {
  if (s == "null_value") return MaskBehavior::NullValue;
  if (s == "remove_array_elements") return MaskBehavior::RemoveArrayElements;
  if (s == "remove_map_pairs") return MaskBehavior::RemoveMapPairs;
  if (s == "null_map_values") return MaskBehavior::NullMapValues;
  throw ValidationError("unknown mask behavior: " + std::string(s));
}

/// One executable step of a masking plan.
///
/// RowFilter: drop rows for which (NOT selector OR keep-condition) fails; a
/// missing selector means the policy applies to every row.
///
/// ColumnMask: rewrite one column; the relative path addresses the element
/// inside the column, and an optional selector restricts the mask to rows it
/// matches.
struct MaskStep {
  enum class Kind { RowFilter, ColumnMask };

  Kind kind = Kind::RowFilter;
  std::string policyId;
  ConditionPtr selector;       // row-scope predicate; may be null
  ConditionPtr keepCondition;  // element survives iff this holds

  // ColumnMask only.
  std::string rootAttribute;
  size_t columnIndex = 0;
  std::string relativePath;
  MaskBehavior behavior = MaskBehavior::NullValue;

  nlohmann::ordered_json toJson() const {
    nlohmann::ordered_json j;
    j["kind"] = kind == Kind::RowFilter ? "row_filter" : "column_mask";
    j["policy_id"] = policyId;
    if (selector) {
      j["selector"] = renderCondition(selector);
    }
    j["keep_condition"] = renderCondition(keepCondition);
    if (kind == Kind::ColumnMask) {
      j["root_attribute"] = rootAttribute;
      j["column_index"] = columnIndex;
      j["relative_path"] = relativePath;
      j["behavior"] = toString(behavior);
    }
    return j;
  }

  static MaskStep fromJson(const nlohmann::json& j) {
    MaskStep step;
    step.kind = j.at("kind").get<std::string>() == "row_filter"
                    ? Kind::RowFilter
                    : Kind::ColumnMask;
    step.policyId = j.at("policy_id").get<std::string>();
    if (j.contains("selector")) {
      step.selector = parseFilterCondition(j.at("selector").get<std::string>());
    }
    step.keepCondition = parseCondition(j.at("keep_condition").get<std::string>());
    if (step.kind == Kind::ColumnMask) {
      step.rootAttribute = j.at("root_attribute").get<std::string>();
      step.columnIndex = j.at("column_index").get<size_t>();
      step.relativePath = j.at("relative_path").get<std::string>();
      step.behavior = maskBehaviorFromString(j.at("behavior").get<std::string>());
    }
    return step;
  }

  bool operator==(const MaskStep& o) const {
    return kind == o.kind && policyId == o.policyId &&
           conditionEqual(selector ? selector : Condition::constant(true),
                          o.selector ? o.selector : Condition::constant(true)) &&
           conditionEqual(keepCondition, o.keepCondition) &&
           rootAttribute == o.rootAttribute && columnIndex == o.columnIndex &&
           relativePath == o.relativePath && behavior == o.behavior;
  }
};

struct Version {
  int major = 0;
  int minor = 0;
  int patch = 0;

  std::string render() const {
    return std::to_string(major) + "." + std::to_string(minor) + "." +
           std::to_string(patch);
  }

  static Version parse(const std::string& text) {
    Version v;
    if (std::sscanf(text.c_str(), "%d.%d.%d", &v.major, &v.minor, &v.patch) !=
        3) {
      throw ValidationError("malformed version: " + text);
    }
    return v;
  }

  bool operator==(const Version& o) const {
    return major == o.major && minor == o.minor && patch == o.patch;
  }
  bool operator!=(const Version& o) const { return !(*this == o); }
  bool operator<(const Version& o) const {
    return std::tie(major, minor, patch) < std::tie(o.major, o.minor, o.patch);
  }
  bool operator>(const Version& o) const { return o < *this; }
  bool operator<=(const Version& o) const { return !(o < *this); }
};

/// A compiled, versioned data-masking view: the SQL text plus the executable
/// plan that produced it. Schema-preserving by construction.
struct ViewDefinition {
  std::string relation;
  std::string purpose;
  Version version;
  std::string sql;
  std::vector<std::string> columns;
  std::optional<std::string> subjectIdColumn;
  std::vector<MaskStep> steps;
  std::vector<std::string> warnings;
  int64_t createdAtMs = 0;
  std::string inputsDigest;

  size_t rowFilterCount() const {
    size_t n = 0;
    for (const auto& s : steps) {
      if (s.kind == MaskStep::Kind::RowFilter) ++n;
    }
    return n;
  }
  size_t columnMaskCount() const { return steps.size() - rowFilterCount(); }

  nlohmann::ordered_json toJson() const {
    nlohmann::ordered_json j;
    j["relation"] = relation;
    j["purpose"] = purpose;
    j["version"] = version.render();
    j["sql"] = sql;
    nlohmann::ordered_json plan;
    if (subjectIdColumn) {
      plan["subject_id_column"] = *subjectIdColumn;
    }
    auto stepArr = nlohmann::ordered_json::array();
    for (const auto& s : steps) {
      stepArr.push_back(s.toJson());
    }
    plan["steps"] = std::move(stepArr);
    j["plan"] = std::move(plan);
    j["columns"] = columns;
    if (!warnings.empty()) {
      j["warnings"] = warnings;
    }
    j["created_at"] = createdAtMs;
    j["created_at_iso"] = msToIso8601(createdAtMs);
    j["inputs_digest"] = inputsDigest;
    return j;
  }

  static ViewDefinition fromJson(const nlohmann::json& j) {
    ViewDefinition v;
    v.relation = j.at("relation").get<std::string>();
    v.purpose = j.at("purpose").get<std::string>();
    v.version = Version::parse(j.at("version").get<std::string>());
    v.sql = j.at("sql").get<std::string>();
    const auto& plan = j.at("plan");
    if (plan.contains("subject_id_column")) {
      v.subjectIdColumn = plan.at("subject_id_column").get<std::string>();
    }
    for (const auto& s : plan.at("steps")) {
      v.steps.push_back(MaskStep::fromJson(s));
    }
    v.columns = j.at("columns").get<std::vector<std::string>>();
    if (j.contains("warnings")) {
      v.warnings = j.at("warnings").get<std::vector<std::string>>();
    }
    v.createdAtMs = j.at("created_at").get<int64_t>();
    v.inputsDigest = j.at("inputs_digest").get<std::string>();
    return v;
  }
};

namespace detail {

/// FNV-1a over a string; used for input digests, not security.
inline uint64_t fnv1a(std::string_view data, uint64_t seed = 0xcbf29ce484222325ULL) {
  uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Renders a row-scope predicate (selector) as SQL: element refs become bare
/// column names.
inline std::string selectorSql(const Condition& c) {
  auto wrap = [](const Condition& child) {
    std::string inner = selectorSql(child);
    if (child.node == Condition::Node::Predicate ||
        child.node == Condition::Node::Constant) {
      return inner;
    }
    return "(" + inner + ")";
  };
  switch (c.node) {
    case Condition::Node::And:
      return wrap(*c.left) + " AND " + wrap(*c.right);
    case Condition::Node::Or:
      return wrap(*c.left) + " OR " + wrap(*c.right);
    case Condition::Node::Not:
      return "NOT " + wrap(*c.left);
    case Condition::Node::Constant:
      return c.constValue ? "TRUE" : "FALSE";
    case Condition::Node::Predicate: {
      Condition bare = c;
      bare.isElementRef = false;
      std::string text = renderConditionImpl(bare);
      return text;
    }
  }
  return "?";
}

struct SqlContext {
  std::string subjectColumn;
};

/// Renders a keep-condition as SQL. Pure positive consent conjunctions
/// collapse to one HAS_USER_CONSENT call with a comma-joined consent list;
/// other shapes compile per consent leaf with boolean structure preserved.
inline std::string keepConditionSql(const Condition& c, const SqlContext& ctx);

inline std::string consentCallSql(const std::set<std::string>& consents,
                                  const SqlContext& ctx) {
  std::string joined;
  for (const auto& name : consents) {
    if (!joined.empty()) joined += ",";
    joined += name;
  }
  return "HAS_USER_CONSENT('" + joined + "', " + ctx.subjectColumn +
         ", CURRENT_TIMESTAMP())";
}

inline std::string keepConditionSqlNode(const Condition& c,
                                        const SqlContext& ctx) {
  auto wrap = [&](const Condition& child) {
    std::string inner = keepConditionSql(child, ctx);
    if (child.node == Condition::Node::Predicate ||
        child.node == Condition::Node::Constant) {
      return inner;
    }
    return "(" + inner + ")";
  };
  switch (c.node) {
    case Condition::Node::And:
      return wrap(*c.left) + " AND " + wrap(*c.right);
    case Condition::Node::Or:
      return wrap(*c.left) + " OR " + wrap(*c.right);
    case Condition::Node::Not:
      return "NOT " + wrap(*c.left);
    case Condition::Node::Constant:
      return c.constValue ? "TRUE" : "FALSE";
    case Condition::Node::Predicate: {
      if (c.attrClass == AttrClass::Consent) {
        bool wantTrue;
        if (c.cmp == CompareOp::Eq || c.cmp == CompareOp::Ne) {
          if (c.literals.size() != 1 ||
              c.literals[0].kind != Literal::Kind::Bool) {
            throw UnsupportedConditionError(
                "consent attribute '" + c.attribute +
                "' may only be compared with a boolean");
          }
          wantTrue = c.literals[0].boolValue == (c.cmp == CompareOp::Eq);
        } else {
          throw UnsupportedConditionError(
              "operator not supported on consent attribute '" + c.attribute +
              "'");
        }
        std::string call = consentCallSql({c.attribute}, ctx);
        return wantTrue ? call : "NOT " + call;
      }
      if (c.attrClass == AttrClass::Accessor ||
          c.attrClass == AttrClass::System) {
        throw UnsupportedConditionError(
            "policy conditions over " +
            std::string(toString(c.attrClass)) +
            " attributes are not compilable ('" + c.attribute + "')");
      }
      if (c.isElementRef) {
        return selectorSql(c);
      }
      throw UnsupportedConditionError("attribute '" + c.attribute +
                                      "' has no declared class");
    }
  }
  return "?";
}

inline std::string keepConditionSql(const Condition& c, const SqlContext& ctx) {
  if (auto consents = consentConjunction(c); consents && !consents->empty()) {
    return consentCallSql(*consents, ctx);
  }
  return keepConditionSqlNode(c, ctx);
}

/// Mask behavior keyed off the tail of the path (what the path addresses).
inline MaskBehavior behaviorForOps(const std::vector<PathOp>& relativeOps) {
  if (relativeOps.empty()) {
    return MaskBehavior::NullValue;
  }
  const PathOp& last = relativeOps.back();
  PathOp::Kind anchor = last.kind;
  if (last.kind == PathOp::Kind::Filter && relativeOps.size() >= 2) {
    anchor = relativeOps[relativeOps.size() - 2].kind;
  }
  switch (anchor) {
    case PathOp::Kind::UnnestItem:
      return MaskBehavior::RemoveArrayElements;
    case PathOp::Kind::UnnestKey:
      return MaskBehavior::RemoveMapPairs;
    case PathOp::Kind::UnnestValue:
      return MaskBehavior::NullMapValues;
    default:
      return MaskBehavior::NullValue;
  }
}

}  // namespace detail

struct CompileOptions {
  int64_t nowMs = 0;  // 0 means "use wall clock"
};

/// Compiles pruned (path, policy) pairs for one purpose into a
/// schema-preserving view over the relation: SQL text plus the executable
/// plan. Row policies become WHERE conjuncts; column policies become
/// MASK_FIELD_IF projections. The SQL is a pure function of the inputs.
inline ViewDefinition compileView(
    const RelationSchema& relation,
    const std::vector<std::pair<FieldPath, Policy>>& pruned,
    const std::string& purpose, const CompileOptions& options = {}) {
  ViewDefinition view;
  view.relation = relation.name;
  view.purpose = purpose;
  view.createdAtMs = options.nowMs != 0 ? options.nowMs : nowMs();
  view.subjectIdColumn = relation.subjectIdColumn;
  for (const auto& [name, type] : relation.columns) {
    view.columns.push_back(name);
  }

  bool anyConsent = false;
  std::vector<MaskStep> rowFilters;
  std::vector<MaskStep> columnMasks;

  for (const auto& [path, policy] : pruned) {
    PathBinding binding = resolvePath(relation, path);
    ConditionPtr keep = policy.keepCondition();
    if (referencesConsent(*keep)) {
      anyConsent = true;
    }
    // Reject classes the generated SQL cannot express up front.
    forEachPredicate(*keep, [&](const Condition& p) {
      if (p.attrClass == AttrClass::Accessor ||
          p.attrClass == AttrClass::System) {
        throw UnsupportedConditionError(
            "policy " + policy.id + " uses " +
            std::string(toString(p.attrClass)) + " attribute '" + p.attribute +
            "'; only data-subject consent conditions are supported");
      }
    });

    if (path.isRowPath()) {
      MaskStep step;
      step.kind = MaskStep::Kind::RowFilter;
      step.policyId = policy.id;
      if (path.ops().size() == 2) {
        step.selector = path.ops()[1].filter;
      }
      step.keepCondition = keep;
      rowFilters.push_back(std::move(step));
      if (referencesConsent(*keep)) {
        view.warnings.push_back(
            "row policy " + policy.id +
            " is consent-based: rows with NULL " +
            (relation.subjectIdColumn ? *relation.subjectIdColumn
                                      : std::string("subject id")) +
            " are not filtered");
      }
      continue;
    }

    MaskStep step;
    step.kind = MaskStep::Kind::ColumnMask;
    step.policyId = policy.id;
    step.keepCondition = keep;

    const auto& ops = path.ops();
    size_t i = 1;
    if (ops[i].kind == PathOp::Kind::Filter) {
      step.selector = ops[i].filter;  // row-selector prefix
      ++i;
    }
    // The first dereference enters the root attribute.
    step.rootAttribute = ops[i].name;
    auto index = relation.columnIndex(step.rootAttribute);
    if (!index) {
      throw ResolutionError("path " + path.render() +
                            " enters unknown column " + step.rootAttribute);
    }
    step.columnIndex = *index;
    std::vector<PathOp> relativeOps(ops.begin() + static_cast<long>(i) + 1,
                                    ops.end());
    step.relativePath = FieldPath::renderRelative(relativeOps);
    step.behavior = detail::behaviorForOps(relativeOps);
    columnMasks.push_back(std::move(step));
    (void)binding;
  }

  if (anyConsent && !relation.subjectIdColumn) {
    throw MissingSubjectIdError(relation.name);
  }

  std::sort(columnMasks.begin(), columnMasks.end(),
            [](const MaskStep& a, const MaskStep& b) {
              return std::tie(a.columnIndex, a.relativePath, a.policyId) <
                     std::tie(b.columnIndex, b.relativePath, b.policyId);
            });

  view.steps = rowFilters;
  view.steps.insert(view.steps.end(), columnMasks.begin(), columnMasks.end());

  // SQL text. Masked columns fold nested MASK_FIELD_IF calls, innermost
  // applied first; the UDF masks when its condition is TRUE, so keep
  // conditions appear negated.
  detail::SqlContext ctx;
  ctx.subjectColumn = relation.subjectIdColumn.value_or("");

  std::vector<std::string> selectItems;
  for (size_t col = 0; col < relation.columns.size(); ++col) {
    const std::string& name = relation.columns[col].first;
    std::string expr = name;
    bool masked = false;
    for (const auto& step : columnMasks) {
      if (step.columnIndex != col) continue;
      masked = true;
      std::string cond = "NOT " + [&] {
        std::string keepSql = detail::keepConditionSql(*step.keepCondition, ctx);
        bool atomicCall = step.keepCondition->node == Condition::Node::Predicate ||
                          keepSql.rfind("HAS_USER_CONSENT(", 0) == 0;
        return atomicCall ? keepSql : "(" + keepSql + ")";
      }();
      if (step.selector) {
        cond = "(" + detail::selectorSql(*step.selector) + ") AND " + cond;
      }
      std::string pathArg = "$." + step.rootAttribute +
                            (step.relativePath.empty()
                                 ? ""
                                 : "." + step.relativePath);
      expr = "MASK_FIELD_IF(" + cond + ", " + expr + ", '" + pathArg + "')";
    }
    selectItems.push_back(masked ? expr + " AS " + name : expr);
  }

  std::string sql = "SELECT\n";
  for (size_t i = 0; i < selectItems.size(); ++i) {
    sql += "  " + selectItems[i];
    if (i + 1 < selectItems.size()) sql += ",";
    sql += "\n";
  }
  sql += "FROM " + relation.name + "\n";
  if (!rowFilters.empty()) {
    sql += "WHERE ";
    for (size_t i = 0; i < rowFilters.size(); ++i) {
      if (i > 0) sql += "\n  AND ";
      const auto& step = rowFilters[i];
      std::string keepSql = detail::keepConditionSql(*step.keepCondition, ctx);
      if (step.selector) {
        sql += "(NOT (" + detail::selectorSql(*step.selector) + ")) OR " +
               keepSql;
      } else {
        sql += keepSql;
      }
    }
    sql += "\n";
  }
  view.sql = std::move(sql);
  return view;
}

/// Digest of the inputs a view was compiled from: the relation schema, its
/// label assignments, and the policies matched for the purpose. Inputs are
/// canonicalized so file-order changes do not register as changes.
inline std::string inputsDigest(
    const RelationSchema& relation,
    const std::vector<LabelAssignment>& assignments,
    const std::vector<Policy>& matchedPolicies) {
  std::vector<std::string> parts;
  parts.push_back(relation.toJson().dump());
  std::vector<std::string> assignmentTexts;
  for (const auto& a : assignments) {
    if (a.relation == relation.name) {
      assignmentTexts.push_back(a.path.render() + "\x1f" + a.label);
    }
  }
  std::sort(assignmentTexts.begin(), assignmentTexts.end());
  parts.insert(parts.end(), assignmentTexts.begin(), assignmentTexts.end());
  std::vector<std::string> policyTexts;
  for (const auto& p : matchedPolicies) {
    policyTexts.push_back(p.id + "\x1f" + p.purpose + "\x1f" + p.label +
                          "\x1f" + renderCondition(p.condition) + "\x1f" +
                          toString(p.action));
  }
  std::sort(policyTexts.begin(), policyTexts.end());
  parts.insert(parts.end(), policyTexts.begin(), policyTexts.end());

  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& part : parts) {
    h = detail::fnv1a(part, h);
    h = detail::fnv1a("\x1e", h);
  }
  return detail::hex64(h);
}

enum class ChangeKind { None, TextOnly, AdditiveSchema, MaskingSemantics };

/// Plan-diff classification driving the semantic version bump.
inline ChangeKind classifyChange(const ViewDefinition& previous,
                                 const ViewDefinition& next) {
  if (previous.steps != next.steps) {
    return ChangeKind::MaskingSemantics;
  }
  if (previous.columns != next.columns ||
      previous.subjectIdColumn != next.subjectIdColumn) {
    return ChangeKind::AdditiveSchema;
  }
  if (previous.sql != next.sql) {
    return ChangeKind::TextOnly;
  }
  return ChangeKind::None;
}

/// 1.0.0 when there is no previous version; otherwise major on masking
/// changes, minor on schema-driven additive changes, patch on text-only
/// changes.
inline Version assignVersion(const std::optional<Version>& previous,
                             ChangeKind kind) {
  if (!previous) {
    return Version{1, 0, 0};
  }
  Version v = *previous;
  switch (kind) {
    case ChangeKind::MaskingSemantics:
      return Version{v.major + 1, 0, 0};
    case ChangeKind::AdditiveSchema:
      return Version{v.major, v.minor + 1, 0};
    case ChangeKind::TextOnly:
    case ChangeKind::None:
      return Version{v.major, v.minor, v.patch + 1};
  }
  return v;
}

}  // namespace purview
