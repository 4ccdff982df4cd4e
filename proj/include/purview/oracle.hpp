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

#include <optional>
#include <vector>

#include "purview/consent.hpp"
#include "purview/errors.hpp"
#include "purview/evaluator.hpp"
#include "purview/field_path.hpp"
#include "purview/policy.hpp"
#include "purview/value.hpp"

// Reference implementation of the masking operator, written as a direct
// transliteration of its definition: a row-selector path is a selection, any
// other path is a per-row conditional transform. The traversal here is
// deliberately independent of the plan evaluator (single uniform recursion
// with a removal sentinel instead of lookahead dispatch) so the two can check
// each other.

namespace purview::oracle {

namespace detail {

/// What the masking function does at the end of the path.
enum class Terminal { SetNull, Remove };

inline Terminal terminalFor(const std::vector<PathOp>& ops) {
  // Find the operator that anchors the addressed element: the last operator,
  // or the one before a trailing filter.
  if (ops.empty()) {
    return Terminal::SetNull;
  }
  size_t anchorIndex = ops.size() - 1;
  if (ops[anchorIndex].kind == PathOp::Kind::Filter && anchorIndex > 0) {
    --anchorIndex;
  }
  switch (ops[anchorIndex].kind) {
    case PathOp::Kind::UnnestItem:
    case PathOp::Kind::UnnestKey:
      return Terminal::Remove;
    default:
      return Terminal::SetNull;
  }
}

/// Applies the masking function to every element addressed by ops[i..].
/// Returns nullopt when the element itself must be removed from its
/// enclosing collection.
inline std::optional<Value> transform(const Value& value,
                                      const SchemaType& type,
                                      const std::vector<PathOp>& ops, size_t i,
                                      Terminal terminal) {
  if (i == ops.size()) {
    if (terminal == Terminal::Remove) {
      return std::nullopt;
    }
    return Value::null();
  }
  if (value.isNull()) {
    return value;
  }
  const PathOp& op = ops[i];
  switch (op.kind) {
    case PathOp::Kind::Filter: {
      if (!toBool(purview::detail::evalElementFilter(*op.filter, value))) {
        return value;
      }
      return transform(value, type, ops, i + 1, terminal);
    }
    case PathOp::Kind::Deref: {
      const SchemaType* fieldType = type.findField(op.name);
      if (fieldType == nullptr || value.kind() != Value::Kind::Struct) {
        throw PathTypeMismatchError("dereference ." + op.name +
                                    " does not fit " + type.toString());
      }
      Value::StructFields fields = value.structFields();
      for (auto& [name, fieldValue] : fields) {
        if (name == op.name) {
          auto result = transform(fieldValue, *fieldType, ops, i + 1, terminal);
          fieldValue = result ? std::move(*result) : Value::null();
        }
      }
      return Value::structOf(std::move(fields));
    }
    case PathOp::Kind::UnnestItem: {
      if (value.kind() != Value::Kind::Array) {
        throw PathTypeMismatchError("[item] does not fit " + type.toString());
      }
      Value::ArrayItems items;
      for (const auto& item : value.arrayItems()) {
        auto result = transform(item, type.element(), ops, i + 1, terminal);
        if (result) {
          items.push_back(std::move(*result));
        }
      }
      return Value::arrayOf(std::move(items));
    }
    case PathOp::Kind::UnnestKey: {
      if (value.kind() != Value::Kind::Map) {
        throw PathTypeMismatchError("[key] does not fit " + type.toString());
      }
      Value::MapEntries entries;
      for (const auto& [key, mapValue] : value.mapEntries()) {
        auto result = transform(key, type.keyType(), ops, i + 1, terminal);
        if (result) {
          entries.emplace_back(std::move(*result), mapValue);
        }
      }
      return Value::mapOf(std::move(entries));
    }
    case PathOp::Kind::UnnestValue: {
      if (value.kind() != Value::Kind::Map) {
        throw PathTypeMismatchError("[value] does not fit " + type.toString());
      }
      Value::MapEntries entries;
      for (const auto& [key, mapValue] : value.mapEntries()) {
        auto result = transform(mapValue, type.valueType(), ops, i + 1, terminal);
        entries.emplace_back(key, result ? std::move(*result) : Value::null());
      }
      return Value::mapOf(std::move(entries));
    }
    case PathOp::Kind::Root:
      throw PathTypeMismatchError("root operator inside a transform");
  }
  return value;
}

}  // namespace detail

/// mask(R, p, f): for a row-selector path, selects rows satisfying
/// (NOT pred OR p.c); otherwise rewrites the addressed element in every row
/// whose keep-condition fails. Rows lacking a subject id are never removed by
/// consent-based row policies.
inline Relation oracleMask(const Relation& rel, const Policy& policy,
                           const FieldPath& path, const SnapshotStore* store,
                           int64_t accessTimeMs) {
  resolvePath(rel.schema, path);
  ConditionPtr keep = policy.keepCondition();
  const bool consentBased = referencesConsent(*keep);
  const auto& ops = path.ops();

  if (path.isRowPath()) {
    ConditionPtr combined = keep;
    if (ops.size() == 2) {
      combined = Condition::orOf(Condition::notOf(ops[1].filter), keep);
    }
    Relation out{rel.schema, {}};
    for (const Row& row : rel.rows) {
      RowBindings bindings(rel.schema, row);
      ConsentContext ctx{store, purview::detail::subjectOf(rel.schema, row),
                         accessTimeMs};
      if (consentBased && !ctx.subjectId) {
        out.rows.push_back(row);
        continue;
      }
      if (toBool(evalCondition3(*combined, bindings, &ctx))) {
        out.rows.push_back(row);
      }
    }
    return out;
  }

  // Column-level mask. A leading filter (row selector prefix) gates which
  // rows the transform touches.
  size_t first = 1;
  ConditionPtr rowSelector;
  if (ops[first].kind == PathOp::Kind::Filter) {
    rowSelector = ops[first].filter;
    ++first;
  }
  const std::string& attribute = ops[first].name;
  auto columnIndex = rel.schema.columnIndex(attribute);
  if (!columnIndex) {
    throw ResolutionError("path enters unknown column " + attribute);
  }
  const SchemaType& columnType = rel.schema.columns[*columnIndex].second;
  std::vector<PathOp> relativeOps(ops.begin() + static_cast<long>(first) + 1,
                                  ops.end());
  detail::Terminal terminal = detail::terminalFor(relativeOps);

  Relation out{rel.schema, {}};
  for (const Row& row : rel.rows) {
    RowBindings bindings(rel.schema, row);
    ConsentContext ctx{store, purview::detail::subjectOf(rel.schema, row),
                       accessTimeMs};
    Row next = row;
    bool kept = toBool(evalCondition3(*keep, bindings, &ctx));
    if (!kept) {
      bool selected = rowSelector == nullptr ||
                      toBool(evalCondition3(*rowSelector, bindings, &ctx));
      if (selected) {
        auto result = detail::transform(next[*columnIndex], columnType,
                                        relativeOps, 0, terminal);
        next[*columnIndex] = result ? std::move(*result) : Value::null();
      }
    }
    out.rows.push_back(std::move(next));
  }
  return out;
}

/// Sequential application over a pair list; the ground truth the compiled
/// plan is compared against.
inline Relation oracleMaskAll(
    const Relation& rel,
    const std::vector<std::pair<FieldPath, Policy>>& pairs,
    const SnapshotStore* store, int64_t accessTimeMs) {
  Relation current = rel;
  for (const auto& [path, policy] : pairs) {
    current = oracleMask(current, policy, path, store, accessTimeMs);
  }
  return current;
}

}  // namespace purview::oracle
