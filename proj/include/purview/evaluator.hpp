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
#include <string>
#include <vector>

#include "purview/compiler.hpp"
#include "purview/condition.hpp"
#include "purview/consent.hpp"
#include "purview/errors.hpp"
#include "purview/field_path.hpp"
#include "purview/value.hpp"

namespace purview {

/// SQL three-valued truth.
enum class Tri { False, True, Unknown };

inline Tri triAnd(Tri a, Tri b) {
  if (a == Tri::False || b == Tri::False) return Tri::False;
  if (a == Tri::Unknown || b == Tri::Unknown) return Tri::Unknown;
  return Tri::True;
}
inline Tri triOr(Tri a, Tri b) {
  if (a == Tri::True || b == Tri::True) return Tri::True;
  if (a == Tri::Unknown || b == Tri::Unknown) return Tri::Unknown;
  return Tri::False;
}
inline Tri triNot(Tri a) {
  if (a == Tri::Unknown) return Tri::Unknown;
  return a == Tri::True ? Tri::False : Tri::True;
}
inline Tri triOf(bool b) { return b ? Tri::True : Tri::False; }

/// Collapse at a decision point: unknown counts as "condition not satisfied".
inline bool toBool(Tri t) { return t == Tri::True; }

/// Attribute lookup for predicate evaluation. Row scope binds column names;
/// element scope binds the current struct's fields.
class Bindings {
 public:
  virtual ~Bindings() = default;
  virtual const Value* find(std::string_view name) const = 0;
};

class StructBindings : public Bindings {
 public:
  explicit StructBindings(const Value::StructFields& fields)
      : fields_(&fields) {}
  const Value* find(std::string_view name) const override {
    for (const auto& [fieldName, value] : *fields_) {
      if (fieldName == name) return &value;
    }
    return nullptr;
  }

 private:
  const Value::StructFields* fields_;
};

class RowBindings : public Bindings {
 public:
  RowBindings(const RelationSchema& schema, const Row& row)
      : schema_(&schema), row_(&row) {}
  const Value* find(std::string_view name) const override {
    auto index = schema_->columnIndex(name);
    if (!index) return nullptr;
    return &(*row_)[*index];
  }

 private:
  const RelationSchema* schema_;
  const Row* row_;
};

class EmptyBindings : public Bindings {
 public:
  const Value* find(std::string_view) const override { return nullptr; }
};

/// Everything a consent lookup needs: the store, the row's subject id (absent
/// when the subject column is NULL), and the single access time bound for the
/// whole query.
struct ConsentContext {
  const SnapshotStore* store = nullptr;
  std::optional<int64_t> subjectId;
  int64_t accessTimeMs = 0;
};

namespace detail {

inline bool likeMatch(std::string_view text, std::string_view pattern) {
  if (pattern.empty()) {
    return text.empty();
  }
  char p = pattern.front();
  if (p == '%') {
    for (size_t i = 0; i <= text.size(); ++i) {
      if (likeMatch(text.substr(i), pattern.substr(1))) {
        return true;
      }
    }
    return false;
  }
  if (text.empty()) {
    return false;
  }
  if (p == '_' || p == text.front()) {
    return likeMatch(text.substr(1), pattern.substr(1));
  }
  return false;
}

inline std::optional<double> numericOf(const Value& v) {
  if (v.kind() == Value::Kind::Int) return static_cast<double>(v.intValue());
  if (v.kind() == Value::Kind::Double) return v.doubleValue();
  return std::nullopt;
}
inline std::optional<double> numericOf(const Literal& l) {
  if (l.kind == Literal::Kind::Int) return static_cast<double>(l.intValue);
  if (l.kind == Literal::Kind::Double) return l.doubleValue;
  return std::nullopt;
}

/// Three-valued ordering comparison between a value and a literal.
/// Cross-type comparisons (other than int/double) are unknown.
inline Tri compareOrdered(const Value& v, const Literal& l, CompareOp op) {
  int cmp;
  if (auto vn = numericOf(v), ln = numericOf(l); vn && ln) {
    cmp = (*vn < *ln) ? -1 : (*vn > *ln ? 1 : 0);
  } else if (v.kind() == Value::Kind::String &&
             l.kind == Literal::Kind::String) {
    cmp = v.stringValue().compare(l.stringValue);
    cmp = cmp < 0 ? -1 : (cmp > 0 ? 1 : 0);
  } else if (v.kind() == Value::Kind::Bool && l.kind == Literal::Kind::Bool) {
    cmp = static_cast<int>(v.boolValue()) - static_cast<int>(l.boolValue);
  } else {
    return Tri::Unknown;
  }
  switch (op) {
    case CompareOp::Eq:
      return triOf(cmp == 0);
    case CompareOp::Ne:
      return triOf(cmp != 0);
    case CompareOp::Lt:
      return triOf(cmp < 0);
    case CompareOp::Gt:
      return triOf(cmp > 0);
    case CompareOp::Le:
      return triOf(cmp <= 0);
    case CompareOp::Ge:
      return triOf(cmp >= 0);
    default:
      return Tri::Unknown;
  }
}

inline Tri comparePredicate(const Value& v, CompareOp op,
                            const std::vector<Literal>& literals) {
  if (op == CompareOp::IsNull) {
    return triOf(v.isNull());
  }
  if (v.isNull()) {
    return Tri::Unknown;
  }
  switch (op) {
    case CompareOp::Between: {
      return triAnd(compareOrdered(v, literals[0], CompareOp::Ge),
                    compareOrdered(v, literals[1], CompareOp::Le));
    }
    case CompareOp::In: {
      Tri acc = Tri::False;
      for (const auto& l : literals) {
        acc = triOr(acc, compareOrdered(v, l, CompareOp::Eq));
      }
      return acc;
    }
    case CompareOp::Like: {
      if (v.kind() != Value::Kind::String ||
          literals[0].kind != Literal::Kind::String) {
        return Tri::Unknown;
      }
      return triOf(likeMatch(v.stringValue(), literals[0].stringValue));
    }
    default:
      return compareOrdered(v, literals[0], op);
  }
}

}  // namespace detail

/// Full three-valued evaluation. Consent-class attributes are resolved
/// through the consent context (unknown when the subject id is NULL); element
/// references are resolved through the bindings.
inline Tri evalCondition3(const Condition& cond, const Bindings& bindings,
                          const ConsentContext* ctx) {
  switch (cond.node) {
    case Condition::Node::And:
      return triAnd(evalCondition3(*cond.left, bindings, ctx),
                    evalCondition3(*cond.right, bindings, ctx));
    case Condition::Node::Or:
      return triOr(evalCondition3(*cond.left, bindings, ctx),
                   evalCondition3(*cond.right, bindings, ctx));
    case Condition::Node::Not:
      return triNot(evalCondition3(*cond.left, bindings, ctx));
    case Condition::Node::Constant:
      return triOf(cond.constValue);
    case Condition::Node::Predicate: {
      if (cond.attrClass == AttrClass::Consent) {
        if (ctx == nullptr || ctx->store == nullptr) {
          throw UnboundAttributeError(cond.attribute);
        }
        if (!ctx->subjectId) {
          return Tri::Unknown;
        }
        bool granted =
            *ctx->subjectId >= 0 &&
            hasUserConsent(cond.attribute,
                           static_cast<uint64_t>(*ctx->subjectId),
                           ctx->accessTimeMs, *ctx->store);
        return detail::comparePredicate(Value::ofBool(granted), cond.cmp,
                                        cond.literals);
      }
      const Value* bound = bindings.find(cond.attribute);
      if (bound == nullptr) {
        throw UnboundAttributeError(cond.attribute);
      }
      return detail::comparePredicate(*bound, cond.cmp, cond.literals);
    }
  }
  return Tri::Unknown;
}

/// Decision-point evaluation: unknown collapses to false at the root.
inline bool evalCondition(const Condition& cond, const Bindings& bindings,
                          const ConsentContext* ctx = nullptr) {
  return toBool(evalCondition3(cond, bindings, ctx));
}

namespace detail {

inline Tri evalElementFilter(const Condition& pred, const Value& element) {
  if (element.kind() != Value::Kind::Struct) {
    return Tri::Unknown;
  }
  StructBindings bindings(element.structFields());
  return evalCondition3(pred, bindings, nullptr);
}

/// Rewrites `value` (of `type`) along ops[i..]. Reaching the end of the ops
/// nulls the addressed element; elements addressed through [item]/[key] are
/// removed by their enclosing collection; [value] targets become NULL.
inline Value applyMaskOps(const Value& value, const SchemaType& type,
                          const std::vector<PathOp>& ops, size_t i) {
  if (i == ops.size()) {
    return Value::null();
  }
  if (value.isNull()) {
    return value;
  }
  const PathOp& op = ops[i];
  switch (op.kind) {
    case PathOp::Kind::Deref: {
      if (type.kind() != TypeKind::Struct ||
          value.kind() != Value::Kind::Struct) {
        throw PathTypeMismatchError("dereference ." + op.name +
                                    " applied to " + type.toString());
      }
      const SchemaType* fieldType = type.findField(op.name);
      if (fieldType == nullptr) {
        throw PathTypeMismatchError("no field " + op.name + " in " +
                                    type.toString());
      }
      Value::StructFields fields = value.structFields();
      bool found = false;
      for (auto& [name, fieldValue] : fields) {
        if (name == op.name) {
          fieldValue = applyMaskOps(fieldValue, *fieldType, ops, i + 1);
          found = true;
          break;
        }
      }
      if (!found) {
        throw PathTypeMismatchError("value lacks field " + op.name);
      }
      return Value::structOf(std::move(fields));
    }
    case PathOp::Kind::UnnestItem: {
      if (type.kind() != TypeKind::Array ||
          value.kind() != Value::Kind::Array) {
        throw PathTypeMismatchError("[item] applied to " + type.toString());
      }
      const SchemaType& elemType = type.element();
      Value::ArrayItems items;
      if (i + 1 == ops.size()) {
        return Value::arrayOf({});  // every element is addressed: remove all
      }
      if (ops[i + 1].kind == PathOp::Kind::Filter) {
        const Condition& pred = *ops[i + 1].filter;
        bool terminal = i + 2 == ops.size();
        for (const auto& item : value.arrayItems()) {
          bool matches = toBool(evalElementFilter(pred, item));
          if (!matches) {
            items.push_back(item);
          } else if (!terminal) {
            items.push_back(applyMaskOps(item, elemType, ops, i + 2));
          }
          // terminal && matches: element removed
        }
      } else {
        for (const auto& item : value.arrayItems()) {
          items.push_back(applyMaskOps(item, elemType, ops, i + 1));
        }
      }
      return Value::arrayOf(std::move(items));
    }
    case PathOp::Kind::UnnestKey: {
      if (type.kind() != TypeKind::Map || value.kind() != Value::Kind::Map) {
        throw PathTypeMismatchError("[key] applied to " + type.toString());
      }
      // Keys are atomic, so [key] is always terminal: every pair is removed.
      return Value::mapOf({});
    }
    case PathOp::Kind::UnnestValue: {
      if (type.kind() != TypeKind::Map || value.kind() != Value::Kind::Map) {
        throw PathTypeMismatchError("[value] applied to " + type.toString());
      }
      const SchemaType& valueType = type.valueType();
      Value::MapEntries entries = value.mapEntries();
      if (i + 1 == ops.size()) {
        for (auto& [key, mapValue] : entries) {
          mapValue = Value::null();
        }
      } else if (ops[i + 1].kind == PathOp::Kind::Filter) {
        const Condition& pred = *ops[i + 1].filter;
        bool terminal = i + 2 == ops.size();
        for (auto& [key, mapValue] : entries) {
          if (!toBool(evalElementFilter(pred, mapValue))) {
            continue;
          }
          mapValue = terminal ? Value::null()
                              : applyMaskOps(mapValue, valueType, ops, i + 2);
        }
      } else {
        for (auto& [key, mapValue] : entries) {
          mapValue = applyMaskOps(mapValue, valueType, ops, i + 1);
        }
      }
      return Value::mapOf(std::move(entries));
    }
    case PathOp::Kind::Filter:
      // Filters are consumed by the preceding unnest; a leading filter in a
      // relative path has no collection context to act on.
      throw PathTypeMismatchError("unexpected filter operator in mask path");
    case PathOp::Kind::Root:
      throw PathTypeMismatchError("unexpected root operator in mask path");
  }
  return value;
}

/// Resolution of a relative path inside an attribute type; throws
/// PathTypeMismatchError when an operator does not fit.
inline void checkRelativePath(const SchemaType& attrType,
                              const std::vector<PathOp>& ops) {
  SchemaType current = attrType;
  for (size_t i = 0; i < ops.size(); ++i) {
    const PathOp& op = ops[i];
    switch (op.kind) {
      case PathOp::Kind::Deref: {
        if (current.kind() != TypeKind::Struct) {
          throw PathTypeMismatchError("dereference ." + op.name +
                                      " applied to " + current.toString());
        }
        const SchemaType* field = current.findField(op.name);
        if (field == nullptr) {
          throw PathTypeMismatchError("no field " + op.name + " in " +
                                      current.toString());
        }
        current = *field;
        break;
      }
      case PathOp::Kind::UnnestItem:
        if (current.kind() != TypeKind::Array) {
          throw PathTypeMismatchError("[item] applied to " +
                                      current.toString());
        }
        current = current.element();
        break;
      case PathOp::Kind::UnnestKey:
        if (current.kind() != TypeKind::Map) {
          throw PathTypeMismatchError("[key] applied to " + current.toString());
        }
        current = current.keyType();
        break;
      case PathOp::Kind::UnnestValue:
        if (current.kind() != TypeKind::Map) {
          throw PathTypeMismatchError("[value] applied to " +
                                      current.toString());
        }
        current = current.valueType();
        break;
      case PathOp::Kind::Filter: {
        if (i == 0 || (ops[i - 1].kind != PathOp::Kind::UnnestItem &&
                       ops[i - 1].kind != PathOp::Kind::UnnestValue)) {
          throw PathTypeMismatchError(
              "filter must follow an unnest in a mask path");
        }
        if (current.kind() != TypeKind::Struct) {
          throw PathTypeMismatchError("filter applied to non-struct " +
                                      current.toString());
        }
        forEachPredicate(*op.filter, [&](const Condition& p) {
          if (p.isElementRef && current.findField(p.attribute) == nullptr) {
            throw PathTypeMismatchError("filter references missing field " +
                                        p.attribute);
          }
        });
        break;
      }
      case PathOp::Kind::Root:
        throw PathTypeMismatchError("root operator in relative path");
    }
  }
}

}  // namespace detail

/// Scalar masking function. When cond is false the attribute passes through
/// unchanged; when true, the value(s) addressed by the relative path are
/// masked per type: atomics and struct/whole-cell targets become NULL, array
/// elements are removed, map keys remove the pair, map values become NULL.
/// The result always has the attribute's type.
inline Value maskFieldIf(bool cond, const Value& attr,
                         const std::vector<PathOp>& relativeOps,
                         const SchemaType& attrType) {
  detail::checkRelativePath(attrType, relativeOps);
  if (!cond) {
    return attr;
  }
  return detail::applyMaskOps(attr, attrType, relativeOps, 0);
}

inline Value maskFieldIf(bool cond, const Value& attr,
                         const std::string& relativePath,
                         const SchemaType& attrType) {
  return maskFieldIf(cond, attr, FieldPath::parseRelative(relativePath),
                     attrType);
}

namespace detail {

inline std::optional<int64_t> subjectOf(const RelationSchema& schema,
                                        const Row& row) {
  if (!schema.subjectIdColumn) {
    return std::nullopt;
  }
  auto index = schema.columnIndex(*schema.subjectIdColumn);
  if (!index || (*index) >= row.size()) {
    return std::nullopt;
  }
  const Value& v = row[*index];
  if (v.kind() == Value::Kind::Int) {
    return v.intValue();
  }
  return std::nullopt;
}

}  // namespace detail

/// Execution counters, keyed per step.
struct ApplyStats {
  size_t rowsIn = 0;
  size_t rowsOut = 0;
  /// ("<column>" or "<column>.<relative path>", rows masked) per column step.
  std::vector<std::pair<std::string, size_t>> maskCounts;
};

/// Executes a compiled plan over an in-memory relation: row filters drop rows
/// whose combined predicate fails, column masks rewrite attributes. Survivor
/// order is preserved and the output schema is identical to the input's.
inline Relation applyPlan(const ViewDefinition& view, const Relation& rel,
                          int64_t accessTimeMs, const SnapshotStore* store,
                          ApplyStats* stats = nullptr) {
  if (rel.schema.name != view.relation) {
    throw SchemaMismatchError("plan compiled for " + view.relation +
                              ", got relation " + rel.schema.name);
  }
  std::vector<std::string> columnNames;
  for (const auto& [name, type] : rel.schema.columns) {
    columnNames.push_back(name);
  }
  if (columnNames != view.columns) {
    throw SchemaMismatchError("column set changed since view " +
                              view.relation + "@" + view.version.render() +
                              " was compiled");
  }
  struct RowFilterStep {
    ConditionPtr combined;  // NOT selector OR keep-condition
    bool consentBased;
  };
  struct ColumnStep {
    const MaskStep* step;
    std::vector<PathOp> relativeOps;
    const SchemaType* columnType;
  };
  std::vector<RowFilterStep> rowFilters;
  std::vector<ColumnStep> columnSteps;
  for (const auto& step : view.steps) {
    if (step.kind == MaskStep::Kind::RowFilter) {
      RowFilterStep rf;
      rf.combined = step.selector
                        ? Condition::orOf(Condition::notOf(step.selector),
                                          step.keepCondition)
                        : step.keepCondition;
      rf.consentBased = referencesConsent(*step.keepCondition);
      rowFilters.push_back(std::move(rf));
      continue;
    }
    if (step.columnIndex >= rel.schema.columns.size() ||
        rel.schema.columns[step.columnIndex].first != step.rootAttribute) {
      throw SchemaMismatchError("column " + step.rootAttribute +
                                " moved or missing");
    }
    ColumnStep cs;
    cs.step = &step;
    cs.relativeOps = FieldPath::parseRelative(step.relativePath);
    cs.columnType = &rel.schema.columns[step.columnIndex].second;
    try {
      detail::checkRelativePath(*cs.columnType, cs.relativeOps);
    } catch (const PathTypeMismatchError& e) {
      throw SchemaMismatchError(std::string("plan path no longer fits: ") +
                                e.what());
    }
    columnSteps.push_back(std::move(cs));
  }

  std::vector<size_t> maskCounts(columnSteps.size(), 0);

  Relation out{rel.schema, {}};
  for (const Row& row : rel.rows) {
    RowBindings bindings(rel.schema, row);
    ConsentContext ctx{store, detail::subjectOf(rel.schema, row),
                       accessTimeMs};

    bool keepRow = true;
    for (const RowFilterStep& rf : rowFilters) {
      if (rf.consentBased && !ctx.subjectId) {
        continue;  // rows without a subject id are not filtered by consent
      }
      if (!toBool(evalCondition3(*rf.combined, bindings, &ctx))) {
        keepRow = false;
        break;
      }
    }
    if (!keepRow) {
      continue;
    }

    // Steps apply sequentially: later selectors and subject lookups see the
    // row as already masked by earlier steps, matching fold semantics.
    Row masked = row;
    for (size_t stepIndex = 0; stepIndex < columnSteps.size(); ++stepIndex) {
      const auto& cs = columnSteps[stepIndex];
      const MaskStep& step = *cs.step;
      RowBindings currentBindings(rel.schema, masked);
      ConsentContext currentCtx{store, detail::subjectOf(rel.schema, masked),
                                accessTimeMs};
      if (step.selector &&
          !toBool(evalCondition3(*step.selector, currentBindings,
                                 &currentCtx))) {
        continue;
      }
      if (toBool(evalCondition3(*step.keepCondition, currentBindings,
                                &currentCtx))) {
        continue;
      }
      masked[step.columnIndex] = detail::applyMaskOps(
          masked[step.columnIndex], *cs.columnType, cs.relativeOps, 0);
      ++maskCounts[stepIndex];
    }
    out.rows.push_back(std::move(masked));
  }
  if (stats != nullptr) {
    stats->rowsIn = rel.rows.size();
    stats->rowsOut = out.rows.size();
    for (size_t i = 0; i < columnSteps.size(); ++i) {
      const MaskStep& step = *columnSteps[i].step;
      std::string key = step.rootAttribute;
      if (!step.relativePath.empty()) {
        key += "." + step.relativePath;
      }
      stats->maskCounts.emplace_back(std::move(key), maskCounts[i]);
    }
  }
  return out;
}

}  // namespace purview
