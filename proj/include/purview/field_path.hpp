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
#include <string_view>
#include <vector>

#include "purview/condition.hpp"
#include "purview/errors.hpp"
#include "purview/schema.hpp"

namespace purview {

/// One operator of a field path: the root `$`, a sub-attribute dereference,
/// a filter `[?(cond)]`, or a collection unnest `[item]`/`[key]`/`[value]`.
struct PathOp {
  enum class Kind { Root, Deref, UnnestItem, UnnestKey, UnnestValue, Filter };

  Kind kind = Kind::Root;
  std::string name;      // Deref
  ConditionPtr filter;   // Filter

  static PathOp root() { return PathOp{Kind::Root, {}, nullptr}; }
  static PathOp deref(std::string fieldName) {
    return PathOp{Kind::Deref, std::move(fieldName), nullptr};
  }
  static PathOp unnestItem() { return PathOp{Kind::UnnestItem, {}, nullptr}; }
  static PathOp unnestKey() { return PathOp{Kind::UnnestKey, {}, nullptr}; }
  static PathOp unnestValue() { return PathOp{Kind::UnnestValue, {}, nullptr}; }
  static PathOp filterOp(ConditionPtr cond) {
    return PathOp{Kind::Filter, {}, std::move(cond)};
  }

  std::string render() const {
    switch (kind) {
      case Kind::Root:
        return "$";
      case Kind::Deref:
        return name;
      case Kind::UnnestItem:
        return "[item]";
      case Kind::UnnestKey:
        return "[key]";
      case Kind::UnnestValue:
        return "[value]";
      case Kind::Filter:
        return "[?(" + renderCondition(filter) + ")]";
    }
    return "?";
  }

  bool operator==(const PathOp& o) const {
    if (kind != o.kind || name != o.name) return false;
    if (kind == Kind::Filter) return conditionEqual(filter, o.filter);
    return true;
  }
  bool operator!=(const PathOp& o) const { return !(*this == o); }
};

namespace detail {

/// Structural rules beyond tokenization: ROOT first and only first; a filter
/// may follow only the root or an unnest (a filter directly after a
/// dereference is rejected).
inline void validatePathStructure(const std::vector<PathOp>& ops) {
  if (ops.empty() || ops.front().kind != PathOp::Kind::Root) {
    throw SyntaxError("field path must start with $", 0, "$");
  }
  for (size_t i = 1; i < ops.size(); ++i) {
    if (ops[i].kind == PathOp::Kind::Root) {
      throw SyntaxError("$ may only appear first", i, "transform operator");
    }
    if (ops[i].kind == PathOp::Kind::Filter) {
      PathOp::Kind prev = ops[i - 1].kind;
      if (prev != PathOp::Kind::Root && prev != PathOp::Kind::UnnestItem &&
          prev != PathOp::Kind::UnnestKey && prev != PathOp::Kind::UnnestValue) {
        throw SyntaxError("a filter may only follow $ or an unnest operator", i,
                          "dereference or unnest");
      }
    }
  }
}

inline bool isIdentStart(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
inline bool isIdentChar(char c) {
  return isIdentStart(c) || (c >= '0' && c <= '9');
}

/// Parses the operators following a `.` separator. Returns ops without a
/// leading root so the same scanner serves full and relative paths.
inline std::vector<PathOp> parseTransformOps(std::string_view text,
                                             size_t baseOffset) {
  std::vector<PathOp> ops;
  size_t pos = 0;
  auto skipWs = [&] {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  };
  bool expectOp = true;
  while (true) {
    skipWs();
    if (pos >= text.size()) {
      if (expectOp) {
        throw SyntaxError("dangling '.' at end of field path",
                          baseOffset + pos, "operator");
      }
      break;
    }
    if (!expectOp) {
      if (text[pos] != '.') {
        throw SyntaxError("expected '.' between operators", baseOffset + pos,
                          ".");
      }
      ++pos;
      expectOp = true;
      continue;
    }
    if (text[pos] == '[') {
      size_t opStart = pos;
      ++pos;
      skipWs();
      if (pos < text.size() && text[pos] == '?') {
        ++pos;
        skipWs();
        if (pos >= text.size() || text[pos] != '(') {
          throw SyntaxError("expected '(' after '[?'", baseOffset + pos, "(");
        }
        ++pos;
        // Scan to the matching ')', skipping string literals.
        size_t condStart = pos;
        int depth = 1;
        while (pos < text.size() && depth > 0) {
          char c = text[pos];
          if (c == '\'') {
            ++pos;
            while (pos < text.size()) {
              if (text[pos] == '\'') {
                if (pos + 1 < text.size() && text[pos + 1] == '\'') {
                  pos += 2;
                  continue;
                }
                ++pos;
                break;
              }
              ++pos;
            }
            continue;
          }
          if (c == '(') ++depth;
          if (c == ')') --depth;
          ++pos;
        }
        if (depth != 0) {
          throw SyntaxError("unterminated filter condition",
                            baseOffset + condStart, ")");
        }
        std::string_view condText = text.substr(condStart, pos - condStart - 1);
        skipWs();
        if (pos >= text.size() || text[pos] != ']') {
          throw SyntaxError("expected ']' closing filter", baseOffset + pos,
                            "]");
        }
        ++pos;
        ConditionPtr cond;
        try {
          cond = parseFilterCondition(condText);
        } catch (const SyntaxError& e) {
          throw SyntaxError("invalid filter condition: " +
                                std::string(e.what()),
                            baseOffset + condStart + e.position(),
                            e.expected());
        }
        ops.push_back(PathOp::filterOp(std::move(cond)));
      } else {
        size_t kwStart = pos;
        while (pos < text.size() && text[pos] != ']') ++pos;
        if (pos >= text.size()) {
          throw SyntaxError("unterminated unnest operator",
                            baseOffset + opStart, "]");
        }
        std::string kw(text.substr(kwStart, pos - kwStart));
        ++pos;
        if (kw == "item") {
          ops.push_back(PathOp::unnestItem());
        } else if (kw == "key") {
          ops.push_back(PathOp::unnestKey());
        } else if (kw == "value") {
          ops.push_back(PathOp::unnestValue());
        } else {
          throw SyntaxError("unknown unnest keyword '" + kw + "'",
                            baseOffset + kwStart, "item, key, or value");
        }
      }
    } else if (isIdentStart(text[pos])) {
      size_t start = pos;
      while (pos < text.size() && isIdentChar(text[pos])) ++pos;
      ops.push_back(PathOp::deref(std::string(text.substr(start, pos - start))));
    } else {
      throw SyntaxError("unexpected character in field path",
                        baseOffset + pos, "operator");
    }
    expectOp = false;
  }
  return ops;
}

}  // namespace detail

/// An operator sequence addressing rows, columns, cells, or sub-cell
/// elements. Always begins with the root operator.
class FieldPath {
 public:
  explicit FieldPath(std::vector<PathOp> ops) : ops_(std::move(ops)) {
    detail::validatePathStructure(ops_);
  }

  static FieldPath parse(std::string_view text) {
    size_t pos = 0;
    auto skipWs = [&] {
      while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    };
    skipWs();
    if (pos >= text.size() || text[pos] != '$') {
      throw SyntaxError("field path must start with $", pos, "$");
    }
    ++pos;
    skipWs();
    std::vector<PathOp> ops;
    ops.push_back(PathOp::root());
    if (pos < text.size()) {
      if (text[pos] != '.') {
        throw SyntaxError("expected '.' after $", pos, ".");
      }
      ++pos;
      auto rest = detail::parseTransformOps(text.substr(pos), pos);
      ops.insert(ops.end(), rest.begin(), rest.end());
    }
    return FieldPath(std::move(ops));
  }

  /// Parses a path relative to some attribute, e.g. "[item].[?(@.f='x')]" or
  /// "field21". Empty text addresses the attribute itself.
  static std::vector<PathOp> parseRelative(std::string_view text) {
    if (text.empty()) {
      return {};
    }
    return detail::parseTransformOps(text, 0);
  }

  const std::vector<PathOp>& ops() const { return ops_; }

  std::string render() const {
    std::string out = "$";
    for (size_t i = 1; i < ops_.size(); ++i) {
      out += "." + ops_[i].render();
    }
    return out;
  }

  static std::string renderRelative(const std::vector<PathOp>& ops) {
    std::string out;
    for (size_t i = 0; i < ops.size(); ++i) {
      if (i > 0) out += ".";
      out += ops[i].render();
    }
    return out;
  }

  /// True for `$` and `$.[?(pred)]`: paths that address whole rows.
  bool isRowPath() const {
    if (ops_.size() == 1) return true;
    return ops_.size() == 2 && ops_[1].kind == PathOp::Kind::Filter;
  }

  bool containsDeref() const {
    for (const auto& op : ops_) {
      if (op.kind == PathOp::Kind::Deref) return true;
    }
    return false;
  }

  bool operator==(const FieldPath& o) const { return ops_ == o.ops_; }
  bool operator!=(const FieldPath& o) const { return !(*this == o); }
  bool operator<(const FieldPath& o) const { return render() < o.render(); }

 private:
  std::vector<PathOp> ops_;
};

/// A path resolved against a schema: the type it addresses and the top-level
/// column it enters (absent for whole-row paths).
struct PathBinding {
  FieldPath path;
  SchemaType resolvedType;
  std::optional<std::string> rootAttribute;
};

namespace detail {

inline void checkFilterAttributes(const Condition& cond,
                                  const SchemaType& level,
                                  const std::string& opText) {
  forEachPredicate(cond, [&](const Condition& p) {
    if (!p.isElementRef) {
      return;
    }
    if (level.kind() != TypeKind::Struct) {
      throw ResolutionError("filter " + opText +
                            " requires a struct-like level, applied to " +
                            level.toString());
    }
    const SchemaType* attr = level.findField(p.attribute);
    if (attr == nullptr) {
      throw ResolutionError("filter " + opText + " references attribute '" +
                            p.attribute + "' absent from " + level.toString());
    }
    if (p.cmp != CompareOp::IsNull && attr->kind() != TypeKind::Atomic) {
      throw ResolutionError("filter " + opText + " compares non-atomic '" +
                            p.attribute + "' of type " + attr->toString());
    }
  });
}

}  // namespace detail

/// Walks the schema with the path's operators, checking each is applicable to
/// the type it meets, and returns the addressed element's type.
inline PathBinding resolvePath(const RelationSchema& schema,
                               const FieldPath& path) {
  SchemaType current = schema.rowType();
  bool atRelationLevel = true;
  std::optional<std::string> rootAttribute;

  const auto& ops = path.ops();
  for (size_t i = 1; i < ops.size(); ++i) {
    const PathOp& op = ops[i];
    const std::string opText = op.render();
    switch (op.kind) {
      case PathOp::Kind::Root:
        throw ResolutionError("root operator may only appear first");
      case PathOp::Kind::Deref: {
        if (current.kind() != TypeKind::Struct) {
          throw ResolutionError("dereference ." + op.name + " applied to " +
                                current.toString());
        }
        const SchemaType* field = current.findField(op.name);
        if (field == nullptr) {
          throw ResolutionError(
              "dereference ." + op.name + " names no " +
              (atRelationLevel ? "column of relation " + schema.name
                               : "field of " + current.toString()));
        }
        if (atRelationLevel) {
          rootAttribute = op.name;
          atRelationLevel = false;
        }
        current = *field;
        break;
      }
      case PathOp::Kind::UnnestItem:
        if (current.kind() != TypeKind::Array) {
          throw ResolutionError("[item] applied to non-array " +
                                current.toString());
        }
        atRelationLevel = false;
        current = current.element();
        break;
      case PathOp::Kind::UnnestKey:
        if (current.kind() != TypeKind::Map) {
          throw ResolutionError("[key] applied to non-map " +
                                current.toString());
        }
        atRelationLevel = false;
        current = current.keyType();
        break;
      case PathOp::Kind::UnnestValue:
        if (current.kind() != TypeKind::Map) {
          throw ResolutionError("[value] applied to non-map " +
                                current.toString());
        }
        atRelationLevel = false;
        current = current.valueType();
        break;
      case PathOp::Kind::Filter:
        detail::checkFilterAttributes(*op.filter, current, opText);
        break;
    }
  }
  return PathBinding{path, current, rootAttribute};
}

}  // namespace purview
