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

#include <charconv>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "purview/errors.hpp"

namespace purview {

/// Which class of attribute a predicate references. Policy conditions use
/// consent/accessor/system attributes declared in the attribute registry;
/// filter predicates inside field paths reference fields of the current
/// element (`@.name`) and are tagged Field at parse time.
enum class AttrClass { Consent, Accessor, System, Field, Unknown };

inline const char* toString(AttrClass c) {
  switch (c) {
    case AttrClass::Consent:
      return "consent";
    case AttrClass::Accessor:
      return "accessor";
    case AttrClass::System:
      return "system";
    case AttrClass::Field:
      return "field";
    case AttrClass::Unknown:
      return "unknown";
  }
  return "unknown";
}

inline AttrClass attrClassFromString(std::string_view s) {
  if (s == "consent") return AttrClass::Consent;
  if (s == "accessor") return AttrClass::Accessor;
  if (s == "system") return AttrClass::System;
  if (s == "field") return AttrClass::Field;
  throw ValidationError("unknown attribute class: " + std::string(s));
}

enum class CompareOp { Eq, Ne, Lt, Gt, Le, Ge, Between, In, Like, IsNull };

inline const char* toString(CompareOp op) {
  switch (op) {
    case CompareOp::Eq:
      return "=";
    case CompareOp::Ne:
      return "<>";
    case CompareOp::Lt:
      return "<";
    case CompareOp::Gt:
      return ">";
    case CompareOp::Le:
      return "<=";
    case CompareOp::Ge:
      return ">=";
    case CompareOp::Between:
      return "BETWEEN";
    case CompareOp::In:
      return "IN";
    case CompareOp::Like:
      return "LIKE";
    case CompareOp::IsNull:
      return "IS NULL";
  }
  return "?";
}

struct Literal {
  enum class Kind { Bool, Int, Double, String };

  Kind kind = Kind::Bool;
  bool boolValue = false;
  int64_t intValue = 0;
  double doubleValue = 0.0;
  std::string stringValue;

  static Literal ofBool(bool v) {
    Literal l;
    l.kind = Kind::Bool;
    l.boolValue = v;
    return l;
  }
  static Literal ofInt(int64_t v) {
    Literal l;
    l.kind = Kind::Int;
    l.intValue = v;
    return l;
  }
  static Literal ofDouble(double v) {
    Literal l;
    l.kind = Kind::Double;
    l.doubleValue = v;
    return l;
  }
  static Literal ofString(std::string v) {
    Literal l;
    l.kind = Kind::String;
    l.stringValue = std::move(v);
    return l;
  }

  bool operator==(const Literal& o) const {
    if (kind != o.kind) return false;
    switch (kind) {
      case Kind::Bool:
        return boolValue == o.boolValue;
      case Kind::Int:
        return intValue == o.intValue;
      case Kind::Double:
        return doubleValue == o.doubleValue;
      case Kind::String:
        return stringValue == o.stringValue;
    }
    return false;
  }
  bool operator!=(const Literal& o) const { return !(*this == o); }

  /// Canonical text. Doubles always carry a '.' or exponent so they re-parse
  /// as doubles; strings use single quotes with '' escaping.
  std::string render() const {
    switch (kind) {
      case Kind::Bool:
        return boolValue ? "true" : "false";
      case Kind::Int:
        return std::to_string(intValue);
      case Kind::Double: {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), doubleValue);
        std::string out(buf, ptr);
        if (out.find('.') == std::string::npos &&
            out.find('e') == std::string::npos &&
            out.find("inf") == std::string::npos &&
            out.find("nan") == std::string::npos) {
          out += ".0";
        }
        return out;
      }
      case Kind::String: {
        std::string out = "'";
        for (char c : stringValue) {
          if (c == '\'') out += "''";
          else out += c;
        }
        return out + "'";
      }
    }
    return "?";
  }
};

struct Condition;
using ConditionPtr = std::shared_ptr<const Condition>;

/// Boolean condition tree: AND/OR/NOT over simple predicates and boolean
/// constants. Immutable once built.
struct Condition {
  enum class Node { And, Or, Not, Predicate, Constant };

  Node node = Node::Constant;
  ConditionPtr left;   // And/Or/Not
  ConditionPtr right;  // And/Or

  // Predicate payload.
  std::string attribute;
  bool isElementRef = false;
  AttrClass attrClass = AttrClass::Unknown;
  CompareOp cmp = CompareOp::Eq;
  std::vector<Literal> literals;

  // Constant payload.
  bool constValue = false;

  static ConditionPtr constant(bool v) {
    auto c = std::make_shared<Condition>();
    c->node = Node::Constant;
    c->constValue = v;
    return c;
  }

  static ConditionPtr predicate(std::string attribute, CompareOp op,
                                std::vector<Literal> literals,
                                bool isElementRef = false,
                                AttrClass attrClass = AttrClass::Unknown) {
    auto c = std::make_shared<Condition>();
    c->node = Node::Predicate;
    c->attribute = std::move(attribute);
    c->cmp = op;
    c->literals = std::move(literals);
    c->isElementRef = isElementRef;
    c->attrClass = isElementRef ? AttrClass::Field : attrClass;
    return c;
  }

  static ConditionPtr andOf(ConditionPtr l, ConditionPtr r) {
    auto c = std::make_shared<Condition>();
    c->node = Node::And;
    c->left = std::move(l);
    c->right = std::move(r);
    return c;
  }

  static ConditionPtr orOf(ConditionPtr l, ConditionPtr r) {
    auto c = std::make_shared<Condition>();
    c->node = Node::Or;
    c->left = std::move(l);
    c->right = std::move(r);
    return c;
  }

  static ConditionPtr notOf(ConditionPtr inner) {
    // Fold constants so MASK-action normalization yields clean plans.
    if (inner->node == Node::Constant) {
      return constant(!inner->constValue);
    }
    auto c = std::make_shared<Condition>();
    c->node = Node::Not;
    c->left = std::move(inner);
    return c;
  }
};

inline bool conditionEqual(const Condition& a, const Condition& b) {
  if (a.node != b.node) return false;
  switch (a.node) {
    case Condition::Node::And:
    case Condition::Node::Or:
      return conditionEqual(*a.left, *b.left) &&
             conditionEqual(*a.right, *b.right);
    case Condition::Node::Not:
      return conditionEqual(*a.left, *b.left);
    case Condition::Node::Constant:
      return a.constValue == b.constValue;
    case Condition::Node::Predicate:
      return a.attribute == b.attribute && a.isElementRef == b.isElementRef &&
             a.cmp == b.cmp && a.literals == b.literals;
  }
  return false;
}

inline bool conditionEqual(const ConditionPtr& a, const ConditionPtr& b) {
  if (!a || !b) return !a && !b;
  return conditionEqual(*a, *b);
}

namespace detail {

inline std::string renderConditionImpl(const Condition& c) {
  auto wrap = [](const Condition& child) {
    std::string inner = renderConditionImpl(child);
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
      return c.constValue ? "true" : "false";
    case Condition::Node::Predicate: {
      std::string attr =
          (c.isElementRef ? "@." : std::string()) + c.attribute;
      switch (c.cmp) {
        case CompareOp::IsNull:
          return attr + " IS NULL";
        case CompareOp::Between:
          return attr + " BETWEEN " + c.literals[0].render() + " AND " +
                 c.literals[1].render();
        case CompareOp::In: {
          std::string out = attr + " IN (";
          for (size_t i = 0; i < c.literals.size(); ++i) {
            if (i > 0) out += ", ";
            out += c.literals[i].render();
          }
          return out + ")";
        }
        default:
          return attr + " " + toString(c.cmp) + " " + c.literals[0].render();
      }
    }
  }
  return "?";
}

}  // namespace detail

/// Canonical text; parseCondition(renderCondition(c)) reproduces c exactly.
inline std::string renderCondition(const Condition& c) {
  return detail::renderConditionImpl(c);
}
inline std::string renderCondition(const ConditionPtr& c) {
  return detail::renderConditionImpl(*c);
}

namespace detail {

/// Recursive-descent parser over the condition grammar. Precedence
/// NOT > AND > OR; parentheses allowed; keywords case-insensitive.
class ConditionParser {
 public:
  ConditionParser(std::string_view text, bool elementContext)
      : text_(text), elementContext_(elementContext) {}

  ConditionPtr parse() {
    skipWs();
    if (pos_ >= text_.size()) {
      throw SyntaxError("empty condition", pos_, "expression");
    }
    ConditionPtr c = parseOr();
    skipWs();
    if (pos_ != text_.size()) {
      throw SyntaxError("trailing input after condition", pos_, "end of input");
    }
    return c;
  }

 private:
  ConditionPtr parseOr() {
    ConditionPtr left = parseAnd();
    while (true) {
      skipWs();
      if (!matchKeyword("OR")) {
        return left;
      }
      left = Condition::orOf(std::move(left), parseAnd());
    }
  }

  ConditionPtr parseAnd() {
    ConditionPtr left = parseNot();
    while (true) {
      skipWs();
      if (!matchKeyword("AND")) {
        return left;
      }
      left = Condition::andOf(std::move(left), parseNot());
    }
  }

  ConditionPtr parseNot() {
    skipWs();
    if (matchKeyword("NOT")) {
      return Condition::notOf(parseNot());
    }
    return parsePrimary();
  }

  ConditionPtr parsePrimary() {
    skipWs();
    if (pos_ >= text_.size()) {
      throw SyntaxError("unexpected end of condition", pos_, "expression");
    }
    if (text_[pos_] == '(') {
      ++pos_;
      ConditionPtr inner = parseOr();
      skipWs();
      expect(')');
      return inner;
    }
    if (matchKeyword("TRUE")) {
      return Condition::constant(true);
    }
    if (matchKeyword("FALSE")) {
      return Condition::constant(false);
    }
    return parsePredicate();
  }

  ConditionPtr parsePredicate() {
    bool elementRef = false;
    size_t attrPos = pos_;
    if (text_[pos_] == '@') {
      if (!elementContext_) {
        throw SyntaxError("'@.' references are only valid inside filters",
                          pos_, "attribute name");
      }
      ++pos_;
      expect('.');
      elementRef = true;
    }
    std::string attr = parseIdentifier();
    if (!elementContext_ && attr.empty()) {
      throw SyntaxError("expected attribute name", attrPos, "identifier");
    }
    if (elementContext_ && !elementRef) {
      throw SyntaxError("filter attributes must use the '@.' prefix", attrPos,
                        "'@.'");
    }
    skipWs();

    if (matchKeyword("IS")) {
      skipWs();
      if (!matchKeyword("NULL")) {
        throw SyntaxError("expected NULL after IS", pos_, "NULL");
      }
      return Condition::predicate(std::move(attr), CompareOp::IsNull, {},
                                  elementRef);
    }
    if (matchKeyword("BETWEEN")) {
      Literal lo = parseLiteral();
      skipWs();
      if (!matchKeyword("AND")) {
        throw SyntaxError("expected AND inside BETWEEN", pos_, "AND");
      }
      Literal hi = parseLiteral();
      return Condition::predicate(std::move(attr), CompareOp::Between,
                                  {std::move(lo), std::move(hi)}, elementRef);
    }
    if (matchKeyword("IN")) {
      skipWs();
      expect('(');
      std::vector<Literal> items;
      while (true) {
        items.push_back(parseLiteral());
        skipWs();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        break;
      }
      expect(')');
      if (items.empty()) {
        throw SyntaxError("IN list must be non-empty", pos_, "literal");
      }
      return Condition::predicate(std::move(attr), CompareOp::In,
                                  std::move(items), elementRef);
    }
    if (matchKeyword("LIKE")) {
      Literal pattern = parseLiteral();
      return Condition::predicate(std::move(attr), CompareOp::Like,
                                  {std::move(pattern)}, elementRef);
    }

    CompareOp op;
    if (matchToken("<>") || matchToken("!=")) {
      op = CompareOp::Ne;
    } else if (matchToken("<=")) {
      op = CompareOp::Le;
    } else if (matchToken(">=")) {
      op = CompareOp::Ge;
    } else if (matchToken("=")) {
      op = CompareOp::Eq;
    } else if (matchToken("<")) {
      op = CompareOp::Lt;
    } else if (matchToken(">")) {
      op = CompareOp::Gt;
    } else {
      // Bare identifier is sugar for `= true`.
      return Condition::predicate(std::move(attr), CompareOp::Eq,
                                  {Literal::ofBool(true)}, elementRef);
    }
    Literal rhs = parseLiteral();
    return Condition::predicate(std::move(attr), op, {std::move(rhs)},
                                elementRef);
  }

  Literal parseLiteral() {
    skipWs();
    if (pos_ >= text_.size()) {
      throw SyntaxError("expected literal", pos_, "literal");
    }
    char c = text_[pos_];
    if (c == '\'') {
      return Literal::ofString(parseQuotedString());
    }
    if (matchKeyword("TRUE")) {
      return Literal::ofBool(true);
    }
    if (matchKeyword("FALSE")) {
      return Literal::ofBool(false);
    }
    if (c == '-' || (c >= '0' && c <= '9')) {
      return parseNumber();
    }
    throw SyntaxError("expected literal", pos_, "string, number, or boolean");
  }

  Literal parseNumber() {
    size_t start = pos_;
    if (pos_ < text_.size() && text_[pos_] == '-') ++pos_;
    bool isDouble = false;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c >= '0' && c <= '9') {
        ++pos_;
      } else if (c == '.' || c == 'e' || c == 'E') {
        isDouble = true;
        ++pos_;
        if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-') &&
            (c == 'e' || c == 'E')) {
          ++pos_;
        }
      } else {
        break;
      }
    }
    std::string_view token = text_.substr(start, pos_ - start);
    if (token.empty() || token == "-") {
      throw SyntaxError("malformed number", start, "digits");
    }
    if (isDouble) {
      double v = 0.0;
      auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || p != token.data() + token.size()) {
        throw SyntaxError("malformed number: " + std::string(token), start,
                          "number");
      }
      return Literal::ofDouble(v);
    }
    int64_t v = 0;
    auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || p != token.data() + token.size()) {
      throw SyntaxError("malformed integer: " + std::string(token), start,
                        "integer");
    }
    return Literal::ofInt(v);
  }

  std::string parseQuotedString() {
    expect('\'');
    std::string out;
    while (true) {
      if (pos_ >= text_.size()) {
        throw SyntaxError("unterminated string literal", pos_, "'");
      }
      char c = text_[pos_++];
      if (c == '\'') {
        if (pos_ < text_.size() && text_[pos_] == '\'') {
          out += '\'';
          ++pos_;
          continue;
        }
        return out;
      }
      out += c;
    }
  }

  std::string parseIdentifier() {
    skipWs();
    size_t start = pos_;
    if (pos_ >= text_.size() || !isIdentStart(text_[pos_])) {
      throw SyntaxError("expected identifier", pos_, "identifier");
    }
    ++pos_;
    while (pos_ < text_.size() && isIdentChar(text_[pos_])) {
      ++pos_;
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  static bool isIdentStart(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  }
  static bool isIdentChar(char c) {
    return isIdentStart(c) || (c >= '0' && c <= '9');
  }

  /// Matches a keyword case-insensitively, requiring a word boundary after it.
  bool matchKeyword(std::string_view kw) {
    skipWs();
    if (pos_ + kw.size() > text_.size()) {
      return false;
    }
    for (size_t i = 0; i < kw.size(); ++i) {
      char a = text_[pos_ + i];
      char b = kw[i];
      if (a >= 'a' && a <= 'z') a = static_cast<char>(a - 'a' + 'A');
      if (a != b) return false;
    }
    size_t end = pos_ + kw.size();
    if (end < text_.size() && isIdentChar(text_[end])) {
      return false;
    }
    pos_ = end;
    return true;
  }

  bool matchToken(std::string_view tok) {
    skipWs();
    if (text_.substr(pos_, tok.size()) != tok) {
      return false;
    }
    pos_ += tok.size();
    return true;
  }

  void expect(char c) {
    skipWs();
    if (pos_ >= text_.size() || text_[pos_] != c) {
      throw SyntaxError("unexpected input", pos_, std::string(1, c));
    }
    ++pos_;
  }

  void skipWs() {
    while (pos_ < text_.size() &&
           (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
            text_[pos_] == '\r')) {
      ++pos_;
    }
  }

  std::string_view text_;
  bool elementContext_;
  size_t pos_ = 0;
};

}  // namespace detail

/// Parses a policy condition (bare attribute names).
inline ConditionPtr parseCondition(std::string_view text) {
  return detail::ConditionParser(text, /*elementContext=*/false).parse();
}

/// Parses a filter condition (`@.name` attribute references).
inline ConditionPtr parseFilterCondition(std::string_view text) {
  return detail::ConditionParser(text, /*elementContext=*/true).parse();
}

/// Declares the class of each policy attribute; conditions are tagged against
/// it on catalog load. Not inferred from usage.
struct AttributeRegistry {
  std::map<std::string, AttrClass> classes;

  AttrClass classOf(const std::string& name) const {
    auto it = classes.find(name);
    if (it == classes.end()) {
      throw ValidationError("attribute '" + name +
                            "' is not declared in the attribute registry");
    }
    return it->second;
  }
};

/// Returns a copy of `cond` with every bare attribute tagged from the
/// registry. Unregistered attributes are a validation error.
inline ConditionPtr tagAttributeClasses(const ConditionPtr& cond,
                                        const AttributeRegistry& registry) {
  switch (cond->node) {
    case Condition::Node::And:
      return Condition::andOf(tagAttributeClasses(cond->left, registry),
                              tagAttributeClasses(cond->right, registry));
    case Condition::Node::Or:
      return Condition::orOf(tagAttributeClasses(cond->left, registry),
                             tagAttributeClasses(cond->right, registry));
    case Condition::Node::Not:
      return Condition::notOf(tagAttributeClasses(cond->left, registry));
    case Condition::Node::Constant:
      return cond;
    case Condition::Node::Predicate: {
      if (cond->isElementRef) {
        return cond;
      }
      auto tagged = std::make_shared<Condition>(*cond);
      tagged->attrClass = registry.classOf(cond->attribute);
      return tagged;
    }
  }
  return cond;
}

template <typename Fn>
void forEachPredicate(const Condition& cond, Fn&& fn) {
  switch (cond.node) {
    case Condition::Node::And:
    case Condition::Node::Or:
      forEachPredicate(*cond.left, fn);
      forEachPredicate(*cond.right, fn);
      return;
    case Condition::Node::Not:
      forEachPredicate(*cond.left, fn);
      return;
    case Condition::Node::Predicate:
      fn(cond);
      return;
    case Condition::Node::Constant:
      return;
  }
}

/// Names of consent-class attributes referenced anywhere in the condition.
inline std::set<std::string> consentAttributes(const Condition& cond) {
  std::set<std::string> out;
  forEachPredicate(cond, [&](const Condition& p) {
    if (p.attrClass == AttrClass::Consent) {
      out.insert(p.attribute);
    }
  });
  return out;
}

inline bool referencesConsent(const Condition& cond) {
  bool found = false;
  forEachPredicate(cond, [&](const Condition& p) {
    if (p.attrClass == AttrClass::Consent) {
      found = true;
    }
  });
  return found;
}

/// If the condition is a pure conjunction of positive consent tests
/// (`c`, `c = true`, constant true), returns the consent set; otherwise
/// nullopt. This is the comparable form the pruning algorithm reasons over
/// and the form that collapses to a single HAS_USER_CONSENT call.
inline std::optional<std::set<std::string>> consentConjunction(
    const Condition& cond) {
  switch (cond.node) {
    case Condition::Node::And: {
      auto l = consentConjunction(*cond.left);
      auto r = consentConjunction(*cond.right);
      if (!l || !r) return std::nullopt;
      l->insert(r->begin(), r->end());
      return l;
    }
    case Condition::Node::Constant:
      if (cond.constValue) {
        return std::set<std::string>{};
      }
      return std::nullopt;
    case Condition::Node::Predicate:
      if (cond.attrClass == AttrClass::Consent && cond.cmp == CompareOp::Eq &&
          cond.literals.size() == 1 &&
          cond.literals[0].kind == Literal::Kind::Bool &&
          cond.literals[0].boolValue) {
        return std::set<std::string>{cond.attribute};
      }
      return std::nullopt;
    case Condition::Node::Or:
    case Condition::Node::Not:
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace purview
