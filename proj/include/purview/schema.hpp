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

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "purview/errors.hpp"

namespace purview {

enum class TypeKind { Atomic, Struct, Array, Map };

/// Recursive descriptor for nested warehouse types. Immutable; copies share
/// the underlying node, so passing by value is cheap.
class SchemaType {
 public:
  static SchemaType atomicType(std::string name) {
    if (name.empty()) {
      throw ValidationError("atomic type name must be non-empty");
    }
    auto node = std::make_shared<Node>();
    node->kind = TypeKind::Atomic;
    node->atomic = std::move(name);
    return SchemaType(std::move(node));
  }

  static SchemaType structType(
      std::vector<std::pair<std::string, SchemaType>> fields) {
    std::set<std::string> seen;
    for (const auto& [name, type] : fields) {
      if (!seen.insert(name).second) {
        throw ValidationError("duplicate struct field name: " + name);
      }
    }
    auto node = std::make_shared<Node>();
    node->kind = TypeKind::Struct;
    node->fields = std::move(fields);
    return SchemaType(std::move(node));
  }

  static SchemaType arrayType(SchemaType element) {
    auto node = std::make_shared<Node>();
    node->kind = TypeKind::Array;
    node->element = std::move(element);
    return SchemaType(std::move(node));
  }

  static SchemaType mapType(SchemaType key, SchemaType value) {
    if (key.kind() != TypeKind::Atomic) {
      throw ValidationError("map key type must be atomic, got " +
                            key.toString());
    }
    auto node = std::make_shared<Node>();
    node->kind = TypeKind::Map;
    node->key = std::move(key);
    node->value = std::move(value);
    return SchemaType(std::move(node));
  }

  TypeKind kind() const { return node_->kind; }

  const std::string& atomicName() const { return node_->atomic; }

  const std::vector<std::pair<std::string, SchemaType>>& fields() const {
    return node_->fields;
  }

  const SchemaType& element() const { return *node_->element; }
  const SchemaType& keyType() const { return *node_->key; }
  const SchemaType& valueType() const { return *node_->value; }

  const SchemaType* findField(std::string_view name) const {
    for (const auto& [fieldName, type] : node_->fields) {
      if (fieldName == name) {
        return &type;
      }
    }
    return nullptr;
  }

  bool operator==(const SchemaType& other) const {
    if (node_ == other.node_) {
      return true;
    }
    if (node_->kind != other.node_->kind) {
      return false;
    }
    switch (node_->kind) {
      case TypeKind::Atomic:
        return node_->atomic == other.node_->atomic;
      case TypeKind::Struct:
        return node_->fields == other.node_->fields;
      case TypeKind::Array:
        return element() == other.element();
      case TypeKind::Map:
        return keyType() == other.keyType() && valueType() == other.valueType();
    }
    return false;
  }
  bool operator!=(const SchemaType& other) const { return !(*this == other); }

  std::string toString() const {
    switch (node_->kind) {
      case TypeKind::Atomic:
        return node_->atomic;
      case TypeKind::Struct: {
        std::string out = "STRUCT<";
        bool first = true;
        for (const auto& [name, type] : node_->fields) {
          if (!first) out += ", ";
          first = false;
          out += name + ":" + type.toString();
        }
        return out + ">";
      }
      case TypeKind::Array:
        return "ARRAY<" + element().toString() + ">";
      case TypeKind::Map:
        return "MAP<" + keyType().toString() + ", " + valueType().toString() +
               ">";
    }
    return "?";
  }

  nlohmann::ordered_json toJson() const {
    nlohmann::ordered_json j;
    switch (node_->kind) {
      case TypeKind::Atomic:
        j["kind"] = "atomic";
        j["name"] = node_->atomic;
        break;
      case TypeKind::Struct: {
        j["kind"] = "struct";
        auto arr = nlohmann::ordered_json::array();
        for (const auto& [name, type] : node_->fields) {
          arr.push_back({{"name", name}, {"type", type.toJson()}});
        }
        j["fields"] = std::move(arr);
        break;
      }
      case TypeKind::Array:
        j["kind"] = "array";
        j["element"] = element().toJson();
        break;
      case TypeKind::Map:
        j["kind"] = "map";
        j["key"] = keyType().toJson();
        j["value"] = valueType().toJson();
        break;
    }
    return j;
  }

  static SchemaType fromJson(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind")) {
      throw ValidationError("schema type must be an object with a 'kind' key");
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "atomic") {
      return atomicType(j.at("name").get<std::string>());
    }
    if (kind == "struct") {
      std::vector<std::pair<std::string, SchemaType>> fields;
      for (const auto& f : j.at("fields")) {
        fields.emplace_back(f.at("name").get<std::string>(),
                            fromJson(f.at("type")));
      }
      return structType(std::move(fields));
    }
    if (kind == "array") {
      return arrayType(fromJson(j.at("element")));
    }
    if (kind == "map") {
      return mapType(fromJson(j.at("key")), fromJson(j.at("value")));
    }
    throw ValidationError("unknown schema type kind: " + kind);
  }

 private:
  struct Node {
    TypeKind kind;
    std::string atomic;
    std::vector<std::pair<std::string, SchemaType>> fields;
    std::optional<SchemaType> element;
    std::optional<SchemaType> key;
    std::optional<SchemaType> value;
  };

  explicit SchemaType(std::shared_ptr<const Node> node)
      : node_(std::move(node)) {}

  std::shared_ptr<const Node> node_;
};

inline bool isNumericAtomic(const SchemaType& type) {
  if (type.kind() != TypeKind::Atomic) {
    return false;
  }
  const std::string& n = type.atomicName();
  return n == "BIGINT" || n == "INTEGER" || n == "INT" || n == "SMALLINT" ||
         n == "TINYINT" || n == "DOUBLE" || n == "FLOAT" || n == "REAL" ||
         n == "DECIMAL";
}

/// A named relation: ordered columns plus an optional column carrying
/// data-subject identifiers (required for consent-based masking).
struct RelationSchema {
  std::string name;
  std::vector<std::pair<std::string, SchemaType>> columns;
  std::optional<std::string> subjectIdColumn;

  RelationSchema(std::string relationName,
                 std::vector<std::pair<std::string, SchemaType>> cols,
                 std::optional<std::string> subjectCol = std::nullopt)
      : name(std::move(relationName)),
        columns(std::move(cols)),
        subjectIdColumn(std::move(subjectCol)) {
    validate();
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& [colName, type] : columns) {
      if (!seen.insert(colName).second) {
        throw ValidationError("relation " + name + ": duplicate column " +
                              colName);
      }
    }
    if (subjectIdColumn) {
      const SchemaType* col = findColumn(*subjectIdColumn);
      if (col == nullptr) {
        throw ValidationError("relation " + name + ": subject id column " +
                              *subjectIdColumn + " does not exist");
      }
      if (!isNumericAtomic(*col)) {
        throw ValidationError("relation " + name + ": subject id column " +
                              *subjectIdColumn +
                              " must be an atomic numeric type, got " +
                              col->toString());
      }
    }
  }

  const SchemaType* findColumn(std::string_view colName) const {
    for (const auto& [n, t] : columns) {
      if (n == colName) {
        return &t;
      }
    }
    return nullptr;
  }

  std::optional<size_t> columnIndex(std::string_view colName) const {
    for (size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].first == colName) {
        return i;
      }
    }
    return std::nullopt;
  }

  /// The whole-row view of the relation as a struct type. Row selectors and
  /// relation-level filters resolve against this.
  SchemaType rowType() const { return SchemaType::structType(columns); }

  bool operator==(const RelationSchema& other) const {
    return name == other.name && columns == other.columns &&
           subjectIdColumn == other.subjectIdColumn;
  }
  bool operator!=(const RelationSchema& other) const {
    return !(*this == other);
  }

  nlohmann::ordered_json toJson() const {
    nlohmann::ordered_json j;
    j["name"] = name;
    if (subjectIdColumn) {
      j["subject_id_column"] = *subjectIdColumn;
    }
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [colName, type] : columns) {
      arr.push_back({{"name", colName}, {"type", type.toJson()}});
    }
    j["columns"] = std::move(arr);
    return j;
  }

  static RelationSchema fromJson(const nlohmann::json& j) {
    std::vector<std::pair<std::string, SchemaType>> cols;
    for (const auto& c : j.at("columns")) {
      cols.emplace_back(c.at("name").get<std::string>(),
                        SchemaType::fromJson(c.at("type")));
    }
    std::optional<std::string> subject;
    if (j.contains("subject_id_column")) {
      subject = j.at("subject_id_column").get<std::string>();
    }
    return RelationSchema(j.at("name").get<std::string>(), std::move(cols),
                          std::move(subject));
  }
};

}  // namespace purview
