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

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "purview/errors.hpp"
#include "purview/schema.hpp"

namespace purview {

/// A nested runtime value. Shape is checked against a SchemaType on
/// ingestion; NULL is allowed anywhere.
class Value {
 public:
  enum class Kind { Null, Bool, Int, Double, String, Struct, Array, Map };

  using StructFields = std::vector<std::pair<std::string, Value>>;
  using ArrayItems = std::vector<Value>;
  using MapEntries = std::vector<std::pair<Value, Value>>;

  Value() : data_(std::monostate{}) {}

  static Value null() { return Value(); }
  static Value ofBool(bool v) { return Value(Data(v)); }
  static Value ofInt(int64_t v) { return Value(Data(v)); }
  static Value ofDouble(double v) { return Value(Data(v)); }
  static Value ofString(std::string v) { return Value(Data(std::move(v))); }
  static Value structOf(StructFields fields) {
    return Value(Data(std::move(fields)));
  }
  static Value arrayOf(ArrayItems items) { return Value(Data(std::move(items))); }
  static Value mapOf(MapEntries entries) {
    return Value(Data(std::move(entries)));
  }

  Kind kind() const { return static_cast<Kind>(data_.index()); }
  bool isNull() const { return kind() == Kind::Null; }

  bool boolValue() const { return std::get<bool>(data_); }
  int64_t intValue() const { return std::get<int64_t>(data_); }
  double doubleValue() const { return std::get<double>(data_); }
  const std::string& stringValue() const { return std::get<std::string>(data_); }
  const StructFields& structFields() const {
    return std::get<StructFields>(data_);
  }
  const ArrayItems& arrayItems() const { return std::get<ArrayItems>(data_); }
  const MapEntries& mapEntries() const { return std::get<MapEntries>(data_); }

  const Value* findField(std::string_view name) const {
    if (kind() != Kind::Struct) return nullptr;
    for (const auto& [fieldName, value] : structFields()) {
      if (fieldName == name) return &value;
    }
    return nullptr;
  }

  bool operator==(const Value& o) const { return data_ == o.data_; }
  bool operator!=(const Value& o) const { return !(*this == o); }

 private:
  using Data = std::variant<std::monostate, bool, int64_t, double, std::string,
                            StructFields, ArrayItems, MapEntries>;
  explicit Value(Data d) : data_(std::move(d)) {}
  Data data_;
};

using Row = std::vector<Value>;

namespace detail {

inline bool atomicMatches(const Value& v, const SchemaType& type) {
  const std::string& n = type.atomicName();
  switch (v.kind()) {
    case Value::Kind::Bool:
      return n == "BOOLEAN";
    case Value::Kind::Int:
      return n == "BIGINT" || n == "INTEGER" || n == "INT" || n == "SMALLINT" ||
             n == "TINYINT" || n == "TIMESTAMP";
    case Value::Kind::Double:
      return n == "DOUBLE" || n == "FLOAT" || n == "REAL" || n == "DECIMAL";
    case Value::Kind::String:
      return n == "VARCHAR" || n == "CHAR" || n == "STRING";
    default:
      return false;
  }
}

}  // namespace detail

/// Shape check: NULL conforms to every type; collections are checked
/// element-wise.
inline bool conformsTo(const Value& v, const SchemaType& type,
                       std::string* error = nullptr) {
  if (v.isNull()) {
    return true;
  }
  auto fail = [&](const std::string& msg) {
    if (error != nullptr) *error = msg;
    return false;
  };
  switch (type.kind()) {
    case TypeKind::Atomic:
      if (!detail::atomicMatches(v, type)) {
        return fail("value does not match atomic type " + type.toString());
      }
      return true;
    case TypeKind::Struct: {
      if (v.kind() != Value::Kind::Struct) {
        return fail("expected struct value for " + type.toString());
      }
      const auto& fields = v.structFields();
      const auto& schemaFields = type.fields();
      if (fields.size() != schemaFields.size()) {
        return fail("struct arity mismatch for " + type.toString());
      }
      for (size_t i = 0; i < fields.size(); ++i) {
        if (fields[i].first != schemaFields[i].first) {
          return fail("struct field order mismatch: " + fields[i].first +
                      " vs " + schemaFields[i].first);
        }
        if (!conformsTo(fields[i].second, schemaFields[i].second, error)) {
          return false;
        }
      }
      return true;
    }
    case TypeKind::Array: {
      if (v.kind() != Value::Kind::Array) {
        return fail("expected array value for " + type.toString());
      }
      for (const auto& item : v.arrayItems()) {
        if (!conformsTo(item, type.element(), error)) return false;
      }
      return true;
    }
    case TypeKind::Map: {
      if (v.kind() != Value::Kind::Map) {
        return fail("expected map value for " + type.toString());
      }
      for (const auto& [key, value] : v.mapEntries()) {
        if (key.isNull()) {
          return fail("map key may not be NULL");
        }
        if (!conformsTo(key, type.keyType(), error)) return false;
        if (!conformsTo(value, type.valueType(), error)) return false;
      }
      return true;
    }
  }
  return false;
}

/// Canonical text for a map key, used as the JSON object key.
inline std::string renderMapKey(const Value& key) {
  switch (key.kind()) {
    case Value::Kind::String:
      return key.stringValue();
    case Value::Kind::Int:
      return std::to_string(key.intValue());
    case Value::Kind::Bool:
      return key.boolValue() ? "true" : "false";
    case Value::Kind::Double: {
      Literal l = Literal::ofDouble(key.doubleValue());
      return l.render();
    }
    default:
      throw ValidationError("unsupported map key kind");
  }
}

inline Value parseMapKey(const std::string& text, const SchemaType& keyType) {
  const std::string& n = keyType.atomicName();
  if (n == "VARCHAR" || n == "CHAR" || n == "STRING") {
    return Value::ofString(text);
  }
  if (n == "BOOLEAN") {
    return Value::ofBool(text == "true");
  }
  if (n == "DOUBLE" || n == "FLOAT" || n == "REAL" || n == "DECIMAL") {
    return Value::ofDouble(std::stod(text));
  }
  return Value::ofInt(std::stoll(text));
}

inline nlohmann::ordered_json valueToJson(const Value& v,
                                          const SchemaType& type) {
  if (v.isNull()) {
    return nullptr;
  }
  switch (type.kind()) {
    case TypeKind::Atomic:
      switch (v.kind()) {
        case Value::Kind::Bool:
          return v.boolValue();
        case Value::Kind::Int:
          return v.intValue();
        case Value::Kind::Double:
          return v.doubleValue();
        case Value::Kind::String:
          return v.stringValue();
        default:
          throw ValidationError("value/type mismatch encoding atomic");
      }
    case TypeKind::Struct: {
      nlohmann::ordered_json obj = nlohmann::ordered_json::object();
      const auto& schemaFields = type.fields();
      const auto& fields = v.structFields();
      for (size_t i = 0; i < fields.size(); ++i) {
        obj[fields[i].first] = valueToJson(fields[i].second,
                                           schemaFields[i].second);
      }
      return obj;
    }
    case TypeKind::Array: {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& item : v.arrayItems()) {
        arr.push_back(valueToJson(item, type.element()));
      }
      return arr;
    }
    case TypeKind::Map: {
      nlohmann::ordered_json obj = nlohmann::ordered_json::object();
      for (const auto& [key, value] : v.mapEntries()) {
        obj[renderMapKey(key)] = valueToJson(value, type.valueType());
      }
      return obj;
    }
  }
  return nullptr;
}

inline Value valueFromJson(const nlohmann::json& j, const SchemaType& type) {
  if (j.is_null()) {
    return Value::null();
  }
  switch (type.kind()) {
    case TypeKind::Atomic: {
      const std::string& n = type.atomicName();
      if (n == "BOOLEAN") {
        if (!j.is_boolean()) throw ValidationError("expected boolean");
        return Value::ofBool(j.get<bool>());
      }
      if (n == "DOUBLE" || n == "FLOAT" || n == "REAL" || n == "DECIMAL") {
        if (!j.is_number()) throw ValidationError("expected number");
        return Value::ofDouble(j.get<double>());
      }
      if (n == "VARCHAR" || n == "CHAR" || n == "STRING") {
        if (!j.is_string()) throw ValidationError("expected string");
        return Value::ofString(j.get<std::string>());
      }
      // Integer-backed types, including TIMESTAMP as epoch millis.
      if (!j.is_number_integer()) {
        throw ValidationError("expected integer for " + n);
      }
      return Value::ofInt(j.get<int64_t>());
    }
    case TypeKind::Struct: {
      if (!j.is_object()) throw ValidationError("expected object for struct");
      Value::StructFields fields;
      for (const auto& [name, fieldType] : type.fields()) {
        if (!j.contains(name)) {
          fields.emplace_back(name, Value::null());
        } else {
          fields.emplace_back(name, valueFromJson(j.at(name), fieldType));
        }
      }
      return Value::structOf(std::move(fields));
    }
    case TypeKind::Array: {
      if (!j.is_array()) throw ValidationError("expected array");
      Value::ArrayItems items;
      for (const auto& item : j) {
        items.push_back(valueFromJson(item, type.element()));
      }
      return Value::arrayOf(std::move(items));
    }
    case TypeKind::Map: {
      if (!j.is_object()) throw ValidationError("expected object for map");
      Value::MapEntries entries;
      for (const auto& [key, value] : j.items()) {
        entries.emplace_back(parseMapKey(key, type.keyType()),
                             valueFromJson(value, type.valueType()));
      }
      return Value::mapOf(std::move(entries));
    }
  }
  return Value::null();
}

/// A schema plus its rows. Rows are positional per the schema's column order.
struct Relation {
  RelationSchema schema;
  std::vector<Row> rows;

  bool operator==(const Relation& o) const {
    return schema == o.schema && rows == o.rows;
  }
  bool operator!=(const Relation& o) const { return !(*this == o); }
};

/// Reads JSON-lines rows (one object per line) against the schema. Shape is
/// validated; malformed rows raise ValidationError with the line number.
inline Relation readRelation(std::istream& in, const RelationSchema& schema) {
  Relation rel{schema, {}};
  std::string line;
  size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(lineNo) +
                            ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) {
      throw ValidationError("line " + std::to_string(lineNo) +
                            ": row must be a JSON object");
    }
    Row row;
    for (const auto& [name, type] : schema.columns) {
      try {
        row.push_back(j.contains(name) ? valueFromJson(j.at(name), type)
                                       : Value::null());
      } catch (const ValidationError& e) {
        throw ValidationError("line " + std::to_string(lineNo) + ", column " +
                              name + ": " + e.what());
      }
      std::string err;
      if (!conformsTo(row.back(), type, &err)) {
        throw ValidationError("line " + std::to_string(lineNo) + ", column " +
                              name + ": " + err);
      }
    }
    rel.rows.push_back(std::move(row));
  }
  return rel;
}

inline void writeRelation(std::ostream& out, const Relation& rel) {
  for (const auto& row : rel.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (size_t i = 0; i < rel.schema.columns.size(); ++i) {
      obj[rel.schema.columns[i].first] =
          valueToJson(row[i], rel.schema.columns[i].second);
    }
    out << obj.dump() << "\n";
  }
}

}  // namespace purview
