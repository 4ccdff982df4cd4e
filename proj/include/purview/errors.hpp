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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace purview {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed field-path or condition text. Carries the byte offset of the
/// offending token and what the parser expected there.
class SyntaxError : public Error {
 public:
  SyntaxError(std::string message, size_t position, std::string expected)
      : Error(message + " at offset " + std::to_string(position) +
              (expected.empty() ? "" : " (expected " + expected + ")")),
        position_(position),
        expected_(std::move(expected)) {}

  size_t position() const { return position_; }
  const std::string& expected() const { return expected_; }

 private:
  size_t position_;
  std::string expected_;
};

/// A field path does not fit the schema it is resolved against.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// Catalog or workspace content failed validation on load.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class UnknownPurposeError : public Error {
 public:
  explicit UnknownPurposeError(const std::string& purpose)
      : Error("unknown purpose: " + purpose) {}
};

class MissingSubjectIdError : public Error {
 public:
  explicit MissingSubjectIdError(const std::string& relation)
      : Error("relation " + relation +
              " has consent-based policies but no subject id column") {}
};

class UnsupportedConditionError : public Error {
 public:
  using Error::Error;
};

class DuplicateSubjectRowError : public Error {
 public:
  using Error::Error;
};

class NoSnapshotError : public Error {
 public:
  NoSnapshotError(const std::string& consent, int64_t accessTimeMs)
      : Error("no snapshot for consent '" + consent + "' at or before " +
              std::to_string(accessTimeMs)) {}
};

class SchemaMismatchError : public Error {
 public:
  using Error::Error;
};

class PathTypeMismatchError : public Error {
 public:
  using Error::Error;
};

class UnboundAttributeError : public Error {
 public:
  explicit UnboundAttributeError(const std::string& attribute)
      : Error("unbound attribute: " + attribute) {}
};

class NoViewForPurposeError : public Error {
 public:
  NoViewForPurposeError(const std::string& relation, const std::string& purpose)
      : Error("no view for relation '" + relation + "' under purpose '" +
              purpose + "'") {}
};

class PinnedVersionMissingError : public Error {
 public:
  using Error::Error;
};

}  // namespace purview
