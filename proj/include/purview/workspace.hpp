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

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "purview/errors.hpp"
#include "purview/policy.hpp"
#include "purview/registry.hpp"
#include "purview/schema.hpp"

namespace purview {

/// Filesystem layout of a workspace. Defaults are relative to the root;
/// purview.json at the root may override any path or knob.
struct WorkspaceConfig {
  std::filesystem::path root;
  std::filesystem::path schemaDir;
  std::filesystem::path assignmentsFile;
  std::filesystem::path policyFile;
  std::filesystem::path consentRoot;
  std::filesystem::path registryRoot;
  std::filesystem::path accessLogPath;
  size_t gcKeepLatest = 3;
  int64_t gcMinAgeMs = 7LL * 24 * 3600 * 1000;
  int64_t consentRetentionMs = 30LL * 24 * 3600 * 1000;

  static WorkspaceConfig load(const std::filesystem::path& root) {
    WorkspaceConfig c;
    c.root = root;
    c.schemaDir = root / "schemas";
    c.assignmentsFile = root / "assignments.json";
    c.policyFile = root / "policies.json";
    c.consentRoot = root / "consents";
    c.registryRoot = root / "views";
    c.accessLogPath = root / "access.log";

    std::filesystem::path configFile = root / "purview.json";
    if (std::filesystem::exists(configFile)) {
      std::ifstream in(configFile);
      nlohmann::json j = nlohmann::json::parse(in);
      auto path = [&](const char* key, std::filesystem::path fallback) {
        if (j.contains(key)) {
          std::filesystem::path p = j.at(key).get<std::string>();
          return p.is_absolute() ? p : root / p;
        }
        return fallback;
      };
      c.schemaDir = path("schema_dir", c.schemaDir);
      c.assignmentsFile = path("assignments_file", c.assignmentsFile);
      c.policyFile = path("policy_file", c.policyFile);
      c.consentRoot = path("consent_root", c.consentRoot);
      c.registryRoot = path("registry_root", c.registryRoot);
      c.accessLogPath = path("access_log", c.accessLogPath);
      if (j.contains("gc_keep_latest")) {
        c.gcKeepLatest = j.at("gc_keep_latest").get<size_t>();
      }
      if (j.contains("gc_min_age_ms")) {
        c.gcMinAgeMs = j.at("gc_min_age_ms").get<int64_t>();
      }
      if (j.contains("consent_retention_ms")) {
        c.consentRetentionMs = j.at("consent_retention_ms").get<int64_t>();
      }
    }
    // Stores are auto-created; catalogs must exist to be loaded.
    std::filesystem::create_directories(c.consentRoot);
    std::filesystem::create_directories(c.registryRoot);
    return c;
  }
};

/// Catalog contents loaded from a workspace, ready to feed the pipeline.
struct Workspace {
  WorkspaceConfig config;
  Inventory inventory;

  const std::vector<RelationSchema>& relations() const {
    return inventory.relations;
  }

  const RelationSchema& relation(const std::string& name) const {
    for (const auto& r : inventory.relations) {
      if (r.name == name) {
        return r;
      }
    }
    throw ValidationError("unknown relation: " + name);
  }
};

inline std::vector<RelationSchema> loadSchemas(
    const std::filesystem::path& dir) {
  std::vector<RelationSchema> schemas;
  if (!std::filesystem::exists(dir)) {
    throw ValidationError("schema directory missing: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream in(file);
    try {
      schemas.push_back(RelationSchema::fromJson(nlohmann::json::parse(in)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(file.string() + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(file.string() + ": " + e.what());
    }
  }
  return schemas;
}

inline Workspace loadWorkspace(const WorkspaceConfig& config) {
  Workspace ws;
  ws.config = config;
  ws.inventory.relations = loadSchemas(config.schemaDir);

  if (std::filesystem::exists(config.policyFile)) {
    std::ifstream in(config.policyFile);
    try {
      ws.inventory.catalog = PolicyCatalog::fromJson(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(config.policyFile.string() + ": " + e.what());
    }
  }
  if (std::filesystem::exists(config.assignmentsFile)) {
    std::ifstream in(config.assignmentsFile);
    try {
      ws.inventory.assignments =
          assignmentsFromJson(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(config.assignmentsFile.string() + ": " + e.what());
    }
  }
  return ws;
}

/// Collects every validation problem instead of stopping at the first:
/// unparsable catalogs, assignments that name unknown relations or do not
/// resolve, policies over unregistered attributes.
inline std::vector<std::string> validateWorkspace(
    const WorkspaceConfig& config) {
  std::vector<std::string> problems;
  Workspace ws;
  ws.config = config;
  try {
    ws.inventory.relations = loadSchemas(config.schemaDir);
  } catch (const Error& e) {
    problems.push_back(e.what());
  }
  if (std::filesystem::exists(config.policyFile)) {
    std::ifstream in(config.policyFile);
    try {
      ws.inventory.catalog = PolicyCatalog::fromJson(nlohmann::json::parse(in));
    } catch (const std::exception& e) {
      problems.push_back(config.policyFile.string() + ": " + e.what());
    }
  } else {
    problems.push_back("policy catalog missing: " +
                       config.policyFile.string());
  }
  if (std::filesystem::exists(config.assignmentsFile)) {
    std::ifstream in(config.assignmentsFile);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
      problems.push_back(config.assignmentsFile.string() + ": " + e.what());
      j = nlohmann::json::array();
    }
    for (const auto& a : j) {
      std::string relationName;
      std::string pathText;
      try {
        relationName = a.at("relation").get<std::string>();
        pathText = a.at("path").get<std::string>();
        FieldPath path = FieldPath::parse(pathText);
        const RelationSchema* schema = nullptr;
        for (const auto& r : ws.inventory.relations) {
          if (r.name == relationName) {
            schema = &r;
            break;
          }
        }
        if (schema == nullptr) {
          problems.push_back("assignment names unknown relation " +
                             relationName);
          continue;
        }
        resolvePath(*schema, path);
      } catch (const Error& e) {
        problems.push_back("assignment " + relationName + " " + pathText +
                           ": " + e.what());
      }
    }
  } else {
    problems.push_back("assignments file missing: " +
                       config.assignmentsFile.string());
  }
  return problems;
}

}  // namespace purview
