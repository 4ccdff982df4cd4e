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
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "purview/compiler.hpp"
#include "purview/errors.hpp"
#include "purview/planner.hpp"
#include "purview/policy.hpp"
#include "purview/time_util.hpp"

namespace purview {

struct ViewKey {
  std::string relation;
  std::string purpose;
  Version version;

  std::string render() const {
    return purpose + "." + relation + "@" + version.render();
  }
  bool operator==(const ViewKey& o) const {
    return relation == o.relation && purpose == o.purpose &&
           version == o.version;
  }
};

/// Caller identity for routing: the purpose of the access, an optional
/// version pin, and a free-form environment tag.
struct AccessContext {
  std::string purpose;
  std::optional<Version> pinnedVersion;
  std::string environment;
};

struct AccessLogEntry {
  int64_t timestampMs = 0;
  std::string relation;
  std::string purpose;
  std::optional<Version> version;
  std::string environment;
  bool pinned = false;
  std::optional<std::string> error;

  nlohmann::ordered_json toJson() const {
    nlohmann::ordered_json j;
    j["timestamp"] = timestampMs;
    j["timestamp_iso"] = msToIso8601(timestampMs);
    j["relation"] = relation;
    j["purpose"] = purpose;
    if (version) {
      j["version"] = version->render();
    }
    j["environment"] = environment;
    j["pinned"] = pinned;
    if (error) {
      j["error"] = *error;
    }
    return j;
  }

  static AccessLogEntry fromJson(const nlohmann::json& j) {
    AccessLogEntry e;
    e.timestampMs = j.at("timestamp").get<int64_t>();
    e.relation = j.at("relation").get<std::string>();
    e.purpose = j.at("purpose").get<std::string>();
    if (j.contains("version")) {
      e.version = Version::parse(j.at("version").get<std::string>());
    }
    e.environment = j.at("environment").get<std::string>();
    e.pinned = j.at("pinned").get<bool>();
    if (j.contains("error")) {
      e.error = j.at("error").get<std::string>();
    }
    return e;
  }
};

/// Append-only JSON-lines access log. One entry per routing call, errors
/// included.
class AccessLog {
 public:
  explicit AccessLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) {
      std::filesystem::create_directories(path_.parent_path());
    }
  }

  void append(const AccessLogEntry& entry) {
    std::ofstream out(path_, std::ios::app);
    out << entry.toJson().dump() << "\n";
  }

  std::vector<AccessLogEntry> entries() const {
    std::vector<AccessLogEntry> out;
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      out.push_back(AccessLogEntry::fromJson(nlohmann::json::parse(line)));
    }
    return out;
  }

  size_t entryCount() const { return entries().size(); }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Versioned view store. Layout: <root>/<purpose>/<relation>/<version>.json,
/// with an index.json cache of the latest version per key, replaced
/// atomically on writes.
class ViewRegistry {
 public:
  explicit ViewRegistry(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
    rescan();
  }

  const std::filesystem::path& root() const { return root_; }

  std::vector<Version> versions(const std::string& relation,
                                const std::string& purpose) const {
    auto it = entries_.find(key(relation, purpose));
    if (it == entries_.end()) {
      return {};
    }
    return it->second;
  }

  std::optional<ViewDefinition> latest(const std::string& relation,
                                       const std::string& purpose) const {
    auto all = versions(relation, purpose);
    if (all.empty()) {
      return std::nullopt;
    }
    return get(relation, purpose, all.back());
  }

  ViewDefinition get(const std::string& relation, const std::string& purpose,
                     const Version& version) const {
    std::filesystem::path file = viewFile(relation, purpose, version);
    std::ifstream in(file);
    if (!in) {
      throw ValidationError("missing view file " + file.string());
    }
    return ViewDefinition::fromJson(nlohmann::json::parse(in));
  }

  /// Registers a view. Versions must be strictly increasing per key.
  void add(const ViewDefinition& view) {
    auto existing = versions(view.relation, view.purpose);
    if (!existing.empty() && !(existing.back() < view.version)) {
      throw ValidationError("view " + view.purpose + "." + view.relation +
                            " version " + view.version.render() +
                            " does not exceed latest " +
                            existing.back().render());
    }
    std::filesystem::path file =
        viewFile(view.relation, view.purpose, view.version);
    std::filesystem::create_directories(file.parent_path());
    std::filesystem::path tmp = file;
    tmp += ".tmp";
    {
      std::ofstream out(tmp);
      out << view.toJson().dump(2) << "\n";
    }
    std::filesystem::rename(tmp, file);
    entries_[key(view.relation, view.purpose)].push_back(view.version);
    writeIndex();
  }

  void remove(const std::string& relation, const std::string& purpose,
              const Version& version) {
    std::filesystem::remove(viewFile(relation, purpose, version));
    auto it = entries_.find(key(relation, purpose));
    if (it != entries_.end()) {
      auto& list = it->second;
      list.erase(std::remove(list.begin(), list.end(), version), list.end());
      if (list.empty()) {
        entries_.erase(it);
      }
    }
    writeIndex();
  }

  std::vector<std::pair<std::string, std::string>> keys() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, versions] : entries_) {
      out.push_back(k);  // (relation, purpose)
    }
    return out;
  }

  void rescan() {
    entries_.clear();
    if (!std::filesystem::exists(root_)) {
      return;
    }
    for (const auto& purposeDir : std::filesystem::directory_iterator(root_)) {
      if (!purposeDir.is_directory()) continue;
      std::string purpose = purposeDir.path().filename().string();
      for (const auto& relationDir :
           std::filesystem::directory_iterator(purposeDir.path())) {
        if (!relationDir.is_directory()) continue;
        std::string relation = relationDir.path().filename().string();
        for (const auto& file :
             std::filesystem::directory_iterator(relationDir.path())) {
          if (file.path().extension() != ".json") continue;
          entries_[key(relation, purpose)].push_back(
              Version::parse(file.path().stem().string()));
        }
      }
    }
    for (auto& [k, list] : entries_) {
      std::sort(list.begin(), list.end());
    }
  }

 private:
  static std::pair<std::string, std::string> key(const std::string& relation,
                                                 const std::string& purpose) {
    return {relation, purpose};
  }

  std::filesystem::path viewFile(const std::string& relation,
                                 const std::string& purpose,
                                 const Version& version) const {
    return root_ / purpose / relation / (version.render() + ".json");
  }

  void writeIndex() const {
    nlohmann::ordered_json index = nlohmann::ordered_json::object();
    for (const auto& [k, list] : entries_) {
      if (!list.empty()) {
        index[k.second + "/" + k.first] = list.back().render();
      }
    }
    std::filesystem::path tmp = root_ / "index.json.tmp";
    {
      std::ofstream out(tmp);
      out << index.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, root_ / "index.json");
  }

  std::filesystem::path root_;
  std::map<std::pair<std::string, std::string>, std::vector<Version>> entries_;
};

/// Resolves a table access to a view: the pinned version when the context
/// pins one, the latest otherwise. Every call (including failures) appends
/// one access-log entry.
inline ViewKey getView(const std::string& relation, const AccessContext& ctx,
                       const ViewRegistry& registry, AccessLog& log,
                       int64_t timestampMs = 0) {
  AccessLogEntry entry;
  entry.timestampMs = timestampMs != 0 ? timestampMs : nowMs();
  entry.relation = relation;
  entry.purpose = ctx.purpose;
  entry.environment = ctx.environment;
  entry.pinned = ctx.pinnedVersion.has_value();

  std::vector<Version> available = registry.versions(relation, ctx.purpose);
  if (available.empty()) {
    entry.error = "no_view_for_purpose";
    log.append(entry);
    throw NoViewForPurposeError(relation, ctx.purpose);
  }
  if (ctx.pinnedVersion) {
    bool found = std::find(available.begin(), available.end(),
                           *ctx.pinnedVersion) != available.end();
    if (!found) {
      entry.error = "pinned_version_missing";
      entry.version = ctx.pinnedVersion;
      log.append(entry);
      throw PinnedVersionMissingError(
          "pinned version " + ctx.pinnedVersion->render() + " of " +
          ctx.purpose + "." + relation + " is not registered");
    }
    entry.version = ctx.pinnedVersion;
    log.append(entry);
    return ViewKey{relation, ctx.purpose, *ctx.pinnedVersion};
  }
  entry.version = available.back();
  log.append(entry);
  return ViewKey{relation, ctx.purpose, available.back()};
}

/// Everything view maintenance joins over: table schemas, label assignments,
/// and the policy catalog.
struct Inventory {
  std::vector<RelationSchema> relations;
  std::vector<LabelAssignment> assignments;
  PolicyCatalog catalog;
};

struct MaintenanceResult {
  std::vector<ViewKey> updated;
  std::vector<std::string> errors;  // "<purpose>.<relation>: message"
  size_t unchanged = 0;
};

/// Recomputes candidate (relation, purpose) pairs and recompiles the ones
/// whose inputs changed since their latest registered version. Compile
/// errors are collected per pair; the batch continues.
inline MaintenanceResult maintainViews(const Inventory& inventory,
                                       ViewRegistry& registry,
                                       int64_t nowMsArg = 0) {
  MaintenanceResult result;
  int64_t stamp = nowMsArg != 0 ? nowMsArg : nowMs();
  for (const auto& relation : inventory.relations) {
    for (const auto& purpose : inventory.catalog.purposes.names()) {
      try {
        auto effective = effectivePolicies(purpose, inventory.catalog);
        auto pairs =
            matchPolicies(relation, inventory.assignments, effective);
        if (pairs.empty()) {
          continue;  // not a candidate pair
        }
        std::vector<Policy> matched;
        for (const auto& [path, policy] : pairs) {
          bool seen = false;
          for (const auto& m : matched) {
            if (m.sameIdentity(policy)) {
              seen = true;
              break;
            }
          }
          if (!seen) matched.push_back(policy);
        }
        std::string digest =
            inputsDigest(relation, inventory.assignments, matched);
        auto latest = registry.latest(relation.name, purpose);
        if (latest && latest->inputsDigest == digest) {
          ++result.unchanged;
          continue;
        }
        SchemaTreeNode tree = buildSchemaTree(pairs);
        SchemaTreeNode prunedTree = prunePolicies(tree);
        auto prunedPairs = collectPairs(prunedTree);
        CompileOptions options;
        options.nowMs = stamp;
        ViewDefinition view =
            compileView(relation, prunedPairs, purpose, options);
        view.inputsDigest = digest;
        if (latest) {
          ChangeKind kind = classifyChange(*latest, view);
          if (kind == ChangeKind::None) {
            ++result.unchanged;  // inputs re-hashed, output identical
            continue;
          }
          view.version = assignVersion(latest->version, kind);
        } else {
          view.version = assignVersion(std::nullopt, ChangeKind::None);
        }
        registry.add(view);
        result.updated.push_back(
            ViewKey{view.relation, view.purpose, view.version});
      } catch (const Error& e) {
        result.errors.push_back(purpose + "." + relation.name + ": " +
                                e.what());
      }
    }
  }
  return result;
}

/// Retains the newest keepLatest versions per key plus anything younger than
/// minAge; the latest version is never removed. Returns what was removed.
inline std::vector<ViewKey> gcViews(ViewRegistry& registry, size_t keepLatest,
                                    int64_t minAgeMs, int64_t nowMsArg = 0) {
  int64_t stamp = nowMsArg != 0 ? nowMsArg : nowMs();
  if (keepLatest < 1) {
    keepLatest = 1;
  }
  std::vector<ViewKey> removed;
  for (const auto& [relation, purpose] : registry.keys()) {
    std::vector<Version> all = registry.versions(relation, purpose);
    if (all.size() <= keepLatest) {
      continue;
    }
    size_t removable = all.size() - keepLatest;
    for (size_t i = 0; i < removable; ++i) {
      ViewDefinition view = registry.get(relation, purpose, all[i]);
      if (view.createdAtMs >= stamp - minAgeMs) {
        continue;  // too young
      }
      registry.remove(relation, purpose, all[i]);
      removed.push_back(ViewKey{relation, purpose, all[i]});
    }
  }
  return removed;
}

}  // namespace purview
