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
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "purview/purview.hpp"

namespace {

using nlohmann::ordered_json;

struct GlobalArgs {
  std::string workspace = ".";
  uint64_t seed = 42;
  bool json = false;
};

purview::Workspace openWorkspace(const GlobalArgs& args) {
  auto config = purview::WorkspaceConfig::load(args.workspace);
  return purview::loadWorkspace(config);
}

void emit(const GlobalArgs& args, const ordered_json& payload,
          const std::string& humanText) {
  if (args.json) {
    std::cout << payload.dump(2) << "\n";
  } else {
    std::cout << humanText;
  }
}

struct CompileOutcome {
  ordered_json report = ordered_json::array();
  std::string human;
  size_t errors = 0;
};

CompileOutcome compileScope(const purview::Workspace& ws,
                            purview::ViewRegistry& registry,
                            const std::string& relationFilter,
                            const std::string& purposeFilter) {
  CompileOutcome outcome;
  std::ostringstream human;
  for (const auto& relation : ws.inventory.relations) {
    if (!relationFilter.empty() && relation.name != relationFilter) {
      continue;
    }
    for (const auto& purpose : ws.inventory.catalog.purposes.names()) {
      if (!purposeFilter.empty() && purpose != purposeFilter) {
        continue;
      }
      ordered_json entry;
      entry["relation"] = relation.name;
      entry["purpose"] = purpose;
      try {
        auto effective =
            purview::effectivePolicies(purpose, ws.inventory.catalog);
        auto pairs = purview::matchPolicies(relation, ws.inventory.assignments,
                                            effective);
        if (pairs.empty()) {
          continue;
        }
        std::vector<purview::Policy> matched;
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
        std::string digest = purview::inputsDigest(
            relation, ws.inventory.assignments, matched);
        auto latest = registry.latest(relation.name, purpose);
        if (latest && latest->inputsDigest == digest) {
          entry["status"] = "unchanged";
          entry["version"] = latest->version.render();
          outcome.report.push_back(entry);
          human << purpose << "." << relation.name << ": unchanged at "
                << latest->version.render() << "\n";
          continue;
        }
        auto tree = purview::buildSchemaTree(pairs);
        auto prunedTree = purview::prunePolicies(tree);
        auto prunedPairs = purview::collectPairs(prunedTree);
        purview::ViewDefinition view =
            purview::compileView(relation, prunedPairs, purpose);
        view.inputsDigest = digest;
        if (latest) {
          purview::ChangeKind kind = purview::classifyChange(*latest, view);
          if (kind == purview::ChangeKind::None) {
            entry["status"] = "unchanged";
            entry["version"] = latest->version.render();
            outcome.report.push_back(entry);
            human << purpose << "." << relation.name << ": unchanged at "
                  << latest->version.render() << "\n";
            continue;
          }
          view.version = purview::assignVersion(latest->version, kind);
        } else {
          view.version =
              purview::assignVersion(std::nullopt, purview::ChangeKind::None);
        }
        registry.add(view);
        size_t prunedCount = pairs.size() - prunedPairs.size();
        entry["status"] = "registered";
        entry["version"] = view.version.render();
        entry["row_filters"] = view.rowFilterCount();
        entry["column_masks"] = view.columnMaskCount();
        entry["pruned"] = prunedCount;
        if (!view.warnings.empty()) {
          entry["warnings"] = view.warnings;
        }
        outcome.report.push_back(entry);
        human << purpose << "." << relation.name << ": registered "
              << view.version.render() << " (" << view.rowFilterCount()
              << " row filters, " << view.columnMaskCount()
              << " column masks, " << prunedCount << " pruned)\n";
      } catch (const purview::Error& e) {
        ++outcome.errors;
        entry["status"] = "error";
        entry["error"] = e.what();
        outcome.report.push_back(entry);
        human << purpose << "." << relation.name << ": error: " << e.what()
              << "\n";
      }
    }
  }
  outcome.human = human.str();
  return outcome;
}

std::vector<purview::ConsentRow> readConsentTable(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw purview::ValidationError("cannot open consent table " + path);
  }
  std::vector<purview::ConsentRow> rows;
  bool isCsv = path.size() >= 4 && path.substr(path.size() - 4) == ".csv";
  std::string line;
  size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    if (isCsv) {
      if (lineNo == 1 && line.find("subject_id") != std::string::npos) {
        continue;  // header
      }
      std::istringstream ss(line);
      std::string subject, consent, value;
      if (!std::getline(ss, subject, ',') || !std::getline(ss, consent, ',') ||
          !std::getline(ss, value, ',')) {
        throw purview::ValidationError("malformed CSV line " +
                                       std::to_string(lineNo));
      }
      rows.push_back(purview::ConsentRow{
          static_cast<uint64_t>(std::stoll(subject)), consent,
          value == "true" || value == "1"});
    } else {
      nlohmann::json j = nlohmann::json::parse(line);
      rows.push_back(purview::ConsentRow{
          j.at("subject_id").get<uint64_t>(),
          j.at("consent_name").get<std::string>(), j.at("value").get<bool>()});
    }
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"purpose-scoped data-masking view toolchain"};
  app.require_subcommand(1);

  GlobalArgs global;
  app.add_option("--workspace", global.workspace, "workspace root directory");
  app.add_option("--seed", global.seed, "PRNG seed for synthetic data");
  app.add_flag("--json", global.json, "machine-readable output");

  // compile
  auto* compileCmd =
      app.add_subcommand("compile", "compile and register masking views");
  std::string compileRelation, compilePurpose;
  compileCmd->add_option("--relation", compileRelation,
                         "restrict to one relation");
  compileCmd->add_option("--purpose", compilePurpose,
                         "restrict to one purpose");

  // apply
  auto* applyCmd =
      app.add_subcommand("apply", "run a registered view over JSON-lines data");
  std::string applyRelation, applyPurpose, applyVersion, applyInput,
      applyOutput;
  int64_t applyAccessTime = 0;
  bool applyOracle = false;
  applyCmd->add_option("--relation", applyRelation, "relation name")
      ->required();
  applyCmd->add_option("--purpose", applyPurpose, "access purpose")
      ->required();
  applyCmd->add_option("--pin", applyVersion, "pinned view version");
  applyCmd->add_option("--input", applyInput, "input JSON-lines file")
      ->required();
  applyCmd->add_option("--output", applyOutput, "output JSON-lines file")
      ->required();
  applyCmd->add_option("--access-time", applyAccessTime,
                       "access time (epoch millis; default now)");
  applyCmd->add_flag("--oracle", applyOracle,
                     "run the reference masking operator instead of the plan");

  // bench
  auto* benchCmd = app.add_subcommand("bench", "micro-benchmark experiments");
  std::string benchExperiment;
  size_t benchRows = 100000;
  int benchReps = 5;
  benchCmd
      ->add_option("--experiment", benchExperiment,
                   "field-size | depth | policies | consent-rate | array")
      ->required();
  benchCmd->add_option("--rows", benchRows, "rows per dataset");
  benchCmd->add_option("--repetitions", benchReps, "measured repetitions");

  // route
  auto* routeCmd = app.add_subcommand("route", "resolve a table access");
  std::string routeRelation, routePurpose, routePin, routeEnv = "cli";
  bool routeStaleReport = false;
  routeCmd->add_option("--relation", routeRelation, "relation name");
  routeCmd->add_option("--purpose", routePurpose, "access purpose");
  routeCmd->add_option("--pin", routePin, "pinned view version");
  routeCmd->add_option("--environment", routeEnv, "environment tag");
  routeCmd->add_flag("--stale-report", routeStaleReport,
                     "report pinned consumers behind the latest version");

  // maintain
  auto* maintainCmd =
      app.add_subcommand("maintain", "recompile views whose inputs changed");

  // gc
  auto* gcCmd = app.add_subcommand(
      "gc", "garbage-collect old view versions and consent snapshots");

  // bitmap-build
  auto* bitmapCmd = app.add_subcommand(
      "bitmap-build", "build consent bitmap snapshots from a consent table");
  std::string bitmapInput;
  int64_t bitmapAsOf = 0;
  bitmapCmd->add_option("--input", bitmapInput, "consent table (.csv or .jsonl)")
      ->required();
  bitmapCmd->add_option("--as-of", bitmapAsOf,
                        "snapshot generation time (epoch millis; default now)");

  // validate
  auto* validateCmd =
      app.add_subcommand("validate", "validate workspace catalogs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*compileCmd) {
      auto ws = openWorkspace(global);
      purview::ViewRegistry registry(ws.config.registryRoot);
      auto outcome =
          compileScope(ws, registry, compileRelation, compilePurpose);
      ordered_json payload;
      payload["views"] = outcome.report;
      emit(global, payload, outcome.human);
      return outcome.errors == 0 ? 0 : 1;
    }

    if (*applyCmd) {
      auto ws = openWorkspace(global);
      purview::ViewRegistry registry(ws.config.registryRoot);
      purview::AccessLog log(ws.config.accessLogPath);
      purview::AccessContext ctx;
      ctx.purpose = applyPurpose;
      ctx.environment = "cli";
      if (!applyVersion.empty()) {
        ctx.pinnedVersion = purview::Version::parse(applyVersion);
      }
      purview::ViewKey key =
          purview::getView(applyRelation, ctx, registry, log);
      purview::ViewDefinition view =
          registry.get(key.relation, key.purpose, key.version);
      const purview::RelationSchema& schema = ws.relation(applyRelation);
      std::ifstream in(applyInput);
      if (!in) {
        throw purview::ValidationError("cannot open input " + applyInput);
      }
      purview::Relation rel = purview::readRelation(in, schema);
      int64_t accessTime =
          applyAccessTime != 0 ? applyAccessTime : purview::nowMs();
      purview::SnapshotStore store(ws.config.consentRoot);
      purview::Relation result{schema, {}};
      purview::ApplyStats stats;
      if (applyOracle) {
        auto effective =
            purview::effectivePolicies(applyPurpose, ws.inventory.catalog);
        auto pairs = purview::matchPolicies(schema, ws.inventory.assignments,
                                            effective);
        result =
            purview::oracle::oracleMaskAll(rel, pairs, &store, accessTime);
        stats.rowsIn = rel.rows.size();
        stats.rowsOut = result.rows.size();
      } else {
        result = purview::applyPlan(view, rel, accessTime, &store, &stats);
      }
      std::ofstream out(applyOutput);
      purview::writeRelation(out, result);
      ordered_json payload;
      payload["view"] = key.render();
      payload["rows_in"] = stats.rowsIn;
      payload["rows_out"] = stats.rowsOut;
      ordered_json masks = ordered_json::array();
      std::ostringstream human;
      human << key.render() << ": " << stats.rowsIn << " rows in, "
            << stats.rowsOut << " rows out\n";
      for (const auto& [path, count] : stats.maskCounts) {
        masks.push_back({{"path", path}, {"rows_masked", count}});
        human << "  masked " << count << " rows at " << path << "\n";
      }
      payload["mask_counts"] = masks;
      emit(global, payload, human.str());
      return 0;
    }

    if (*benchCmd) {
      purview::bench::Options options;
      options.rows = benchRows;
      options.repetitions = benchReps;
      options.seed = global.seed;
      purview::bench::Report report =
          purview::bench::runExperiment(benchExperiment, options);
      std::ostringstream human;
      human << "experiment " << report.experiment << " (rows=" << report.rows
            << ", reps=" << report.repetitions << ", seed=" << report.seed
            << ")\n";
      for (const auto& s : report.settings) {
        human << "  param=" << s.param;
        if (!s.variant.empty()) human << " (" << s.variant << ")";
        human << ": base=" << s.meanBase() << " ns/row, mask=" << s.meanMask()
              << " ns/row, overhead=" << s.overhead() * 100 << "%\n";
      }
      emit(global, report.toJson(), human.str());
      return 0;
    }

    if (*routeCmd) {
      auto config = purview::WorkspaceConfig::load(global.workspace);
      purview::ViewRegistry registry(config.registryRoot);
      purview::AccessLog log(config.accessLogPath);
      if (routeStaleReport) {
        ordered_json stale = ordered_json::array();
        std::ostringstream human;
        for (const auto& entry : log.entries()) {
          if (!entry.pinned || entry.error || !entry.version) {
            continue;
          }
          auto versions = registry.versions(entry.relation, entry.purpose);
          if (versions.empty() || !(*entry.version < versions.back())) {
            continue;
          }
          stale.push_back({{"relation", entry.relation},
                           {"purpose", entry.purpose},
                           {"pinned", entry.version->render()},
                           {"latest", versions.back().render()},
                           {"environment", entry.environment}});
          human << entry.purpose << "." << entry.relation << ": pinned "
                << entry.version->render() << " < latest "
                << versions.back().render() << " (" << entry.environment
                << ")\n";
        }
        ordered_json payload;
        payload["stale_pins"] = stale;
        emit(global, payload,
             stale.empty() ? "no stale pins\n" : human.str());
        return 0;
      }
      if (routeRelation.empty() || routePurpose.empty()) {
        throw purview::ValidationError(
            "route requires --relation and --purpose");
      }
      purview::AccessContext ctx;
      ctx.purpose = routePurpose;
      ctx.environment = routeEnv;
      if (!routePin.empty()) {
        ctx.pinnedVersion = purview::Version::parse(routePin);
      }
      purview::ViewKey key =
          purview::getView(routeRelation, ctx, registry, log);
      ordered_json payload;
      payload["relation"] = key.relation;
      payload["purpose"] = key.purpose;
      payload["version"] = key.version.render();
      payload["pinned"] = ctx.pinnedVersion.has_value();
      emit(global, payload, key.render() + "\n");
      return 0;
    }

    if (*maintainCmd) {
      auto ws = openWorkspace(global);
      purview::ViewRegistry registry(ws.config.registryRoot);
      purview::MaintenanceResult result =
          purview::maintainViews(ws.inventory, registry);
      ordered_json payload;
      ordered_json updated = ordered_json::array();
      std::ostringstream human;
      human << result.updated.size() << " updated, " << result.unchanged
            << " unchanged, " << result.errors.size() << " errors\n";
      for (const auto& key : result.updated) {
        updated.push_back(key.render());
        human << "  updated " << key.render() << "\n";
      }
      payload["updated"] = updated;
      payload["unchanged"] = result.unchanged;
      payload["errors"] = result.errors;
      for (const auto& e : result.errors) {
        human << "  error " << e << "\n";
      }
      emit(global, payload, human.str());
      return result.errors.empty() ? 0 : 1;
    }

    if (*gcCmd) {
      auto config = purview::WorkspaceConfig::load(global.workspace);
      purview::ViewRegistry registry(config.registryRoot);
      auto removedViews =
          purview::gcViews(registry, config.gcKeepLatest, config.gcMinAgeMs);
      purview::SnapshotStore store(config.consentRoot);
      auto removedSnapshots =
          store.gc(config.consentRetentionMs, purview::nowMs());
      ordered_json payload;
      ordered_json views = ordered_json::array();
      std::ostringstream human;
      for (const auto& key : removedViews) {
        views.push_back(key.render());
        human << "removed view " << key.render() << "\n";
      }
      ordered_json snaps = ordered_json::array();
      for (const auto& [consent, ts] : removedSnapshots) {
        snaps.push_back({{"consent", consent}, {"generated_at", ts}});
        human << "removed snapshot " << consent << "@"
              << purview::msToIso8601(ts) << "\n";
      }
      payload["removed_views"] = views;
      payload["removed_snapshots"] = snaps;
      human << removedViews.size() << " views, " << removedSnapshots.size()
            << " snapshots removed\n";
      emit(global, payload, human.str());
      return 0;
    }

    if (*bitmapCmd) {
      auto config = purview::WorkspaceConfig::load(global.workspace);
      auto rows = readConsentTable(bitmapInput);
      int64_t asOf = bitmapAsOf != 0 ? bitmapAsOf : purview::nowMs();
      auto snapshots = purview::buildSnapshots(rows, asOf);
      purview::SnapshotStore store(config.consentRoot);
      ordered_json payload = ordered_json::array();
      std::ostringstream human;
      for (const auto& snapshot : snapshots) {
        store.save(snapshot);
        payload.push_back({{"consent", snapshot.consentName},
                           {"polarity", purview::toString(snapshot.polarity)},
                           {"cardinality", snapshot.ids.cardinality()},
                           {"universe", snapshot.universeSize},
                           {"generated_at", snapshot.generatedAtMs}});
        human << snapshot.consentName << ": "
              << purview::toString(snapshot.polarity) << " bitmap, "
              << snapshot.ids.cardinality() << "/" << snapshot.universeSize
              << " ids\n";
      }
      ordered_json wrapper;
      wrapper["snapshots"] = payload;
      emit(global, wrapper, human.str());
      return 0;
    }

    if (*validateCmd) {
      auto config = purview::WorkspaceConfig::load(global.workspace);
      auto problems = purview::validateWorkspace(config);
      ordered_json payload;
      payload["problems"] = problems;
      std::ostringstream human;
      for (const auto& p : problems) {
        human << "problem: " << p << "\n";
      }
      human << (problems.empty()
                    ? std::string("workspace valid\n")
                    : std::to_string(problems.size()) + " problems\n");
      emit(global, payload, human.str());
      return problems.empty() ? 0 : 1;
    }
  } catch (const purview::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const purview::SyntaxError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const purview::ResolutionError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const purview::UnknownPurposeError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const purview::UnsupportedConditionError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const purview::MissingSubjectIdError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const purview::DuplicateSubjectRowError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const purview::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
