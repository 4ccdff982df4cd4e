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
#include <ctime>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "purview/compiler.hpp"
#include "purview/consent.hpp"
#include "purview/evaluator.hpp"
#include "purview/planner.hpp"
#include "purview/policy.hpp"
#include "purview/value.hpp"

// Micro-benchmark harness: measures the per-row CPU cost of a masking plan
// against a pass-through baseline over synthetic datasets. Reports carry the
// raw per-repetition numbers so trend assertions can be recomputed.

namespace purview::bench {

inline int64_t threadCpuNs() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<int64_t>(ts.tv_sec) * 1000000000 + ts.tv_nsec;
}

struct Setting {
  double param = 0;
  std::string variant;               // e.g. "conditional"
  std::vector<double> baseNsPerRow;  // per repetition
  std::vector<double> maskNsPerRow;

  double meanBase() const {
    double sum = 0;
    for (double v : baseNsPerRow) sum += v;
    return baseNsPerRow.empty() ? 0 : sum / baseNsPerRow.size();
  }
  double meanMask() const {
    double sum = 0;
    for (double v : maskNsPerRow) sum += v;
    return maskNsPerRow.empty() ? 0 : sum / maskNsPerRow.size();
  }
  /// Relative CPU overhead of masking vs. baseline.
  double overhead() const {
    double base = meanBase();
    return base == 0 ? 0 : (meanMask() - base) / base;
  }

  nlohmann::ordered_json toJson() const {
    nlohmann::ordered_json j;
    j["param"] = param;
    if (!variant.empty()) {
      j["variant"] = variant;
    }
    j["base_ns_per_row"] = baseNsPerRow;
    j["mask_ns_per_row"] = maskNsPerRow;
    j["mean_base_ns_per_row"] = meanBase();
    j["mean_mask_ns_per_row"] = meanMask();
    j["overhead"] = overhead();
    return j;
  }
};

struct Report {
  std::string experiment;
  uint64_t seed = 0;
  size_t rows = 0;
  int repetitions = 0;
  std::vector<Setting> settings;

  nlohmann::ordered_json toJson() const {
    nlohmann::ordered_json j;
    j["experiment"] = experiment;
    j["seed"] = seed;
    j["rows"] = rows;
    j["repetitions"] = repetitions;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : settings) {
      arr.push_back(s.toJson());
    }
    j["settings"] = std::move(arr);
    return j;
  }
};

inline bool monotoneIncreasing(const std::vector<double>& xs) {
  for (size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] <= xs[i - 1]) return false;
  }
  return true;
}

inline bool monotoneNonIncreasing(const std::vector<double>& xs) {
  for (size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] > xs[i - 1]) return false;
  }
  return true;
}

/// Coefficient of determination of the least-squares line through (xs, ys).
inline double linearR2(const std::vector<double>& xs,
                       const std::vector<double>& ys) {
  size_t n = xs.size();
  if (n < 2) return 1.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  double denom = n * sxx - sx * sx;
  if (denom == 0) return 0.0;
  double slope = (n * sxy - sx * sy) / denom;
  double intercept = (sy - slope * sx) / n;
  double ssRes = 0, ssTot = 0;
  double meanY = sy / n;
  for (size_t i = 0; i < n; ++i) {
    double fit = slope * xs[i] + intercept;
    ssRes += (ys[i] - fit) * (ys[i] - fit);
    ssTot += (ys[i] - meanY) * (ys[i] - meanY);
  }
  if (ssTot == 0) return 1.0;
  return 1.0 - ssRes / ssTot;
}

namespace detail {

inline std::string randomString(std::mt19937_64& rng, size_t length) {
  static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::string out;
  out.reserve(length);
  std::uniform_int_distribution<size_t> pick(0, sizeof(alphabet) - 2);
  for (size_t i = 0; i < length; ++i) {
    out += alphabet[pick(rng)];
  }
  return out;
}

struct Dataset {
  RelationSchema schema;
  Relation relation;
  std::vector<std::pair<FieldPath, Policy>> maskPairs;
};

inline Policy unconditionalMask(const std::string& id) {
  Policy p;
  p.id = id;
  p.purpose = "bench";
  p.label = "bench";
  p.action = PolicyAction::Mask;
  p.condition = Condition::constant(true);
  return p;
}

inline Policy consentKeep(const std::string& id, const std::string& consent) {
  Policy p;
  p.id = id;
  p.purpose = "bench";
  p.label = "bench";
  p.action = PolicyAction::Keep;
  p.condition = Condition::predicate(consent, CompareOp::Eq,
                                     {Literal::ofBool(true)}, false,
                                     AttrClass::Consent);
  return p;
}

inline std::pair<std::string, SchemaType> idColumn() {
  return {"id", SchemaType::atomicType("BIGINT")};
}
inline std::pair<std::string, SchemaType> payloadColumn() {
  return {"payload", SchemaType::atomicType("VARCHAR")};
}

/// Fixed fat payload keeps the baseline per-row cost dominant and stable.
inline void fillCommon(Row& row, int64_t id, std::mt19937_64& rng) {
  row.push_back(Value::ofInt(id));
  row.push_back(Value::ofString(randomString(rng, 120)));
}

inline Dataset flatStructDataset(size_t rows, int fieldCount, uint64_t seed) {
  std::mt19937_64 rng(seed);
  SchemaType target = [&] {
    if (fieldCount == 0) {
      return SchemaType::atomicType("VARCHAR");
    }
    std::vector<std::pair<std::string, SchemaType>> fields;
    for (int i = 0; i < fieldCount; ++i) {
      fields.emplace_back("f" + std::to_string(i),
                          SchemaType::atomicType("VARCHAR"));
    }
    return SchemaType::structType(std::move(fields));
  }();
  RelationSchema schema("bench_flat",
                        {idColumn(), payloadColumn(), {"target", target}},
                        "id");
  Relation rel{schema, {}};
  rel.rows.reserve(rows);
  for (size_t r = 0; r < rows; ++r) {
    Row row;
    fillCommon(row, static_cast<int64_t>(r), rng);
    if (fieldCount == 0) {
      row.push_back(Value::ofString(randomString(rng, 12)));
    } else {
      Value::StructFields fields;
      for (int i = 0; i < fieldCount; ++i) {
        fields.emplace_back("f" + std::to_string(i),
                            Value::ofString(randomString(rng, 12)));
      }
      row.push_back(Value::structOf(std::move(fields)));
    }
    rel.rows.push_back(std::move(row));
  }
  Dataset ds{schema, std::move(rel), {}};
  ds.maskPairs.emplace_back(FieldPath::parse("$.target"),
                            unconditionalMask("p_flat"));
  return ds;
}

inline Dataset depthDataset(size_t rows, int depth, uint64_t seed) {
  std::mt19937_64 rng(seed);
  SchemaType chain = SchemaType::structType(
      {{"pad", SchemaType::atomicType("VARCHAR")},
       {"leaf", SchemaType::atomicType("VARCHAR")}});
  std::string pathText = "$.target";
  for (int d = 1; d < depth; ++d) {
    chain = SchemaType::structType(
        {{"pad", SchemaType::atomicType("VARCHAR")}, {"child", chain}});
  }
  for (int d = 1; d < depth; ++d) {
    pathText += ".child";
  }
  pathText += ".leaf";

  RelationSchema schema("bench_depth",
                        {idColumn(), payloadColumn(), {"target", chain}},
                        "id");
  Relation rel{schema, {}};
  rel.rows.reserve(rows);
  for (size_t r = 0; r < rows; ++r) {
    Row row;
    fillCommon(row, static_cast<int64_t>(r), rng);
    Value node = Value::structOf(
        {{"pad", Value::ofString(randomString(rng, 8))},
         {"leaf", Value::ofString(randomString(rng, 8))}});
    for (int d = 1; d < depth; ++d) {
      node = Value::structOf(
          {{"pad", Value::ofString(randomString(rng, 8))},
           {"child", std::move(node)}});
    }
    row.push_back(std::move(node));
    rel.rows.push_back(std::move(row));
  }
  Dataset ds{schema, std::move(rel), {}};
  ds.maskPairs.emplace_back(FieldPath::parse(pathText),
                            unconditionalMask("p_depth"));
  return ds;
}

inline Dataset policyCountDataset(size_t rows, int policyCount, uint64_t seed) {
  std::mt19937_64 rng(seed);
  constexpr int kFields = 10;
  std::vector<std::pair<std::string, SchemaType>> fields;
  for (int i = 0; i < kFields; ++i) {
    fields.emplace_back("f" + std::to_string(i),
                        SchemaType::atomicType("VARCHAR"));
  }
  RelationSchema schema(
      "bench_policies",
      {idColumn(), payloadColumn(), {"target", SchemaType::structType(fields)}},
      "id");
  Relation rel{schema, {}};
  rel.rows.reserve(rows);
  for (size_t r = 0; r < rows; ++r) {
    Row row;
    fillCommon(row, static_cast<int64_t>(r), rng);
    Value::StructFields structFields;
    for (int i = 0; i < kFields; ++i) {
      structFields.emplace_back("f" + std::to_string(i),
                                Value::ofString(randomString(rng, 10)));
    }
    row.push_back(Value::structOf(std::move(structFields)));
    rel.rows.push_back(std::move(row));
  }
  Dataset ds{schema, std::move(rel), {}};
  for (int i = 0; i < policyCount; ++i) {
    ds.maskPairs.emplace_back(
        FieldPath::parse("$.target.f" + std::to_string(i)),
        unconditionalMask("p" + std::to_string(i)));
  }
  return ds;
}

inline Dataset arrayDataset(size_t rows, int arraySize, bool conditional,
                            uint64_t seed) {
  std::mt19937_64 rng(seed);
  SchemaType element = SchemaType::structType(
      {{"a", SchemaType::atomicType("VARCHAR")},
       {"b", SchemaType::atomicType("VARCHAR")}});
  RelationSchema schema(
      "bench_array",
      {idColumn(), payloadColumn(), {"target", SchemaType::arrayType(element)}},
      "id");
  Relation rel{schema, {}};
  rel.rows.reserve(rows);
  for (size_t r = 0; r < rows; ++r) {
    Row row;
    fillCommon(row, static_cast<int64_t>(r), rng);
    Value::ArrayItems items;
    for (int i = 0; i < arraySize; ++i) {
      items.push_back(Value::structOf(
          {{"a", Value::ofString(randomString(rng, 8))},
           {"b", Value::ofString("grp")}}));
    }
    row.push_back(Value::arrayOf(std::move(items)));
    rel.rows.push_back(std::move(row));
  }
  Dataset ds{schema, std::move(rel), {}};
  std::string pathText = conditional ? "$.target.[item].[?(@.b = 'grp')].a"
                                     : "$.target.[item].a";
  ds.maskPairs.emplace_back(FieldPath::parse(pathText),
                            unconditionalMask("p_array"));
  return ds;
}

inline Dataset consentRateDataset(size_t rows, uint64_t seed) {
  std::mt19937_64 rng(seed);
  constexpr int kArraySize = 16;
  SchemaType element = SchemaType::structType(
      {{"a", SchemaType::atomicType("VARCHAR")},
       {"b", SchemaType::atomicType("BIGINT")}});
  RelationSchema schema(
      "bench_consent",
      {idColumn(), payloadColumn(), {"target", SchemaType::arrayType(element)}},
      "id");
  Relation rel{schema, {}};
  rel.rows.reserve(rows);
  for (size_t r = 0; r < rows; ++r) {
    Row row;
    fillCommon(row, static_cast<int64_t>(r), rng);
    Value::ArrayItems items;
    for (int i = 0; i < kArraySize; ++i) {
      items.push_back(Value::structOf(
          {{"a", Value::ofString(randomString(rng, 8))},
           {"b", Value::ofInt(i)}}));
    }
    row.push_back(Value::arrayOf(std::move(items)));
    rel.rows.push_back(std::move(row));
  }
  Dataset ds{schema, std::move(rel), {}};
  ds.maskPairs.emplace_back(FieldPath::parse("$.target.[item].a"),
                            consentKeep("p_rate", "bench_consent"));
  return ds;
}

struct TimedRun {
  std::vector<double> baseNsPerRow;
  std::vector<double> maskNsPerRow;
};

inline TimedRun timePlans(const Dataset& ds, const ViewDefinition& baseline,
                          const ViewDefinition& masking, int repetitions,
                          int64_t accessTimeMs, const SnapshotStore* store) {
  TimedRun run;
  size_t rows = ds.relation.rows.size();
  // One warmup per variant, then the measured repetitions.
  (void)applyPlan(baseline, ds.relation, accessTimeMs, store);
  (void)applyPlan(masking, ds.relation, accessTimeMs, store);
  for (int rep = 0; rep < repetitions; ++rep) {
    int64_t t0 = threadCpuNs();
    Relation base = applyPlan(baseline, ds.relation, accessTimeMs, store);
    int64_t t1 = threadCpuNs();
    Relation masked = applyPlan(masking, ds.relation, accessTimeMs, store);
    int64_t t2 = threadCpuNs();
    if (base.rows.size() != rows || masked.rows.size() != rows) {
      throw Error("benchmark plans must preserve row count");
    }
    run.baseNsPerRow.push_back(static_cast<double>(t1 - t0) / rows);
    run.maskNsPerRow.push_back(static_cast<double>(t2 - t1) / rows);
  }
  return run;
}

inline Setting runSetting(const Dataset& ds, double param,
                          const std::string& variant, int repetitions,
                          int64_t accessTimeMs, const SnapshotStore* store) {
  ViewDefinition baseline = compileView(ds.schema, {}, "bench");
  SchemaTreeNode tree = buildSchemaTree(ds.maskPairs);
  auto prunedPairs = collectPairs(prunePolicies(tree));
  ViewDefinition masking = compileView(ds.schema, prunedPairs, "bench");
  TimedRun run =
      timePlans(ds, baseline, masking, repetitions, accessTimeMs, store);
  Setting setting;
  setting.param = param;
  setting.variant = variant;
  setting.baseNsPerRow = std::move(run.baseNsPerRow);
  setting.maskNsPerRow = std::move(run.maskNsPerRow);
  return setting;
}

}  // namespace detail

struct Options {
  size_t rows = 100000;
  int repetitions = 5;
  uint64_t seed = 42;
  /// Scratch directory for consent snapshots (consent-rate experiment).
  std::filesystem::path scratchDir;
};

inline Report runFieldSize(const Options& options) {
  Report report{"field-size", options.seed, options.rows, options.repetitions, {}};
  for (int fields : {0, 1, 2, 4, 8, 16}) {
    auto ds = detail::flatStructDataset(options.rows, fields, options.seed);
    report.settings.push_back(detail::runSetting(
        ds, fields, "", options.repetitions, nowMs(), nullptr));
  }
  return report;
}

inline Report runDepth(const Options& options) {
  Report report{"depth", options.seed, options.rows, options.repetitions, {}};
  for (int depth = 1; depth <= 8; ++depth) {
    auto ds = detail::depthDataset(options.rows, depth, options.seed);
    report.settings.push_back(detail::runSetting(
        ds, depth, "", options.repetitions, nowMs(), nullptr));
  }
  return report;
}

inline Report runPolicies(const Options& options) {
  Report report{"policies", options.seed, options.rows, options.repetitions, {}};
  for (int count = 1; count <= 10; ++count) {
    auto ds = detail::policyCountDataset(options.rows, count, options.seed);
    report.settings.push_back(detail::runSetting(
        ds, count, "", options.repetitions, nowMs(), nullptr));
  }
  return report;
}

inline Report runArray(const Options& options) {
  Report report{"array", options.seed, options.rows, options.repetitions, {}};
  for (int size : {4, 8, 16, 32, 64}) {
    for (bool conditional : {false, true}) {
      auto ds = detail::arrayDataset(options.rows, size, conditional,
                                     options.seed);
      report.settings.push_back(detail::runSetting(
          ds, size, conditional ? "conditional" : "unconditional",
          options.repetitions, nowMs(), nullptr));
    }
  }
  return report;
}

inline Report runConsentRate(const Options& options) {
  Report report{"consent-rate", options.seed, options.rows,
                options.repetitions, {}};
  std::filesystem::path scratch =
      options.scratchDir.empty()
          ? std::filesystem::temp_directory_path() /
                ("purview-bench-" + std::to_string(options.seed))
          : options.scratchDir;
  auto ds = detail::consentRateDataset(options.rows, options.seed);
  int64_t accessTime = 1000000;
  for (double rate : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    SnapshotStore store(scratch /
                        ("rate-" + std::to_string(static_cast<int>(rate * 100))));
    std::vector<ConsentRow> consentRows;
    size_t grantUpTo = static_cast<size_t>(rate * options.rows);
    for (size_t subject = 0; subject < options.rows; ++subject) {
      consentRows.push_back(
          ConsentRow{subject, "bench_consent", subject < grantUpTo});
    }
    for (auto& snapshot : buildSnapshots(consentRows, accessTime - 1)) {
      store.save(snapshot);
    }
    report.settings.push_back(detail::runSetting(
        ds, rate, "", options.repetitions, accessTime, &store));
  }
  return report;
}

inline Report runExperiment(const std::string& name, const Options& options) {
  if (name == "field-size") return runFieldSize(options);
  if (name == "depth") return runDepth(options);
  if (name == "policies") return runPolicies(options);
  if (name == "consent-rate") return runConsentRate(options);
  if (name == "array") return runArray(options);
  throw ValidationError("unknown experiment: " + name +
                        " (expected field-size, depth, policies, "
                        "consent-rate, or array)");
}

}  // namespace purview::bench
