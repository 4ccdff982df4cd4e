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
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "purview/errors.hpp"
#include "purview/time_util.hpp"

namespace purview {

namespace detail {

inline void writeU8(std::ostream& out, uint8_t v) {
  out.put(static_cast<char>(v));
}
inline void writeU32(std::ostream& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}
inline void writeU64(std::ostream& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}
inline void writeU16(std::ostream& out, uint16_t v) {
  out.put(static_cast<char>(v & 0xFF));
  out.put(static_cast<char>((v >> 8) & 0xFF));
}
inline uint8_t readU8(std::istream& in) {
  int c = in.get();
  if (c == EOF) throw ValidationError("truncated bitmap stream");
  return static_cast<uint8_t>(c);
}
inline uint16_t readU16(std::istream& in) {
  uint16_t v = readU8(in);
  v |= static_cast<uint16_t>(readU8(in)) << 8;
  return v;
}
inline uint32_t readU32(std::istream& in) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<uint32_t>(readU8(in)) << (8 * i);
  }
  return v;
}
inline uint64_t readU64(std::istream& in) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<uint64_t>(readU8(in)) << (8 * i);
  }
  return v;
}

}  // namespace detail

/// Compressed set of 64-bit ids. Ids are chunked on their high 48 bits; each
/// chunk holds the low 16 bits in whichever container is smallest: a sorted
/// array (sparse), a fixed 8 KiB bitset (dense), or run-length ranges.
class IdSet {
 public:
  static constexpr size_t kArrayLimit = 4096;
  static constexpr uint32_t kMagic = 0x31425650;  // "PVB1"

  void add(uint64_t id) {
    uint64_t key = id >> 16;
    uint16_t low = static_cast<uint16_t>(id & 0xFFFF);
    Container& c = chunks_[key];
    if (std::holds_alternative<ArrayContainer>(c)) {
      auto& arr = std::get<ArrayContainer>(c).values;
      auto it = std::lower_bound(arr.begin(), arr.end(), low);
      if (it != arr.end() && *it == low) {
        return;
      }
      arr.insert(it, low);
      if (arr.size() > kArrayLimit) {
        c = toBitset(std::get<ArrayContainer>(c));
      }
      return;
    }
    if (std::holds_alternative<BitsetContainer>(c)) {
      auto& bs = std::get<BitsetContainer>(c);
      uint64_t& word = bs.words[low >> 6];
      uint64_t bit = uint64_t{1} << (low & 63);
      if ((word & bit) == 0) {
        word |= bit;
        ++bs.cardinality;
      }
      return;
    }
    // Run containers are produced by optimize(); thaw back to a bitset.
    c = runToBitset(std::get<RunContainer>(c));
    add(id);
  }

  bool contains(uint64_t id) const {
    auto it = chunks_.find(id >> 16);
    if (it == chunks_.end()) {
      return false;
    }
    uint16_t low = static_cast<uint16_t>(id & 0xFFFF);
    const Container& c = it->second;
    if (std::holds_alternative<ArrayContainer>(c)) {
      const auto& arr = std::get<ArrayContainer>(c).values;
      return std::binary_search(arr.begin(), arr.end(), low);
    }
    if (std::holds_alternative<BitsetContainer>(c)) {
      const auto& bs = std::get<BitsetContainer>(c);
      return (bs.words[low >> 6] >> (low & 63)) & 1;
    }
    const auto& runs = std::get<RunContainer>(c).runs;
    auto rit = std::upper_bound(
        runs.begin(), runs.end(), low,
        [](uint16_t v, const Run& r) { return v < r.start; });
    if (rit == runs.begin()) {
      return false;
    }
    --rit;
    return low >= rit->start && low <= rit->end;
  }

  uint64_t cardinality() const {
    uint64_t n = 0;
    for (const auto& [key, c] : chunks_) {
      n += containerCardinality(c);
    }
    return n;
  }

  /// Converts each chunk to its smallest representation.
  void optimize() {
    for (auto& [key, c] : chunks_) {
      std::vector<uint16_t> values = containerValues(c);
      std::vector<Run> runs = toRuns(values);
      size_t arrayBytes = values.size() * 2;
      size_t runBytes = runs.size() * 4;
      size_t bitsetBytes = 8192;
      if (runBytes < arrayBytes && runBytes < bitsetBytes) {
        c = RunContainer{std::move(runs)};
      } else if (arrayBytes <= bitsetBytes) {
        ArrayContainer arr;
        arr.values = std::move(values);
        c = std::move(arr);
      } else {
        BitsetContainer bs;
        for (uint16_t v : values) {
          bs.words[v >> 6] |= uint64_t{1} << (v & 63);
        }
        bs.cardinality = values.size();
        c = std::move(bs);
      }
    }
  }

  void serialize(std::ostream& out) const {
    detail::writeU32(out, kMagic);
    detail::writeU64(out, chunks_.size());
    for (const auto& [key, c] : chunks_) {
      detail::writeU64(out, key);
      if (std::holds_alternative<ArrayContainer>(c)) {
        const auto& arr = std::get<ArrayContainer>(c).values;
        detail::writeU8(out, 0);
        detail::writeU32(out, static_cast<uint32_t>(arr.size()));
        for (uint16_t v : arr) {
          detail::writeU16(out, v);
        }
      } else if (std::holds_alternative<BitsetContainer>(c)) {
        const auto& bs = std::get<BitsetContainer>(c);
        detail::writeU8(out, 1);
        detail::writeU32(out, static_cast<uint32_t>(bs.cardinality));
        for (uint64_t word : bs.words) {
          detail::writeU64(out, word);
        }
      } else {
        const auto& runs = std::get<RunContainer>(c).runs;
        detail::writeU8(out, 2);
        detail::writeU32(out, static_cast<uint32_t>(runs.size()));
        for (const Run& r : runs) {
          detail::writeU16(out, r.start);
          detail::writeU16(out, r.end);
        }
      }
    }
  }

  static IdSet deserialize(std::istream& in) {
    if (detail::readU32(in) != kMagic) {
      throw ValidationError("bad bitmap magic");
    }
    IdSet set;
    uint64_t nChunks = detail::readU64(in);
    for (uint64_t i = 0; i < nChunks; ++i) {
      uint64_t key = detail::readU64(in);
      uint8_t type = detail::readU8(in);
      uint32_t count = detail::readU32(in);
      if (type == 0) {
        ArrayContainer arr;
        arr.values.reserve(count);
        for (uint32_t k = 0; k < count; ++k) {
          arr.values.push_back(detail::readU16(in));
        }
        set.chunks_[key] = std::move(arr);
      } else if (type == 1) {
        BitsetContainer bs;
        bs.cardinality = count;
        for (auto& word : bs.words) {
          word = detail::readU64(in);
        }
        set.chunks_[key] = std::move(bs);
      } else if (type == 2) {
        RunContainer rc;
        rc.runs.reserve(count);
        for (uint32_t k = 0; k < count; ++k) {
          uint16_t start = detail::readU16(in);
          uint16_t end = detail::readU16(in);
          rc.runs.push_back(Run{start, end});
        }
        set.chunks_[key] = std::move(rc);
      } else {
        throw ValidationError("unknown bitmap container type");
      }
    }
    return set;
  }

  size_t serializedBytes() const {
    std::ostringstream out;
    serialize(out);
    return out.str().size();
  }

 private:
  struct ArrayContainer {
    std::vector<uint16_t> values;
    bool operator==(const ArrayContainer& o) const {
      return values == o.values;
    }
  };
  struct BitsetContainer {
    std::array<uint64_t, 1024> words{};
    uint64_t cardinality = 0;
    bool operator==(const BitsetContainer& o) const {
      return words == o.words;
    }
  };
  struct Run {
    uint16_t start;
    uint16_t end;  // inclusive
    bool operator==(const Run& o) const {
      return start == o.start && end == o.end;
    }
  };
  struct RunContainer {
    std::vector<Run> runs;
    bool operator==(const RunContainer& o) const { return runs == o.runs; }
  };
  using Container = std::variant<ArrayContainer, BitsetContainer, RunContainer>;

  static uint64_t containerCardinality(const Container& c) {
    if (std::holds_alternative<ArrayContainer>(c)) {
      return std::get<ArrayContainer>(c).values.size();
    }
    if (std::holds_alternative<BitsetContainer>(c)) {
      return std::get<BitsetContainer>(c).cardinality;
    }
    uint64_t n = 0;
    for (const Run& r : std::get<RunContainer>(c).runs) {
      n += static_cast<uint64_t>(r.end - r.start) + 1;
    }
    return n;
  }

  static std::vector<uint16_t> containerValues(const Container& c) {
    std::vector<uint16_t> out;
    if (std::holds_alternative<ArrayContainer>(c)) {
      return std::get<ArrayContainer>(c).values;
    }
    if (std::holds_alternative<BitsetContainer>(c)) {
      const auto& bs = std::get<BitsetContainer>(c);
      for (size_t w = 0; w < bs.words.size(); ++w) {
        uint64_t word = bs.words[w];
        while (word != 0) {
          int bit = __builtin_ctzll(word);
          out.push_back(static_cast<uint16_t>(w * 64 + bit));
          word &= word - 1;
        }
      }
      return out;
    }
    for (const Run& r : std::get<RunContainer>(c).runs) {
      for (uint32_t v = r.start; v <= r.end; ++v) {
        out.push_back(static_cast<uint16_t>(v));
      }
    }
    return out;
  }

  static std::vector<Run> toRuns(const std::vector<uint16_t>& sorted) {
    std::vector<Run> runs;
    for (uint16_t v : sorted) {
      if (!runs.empty() && runs.back().end + 1 == v) {
        runs.back().end = v;
      } else {
        runs.push_back(Run{v, v});
      }
    }
    return runs;
  }

  static Container toBitset(const ArrayContainer& arr) {
    BitsetContainer bs;
    for (uint16_t v : arr.values) {
      bs.words[v >> 6] |= uint64_t{1} << (v & 63);
    }
    bs.cardinality = arr.values.size();
    return bs;
  }

  static Container runToBitset(const RunContainer& rc) {
    BitsetContainer bs;
    for (const Run& r : rc.runs) {
      for (uint32_t v = r.start; v <= r.end; ++v) {
        bs.words[v >> 6] |= uint64_t{1} << (v & 63);
        ++bs.cardinality;
      }
    }
    return bs;
  }

  std::map<uint64_t, Container> chunks_;
};

enum class Polarity { TrueBitmap, FalseBitmap };

inline const char* toString(Polarity p) {
  return p == Polarity::TrueBitmap ? "true" : "false";
}

inline Polarity polarityFromString(std::string_view s) {
  if (s == "true") return Polarity::TrueBitmap;
  if (s == "false") return Polarity::FalseBitmap;
  throw ValidationError("unknown polarity: " + std::string(s));
}

/// One consent's membership at one generation time. The bitmap stores the
/// minority side; polarity says which.
struct ConsentSnapshot {
  std::string consentName;
  Polarity polarity = Polarity::TrueBitmap;
  IdSet ids;
  int64_t generatedAtMs = 0;
  uint64_t universeSize = 0;

  bool consentFor(uint64_t subject) const {
    bool member = ids.contains(subject);
    return polarity == Polarity::TrueBitmap ? member : !member;
  }
};

struct ConsentRow {
  uint64_t subjectId;
  std::string consentName;
  bool value;
};

/// Builds one snapshot per consent mentioned in the table. Subjects present
/// in the table but lacking a row for some consent default to false.
/// Conflicting duplicate rows are an error.
inline std::vector<ConsentSnapshot> buildSnapshots(
    const std::vector<ConsentRow>& rows, int64_t asOfMs) {
  std::set<uint64_t> universe;
  std::map<std::string, std::map<uint64_t, bool>> values;
  for (const auto& row : rows) {
    universe.insert(row.subjectId);
    auto [it, inserted] =
        values[row.consentName].emplace(row.subjectId, row.value);
    if (!inserted && it->second != row.value) {
      throw DuplicateSubjectRowError(
          "conflicting values for subject " + std::to_string(row.subjectId) +
          ", consent " + row.consentName);
    }
  }

  std::vector<ConsentSnapshot> snapshots;
  for (const auto& [consent, subjectValues] : values) {
    uint64_t trueCount = 0;
    for (const auto& [subject, value] : subjectValues) {
      if (value) ++trueCount;
    }
    ConsentSnapshot snap;
    snap.consentName = consent;
    snap.generatedAtMs = asOfMs;
    snap.universeSize = universe.size();
    // Store the minority side; ties go to the true bitmap.
    if (trueCount <= universe.size() - trueCount) {
      snap.polarity = Polarity::TrueBitmap;
      for (const auto& [subject, value] : subjectValues) {
        if (value) snap.ids.add(subject);
      }
    } else {
      snap.polarity = Polarity::FalseBitmap;
      for (uint64_t subject : universe) {
        auto it = subjectValues.find(subject);
        bool value = it != subjectValues.end() && it->second;
        if (!value) snap.ids.add(subject);
      }
    }
    snap.ids.optimize();
    snapshots.push_back(std::move(snap));
  }
  return snapshots;
}

/// Filesystem-backed snapshot store. Layout:
/// <root>/<consent_name>/<generated_at_iso>/bitmap.bin + meta.json.
/// Snapshots are immutable once written; loads are cached.
class SnapshotStore {
 public:
  explicit SnapshotStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }

  const std::filesystem::path& root() const { return root_; }

  void save(const ConsentSnapshot& snapshot) {
    std::filesystem::path dir =
        root_ / snapshot.consentName / msToIsoBasic(snapshot.generatedAtMs);
    std::filesystem::create_directories(dir);
    {
      std::ofstream out(dir / "bitmap.bin", std::ios::binary);
      snapshot.ids.serialize(out);
    }
    nlohmann::ordered_json meta;
    meta["consent_name"] = snapshot.consentName;
    meta["polarity"] = toString(snapshot.polarity);
    meta["universe_size"] = snapshot.universeSize;
    meta["generated_at"] = snapshot.generatedAtMs;
    meta["generated_at_iso"] = msToIso8601(snapshot.generatedAtMs);
    meta["cardinality"] = snapshot.ids.cardinality();
    std::ofstream metaOut(dir / "meta.json");
    metaOut << meta.dump(2) << "\n";
    std::lock_guard<std::mutex> guard(mutex_);
    timesCache_.erase(snapshot.consentName);
  }

  std::vector<std::string> consentNames() const {
    std::vector<std::string> names;
    if (!std::filesystem::exists(root_)) {
      return names;
    }
    for (const auto& entry : std::filesystem::directory_iterator(root_)) {
      if (entry.is_directory()) {
        names.push_back(entry.path().filename().string());
      }
    }
    std::sort(names.begin(), names.end());
    return names;
  }

  /// Generation times for one consent, ascending. Listings are cached;
  /// snapshots are immutable and writes invalidate the cache.
  std::vector<int64_t> snapshotTimes(const std::string& consent) const {
    {
      std::lock_guard<std::mutex> guard(mutex_);
      auto it = timesCache_.find(consent);
      if (it != timesCache_.end()) {
        return it->second;
      }
    }
    std::vector<int64_t> times;
    std::filesystem::path dir = root_ / consent;
    if (std::filesystem::exists(dir)) {
      for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_directory()) {
          times.push_back(isoBasicToMs(entry.path().filename().string()));
        }
      }
      std::sort(times.begin(), times.end());
    }
    std::lock_guard<std::mutex> guard(mutex_);
    timesCache_[consent] = times;
    return times;
  }

  std::shared_ptr<const ConsentSnapshot> load(const std::string& consent,
                                              int64_t generatedAtMs) const {
    std::string cacheKey = consent + "/" + std::to_string(generatedAtMs);
    {
      std::lock_guard<std::mutex> guard(mutex_);
      auto it = cache_.find(cacheKey);
      if (it != cache_.end()) {
        return it->second;
      }
    }
    std::filesystem::path dir = root_ / consent / msToIsoBasic(generatedAtMs);
    std::ifstream metaIn(dir / "meta.json");
    if (!metaIn) {
      throw NoSnapshotError(consent, generatedAtMs);
    }
    nlohmann::json meta = nlohmann::json::parse(metaIn);
    auto snapshot = std::make_shared<ConsentSnapshot>();
    snapshot->consentName = meta.at("consent_name").get<std::string>();
    snapshot->polarity =
        polarityFromString(meta.at("polarity").get<std::string>());
    snapshot->universeSize = meta.at("universe_size").get<uint64_t>();
    snapshot->generatedAtMs = meta.at("generated_at").get<int64_t>();
    std::ifstream bitmapIn(dir / "bitmap.bin", std::ios::binary);
    if (!bitmapIn) {
      throw ValidationError("missing bitmap.bin under " + dir.string());
    }
    snapshot->ids = IdSet::deserialize(bitmapIn);
    std::lock_guard<std::mutex> guard(mutex_);
    cache_[cacheKey] = snapshot;
    return snapshot;
  }

  /// The newest snapshot at or before accessTime.
  std::shared_ptr<const ConsentSnapshot> latestAt(const std::string& consent,
                                                  int64_t accessTimeMs) const {
    std::vector<int64_t> times = snapshotTimes(consent);
    int64_t best = INT64_MIN;
    for (int64_t t : times) {
      if (t <= accessTimeMs && t > best) {
        best = t;
      }
    }
    if (best == INT64_MIN) {
      throw NoSnapshotError(consent, accessTimeMs);
    }
    return load(consent, best);
  }

  /// Removes snapshots older than the retention window, always keeping the
  /// latest snapshot of each consent. Returns removed (consent, time) pairs.
  std::vector<std::pair<std::string, int64_t>> gc(int64_t retentionMs,
                                                  int64_t nowMsArg) {
    std::vector<std::pair<std::string, int64_t>> removed;
    for (const auto& consent : consentNames()) {
      std::vector<int64_t> times = snapshotTimes(consent);
      if (times.size() <= 1) {
        continue;
      }
      int64_t latest = times.back();
      for (int64_t t : times) {
        if (t == latest) continue;
        if (t < nowMsArg - retentionMs) {
          std::filesystem::remove_all(root_ / consent / msToIsoBasic(t));
          {
            std::lock_guard<std::mutex> guard(mutex_);
            cache_.erase(consent + "/" + std::to_string(t));
            timesCache_.erase(consent);
          }
          removed.emplace_back(consent, t);
        }
      }
    }
    return removed;
  }

 private:
  std::filesystem::path root_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<const ConsentSnapshot>> cache_;
  mutable std::map<std::string, std::vector<int64_t>> timesCache_;
};

inline std::vector<std::string> splitConsentList(std::string_view csv) {
  std::vector<std::string> names;
  size_t start = 0;
  while (start <= csv.size()) {
    size_t comma = csv.find(',', start);
    std::string_view part = comma == std::string_view::npos
                                ? csv.substr(start)
                                : csv.substr(start, comma - start);
    size_t b = part.find_first_not_of(" \t");
    size_t e = part.find_last_not_of(" \t");
    if (b != std::string_view::npos) {
      names.emplace_back(part.substr(b, e - b + 1));
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return names;
}

/// Conjunction over the named consents, each decoded from the latest snapshot
/// at or before accessTime. Mirrors the SQL UDF contract.
inline bool hasUserConsent(std::string_view consentsCsv, uint64_t subjectId,
                           int64_t accessTimeMs, const SnapshotStore& store) {
  std::vector<std::string> names = splitConsentList(consentsCsv);
  if (names.empty()) {
    throw ValidationError("empty consent list");
  }
  for (const auto& name : names) {
    auto snapshot = store.latestAt(name, accessTimeMs);
    if (!snapshot->consentFor(subjectId)) {
      return false;
    }
  }
  return true;
}

}  // namespace purview
