#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "csab/tensor.hpp"

namespace csab {

// Mapped-class value for raw classes that take no part in training.
inline constexpr int kExcluded = -1;

// Raw class name -> mapped class index (or kExcluded), plus display names
// for the mapped classes. The raw class id of a record is its position in
// `entries`.
struct LabelMap {
  std::vector<std::pair<std::string, int>> entries;
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return class_names.size(); }

  // Position of a raw class name in `entries`, or -1 when unknown.
  int raw_index(const std::string& name) const;

  // Mapped class of a raw class id; throws on out-of-range ids.
  int map_raw(int raw_class) const;

  // Every mapped value must land in {0..K-1} or kExcluded, and every
  // mapped class index must be hit by at least one raw class.
  void validate() const;

  // The ten accounted-for movements of the 12-movement source map onto
  // six steps (left/right variants merged); the remaining two are
  // excluded rather than guessed.
  static LabelMap default_map();

  // Line-oriented file: `RawName <index|excluded>` entries plus optional
  // `@class <index> <display name>` lines; '#' starts a comment.
  static LabelMap parse(const std::string& text);
  std::string serialize() const;
  static LabelMap load(const std::string& path);
};

struct SampleRecord {
  std::string path;
  int raw_class = 0;
  int mapped_class = kExcluded;
  int environment = 0;
  std::string source_video;

  bool operator==(const SampleRecord&) const = default;
};

// File stem with a trailing frame counter (final "_<digits>") removed;
// identifies frames that came from the same source clip.
std::string derive_source_video(const std::string& path);

struct DatasetManifest {
  std::vector<SampleRecord> records;
  LabelMap label_map;
  std::uint64_t checksum = 0;

  // FNV-1a over the serialized record lines.
  std::uint64_t compute_checksum() const;
};

struct ScanOutcome {
  DatasetManifest manifest;
  // (path, reason) for files that exist but were not ingested.
  std::vector<std::pair<std::string, std::string>> skipped;
};

// Walks root/env<k>/<RawClassName>/ and builds a manifest with one record
// per decodable image, ordered lexicographically by path. Paths listed in
// `exclude` (relative to root) are dropped and reported as skipped.
ScanOutcome scan_dataset(const std::string& root, const LabelMap& label_map,
                         const std::set<std::string>& exclude = {});

// Text file of root-relative paths, one per line, '#' comments allowed.
std::set<std::string> load_exclude_list(const std::string& path);

std::string serialize_manifest(const DatasetManifest& m);
void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

struct SplitSpec {
  int test_environment = -1;
  std::set<int> train_environments;
};

struct SplitResult {
  SplitSpec spec;
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> test;
};

// Holds out one environment for test, trains on the rest; records with
// excluded mapped classes are dropped from both halves.
SplitResult environment_split(const DatasetManifest& m, int test_env);

}  // namespace csab
