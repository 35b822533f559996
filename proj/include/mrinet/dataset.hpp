#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mrinet {

enum class ClassLabel { PD, MSA, Normal };
enum class Split { train, val, test, none };

inline constexpr std::array<ClassLabel, 3> kAllLabels{ClassLabel::PD, ClassLabel::MSA,
                                                      ClassLabel::Normal};

std::string_view to_string(ClassLabel label);
std::string_view to_string(Split split);
std::optional<ClassLabel> parse_label(std::string_view s);
std::optional<Split> parse_split(std::string_view s);

struct ManifestRow {
  std::string path;  // relative to the manifest directory, '/' separators
  ClassLabel label = ClassLabel::PD;
  Split split = Split::none;
  bool operator==(const ManifestRow&) const = default;
};

struct DatasetManifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRow> rows;

  std::filesystem::path resolve(const ManifestRow& row) const { return base_dir / row.path; }
  std::size_t count(Split split) const;
  bool operator==(const DatasetManifest& o) const { return rows == o.rows; }
};

// CSV with header "path,label,split". An empty split field means unassigned.
// Errors (FormatError) carry the 1-based line number.
DatasetManifest load_manifest(const std::filesystem::path& path);
// Rows are rewritten relative to the directory of `path`.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
// Throws DataError naming the first row whose file does not exist.
void validate_manifest_files(const DatasetManifest& manifest);

struct SplitRatios {
  double train = 13571.0 / 18204.0;
  double val = 2396.0 / 18204.0;
  double test = 2237.0 / 18204.0;

  // Stated-percentage reading: test 10% of the total, val 15% of train.
  static SplitRatios percent();
  void check() const;
};

// Stratified: rows of each class are sorted by path, shuffled with a seeded
// Fisher-Yates and assigned contiguously (train, val, test) using
// largest-remainder counts. Row order in the result matches the input.
DatasetManifest split_dataset(const DatasetManifest& manifest, const SplitRatios& ratios,
                              std::uint64_t seed);

// Per-class split sizes that split_dataset would use.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios);

}  // namespace mrinet
