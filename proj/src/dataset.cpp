#include "mrinet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "mrinet/error.hpp"
#include "mrinet/rng.hpp"

namespace mrinet {

namespace fs = std::filesystem;

std::string_view to_string(ClassLabel label) {
  switch (label) {
    case ClassLabel::PD: return "PD";
    case ClassLabel::MSA: return "MSA";
    case ClassLabel::Normal: return "Normal";
  }
  return "?";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: return "";
  }
  return "?";
}

std::optional<ClassLabel> parse_label(std::string_view s) {
  for (ClassLabel l : kAllLabels) {
    if (s == to_string(l)) return l;
  }
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view s) {
  for (Split sp : {Split::train, Split::val, Split::test, Split::none}) {
    if (s == to_string(sp)) return sp;
  }
  return std::nullopt;
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      rows.begin(), rows.end(), [&](const ManifestRow& r) { return r.split == split; }));
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string generic(const fs::path& p) { return p.generic_string(); }

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open manifest '" + path.string() + "'");
  const std::string where = path.string();
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  if (!std::getline(is, line) || (line != "path,label,split" && line != "path,label,split\r")) {
    throw FormatError(where + ":1: expected header 'path,label,split'");
  }
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line);
    const std::string at = where + ":" + std::to_string(lineno) + ": ";
    if (f.size() != 3) throw FormatError(at + "expected 3 fields, got " + std::to_string(f.size()));
    if (f[0].empty()) throw FormatError(at + "empty path");
    const auto label = parse_label(f[1]);
    if (!label) throw FormatError(at + "unknown label '" + f[1] + "' (row '" + f[0] + "')");
    const auto split = parse_split(f[2]);
    if (!split) throw FormatError(at + "unknown split '" + f[2] + "' (row '" + f[0] + "')");
    if (!seen.insert(f[0]).second) throw FormatError(at + "duplicate path '" + f[0] + "'");
    m.rows.push_back({f[0], *label, *split});
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  const fs::path target_dir = fs::absolute(path).parent_path().lexically_normal();
  const fs::path source_dir = fs::absolute(manifest.base_dir).lexically_normal();
  std::set<std::string> seen;
  std::ostringstream os;
  os << "path,label,split\n";
  for (const ManifestRow& r : manifest.rows) {
    std::string rel = r.path;
    if (source_dir != target_dir) {
      rel = generic((source_dir / r.path).lexically_normal().lexically_relative(target_dir));
    }
    if (rel.empty() || rel.find_first_of(",\n\r") != std::string::npos) {
      throw std::invalid_argument("save_manifest: path '" + r.path + "' cannot be stored in CSV");
    }
    if (!seen.insert(rel).second) {
      throw std::invalid_argument("save_manifest: duplicate path '" + rel + "'");
    }
    os << rel << ',' << to_string(r.label) << ',' << to_string(r.split) << '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << os.str();
  if (!out.flush()) throw std::runtime_error("write to '" + path.string() + "' failed");
}

void validate_manifest_files(const DatasetManifest& manifest) {
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const fs::path p = manifest.resolve(manifest.rows[i]);
    if (!fs::is_regular_file(p)) {
      throw DataError("manifest row " + std::to_string(i + 1) + ": missing file '" + p.string() +
                      "'");
    }
  }
}

SplitRatios SplitRatios::percent() {
  // test = 0.1 of total; val = 0.15 of train; train + val = 0.9.
  const double train = 0.9 / 1.15;
  return SplitRatios{train, 0.9 - train, 0.1};
}

void SplitRatios::check() const {
  for (double r : {train, val, test}) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw std::invalid_argument("split ratios must be >= 0");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1");
  }
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios) {
  ratios.check();
  const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * r[i];
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  // Largest remainder; equal remainders go to the earlier split.
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (int k = 0; assigned < n; k = (k + 1) % 3) {
    if (r[order[k]] > 0.0) {
      ++counts[order[k]];
      ++assigned;
    }
  }
  // Requested splits stay non-empty when the class has enough rows.
  const auto requested = static_cast<std::size_t>(std::count_if(r.begin(), r.end(),
                                                                [](double x) { return x > 0; }));
  if (n < requested) {
    throw DataError("cannot fill " + std::to_string(requested) + " requested splits from " +
                    std::to_string(n) + " rows");
  }
  for (int i = 0; i < 3; ++i) {
    if (r[i] > 0.0 && counts[i] == 0) {
      int donor = 0;
      for (int j = 1; j < 3; ++j) {
        if (counts[j] > counts[donor]) donor = j;
      }
      --counts[donor];
      ++counts[i];
    }
  }
  return counts;
}

DatasetManifest split_dataset(const DatasetManifest& manifest, const SplitRatios& ratios,
                              std::uint64_t seed) {
  if (manifest.rows.empty()) throw DataError("split_dataset: manifest is empty");
  ratios.check();
  DatasetManifest out = manifest;
  for (ClassLabel label : kAllLabels) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
      if (manifest.rows[i].label == label) idx.push_back(i);
    }
    if (idx.empty()) continue;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return manifest.rows[a].path < manifest.rows[b].path;
    });
    SeededRng rng(mix_seed(seed, static_cast<std::uint64_t>(label)));
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
      std::swap(idx[i], idx[rng.below(i + 1)]);
    }
    const auto counts = split_counts(idx.size(), ratios);
    std::size_t k = 0;
    const Split order[3] = {Split::train, Split::val, Split::test};
    for (int s = 0; s < 3; ++s) {
      for (std::size_t c = 0; c < counts[s]; ++c) out.rows[idx[k++]].split = order[s];
    }
  }
  return out;
}

}  // namespace mrinet
