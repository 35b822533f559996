#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mrinet/dataset.hpp"
#include "mrinet/error.hpp"
#include "mrinet/image.hpp"
#include "mrinet/phantom.hpp"
#include "mrinet/rng.hpp"
#include "test_util.hpp"

using namespace mrinet;
using mrinet::testing::read_file;
using mrinet::testing::TempDir;
using mrinet::testing::write_file;

namespace {

DatasetManifest synthetic(std::size_t per_class) {
  DatasetManifest m;
  for (ClassLabel l : kAllLabels) {
    for (std::size_t i = 0; i < per_class; ++i) {
      m.rows.push_back({std::string(to_string(l)) + "/" + std::to_string(i) + ".pgm", l, Split::none});
    }
  }
  return m;
}

double mean_intensity(const Image& img) {
  return std::accumulate(img.pixels.begin(), img.pixels.end(), 0.0) /
         static_cast<double>(img.pixels.size());
}

}  // namespace

TEST(Pgm, RoundTrip) {
  TempDir dir;
  Image img(ImageDims{5, 3});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 17);
  write_pgm(img, dir / "a.pgm");
  EXPECT_EQ(read_pgm(dir / "a.pgm"), img);
  EXPECT_EQ(read_file(dir / "a.pgm").substr(0, 11), "P5\n5 3\n255\n");
}

TEST(Pgm, SkipsHeaderComments) {
  TempDir dir;
  write_file(dir / "c.pgm", std::string("P5\n# made by hand\n2 1\n# depth\n255\n") + "\x01\x02");
  const Image img = read_pgm(dir / "c.pgm");
  EXPECT_EQ(img.width(), 2u);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{1, 2}));
}

TEST(Pgm, RejectsAsciiVariant) {
  TempDir dir;
  write_file(dir / "p2.pgm", "P2\n2 1\n255\n1 2\n");
  EXPECT_THROW(read_pgm(dir / "p2.pgm"), FormatError);
}

TEST(Pgm, RejectsOtherMaxval) {
  TempDir dir;
  write_file(dir / "m.pgm", std::string("P5\n2 1\n15\n") + "\x01\x02");
  EXPECT_THROW(read_pgm(dir / "m.pgm"), FormatError);
}

TEST(Pgm, RejectsTruncatedRaster) {
  TempDir dir;
  write_file(dir / "t.pgm", "P5\n10 10\n255\n" + std::string(99, 'x'));
  EXPECT_THROW(read_pgm(dir / "t.pgm"), FormatError);
  EXPECT_THROW(read_pgm(dir / "missing.pgm"), std::exception);
}

TEST(Manifest, RoundTrip) {
  TempDir dir;
  DatasetManifest m = synthetic(2);
  m.rows[0].split = Split::train;
  m.rows[3].split = Split::test;
  m.base_dir = dir.path();
  save_manifest(m, dir / "manifest.csv");
  EXPECT_EQ(read_file(dir / "manifest.csv").substr(0, 16), "path,label,split");
  const DatasetManifest back = load_manifest(dir / "manifest.csv");
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.base_dir, dir.path());
}

TEST(Manifest, SaveRebasesPaths) {
  TempDir dir;
  DatasetManifest m = synthetic(1);
  m.base_dir = dir / "images";
  save_manifest(m, dir / "manifest.csv");
  const DatasetManifest back = load_manifest(dir / "manifest.csv");
  EXPECT_EQ(back.rows[0].path, "images/PD/0.pgm");
  EXPECT_EQ(back.resolve(back.rows[0]), m.resolve(m.rows[0]));
}

TEST(Manifest, UnknownLabelNamesRow) {
  TempDir dir;
  write_file(dir / "m.csv", "path,label,split\na.pgm,PD,train\nb.pgm,PDD,train\n");
  try {
    load_manifest(dir / "m.csv");
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":3:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("PDD"), std::string::npos) << msg;
    EXPECT_NE(msg.find("b.pgm"), std::string::npos) << msg;
  }
}

TEST(Manifest, RejectsBadHeaderSplitAndDuplicates) {
  TempDir dir;
  write_file(dir / "h.csv", "file,label,split\n");
  EXPECT_THROW(load_manifest(dir / "h.csv"), FormatError);
  write_file(dir / "s.csv", "path,label,split\na.pgm,PD,holdout\n");
  EXPECT_THROW(load_manifest(dir / "s.csv"), FormatError);
  write_file(dir / "d.csv", "path,label,split\na.pgm,PD,train\na.pgm,MSA,val\n");
  EXPECT_THROW(load_manifest(dir / "d.csv"), FormatError);
  write_file(dir / "e.csv", "path,label,split\na.pgm,Normal,\n");
  EXPECT_EQ(load_manifest(dir / "e.csv").rows[0].split, Split::none);
}

TEST(Manifest, MissingFileNamesRow) {
  TempDir dir;
  DatasetManifest m = synthetic(1);
  m.base_dir = dir.path();
  std::filesystem::create_directories(dir / "PD");
  write_pgm(Image(ImageDims{2, 2}), dir / "PD/0.pgm");
  try {
    validate_manifest_files(m);
    FAIL() << "expected a data error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(SplitCounts, Examples) {
  EXPECT_EQ(split_counts(10, {1.0, 0.0, 0.0}), (std::array<std::size_t, 3>{10, 0, 0}));
  EXPECT_EQ(split_counts(10, {0.8, 0.1, 0.1}), (std::array<std::size_t, 3>{8, 1, 1}));
  EXPECT_EQ(split_counts(18204, SplitRatios{}), (std::array<std::size_t, 3>{13571, 2396, 2237}));
  for (std::size_t n : {3u, 4u, 7u, 300u, 1001u}) {
    const auto c = split_counts(n, SplitRatios{});
    EXPECT_EQ(c[0] + c[1] + c[2], n);
    for (auto k : c) EXPECT_GT(k, 0u) << n;
  }
  EXPECT_THROW(split_counts(2, SplitRatios{}), DataError);
  EXPECT_EQ(split_counts(1, {1.0, 0.0, 0.0})[0], 1u);
}

TEST(SplitRatios, PercentReading) {
  const SplitRatios p = SplitRatios::percent();
  EXPECT_NEAR(p.test, 0.1, 1e-15);
  EXPECT_NEAR(p.val, 0.15 * p.train, 1e-12);
  EXPECT_NO_THROW(p.check());
  EXPECT_THROW((SplitRatios{0.5, 0.5, 0.5}.check()), std::invalid_argument);
  EXPECT_THROW((SplitRatios{1.2, -0.1, -0.1}.check()), std::invalid_argument);
}

TEST(SplitDataset, StratifiedAndCovering) {
  const DatasetManifest m = synthetic(101);
  const DatasetManifest s = split_dataset(m, SplitRatios{}, 4);
  ASSERT_EQ(s.rows.size(), m.rows.size());
  const auto expect = split_counts(101, SplitRatios{});
  for (ClassLabel l : kAllLabels) {
    std::array<std::size_t, 3> got{};
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      EXPECT_EQ(s.rows[i].path, m.rows[i].path);
      ASSERT_NE(s.rows[i].split, Split::none);
      if (s.rows[i].label == l) ++got[static_cast<std::size_t>(s.rows[i].split)];
    }
    EXPECT_EQ(got, expect);
  }
}

TEST(SplitDataset, ClassProportionsWithinOne) {
  DatasetManifest m;
  const std::array<std::size_t, 3> sizes{50, 80, 23};
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < sizes[c]; ++i) m.rows.push_back({std::to_string(c) + "_" + std::to_string(i), kAllLabels[c], Split::none});
  }
  const DatasetManifest s = split_dataset(m, {0.8, 0.1, 0.1}, 1);
  for (std::size_t c = 0; c < 3; ++c) {
    std::array<double, 3> got{};
    for (const auto& r : s.rows) {
      if (r.label == kAllLabels[c]) got[static_cast<std::size_t>(r.split)] += 1;
    }
    const std::array<double, 3> ideal{0.8 * sizes[c], 0.1 * sizes[c], 0.1 * sizes[c]};
    for (int k = 0; k < 3; ++k) EXPECT_LE(std::abs(got[k] - ideal[k]), 1.0) << c << " " << k;
  }
}

TEST(SplitDataset, DeterministicAndSeedSensitive) {
  const DatasetManifest m = synthetic(40);
  EXPECT_EQ(split_dataset(m, SplitRatios{}, 9), split_dataset(m, SplitRatios{}, 9));
  EXPECT_NE(split_dataset(m, SplitRatios{}, 9), split_dataset(m, SplitRatios{}, 10));
  // Input order does not matter.
  DatasetManifest rev = m;
  std::reverse(rev.rows.begin(), rev.rows.end());
  const DatasetManifest a = split_dataset(m, SplitRatios{}, 9), b = split_dataset(rev, SplitRatios{}, 9);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].split, b.rows[a.rows.size() - 1 - i].split);
}

TEST(SplitDataset, SplitsAreDisjoint) {
  const DatasetManifest s = split_dataset(synthetic(30), SplitRatios{}, 2);
  std::set<std::string> seen;
  for (const auto& r : s.rows) EXPECT_TRUE(seen.insert(r.path).second);
  EXPECT_EQ(s.count(Split::train) + s.count(Split::val) + s.count(Split::test), s.rows.size());
}

TEST(Phantom, Deterministic) {
  PhantomParams p;
  p.seed = 17;
  p.label = ClassLabel::MSA;
  EXPECT_EQ(generate_phantom(p), generate_phantom(p));
  PhantomParams q = p;
  q.seed = 18;
  EXPECT_NE(generate_phantom(p), generate_phantom(q));
}

TEST(Phantom, PdDiffersFromNormalOnlyInsideMask) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PhantomParams p;
    p.noise_std = 0.0;
    p.seed = seed;
    p.label = ClassLabel::Normal;
    const Image normal = generate_phantom(p);
    const auto mask = phantom_blob_mask(p);
    p.label = ClassLabel::PD;
    const Image pd = generate_phantom(p);
    std::size_t inside = 0;
    for (std::size_t i = 0; i < normal.pixels.size(); ++i) {
      if (!mask[i]) EXPECT_EQ(normal.pixels[i], pd.pixels[i]) << seed << " " << i;
      inside += mask[i] && normal.pixels[i] != pd.pixels[i];
    }
    EXPECT_GT(inside, 0u);
  }
}

TEST(Phantom, ClassDoesNotShiftMeanIntensity) {
  // Mean over 300 images per class; PD and Normal differ by under 1%.
  std::array<double, 3> mean{};
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::uint64_t i = 0; i < 300; ++i) {
      PhantomParams p;
      p.seed = mix_seed(11, i);
      p.label = kAllLabels[c];
      mean[c] += mean_intensity(generate_phantom(p)) / 300.0;
    }
  }
  const double pd = mean[0], msa = mean[1], normal = mean[2];
  EXPECT_LT(std::abs(pd - normal) / normal, 0.01);
  EXPECT_LT(std::abs(msa - normal) / normal, 0.01);
}

TEST(Phantom, BlobIsDetectableByThreshold) {
  // Count of bright pixels inside the mask separates PD from Normal.
  int correct = 0, total = 0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    for (ClassLabel l : {ClassLabel::PD, ClassLabel::Normal}) {
      PhantomParams p;
      p.seed = mix_seed(12, i);
      p.label = l;
      const Image img = generate_phantom(p);
      const auto mask = phantom_blob_mask(p);
      int bright = 0;
      for (std::size_t k = 0; k < mask.size(); ++k) bright += mask[k] && img.pixels[k] > 150;
      correct += (bright >= 4) == (l == ClassLabel::Normal);
      ++total;
    }
  }
  EXPECT_GT(100.0 * correct / total, 95.0);
}

TEST(Phantom, RejectsTinyCanvas) {
  PhantomParams p;
  p.size = 16;
  EXPECT_THROW(generate_phantom(p), std::invalid_argument);
}

TEST(GenerateDataset, CountsNamesAndRerun) {
  TempDir a, b;
  const DatasetManifest m = generate_dataset(5, a.path(), 42);
  ASSERT_EQ(m.rows.size(), 15u);
  for (ClassLabel l : kAllLabels) {
    EXPECT_EQ(std::count_if(m.rows.begin(), m.rows.end(), [&](const auto& r) { return r.label == l; }), 5);
  }
  EXPECT_EQ(m.rows[0].path, "PD_0000.pgm");
  for (const auto& r : m.rows) EXPECT_EQ(r.split, Split::none);
  const DatasetManifest m2 = generate_dataset(5, b.path(), 42);
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    EXPECT_EQ(read_file(m.resolve(m.rows[i])), read_file(m2.resolve(m2.rows[i])));
  }
  EXPECT_THROW(generate_dataset(0, b.path(), 1), std::invalid_argument);
}
