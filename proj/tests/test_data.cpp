#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "csab/dataset.hpp"
#include "csab/image.hpp"
#include "csab/log.hpp"
#include "doctest.h"
#include "support/synthetic.hpp"
#include "support/tmpdir.hpp"

using namespace csab;
namespace fs = std::filesystem;

TEST_CASE("ppm round trip is exact on the 255-level grid") {
  testutil::TempDir tmp;
  Tensor<float> img({5, 7, 3});
  for (std::size_t i = 0; i < img.numel(); ++i)
    img[i] = static_cast<float>((i * 11) % 256) / 255.0f;
  const std::string path = tmp.file("rt.ppm");
  write_ppm(path, img);
  const Tensor<float> back = read_ppm(path);
  REQUIRE(back.shape() == img.shape());
  for (std::size_t i = 0; i < img.numel(); ++i) CHECK(back[i] == img[i]);
}

TEST_CASE("ppm reader enforces the format") {
  testutil::TempDir tmp;
  auto write_raw = [&](const std::string& name, const std::string& bytes) {
    std::ofstream out(tmp.file(name), std::ios::binary);
    out << bytes;
    return tmp.file(name);
  };
  CHECK_THROWS_AS(read_ppm(write_raw("p3.ppm", "P3\n1 1\n255\n1 2 3\n")),
                  DataError);
  CHECK_THROWS_AS(
      read_ppm(write_raw("max.ppm", std::string("P6\n1 1\n65535\n") +
                                        std::string(6, '\0'))),
      DataError);
  CHECK_THROWS_AS(read_ppm(write_raw("trunc.ppm", "P6\n2 2\n255\nab")),
                  DataError);
  CHECK_THROWS_AS(read_ppm(write_raw("dims.ppm", "P6\n0 2\n255\n")),
                  DataError);
  CHECK_THROWS_AS(read_ppm(tmp.file("absent.ppm")), DataError);

  // Comments between header tokens are fine.
  const std::string ok =
      "P6 # format\n# a comment line\n2 1 # dims\n255\n" +
      std::string("\x10\x20\x30\x40\x50\x60", 6);
  const Tensor<float> img = read_ppm(write_raw("ok.ppm", ok));
  CHECK(img.shape() == Shape{1, 2, 3});
  CHECK(img[0] == doctest::Approx(16.0f / 255.0f));
}

TEST_CASE("write_ppm_gray accepts [H,W] and [H,W,1]") {
  testutil::TempDir tmp;
  Tensor<float> a({3, 4}, 0.5f);
  Tensor<float> b({3, 4, 1}, 0.25f);
  write_ppm_gray(tmp.file("a.ppm"), a);
  write_ppm_gray(tmp.file("b.ppm"), b);
  const Tensor<float> back = read_ppm(tmp.file("a.ppm"));
  CHECK(back.dim(2) == 3);
  CHECK(back[0] == back[1]);
  CHECK(back[1] == back[2]);
  CHECK_THROWS_AS(write_ppm_gray(tmp.file("c.ppm"), Tensor<float>({2, 2, 3})),
                  ShapeError);
}

TEST_CASE("resize_bilinear") {
  Tensor<float> img({2, 2, 1}, {0.0f, 1.0f, 1.0f, 0.0f});
  SUBCASE("same size is the identity") {
    const Tensor<float> out = resize_bilinear(img, 2, 2);
    CHECK(out == img);
  }
  SUBCASE("constant images stay constant under any scale") {
    Tensor<float> c({3, 5, 2}, 0.625f);
    const Tensor<float> out = resize_bilinear(c, 7, 4);
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.625f);
  }
  SUBCASE("upscale interpolates between neighbors") {
    const Tensor<float> out = resize_bilinear(img, 4, 4);
    REQUIRE(out.shape() == Shape{4, 4, 1});
    // Corners clamp to the nearest source pixel.
    CHECK(out[0] == 0.0f);
    CHECK(out[3] == 1.0f);
    // dst (1,1) lands at src (0.25, 0.25): 0.75^2*0 + 2*0.25*0.75*1 +
    // 0.25^2*0 = 0.375, and the pattern is symmetric.
    CHECK(out[(1 * 4 + 1)] == doctest::Approx(0.375f));
    CHECK(out[(2 * 4 + 2)] == doctest::Approx(0.375f));
  }
}

TEST_CASE("load_image resizes and rejects unsupported formats") {
  testutil::TempDir tmp;
  write_ppm(tmp.file("x.ppm"), synth::class_image(0, 1));
  const Tensor<float> img = load_image(tmp.file("x.ppm"), 16, 24);
  CHECK(img.shape() == Shape{16, 24, 3});
  std::ofstream(tmp.file("x.png")) << "not a png";
  CHECK_THROWS_WITH_AS(load_image(tmp.file("x.png"), 8, 8),
                       doctest::Contains("unsupported image format"),
                       DataError);
}

TEST_CASE("default label map merges variants and excludes the last steps") {
  const LabelMap m = LabelMap::default_map();
  CHECK_NOTHROW(m.validate());
  CHECK(m.num_classes() == 6);
  CHECK(m.entries.size() == 12);
  CHECK(m.map_raw(m.raw_index("Step_2_Left")) ==
        m.map_raw(m.raw_index("Step_2_Right")));
  CHECK(m.map_raw(m.raw_index("Step_4_Left")) ==
        m.map_raw(m.raw_index("Step_4_Right")));
  CHECK(m.map_raw(m.raw_index("Step_5_Left")) ==
        m.map_raw(m.raw_index("Step_5_Right")));
  CHECK(m.map_raw(m.raw_index("Step_6_Left")) ==
        m.map_raw(m.raw_index("Step_6_Right")));
  CHECK(m.map_raw(m.raw_index("Step_7_Left")) == kExcluded);
  CHECK(m.map_raw(m.raw_index("Step_7_Right")) == kExcluded);
  CHECK(m.raw_index("Step_9") == -1);
  std::set<int> mapped;
  for (const auto& [name, cls] : m.entries)
    if (cls != kExcluded) mapped.insert(cls);
  CHECK(mapped == std::set<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("label map text format round trips") {
  const LabelMap m = LabelMap::default_map();
  const LabelMap back = LabelMap::parse(m.serialize());
  CHECK(back.entries == m.entries);
  CHECK(back.class_names == m.class_names);

  CHECK_THROWS_AS(LabelMap::parse("OnlyName\n"), DataError);
  CHECK_THROWS_AS(LabelMap::parse("A 0\nA 1\n"), DataError);
  CHECK_THROWS_AS(LabelMap::parse("A excluded\n"), DataError);
  CHECK_THROWS_AS(LabelMap::parse("A 0 trailing\n"), DataError);
  CHECK_THROWS_AS(LabelMap::parse("A 2\n"), DataError);  // class 0,1 unhit

  const LabelMap custom = LabelMap::parse(
      "# comment\nWash 0\nRinse 1\nDry excluded\n@class 0 wash\n@class 1 "
      "rinse\n");
  CHECK(custom.num_classes() == 2);
  CHECK(custom.class_names[1] == "rinse");
  CHECK(custom.map_raw(custom.raw_index("Dry")) == kExcluded);
}

TEST_CASE("derive_source_video strips the trailing frame counter") {
  CHECK(derive_source_video("/a/b/clip_01_0003.ppm") == "clip_01");
  CHECK(derive_source_video("clip7_12.ppm") == "clip7");
  CHECK(derive_source_video("video.ppm") == "video");
  CHECK(derive_source_video("v_abc.ppm") == "v_abc");
  CHECK(derive_source_video("x_.ppm") == "x_");
}

TEST_CASE("scan_dataset walks env/class trees") {
  testutil::TempDir tmp;
  synth::write_tree(tmp.path, 10, 5);
  const LabelMap lm = LabelMap::default_map();

  const ScanOutcome sc = scan_dataset(tmp.path, lm);
  CHECK(sc.skipped.empty());
  REQUIRE(sc.manifest.records.size() == 60);
  CHECK(sc.manifest.checksum == sc.manifest.compute_checksum());
  CHECK(std::is_sorted(sc.manifest.records.begin(), sc.manifest.records.end(),
                       [](const SampleRecord& a, const SampleRecord& b) {
                         return a.path < b.path;
                       }));
  std::set<int> envs;
  for (const auto& r : sc.manifest.records) {
    envs.insert(r.environment);
    CHECK(r.mapped_class >= 0);
    CHECK(r.mapped_class < 6);
    CHECK(lm.entries[static_cast<std::size_t>(r.raw_class)].second ==
          r.mapped_class);
    CHECK_FALSE(r.source_video.empty());
  }
  CHECK(envs == std::set<int>{0, 1, 2, 3, 4});

  SUBCASE("undecodable files are skipped with a reason") {
    std::ofstream(fs::path(tmp.path) / "env0" / "Step_1" / "junk.ppm")
        << "not a ppm";
    const ScanOutcome sc2 = scan_dataset(tmp.path, lm);
    CHECK(sc2.manifest.records.size() == 60);
    REQUIRE(sc2.skipped.size() == 1);
    CHECK(sc2.skipped[0].first.find("junk.ppm") != std::string::npos);
    CHECK_FALSE(sc2.skipped[0].second.empty());
  }
  SUBCASE("non-image files are ignored entirely") {
    std::ofstream(fs::path(tmp.path) / "env0" / "Step_1" / "notes.txt")
        << "hello";
    const ScanOutcome sc2 = scan_dataset(tmp.path, lm);
    CHECK(sc2.manifest.records.size() == 60);
    CHECK(sc2.skipped.empty());
  }
  SUBCASE("exclude list drops by root-relative path") {
    const std::string rel = "env0/Step_1/clip0_0000.ppm";
    const ScanOutcome sc2 = scan_dataset(tmp.path, lm, {rel});
    CHECK(sc2.manifest.records.size() == 59);
    REQUIRE(sc2.skipped.size() == 1);
    CHECK(sc2.skipped[0].second == "on the exclude list");
  }
  SUBCASE("unknown class directories are an error") {
    fs::create_directories(fs::path(tmp.path) / "env1" / "Step_8");
    CHECK_THROWS_WITH_AS(scan_dataset(tmp.path, lm),
                         doctest::Contains("Step_8"), DataError);
  }
  SUBCASE("non-environment directories are an error") {
    fs::create_directories(fs::path(tmp.path) / "extra");
    CHECK_THROWS_AS(scan_dataset(tmp.path, lm), DataError);
  }
  SUBCASE("a missing root is an error") {
    CHECK_THROWS_AS(scan_dataset(tmp.file("nope"), lm), DataError);
  }
}

TEST_CASE("manifest serialization round trips with its label map") {
  testutil::TempDir tmp;
  synth::write_tree(tmp.path, 4, 2);
  const ScanOutcome sc = scan_dataset(tmp.path, LabelMap::default_map());
  const std::string path = tmp.file("m.tsv");
  save_manifest(sc.manifest, path);

  const DatasetManifest back = load_manifest(path);
  CHECK(back.records == sc.manifest.records);
  CHECK(back.label_map.entries == sc.manifest.label_map.entries);
  CHECK(back.label_map.class_names == sc.manifest.label_map.class_names);
  CHECK(back.checksum == sc.manifest.checksum);

  SUBCASE("the header line is required") {
    std::ofstream(tmp.file("bad.tsv")) << "a\t0\t0\t0\n";
    CHECK_THROWS_WITH_AS(load_manifest(tmp.file("bad.tsv")),
                         doctest::Contains("#csab-manifest v1"), DataError);
  }
  SUBCASE("a tampered mapped column is caught against the label map") {
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    const std::size_t tab = text.find("\t0\t0\t");
    REQUIRE(tab != std::string::npos);
    text.replace(tab, 5, "\t0\t3\t");
    std::ofstream(tmp.file("tampered.tsv")) << text;
    CHECK_THROWS_WITH_AS(load_manifest(tmp.file("tampered.tsv")),
                         doctest::Contains("disagrees"), DataError);
  }
  SUBCASE("column count is validated") {
    std::ofstream(tmp.file("cols.tsv"))
        << "#csab-manifest v1\na.ppm\t0\t0\n";
    CHECK_THROWS_WITH_AS(load_manifest(tmp.file("cols.tsv")),
                         doctest::Contains("4 tab-separated"), DataError);
  }
}

TEST_CASE("environment_split holds out exactly one environment") {
  testutil::TempDir tmp;
  synth::write_tree(tmp.path, 10, 5);
  const ScanOutcome sc = scan_dataset(tmp.path, LabelMap::default_map());

  for (int env = 0; env < 5; ++env) {
    const SplitResult sr = environment_split(sc.manifest, env);
    CHECK(sr.spec.test_environment == env);
    CHECK(sr.spec.train_environments.size() == 4);
    CHECK_FALSE(sr.spec.train_environments.count(env));
    CHECK(sr.train.size() + sr.test.size() == 60);
    for (const auto& r : sr.test) CHECK(r.environment == env);
    for (const auto& r : sr.train) CHECK(r.environment != env);
  }
  CHECK_THROWS_WITH_AS(environment_split(sc.manifest, 9),
                       doctest::Contains("available"), DataError);
}

TEST_CASE("excluded classes are dropped by the split") {
  testutil::TempDir tmp;
  synth::write_tree(tmp.path, 4, 2);
  // Add excluded-step images in both environments.
  for (int env = 0; env < 2; ++env) {
    const fs::path dir =
        fs::path(tmp.path) / ("env" + std::to_string(env)) / "Step_7_Left";
    fs::create_directories(dir);
    write_ppm((dir / "clip9_0000.ppm").string(), synth::class_image(0, 7));
  }
  const ScanOutcome sc = scan_dataset(tmp.path, LabelMap::default_map());
  CHECK(sc.manifest.records.size() == 26);
  std::size_t excluded = 0;
  for (const auto& r : sc.manifest.records)
    if (r.mapped_class == kExcluded) ++excluded;
  CHECK(excluded == 2);

  const SplitResult sr = environment_split(sc.manifest, 1);
  CHECK(sr.train.size() + sr.test.size() == 24);
  for (const auto& r : sr.train) CHECK(r.mapped_class != kExcluded);
  for (const auto& r : sr.test) CHECK(r.mapped_class != kExcluded);
}
