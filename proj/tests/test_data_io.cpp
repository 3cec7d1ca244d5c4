#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fedinv/data_io.hpp"
#include "fedinv/errors.hpp"
#include "fedinv/rng.hpp"

using namespace fedinv;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "fedinv_io_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& b) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void push_u32_be(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

// 2 images of 2x3 pixels plus matching labels {1, 0}
void write_idx_fixture(const std::filesystem::path& images,
                       const std::filesystem::path& labels) {
  std::vector<unsigned char> img;
  push_u32_be(img, 0x00000803);
  push_u32_be(img, 2);
  push_u32_be(img, 2);
  push_u32_be(img, 3);
  const unsigned char first[6] = {0, 255, 0, 255, 0, 255};
  img.insert(img.end(), first, first + 6);
  img.insert(img.end(), 6, 128);
  write_bytes(images, img);

  std::vector<unsigned char> lab;
  push_u32_be(lab, 0x00000801);
  push_u32_be(lab, 2);
  lab.push_back(1);
  lab.push_back(0);
  write_bytes(labels, lab);
}

bool contains(const std::string& s, const std::string& needle) {
  return s.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("synthetic datasets are pure in their arguments") {
  for (SynthKind kind : {SynthKind::GaussianBlobs, SynthKind::StripedPatterns}) {
    const Dataset a = synth_dataset(kind, 12, 6, 6, 4, 77);
    const Dataset b = synth_dataset(kind, 12, 6, 6, 4, 77);
    CHECK(a.images.values() == b.images.values());
    CHECK(a.labels == b.labels);
    CHECK(!a.provenance.empty());

    const Dataset c = synth_dataset(kind, 12, 6, 6, 4, 78);
    CHECK(a.images.values() != c.images.values());

    REQUIRE(a.size() == 12);
    REQUIRE(a.images.shape() == std::vector<std::size_t>{12, 1, 6, 6});
    for (double v : a.images.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (std::size_t y : a.labels) CHECK(y < 4);
  }

  const Dataset single = synth_dataset(SynthKind::GaussianBlobs, 1, 4, 4, 3, 5);
  CHECK(single.size() == 1);
  CHECK(single.labels[0] < 3);

  CHECK_THROWS_AS(synth_dataset(SynthKind::GaussianBlobs, 0, 4, 4, 3, 5),
                  std::invalid_argument);
  CHECK_THROWS_AS(synth_dataset(SynthKind::GaussianBlobs, 1, 0, 4, 3, 5),
                  std::invalid_argument);
  CHECK_THROWS_AS(synth_dataset(SynthKind::GaussianBlobs, 1, 4, 4, 0, 5),
                  std::invalid_argument);
}

TEST_CASE("synthetic classes are separated in mean image") {
  for (SynthKind kind : {SynthKind::StripedPatterns, SynthKind::GaussianBlobs}) {
    const Dataset d = synth_dataset(kind, 40, 8, 8, 2, 11);
    const std::size_t pixels = 64;
    std::vector<double> mean0(pixels, 0.0), mean1(pixels, 0.0);
    std::size_t n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      auto& mean = d.labels[i] == 0 ? mean0 : mean1;
      (d.labels[i] == 0 ? n0 : n1) += 1;
      for (std::size_t k = 0; k < pixels; ++k)
        mean[k] += d.images.values()[i * pixels + k];
    }
    REQUIRE(n0 > 0);
    REQUIRE(n1 > 0);
    double dist2 = 0.0;
    for (std::size_t k = 0; k < pixels; ++k) {
      const double diff = mean0[k] / n0 - mean1[k] / n1;
      dist2 += diff * diff;
    }
    CHECK(std::sqrt(dist2) > 0.1);
  }
}

TEST_CASE("IDX loader reads a hand-crafted fixture byte for byte") {
  const auto dir = fresh_dir("idx");
  const auto images = dir / "images.idx";
  const auto labels = dir / "labels.idx";
  write_idx_fixture(images, labels);

  const Dataset d = load_idx(images.string(), labels.string(), 2, true);
  REQUIRE(d.images.shape() == std::vector<std::size_t>{2, 1, 2, 3});
  REQUIRE(d.labels == std::vector<std::size_t>{1, 0});
  CHECK(d.images.values()[0] == 0.0);
  CHECK(d.images.values()[1] == 1.0);
  CHECK(d.images.values()[2] == 0.0);
  CHECK(d.images.values()[5] == 1.0);
  for (std::size_t k = 6; k < 12; ++k)
    CHECK(d.images.values()[k] == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
  CHECK(contains(d.provenance, "idx("));

  const Dataset first = load_idx(images.string(), labels.string(), 1, true);
  CHECK(first.size() == 1);
  CHECK(first.labels[0] == 1);

  const Dataset raw = load_idx(images.string(), labels.string(), 2, false);
  CHECK(raw.images.values()[1] == 255.0);
  CHECK(raw.images.values()[6] == 128.0);
}

TEST_CASE("IDX loader rejects malformed files with precise messages") {
  const auto dir = fresh_dir("idx_bad");
  const auto images = dir / "images.idx";
  const auto labels = dir / "labels.idx";
  write_idx_fixture(images, labels);

  // asking for more than the files hold names both counts
  try {
    load_idx(images.string(), labels.string(), 3, true);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(contains(e.what(), "3"));
    CHECK(contains(e.what(), "2"));
  }

  CHECK_THROWS_AS(load_idx(images.string(), labels.string(), 0, true),
                  std::invalid_argument);
  CHECK_THROWS_AS(load_idx((dir / "missing.idx").string(), labels.string(), 1, true),
                  FormatError);

  // labels file with the image magic
  const auto swapped = dir / "swapped.idx";
  {
    std::vector<unsigned char> lab;
    push_u32_be(lab, 0x00000803);
    push_u32_be(lab, 2);
    lab.push_back(0);
    lab.push_back(0);
    write_bytes(swapped, lab);
  }
  CHECK_THROWS_AS(load_idx(images.string(), swapped.string(), 2, true), FormatError);

  // image payload shorter than the declared count
  const auto truncated = dir / "truncated.idx";
  {
    std::vector<unsigned char> img;
    push_u32_be(img, 0x00000803);
    push_u32_be(img, 2);
    push_u32_be(img, 2);
    push_u32_be(img, 3);
    img.insert(img.end(), 7, 9);  // 7 of the 12 promised bytes
    write_bytes(truncated, img);
  }
  CHECK_THROWS_AS(load_idx(truncated.string(), labels.string(), 2, true), FormatError);

  // header counts disagree between the two files
  const auto miscounted = dir / "miscounted.idx";
  {
    std::vector<unsigned char> lab;
    push_u32_be(lab, 0x00000801);
    push_u32_be(lab, 3);
    lab.insert(lab.end(), 3, 0);
    write_bytes(miscounted, lab);
  }
  CHECK_THROWS_AS(load_idx(images.string(), miscounted.string(), 2, true), FormatError);
}

TEST_CASE("image dumps follow the PGM format and rounding rule") {
  const auto dir = fresh_dir("dump");

  Tensor gray({1, 1, 2, 2}, {0.5, 0.5, 0.5, 0.5});
  const auto paths = dump_images(gray, dir.string(), "gray_");
  REQUIRE(paths.size() == 1);
  CHECK(contains(paths[0], "gray_0000.pgm"));
  const std::vector<unsigned char> expected = {'P', '5', '\n', '2', ' ', '2', '\n',
                                               '2', '5', '5', '\n', 128, 128, 128, 128};
  CHECK(read_bytes(paths[0]) == expected);

  Tensor zeros({1, 1, 2, 2});
  const auto zp = dump_images(zeros, dir.string(), "zero_");
  const std::vector<unsigned char> zbytes = read_bytes(zp[0]);
  for (std::size_t k = zbytes.size() - 4; k < zbytes.size(); ++k)
    CHECK(zbytes[k] == 0);

  Tensor bad({1, 1, 2, 2}, {0.0, 0.5, 1.2, 0.0});
  CHECK_THROWS_AS(dump_images(bad, dir.string(), "bad_"), std::invalid_argument);
  CHECK_THROWS_AS(dump_images(Tensor({1, 2, 2, 2}), dir.string(), "c2_"), ShapeError);
  CHECK_THROWS_AS(dump_images(Tensor({4, 4}), dir.string(), "flat_"), ShapeError);
}

TEST_CASE("three-channel dumps interleave pixels in PPM order") {
  const auto dir = fresh_dir("ppm");
  // planes: R = 0, G = 0.5, B = 1 everywhere on a 1x2 image
  Tensor batch({1, 3, 1, 2}, {0.0, 0.0, 0.5, 0.5, 1.0, 1.0});
  const auto paths = dump_images(batch, dir.string(), "rgb_");
  REQUIRE(paths.size() == 1);
  CHECK(contains(paths[0], "rgb_0000.ppm"));
  const std::vector<unsigned char> expected = {'P', '6', '\n', '2', ' ', '1', '\n',
                                               '2', '5', '5', '\n',
                                               0, 128, 255, 0, 128, 255};
  CHECK(read_bytes(paths[0]) == expected);

  const Tensor back = load_pnm(paths[0]);
  REQUIRE(back.shape() == std::vector<std::size_t>{3, 1, 2});
  CHECK(back.values()[0] == 0.0);
  CHECK(back.values()[2] == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
  CHECK(back.values()[4] == 1.0);
}

TEST_CASE("dump and reload stay within one quantization step") {
  const auto dir = fresh_dir("roundtrip");
  Rng rng(31);
  Tensor batch({3, 1, 5, 4});
  for (double& v : batch.values()) v = rng.uniform();

  const auto paths = dump_images(batch, dir.string(), "img_");
  REQUIRE(paths.size() == 3);
  const std::size_t pixels = 20;
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor back = load_pnm(paths[i]);
    REQUIRE(back.shape() == std::vector<std::size_t>{1, 5, 4});
    for (std::size_t k = 0; k < pixels; ++k)
      CHECK(std::abs(back.values()[k] - batch.values()[i * pixels + k]) < 1.0 / 255.0);
  }

  // a second pass through the 8-bit bottleneck changes nothing
  Tensor reloaded({3, 1, 5, 4});
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor back = load_pnm(paths[i]);
    for (std::size_t k = 0; k < pixels; ++k)
      reloaded.values()[i * pixels + k] = back.values()[k];
  }
  const auto second = dump_images(reloaded, dir.string(), "again_");
  for (std::size_t i = 0; i < 3; ++i) {
    const auto a = read_bytes(paths[i]);
    const auto b = read_bytes(second[i]);
    CHECK(a == b);
    const Tensor once = load_pnm(paths[i]);
    const Tensor twice = load_pnm(second[i]);
    CHECK(once.values() == twice.values());
  }

  CHECK_THROWS_AS(load_pnm((dir / "missing.pgm").string()), FormatError);
}

TEST_CASE("CSV lines quote exactly the cells that need it") {
  CHECK(csv_line({"a", "b", "c"}) == "a,b,c\n");
  CHECK(csv_line({"1.5", "-2"}) == "1.5,-2\n");
  CHECK(csv_line({"with,comma", "plain"}) == "\"with,comma\",plain\n");
  CHECK(csv_line({"say \"hi\""}) == "\"say \"\"hi\"\"\"\n");
  CHECK(csv_line({"two\nlines"}) == "\"two\nlines\"\n");
  CHECK(csv_line({""}) == "\n");
}

TEST_CASE("CSV files start with the header and keep row widths") {
  const auto dir = fresh_dir("csv");
  const auto path = (dir / "out.csv").string();

  write_csv(path, {"name", "value"}, {{"alpha", "1"}, {"beta, the second", "2"}});
  const auto bytes = read_bytes(path);
  const std::string text(bytes.begin(), bytes.end());
  CHECK(text == "name,value\nalpha,1\n\"beta, the second\",2\n");

  CHECK_THROWS_AS(write_csv(path, {}, {}), std::invalid_argument);
  CHECK_THROWS_AS(write_csv(path, {"a", "b"}, {{"only one"}}), std::invalid_argument);
}
