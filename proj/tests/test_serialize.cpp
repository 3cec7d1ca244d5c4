#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fedinv/data_io.hpp"
#include "fedinv/errors.hpp"
#include "fedinv/fedavg.hpp"
#include "fedinv/models.hpp"
#include "fedinv/serialize.hpp"

using namespace fedinv;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "fedinv_ser_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ClientArtifact trained_artifact(bool record_steps) {
  ClientArtifact a;
  a.spec = ModelSpec{};
  a.spec.in_h = 4;
  a.spec.in_w = 4;
  a.spec.classes = 2;
  a.spec.hidden = {3};
  a.data = synth_dataset(SynthKind::GaussianBlobs, 3, 4, 4, 2, 9);
  ClientConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 2;
  cfg.eta = 0.1;
  cfg.seed = 5;
  a.update = client_update(a.spec, init_weights(a.spec, 1), a.data, cfg, record_steps);
  return a;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i]))
      return false;
  return true;
}

}  // namespace

TEST_CASE("a trained round survives a save/load round trip bit for bit") {
  const auto dir = fresh_dir("roundtrip");
  const std::string path = (dir / "round.bin").string();
  const ClientArtifact a = trained_artifact(true);
  save_artifact(path, a);
  const ClientArtifact b = load_artifact(path);

  CHECK(b.spec.arch == a.spec.arch);
  CHECK(b.spec.in_h == 4);
  CHECK(b.spec.hidden == std::vector<std::size_t>{3});
  CHECK(b.data.images.shape() == a.data.images.shape());
  CHECK(same_bits(b.data.images.values(), a.data.images.values()));
  CHECK(b.data.labels == a.data.labels);
  CHECK(b.data.provenance == a.data.provenance);

  CHECK(b.update.w0.layout() == a.update.w0.layout());
  CHECK(same_bits(b.update.w0.values(), a.update.w0.values()));
  CHECK(same_bits(b.update.wT.values(), a.update.wT.values()));
  CHECK(b.update.n == a.update.n);
  REQUIRE(b.update.meta.has_value());
  CHECK(b.update.meta->epochs == 2);
  CHECK(b.update.meta->batch == 2);
  CHECK(b.update.meta->eta == 0.1);
  CHECK(b.update.meta->seed == 5);
  CHECK(b.update.meta->shuffle == true);
  REQUIRE(b.update.step_gradients.size() == a.update.step_gradients.size());
  REQUIRE(b.update.step_gradients.size() == 4);  // E * ceil(N/B) = 2 * 2
  for (std::size_t t = 0; t < 4; ++t)
    CHECK(same_bits(b.update.step_gradients[t].values(),
                    a.update.step_gradients[t].values()));
}

TEST_CASE("saving the same artifact twice writes identical bytes") {
  const auto dir = fresh_dir("idempotent");
  const ClientArtifact a = trained_artifact(false);
  save_artifact((dir / "a.bin").string(), a);
  save_artifact((dir / "b.bin").string(), a);
  CHECK(slurp((dir / "a.bin").string()) == slurp((dir / "b.bin").string()));
}

TEST_CASE("protocol metadata and step gradients are both optional") {
  const auto dir = fresh_dir("optional");
  ClientArtifact a = trained_artifact(false);
  a.update.meta.reset();
  CHECK(a.update.step_gradients.empty());
  const std::string path = (dir / "bare.bin").string();
  save_artifact(path, a);
  const ClientArtifact b = load_artifact(path);
  CHECK(!b.update.meta.has_value());
  CHECK(b.update.step_gradients.empty());
}

TEST_CASE("special double values keep their exact bit patterns") {
  const auto dir = fresh_dir("bits");
  ClientArtifact a;
  a.spec = ModelSpec{};
  a.spec.in_h = 1;
  a.spec.in_w = 2;
  a.spec.classes = 2;
  a.spec.hidden = {};
  const auto layout = model_layout(a.spec);
  REQUIRE(ParamVector::layout_numel(layout) == 6);
  const std::vector<double> special = {-0.0, 5e-324, 1.0, -1.0, 0.0, 1e308};
  a.update.w0 = ParamVector(layout, special);
  a.update.wT = ParamVector(layout, {1, 2, 3, 4, 5, 6});
  a.update.n = 1;
  a.data.images = Tensor({1, 1, 1, 2}, {0.25, 0.75});
  a.data.labels = {0};
  a.data.provenance = "hand-built";

  const std::string path = (dir / "bits.bin").string();
  save_artifact(path, a);
  const ClientArtifact b = load_artifact(path);
  CHECK(same_bits(b.update.w0.values(), special));
  CHECK(std::signbit(b.update.w0.values()[0]));
}

TEST_CASE("malformed artifact files are rejected with FormatError") {
  const auto dir = fresh_dir("malformed");
  const ClientArtifact a = trained_artifact(true);
  const std::string good = (dir / "good.bin").string();
  save_artifact(good, a);
  const std::string bytes = slurp(good);

  CHECK_THROWS_AS(load_artifact((dir / "missing.bin").string()), FormatError);

  {
    std::ofstream out(dir / "magic.bin", std::ios::binary);
    out << "NOTANART" << bytes.substr(8);
  }
  CHECK_THROWS_AS(load_artifact((dir / "magic.bin").string()), FormatError);

  for (const std::size_t keep : {9UL, bytes.size() / 2, bytes.size() - 1}) {
    std::ofstream out(dir / "short.bin", std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(keep));
    out.close();
    CHECK_THROWS_AS(load_artifact((dir / "short.bin").string()), FormatError);
  }

  {
    std::ofstream out(dir / "long.bin", std::ios::binary);
    out << bytes << 'x';
  }
  CHECK_THROWS_AS(load_artifact((dir / "long.bin").string()), FormatError);

  {
    // an absurd length prefix must be rejected before any allocation
    std::string corrupt = bytes.substr(0, 9);
    corrupt.append(36, '\xFF');
    std::ofstream out(dir / "count.bin", std::ios::binary);
    out << corrupt;
  }
  CHECK_THROWS_AS(load_artifact((dir / "count.bin").string()), FormatError);

  {
    std::string badarch = bytes;
    badarch[8] = 7;
    std::ofstream out(dir / "arch.bin", std::ios::binary);
    out << badarch;
  }
  CHECK_THROWS_AS(load_artifact((dir / "arch.bin").string()), FormatError);
}

TEST_CASE("internally inconsistent payloads are rejected") {
  const auto dir = fresh_dir("inconsistent");
  ClientArtifact a = trained_artifact(false);

  // end weights from a different architecture
  ModelSpec other = a.spec;
  other.hidden = {5};
  ClientArtifact skewed = a;
  skewed.update.wT = init_weights(other, 2);
  const std::string p1 = (dir / "skewed.bin").string();
  save_artifact(p1, skewed);
  CHECK_THROWS_AS(load_artifact(p1), FormatError);

  // weights that do not belong to the declared spec at all
  ClientArtifact wrong = a;
  wrong.update.w0 = init_weights(other, 3);
  wrong.update.wT = init_weights(other, 4);
  const std::string p2 = (dir / "wrong.bin").string();
  save_artifact(p2, wrong);
  CHECK_THROWS_AS(load_artifact(p2), FormatError);

  // one label too few for the image batch
  ClientArtifact lab = a;
  lab.data.labels.pop_back();
  const std::string p3 = (dir / "labels.bin").string();
  save_artifact(p3, lab);
  CHECK_THROWS_AS(load_artifact(p3), FormatError);
}
