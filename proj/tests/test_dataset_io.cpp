#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "lse/dataset_io.hpp"
#include "lse/error.hpp"
#include "test_util.hpp"

using namespace lse;
using namespace lse::signal;
using lse::testing::TempDir;
namespace fs = std::filesystem;

namespace {

Dataset small_dataset() {
  GeneratorConfig cfg;
  cfg.windows_per_count = 8;
  return build_dataset(cfg);
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream is(p);
  return nlohmann::json::parse(is);
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream os(p);
  os << j.dump();
}

}  // namespace

TEST_CASE("dataset round-trip preserves split, targets and float32 values") {
  TempDir dir;
  const auto ds = small_dataset();
  const auto stem = dir.path / "data";
  write_dataset(ds, stem);
  CHECK(fs::exists(dir.path / "data.bin"));
  CHECK(fs::exists(dir.path / "data.json"));
  for (const auto& arg : {stem, fs::path(dir.path / "data.bin"), fs::path(dir.path / "data.json")}) {
    const auto back = read_dataset(arg);
    REQUIRE(back.windows.size() == ds.windows.size());
    CHECK(back.train == ds.train);
    CHECK(back.val == ds.val);
    CHECK(back.test == ds.test);
    CHECK(back.config.seed == ds.config.seed);
    for (std::size_t i = 0; i < ds.windows.size(); ++i) {
      const auto& a = ds.windows[i];
      const auto& b = back.windows[i];
      for (std::size_t j = 0; j < a.values.size(); ++j)
        CHECK(b.values[j] == static_cast<double>(static_cast<float>(a.values[j])));
      CHECK(b.target.m_active == a.target.m_active);
      CHECK(b.target.freqs[0] == doctest::Approx(a.target.freqs[0]).epsilon(1e-6));
      CHECK(b.target.snr_db == a.target.snr_db);
    }
  }
}

TEST_CASE("dataset loader errors") {
  TempDir dir;
  const auto ds = small_dataset();
  const auto stem = dir.path / "data";
  write_dataset(ds, stem);
  const auto bin = dir.path / "data.bin";
  const auto js = dir.path / "data.json";
  const auto size = fs::file_size(bin);

  SUBCASE("version mismatch") {
    auto j = read_json(js);
    j["version"] = 99;
    write_json(js, j);
    CHECK_THROWS_AS(read_dataset(stem), VersionMismatchError);
  }
  SUBCASE("truncated blob") {
    fs::resize_file(bin, size - 4);
    CHECK_THROWS_AS(read_dataset(stem), CorruptBlobError);
  }
  SUBCASE("blob longer than described") {
    fs::resize_file(bin, size + 4);
    CHECK_THROWS_AS(read_dataset(stem), StructuralError);
  }
  SUBCASE("wrong format tag") {
    auto j = read_json(js);
    j["format"] = "something-else";
    write_json(js, j);
    CHECK_THROWS_AS(read_dataset(stem), StructuralError);
  }
  SUBCASE("split index out of range") {
    auto j = read_json(js);
    j["split"]["train"].push_back(100000);
    write_json(js, j);
    CHECK_THROWS_AS(read_dataset(stem), StructuralError);
  }
  SUBCASE("unparsable manifest") {
    std::ofstream(js) << "{ not json";
    CHECK_THROWS_AS(read_dataset(stem), StructuralError);
  }
}
