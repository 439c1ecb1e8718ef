#include "lse/dataset_io.hpp"

#include <fstream>

#include "lse/binary_io.hpp"
#include "lse/error.hpp"

namespace lse::signal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t record_size(std::size_t m_max) { return 3 * m_max + 4; }

json record_fields(std::size_t m_max) {
  return json::array({{{"name", "freq_norm"}, {"count", m_max}},
                      {{"name", "amp"}, {"count", m_max}},
                      {{"name", "phase"}, {"count", m_max}},
                      {{"name", "m_active"}, {"count", 1}},
                      {{"name", "snr_db"}, {"count", 1}},
                      {{"name", "norm_offset"}, {"count", 1}},
                      {{"name", "norm_scale"}, {"count", 1}}});
}

}  // namespace

json config_to_json(const GeneratorConfig& cfg) {
  return {{"sampling_period", cfg.sampling_period},
          {"window_length", cfg.window_length},
          {"carrier_hz", cfg.carrier_hz},
          {"max_components", cfg.max_components},
          {"snr_db_set", cfg.snr_db_set},
          {"windows_per_count", cfg.windows_per_count},
          {"split", cfg.split},
          {"seed", cfg.seed}};
}

GeneratorConfig config_from_json(const json& j) {
  GeneratorConfig cfg;
  cfg.sampling_period = j.at("sampling_period").get<double>();
  cfg.window_length = j.at("window_length").get<std::size_t>();
  cfg.carrier_hz = j.at("carrier_hz").get<double>();
  cfg.max_components = j.at("max_components").get<std::size_t>();
  cfg.snr_db_set = j.at("snr_db_set").get<std::vector<double>>();
  cfg.windows_per_count = j.at("windows_per_count").get<std::size_t>();
  cfg.split = j.at("split").get<std::array<double, 3>>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

fs::path dataset_stem(const fs::path& p) {
  if (p.extension() == ".bin" || p.extension() == ".json") {
    fs::path stem = p;
    return stem.replace_extension();
  }
  return p;
}

void write_dataset(const Dataset& ds, const fs::path& stem_in) {
  const fs::path stem = dataset_stem(stem_in);
  const std::size_t N = ds.windows.size();
  const std::size_t K = ds.config.window_length;
  const std::size_t M = ds.config.max_components;
  const std::size_t R = record_size(M);
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());

  std::ofstream bin(fs::path(stem).concat(".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + stem.string() + ".bin");
  for (const auto& w : ds.windows) {
    require_shape(w.values, Shape{2, K}, "write_dataset");
    io::write_f32le<double>(bin, w.values.data());
  }
  std::vector<double> rec(R);
  for (const auto& w : ds.windows) {
    const auto& t = w.target;
    std::copy(t.freqs.begin(), t.freqs.end(), rec.begin());
    std::copy(t.amps.begin(), t.amps.end(), rec.begin() + M);
    std::copy(t.phases.begin(), t.phases.end(), rec.begin() + 2 * M);
    rec[3 * M] = static_cast<double>(t.m_active);
    rec[3 * M + 1] = t.snr_db;
    rec[3 * M + 2] = w.norm.offset;
    rec[3 * M + 3] = w.norm.scale;
    io::write_f32le<double>(bin, rec);
  }
  if (!bin) throw std::runtime_error("write failed: " + stem.string() + ".bin");

  json manifest = {
      {"format", "lse-dataset"},
      {"version", kDatasetFormatVersion},
      {"K", K},
      {"M_max", M},
      {"counts",
       {{"total", N}, {"train", ds.train.size()}, {"val", ds.val.size()}, {"test", ds.test.size()}}},
      {"dtype", "float32-le"},
      {"blocks",
       json::array({{{"name", "windows"}, {"shape", {N, 2, K}}, {"offset_bytes", 0}},
                    {{"name", "targets"},
                     {"shape", {N, R}},
                     {"offset_bytes", N * 2 * K * 4},
                     {"fields", record_fields(M)}}})},
      {"split", {{"train", ds.train}, {"val", ds.val}, {"test", ds.test}}},
      {"seed", ds.config.seed},
      {"generator", config_to_json(ds.config)}};
  std::ofstream js(fs::path(stem).concat(".json"));
  js << manifest.dump(2) << '\n';
}

Dataset read_dataset(const fs::path& stem_in) {
  const fs::path stem = dataset_stem(stem_in);
  std::ifstream js(fs::path(stem).concat(".json"));
  if (!js) throw std::runtime_error("missing dataset manifest " + stem.string() + ".json");
  json manifest;
  try {
    manifest = json::parse(js);
  } catch (const json::exception& e) {
    throw StructuralError(std::string("dataset manifest is not valid JSON: ") + e.what());
  }
  if (manifest.value("format", "") != "lse-dataset")
    throw StructuralError("not a dataset manifest: " + stem.string() + ".json");
  if (manifest.at("version").get<int>() != kDatasetFormatVersion) {
    throw VersionMismatchError("dataset version " + manifest.at("version").dump() +
                               ", expected " + std::to_string(kDatasetFormatVersion));
  }

  Dataset ds;
  try {
    ds.config = config_from_json(manifest.at("generator"));
    ds.train = manifest.at("split").at("train").get<std::vector<std::size_t>>();
    ds.val = manifest.at("split").at("val").get<std::vector<std::size_t>>();
    ds.test = manifest.at("split").at("test").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw StructuralError(std::string("dataset manifest: ") + e.what());
  }
  const std::size_t N = manifest.at("counts").at("total").get<std::size_t>();
  const std::size_t K = manifest.at("K").get<std::size_t>();
  const std::size_t M = manifest.at("M_max").get<std::size_t>();
  if (K != ds.config.window_length || M != ds.config.max_components)
    throw StructuralError("dataset manifest: K/M_max disagree with generator config");
  for (const auto* part : {&ds.train, &ds.val, &ds.test})
    for (std::size_t i : *part)
      if (i >= N) throw StructuralError("dataset manifest: split index out of range");

  const std::size_t R = record_size(M);
  const fs::path bin_path = fs::path(stem).concat(".bin");
  const auto expected = static_cast<std::uintmax_t>(N * (2 * K + R) * 4);
  if (!fs::exists(bin_path)) throw std::runtime_error("missing " + bin_path.string());
  const auto actual = fs::file_size(bin_path);
  if (actual < expected)
    throw CorruptBlobError("dataset blob truncated: " + std::to_string(actual) + " < " +
                           std::to_string(expected) + " bytes");
  if (actual > expected)
    throw StructuralError("dataset blob larger than manifest describes");

  std::ifstream bin(bin_path, std::ios::binary);
  ds.windows.resize(N);
  for (auto& w : ds.windows) {
    w.values = Tensor<double>(Shape{2, K});
    if (!io::read_f32le<double>(bin, w.values.data()))
      throw CorruptBlobError("dataset blob: short read");
  }
  std::vector<double> rec(R);
  for (auto& w : ds.windows) {
    if (!io::read_f32le<double>(bin, std::span<double>(rec)))
      throw CorruptBlobError("dataset blob: short read");
    auto& t = w.target;
    t.freqs.assign(rec.begin(), rec.begin() + M);
    t.amps.assign(rec.begin() + M, rec.begin() + 2 * M);
    t.phases.assign(rec.begin() + 2 * M, rec.begin() + 3 * M);
    t.m_active = static_cast<std::size_t>(rec[3 * M]);
    t.snr_db = rec[3 * M + 1];
    w.norm.offset = rec[3 * M + 2];
    w.norm.scale = rec[3 * M + 3];
  }
  return ds;
}

}  // namespace lse::signal
