#include "lse/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "lse/binary_io.hpp"
#include "lse/error.hpp"

namespace lse::model {

namespace {

constexpr std::array<char, 8> kMagic{'L', 'S', 'E', 'C', 'K', 'P', 'T', '\0'};

void write_u64le(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

bool read_u64le(std::istream& is, std::uint64_t& v) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (is.gcount() != 8) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return true;
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"window_length", c.window_length},   {"channels", c.channels},
          {"conv_features", c.conv_features},   {"kernel", c.kernel},
          {"snn_input", c.snn_input},           {"snn_hidden", c.snn_hidden},
          {"outputs", c.outputs},               {"tau", c.tau},
          {"surrogate_alpha", c.surrogate_alpha}, {"bn_eps", c.bn_eps},
          {"bn_momentum", c.bn_momentum},       {"beta_init", c.beta_init},
          {"theta_init", c.theta_init}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw StructuralError("model config must be a JSON object");
  ModelConfig c;
  const auto known = model_config_to_json(c);
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw StructuralError("unknown model config key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("window_length", c.window_length);
    get("channels", c.channels);
    get("conv_features", c.conv_features);
    get("kernel", c.kernel);
    get("snn_input", c.snn_input);
    get("snn_hidden", c.snn_hidden);
    get("outputs", c.outputs);
    get("tau", c.tau);
    get("surrogate_alpha", c.surrogate_alpha);
    get("bn_eps", c.bn_eps);
    get("bn_momentum", c.bn_momentum);
    get("beta_init", c.beta_init);
    get("theta_init", c.theta_init);
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError(std::string("model config: ") + e.what());
  }
  return c;
}

template <typename Real>
void save_checkpoint(const LseModel<Real>& model, const std::filesystem::path& path,
                     const nlohmann::json& metadata) {
  const auto state = model.state();
  const auto params = model.named_parameters();
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t floats = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& [name, t] = state[i];
    tensors.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"kind", i < params.size() ? "parameter" : "buffer"}});
    floats += t.size();
  }
  const nlohmann::json manifest{{"format", "lse-checkpoint"},
                                {"version", kCheckpointVersion},
                                {"tau", model.config().tau},
                                {"surrogate_alpha", model.config().surrogate_alpha},
                                {"model", model_config_to_json(model.config())},
                                {"dtype", "float32-le"},
                                {"tensors", tensors},
                                {"blob_floats", floats},
                                {"metadata", metadata}};
  const std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic.data(), kMagic.size());
  write_u64le(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [_, t] : state) io::write_f32le(os, t.data());
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

template <typename Real>
LseModel<Real> load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  const auto file_size = std::filesystem::file_size(path);

  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (is.gcount() != 8) throw CorruptBlobError("checkpoint truncated in header");
  if (magic != kMagic) throw StructuralError(path.string() + " is not a checkpoint file");
  std::uint64_t manifest_len = 0;
  if (!read_u64le(is, manifest_len)) throw CorruptBlobError("checkpoint truncated in header");
  if (manifest_len > file_size - 16) throw CorruptBlobError("checkpoint truncated in manifest");
  std::string text(manifest_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(manifest_len));

  nlohmann::json m;
  try {
    m = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  if (!m.is_object() || m.value("format", "") != "lse-checkpoint")
    throw StructuralError("checkpoint manifest has wrong format tag");
  if (m.value("version", -1) != kCheckpointVersion)
    throw VersionMismatchError("checkpoint version " + m.value("version", nlohmann::json()).dump() +
                               ", expected " + std::to_string(kCheckpointVersion));

  ModelConfig cfg;
  std::vector<std::pair<std::string, Shape>> entries;
  std::size_t declared = 0;
  try {
    cfg = model_config_from_json(m.at("model"));
    for (const auto& t : m.at("tensors"))
      entries.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<Shape>());
    declared = m.at("blob_floats").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError(std::string("checkpoint manifest: ") + e.what());
  }

  std::size_t listed = 0;
  for (const auto& [_, shape] : entries) listed += shape_size(shape);
  if (listed != declared)
    throw StructuralError("checkpoint manifest lists " + std::to_string(listed) +
                          " floats but declares blob_floats = " + std::to_string(declared));
  const std::uint64_t blob_bytes = file_size - 16 - manifest_len;
  if (blob_bytes < 4 * declared)
    throw CorruptBlobError("checkpoint blob holds " + std::to_string(blob_bytes) +
                           " bytes, manifest needs " + std::to_string(4 * declared));
  if (blob_bytes > 4 * declared)
    throw StructuralError("checkpoint blob holds " + std::to_string(blob_bytes) +
                          " bytes, manifest describes only " + std::to_string(4 * declared));

  ModelState<Real> state;
  state.reserve(entries.size());
  for (auto& [name, shape] : entries) {
    Tensor<Real> t(shape);
    if (!io::read_f32le<Real>(is, t.data())) throw CorruptBlobError("checkpoint blob truncated");
    state.emplace_back(std::move(name), std::move(t));
  }

  LseModel<Real> model(cfg, 0);
  model.load_state(state);
  if (metadata) *metadata = m.value("metadata", nlohmann::json::object());
  return model;
}

template void save_checkpoint(const LseModel<float>&, const std::filesystem::path&,
                              const nlohmann::json&);
template void save_checkpoint(const LseModel<double>&, const std::filesystem::path&,
                              const nlohmann::json&);
template LseModel<float> load_checkpoint(const std::filesystem::path&, nlohmann::json*);
template LseModel<double> load_checkpoint(const std::filesystem::path&, nlohmann::json*);

}  // namespace lse::model
