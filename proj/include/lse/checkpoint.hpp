#pragma once

// Checkpoint file layout:
//   8 bytes   magic "LSECKPT\0"
//   8 bytes   manifest length in bytes, little-endian uint64
//   manifest  UTF-8 JSON: format version, tau, surrogate alpha, model config,
//             tensor list [{name, shape, kind}] in blob order, blob_floats,
//             free-form metadata
//   blob      little-endian float32 values of every tensor in manifest order

#include <filesystem>

#include "json.hpp"

#include "lse/model.hpp"

namespace lse::model {

inline constexpr int kCheckpointVersion = 1;

nlohmann::json model_config_to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys throw StructuralError.
ModelConfig model_config_from_json(const nlohmann::json& j);

template <typename Real>
void save_checkpoint(const LseModel<Real>& model, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());

/// Throws VersionMismatchError, CorruptBlobError (truncated file), or
/// StructuralError (bad magic, malformed manifest, or a manifest that does not
/// agree with the blob or the model layout).
template <typename Real>
LseModel<Real> load_checkpoint(const std::filesystem::path& path,
                               nlohmann::json* metadata = nullptr);

}  // namespace lse::model
