#pragma once

// Dataset files: `<stem>.bin` holds every window tensor (N, 2, K) followed by
// every target record (N, 3 * M_max + 4), all little-endian float32, in
// generation order. `<stem>.json` describes shapes, the record layout, the
// split indices, and the generator config. Loading rounds values through
// float32.

#include <filesystem>

#include "json.hpp"

#include "lse/signal_gen.hpp"

namespace lse::signal {

inline constexpr int kDatasetFormatVersion = 1;

nlohmann::json config_to_json(const GeneratorConfig& cfg);
GeneratorConfig config_from_json(const nlohmann::json& j);

/// Writes `<stem>.bin` and `<stem>.json`.
void write_dataset(const Dataset& ds, const std::filesystem::path& stem);

/// Throws VersionMismatchError, StructuralError, or CorruptBlobError.
Dataset read_dataset(const std::filesystem::path& stem);

/// Accepts the stem or either of the two file paths.
std::filesystem::path dataset_stem(const std::filesystem::path& p);

}  // namespace lse::signal
