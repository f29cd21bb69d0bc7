#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "json.hpp"

namespace sgmv {

inline constexpr std::string_view kToolVersion = "1.0.0";
inline constexpr std::string_view kManifestFile = "manifest.json";

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Digest of every regular file directly in `dir` except the manifest,
/// keyed by file name.
std::map<std::string, std::string> directory_digests(const std::filesystem::path& dir);

struct RunManifest {
    std::string config_digest;
    std::string input_digest;
    std::uint64_t seed = 0;
    std::string tool_version{kToolVersion};
    std::string started_at;   // UTC, ISO 8601
    std::string finished_at;
    std::map<std::string, std::string> outputs;
};

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& dir, const RunManifest& m);

}  // namespace sgmv
