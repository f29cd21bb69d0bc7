#include "sgmv/manifest.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>

#include "sgmv/errors.hpp"

namespace sgmv {

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0xF]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read '" + path.string() + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

std::map<std::string, std::string> directory_digests(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name == kManifestFile) continue;
        out.emplace(name, sha256_file(entry.path()));
    }
    return out;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json manifest_to_json(const RunManifest& m) {
    return {{"tool_version", m.tool_version},
            {"seed", m.seed},
            {"config_digest", m.config_digest},
            {"input_digest", m.input_digest},
            {"started_at", m.started_at},
            {"finished_at", m.finished_at},
            {"outputs", m.outputs}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
    try {
        RunManifest m;
        m.tool_version = j.at("tool_version").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.config_digest = j.at("config_digest").get<std::string>();
        m.input_digest = j.at("input_digest").get<std::string>();
        m.started_at = j.value("started_at", "");
        m.finished_at = j.value("finished_at", "");
        m.outputs = j.value("outputs", std::map<std::string, std::string>{});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed manifest: ") + e.what());
    }
}

void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
    std::ofstream out(dir / kManifestFile, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write manifest to '" + dir.string() + "'");
    out << manifest_to_json(m).dump(2) << '\n';
}

}  // namespace sgmv
