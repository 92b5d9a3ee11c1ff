#include "kanwit/manifest.hpp"

#include <openssl/evp.h>

#include <filesystem>
#include <stdexcept>

#include "json.hpp"
#include "kanwit/common.hpp"
#include "kanwit/io.hpp"

namespace kanwit::cli {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out = "sha256:";
    out.reserve(out.size() + 2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string digest_file(const std::string& path) { return sha256_hex(io::read_file(path)); }

RunManifest::RunManifest(std::string run_dir) : run_dir_(std::move(run_dir)) {}

namespace {

bool read_manifest_file(const std::string& run_dir, std::vector<StageRecord>& stages) {
    const fs::path file = fs::path(run_dir) / "manifest.json";
    if (!fs::exists(file)) return false;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_file(file.string()));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("manifest " + file.string() + ": " + e.what());
    }
    try {
        if (!j.is_object() || j.value("format", "") != "kanwit-manifest-v1")
            throw SchemaError("manifest " + file.string() + ": unrecognized format");
        stages.clear();
        for (const auto& s : j.at("stages")) {
            StageRecord rec;
            rec.name = s.at("name").get<std::string>();
            rec.config_json = s.at("config").dump();
            rec.wall_ms = s.at("wall_ms").get<std::int64_t>();
            for (const auto& a : s.at("artifacts"))
                rec.artifacts.push_back(
                    {a.at("path").get<std::string>(), a.at("sha256").get<std::string>()});
            stages.push_back(std::move(rec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("manifest " + file.string() + ": " + e.what());
    }
    return true;
}

}  // namespace

void RunManifest::begin() { read_manifest_file(run_dir_, stages_); }

RunManifest RunManifest::load(const std::string& run_dir) {
    RunManifest manifest(run_dir);
    if (!read_manifest_file(run_dir, manifest.stages_))
        throw std::invalid_argument("no manifest at " +
                                    (fs::path(run_dir) / "manifest.json").string() +
                                    "; run a pipeline stage first");
    return manifest;
}

void RunManifest::record_stage(const std::string& name, const std::string& config_json,
                               const std::vector<std::string>& artifact_paths,
                               std::int64_t wall_ms) {
    StageRecord rec;
    rec.name = name;
    rec.config_json = config_json;
    rec.wall_ms = wall_ms;
    for (const auto& p : artifact_paths) {
        const fs::path full = fs::path(run_dir_) / p;
        rec.artifacts.push_back({p, digest_file(full.string())});
    }
    for (auto& existing : stages_) {
        if (existing.name == name) {
            existing = std::move(rec);
            write();
            return;
        }
    }
    stages_.push_back(std::move(rec));
    write();
}

std::vector<std::string> RunManifest::verify() const {
    std::vector<std::string> problems;
    for (const auto& stage : stages_) {
        for (const auto& artifact : stage.artifacts) {
            const fs::path full = fs::path(run_dir_) / artifact.path;
            if (!fs::exists(full)) {
                problems.push_back(artifact.path + ": missing");
                continue;
            }
            const std::string now = digest_file(full.string());
            if (now != artifact.digest)
                problems.push_back(artifact.path + ": digest mismatch (recorded " +
                                   artifact.digest + ", found " + now + ")");
        }
    }
    return problems;
}

const StageRecord* RunManifest::stage(const std::string& name) const {
    for (const auto& s : stages_)
        if (s.name == name) return &s;
    return nullptr;
}

void RunManifest::write() const {
    nlohmann::ordered_json j;
    j["format"] = "kanwit-manifest-v1";
    j["generator"] = "kanwit " + std::string(version);
    auto stages = nlohmann::ordered_json::array();
    for (const auto& s : stages_) {
        nlohmann::ordered_json stage;
        stage["name"] = s.name;
        stage["config"] = nlohmann::ordered_json::parse(s.config_json);
        stage["wall_ms"] = s.wall_ms;
        auto artifacts = nlohmann::ordered_json::array();
        for (const auto& a : s.artifacts)
            artifacts.push_back({{"path", a.path}, {"sha256", a.digest}});
        stage["artifacts"] = std::move(artifacts);
        stages.push_back(std::move(stage));
    }
    j["stages"] = std::move(stages);
    const fs::path file = fs::path(run_dir_) / "manifest.json";
    io::write_file_atomic(file.string(), j.dump(2) + "\n");
}

}  // namespace kanwit::cli
