#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kanwit::cli {

// Hex-encoded SHA-256 of a byte string / file, prefixed "sha256:".
std::string sha256_hex(const std::string& bytes);
std::string digest_file(const std::string& path);

struct ArtifactRecord {
    std::string path;    // relative to the run directory
    std::string digest;  // "sha256:..."
};

struct StageRecord {
    std::string name;
    std::string config_json;  // settings snapshot the stage ran with
    std::vector<ArtifactRecord> artifacts;
    std::int64_t wall_ms = 0;
};

// Append-only record of what a run produced: per-stage settings snapshots,
// artifact paths and content digests, and wall-clock timings.  Lives at
// <run_dir>/manifest.json and is rewritten atomically after each stage, so a
// run can be reconstructed by re-executing each stage with its recorded
// settings.
class RunManifest {
  public:
    explicit RunManifest(std::string run_dir);

    // Loads the existing manifest if present, otherwise starts empty.
    void begin();

    // Read-only open of an existing manifest (throws if absent/malformed).
    static RunManifest load(const std::string& run_dir);

    // Records (or replaces) a stage and writes the manifest.
    void record_stage(const std::string& name, const std::string& config_json,
                      const std::vector<std::string>& artifact_paths, std::int64_t wall_ms);

    // Re-digests every recorded artifact; returns mismatch descriptions
    // (empty means everything verified).
    std::vector<std::string> verify() const;

    const std::string& run_dir() const { return run_dir_; }
    const std::vector<StageRecord>& stages() const { return stages_; }
    const StageRecord* stage(const std::string& name) const;

  private:
    void write() const;

    std::string run_dir_;
    std::vector<StageRecord> stages_;
};

}  // namespace kanwit::cli
