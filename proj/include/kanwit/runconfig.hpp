#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kanwit/common.hpp"
#include "kanwit/dataset.hpp"
#include "kanwit/kan.hpp"

namespace kanwit::cli {

// Declarative run settings: loadable from a key=value file, every key
// overridable by a command-line flag, fully validated before any work starts.
struct RunConfig {
    Family family = Family::General9;
    long n = 100000;
    std::uint64_t seed = 1;
    double noise_sigma = 0.0;
    dataset::SplitSpec split;
    std::vector<int> architecture;  // empty = family default
    kan::SplineGrid grid = kan::SplineGrid::uniform(-1.2, 1.2, 5, 3);
    kan::TrainConfig train;         // train.seed is derived from `seed`, not set here
    int bootstrap_models = 20;
    int jobs = 1;
    std::string output_dir = "run";

    void validate() const;
    std::vector<int> model_architecture() const;  // resolves the family default

    // One key=value assignment (file line or flag); unknown keys throw.
    void set(const std::string& key, const std::string& value);

    // smoke: n=5000, M=3, epochs=60.  full: n=100000, M=20, epochs=200.
    void apply_profile(const std::string& name);

    static RunConfig from_file(const std::string& path);

    std::string describe() const;  // JSON snapshot for manifests
};

}  // namespace kanwit::cli
