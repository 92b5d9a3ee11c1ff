#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "kanwit/common.hpp"
#include "kanwit/qstate.hpp"

namespace kanwit::dataset {

struct LabeledSample {
    qstate::FeatureVector features;
    Label label = Label::Separable;
    bool noisy = false;
};

// Row-major view of a labeled feature table.  `columns` names the feature
// columns (a subsequence of the family's observable labels, so projected
// datasets keep their provenance).
struct Dataset {
    Family family = Family::General9;
    std::vector<std::string> columns;
    Eigen::MatrixXd features;  // rows() x columns.size()
    std::vector<Label> labels;
    std::uint64_t seed = 0;
    double noise_sigma = 0.0;

    Eigen::Index rows() const { return features.rows(); }
    bool noisy() const { return noise_sigma > 0.0; }
    long count(Label label) const;

    // Full-family datasets only (columns == observable_labels(family)).
    LabeledSample sample(Eigen::Index i) const;
};

struct SplitSpec {
    double train_fraction = 0.70;
    double validation_fraction = 0.20;
    double test_fraction = 0.10;

    void validate() const;  // throws std::invalid_argument
};

struct SplitResult {
    Dataset train;
    Dataset validation;
    Dataset test;
};

// Exactly balanced labeled dataset: generation continues until ceil(n/2)
// entangled and floor(n/2) separable samples exist, discarding surplus draws
// of the filled class.  If noise_sigma > 0, Gaussian(0, sigma) noise from an
// independent derived stream is added to every feature value after labeling,
// so labels always describe the clean state.
Dataset generate_dataset(Family family, long n, std::uint64_t seed, double noise_sigma = 0.0);

// Stratified split: per-class seeded shuffles, per-class rounded quotas for
// validation/test with the remainder assigned to train, then a seeded mix of
// each split so files are not label-sorted.
SplitResult split(const Dataset& data, const SplitSpec& spec, std::uint64_t seed);

// Keep only the named feature columns (any order in `observables` is accepted;
// output preserves the dataset's own column order).
Dataset project(const Dataset& data, const std::vector<std::string>& observables);

// CSV with a '#'-prefixed metadata header; feature values written with 17
// significant digits so the roundtrip is exact.
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace kanwit::dataset
