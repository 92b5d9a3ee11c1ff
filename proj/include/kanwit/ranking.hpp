#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "kanwit/common.hpp"
#include "kanwit/dataset.hpp"
#include "kanwit/kan.hpp"

namespace kanwit::ranking {

struct ImportanceRanking {
    int model_id = 0;
    std::vector<std::string> labels;
    Eigen::VectorXd scores;            // normalized to sum 1
    Eigen::VectorXd secondary_scores;  // symbolic-fit scores; empty unless computed
    std::vector<int> order;            // label indices, descending score
    bool degenerate = false;           // all first-layer edges were constant
};

// Variance-based backward attribution: each edge is scored by the standard
// deviation of its output over `data`, node attributions flow backward from
// the output (attribution 1) split proportionally to incoming edge scores
// (uniformly where a node's scores all vanish), and feature importances are
// the input-node attributions normalized to sum 1.  Ties in the rank order
// break by feature label order.
ImportanceRanking attribute_importance(const kan::KanModel& model, const dataset::Dataset& data);

// Comparison score from the symbolic view: per feature, the sum of |a|*|b|
// over its fitted first-layer sine terms (|a| for affine terms), normalized
// to sum 1.
Eigen::VectorXd symbolic_importance(const kan::KanModel& model, const dataset::Dataset& probe);

struct TopKFrequencyTable {
    int n_models = 0;
    std::vector<std::string> labels;
    // counts(k-1, f) = number of models whose Top-k set contains feature f,
    // for k = 1..k_max() where k_max = min(8, labels-1).
    Eigen::MatrixXi counts;

    int k_max() const { return static_cast<int>(counts.rows()); }
};

TopKFrequencyTable aggregate_topk(const std::vector<ImportanceRanking>& rankings);

struct FeatureSelection {
    int m = 0;
    std::vector<std::string> observables;  // in canonical label order
    std::vector<int> architecture;
};

// The m observables with the highest Top-m counts.  Ties break by higher
// cumulative count over Top-1..Top-m, then by higher counts at Top-(m+1),
// Top-(m+2), ..., then by label order.
FeatureSelection select_features(const TopKFrequencyTable& table, int m);

// Layer widths used for the m-feature reduced models (m = 9 gives the full
// baseline shape).
std::vector<int> reduced_architecture(int m);

struct BootstrapOutcome {
    std::vector<ImportanceRanking> rankings;
    std::vector<int> failed_models;  // 1-based ids whose training diverged
};

// Trains `n_models` independent models on freshly generated datasets (seeds
// derived from base_seed and the 1-based model id) and attributes importance
// for each; deterministic given base_seed, regardless of `jobs`.
BootstrapOutcome bootstrap_rank(Family family, int n_models, long n, std::uint64_t base_seed,
                                const kan::TrainConfig& train_config, int jobs = 1);

struct CurvePoint {
    int m = 0;
    std::vector<int> architecture;
    std::vector<std::string> observables;
    double accuracy = 0.0;
};

// For m = 1..8: select features from the table, project a shared dataset onto
// them, train the reduced architecture, and record test accuracy.
std::vector<CurvePoint> reduced_model_curve(const TopKFrequencyTable& table, Family family,
                                            long n, std::uint64_t seed,
                                            const kan::TrainConfig& train_config);

// CSV with one row per k level plus a '#' metadata header.
void save_topk_table(const TopKFrequencyTable& table, const std::string& path);
TopKFrequencyTable load_topk_table(const std::string& path);

}  // namespace kanwit::ranking
