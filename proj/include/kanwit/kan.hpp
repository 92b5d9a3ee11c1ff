#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "kanwit/common.hpp"
#include "kanwit/dataset.hpp"

namespace kanwit::kan {

// Uniform cubic-by-default B-spline grid on [min, max] with `intervals`
// interior intervals and knots extended `degree` deep on both sides, giving
// intervals + degree basis functions.
struct SplineGrid {
    double min = -1.2;
    double max = 1.2;
    int intervals = 5;
    int degree = 3;
    Eigen::VectorXd knots;  // intervals + 2*degree + 1, strictly increasing

    static SplineGrid uniform(double min, double max, int intervals, int degree);

    int basis_count() const { return intervals + degree; }

    // Fills `values` (size basis_count()) with every basis function at x;
    // out-of-range x is clamped to the grid.  When `derivatives` is non-null
    // it receives the basis derivatives (zero outside the grid, where the
    // clamped extension is flat).
    void basis_row(double x, double* values, double* derivatives = nullptr) const;
};

// One edge's learnable activation: w_b * silu(x) + w_s * sum_m c_m B_m(x).
struct SplineActivation {
    SplineGrid grid;
    Eigen::VectorXd coefficients;
    double base_weight = 0.0;
    double spline_weight = 1.0;
};

double silu(double x);
double logistic(double x);
double edge_eval(const SplineActivation& act, double x);

// Dense per-layer parameters; edge (i -> j) owns base_weight(i,j),
// spline_weight(i,j) and spline_coeff[i].col(j).
struct KanLayer {
    int n_in = 0;
    int n_out = 0;
    Eigen::MatrixXd base_weight;                // n_in x n_out
    Eigen::MatrixXd spline_weight;              // n_in x n_out
    std::vector<Eigen::MatrixXd> spline_coeff;  // n_in of (basis_count x n_out)
};

struct KanModel {
    std::vector<int> architecture;  // layer widths, final width 1
    SplineGrid grid;
    std::vector<KanLayer> layers;
    std::vector<std::string> feature_labels;  // optional; set when trained on a dataset

    // Near-zero random start: spline coefficients ~ N(0, 0.1/sqrt(basis_count)),
    // w_s = 1, w_b ~ N(0, 1/sqrt(n_in)).
    static KanModel init(const std::vector<int>& architecture, const SplineGrid& grid,
                         std::uint64_t seed);
    static KanModel zeros(const std::vector<int>& architecture, const SplineGrid& grid);

    int input_width() const { return architecture.front(); }
    SplineActivation edge(int layer, int in, int out) const;
};

// Pre-squash network value(s); node output j sums edge activations over its
// inputs, and the final scalar is squashed by `forward`.
double forward_logit(const KanModel& model, const Eigen::VectorXd& features);
double forward(const KanModel& model, const Eigen::VectorXd& features);
Eigen::VectorXd forward_logit_batch(const KanModel& model, const Eigen::MatrixXd& rows);

// Entangled iff forward >= 0.5 (boundary entangled).
Label predict(const KanModel& model, const Eigen::VectorXd& features);

// Same shapes as the model's parameters.
struct LayerGradients {
    Eigen::MatrixXd base_weight;
    Eigen::MatrixXd spline_weight;
    std::vector<Eigen::MatrixXd> spline_coeff;
};

struct Gradients {
    std::vector<LayerGradients> layers;
};

// Exact gradient of the summed binary cross-entropy over the batch (single
// sample = batch of one), via B-spline derivative order reduction.
Gradients backward(const KanModel& model, const Eigen::MatrixXd& rows,
                   const std::vector<Label>& labels);
Gradients backward(const KanModel& model, const Eigen::VectorXd& features, Label label);

// Inputs seen by every layer when `rows` flows through the model; element 0
// is `rows` itself, element l the node outputs entering layer l.
std::vector<Eigen::MatrixXd> node_inputs(const KanModel& model, const Eigen::MatrixXd& rows);

// Standard deviation of each edge's output over the given rows, per layer
// (n_in x n_out each).
std::vector<Eigen::MatrixXd> edge_output_stddev(const KanModel& model,
                                                const Eigen::MatrixXd& rows);

struct TrainConfig {
    int epochs = 200;
    int batch_size = 256;
    double learning_rate = 1e-2;
    std::uint64_t seed = 0;
    double l1_activation_penalty = 0.0;
    int early_stop_patience = 20;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double validation_accuracy = 0.0;
};

struct TrainResult {
    KanModel model;  // parameters of the best-validation epoch
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_validation_accuracy = 0.0;
    double initial_loss = 0.0;
    double best_train_loss = 0.0;
};

// Mini-batch optimization of mean BCE + l1_activation_penalty * mean |edge
// output| with an adaptive-moment optimizer; keeps the snapshot with the best
// validation accuracy and stops early after `early_stop_patience` epochs
// without improvement.  Deterministic given config.seed.
TrainResult train(const KanModel& start, const dataset::Dataset& train_data,
                  const dataset::Dataset& validation, const TrainConfig& config);

struct ClassificationReport {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0;
    // Index 0 = separable, 1 = entangled.
    double precision[2] = {0.0, 0.0};
    double recall[2] = {0.0, 0.0};
    double f1[2] = {0.0, 0.0};

    static ClassificationReport from_confusion(long tp, long fp, long tn, long fn);
};

ClassificationReport evaluate(const KanModel& model, const dataset::Dataset& data);

// Provenance stored alongside the parameters so a run is auditable from the
// model file alone.
struct TrainInfo {
    TrainConfig config;
    std::uint64_t dataset_seed = 0;
    int best_epoch = 0;
    double best_validation_accuracy = 0.0;
};

struct LoadedModel {
    KanModel model;
    TrainInfo info;
};

// JSON with full-precision parameters: save/load roundtrips bit-exactly and
// identical runs produce byte-identical files.
void save_model(const KanModel& model, const TrainInfo& info, const std::string& path);
LoadedModel load_model(const std::string& path);

}  // namespace kanwit::kan
