#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "kanwit/common.hpp"
#include "kanwit/dataset.hpp"
#include "kanwit/kan.hpp"

namespace kanwit::symbolic {

enum class TermKind { Affine, Sine };

// Sine: a*sin(b*x + c) + d.  Affine: a*x + d.
struct SymbolicTerm {
    TermKind kind = TermKind::Affine;
    double amplitude = 0.0;
    double frequency = 0.0;
    double phase = 0.0;
    double offset = 0.0;

    double operator()(double x) const {
        return kind == TermKind::Sine ? amplitude * std::sin(frequency * x + phase) + offset
                                      : amplitude * x + offset;
    }
};

struct EdgeFit {
    SymbolicTerm term;
    double r2 = 1.0;
};

// Least-squares Affine fit, plus a Sine fit with grid-searched frequency on
// [0.1, 12] (step 0.02, then local refinement) where amplitude, phase and
// offset are solved exactly by linear least squares at each frequency.
// Returns the better fit; Affine wins ties closer than 0.01 in R-squared.
EdgeFit fit_curve(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys);

// fit_curve on the activation evaluated at >= 50 observed inputs.
EdgeFit fit_edge(const kan::SplineActivation& act, const Eigen::VectorXd& sample_xs);

// One flattened summand applied to a raw input feature (offset already folded
// into the expression constant).
struct FlatTerm {
    int feature = 0;  // index into feature_labels
    SymbolicTerm term;
};

struct WitnessExpression {
    std::vector<std::string> feature_labels;
    std::vector<int> architecture;
    // terms[l][i][j]: fitted curve of edge i -> j in layer l (tree form).
    std::vector<std::vector<std::vector<SymbolicTerm>>> terms;
    // Flat form, present iff every non-first-layer edge was fitted Affine:
    // value = sum of flat_terms + constant, compared against the logistic
    // pre-image of the probability threshold.
    bool flattened = false;
    std::vector<FlatTerm> flat_terms;
    double constant = 0.0;
    double decision_threshold = 0.5;
};

struct EdgeReport {
    int layer = 0;
    int in = 0;
    int out = 0;
    SymbolicTerm term;
    double r2 = 0.0;
};

struct FitReport {
    std::vector<EdgeReport> edges;
    double agreement = 0.0;  // decision agreement with the source network
    long probe_rows = 0;
};

struct Extraction {
    WitnessExpression witness;
    FitReport report;
};

// Fits every edge on the inputs it receives when the probe set flows through
// the network, assembles the expression, flattens when possible, and scores
// decision agreement against the network on the probe.
Extraction extract_witness(const kan::KanModel& model, const dataset::Dataset& probe);

struct WitnessValue {
    double value = 0.0;    // probability scale (tree) or pre-squash sum (flattened)
    double shifted = 0.0;  // decision_threshold - value: negative side is entangled
    Label label = Label::Separable;
};

// Throws std::invalid_argument naming the observable when a required feature
// is missing from `labels`.
WitnessValue evaluate_witness(const WitnessExpression& w, const std::vector<std::string>& labels,
                              const Eigen::VectorXd& values);
WitnessValue evaluate_witness(const WitnessExpression& w, const qstate::FeatureVector& features);

// Pre-squash value of the tree form (exists for any witness with tree terms).
double tree_logit(const WitnessExpression& w, const std::vector<std::string>& labels,
                  const Eigen::VectorXd& values);

// Coefficients rounded to two decimals; flattened witnesses render as one sum
// ordered by feature label then frequency, tree witnesses node by node.
std::string render_witness(const WitnessExpression& w);

void save_witness(const WitnessExpression& w, const FitReport& report, const std::string& path);

struct LoadedWitness {
    WitnessExpression witness;
    FitReport report;
};

LoadedWitness load_witness(const std::string& path);

}  // namespace kanwit::symbolic
