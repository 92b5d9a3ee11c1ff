#include "kanwit/symbolic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "json.hpp"
#include "kanwit/io.hpp"

namespace kanwit::symbolic {

using json = nlohmann::ordered_json;

namespace {

constexpr double kFreqLo = 0.1;
constexpr double kFreqHi = 12.0;
constexpr double kFreqStep = 0.02;
constexpr double kAffinePreference = 0.01;  // R-squared margin a sine fit must beat
constexpr Eigen::Index kFitSampleCap = 2000;

struct SineSolution {
    double sse = 0.0;
    double alpha = 0.0;  // coefficient of sin(b x)
    double beta = 0.0;   // coefficient of cos(b x)
    double offset = 0.0;
};

// Least squares for y ~ alpha sin(bx) + beta cos(bx) + d at fixed frequency;
// equivalent to optimizing amplitude/phase/offset exactly.
SineSolution solve_frequency(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys, double b,
                             Eigen::MatrixXd& design) {
    design.col(0) = (b * xs.array()).sin();
    design.col(1) = (b * xs.array()).cos();
    design.col(2).setOnes();
    const Eigen::Vector3d coef = design.colPivHouseholderQr().solve(ys);
    SineSolution s;
    s.alpha = coef[0];
    s.beta = coef[1];
    s.offset = coef[2];
    s.sse = (ys - design * coef).squaredNorm();
    return s;
}

}  // namespace

EdgeFit fit_curve(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys) {
    const Eigen::Index n = xs.size();
    if (n != ys.size()) throw std::invalid_argument("fit_curve needs matching x/y lengths");
    if (n < 3) throw std::invalid_argument("fit_curve needs at least 3 points");

    const double y_mean = ys.mean();
    const double sst = (ys.array() - y_mean).square().sum();
    if (sst / static_cast<double>(n) < 1e-12) {
        EdgeFit fit;
        fit.term = {TermKind::Affine, 0.0, 0.0, 0.0, y_mean};
        fit.r2 = 1.0;
        return fit;
    }

    // Affine baseline.
    const double x_mean = xs.mean();
    const double sxx = (xs.array() - x_mean).square().sum();
    const double sxy = ((xs.array() - x_mean) * (ys.array() - y_mean)).sum();
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    const double intercept = y_mean - slope * x_mean;
    const double sse_affine =
        (ys.array() - slope * xs.array() - intercept).square().sum();
    const double r2_affine = 1.0 - sse_affine / sst;

    // Sine: coarse frequency sweep, then golden-section refinement around the
    // best grid point.
    Eigen::MatrixXd design(n, 3);
    double best_b = kFreqLo;
    double best_sse = std::numeric_limits<double>::infinity();
    for (double b = kFreqLo; b <= kFreqHi + 1e-12; b += kFreqStep) {
        const double sse = solve_frequency(xs, ys, b, design).sse;
        if (sse < best_sse) {
            best_sse = sse;
            best_b = b;
        }
    }
    {
        constexpr double inv_phi = 0.6180339887498949;
        double lo = std::max(kFreqLo, best_b - kFreqStep);
        double hi = std::min(kFreqHi, best_b + kFreqStep);
        double x1 = hi - inv_phi * (hi - lo);
        double x2 = lo + inv_phi * (hi - lo);
        double f1 = solve_frequency(xs, ys, x1, design).sse;
        double f2 = solve_frequency(xs, ys, x2, design).sse;
        for (int it = 0; it < 40 && hi - lo > 1e-10; ++it) {
            if (f1 <= f2) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = solve_frequency(xs, ys, x1, design).sse;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = solve_frequency(xs, ys, x2, design).sse;
            }
        }
        const double b_mid = 0.5 * (lo + hi);
        if (solve_frequency(xs, ys, b_mid, design).sse < best_sse) best_b = b_mid;
    }
    const SineSolution sol = solve_frequency(xs, ys, best_b, design);
    const double r2_sine = 1.0 - sol.sse / sst;

    EdgeFit fit;
    if (r2_sine - r2_affine >= kAffinePreference) {
        double phase = std::atan2(sol.beta, sol.alpha);
        if (phase >= RandomStream::pi) phase -= 2.0 * RandomStream::pi;
        fit.term = {TermKind::Sine, std::hypot(sol.alpha, sol.beta), best_b, phase, sol.offset};
        fit.r2 = r2_sine;
    } else {
        fit.term = {TermKind::Affine, slope, 0.0, 0.0, intercept};
        fit.r2 = r2_affine;
    }
    return fit;
}

EdgeFit fit_edge(const kan::SplineActivation& act, const Eigen::VectorXd& sample_xs) {
    if (sample_xs.size() < 50)
        throw std::invalid_argument("fit_edge needs at least 50 sample points");
    Eigen::VectorXd ys(sample_xs.size());
    for (Eigen::Index i = 0; i < sample_xs.size(); ++i) ys[i] = kan::edge_eval(act, sample_xs[i]);
    return fit_curve(sample_xs, ys);
}

namespace {

Eigen::VectorXd subsample(const Eigen::VectorXd& xs, Eigen::Index cap) {
    if (xs.size() <= cap) return xs;
    const Eigen::Index stride = (xs.size() + cap - 1) / cap;
    const Eigen::Index count = (xs.size() + stride - 1) / stride;
    Eigen::VectorXd out(count);
    for (Eigen::Index i = 0; i < count; ++i) out[i] = xs[i * stride];
    return out;
}

// Folds the affine deep layers onto the first-layer terms; pre: every term in
// layers >= 1 is Affine.
void flatten(WitnessExpression& w) {
    const std::size_t n_layers = w.terms.size();
    std::vector<double> mu{1.0};  // multipliers of the current layer's outputs
    double constant = 0.0;
    for (std::size_t l = n_layers - 1; l >= 1; --l) {
        const auto& layer = w.terms[l];
        const std::size_t n_in = layer.size();
        std::vector<double> mu_in(n_in, 0.0);
        for (std::size_t i = 0; i < n_in; ++i)
            for (std::size_t j = 0; j < layer[i].size(); ++j) {
                mu_in[i] += layer[i][j].amplitude * mu[j];
                constant += layer[i][j].offset * mu[j];
            }
        mu = std::move(mu_in);
    }

    std::vector<double> affine_slope(w.terms[0].size(), 0.0);
    std::vector<FlatTerm> flats;
    for (std::size_t i = 0; i < w.terms[0].size(); ++i)
        for (std::size_t j = 0; j < w.terms[0][i].size(); ++j) {
            const SymbolicTerm& t = w.terms[0][i][j];
            constant += t.offset * mu[j];
            if (t.kind == TermKind::Sine) {
                FlatTerm ft;
                ft.feature = static_cast<int>(i);
                ft.term = {TermKind::Sine, t.amplitude * mu[j], t.frequency, t.phase, 0.0};
                flats.push_back(ft);
            } else {
                affine_slope[i] += t.amplitude * mu[j];
            }
        }
    for (std::size_t i = 0; i < affine_slope.size(); ++i)
        if (affine_slope[i] != 0.0) {
            FlatTerm ft;
            ft.feature = static_cast<int>(i);
            ft.term = {TermKind::Affine, affine_slope[i], 0.0, 0.0, 0.0};
            flats.push_back(ft);
        }
    std::sort(flats.begin(), flats.end(), [](const FlatTerm& a, const FlatTerm& b) {
        if (a.feature != b.feature) return a.feature < b.feature;
        return a.term.frequency < b.term.frequency;
    });

    w.flat_terms = std::move(flats);
    w.constant = constant;
    w.flattened = true;
    w.decision_threshold = 0.0;  // logit of the 0.5 probability threshold
}

std::vector<int> feature_positions(const WitnessExpression& w,
                                   const std::vector<std::string>& labels) {
    std::vector<int> pos;
    pos.reserve(w.feature_labels.size());
    for (const std::string& name : w.feature_labels) {
        const auto it = std::find(labels.begin(), labels.end(), name);
        if (it == labels.end())
            throw std::invalid_argument("missing feature value for observable '" + name + "'");
        pos.push_back(static_cast<int>(it - labels.begin()));
    }
    return pos;
}

}  // namespace

double tree_logit(const WitnessExpression& w, const std::vector<std::string>& labels,
                  const Eigen::VectorXd& values) {
    if (w.terms.empty()) throw std::invalid_argument("witness has no expression tree");
    const std::vector<int> pos = feature_positions(w, labels);
    std::vector<double> node(w.feature_labels.size());
    for (std::size_t i = 0; i < node.size(); ++i) node[i] = values[pos[i]];
    for (const auto& layer : w.terms) {
        const std::size_t n_out = layer.empty() ? 0 : layer[0].size();
        std::vector<double> next(n_out, 0.0);
        for (std::size_t i = 0; i < layer.size(); ++i)
            for (std::size_t j = 0; j < n_out; ++j) next[j] += layer[i][j](node[i]);
        node = std::move(next);
    }
    return node.at(0);
}

WitnessValue evaluate_witness(const WitnessExpression& w, const std::vector<std::string>& labels,
                              const Eigen::VectorXd& values) {
    if (static_cast<Eigen::Index>(labels.size()) != values.size())
        throw std::invalid_argument("label/value count mismatch");
    WitnessValue out;
    if (w.flattened) {
        const std::vector<int> pos = feature_positions(w, labels);
        double sum = w.constant;
        for (const FlatTerm& ft : w.flat_terms)
            sum += ft.term(values[pos[static_cast<std::size_t>(ft.feature)]]);
        out.value = sum;
    } else {
        out.value = kan::logistic(tree_logit(w, labels, values));
    }
    out.shifted = w.decision_threshold - out.value;
    out.label = out.value >= w.decision_threshold ? Label::Entangled : Label::Separable;
    return out;
}

WitnessValue evaluate_witness(const WitnessExpression& w, const qstate::FeatureVector& features) {
    return evaluate_witness(w, features.labels(), features.values);
}

Extraction extract_witness(const kan::KanModel& model, const dataset::Dataset& probe) {
    if (probe.rows() < 100)
        throw std::invalid_argument("probe dataset needs at least 100 samples");
    if (!model.feature_labels.empty() && probe.columns != model.feature_labels)
        throw SchemaError("probe columns do not match the model's feature labels");
    if (probe.features.cols() != model.input_width())
        throw std::invalid_argument("probe feature width does not match the model");

    const std::vector<Eigen::MatrixXd> inputs = kan::node_inputs(model, probe.features);

    Extraction ex;
    WitnessExpression& w = ex.witness;
    w.feature_labels = probe.columns;
    w.architecture = model.architecture;
    w.terms.resize(model.layers.size());

    bool deep_all_affine = true;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const kan::KanLayer& layer = model.layers[l];
        w.terms[l].assign(static_cast<std::size_t>(layer.n_in),
                          std::vector<SymbolicTerm>(static_cast<std::size_t>(layer.n_out)));
        for (int i = 0; i < layer.n_in; ++i) {
            const Eigen::VectorXd xs = subsample(inputs[l].col(i), kFitSampleCap);
            for (int j = 0; j < layer.n_out; ++j) {
                const EdgeFit fit =
                    fit_edge(model.edge(static_cast<int>(l), i, j), xs);
                w.terms[l][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = fit.term;
                ex.report.edges.push_back(
                    {static_cast<int>(l), i, j, fit.term, fit.r2});
                if (l > 0 && fit.term.kind != TermKind::Affine) deep_all_affine = false;
            }
        }
    }
    if (deep_all_affine) flatten(w);

    // Decision agreement between witness and network over the probe.
    const Eigen::VectorXd z = kan::forward_logit_batch(model, probe.features);
    long agree = 0;
    for (Eigen::Index r = 0; r < probe.rows(); ++r) {
        const Label net = z[r] >= 0.0 ? Label::Entangled : Label::Separable;
        const Label wit =
            evaluate_witness(w, probe.columns, probe.features.row(r).transpose()).label;
        if (net == wit) ++agree;
    }
    ex.report.agreement = static_cast<double>(agree) / static_cast<double>(probe.rows());
    ex.report.probe_rows = probe.rows();
    return ex;
}

namespace {

std::string coef2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    std::string s = buf;
    if (s == "-0.00") s = "0.00";
    return s;
}

// "A sin(B*arg + C)" or "A*arg"; the leading sign stays attached.
std::string term_text(const SymbolicTerm& t, const std::string& arg) {
    if (t.kind == TermKind::Sine) {
        const std::string sign = t.phase < 0.0 ? " - " : " + ";
        return coef2(t.amplitude) + " sin(" + coef2(t.frequency) + "*" + arg + sign +
               coef2(std::abs(t.phase)) + ")";
    }
    return coef2(t.amplitude) + "*" + arg;
}

std::string join_terms(const std::vector<std::string>& parts) {
    std::string out;
    for (const std::string& p : parts) {
        if (out.empty()) {
            out = p;
        } else if (!p.empty() && p[0] == '-') {
            out += " - " + p.substr(1);
        } else {
            out += " + " + p;
        }
    }
    return out;
}

}  // namespace

std::string render_witness(const WitnessExpression& w) {
    if (w.flattened) {
        std::vector<std::string> parts;
        for (const FlatTerm& ft : w.flat_terms)
            parts.push_back(
                term_text(ft.term, w.feature_labels[static_cast<std::size_t>(ft.feature)]));
        if (w.constant != 0.0 || parts.empty()) parts.push_back(coef2(w.constant));
        return join_terms(parts);
    }
    if (w.terms.empty()) return coef2(0.0);

    // Node-by-node listing; offsets of a node's incoming terms are summed into
    // one trailing constant per node.
    std::string out;
    const std::size_t n_layers = w.terms.size();
    auto node_name = [&](std::size_t layer, std::size_t j) -> std::string {
        if (layer == 0) return w.feature_labels[j];
        if (layer == n_layers) return "z";
        return "h" + std::to_string(layer) + "_" + std::to_string(j);
    };
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& layer = w.terms[l];
        const std::size_t n_out = layer.empty() ? 0 : layer[0].size();
        for (std::size_t j = 0; j < n_out; ++j) {
            std::vector<std::string> parts;
            double node_offset = 0.0;
            for (std::size_t i = 0; i < layer.size(); ++i) {
                SymbolicTerm t = layer[i][j];
                node_offset += t.offset;
                t.offset = 0.0;
                parts.push_back(term_text(t, node_name(l, i)));
            }
            if (node_offset != 0.0 || parts.empty()) parts.push_back(coef2(node_offset));
            out += node_name(l + 1, j) + " = " + join_terms(parts) + "\n";
        }
    }
    out += "score = logistic(z)";
    return out;
}

namespace {

json term_to_json(const SymbolicTerm& t) {
    json j;
    j["kind"] = t.kind == TermKind::Sine ? "sine" : "affine";
    j["amplitude"] = t.amplitude;
    if (t.kind == TermKind::Sine) {
        j["frequency"] = t.frequency;
        j["phase"] = t.phase;
    }
    j["offset"] = t.offset;
    return j;
}

SymbolicTerm term_from_json(const json& j) {
    SymbolicTerm t;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "sine")
        t.kind = TermKind::Sine;
    else if (kind == "affine")
        t.kind = TermKind::Affine;
    else
        throw SchemaError("unknown term kind: " + kind);
    t.amplitude = j.at("amplitude").get<double>();
    t.offset = j.value("offset", 0.0);
    if (t.kind == TermKind::Sine) {
        t.frequency = j.at("frequency").get<double>();
        t.phase = j.at("phase").get<double>();
    }
    return t;
}

}  // namespace

void save_witness(const WitnessExpression& w, const FitReport& report, const std::string& path) {
    json doc;
    doc["format"] = "kanwit-witness-v1";
    doc["feature_labels"] = w.feature_labels;
    doc["architecture"] = w.architecture;
    doc["decision_threshold"] = w.decision_threshold;
    doc["flattened"] = w.flattened;
    doc["constant"] = w.constant;
    json flats = json::array();
    for (const FlatTerm& ft : w.flat_terms) {
        json j = term_to_json(ft.term);
        j["feature"] = w.feature_labels.at(static_cast<std::size_t>(ft.feature));
        flats.push_back(std::move(j));
    }
    doc["flat_terms"] = std::move(flats);
    json tree = json::array();
    for (const auto& layer : w.terms) {
        json jl = json::array();
        for (const auto& row : layer) {
            json jr = json::array();
            for (const SymbolicTerm& t : row) jr.push_back(term_to_json(t));
            jl.push_back(std::move(jr));
        }
        tree.push_back(std::move(jl));
    }
    doc["tree"] = std::move(tree);
    json edges = json::array();
    for (const EdgeReport& e : report.edges) {
        json j = term_to_json(e.term);
        j["layer"] = e.layer;
        j["in"] = e.in;
        j["out"] = e.out;
        j["r2"] = e.r2;
        edges.push_back(std::move(j));
    }
    doc["fit_report"] = {{"agreement", report.agreement},
                         {"probe_rows", report.probe_rows},
                         {"edges", std::move(edges)}};
    doc["rendered"] = render_witness(w);
    io::write_file_atomic(path, doc.dump(2) + "\n");
}

LoadedWitness load_witness(const std::string& path) {
    json doc;
    try {
        doc = json::parse(io::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != "kanwit-witness-v1")
            throw SchemaError(path + ": not a kanwit witness file");
        LoadedWitness out;
        WitnessExpression& w = out.witness;
        w.feature_labels = doc.at("feature_labels").get<std::vector<std::string>>();
        w.architecture = doc.value("architecture", std::vector<int>{});
        w.decision_threshold = doc.at("decision_threshold").get<double>();
        w.flattened = doc.at("flattened").get<bool>();
        w.constant = doc.value("constant", 0.0);
        for (const json& j : doc.value("flat_terms", json::array())) {
            FlatTerm ft;
            ft.term = term_from_json(j);
            const std::string label = j.at("feature").get<std::string>();
            const auto it =
                std::find(w.feature_labels.begin(), w.feature_labels.end(), label);
            if (it == w.feature_labels.end())
                throw SchemaError(path + ": flat term names unknown observable '" + label + "'");
            ft.feature = static_cast<int>(it - w.feature_labels.begin());
            w.flat_terms.push_back(std::move(ft));
        }
        for (const json& jl : doc.value("tree", json::array())) {
            std::vector<std::vector<SymbolicTerm>> layer;
            for (const json& jr : jl) {
                std::vector<SymbolicTerm> row;
                for (const json& jt : jr) row.push_back(term_from_json(jt));
                layer.push_back(std::move(row));
            }
            w.terms.push_back(std::move(layer));
        }
        if (doc.contains("fit_report")) {
            const json& jf = doc.at("fit_report");
            out.report.agreement = jf.value("agreement", 0.0);
            out.report.probe_rows = jf.value("probe_rows", 0L);
            for (const json& je : jf.value("edges", json::array())) {
                EdgeReport e;
                e.term = term_from_json(je);
                e.layer = je.at("layer").get<int>();
                e.in = je.at("in").get<int>();
                e.out = je.at("out").get<int>();
                e.r2 = je.at("r2").get<double>();
                out.report.edges.push_back(e);
            }
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

}  // namespace kanwit::symbolic
