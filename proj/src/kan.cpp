#include "kanwit/kan.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "kanwit/io.hpp"

namespace kanwit::kan {

using json = nlohmann::ordered_json;

namespace {

constexpr int kMaxDegree = 15;
constexpr Eigen::Index kChunk = 8192;

void shuffle_indices(std::vector<Eigen::Index>& idx, RandomStream& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);
}

}  // namespace

SplineGrid SplineGrid::uniform(double min, double max, int intervals, int degree) {
    if (!(min < max)) throw std::invalid_argument("spline grid needs min < max");
    if (intervals < 1 || degree < 1 || degree > kMaxDegree)
        throw std::invalid_argument("spline grid needs intervals >= 1 and degree in [1, 15]");
    SplineGrid g;
    g.min = min;
    g.max = max;
    g.intervals = intervals;
    g.degree = degree;
    const double h = (max - min) / intervals;
    g.knots.resize(intervals + 2 * degree + 1);
    for (Eigen::Index i = 0; i < g.knots.size(); ++i)
        g.knots[i] = min + (static_cast<double>(i) - degree) * h;
    return g;
}

void SplineGrid::basis_row(double x, double* values, double* derivatives) const {
    const int k = degree;
    const int nb = basis_count();
    std::fill(values, values + nb, 0.0);
    if (derivatives) std::fill(derivatives, derivatives + nb, 0.0);

    const bool outside = x < min || x > max;
    const double xc = outside ? std::clamp(x, min, max) : x;
    const double h = (max - min) / intervals;
    const int cell = std::clamp(static_cast<int>((xc - min) / h), 0, intervals - 1);
    const int s = k + cell;  // knot span: knots[s] <= xc < knots[s+1]

    // Cox-de Boor recursion over the k+1 basis functions alive on the span.
    std::array<double, kMaxDegree + 1> n{}, lower{}, left{}, right{};
    n[0] = 1.0;
    if (derivatives && k == 1) lower[0] = 1.0;
    for (int j = 1; j <= k; ++j) {
        left[j] = xc - knots[s + 1 - j];
        right[j] = knots[s + j] - xc;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
        if (derivatives && j == k - 1)
            std::copy(n.begin(), n.begin() + k, lower.begin());  // degree k-1 values
    }
    for (int r = 0; r <= k; ++r) values[s - k + r] = n[r];

    // Order-reduction identity; outside the grid the clamped extension is flat.
    if (derivatives && !outside) {
        for (int r = 0; r <= k; ++r) {
            const int m = s - k + r;
            double d = 0.0;
            if (r >= 1) d += lower[r - 1] / (knots[m + k] - knots[m]);
            if (r <= k - 1) d -= lower[r] / (knots[m + k + 1] - knots[m + 1]);
            derivatives[m] = k * d;
        }
    }
}

double silu(double x) {
    return x * logistic(x);
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double edge_eval(const SplineActivation& act, double x) {
    Eigen::VectorXd buf(act.grid.basis_count());
    act.grid.basis_row(x, buf.data());
    return act.base_weight * silu(x) + act.spline_weight * buf.dot(act.coefficients);
}

KanModel KanModel::zeros(const std::vector<int>& architecture, const SplineGrid& grid) {
    if (architecture.size() < 2) throw std::invalid_argument("architecture needs >= 2 layers");
    for (int w : architecture)
        if (w < 1) throw std::invalid_argument("layer widths must be positive");
    if (architecture.back() != 1)
        throw std::invalid_argument("final layer width must be 1 for binary classification");

    KanModel model;
    model.architecture = architecture;
    model.grid = grid;
    const int nb = grid.basis_count();
    for (std::size_t l = 0; l + 1 < architecture.size(); ++l) {
        KanLayer layer;
        layer.n_in = architecture[l];
        layer.n_out = architecture[l + 1];
        layer.base_weight = Eigen::MatrixXd::Zero(layer.n_in, layer.n_out);
        layer.spline_weight = Eigen::MatrixXd::Zero(layer.n_in, layer.n_out);
        layer.spline_coeff.assign(static_cast<std::size_t>(layer.n_in),
                                  Eigen::MatrixXd::Zero(nb, layer.n_out));
        model.layers.push_back(std::move(layer));
    }
    return model;
}

KanModel KanModel::init(const std::vector<int>& architecture, const SplineGrid& grid,
                        std::uint64_t seed) {
    KanModel model = zeros(architecture, grid);
    RandomStream rng(seed);
    const int nb = grid.basis_count();
    const double coeff_sigma = 0.1 / std::sqrt(static_cast<double>(nb));
    for (KanLayer& layer : model.layers) {
        const double base_sigma = 1.0 / std::sqrt(static_cast<double>(layer.n_in));
        for (int i = 0; i < layer.n_in; ++i)
            for (int j = 0; j < layer.n_out; ++j)
                for (int m = 0; m < nb; ++m)
                    layer.spline_coeff[static_cast<std::size_t>(i)](m, j) =
                        coeff_sigma * rng.normal();
        for (int i = 0; i < layer.n_in; ++i)
            for (int j = 0; j < layer.n_out; ++j) layer.base_weight(i, j) = base_sigma * rng.normal();
        layer.spline_weight.setOnes();
    }
    return model;
}

SplineActivation KanModel::edge(int layer, int in, int out) const {
    const KanLayer& l = layers.at(static_cast<std::size_t>(layer));
    if (in < 0 || in >= l.n_in || out < 0 || out >= l.n_out)
        throw std::invalid_argument("edge index out of range");
    SplineActivation act;
    act.grid = grid;
    act.coefficients = l.spline_coeff[static_cast<std::size_t>(in)].col(out);
    act.base_weight = l.base_weight(in, out);
    act.spline_weight = l.spline_weight(in, out);
    return act;
}

namespace {

struct LayerCache {
    Eigen::MatrixXd silu_v;                     // B x n_in
    Eigen::MatrixXd dsilu_v;                    // B x n_in
    std::vector<Eigen::MatrixXd> basis;         // n_in of B x nb
    std::vector<Eigen::MatrixXd> dbasis;        // n_in of B x nb
    std::vector<Eigen::MatrixXd> spline_part;   // n_in of B x n_out (basis * coeff)
};

// One layer forward; fills `cache` when non-null (training path).
Eigen::MatrixXd layer_forward(const KanLayer& layer, const SplineGrid& grid,
                              const Eigen::MatrixXd& x, LayerCache* cache) {
    const Eigen::Index bn = x.rows();
    const int nb = grid.basis_count();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(bn, layer.n_out);

    Eigen::MatrixXd basis(bn, nb), dbasis;
    if (cache) {
        cache->silu_v.resize(bn, layer.n_in);
        cache->dsilu_v.resize(bn, layer.n_in);
        cache->basis.assign(static_cast<std::size_t>(layer.n_in), Eigen::MatrixXd());
        cache->dbasis.assign(static_cast<std::size_t>(layer.n_in), Eigen::MatrixXd());
        cache->spline_part.assign(static_cast<std::size_t>(layer.n_in), Eigen::MatrixXd());
        dbasis.resize(bn, nb);
    }

    Eigen::VectorXd vbuf(nb), dbuf(nb);
    Eigen::VectorXd silu_col(bn);
    for (int i = 0; i < layer.n_in; ++i) {
        for (Eigen::Index b = 0; b < bn; ++b) {
            const double xv = x(b, i);
            grid.basis_row(xv, vbuf.data(), cache ? dbuf.data() : nullptr);
            for (int m = 0; m < nb; ++m) basis(b, m) = vbuf[m];
            if (cache)
                for (int m = 0; m < nb; ++m) dbasis(b, m) = dbuf[m];
            const double sig = logistic(xv);
            silu_col[b] = xv * sig;
            if (cache) cache->dsilu_v(b, i) = sig * (1.0 + xv * (1.0 - sig));
        }
        Eigen::MatrixXd part(bn, layer.n_out);
        part.noalias() = basis * layer.spline_coeff[static_cast<std::size_t>(i)];
        out.noalias() += silu_col * layer.base_weight.row(i);
        out.noalias() += part * layer.spline_weight.row(i).asDiagonal();
        if (cache) {
            cache->silu_v.col(i) = silu_col;
            cache->basis[static_cast<std::size_t>(i)] = basis;
            cache->dbasis[static_cast<std::size_t>(i)] = dbasis;
            cache->spline_part[static_cast<std::size_t>(i)] = std::move(part);
        }
    }
    return out;
}

void check_width(const KanModel& model, Eigen::Index cols) {
    if (cols != model.input_width())
        throw std::invalid_argument("feature width " + std::to_string(cols) +
                                    " does not match model input width " +
                                    std::to_string(model.input_width()));
}

Gradients zero_gradients(const KanModel& model) {
    Gradients g;
    for (const KanLayer& layer : model.layers) {
        LayerGradients lg;
        lg.base_weight = Eigen::MatrixXd::Zero(layer.n_in, layer.n_out);
        lg.spline_weight = Eigen::MatrixXd::Zero(layer.n_in, layer.n_out);
        lg.spline_coeff.assign(static_cast<std::size_t>(layer.n_in),
                               Eigen::MatrixXd::Zero(model.grid.basis_count(), layer.n_out));
        g.layers.push_back(std::move(lg));
    }
    return g;
}

// Backpropagation of d(loss)/d(logit) through cached layer activations.
// When l1_scale > 0, each edge also receives l1_scale * sign(edge output),
// the subgradient of the mean-absolute-activation penalty.
Gradients backward_cached(const KanModel& model, const std::vector<LayerCache>& caches,
                          const Eigen::VectorXd& dlogit, double l1_scale) {
    Gradients grads = zero_gradients(model);
    Eigen::MatrixXd g = dlogit;  // B x n_out of the last layer (width 1)
    for (int l = static_cast<int>(model.layers.size()) - 1; l >= 0; --l) {
        const KanLayer& layer = model.layers[static_cast<std::size_t>(l)];
        const LayerCache& cache = caches[static_cast<std::size_t>(l)];
        LayerGradients& lg = grads.layers[static_cast<std::size_t>(l)];
        const Eigen::Index bn = g.rows();
        Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(bn, layer.n_in);
        Eigen::MatrixXd gi, q;
        for (int i = 0; i < layer.n_in; ++i) {
            const auto iu = static_cast<std::size_t>(i);
            const Eigen::MatrixXd* geff = &g;
            if (l1_scale > 0.0) {
                gi = cache.silu_v.col(i) * layer.base_weight.row(i) +
                     cache.spline_part[iu] * layer.spline_weight.row(i).asDiagonal();
                gi = g + l1_scale * gi.array().sign().matrix();
                geff = &gi;
            }
            lg.base_weight.row(i).noalias() = cache.silu_v.col(i).transpose() * (*geff);
            lg.spline_weight.row(i) =
                cache.spline_part[iu].cwiseProduct(*geff).colwise().sum();
            lg.spline_coeff[iu].noalias() =
                cache.basis[iu].transpose() *
                (*geff * layer.spline_weight.row(i).asDiagonal());
            if (l > 0) {
                q.noalias() = cache.dbasis[iu] * layer.spline_coeff[iu];
                gx.col(i) = cache.dsilu_v.col(i).cwiseProduct(
                                *geff * layer.base_weight.row(i).transpose()) +
                            geff->cwiseProduct(q) * layer.spline_weight.row(i).transpose();
            }
        }
        g = std::move(gx);
    }
    return grads;
}

double stable_bce(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

Eigen::VectorXd forward_logit_batch(const KanModel& model, const Eigen::MatrixXd& rows) {
    check_width(model, rows.cols());
    Eigen::VectorXd out(rows.rows());
    for (Eigen::Index start = 0; start < rows.rows(); start += kChunk) {
        const Eigen::Index len = std::min(kChunk, rows.rows() - start);
        Eigen::MatrixXd x = rows.middleRows(start, len);
        for (const KanLayer& layer : model.layers) x = layer_forward(layer, model.grid, x, nullptr);
        out.segment(start, len) = x.col(0);
    }
    return out;
}

double forward_logit(const KanModel& model, const Eigen::VectorXd& features) {
    return forward_logit_batch(model, features.transpose())[0];
}

double forward(const KanModel& model, const Eigen::VectorXd& features) {
    return logistic(forward_logit(model, features));
}

Label predict(const KanModel& model, const Eigen::VectorXd& features) {
    return forward_logit(model, features) >= 0.0 ? Label::Entangled : Label::Separable;
}

Gradients backward(const KanModel& model, const Eigen::MatrixXd& rows,
                   const std::vector<Label>& labels) {
    check_width(model, rows.cols());
    if (static_cast<std::size_t>(rows.rows()) != labels.size())
        throw std::invalid_argument("row/label count mismatch");
    std::vector<LayerCache> caches(model.layers.size());
    Eigen::MatrixXd x = rows;
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        x = layer_forward(model.layers[l], model.grid, x, &caches[l]);
    Eigen::VectorXd dlogit(rows.rows());
    for (Eigen::Index b = 0; b < rows.rows(); ++b)
        dlogit[b] = logistic(x(b, 0)) - (labels[static_cast<std::size_t>(b)] == Label::Entangled
                                             ? 1.0
                                             : 0.0);
    return backward_cached(model, caches, dlogit, 0.0);
}

Gradients backward(const KanModel& model, const Eigen::VectorXd& features, Label label) {
    return backward(model, features.transpose(), std::vector<Label>{label});
}

std::vector<Eigen::MatrixXd> node_inputs(const KanModel& model, const Eigen::MatrixXd& rows) {
    check_width(model, rows.cols());
    std::vector<Eigen::MatrixXd> inputs;
    inputs.reserve(model.layers.size());
    Eigen::MatrixXd x = rows;
    for (const KanLayer& layer : model.layers) {
        inputs.push_back(x);
        x = layer_forward(layer, model.grid, x, nullptr);
    }
    return inputs;
}

std::vector<Eigen::MatrixXd> edge_output_stddev(const KanModel& model,
                                                const Eigen::MatrixXd& rows) {
    check_width(model, rows.cols());
    const auto n = static_cast<double>(rows.rows());
    if (rows.rows() < 2) throw std::invalid_argument("need at least 2 rows for edge statistics");

    std::vector<Eigen::MatrixXd> sum, sumsq;
    for (const KanLayer& layer : model.layers) {
        sum.push_back(Eigen::MatrixXd::Zero(layer.n_in, layer.n_out));
        sumsq.push_back(Eigen::MatrixXd::Zero(layer.n_in, layer.n_out));
    }

    for (Eigen::Index start = 0; start < rows.rows(); start += kChunk) {
        const Eigen::Index len = std::min(kChunk, rows.rows() - start);
        Eigen::MatrixXd x = rows.middleRows(start, len);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            const KanLayer& layer = model.layers[l];
            LayerCache cache;
            Eigen::MatrixXd next = layer_forward(layer, model.grid, x, &cache);
            for (int i = 0; i < layer.n_in; ++i) {
                const Eigen::MatrixXd edge_out =
                    cache.silu_v.col(i) * layer.base_weight.row(i) +
                    cache.spline_part[static_cast<std::size_t>(i)] *
                        layer.spline_weight.row(i).asDiagonal();
                sum[l].row(i) += edge_out.colwise().sum();
                sumsq[l].row(i) += edge_out.array().square().matrix().colwise().sum();
            }
            x = std::move(next);
        }
    }

    std::vector<Eigen::MatrixXd> stddev;
    for (std::size_t l = 0; l < sum.size(); ++l) {
        Eigen::ArrayXXd mean = sum[l].array() / n;
        Eigen::ArrayXXd var = (sumsq[l].array() / n - mean.square()).max(0.0);
        stddev.push_back(var.sqrt().matrix());
    }
    return stddev;
}

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1) throw std::invalid_argument("epochs and batch_size must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (l1_activation_penalty < 0.0)
        throw std::invalid_argument("l1_activation_penalty must be non-negative");
    if (early_stop_patience < 1) throw std::invalid_argument("early_stop_patience must be positive");
}

namespace {

struct AdamState {
    Gradients m;
    Gradients v;
    long step = 0;
};

void adam_update_tensor(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, Eigen::MatrixXd& m,
                        Eigen::MatrixXd& v, double lr, double bc1, double bc2) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

void adam_step(KanModel& model, const Gradients& grads, AdamState& state, double lr) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(state.step));
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        KanLayer& layer = model.layers[l];
        const LayerGradients& lg = grads.layers[l];
        adam_update_tensor(layer.base_weight, lg.base_weight, state.m.layers[l].base_weight,
                           state.v.layers[l].base_weight, lr, bc1, bc2);
        adam_update_tensor(layer.spline_weight, lg.spline_weight, state.m.layers[l].spline_weight,
                           state.v.layers[l].spline_weight, lr, bc1, bc2);
        for (std::size_t i = 0; i < layer.spline_coeff.size(); ++i)
            adam_update_tensor(layer.spline_coeff[i], lg.spline_coeff[i],
                               state.m.layers[l].spline_coeff[i], state.v.layers[l].spline_coeff[i],
                               lr, bc1, bc2);
    }
}

Eigen::VectorXd labels_as_reals(const std::vector<Label>& labels) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(labels.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i)
        y[i] = labels[static_cast<std::size_t>(i)] == Label::Entangled ? 1.0 : 0.0;
    return y;
}

// Mean objective (BCE + optional L1 activation penalty) without gradients.
double mean_objective(const KanModel& model, const Eigen::MatrixXd& rows,
                      const Eigen::VectorXd& y, double l1) {
    double total = 0.0;
    double abs_edges = 0.0;
    long total_edges = 0;
    for (const KanLayer& layer : model.layers) total_edges += layer.n_in * layer.n_out;
    for (Eigen::Index start = 0; start < rows.rows(); start += kChunk) {
        const Eigen::Index len = std::min(kChunk, rows.rows() - start);
        Eigen::MatrixXd x = rows.middleRows(start, len);
        for (const KanLayer& layer : model.layers) {
            if (l1 > 0.0) {
                LayerCache cache;
                Eigen::MatrixXd next = layer_forward(layer, model.grid, x, &cache);
                for (int i = 0; i < layer.n_in; ++i)
                    abs_edges += (cache.silu_v.col(i) * layer.base_weight.row(i) +
                                  cache.spline_part[static_cast<std::size_t>(i)] *
                                      layer.spline_weight.row(i).asDiagonal())
                                     .cwiseAbs()
                                     .sum();
                x = std::move(next);
            } else {
                x = layer_forward(layer, model.grid, x, nullptr);
            }
        }
        for (Eigen::Index b = 0; b < len; ++b) total += stable_bce(x(b, 0), y[start + b]);
    }
    const auto n = static_cast<double>(rows.rows());
    double obj = total / n;
    if (l1 > 0.0) obj += l1 * abs_edges / (n * static_cast<double>(total_edges));
    return obj;
}

double accuracy_of(const KanModel& model, const Eigen::MatrixXd& rows,
                   const std::vector<Label>& labels) {
    const Eigen::VectorXd z = forward_logit_batch(model, rows);
    long hits = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const Label pred = z[i] >= 0.0 ? Label::Entangled : Label::Separable;
        if (pred == labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(z.size());
}

}  // namespace

TrainResult train(const KanModel& start, const dataset::Dataset& train_data,
                  const dataset::Dataset& validation, const TrainConfig& config) {
    config.validate();
    check_width(start, train_data.features.cols());
    check_width(start, validation.features.cols());
    if (train_data.rows() == 0 || validation.rows() == 0)
        throw std::invalid_argument("train and validation sets must be non-empty");
    if (!train_data.columns.empty() && !start.feature_labels.empty() &&
        train_data.columns != start.feature_labels)
        throw SchemaError("dataset columns do not match the model's feature labels");

    const Eigen::MatrixXd& x_train = train_data.features;
    const Eigen::VectorXd y_train = labels_as_reals(train_data.labels);
    const auto n = x_train.rows();
    const double l1 = config.l1_activation_penalty;
    long total_edges = 0;
    for (const KanLayer& layer : start.layers) total_edges += layer.n_in * layer.n_out;

    KanModel model = start;
    model.feature_labels = train_data.columns;

    AdamState adam{zero_gradients(model), zero_gradients(model), 0};

    TrainResult result;
    result.initial_loss = mean_objective(model, x_train, y_train, l1);
    double best_acc = -1.0;

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;

    int patience = 0;
    std::vector<LayerCache> caches(model.layers.size());
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        RandomStream rng(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle_indices(perm, rng);

        double epoch_loss = 0.0;
        for (Eigen::Index begin = 0; begin < n; begin += config.batch_size) {
            const Eigen::Index len = std::min<Eigen::Index>(config.batch_size, n - begin);
            Eigen::MatrixXd xb(len, x_train.cols());
            Eigen::VectorXd yb(len);
            for (Eigen::Index r = 0; r < len; ++r) {
                xb.row(r) = x_train.row(perm[static_cast<std::size_t>(begin + r)]);
                yb[r] = y_train[perm[static_cast<std::size_t>(begin + r)]];
            }

            Eigen::MatrixXd x = xb;
            for (std::size_t l = 0; l < model.layers.size(); ++l)
                x = layer_forward(model.layers[l], model.grid, x, &caches[l]);

            double batch_loss = 0.0;
            Eigen::VectorXd dlogit(len);
            for (Eigen::Index b = 0; b < len; ++b) {
                batch_loss += stable_bce(x(b, 0), yb[b]);
                dlogit[b] = (logistic(x(b, 0)) - yb[b]) / static_cast<double>(len);
            }
            batch_loss /= static_cast<double>(len);
            if (l1 > 0.0) {
                double abs_edges = 0.0;
                for (std::size_t l = 0; l < model.layers.size(); ++l) {
                    const KanLayer& layer = model.layers[l];
                    for (int i = 0; i < layer.n_in; ++i)
                        abs_edges += (caches[l].silu_v.col(i) * layer.base_weight.row(i) +
                                      caches[l].spline_part[static_cast<std::size_t>(i)] *
                                          layer.spline_weight.row(i).asDiagonal())
                                         .cwiseAbs()
                                         .sum();
                }
                batch_loss += l1 * abs_edges /
                              (static_cast<double>(len) * static_cast<double>(total_edges));
            }
            if (!std::isfinite(batch_loss)) throw TrainingDivergence(epoch);

            const double l1_scale =
                l1 > 0.0 ? l1 / (static_cast<double>(len) * static_cast<double>(total_edges)) : 0.0;
            const Gradients grads = backward_cached(model, caches, dlogit, l1_scale);
            adam_step(model, grads, adam, config.learning_rate);
            epoch_loss += batch_loss * static_cast<double>(len);
        }
        epoch_loss /= static_cast<double>(n);

        const double val_acc = accuracy_of(model, validation.features, validation.labels);
        result.history.push_back({epoch, epoch_loss, val_acc});

        if (val_acc > best_acc) {
            best_acc = val_acc;
            result.best_epoch = epoch;
            result.best_train_loss = epoch_loss;
            result.model = model;
            patience = 0;
        } else if (++patience >= config.early_stop_patience) {
            break;
        }
    }
    result.best_validation_accuracy = best_acc;
    return result;
}

ClassificationReport ClassificationReport::from_confusion(long tp, long fp, long tn, long fn) {
    ClassificationReport r;
    r.tp = tp;
    r.fp = fp;
    r.tn = tn;
    r.fn = fn;
    const auto safe_div = [](long num, long den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    const long total = tp + fp + tn + fn;
    r.accuracy = safe_div(tp + tn, total);
    r.precision[1] = safe_div(tp, tp + fp);
    r.recall[1] = safe_div(tp, tp + fn);
    r.precision[0] = safe_div(tn, tn + fn);
    r.recall[0] = safe_div(tn, tn + fp);
    for (int c = 0; c < 2; ++c) {
        const double pr = r.precision[c] + r.recall[c];
        r.f1[c] = pr == 0.0 ? 0.0 : 2.0 * r.precision[c] * r.recall[c] / pr;
    }
    return r;
}

ClassificationReport evaluate(const KanModel& model, const dataset::Dataset& data) {
    if (data.rows() == 0) throw std::invalid_argument("cannot evaluate on an empty dataset");
    const Eigen::VectorXd z = forward_logit_batch(model, data.features);
    long tp = 0, fp = 0, tn = 0, fn = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const bool pred = z[i] >= 0.0;
        const bool truth = data.labels[static_cast<std::size_t>(i)] == Label::Entangled;
        if (pred && truth)
            ++tp;
        else if (pred && !truth)
            ++fp;
        else if (!pred && !truth)
            ++tn;
        else
            ++fn;
    }
    return ClassificationReport::from_confusion(tp, fp, tn, fn);
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows, Eigen::Index want_rows, Eigen::Index want_cols,
                                 const std::string& what) {
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != want_rows)
        throw SchemaError("bad " + what + ": expected " + std::to_string(want_rows) + " rows");
    Eigen::MatrixXd m(want_rows, want_cols);
    for (Eigen::Index r = 0; r < want_rows; ++r) {
        const json& row = rows[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != want_cols)
            throw SchemaError("bad " + what + ": expected " + std::to_string(want_cols) +
                              " columns");
        for (Eigen::Index c = 0; c < want_cols; ++c)
            m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

}  // namespace

void save_model(const KanModel& model, const TrainInfo& info, const std::string& path) {
    json doc;
    doc["format"] = "kanwit-model-v1";
    doc["architecture"] = model.architecture;
    doc["grid"] = {{"min", model.grid.min},
                   {"max", model.grid.max},
                   {"intervals", model.grid.intervals},
                   {"degree", model.grid.degree}};
    doc["feature_labels"] = model.feature_labels;
    json layers = json::array();
    for (const KanLayer& layer : model.layers) {
        json jl;
        jl["base_weight"] = matrix_to_json(layer.base_weight);
        jl["spline_weight"] = matrix_to_json(layer.spline_weight);
        json coeff = json::array();
        for (const Eigen::MatrixXd& c : layer.spline_coeff) coeff.push_back(matrix_to_json(c));
        jl["spline_coeff"] = std::move(coeff);
        layers.push_back(std::move(jl));
    }
    doc["layers"] = std::move(layers);
    doc["train"] = {{"epochs", info.config.epochs},
                    {"batch_size", info.config.batch_size},
                    {"learning_rate", info.config.learning_rate},
                    {"seed", info.config.seed},
                    {"l1_activation_penalty", info.config.l1_activation_penalty},
                    {"early_stop_patience", info.config.early_stop_patience},
                    {"dataset_seed", info.dataset_seed},
                    {"best_epoch", info.best_epoch},
                    {"best_validation_accuracy", info.best_validation_accuracy}};
    io::write_file_atomic(path, doc.dump(2) + "\n");
}

LoadedModel load_model(const std::string& path) {
    json doc;
    try {
        doc = json::parse(io::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != "kanwit-model-v1")
            throw SchemaError(path + ": not a kanwit model file");
        const auto architecture = doc.at("architecture").get<std::vector<int>>();
        const json& jg = doc.at("grid");
        const SplineGrid grid =
            SplineGrid::uniform(jg.at("min").get<double>(), jg.at("max").get<double>(),
                                jg.at("intervals").get<int>(), jg.at("degree").get<int>());
        KanModel model = KanModel::zeros(architecture, grid);
        model.feature_labels = doc.at("feature_labels").get<std::vector<std::string>>();
        const json& jlayers = doc.at("layers");
        if (jlayers.size() != model.layers.size())
            throw SchemaError(path + ": layer count does not match architecture");
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            KanLayer& layer = model.layers[l];
            const json& jl = jlayers[l];
            layer.base_weight =
                matrix_from_json(jl.at("base_weight"), layer.n_in, layer.n_out, "base_weight");
            layer.spline_weight = matrix_from_json(jl.at("spline_weight"), layer.n_in,
                                                   layer.n_out, "spline_weight");
            const json& coeff = jl.at("spline_coeff");
            if (static_cast<int>(coeff.size()) != layer.n_in)
                throw SchemaError(path + ": spline_coeff count does not match layer width");
            for (int i = 0; i < layer.n_in; ++i)
                layer.spline_coeff[static_cast<std::size_t>(i)] =
                    matrix_from_json(coeff[static_cast<std::size_t>(i)], grid.basis_count(),
                                     layer.n_out, "spline_coeff");
        }
        TrainInfo info;
        const json& jt = doc.at("train");
        info.config.epochs = jt.at("epochs").get<int>();
        info.config.batch_size = jt.at("batch_size").get<int>();
        info.config.learning_rate = jt.at("learning_rate").get<double>();
        info.config.seed = jt.at("seed").get<std::uint64_t>();
        info.config.l1_activation_penalty = jt.at("l1_activation_penalty").get<double>();
        info.config.early_stop_patience = jt.at("early_stop_patience").get<int>();
        info.dataset_seed = jt.at("dataset_seed").get<std::uint64_t>();
        info.best_epoch = jt.at("best_epoch").get<int>();
        info.best_validation_accuracy = jt.at("best_validation_accuracy").get<double>();
        return {std::move(model), info};
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

}  // namespace kanwit::kan
