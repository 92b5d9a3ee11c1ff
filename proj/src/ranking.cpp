#include "kanwit/ranking.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "kanwit/io.hpp"
#include "kanwit/symbolic.hpp"

namespace kanwit::ranking {

namespace {

std::vector<int> score_order(const Eigen::VectorXd& scores) {
    std::vector<int> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;  // fixed label order on ties
    });
    return order;
}

std::vector<int> default_architecture(Family family) {
    return family == Family::General9 ? std::vector<int>{9, 6, 3, 1} : std::vector<int>{5, 3, 1};
}

}  // namespace

ImportanceRanking attribute_importance(const kan::KanModel& model, const dataset::Dataset& data) {
    if (data.rows() < 1000)
        throw std::invalid_argument("importance attribution needs at least 1000 samples");
    if (!model.feature_labels.empty() && data.columns != model.feature_labels)
        throw SchemaError("dataset columns do not match the model's feature labels");

    const std::vector<Eigen::MatrixXd> stddev = kan::edge_output_stddev(model, data.features);

    ImportanceRanking out;
    out.labels = data.columns;
    out.degenerate = stddev.front().maxCoeff() <= 0.0;

    Eigen::VectorXd attr = Eigen::VectorXd::Ones(1);  // output node
    for (auto it = stddev.rbegin(); it != stddev.rend(); ++it) {
        const Eigen::MatrixXd& s = *it;
        Eigen::VectorXd next = Eigen::VectorXd::Zero(s.rows());
        for (Eigen::Index j = 0; j < s.cols(); ++j) {
            const double total = s.col(j).sum();
            if (total > 0.0)
                next += s.col(j) * (attr[j] / total);
            else
                next.array() += attr[j] / static_cast<double>(s.rows());
        }
        attr = std::move(next);
    }

    const double total = attr.sum();
    out.scores = total > 0.0
                     ? Eigen::VectorXd(attr / total)
                     : Eigen::VectorXd::Constant(attr.size(), 1.0 / static_cast<double>(attr.size()));
    out.order = score_order(out.scores);
    return out;
}

Eigen::VectorXd symbolic_importance(const kan::KanModel& model, const dataset::Dataset& probe) {
    if (!model.feature_labels.empty() && probe.columns != model.feature_labels)
        throw SchemaError("probe columns do not match the model's feature labels");
    const std::vector<Eigen::MatrixXd> inputs = kan::node_inputs(model, probe.features);
    const kan::KanLayer& first = model.layers.front();

    Eigen::VectorXd scores = Eigen::VectorXd::Zero(first.n_in);
    for (int i = 0; i < first.n_in; ++i) {
        const Eigen::VectorXd& xs = inputs.front().col(i);
        for (int j = 0; j < first.n_out; ++j) {
            const symbolic::EdgeFit fit = symbolic::fit_edge(model.edge(0, i, j), xs);
            scores[i] += fit.term.kind == symbolic::TermKind::Sine
                             ? std::abs(fit.term.amplitude) * std::abs(fit.term.frequency)
                             : std::abs(fit.term.amplitude);
        }
    }
    const double total = scores.sum();
    if (total > 0.0) return scores / total;
    return Eigen::VectorXd::Constant(scores.size(), 1.0 / static_cast<double>(scores.size()));
}

TopKFrequencyTable aggregate_topk(const std::vector<ImportanceRanking>& rankings) {
    if (rankings.empty()) throw std::invalid_argument("need at least one ranking to aggregate");
    const std::vector<std::string>& labels = rankings.front().labels;
    for (const ImportanceRanking& r : rankings)
        if (r.labels != labels)
            throw std::invalid_argument("rankings cover different label sets");

    TopKFrequencyTable table;
    table.n_models = static_cast<int>(rankings.size());
    table.labels = labels;
    const int k_max = std::min<int>(8, static_cast<int>(labels.size()) - 1);
    if (k_max < 1) throw std::invalid_argument("need at least two labels for Top-k counts");
    table.counts = Eigen::MatrixXi::Zero(k_max, static_cast<Eigen::Index>(labels.size()));
    for (const ImportanceRanking& r : rankings)
        for (int k = 1; k <= k_max; ++k)
            for (int pos = 0; pos < k; ++pos)
                table.counts(k - 1, r.order[static_cast<std::size_t>(pos)]) += 1;
    return table;
}

FeatureSelection select_features(const TopKFrequencyTable& table, int m) {
    if (m < 1 || m > table.k_max())
        throw std::invalid_argument("m must lie in 1.." + std::to_string(table.k_max()));

    const Eigen::Index d = table.counts.cols();
    Eigen::VectorXi cumulative = Eigen::VectorXi::Zero(d);
    for (int k = 0; k < m; ++k) cumulative += table.counts.row(k).transpose();

    std::vector<int> idx(static_cast<std::size_t>(d));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (table.counts(m - 1, a) != table.counts(m - 1, b))
            return table.counts(m - 1, a) > table.counts(m - 1, b);
        if (cumulative[a] != cumulative[b]) return cumulative[a] > cumulative[b];
        for (int k = m; k < table.k_max(); ++k)
            if (table.counts(k, a) != table.counts(k, b))
                return table.counts(k, a) > table.counts(k, b);
        return a < b;  // fixed label order
    });

    FeatureSelection sel;
    sel.m = m;
    std::vector<int> chosen(idx.begin(), idx.begin() + m);
    std::sort(chosen.begin(), chosen.end());
    for (int c : chosen) sel.observables.push_back(table.labels[static_cast<std::size_t>(c)]);
    sel.architecture = reduced_architecture(m);
    return sel;
}

std::vector<int> reduced_architecture(int m) {
    switch (m) {
        case 1:
            return {1, 3, 1};
        case 2:
            return {2, 3, 1};
        case 3:
            return {3, 2, 1};
        case 4:
            return {4, 2, 1};
        case 5:
            return {5, 3, 1};
        case 6:
            return {6, 3, 1};
        case 7:
            return {7, 5, 3, 1};
        case 8:
            return {8, 5, 3, 1};
        case 9:
            return {9, 6, 3, 1};
        default:
            throw std::invalid_argument("no reduced architecture for m = " + std::to_string(m));
    }
}

BootstrapOutcome bootstrap_rank(Family family, int n_models, long n, std::uint64_t base_seed,
                                const kan::TrainConfig& train_config, int jobs) {
    if (n_models < 1) throw std::invalid_argument("need at least one bootstrap model");
    if (jobs < 1) jobs = 1;

    std::vector<ImportanceRanking> rankings(static_cast<std::size_t>(n_models));
    std::vector<char> ok(static_cast<std::size_t>(n_models), 0);

    const auto run_model = [&](int model_id) {  // 1-based
        const auto id = static_cast<std::uint64_t>(model_id);
        const dataset::Dataset data =
            dataset::generate_dataset(family, n, derive_seed(base_seed, "bootstrap-data", id));
        const dataset::SplitResult splits =
            dataset::split(data, {}, derive_seed(base_seed, "bootstrap-split", id));
        const kan::KanModel start =
            kan::KanModel::init(default_architecture(family), kan::SplineGrid::uniform(-1.2, 1.2, 5, 3),
                                derive_seed(base_seed, "bootstrap-init", id));
        kan::TrainConfig tc = train_config;
        tc.seed = derive_seed(base_seed, "bootstrap-train", id);
        const kan::TrainResult trained = kan::train(start, splits.train, splits.validation, tc);

        ImportanceRanking r = attribute_importance(trained.model, data);
        r.model_id = model_id;
        r.secondary_scores = symbolic_importance(trained.model, splits.test);
        rankings[static_cast<std::size_t>(model_id - 1)] = std::move(r);
        ok[static_cast<std::size_t>(model_id - 1)] = 1;
    };

    std::vector<int> failed;
    std::mutex failed_mutex;
    if (jobs == 1) {
        for (int id = 1; id <= n_models; ++id) {
            try {
                run_model(id);
            } catch (const TrainingDivergence&) {
                failed.push_back(id);
            }
        }
    } else {
        std::atomic<int> next{1};
        std::vector<std::thread> workers;
        const int n_workers = std::min(jobs, n_models);
        for (int w = 0; w < n_workers; ++w)
            workers.emplace_back([&] {
                for (int id = next.fetch_add(1); id <= n_models; id = next.fetch_add(1)) {
                    try {
                        run_model(id);
                    } catch (const TrainingDivergence&) {
                        const std::lock_guard<std::mutex> lock(failed_mutex);
                        failed.push_back(id);
                    }
                }
            });
        for (std::thread& t : workers) t.join();
        std::sort(failed.begin(), failed.end());
    }

    BootstrapOutcome outcome;
    outcome.failed_models = std::move(failed);
    for (int id = 1; id <= n_models; ++id)
        if (ok[static_cast<std::size_t>(id - 1)])
            outcome.rankings.push_back(std::move(rankings[static_cast<std::size_t>(id - 1)]));
    if (2 * static_cast<int>(outcome.rankings.size()) < n_models)
        throw std::runtime_error("bootstrap failed: fewer than half of the models trained (" +
                                 std::to_string(outcome.rankings.size()) + "/" +
                                 std::to_string(n_models) + ")");
    return outcome;
}

std::vector<CurvePoint> reduced_model_curve(const TopKFrequencyTable& table, Family family,
                                            long n, std::uint64_t seed,
                                            const kan::TrainConfig& train_config) {
    const dataset::Dataset data =
        dataset::generate_dataset(family, n, derive_seed(seed, "curve-data"));
    const dataset::SplitResult splits = dataset::split(data, {}, derive_seed(seed, "curve-split"));

    std::vector<CurvePoint> curve;
    for (int m = 1; m <= std::min(8, table.k_max()); ++m) {
        const FeatureSelection sel = select_features(table, m);
        const dataset::Dataset train = dataset::project(splits.train, sel.observables);
        const dataset::Dataset validation = dataset::project(splits.validation, sel.observables);
        const dataset::Dataset test = dataset::project(splits.test, sel.observables);

        const kan::KanModel start = kan::KanModel::init(
            sel.architecture, kan::SplineGrid::uniform(-1.2, 1.2, 5, 3),
            derive_seed(seed, "curve-init", static_cast<std::uint64_t>(m)));
        kan::TrainConfig tc = train_config;
        tc.seed = derive_seed(seed, "curve-train", static_cast<std::uint64_t>(m));
        const kan::TrainResult trained = kan::train(start, train, validation, tc);

        CurvePoint point;
        point.m = m;
        point.architecture = sel.architecture;
        point.observables = sel.observables;
        point.accuracy = kan::evaluate(trained.model, test).accuracy;
        curve.push_back(std::move(point));
    }
    return curve;
}

void save_topk_table(const TopKFrequencyTable& table, const std::string& path) {
    std::string text = "# kanwit topk v1\n# n_models: " + std::to_string(table.n_models) + "\n";
    text += "k";
    for (const std::string& label : table.labels) text += "," + label;
    text += "\n";
    for (int k = 0; k < table.k_max(); ++k) {
        text += std::to_string(k + 1);
        for (Eigen::Index c = 0; c < table.counts.cols(); ++c)
            text += "," + std::to_string(table.counts(k, c));
        text += "\n";
    }
    io::write_file_atomic(path, text);
}

TopKFrequencyTable load_topk_table(const std::string& path) {
    const std::string text = io::read_file(path);
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;

    TopKFrequencyTable table;
    std::vector<Eigen::VectorXi> rows;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto colon = line.find(':');
            if (colon != std::string::npos &&
                line.substr(1, colon - 1).find("n_models") != std::string::npos)
                table.n_models = std::atoi(line.c_str() + colon + 1);
            continue;
        }
        std::vector<std::string> fields;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        fields.push_back(cur);
        if (!have_header) {
            if (fields.empty() || fields.front() != "k")
                throw ParseError(path, lineno, "expected header row starting with 'k'");
            table.labels.assign(fields.begin() + 1, fields.end());
            have_header = true;
            continue;
        }
        if (fields.size() != table.labels.size() + 1)
            throw ParseError(path, lineno, "wrong field count");
        Eigen::VectorXi row(static_cast<Eigen::Index>(table.labels.size()));
        for (std::size_t f = 1; f < fields.size(); ++f) {
            int v = 0;
            const auto [ptr, ec] =
                std::from_chars(fields[f].data(), fields[f].data() + fields[f].size(), v);
            if (ec != std::errc() || ptr != fields[f].data() + fields[f].size())
                throw ParseError(path, lineno, "not an integer: '" + fields[f] + "'");
            row[static_cast<Eigen::Index>(f - 1)] = v;
        }
        rows.push_back(std::move(row));
    }
    if (!have_header || rows.empty()) throw ParseError(path, lineno, "empty table");
    table.counts.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(table.labels.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        table.counts.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    // The Top-1 row sums to exactly n_models when the metadata line is absent.
    if (table.n_models == 0) table.n_models = rows.front().sum();
    return table;
}

}  // namespace kanwit::ranking
