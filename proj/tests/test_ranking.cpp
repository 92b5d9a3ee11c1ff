#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "kanwit/io.hpp"
#include "kanwit/ranking.hpp"

using namespace kanwit;
using namespace kanwit::ranking;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string fixture(const std::string& name) {
    return std::string(KANWIT_TEST_DATA_DIR) + "/" + name;
}

struct FileGuard {
    std::string path;
    ~FileGuard() { std::filesystem::remove(path); }
};

dataset::Dataset random_dataset(int rows, int cols, std::uint64_t seed) {
    RandomStream rng(seed);
    dataset::Dataset d;
    d.family = Family::General9;
    const auto& all = observable_labels(Family::General9);
    d.columns.assign(all.begin(), all.begin() + cols);
    d.features = Eigen::MatrixXd(rows, cols);
    for (Eigen::Index i = 0; i < d.features.size(); ++i)
        d.features.data()[i] = 2.0 * rng.uniform() - 1.0;
    d.labels.assign(static_cast<std::size_t>(rows), Label::Separable);
    return d;
}

// Greville-coefficient spline: edge_eval realizes slope*x + offset exactly
// inside the grid.
void make_affine_edge(kan::KanModel& model, int layer, int in, int out, double slope,
                      double offset) {
    const kan::SplineGrid& grid = model.grid;
    auto& l = model.layers[static_cast<std::size_t>(layer)];
    for (int m = 0; m < grid.basis_count(); ++m) {
        double g = 0.0;
        for (int j = 1; j <= grid.degree; ++j) g += grid.knots[m + j];
        l.spline_coeff[static_cast<std::size_t>(in)](m, out) = slope * g / grid.degree + offset;
    }
    l.spline_weight(in, out) = 1.0;
}

TopKFrequencyTable make_table(const std::vector<std::string>& labels,
                              const std::vector<std::vector<int>>& rows, int n_models) {
    TopKFrequencyTable t;
    t.n_models = n_models;
    t.labels = labels;
    t.counts = Eigen::MatrixXi(static_cast<Eigen::Index>(rows.size()),
                               static_cast<Eigen::Index>(labels.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < labels.size(); ++c)
            t.counts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return t;
}

}  // namespace

TEST_CASE("attribution splits exactly by edge stddev share") {
    // Two affine edges with slopes 2 and 1 over identical feature columns:
    // output stddevs are 2*sigma and sigma, so the shares are exactly 2/3, 1/3.
    const kan::SplineGrid grid = kan::SplineGrid::uniform(-1.2, 1.2, 5, 3);
    kan::KanModel model = kan::KanModel::zeros({2, 1}, grid);
    model.feature_labels = {"XX", "XY"};
    make_affine_edge(model, 0, 0, 0, 2.0, 0.1);
    make_affine_edge(model, 0, 1, 0, 1.0, -0.05);

    dataset::Dataset data = random_dataset(1200, 2, 41);
    data.features.col(1) = data.features.col(0);

    const ImportanceRanking r = attribute_importance(model, data);
    CHECK_FALSE(r.degenerate);
    CHECK(r.labels == std::vector<std::string>{"XX", "XY"});
    CHECK(r.scores[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(r.scores[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(r.scores.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.order == std::vector<int>{0, 1});
}

TEST_CASE("attribution gives a disconnected feature exactly zero") {
    const kan::SplineGrid grid = kan::SplineGrid::uniform(-1.2, 1.2, 5, 3);
    kan::KanModel model = kan::KanModel::zeros({3, 2, 1}, grid);
    model.feature_labels = {"XX", "XY", "XZ"};
    RandomStream rng(7);
    for (int i = 0; i < 2; ++i)  // feature 2 keeps all-zero edges
        for (int j = 0; j < 2; ++j) {
            for (int m = 0; m < grid.basis_count(); ++m)
                model.layers[0].spline_coeff[static_cast<std::size_t>(i)](m, j) =
                    0.4 * (2.0 * rng.uniform() - 1.0);
            model.layers[0].spline_weight(i, j) = 1.0;
        }
    make_affine_edge(model, 1, 0, 0, 1.0, 0.0);
    make_affine_edge(model, 1, 1, 0, 1.0, 0.0);

    const dataset::Dataset data = random_dataset(1500, 3, 43);
    const ImportanceRanking r = attribute_importance(model, data);
    CHECK(r.scores[2] == 0.0);
    CHECK(r.scores[0] > 0.0);
    CHECK(r.scores[1] > 0.0);
    CHECK(r.scores.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.order.back() == 2);
}

TEST_CASE("attribution flags an all-constant first layer as degenerate") {
    const kan::SplineGrid grid = kan::SplineGrid::uniform(-1.2, 1.2, 5, 3);
    const kan::KanModel model = kan::KanModel::zeros({3, 2, 1}, grid);
    const dataset::Dataset data = random_dataset(1000, 3, 45);
    const ImportanceRanking r = attribute_importance(model, data);
    CHECK(r.degenerate);
    for (int i = 0; i < 3; ++i) CHECK(r.scores[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(r.order == std::vector<int>{0, 1, 2});  // ties keep label order
}

TEST_CASE("attribution validates its inputs") {
    const kan::SplineGrid grid = kan::SplineGrid::uniform(-1.2, 1.2, 5, 3);
    kan::KanModel model = kan::KanModel::init({3, 2, 1}, grid, 1);
    CHECK_THROWS_AS((void)attribute_importance(model, random_dataset(999, 3, 1)),
                    std::invalid_argument);
    model.feature_labels = {"XX", "XY", "ZZ"};  // dataset columns are XX,XY,XZ
    CHECK_THROWS_AS((void)attribute_importance(model, random_dataset(1200, 3, 1)), SchemaError);
}

TEST_CASE("attribution is equivariant under feature permutation") {
    const kan::SplineGrid grid = kan::SplineGrid::uniform(-1.2, 1.2, 5, 3);
    const kan::KanModel base = kan::KanModel::init({3, 2, 1}, grid, 17);
    const dataset::Dataset data = random_dataset(1200, 3, 19);
    const ImportanceRanking ra = attribute_importance(base, data);

    // Swap features 0 and 2: wiring rows in the first layer plus the data
    // columns.  The importance scores must swap with them.
    kan::KanModel swapped = base;
    swapped.layers[0].base_weight.row(0).swap(swapped.layers[0].base_weight.row(2));
    swapped.layers[0].spline_weight.row(0).swap(swapped.layers[0].spline_weight.row(2));
    std::swap(swapped.layers[0].spline_coeff[0], swapped.layers[0].spline_coeff[2]);
    dataset::Dataset sdata = data;
    sdata.features.col(0).swap(sdata.features.col(2));
    const ImportanceRanking rb = attribute_importance(swapped, sdata);

    CHECK(rb.scores[0] == doctest::Approx(ra.scores[2]).epsilon(1e-12));
    CHECK(rb.scores[1] == doctest::Approx(ra.scores[1]).epsilon(1e-12));
    CHECK(rb.scores[2] == doctest::Approx(ra.scores[0]).epsilon(1e-12));
}

TEST_CASE("symbolic importance scores affine edges by |slope|") {
    const kan::SplineGrid grid = kan::SplineGrid::uniform(-1.2, 1.2, 5, 3);
    kan::KanModel model = kan::KanModel::zeros({3, 1}, grid);
    model.feature_labels = {"XX", "XY", "XZ"};
    make_affine_edge(model, 0, 0, 0, 0.8, 0.1);
    make_affine_edge(model, 0, 1, 0, -0.4, 0.0);
    // feature 2 stays constant-zero: amplitude 0

    const dataset::Dataset probe = random_dataset(200, 3, 47);
    const Eigen::VectorXd s = symbolic_importance(model, probe);
    CHECK(s[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(s[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(s[2] == 0.0);
    CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("top-k aggregation counts set membership per level") {
    ImportanceRanking r1, r2, r3;
    r1.labels = r2.labels = r3.labels = {"XX", "XY", "XZ"};
    r1.order = {0, 1, 2};
    r2.order = {1, 0, 2};
    r3.order = {1, 2, 0};
    const TopKFrequencyTable t = aggregate_topk({r1, r2, r3});
    CHECK(t.n_models == 3);
    CHECK(t.k_max() == 2);  // min(8, labels - 1)
    CHECK(t.counts(0, 0) == 1);
    CHECK(t.counts(0, 1) == 2);
    CHECK(t.counts(0, 2) == 0);
    CHECK(t.counts(1, 0) == 2);
    CHECK(t.counts(1, 1) == 3);
    CHECK(t.counts(1, 2) == 1);
    for (int k = 0; k < t.k_max(); ++k) CHECK(t.counts.row(k).sum() == (k + 1) * t.n_models);
}

TEST_CASE("top-k aggregation rejects bad input") {
    CHECK_THROWS_AS((void)aggregate_topk({}), std::invalid_argument);
    ImportanceRanking a, b;
    a.labels = {"XX", "XY"};
    a.order = {0, 1};
    b.labels = {"XX", "XZ"};
    b.order = {0, 1};
    CHECK_THROWS_AS((void)aggregate_topk({a, b}), std::invalid_argument);
    ImportanceRanking lone;
    lone.labels = {"XX"};
    lone.order = {0};
    CHECK_THROWS_AS((void)aggregate_topk({lone}), std::invalid_argument);
}

TEST_CASE("bootstrap aggregation property: nested counts") {
    // Random orders: every Top-k set contains the Top-(k-1) set, so per-column
    // counts are nondecreasing in k and bounded by the model count.
    RandomStream rng(59);
    std::vector<ImportanceRanking> rankings(12);
    const auto& labels = observable_labels(Family::General9);
    for (auto& r : rankings) {
        r.labels = labels;
        r.order.resize(labels.size());
        std::iota(r.order.begin(), r.order.end(), 0);
        for (std::size_t i = r.order.size(); i > 1; --i)
            std::swap(r.order[i - 1], r.order[static_cast<std::size_t>(rng.below(i))]);
    }
    const TopKFrequencyTable t = aggregate_topk(rankings);
    CHECK(t.k_max() == 8);
    for (Eigen::Index c = 0; c < t.counts.cols(); ++c)
        for (int k = 1; k < t.k_max(); ++k) {
            CHECK(t.counts(k, c) >= t.counts(k - 1, c));
            CHECK(t.counts(k, c) <= t.n_models);
        }
    for (int k = 0; k < t.k_max(); ++k) CHECK(t.counts.row(k).sum() == (k + 1) * t.n_models);
}

TEST_CASE("reference table reproduces the published observable sets") {
    const TopKFrequencyTable t = load_topk_table(fixture("topk_reference.csv"));
    CHECK(t.n_models == 20);
    CHECK(t.k_max() == 8);
    REQUIRE(t.labels == observable_labels(Family::General9));
    for (int k = 0; k < t.k_max(); ++k) CHECK(t.counts.row(k).sum() == (k + 1) * t.n_models);

    const std::vector<std::vector<std::string>> expected = {
        {"YY"},
        {"XZ", "YY"},
        {"XZ", "YX", "YY"},
        {"XY", "XZ", "YX", "YY"},
        {"XX", "XY", "XZ", "YX", "YY"},
        {"XX", "XY", "XZ", "YX", "YY", "YZ"},
        {"XX", "XY", "XZ", "YX", "YY", "YZ", "ZZ"},
        {"XX", "XY", "XZ", "YX", "YY", "YZ", "ZX", "ZY"},
    };
    for (int m = 1; m <= 8; ++m) {
        const FeatureSelection sel = select_features(t, m);
        CHECK(sel.m == m);
        CHECK(sel.observables == expected[static_cast<std::size_t>(m - 1)]);
        CHECK(sel.architecture == reduced_architecture(m));
    }
}

TEST_CASE("selection breaks count ties by cumulative count") {
    // XY and XZ tie at Top-2; XY has the higher Top-1 count.
    const TopKFrequencyTable t = make_table({"XX", "XY", "XZ", "YX"},
                                            {{2, 2, 0, 0},
                                             {4, 3, 3, 0},
                                             {4, 3, 4, 1}},
                                            4);
    const FeatureSelection sel = select_features(t, 2);
    CHECK(sel.observables == std::vector<std::string>{"XX", "XY"});
}

TEST_CASE("selection breaks cumulative ties by deeper counts") {
    // XY and XZ tie at Top-2 and on cumulative counts; XZ leads at Top-3.
    const TopKFrequencyTable t = make_table({"XX", "XY", "XZ", "YX"},
                                            {{2, 1, 1, 0},
                                             {4, 3, 3, 0},
                                             {4, 3, 4, 1}},
                                            4);
    const FeatureSelection sel = select_features(t, 2);
    CHECK(sel.observables == std::vector<std::string>{"XX", "XZ"});
}

TEST_CASE("selection falls back to label order on full ties") {
    const TopKFrequencyTable t = make_table({"XX", "XY", "XZ", "YX"},
                                            {{1, 1, 1, 1},
                                             {2, 2, 2, 2},
                                             {3, 3, 3, 3}},
                                            4);
    CHECK(select_features(t, 1).observables == std::vector<std::string>{"XX"});
    CHECK(select_features(t, 3).observables == std::vector<std::string>{"XX", "XY", "XZ"});
}

TEST_CASE("selection rejects out-of-range m") {
    const TopKFrequencyTable t = make_table({"XX", "XY", "XZ"}, {{1, 1, 1}, {2, 2, 2}}, 3);
    CHECK_THROWS_AS((void)select_features(t, 0), std::invalid_argument);
    CHECK_THROWS_AS((void)select_features(t, 3), std::invalid_argument);
}

TEST_CASE("reduced architectures match the published shapes") {
    CHECK(reduced_architecture(1) == std::vector<int>{1, 3, 1});
    CHECK(reduced_architecture(2) == std::vector<int>{2, 3, 1});
    CHECK(reduced_architecture(3) == std::vector<int>{3, 2, 1});
    CHECK(reduced_architecture(4) == std::vector<int>{4, 2, 1});
    CHECK(reduced_architecture(5) == std::vector<int>{5, 3, 1});
    CHECK(reduced_architecture(6) == std::vector<int>{6, 3, 1});
    CHECK(reduced_architecture(7) == std::vector<int>{7, 5, 3, 1});
    CHECK(reduced_architecture(8) == std::vector<int>{8, 5, 3, 1});
    CHECK(reduced_architecture(9) == std::vector<int>{9, 6, 3, 1});
    CHECK_THROWS_AS((void)reduced_architecture(0), std::invalid_argument);
    CHECK_THROWS_AS((void)reduced_architecture(10), std::invalid_argument);
}

TEST_CASE("top-k table save/load roundtrips") {
    const TopKFrequencyTable t = make_table({"XX", "XY", "XZ"}, {{3, 2, 1}, {5, 4, 3}}, 6);
    FileGuard guard{temp_path("kanwit_test_topk.csv")};
    save_topk_table(t, guard.path);
    const TopKFrequencyTable back = load_topk_table(guard.path);
    CHECK(back.n_models == 6);
    CHECK(back.labels == t.labels);
    CHECK(back.counts == t.counts);

    // Re-saving produces identical bytes.
    FileGuard second{temp_path("kanwit_test_topk2.csv")};
    save_topk_table(back, second.path);
    CHECK(io::read_file(guard.path) == io::read_file(second.path));
}

TEST_CASE("top-k table load falls back to the top-1 row sum for n_models") {
    FileGuard guard{temp_path("kanwit_test_topk_bare.csv")};
    io::write_file_atomic(guard.path, "k,XX,XY\n1,12,8\n");
    const TopKFrequencyTable t = load_topk_table(guard.path);
    CHECK(t.n_models == 20);
    CHECK(t.labels == std::vector<std::string>{"XX", "XY"});
    CHECK(t.counts(0, 0) == 12);
}

TEST_CASE("top-k table load reports malformed rows") {
    FileGuard guard{temp_path("kanwit_test_topk_bad.csv")};
    io::write_file_atomic(guard.path, "q,XX,XY\n1,2,3\n");
    CHECK_THROWS_AS((void)load_topk_table(guard.path), ParseError);

    io::write_file_atomic(guard.path, "k,XX,XY\n1,2\n");
    try {
        (void)load_topk_table(guard.path);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }

    io::write_file_atomic(guard.path, "k,XX,XY\n1,2,x\n");
    CHECK_THROWS_AS((void)load_topk_table(guard.path), ParseError);

    io::write_file_atomic(guard.path, "# kanwit topk v1\n");
    CHECK_THROWS_AS((void)load_topk_table(guard.path), ParseError);
}

TEST_CASE("bootstrap ranking is deterministic and job-count invariant") {
    kan::TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 128;
    const BootstrapOutcome a = bootstrap_rank(Family::General9, 3, 1200, 99, tc, 1);
    CHECK(a.failed_models.empty());
    REQUIRE(a.rankings.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const ImportanceRanking& r = a.rankings[i];
        CHECK(r.model_id == static_cast<int>(i) + 1);
        CHECK(r.labels == observable_labels(Family::General9));
        CHECK(r.scores.sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(r.secondary_scores.size() == 9);
        CHECK(r.secondary_scores.sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
    // Different models see different data, so the scores differ.
    CHECK(a.rankings[0].scores != a.rankings[1].scores);

    const BootstrapOutcome b = bootstrap_rank(Family::General9, 3, 1200, 99, tc, 1);
    const BootstrapOutcome c = bootstrap_rank(Family::General9, 3, 1200, 99, tc, 2);
    for (const BootstrapOutcome* other : {&b, &c})
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(a.rankings[i].scores == other->rankings[i].scores);
            CHECK(a.rankings[i].secondary_scores == other->rankings[i].secondary_scores);
            CHECK(a.rankings[i].order == other->rankings[i].order);
        }
}

TEST_CASE("bootstrap ranking fails when most models diverge") {
    kan::TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 128;
    tc.learning_rate = 1e308;  // guaranteed blow-up
    CHECK_THROWS_AS((void)bootstrap_rank(Family::General9, 2, 1200, 5, tc, 1),
                    std::runtime_error);
    CHECK_THROWS_AS((void)bootstrap_rank(Family::General9, 0, 1200, 5, tc, 1),
                    std::invalid_argument);
}

TEST_CASE("reduced-model curve trains one point per m") {
    const TopKFrequencyTable t = load_topk_table(fixture("topk_reference.csv"));
    kan::TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 128;
    const std::vector<CurvePoint> curve = reduced_model_curve(t, Family::General9, 1200, 77, tc);
    REQUIRE(curve.size() == 8);
    for (int m = 1; m <= 8; ++m) {
        const CurvePoint& p = curve[static_cast<std::size_t>(m - 1)];
        CHECK(p.m == m);
        CHECK(p.architecture == reduced_architecture(m));
        CHECK(p.observables == select_features(t, m).observables);
        CHECK(p.accuracy >= 0.0);
        CHECK(p.accuracy <= 1.0);
    }
    const std::vector<CurvePoint> again = reduced_model_curve(t, Family::General9, 1200, 77, tc);
    for (std::size_t i = 0; i < curve.size(); ++i)
        CHECK(curve[i].accuracy == again[i].accuracy);
}
