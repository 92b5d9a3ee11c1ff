#include "kanwit/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "kanwit/io.hpp"

namespace kanwit::dataset {

namespace {

void shuffle_indices(std::vector<Eigen::Index>& idx, RandomStream& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);
}

Dataset take_rows(const Dataset& src, const std::vector<Eigen::Index>& rows) {
    Dataset out;
    out.family = src.family;
    out.columns = src.columns;
    out.seed = src.seed;
    out.noise_sigma = src.noise_sigma;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), src.features.cols());
    out.labels.reserve(rows.size());
    for (Eigen::Index r = 0; r < out.features.rows(); ++r) {
        out.features.row(r) = src.features.row(rows[r]);
        out.labels.push_back(src.labels[rows[r]]);
    }
    return out;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string trimmed(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& field, const std::string& path, std::size_t line) {
    const std::string t = trimmed(field);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size())
        throw ParseError(path, line, "not a number: '" + field + "'");
    return v;
}

}  // namespace

long Dataset::count(Label label) const {
    return static_cast<long>(std::count(labels.begin(), labels.end(), label));
}

LabeledSample Dataset::sample(Eigen::Index i) const {
    if (columns != observable_labels(family))
        throw std::invalid_argument("sample() requires the full feature column set");
    LabeledSample s;
    s.features.family = family;
    s.features.values = features.row(i).transpose();
    s.label = labels[static_cast<std::size_t>(i)];
    s.noisy = noisy();
    return s;
}

void SplitSpec::validate() const {
    const double fracs[] = {train_fraction, validation_fraction, test_fraction};
    for (double f : fracs)
        if (!(f > 0.0 && f < 1.0))
            throw std::invalid_argument("split fractions must lie in (0,1)");
    if (std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-12)
        throw std::invalid_argument("split fractions must sum to 1");
}

Dataset generate_dataset(Family family, long n, std::uint64_t seed, double noise_sigma) {
    if (n < 2) throw std::invalid_argument("dataset size must be at least 2");
    if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be non-negative");

    const auto& cols = observable_labels(family);
    const long want_entangled = (n + 1) / 2;
    const long want_separable = n / 2;

    Dataset out;
    out.family = family;
    out.columns = cols;
    out.seed = seed;
    out.noise_sigma = noise_sigma;
    out.features.resize(n, static_cast<Eigen::Index>(cols.size()));
    out.labels.resize(static_cast<std::size_t>(n));

    RandomStream rng(derive_seed(seed, "samples"));
    long have_entangled = 0, have_separable = 0;
    Eigen::Index row = 0;
    while (have_entangled < want_entangled || have_separable < want_separable) {
        const qstate::StateSample s = qstate::sample_state(family, rng);
        long& have = s.label == Label::Entangled ? have_entangled : have_separable;
        const long want = s.label == Label::Entangled ? want_entangled : want_separable;
        if (have == want) continue;  // class quota already filled
        ++have;
        out.features.row(row) = s.features.values.transpose();
        out.labels[static_cast<std::size_t>(row)] = s.label;
        ++row;
    }

    if (noise_sigma > 0.0) {
        RandomStream noise(derive_seed(seed, "noise"));
        for (Eigen::Index r = 0; r < out.features.rows(); ++r)
            for (Eigen::Index c = 0; c < out.features.cols(); ++c)
                out.features(r, c) += noise_sigma * noise.normal();
    }
    return out;
}

SplitResult split(const Dataset& data, const SplitSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (data.rows() == 0) throw std::invalid_argument("cannot split an empty dataset");

    std::vector<Eigen::Index> assigned[3];  // train, validation, test
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index r = 0; r < data.rows(); ++r)
            if (static_cast<int>(data.labels[static_cast<std::size_t>(r)]) == cls)
                idx.push_back(r);
        RandomStream rng(derive_seed(seed, "split-class", static_cast<std::uint64_t>(cls)));
        shuffle_indices(idx, rng);

        const auto n_cls = static_cast<double>(idx.size());
        const long n_val = std::lround(spec.validation_fraction * n_cls);
        const long n_test = std::lround(spec.test_fraction * n_cls);
        const long n_train = static_cast<long>(idx.size()) - n_val - n_test;
        auto it = idx.begin();
        assigned[0].insert(assigned[0].end(), it, it + n_train);
        assigned[1].insert(assigned[1].end(), it + n_train, it + n_train + n_val);
        assigned[2].insert(assigned[2].end(), it + n_train + n_val, idx.end());
    }

    SplitResult out;
    Dataset* parts[3] = {&out.train, &out.validation, &out.test};
    for (int p = 0; p < 3; ++p) {
        RandomStream rng(derive_seed(seed, "split-mix", static_cast<std::uint64_t>(p)));
        shuffle_indices(assigned[p], rng);
        *parts[p] = take_rows(data, assigned[p]);
    }
    return out;
}

Dataset project(const Dataset& data, const std::vector<std::string>& observables) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(data.columns.size()); ++c)
        if (std::find(observables.begin(), observables.end(), data.columns[c]) !=
            observables.end())
            keep.push_back(c);
    if (keep.size() != observables.size())
        throw std::invalid_argument("projection names a column the dataset does not have");

    Dataset out;
    out.family = data.family;
    out.seed = data.seed;
    out.noise_sigma = data.noise_sigma;
    out.labels = data.labels;
    out.features.resize(data.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        out.columns.push_back(data.columns[static_cast<std::size_t>(keep[j])]);
        out.features.col(static_cast<Eigen::Index>(j)) = data.features.col(keep[j]);
    }
    return out;
}

void save_dataset(const Dataset& data, const std::string& path) {
    std::string text;
    text.reserve(static_cast<std::size_t>(data.rows() + 8) * 24 *
                 static_cast<std::size_t>(data.features.cols() + 1));
    text += "# kanwit dataset v1\n";
    text += "# family: " + to_string(data.family) + "\n";
    text += "# seed: " + std::to_string(data.seed) + "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", data.noise_sigma);
    text += "# noise_sigma: " + std::string(buf) + "\n";
    if (data.noisy())
        text += "# noise_scope: features only, added after labeling (labels are noise-free)\n";
    text += "# generator: kanwit ";
    text += version;
    text += "\n";
    for (std::size_t c = 0; c < data.columns.size(); ++c) {
        text += data.columns[c];
        text += ',';
    }
    text += "label\n";
    for (Eigen::Index r = 0; r < data.rows(); ++r) {
        for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", data.features(r, c));
            text += buf;
            text += ',';
        }
        text += data.labels[static_cast<std::size_t>(r)] == Label::Entangled ? '1' : '0';
        text += '\n';
    }
    io::write_file_atomic(path, text);
}

Dataset load_dataset(const std::string& path) {
    const std::string text = io::read_file(path);
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;

    Dataset out;
    bool have_family = false;
    std::vector<std::string> header;

    // Metadata comments, then the column row.
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            const std::string key = trimmed(line.substr(1, colon - 1));
            const std::string value = trimmed(line.substr(colon + 1));
            if (key == "family") {
                out.family = family_from_string(value);
                have_family = true;
            } else if (key == "seed") {
                try {
                    out.seed = std::stoull(value);
                } catch (const std::exception&) {
                    throw ParseError(path, lineno, "bad seed value: '" + value + "'");
                }
            } else if (key == "noise_sigma") {
                out.noise_sigma = parse_double(value, path, lineno);
            }
            continue;
        }
        header = split_fields(line);
        break;
    }
    if (header.empty()) throw ParseError(path, lineno, "missing column header row");
    if (!have_family) throw SchemaError(path + ": missing '# family:' metadata line");
    if (header.back() != "label")
        throw SchemaError(path + ": last column must be 'label', got '" + header.back() + "'");
    header.pop_back();
    if (header.empty()) throw SchemaError(path + ": no feature columns");

    // Feature columns must be a subsequence of the family's observable order.
    const auto& known = observable_labels(out.family);
    std::size_t cursor = 0;
    for (const std::string& col : header) {
        while (cursor < known.size() && known[cursor] != col) ++cursor;
        if (cursor == known.size())
            throw SchemaError(path + ": column '" + col + "' is not a " +
                              to_string(out.family) + " observable in canonical order");
        ++cursor;
    }
    out.columns = header;

    const auto n_cols = static_cast<Eigen::Index>(header.size());
    std::vector<double> values;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_fields(line);
        if (static_cast<Eigen::Index>(fields.size()) != n_cols + 1)
            throw ParseError(path, lineno,
                             "expected " + std::to_string(n_cols + 1) + " fields, got " +
                                 std::to_string(fields.size()));
        for (Eigen::Index c = 0; c < n_cols; ++c)
            values.push_back(parse_double(fields[static_cast<std::size_t>(c)], path, lineno));
        const std::string lab = trimmed(fields.back());
        if (lab == "0")
            out.labels.push_back(Label::Separable);
        else if (lab == "1")
            out.labels.push_back(Label::Entangled);
        else
            throw SchemaError(path + ":" + std::to_string(lineno) +
                              ": label must be 0 or 1, got '" + fields.back() + "'");
    }

    const auto n_rows = static_cast<Eigen::Index>(out.labels.size());
    out.features.resize(n_rows, n_cols);
    for (Eigen::Index r = 0; r < n_rows; ++r)
        for (Eigen::Index c = 0; c < n_cols; ++c)
            out.features(r, c) = values[static_cast<std::size_t>(r * n_cols + c)];
    return out;
}

}  // namespace kanwit::dataset
