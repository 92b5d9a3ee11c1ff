#include "kanwit/runconfig.hpp"

#include <charconv>
#include <sstream>

#include "json.hpp"
#include "kanwit/io.hpp"

namespace kanwit::cli {

namespace {

std::string trimmed(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

long parse_long(const std::string& key, const std::string& value) {
    long v = 0;
    const std::string t = trimmed(value);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size())
        throw std::invalid_argument("config key '" + key + "' needs an integer, got '" + value +
                                    "'");
    return v;
}

double parse_real(const std::string& key, const std::string& value) {
    double v = 0.0;
    const std::string t = trimmed(value);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size())
        throw std::invalid_argument("config key '" + key + "' needs a number, got '" + value +
                                    "'");
    return v;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    std::string cur;
    std::istringstream in(trimmed(value));
    while (std::getline(in, cur, ','))
        out.push_back(static_cast<int>(parse_long(key, cur)));
    if (out.empty())
        throw std::invalid_argument("config key '" + key + "' needs a comma-separated list");
    return out;
}

}  // namespace

void RunConfig::validate() const {
    if (n < 2) throw std::invalid_argument("n must be at least 2");
    if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be non-negative");
    if (bootstrap_models < 1) throw std::invalid_argument("bootstrap_models must be positive");
    if (jobs < 1) throw std::invalid_argument("jobs must be positive");
    if (output_dir.empty()) throw std::invalid_argument("output_dir must not be empty");
    split.validate();
    train.validate();
    const std::vector<int> arch = model_architecture();
    if (arch.size() < 2 || arch.back() != 1)
        throw std::invalid_argument("architecture must end in an output layer of width 1");
    for (int w : arch)
        if (w < 1) throw std::invalid_argument("architecture widths must be positive");
}

std::vector<int> RunConfig::model_architecture() const {
    if (!architecture.empty()) return architecture;
    return family == Family::General9 ? std::vector<int>{9, 6, 3, 1} : std::vector<int>{5, 3, 1};
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "family")
        family = family_from_string(trimmed(value));
    else if (key == "n")
        n = parse_long(key, value);
    else if (key == "seed")
        seed = static_cast<std::uint64_t>(parse_long(key, value));
    else if (key == "noise_sigma")
        noise_sigma = parse_real(key, value);
    else if (key == "train_fraction")
        split.train_fraction = parse_real(key, value);
    else if (key == "validation_fraction")
        split.validation_fraction = parse_real(key, value);
    else if (key == "test_fraction")
        split.test_fraction = parse_real(key, value);
    else if (key == "architecture")
        architecture = parse_int_list(key, value);
    else if (key == "grid_min" || key == "grid_max" || key == "grid_intervals" ||
             key == "spline_degree") {
        double mn = grid.min, mx = grid.max;
        int iv = grid.intervals, dg = grid.degree;
        if (key == "grid_min") mn = parse_real(key, value);
        if (key == "grid_max") mx = parse_real(key, value);
        if (key == "grid_intervals") iv = static_cast<int>(parse_long(key, value));
        if (key == "spline_degree") dg = static_cast<int>(parse_long(key, value));
        grid = kan::SplineGrid::uniform(mn, mx, iv, dg);
    } else if (key == "epochs")
        train.epochs = static_cast<int>(parse_long(key, value));
    else if (key == "batch_size")
        train.batch_size = static_cast<int>(parse_long(key, value));
    else if (key == "learning_rate")
        train.learning_rate = parse_real(key, value);
    else if (key == "l1_activation_penalty")
        train.l1_activation_penalty = parse_real(key, value);
    else if (key == "early_stop_patience")
        train.early_stop_patience = static_cast<int>(parse_long(key, value));
    else if (key == "bootstrap_models")
        bootstrap_models = static_cast<int>(parse_long(key, value));
    else if (key == "jobs")
        jobs = static_cast<int>(parse_long(key, value));
    else if (key == "output_dir")
        output_dir = trimmed(value);
    else if (key == "profile")
        apply_profile(trimmed(value));
    else
        throw std::invalid_argument("unknown config key '" + key + "'");
}

void RunConfig::apply_profile(const std::string& name) {
    if (name == "smoke") {
        n = 5000;
        bootstrap_models = 3;
        train.epochs = 60;
    } else if (name == "full") {
        n = 100000;
        bootstrap_models = 20;
        train.epochs = 200;
    } else {
        throw std::invalid_argument("unknown profile '" + name + "' (expected smoke or full)");
    }
}

RunConfig RunConfig::from_file(const std::string& path) {
    RunConfig config;
    const std::string text = io::read_file(path);
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = trimmed(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError(path, lineno, "expected key=value, got '" + t + "'");
        try {
            config.set(trimmed(t.substr(0, eq)), trimmed(t.substr(eq + 1)));
        } catch (const std::invalid_argument& e) {
            throw ParseError(path, lineno, e.what());
        }
    }
    return config;
}

std::string RunConfig::describe() const {
    nlohmann::ordered_json j;
    j["family"] = to_string(family);
    j["n"] = n;
    j["seed"] = seed;
    j["noise_sigma"] = noise_sigma;
    j["train_fraction"] = split.train_fraction;
    j["validation_fraction"] = split.validation_fraction;
    j["test_fraction"] = split.test_fraction;
    j["architecture"] = model_architecture();
    j["grid"] = {{"min", grid.min},
                 {"max", grid.max},
                 {"intervals", grid.intervals},
                 {"degree", grid.degree}};
    j["epochs"] = train.epochs;
    j["batch_size"] = train.batch_size;
    j["learning_rate"] = train.learning_rate;
    j["l1_activation_penalty"] = train.l1_activation_penalty;
    j["early_stop_patience"] = train.early_stop_patience;
    j["bootstrap_models"] = bootstrap_models;
    j["jobs"] = jobs;
    j["output_dir"] = output_dir;
    return j.dump();
}

}  // namespace kanwit::cli
