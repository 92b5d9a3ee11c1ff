#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kanwit {

inline constexpr std::string_view version = "0.1.0";

// Raised when an input file cannot be parsed (malformed CSV/JSON, bad numbers).
class ParseError : public std::invalid_argument {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : std::invalid_argument(path + ":" + std::to_string(line) + ": " + what),
          line_(line) {}
    explicit ParseError(const std::string& what) : std::invalid_argument(what), line_(0) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Raised when a file parses but its content violates the expected schema
// (wrong columns, labels outside {0,1}, inconsistent metadata, ...).
class SchemaError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Raised when optimization produces non-finite losses or parameters.
class TrainingDivergence : public std::runtime_error {
public:
    explicit TrainingDivergence(int epoch)
        : std::runtime_error("training diverged (non-finite loss) at epoch " +
                             std::to_string(epoch)),
          epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

enum class Family { General9, Symmetric5 };
enum class Label : int { Separable = 0, Entangled = 1 };

std::string to_string(Family family);
Family family_from_string(std::string_view name);

// Pauli-pair observable labels defining the feature column order of a family.
const std::vector<std::string>& observable_labels(Family family);

// Splits one root seed into independent per-stage streams.  Same (root, tag,
// index) always yields the same seed; distinct tags/indices decorrelate.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0);

// Deterministic random source: explicitly seeded 64-bit Mersenne Twister with
// fixed uniform/normal transforms so streams are reproducible bit-for-bit
// across platforms and library versions.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; caches the spare deviate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Uniform integer on [0, n), unbiased via rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

    static constexpr double pi = 3.141592653589793238462643383279502884;

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace kanwit
