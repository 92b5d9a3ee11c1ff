#include "kanwit/common.hpp"

namespace kanwit {

std::string to_string(Family family) {
    return family == Family::General9 ? "general9" : "symmetric5";
}

Family family_from_string(std::string_view name) {
    if (name == "general9") return Family::General9;
    if (name == "symmetric5") return Family::Symmetric5;
    throw SchemaError("unknown state family: " + std::string(name));
}

const std::vector<std::string>& observable_labels(Family family) {
    static const std::vector<std::string> general = {"XX", "XY", "XZ", "YX", "YY",
                                                     "YZ", "ZX", "ZY", "ZZ"};
    static const std::vector<std::string> symmetric = {"XX", "XY", "YX", "YY", "ZZ"};
    return family == Family::General9 ? general : symmetric;
}

namespace {

// splitmix64 finalizer: bijective 64-bit mix with good avalanche.
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index) {
    // FNV-1a over the tag bytes, then strong mixing of root/tag/index.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return mix64(mix64(root ^ h) + index);
}

}  // namespace kanwit
