#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace gridbd {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Seed for an independent stream identified by (master, tag, indices...).
// Streams are keyed, never sequenced, so work items can run in any order.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::initializer_list<std::uint64_t> keys = {}) {
    std::uint64_t s = splitmix64(master ^ hash_tag(tag));
    for (std::uint64_t k : keys) s = splitmix64(s ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return s;
}

inline Rng make_rng(std::uint64_t master, std::string_view tag,
                    std::initializer_list<std::uint64_t> keys = {}) {
    return Rng(derive_seed(master, tag, keys));
}

// libstdc++'s uniform_real_distribution is fine for determinism, but we want the
// exact bit pattern to be independent of distribution implementation details.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

double standard_normal(Rng& rng);

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace gridbd
