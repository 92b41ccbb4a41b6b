#ifndef SEPMAX_RNG_HPP
#define SEPMAX_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace sepmax {

/// Derive the seed of a named sub-stream from a master seed, so that one
/// --seed flag drives independent generators (subset sampling, random
/// filters, probe init) without correlation between them.
inline std::uint64_t stream_seed(std::uint64_t master, std::string_view name) {
    // FNV-1a over the master seed bytes followed by the stream name.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (int i = 0; i < 8; ++i) {
        h ^= (master >> (8 * i)) & 0xffu;
        h *= 0x100000001b3ull;
    }
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Deterministic random generator. mt19937_64 defines its output sequence
/// in the standard; the distributions here are hand-rolled because the
/// standard library distribution algorithms are implementation-defined and
/// would break cross-compiler reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    Rng(std::uint64_t master, std::string_view stream) : gen_(stream_seed(master, stream)) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform integer in [0, bound). Modulo bias is irrelevant at the
    /// bounds used here (bound << 2^64).
    std::uint64_t below(std::uint64_t bound) { return gen_() % bound; }

    /// Uniform real in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (cached pair).
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Fisher-Yates shuffle with an explicit index rule (std::shuffle is
    /// implementation-defined).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = 0; i + 1 < v.size(); ++i) {
            std::size_t j = i + static_cast<std::size_t>(below(v.size() - i));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace sepmax

#endif
