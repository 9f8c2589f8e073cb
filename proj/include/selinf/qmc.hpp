#pragma once

// Low-discrepancy point generation: Sobol' sequences with linear matrix
// scrambling and a digital random shift, plus a pseudo-random fallback that
// shares the same batch interface.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "selinf/errors.hpp"

namespace selinf {

enum class GeneratorKind { SobolScrambled, PseudoRandom };

struct PointBatch {
    int dim = 0;
    int size = 0;
    GeneratorKind kind = GeneratorKind::SobolScrambled;
    std::uint64_t seed = 0;
    std::vector<double> points; // row-major, size*dim, each coordinate in [0,1)

    double at(int i, int k) const { return points[static_cast<std::size_t>(i) * dim + k]; }
};

struct ReplicateSet {
    std::vector<PointBatch> batches;
    int dim() const { return batches.empty() ? 0 : batches.front().dim; }
    int batch_size() const { return batches.empty() ? 0 : batches.front().size; }
    int count() const { return static_cast<int>(batches.size()); }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(const std::string& payload) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : payload) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

/// Sobol' direction-number table (Joe-Kuo). Loaded from a versioned text
/// file: a header line "sobol-direction-table v1 dims=D fnv1a64=HEX"
/// followed by one line per dimension "degree poly m_1 ... m_degree".
/// The FNV-1a 64 checksum of the payload is verified at load.
struct DirectionTable {
    struct Dim {
        int degree = 0;
        std::uint32_t poly = 0;      // full primitive polynomial encoding
        std::vector<std::uint32_t> m; // initial direction integers, odd
    };
    std::vector<Dim> dims;

    int max_dim() const { return static_cast<int>(dims.size()); }

    static DirectionTable load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ParseError("direction table: cannot open " + path);
        std::string header;
        std::getline(in, header);
        std::string magic, version, dims_field, sum_field;
        {
            std::istringstream hs(header);
            hs >> magic >> version >> dims_field >> sum_field;
        }
        if (magic != "sobol-direction-table" || version != "v1")
            throw ParseError("direction table: bad header in " + path);
        const std::string payload{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
        char expected[17];
        std::snprintf(expected, sizeof expected, "%016llx",
                      static_cast<unsigned long long>(detail::fnv1a64(payload)));
        if (sum_field != std::string("fnv1a64=") + expected)
            throw ParseError("direction table: checksum mismatch in " + path);

        DirectionTable t;
        std::istringstream body(payload);
        std::string line;
        while (std::getline(body, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            Dim d;
            ls >> d.degree >> d.poly;
            for (int i = 0; i < d.degree; ++i) {
                std::uint32_t m;
                ls >> m;
                d.m.push_back(m);
            }
            if (!ls) throw ParseError("direction table: malformed line in " + path);
            t.dims.push_back(std::move(d));
        }
        return t;
    }

    /// Table bundled with the source tree; override with SELINF_SOBOL_TABLE.
    static const DirectionTable& bundled() {
        static DirectionTable t = [] {
            const char* env = std::getenv("SELINF_SOBOL_TABLE");
            std::string path = env ? env : std::string(SELINF_DATA_DIR) + "/sobol_joe_kuo_1024.txt";
            return load(path);
        }();
        return t;
    }
};

namespace detail {

constexpr int kSobolBits = 32;

// Expand the per-dimension direction numbers v_k = m_k * 2^(32-k) using the
// primitive-polynomial recurrence.
inline void direction_numbers(const DirectionTable::Dim& dim, std::uint32_t v[kSobolBits]) {
    const int s = dim.degree;
    if (s == 0) { // first dimension: van der Corput in base 2
        for (int k = 0; k < kSobolBits; ++k) v[k] = 1u << (31 - k);
        return;
    }
    for (int k = 0; k < s && k < kSobolBits; ++k) v[k] = dim.m[k] << (31 - k);
    for (int k = s; k < kSobolBits; ++k) {
        std::uint32_t vk = v[k - s] ^ (v[k - s] >> s);
        for (int j = 1; j < s; ++j) {
            if ((dim.poly >> (s - j)) & 1u) vk ^= v[k - j];
        }
        v[k] = vk;
    }
}

// Left-multiply every direction number by a random non-singular
// lower-triangular bit matrix (unit diagonal), then the caller applies a
// digital shift. Bit 31 of a direction word is the leading output bit.
inline void scramble_directions(std::uint32_t v[kSobolBits], std::uint64_t& rng_state) {
    std::uint32_t rows[kSobolBits]; // rows[i]: matrix row for output bit i (0 = leading)
    for (int i = 0; i < kSobolBits; ++i) {
        std::uint32_t rnd = static_cast<std::uint32_t>(splitmix64(rng_state) >> 32);
        // keep bits strictly above position (31-i), set the diagonal
        std::uint32_t mask = (i == 0) ? 0u : (~0u << (kSobolBits - i));
        rows[i] = (rnd & mask) | (1u << (31 - i));
    }
    for (int k = 0; k < kSobolBits; ++k) {
        std::uint32_t out = 0;
        for (int i = 0; i < kSobolBits; ++i) {
            out |= static_cast<std::uint32_t>(std::popcount(rows[i] & v[k]) & 1) << (31 - i);
        }
        v[k] = out;
    }
}

} // namespace detail

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// One randomized Sobol' batch: linear matrix scramble plus digital shift,
/// both keyed by `seed`. Pass scramble=false for the raw sequence.
inline PointBatch sobol_batch(int d, int N, std::uint64_t seed,
                              bool scramble = true,
                              const DirectionTable& table = DirectionTable::bundled()) {
    if (d < 1 || d > table.max_dim())
        throw UnsupportedDimension("sobol_batch: dimension " + std::to_string(d) +
                                   " outside table range 1.." + std::to_string(table.max_dim()));
    if (!is_power_of_two(N) || N > (1 << 24))
        throw std::invalid_argument("sobol_batch: N must be a power of two <= 2^24");

    PointBatch batch;
    batch.dim = d;
    batch.size = N;
    batch.kind = GeneratorKind::SobolScrambled;
    batch.seed = seed;
    batch.points.resize(static_cast<std::size_t>(N) * d);

    std::vector<std::uint32_t> v(static_cast<std::size_t>(d) * detail::kSobolBits);
    std::vector<std::uint32_t> shift(d, 0);
    std::uint64_t rng_state = seed ^ 0xa02bdbf7bb3c0a7ULL;
    for (int k = 0; k < d; ++k) {
        detail::direction_numbers(table.dims[k], &v[static_cast<std::size_t>(k) * 32]);
        if (scramble) {
            detail::scramble_directions(&v[static_cast<std::size_t>(k) * 32], rng_state);
            shift[k] = static_cast<std::uint32_t>(detail::splitmix64(rng_state) >> 32);
        }
    }

    std::vector<std::uint32_t> x(d, 0);
    constexpr double scale = 1.0 / 4294967296.0; // 2^-32
    for (int i = 0; i < N; ++i) {
        for (int k = 0; k < d; ++k) {
            batch.points[static_cast<std::size_t>(i) * d + k] = (x[k] ^ shift[k]) * scale;
        }
        // Gray-code step: flip the direction number of the lowest zero bit of i.
        const int c = std::countr_one(static_cast<unsigned>(i));
        for (int k = 0; k < d; ++k) x[k] ^= v[static_cast<std::size_t>(k) * 32 + c];
    }
    return batch;
}

/// i.i.d. uniform batch with the same interface (no power-of-two restriction
/// beyond symmetry with the Sobol path; kept for rate comparisons).
inline PointBatch pseudo_batch(int d, int N, std::uint64_t seed) {
    PointBatch batch;
    batch.dim = d;
    batch.size = N;
    batch.kind = GeneratorKind::PseudoRandom;
    batch.seed = seed;
    batch.points.resize(static_cast<std::size_t>(N) * d);
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (auto& p : batch.points) p = unif(gen);
    return batch;
}

/// R independent randomizations sharing (d, N); replicate seeds are derived
/// deterministically from `seed` so the set replays byte-identically.
inline ReplicateSet replicate_set(int d, int N, int R, std::uint64_t seed,
                                  GeneratorKind kind = GeneratorKind::SobolScrambled) {
    if (R < 1) throw std::invalid_argument("replicate_set: R must be >= 1");
    std::uint64_t state = seed ^ 0x9e3779b97f4a7c15ULL;
    ReplicateSet reps;
    reps.batches.reserve(R);
    for (int r = 0; r < R; ++r) {
        const std::uint64_t sub = detail::splitmix64(state);
        reps.batches.push_back(kind == GeneratorKind::SobolScrambled
                                   ? sobol_batch(d, N, sub)
                                   : pseudo_batch(d, N, sub));
    }
    return reps;
}

} // namespace selinf
