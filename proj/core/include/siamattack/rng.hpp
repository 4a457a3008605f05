#pragma once

#include <cstdint>
#include <cmath>

namespace siam {

// PCG32 generator with explicit float mappings. The standard <random>
// distributions are implementation-defined, so all sampling goes through
// this type to keep corpora and training runs byte-reproducible.
class Rng {
  public:
    explicit Rng(uint64_t seed, uint64_t stream = 0x14057b7ef767814fULL) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    // Uniform in [0, 1).
    float uniform() { return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f; }

    // Uniform in [lo, hi).
    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    int uniform_int(int n) { return static_cast<int>(next_u32() % static_cast<uint32_t>(n)); }

    // Standard normal via Box-Muller (one draw per call, pairs discarded odd).
    float normal() {
        float u1 = uniform();
        float u2 = uniform();
        if (u1 < 1e-12f) u1 = 1e-12f;
        return std::sqrt(-2.0f * std::log(u1)) * std::cos(6.28318530717958647692f * u2);
    }

    // Derive an independent child generator; used to give each sequence or
    // module its own stream from one top-level seed.
    Rng fork(uint64_t salt) const {
        uint64_t mixed = state_ ^ (salt * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
        mixed ^= mixed >> 29;
        return Rng(mixed, salt ^ (inc_ >> 1));
    }

  private:
    uint64_t state_;
    uint64_t inc_;
};

// FNV-1a over arbitrary bytes; used for checkpoint/corpus hashes in the
// determinism checks and for the perturbation-bank template fingerprint.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace siam
