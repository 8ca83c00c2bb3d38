// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "fipt/math.hpp"

namespace fipt {

// PCG32 (O'Neill). One instance per pixel tile / worker; streams selected by
// the init sequence so (seed, view, tile) gives independent deterministic
// sequences.
struct Pcg32 {
    uint64_t state = 0x853c49e6748fea9bULL;
    uint64_t inc = 0xda3e39cb94b95bdbULL;

    Pcg32() = default;
    Pcg32(uint64_t initstate, uint64_t initseq = 1) { seed(initstate, initseq); }

    void seed(uint64_t initstate, uint64_t initseq = 1) {
        state = 0u;
        inc = (initseq << 1u) | 1u;
        next_u32();
        state += initstate;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t oldstate = state;
        state = oldstate * 6364136223846793005ULL + inc;
        uint32_t xorshifted = static_cast<uint32_t>(((oldstate >> 18u) ^ oldstate) >> 27u);
        uint32_t rot = static_cast<uint32_t>(oldstate >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((~rot + 1u) & 31u));
    }

    // Uniform in [0, 1).
    float next_float() { return static_cast<float>(next_u32() >> 8) * 0x1p-24f; }
    double next_double() {
        uint64_t hi = next_u32();
        uint64_t lo = next_u32();
        return static_cast<double>((hi << 21) | (lo >> 11)) * 0x1p-53;
    }

    Vec2 next_vec2() {
        float a = next_float();
        float b = next_float();
        return {a, b};
    }
    Vec3 next_vec3() {
        float a = next_float();
        float b = next_float();
        float c = next_float();
        return {a, b, c};
    }

    // Bounded integer without modulo bias.
    uint32_t next_below(uint32_t bound) {
        uint32_t threshold = (~bound + 1u) % bound;
        for (;;) {
            uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }
};

// FNV-1a over a few integers, used to derive per-stage / per-tile seeds.
inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    uint64_t h = 14695981039346656037ULL;
    for (uint64_t v : {a, b}) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

inline uint64_t hash_combine(uint64_t a, uint64_t b, uint64_t c) {
    return hash_combine(hash_combine(a, b), c);
}

}  // namespace fipt
