#pragma once

#include <cstdint>

namespace eedit::prng {

// Counter-based generator: every draw is a pure function of (seed, stream, counters),
// so any consumer can regenerate any value without replaying a sequence. Offline and
// online callers agree bit-for-bit regardless of call order.

enum class Stream : uint64_t {
    grid_image = 1,
    grid_prompt = 2,
    stack_param = 3,
    score = 4,
};

constexpr uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr uint64_t stream64(uint64_t seed, Stream stream, uint64_t a, uint64_t b = 0, uint64_t c = 0, uint64_t d = 0) {
    uint64_t h = mix64(seed);
    h = mix64(h ^ static_cast<uint64_t>(stream));
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    h = mix64(h ^ d);
    return h;
}

// [0, 1), 24-bit resolution so the value is exact in a 32-bit float.
constexpr float unit_float(uint64_t bits) {
    return static_cast<float>(bits >> 40) * (1.0f / 16777216.0f);
}

// [-1, 1)
constexpr float symmetric_float(uint64_t bits) {
    return unit_float(bits) * 2.0f - 1.0f;
}

}  // namespace eedit::prng
