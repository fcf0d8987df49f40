#pragma once

// Seeded generator with explicit value mapping so that identical seeds give
// bitwise-identical streams on every platform.

#include <cstdint>
#include <random>

namespace mvot {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    float next_float() { return static_cast<float>(next_double()); }

    // uniform in [lo, hi)
    float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

    // uniform integer in [lo, hi]
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace mvot
