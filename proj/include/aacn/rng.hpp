#pragma once

#include <cmath>
#include <cstdint>

namespace aacn {

// Deterministic splitmix64-based generator. std::mt19937 distributions are
// implementation-defined, so all sampling is spelled out here to keep outputs
// identical across platforms and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range.
    int uniform_int(int lo, int hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    // Independent stream derived from the original seed; used so per-sample
    // generation does not depend on iteration order or thread scheduling.
    Rng fork(uint64_t stream) const {
        uint64_t mixed = seed_ ^ (0x9e3779b97f4a7c15ULL + stream * 0xd1342543de82ef95ULL);
        mixed = (mixed ^ (mixed >> 33)) * 0xff51afd7ed558ccdULL;
        return Rng(mixed ^ (mixed >> 33));
    }

private:
    uint64_t seed_;
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace aacn
