#pragma once

#include <cstdint>
#include <random>

namespace ropegraph {

// Thin wrapper over mt19937_64. The mapping from raw engine output to
// doubles/integers is done here rather than through <random> distributions,
// whose outputs differ between standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Uniform integer in [lo, hi].
    int between(int lo, int hi) {
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Approximately standard normal (Box-Muller), deterministic across platforms
    // up to libm accuracy.
    double normal();

private:
    std::mt19937_64 engine_;
};

// Mixes a global seed with a stream id (task id, worker id) into an
// independent seed. splitmix64 finalizer.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ropegraph
