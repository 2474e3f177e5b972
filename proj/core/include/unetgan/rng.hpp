// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_RNG_HPP
#define UNETGAN_RNG_HPP

#include <cstdint>
#include <random>
#include <string>

namespace unetgan {

/// Seeded, serializable random stream. All run-time randomness of training
/// (latents, CutMix masks, p_mix coin flips) is drawn from one of these so a
/// checkpoint can restore it exactly.
class Rng {
public:
    using engine_type = std::mt19937_64;

    explicit Rng(uint64_t seed = 0);

    /// Derives an independent child stream; advances this stream by one draw.
    Rng split(uint64_t stream);

    double uniform();                              // [0, 1)
    double uniform(double lo, double hi);          // [lo, hi)
    int64_t uniform_int(int64_t lo, int64_t hi);   // [lo, hi]
    double normal();

    engine_type& engine() { return engine_; }

    std::string state() const;
    static Rng from_state(const std::string& state);

    friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
    engine_type engine_;
};

/// splitmix64 finalizer; used to decorrelate derived seeds.
uint64_t mix_seed(uint64_t x);

}  // namespace unetgan

#endif
