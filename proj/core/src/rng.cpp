// SPDX-License-Identifier: Apache-2.0
#include "unetgan/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace unetgan {

uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed) : engine_(mix_seed(seed)) {}

Rng Rng::split(uint64_t stream) {
    Rng child;
    child.engine_.seed(mix_seed(engine_() ^ mix_seed(stream + 0x632be59bd9b4e019ULL)));
    return child;
}

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

int64_t Rng::uniform_int(int64_t lo, int64_t hi) { return std::uniform_int_distribution<int64_t>(lo, hi)(engine_); }

double Rng::normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

std::string Rng::state() const {
    std::ostringstream out;
    out << engine_;
    return out.str();
}

Rng Rng::from_state(const std::string& state) {
    Rng rng;
    std::istringstream in(state);
    in >> rng.engine_;
    if (in.fail()) throw std::invalid_argument("corrupt rng state");
    return rng;
}

}  // namespace unetgan
