#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "cohem/errors.hpp"

namespace cohem {

// Deterministic pseudo-random stream (xoshiro256**, splitmix64 seeding).
// Streams with the same key produce the same sequence on every platform.
// derive() builds a child key from integer tags without touching the parent
// state, so substreams are independent of how much the parent was consumed.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    RngStream derive(std::initializer_list<std::uint64_t> tags) const;

    std::uint64_t next_u64();

    // uniform in [0, 1)
    double next_double();

    // uniform integer in [lo, hi], inclusive, rejection-based
    int uniform_int(int lo, int hi);

    bool bernoulli(double p);

    // index sampled proportionally to weights (weights need not be normalized)
    int categorical(const std::vector<double>& weights);

    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t s_[4] = {0, 0, 0, 0};
};

}  // namespace cohem
