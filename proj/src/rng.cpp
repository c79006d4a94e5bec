#include "cohem/rng.hpp"

namespace cohem {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed) : key_(seed) {
    std::uint64_t x = seed;
    for (auto& word : s_) word = splitmix64(x);
}

RngStream RngStream::derive(std::initializer_list<std::uint64_t> tags) const {
    std::uint64_t k = key_;
    for (std::uint64_t tag : tags) {
        std::uint64_t x = k ^ (tag + 0x9e3779b97f4a7c15ULL);
        k = splitmix64(x);
    }
    return RngStream(k);
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int RngStream::uniform_int(int lo, int hi) {
    if (lo > hi) throw InputError("uniform_int: empty range");
    const std::uint64_t range = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    const std::uint64_t limit = ~0ULL - (~0ULL % range);
    std::uint64_t u;
    do {
        u = next_u64();
    } while (u >= limit);
    return lo + static_cast<int>(u % range);
}

bool RngStream::bernoulli(double p) { return next_double() < p; }

int RngStream::categorical(const std::vector<double>& weights) {
    if (weights.empty()) throw InputError("categorical: no weights");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw InputError("categorical: negative weight");
        total += w;
    }
    if (total <= 0.0) throw InputError("categorical: zero total weight");
    double u = next_double() * total;
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
        cum += weights[i];
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

}  // namespace cohem
