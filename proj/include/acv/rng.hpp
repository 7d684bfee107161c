#pragma once

#include <cstdint>
#include <random>

namespace acv::rng {

// SplitMix64 finalizer. Full-period bijection on 64-bit ints; used to turn
// structured substream indices into well-separated seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed plus up to three
// substream indices (conventionally: replicate, step, datum). Parallel
// replicates seeded this way never share a stream.
constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                               std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ mix64(a + 0x9e3779b97f4a7c15ULL));
    h = mix64(h ^ mix64(b + 0xd1b54a32d192ed03ULL));
    h = mix64(h ^ mix64(c + 0x8cb92ba72f3d8dd7ULL));
    return h;
}

// Explicitly seeded random stream. A fresh Stream per substream keeps
// sampling deterministic and race-free regardless of evaluation order.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : gen_(mix64(seed)) {}

    double normal() { return normal_(gen_); }

    // uniform on [0, 1)
    double uniform() { return uniform_(gen_); }

    // uniform integer on [0, n)
    int uniform_int(int n) {
        return std::uniform_int_distribution<int>(0, n - 1)(gen_);
    }

    std::uint64_t next_u64() { return gen_(); }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace acv::rng
