#pragma once

#include <array>
#include <cstdint>

namespace gazenet {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// Every random quantity in the toolkit is addressed by a 64-bit key (the
/// run seed) and a 128-bit counter built from (stream, index, draw), so any
/// draw can be reproduced independently of evaluation order or threading.
class Philox {
public:
    using Block = std::array<std::uint32_t, 4>;

    static Block generate(std::uint64_t key, const Block& counter);

    /// Uniform double in [0, 1) using 53 bits from the first two words.
    static double uniform(std::uint64_t key, std::uint32_t stream, std::uint32_t index,
                          std::uint32_t draw, std::uint32_t slot = 0);
};

/// Sequential wrapper: draws counters (stream, index, n) for n = 0, 1, ...
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint32_t stream, std::uint32_t index = 0)
        : seed_(seed), stream_(stream), index_(index) {}

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    std::uint64_t next_u64();
    /// Standard normal via Box-Muller.
    double normal();

private:
    Philox::Block next_block();

    std::uint64_t seed_;
    std::uint32_t stream_;
    std::uint32_t index_;
    std::uint32_t counter_ = 0;
    Philox::Block buffer_{};
    int buffered_ = 0;
};

/// Fisher-Yates shuffle driven by an RngStream.
template <typename It>
void shuffle(It first, It last, RngStream& rng) {
    auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
        auto j = static_cast<decltype(i)>(rng.below(static_cast<std::uint64_t>(i + 1)));
        using std::swap;
        swap(first[i], first[j]);
    }
}

// Stream identifiers keep independent consumers from sharing counters.
namespace streams {
inline constexpr std::uint32_t kSubject = 1;
inline constexpr std::uint32_t kPose = 2;
inline constexpr std::uint32_t kIllum = 3;
inline constexpr std::uint32_t kKmeans = 4;
inline constexpr std::uint32_t kInit = 5;
inline constexpr std::uint32_t kShuffle = 6;
inline constexpr std::uint32_t kTarget = 7;
inline constexpr std::uint32_t kSplit = 8;
inline constexpr std::uint32_t kNoise = 9;
}  // namespace streams

}  // namespace gazenet
