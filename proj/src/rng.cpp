#include "gazenet/rng.hpp"

#include <cmath>

namespace gazenet {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox::Block Philox::generate(std::uint64_t key, const Block& counter) {
    Block x = counter;
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, x[0], hi0, lo0);
        mulhilo(kMul1, x[2], hi1, lo1);
        x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
        k0 += kWeyl0;
        k1 += kWeyl1;
    }
    return x;
}

double Philox::uniform(std::uint64_t key, std::uint32_t stream, std::uint32_t index,
                       std::uint32_t draw, std::uint32_t slot) {
    const Block b = generate(key, {stream, index, draw, slot});
    const std::uint64_t bits = (static_cast<std::uint64_t>(b[0]) << 32 | b[1]) >> 11;
    return static_cast<double>(bits) * 0x1.0p-53;
}

Philox::Block RngStream::next_block() {
    return Philox::generate(seed_, {stream_, index_, counter_++, 0});
}

std::uint64_t RngStream::next_u64() {
    if (buffered_ == 0) {
        buffer_ = next_block();
        buffered_ = 2;
    }
    const int i = 2 - buffered_;
    --buffered_;
    return static_cast<std::uint64_t>(buffer_[static_cast<std::size_t>(2 * i)]) << 32 |
           buffer_[static_cast<std::size_t>(2 * i + 1)];
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n <= 1) return 0;
    // rejection to avoid modulo bias
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

double RngStream::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace gazenet
