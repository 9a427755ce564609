#include "ecrt/rng.hpp"

#include <cmath>
#include <numbers>

namespace ecrt {

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t sm = seed;
    std::uint64_t mixed = splitmix64(sm) ^ (stream * 0xd1b54a32d192ed03ULL);
    std::uint64_t key = mixed;
    // Burn one extra round so stream=0 and seed differ from a plain seeding.
    splitmix64(key);
    for (auto& w : state_.s) w = splitmix64(key);
}

std::uint64_t RngStream::next_u64() {
    auto& s = state_.s;
    const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
}

double RngStream::uniform() {
    // 53 random bits, shifted by half an ulp so 0 is never returned.
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
    if (state_.has_spare) {
        state_.has_spare = false;
        return state_.spare;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    state_.spare = r * std::sin(theta);
    state_.has_spare = true;
    return r * std::cos(theta);
}

RngStream RngStream::child(std::uint64_t id) const {
    std::uint64_t k = state_.s[0] ^ rotl(state_.s[2], 17);
    return RngStream(splitmix64(k), id);
}

}  // namespace ecrt
