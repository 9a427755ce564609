#pragma once

#include <array>
#include <cstdint>

namespace ecrt {

// xoshiro256** seeded through splitmix64 from (seed, stream). Distinct stream
// ids give unrelated initial states, so trials and subsystems can each own a
// reproducible stream. The full state, including the cached Box-Muller
// variate, is exposed for checkpointing.
class RngStream {
public:
    struct State {
        std::array<std::uint64_t, 4> s{};
        bool has_spare = false;
        double spare = 0.0;
        bool operator==(const State&) const = default;
    };

    RngStream(std::uint64_t seed, std::uint64_t stream);
    explicit RngStream(const State& state) : state_(state) {}

    std::uint64_t next_u64();
    /// Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Child stream derived from this stream's seed material; does not
    /// advance this stream.
    RngStream child(std::uint64_t id) const;

    const State& state() const { return state_; }

private:
    State state_;
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace ecrt
