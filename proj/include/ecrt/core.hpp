#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecrt {

// Error types. Each subsystem throws one of these; the CLI maps them to
// exit status 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionMismatch : Error {
    using Error::Error;
};
struct NonFiniteValue : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct PreconditionError : Error {
    using Error::Error;
};

/// One (x, y, z) triplet of the stream.
struct Observation {
    double x = 0.0;
    double y = 0.0;
    std::vector<double> z;

    std::size_t dim() const { return z.size(); }
    bool operator==(const Observation&) const = default;
};

enum class ScoreKind { sign, tanh };

std::string to_string(ScoreKind k);
ScoreKind score_kind_from_string(const std::string& s);

/// Parameters of one sequential test.
struct TestConfig {
    double alpha = 0.05;
    int n_init = 20;
    std::vector<int> batch_sizes{2, 5, 10};
    int k_derandomize = 20;
    int grid_size = 1000;
    ScoreKind score_kind = ScoreKind::sign;
    double score_magnitude = 1.0;
    std::uint64_t seed = 0;

    // Throws DomainError naming the offending field.
    void validate() const;
    int max_batch() const;
    bool operator==(const TestConfig&) const = default;
};

enum class Decision { not_rejected, rejected };

std::string to_string(Decision d);

struct WealthPoint {
    long t = 0;
    double wealth = 1.0;
    bool operator==(const WealthPoint&) const = default;
};

struct TestOutcome {
    Decision decision = Decision::not_rejected;
    long stop_time = 0;
    double final_wealth = 1.0;
    std::vector<WealthPoint> trajectory;
    bool operator==(const TestOutcome&) const = default;
};

/// A record as parsed from an input line, before validation.
struct RawRecord {
    double x = 0.0;
    double y = 0.0;
    std::vector<double> z;
};

Observation validate_observation(const RawRecord& raw, std::size_t d);

/// Rejection threshold 1/alpha from Ville's inequality.
double ville_threshold(double alpha);

Decision decide(double wealth, double alpha);

}  // namespace ecrt
