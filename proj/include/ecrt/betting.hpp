#pragma once

#include <span>

#include "ecrt/core.hpp"
#include "ecrt/lasso.hpp"
#include "ecrt/rng.hpp"
#include "ecrt/sampler.hpp"

namespace ecrt {

/// Antisymmetric, bounded comparison of the statistic on original (q) and
/// dummy (q_tilde) data. Positive when the dummy statistic is larger.
struct ScoreFn {
    ScoreKind kind = ScoreKind::sign;
    double magnitude = 1.0;
    double epsilon_guard = 1e-12;

    // Slope of the tanh score, in units of the larger statistic.
    static constexpr double kTanhScale = 20.0;

    double operator()(double q, double q_tilde) const;
};

struct BettingScore {
    double w = 0.0;
};

/// Mean squared prediction error of `model` on `batch`.
double batch_mse(const ModelSnapshot& model, std::span<const Observation> batch);

BettingScore score(const ScoreFn& fn, double q, double q_tilde);

/// Average of K scores, each against a fresh dummy copy of the batch's x
/// column. q is computed once on the original batch.
BettingScore derandomized_score(const ModelSnapshot& model, std::span<const Observation> batch,
                                const DummySampler& sampler, int k, const ScoreFn& fn,
                                RngStream& rng);

}  // namespace ecrt
