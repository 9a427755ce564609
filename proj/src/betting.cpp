#include "ecrt/betting.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ecrt {

double ScoreFn::operator()(double q, double q_tilde) const {
    const double diff = q_tilde - q;
    if (diff == 0.0) return 0.0;
    if (kind == ScoreKind::sign) return diff > 0.0 ? magnitude : -magnitude;
    const double denom = std::max({std::abs(q), std::abs(q_tilde), epsilon_guard});
    // Evaluated on |diff| so that swapping the arguments flips the sign exactly.
    const double mag = magnitude * std::tanh(kTanhScale * std::abs(diff) / denom);
    return diff > 0.0 ? mag : -mag;
}

BettingScore score(const ScoreFn& fn, double q, double q_tilde) { return {fn(q, q_tilde)}; }

double batch_mse(const ModelSnapshot& model, std::span<const Observation> batch) {
    if (batch.empty()) throw PreconditionError("batch_mse on an empty batch");
    double sse = 0.0;
    for (const auto& obs : batch) {
        const double r = model.predict(obs.x, obs.z) - obs.y;
        sse += r * r;
    }
    return sse / static_cast<double>(batch.size());
}

BettingScore derandomized_score(const ModelSnapshot& model, std::span<const Observation> batch,
                                const DummySampler& sampler, int k, const ScoreFn& fn,
                                RngStream& rng) {
    if (batch.empty()) throw PreconditionError("derandomized_score on an empty batch");
    if (k < 1) throw DomainError("K must be >= 1");
    const std::size_t b = batch.size();
    const double beta_x = model.beta().empty() ? 0.0 : model.beta()[0];

    // Residual with the x contribution removed; a dummy only changes that term.
    std::vector<double> partial(b);
    double q = 0.0;
    for (std::size_t s = 0; s < b; ++s) {
        partial[s] = model.predict(0.0, batch[s].z) - batch[s].y;
        const double r = partial[s] + beta_x * batch[s].x;
        q += r * r;
    }
    q /= static_cast<double>(b);

    double total = 0.0;
    for (int c = 0; c < k; ++c) {
        double qt = 0.0;
        for (std::size_t s = 0; s < b; ++s) {
            const double r = partial[s] + beta_x * sample_dummy(sampler, batch[s].z, rng);
            qt += r * r;
        }
        qt /= static_cast<double>(b);
        total += fn(q, qt);
    }
    return {total / static_cast<double>(k)};
}

}  // namespace ecrt
