#include "ecrt/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ecrt {

std::string to_string(ScoreKind k) { return k == ScoreKind::sign ? "sign" : "tanh"; }

ScoreKind score_kind_from_string(const std::string& s) {
    if (s == "sign") return ScoreKind::sign;
    if (s == "tanh") return ScoreKind::tanh;
    throw DomainError("unknown score_kind '" + s + "' (expected sign or tanh)");
}

std::string to_string(Decision d) {
    return d == Decision::rejected ? "rejected" : "not_rejected";
}

void TestConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");
    if (n_init < 1) throw DomainError("n_init must be positive");
    if (batch_sizes.empty()) throw DomainError("batch_sizes must be non-empty");
    std::set<int> seen;
    for (int b : batch_sizes) {
        if (b < 1) throw DomainError("batch sizes must be >= 1");
        if (!seen.insert(b).second) throw DomainError("batch sizes must be distinct");
    }
    if (k_derandomize < 1) throw DomainError("k_derandomize must be >= 1");
    if (grid_size < 2) throw DomainError("grid_size must be >= 2");
    if (!(score_magnitude > 0.0 && score_magnitude <= 1.0))
        throw DomainError("score_magnitude must lie in (0,1]");
}

int TestConfig::max_batch() const {
    return batch_sizes.empty() ? 1 : *std::max_element(batch_sizes.begin(), batch_sizes.end());
}

Observation validate_observation(const RawRecord& raw, std::size_t d) {
    if (raw.z.size() != d)
        throw DimensionMismatch("z has length " + std::to_string(raw.z.size()) + ", expected " +
                                std::to_string(d));
    if (!std::isfinite(raw.x)) throw NonFiniteValue("x is not finite");
    if (!std::isfinite(raw.y)) throw NonFiniteValue("y is not finite");
    for (std::size_t j = 0; j < d; ++j)
        if (!std::isfinite(raw.z[j]))
            throw NonFiniteValue("z[" + std::to_string(j) + "] is not finite");
    return Observation{raw.x, raw.y, raw.z};
}

double ville_threshold(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");
    return 1.0 / alpha;
}

Decision decide(double wealth, double alpha) {
    return wealth >= ville_threshold(alpha) ? Decision::rejected : Decision::not_rejected;
}

}  // namespace ecrt
