#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ecrt/core.hpp"
#include "ecrt/rng.hpp"
#include "ecrt/sampler.hpp"

namespace ecrt {

enum class Regime { null, non_null };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct SyntheticConfig {
    Regime regime = Regime::null;
    int n = 1000;
    int d = 19;  // covariates; x is one extra feature
    double signal_amp = 3.0;
    double rho = 0.0;
    double sigma_tilde = 1.0;
    std::uint64_t seed = 0;
    // When set, u and w come from this seed instead of varying per dataset.
    std::optional<std::uint64_t> coefficient_seed;

    void validate() const;
};

struct Dataset {
    std::vector<Observation> observations;
    std::shared_ptr<const GaussianLinearSampler> true_sampler;
    Regime label = Regime::null;
    std::vector<double> w;  // response coefficients
};

/// Z ~ N(0, I_d), X | Z ~ N(u'Z, 1), Y ~ N((w'Z)^2 [+ amp X], 1), with
/// u, w ~ N(0, I_d). Delegates to gen_autocorrelated when rho > 0.
Dataset gen_dataset(const SyntheticConfig& cfg, RngStream& rng);

/// (X, Z) ~ N(0, Sigma) with Sigma_ij = rho^|i-j| over d + 1 coordinates, X
/// first. The true sampler is the Gaussian conditional of X given Z.
Dataset gen_autocorrelated(const SyntheticConfig& cfg, RngStream& rng);

Eigen::MatrixXd ar1_covariance(int size, double rho);

/// Same mean function, conditional standard deviation sigma_tilde.
GaussianLinearSampler misspecified_sampler(const GaussianLinearSampler& true_sampler,
                                           double sigma_tilde);

}  // namespace ecrt
