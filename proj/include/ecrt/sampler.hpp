#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecrt/core.hpp"
#include "ecrt/rng.hpp"
#include "json.hpp"

namespace ecrt {

struct SingularCovariance : Error {
    using Error::Error;
};
struct DegenerateClass : Error {
    using Error::Error;
};

/// Conditional generator for X given Z. Implementations see covariates only;
/// the response never reaches a sampler.
class DummySampler {
public:
    virtual ~DummySampler() = default;
    virtual std::size_t dim() const = 0;
    virtual double draw(std::span<const double> z, RngStream& rng) const = 0;
    virtual nlohmann::json to_json() const = 0;
};

using SamplerPtr = std::shared_ptr<const DummySampler>;

/// X | Z ~ N(u'z, sigma^2).
class GaussianLinearSampler final : public DummySampler {
public:
    GaussianLinearSampler(std::vector<double> u, double sigma);

    std::size_t dim() const override { return u_.size(); }
    double draw(std::span<const double> z, RngStream& rng) const override;
    nlohmann::json to_json() const override;

    double mean(std::span<const double> z) const;
    const std::vector<double>& u() const { return u_; }
    double sigma() const { return sigma_; }

private:
    std::vector<double> u_;
    double sigma_;
};

/// Conditional of one coordinate of a fitted joint Gaussian.
class FittedGaussianSampler final : public DummySampler {
public:
    static constexpr double kStdFloor = 1e-8;

    FittedGaussianSampler(std::vector<double> coef, double offset, double cond_std);

    std::size_t dim() const override { return coef_.size(); }
    double draw(std::span<const double> z, RngStream& rng) const override;
    nlohmann::json to_json() const override;

    double mean(std::span<const double> z) const;
    const std::vector<double>& cond_coef() const { return coef_; }
    double cond_mean_offset() const { return offset_; }
    double cond_std() const { return std_; }

private:
    std::vector<double> coef_;
    double offset_;
    double std_;
};

/// X | Z ~ Bernoulli(sigmoid(w'z + bias)), for binary features.
class BernoulliLogisticSampler final : public DummySampler {
public:
    BernoulliLogisticSampler(std::vector<double> weights, double bias, double l2_penalty);

    std::size_t dim() const override { return weights_.size(); }
    double draw(std::span<const double> z, RngStream& rng) const override;
    nlohmann::json to_json() const override;

    double probability(std::span<const double> z) const;
    const std::vector<double>& weights() const { return weights_; }
    double bias() const { return bias_; }
    double l2_penalty() const { return l2_; }

private:
    std::vector<double> weights_;
    double bias_;
    double l2_;
};

double sample_dummy(const DummySampler& sampler, std::span<const double> z, RngStream& rng);

/// K rows, each one dummy draw per covariate vector. Row k is drawn in full
/// before row k+1.
std::vector<std::vector<double>> sample_dummy_batches(const DummySampler& sampler,
                                                      std::span<const std::vector<double>> z_batch,
                                                      int k, RngStream& rng);

/// Mean and covariance of (x, z) rows, with ridge-regularized conditionals.
struct JointGaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    static JointGaussian fit(const Eigen::MatrixXd& rows);
    /// Law of coordinate j given all the other coordinates, in their
    /// original order.
    FittedGaussianSampler conditional(Eigen::Index j) const;
};

/// rows: n x (d+1), column 0 holds x. Requires n >= d + 2.
FittedGaussianSampler fit_gaussian_sampler(const Eigen::MatrixXd& rows);

struct LogisticFitOptions {
    std::vector<double> penalty_grid;  // empty: 10 log-spaced values in [1e-3, 1e1]
    int cv_folds = 10;
    int max_newton_iter = 50;
};

/// rows: n x (d+1), column 0 holds x in {0, 1}.
BernoulliLogisticSampler fit_logistic_sampler(const Eigen::MatrixXd& rows,
                                              const LogisticFitOptions& opts = {});

/// Penalized logistic regression at one penalty (mean log-loss + l2/2 |w|^2,
/// bias unpenalized). Returns (weights, bias).
std::pair<Eigen::VectorXd, double> fit_logistic(const Eigen::MatrixXd& z, const Eigen::VectorXd& x,
                                                double l2, int max_iter = 50);

std::vector<double> log_spaced(double lo, double hi, int count);

SamplerPtr sampler_from_json(const nlohmann::json& j);

}  // namespace ecrt
