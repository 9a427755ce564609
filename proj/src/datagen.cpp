#include "ecrt/datagen.hpp"

#include <algorithm>
#include <cmath>

namespace ecrt {

std::string to_string(Regime r) { return r == Regime::null ? "null" : "non_null"; }

Regime regime_from_string(const std::string& s) {
    if (s == "null") return Regime::null;
    if (s == "non_null") return Regime::non_null;
    throw DomainError("unknown regime '" + s + "'");
}

void SyntheticConfig::validate() const {
    if (n < 1) throw DomainError("n must be >= 1");
    if (d < 1) throw DomainError("d must be >= 1");
    if (!(rho >= 0.0 && rho < 1.0)) throw DomainError("rho must lie in [0, 1)");
    if (!(sigma_tilde > 0.0)) throw DomainError("sigma_tilde must be positive");
}

namespace {

std::vector<double> normal_vector(int d, RngStream& rng) {
    std::vector<double> v(d);
    for (auto& e : v) e = rng.normal();
    return v;
}

double response(const SyntheticConfig& cfg, const std::vector<double>& w, double x,
                const std::vector<double>& z, RngStream& rng) {
    double wz = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) wz += w[j] * z[j];
    double mean = wz * wz;
    if (cfg.regime == Regime::non_null) mean += cfg.signal_amp * x;
    return mean + rng.normal();
}

// Coefficient draws either share the data stream or come from a fixed seed.
RngStream coefficient_stream(const SyntheticConfig& cfg, RngStream& rng) {
    if (cfg.coefficient_seed) return RngStream(*cfg.coefficient_seed, 0x636f6566ULL);
    return rng.child(0x636f6566ULL);
}

}  // namespace

Dataset gen_dataset(const SyntheticConfig& cfg, RngStream& rng) {
    cfg.validate();
    if (cfg.rho > 0.0) return gen_autocorrelated(cfg, rng);

    RngStream coef_rng = coefficient_stream(cfg, rng);
    std::vector<double> u = normal_vector(cfg.d, coef_rng);
    std::vector<double> w = normal_vector(cfg.d, coef_rng);

    Dataset ds;
    ds.label = cfg.regime;
    ds.true_sampler = std::make_shared<GaussianLinearSampler>(u, 1.0);
    ds.observations.reserve(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        Observation obs;
        obs.z = normal_vector(cfg.d, rng);
        obs.x = ds.true_sampler->draw(obs.z, rng);
        obs.y = response(cfg, w, obs.x, obs.z, rng);
        ds.observations.push_back(std::move(obs));
    }
    ds.w = std::move(w);
    return ds;
}

Eigen::MatrixXd ar1_covariance(int size, double rho) {
    Eigen::MatrixXd s(size, size);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) s(i, j) = std::pow(rho, std::abs(i - j));
    return s;
}

Dataset gen_autocorrelated(const SyntheticConfig& cfg, RngStream& rng) {
    cfg.validate();
    const int p = cfg.d + 1;
    const Eigen::MatrixXd sigma = ar1_covariance(p, cfg.rho);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw DomainError("AR(1) covariance is not positive definite");
    const Eigen::MatrixXd chol = llt.matrixL();

    // Exact conditional of X given Z, no ridge.
    const Eigen::MatrixXd szz = sigma.bottomRightCorner(p - 1, p - 1);
    const Eigen::VectorXd szx = sigma.col(0).tail(p - 1);
    const Eigen::VectorXd coef = szz.llt().solve(szx);
    const double cond_var = std::max(sigma(0, 0) - szx.dot(coef), 0.0);

    RngStream coef_rng = coefficient_stream(cfg, rng);
    std::vector<double> w = normal_vector(cfg.d, coef_rng);

    Dataset ds;
    ds.label = cfg.regime;
    ds.true_sampler = std::make_shared<GaussianLinearSampler>(
        std::vector<double>(coef.data(), coef.data() + coef.size()), std::sqrt(cond_var));
    ds.observations.reserve(cfg.n);
    Eigen::VectorXd e(p);
    for (int i = 0; i < cfg.n; ++i) {
        for (int k = 0; k < p; ++k) e(k) = rng.normal();
        const Eigen::VectorXd v = chol * e;
        Observation obs;
        obs.x = v(0);
        obs.z.assign(v.data() + 1, v.data() + p);
        obs.y = response(cfg, w, obs.x, obs.z, rng);
        ds.observations.push_back(std::move(obs));
    }
    ds.w = std::move(w);
    return ds;
}

GaussianLinearSampler misspecified_sampler(const GaussianLinearSampler& true_sampler,
                                           double sigma_tilde) {
    if (!(sigma_tilde > 0.0)) throw DomainError("sigma_tilde must be positive");
    return GaussianLinearSampler(true_sampler.u(), sigma_tilde);
}

}  // namespace ecrt
