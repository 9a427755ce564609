#include "ecrt/sampler.hpp"

#include <cmath>
#include <numeric>

namespace ecrt {

namespace {

constexpr int kSamplerFileVersion = 1;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_dim(std::size_t expected, std::size_t got) {
    if (expected != got)
        throw DimensionMismatch("sampler expects z of length " + std::to_string(expected) +
                                ", got " + std::to_string(got));
}

double sigmoid(double a) {
    if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

}  // namespace

std::vector<double> log_spaced(double lo, double hi, int count) {
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    const double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < count; ++i) out[i] = std::exp(a + (b - a) * i / (count - 1));
    return out;
}

// --- GaussianLinearSampler

GaussianLinearSampler::GaussianLinearSampler(std::vector<double> u, double sigma)
    : u_(std::move(u)), sigma_(sigma) {
    if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) throw DomainError("sigma must be positive");
}

double GaussianLinearSampler::mean(std::span<const double> z) const {
    check_dim(u_.size(), z.size());
    return dot(u_, z);
}

double GaussianLinearSampler::draw(std::span<const double> z, RngStream& rng) const {
    return mean(z) + sigma_ * rng.normal();
}

nlohmann::json GaussianLinearSampler::to_json() const {
    return {{"format", "ecrt-sampler"}, {"version", kSamplerFileVersion},
            {"kind", "gaussian_linear"}, {"u", u_}, {"sigma", sigma_}};
}

// --- FittedGaussianSampler

FittedGaussianSampler::FittedGaussianSampler(std::vector<double> coef, double offset,
                                             double cond_std)
    : coef_(std::move(coef)), offset_(offset), std_(std::max(cond_std, kStdFloor)) {
    if (!std::isfinite(cond_std)) throw DomainError("cond_std must be finite");
}

double FittedGaussianSampler::mean(std::span<const double> z) const {
    check_dim(coef_.size(), z.size());
    return offset_ + dot(coef_, z);
}

double FittedGaussianSampler::draw(std::span<const double> z, RngStream& rng) const {
    return mean(z) + std_ * rng.normal();
}

nlohmann::json FittedGaussianSampler::to_json() const {
    return {{"format", "ecrt-sampler"}, {"version", kSamplerFileVersion},
            {"kind", "fitted_gaussian"}, {"cond_coef", coef_},
            {"cond_mean_offset", offset_}, {"cond_std", std_}};
}

// --- BernoulliLogisticSampler

BernoulliLogisticSampler::BernoulliLogisticSampler(std::vector<double> weights, double bias,
                                                   double l2_penalty)
    : weights_(std::move(weights)), bias_(bias), l2_(l2_penalty) {}

double BernoulliLogisticSampler::probability(std::span<const double> z) const {
    check_dim(weights_.size(), z.size());
    return sigmoid(dot(weights_, z) + bias_);
}

double BernoulliLogisticSampler::draw(std::span<const double> z, RngStream& rng) const {
    return rng.uniform() < probability(z) ? 1.0 : 0.0;
}

nlohmann::json BernoulliLogisticSampler::to_json() const {
    return {{"format", "ecrt-sampler"}, {"version", kSamplerFileVersion},
            {"kind", "bernoulli_logistic"}, {"weights", weights_},
            {"bias", bias_}, {"l2_penalty", l2_}};
}

// --- free functions

double sample_dummy(const DummySampler& sampler, std::span<const double> z, RngStream& rng) {
    check_dim(sampler.dim(), z.size());
    return sampler.draw(z, rng);
}

std::vector<std::vector<double>> sample_dummy_batches(const DummySampler& sampler,
                                                      std::span<const std::vector<double>> z_batch,
                                                      int k, RngStream& rng) {
    if (k < 1) throw DomainError("K must be >= 1");
    std::vector<std::vector<double>> out(k, std::vector<double>(z_batch.size()));
    for (int c = 0; c < k; ++c)
        for (std::size_t s = 0; s < z_batch.size(); ++s)
            out[c][s] = sample_dummy(sampler, z_batch[s], rng);
    return out;
}

JointGaussian JointGaussian::fit(const Eigen::MatrixXd& rows) {
    const Eigen::Index n = rows.rows();
    if (n < 2) throw PreconditionError("need at least two rows to fit a Gaussian");
    JointGaussian g;
    g.mean = rows.colwise().mean().transpose();
    const Eigen::MatrixXd centered = rows.rowwise() - g.mean.transpose();
    g.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    return g;
}

FittedGaussianSampler JointGaussian::conditional(Eigen::Index j) const {
    const Eigen::Index p = mean.size();
    if (j < 0 || j >= p) throw DomainError("conditional index out of range");
    const Eigen::Index d = p - 1;
    std::vector<Eigen::Index> rest;
    for (Eigen::Index i = 0; i < p; ++i)
        if (i != j) rest.push_back(i);

    Eigen::MatrixXd szz(d, d);
    Eigen::VectorXd sxz(d), mz(d);
    for (Eigen::Index a = 0; a < d; ++a) {
        sxz(a) = cov(j, rest[a]);
        mz(a) = mean(rest[a]);
        for (Eigen::Index b = 0; b < d; ++b) szz(a, b) = cov(rest[a], rest[b]);
    }
    const double ridge = d > 0 ? 1e-6 * szz.trace() / static_cast<double>(d) : 0.0;
    szz.diagonal().array() += ridge;

    Eigen::LLT<Eigen::MatrixXd> llt(szz);
    if (llt.info() != Eigen::Success) throw SingularCovariance("covariance of z is singular");
    const Eigen::VectorXd coef = llt.solve(sxz);
    if (!coef.allFinite()) throw SingularCovariance("covariance of z is singular");

    const double offset = mean(j) - coef.dot(mz);
    const double var = cov(j, j) - sxz.dot(coef);
    const double sd = std::sqrt(std::max(var, 0.0));
    return FittedGaussianSampler(std::vector<double>(coef.data(), coef.data() + d), offset, sd);
}

FittedGaussianSampler fit_gaussian_sampler(const Eigen::MatrixXd& rows) {
    const Eigen::Index d = rows.cols() - 1;
    if (d < 1) throw DimensionMismatch("rows must hold x and at least one covariate");
    if (rows.rows() < d + 2)
        throw PreconditionError("need n >= d + 2 rows, got " + std::to_string(rows.rows()));
    return JointGaussian::fit(rows).conditional(0);
}

std::pair<Eigen::VectorXd, double> fit_logistic(const Eigen::MatrixXd& z, const Eigen::VectorXd& x,
                                                double l2, int max_iter) {
    const Eigen::Index n = z.rows(), d = z.cols();
    // Augmented design with the bias in the last column.
    Eigen::MatrixXd a(n, d + 1);
    a.leftCols(d) = z;
    a.col(d).setOnes();
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
    Eigen::VectorXd pen = Eigen::VectorXd::Constant(d + 1, l2);
    pen(d) = 0.0;

    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd eta = a * theta;
        Eigen::VectorXd p(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p(i) = sigmoid(eta(i));
            w(i) = std::max(p(i) * (1.0 - p(i)), 1e-12);
        }
        Eigen::VectorXd grad = a.transpose() * (p - x) / static_cast<double>(n);
        grad.array() += pen.array() * theta.array();
        Eigen::MatrixXd hess = a.transpose() * w.asDiagonal() * a / static_cast<double>(n);
        hess.diagonal() += pen;
        hess.diagonal().array() += 1e-10;
        const Eigen::VectorXd step = hess.ldlt().solve(grad);
        theta -= step;
        if (step.lpNorm<Eigen::Infinity>() < 1e-10) break;
    }
    return {theta.head(d), theta(d)};
}

BernoulliLogisticSampler fit_logistic_sampler(const Eigen::MatrixXd& rows,
                                              const LogisticFitOptions& opts) {
    const Eigen::Index n = rows.rows(), d = rows.cols() - 1;
    if (d < 1) throw DimensionMismatch("rows must hold x and at least one covariate");
    const Eigen::VectorXd x = rows.col(0);
    for (Eigen::Index i = 0; i < n; ++i)
        if (x(i) != 0.0 && x(i) != 1.0) throw DomainError("x column must be binary");
    const double ones = x.sum();
    if (ones < 1.0 || ones > static_cast<double>(n) - 1.0)
        throw DegenerateClass("x is constant; both classes are required");
    const Eigen::MatrixXd z = rows.rightCols(d);

    const std::vector<double> grid =
        opts.penalty_grid.empty() ? log_spaced(1e-3, 1e1, 10) : opts.penalty_grid;
    const int folds = std::max(2, std::min<int>(opts.cv_folds, static_cast<int>(n)));

    double best_loss = std::numeric_limits<double>::infinity();
    double best_pen = grid.front();
    for (double pen : grid) {
        double loss = 0.0;
        for (int f = 0; f < folds; ++f) {
            // Contiguous folds keep the assignment deterministic.
            const Eigen::Index lo = n * f / folds, hi = n * (f + 1) / folds;
            const Eigen::Index ntest = hi - lo, ntrain = n - ntest;
            Eigen::MatrixXd ztr(ntrain, d);
            Eigen::VectorXd xtr(ntrain);
            ztr << z.topRows(lo), z.bottomRows(n - hi);
            xtr << x.head(lo), x.tail(n - hi);
            const auto [w, b] = fit_logistic(ztr, xtr, pen, opts.max_newton_iter);
            for (Eigen::Index i = lo; i < hi; ++i) {
                const double p = std::clamp(sigmoid(z.row(i).dot(w) + b), 1e-15, 1.0 - 1e-15);
                loss -= x(i) * std::log(p) + (1.0 - x(i)) * std::log(1.0 - p);
            }
        }
        if (loss < best_loss) {
            best_loss = loss;
            best_pen = pen;
        }
    }
    const auto [w, b] = fit_logistic(z, x, best_pen, opts.max_newton_iter);
    return BernoulliLogisticSampler(std::vector<double>(w.data(), w.data() + d), b, best_pen);
}

SamplerPtr sampler_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "ecrt-sampler")
        throw PreconditionError("not a sampler document");
    if (j.value("version", 0) != kSamplerFileVersion)
        throw PreconditionError("unsupported sampler file version");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gaussian_linear")
        return std::make_shared<GaussianLinearSampler>(j.at("u").get<std::vector<double>>(),
                                                       j.at("sigma").get<double>());
    if (kind == "fitted_gaussian")
        return std::make_shared<FittedGaussianSampler>(
            j.at("cond_coef").get<std::vector<double>>(), j.at("cond_mean_offset").get<double>(),
            j.at("cond_std").get<double>());
    if (kind == "bernoulli_logistic")
        return std::make_shared<BernoulliLogisticSampler>(
            j.at("weights").get<std::vector<double>>(), j.at("bias").get<double>(),
            j.at("l2_penalty").get<double>());
    throw PreconditionError("unknown sampler kind '" + kind + "'");
}

}  // namespace ecrt
