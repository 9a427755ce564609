#include "ecrt/offline.hpp"

#include <cmath>

namespace ecrt {

double randomization_p_value(double statistic, std::span<const double> dummy_statistics) {
    std::size_t count = 0;
    for (double t : dummy_statistics) count += t <= statistic ? 1 : 0;
    return (1.0 + static_cast<double>(count)) / (1.0 + static_cast<double>(dummy_statistics.size()));
}

double dataset_mse(const ModelSnapshot& model, std::span<const Observation> data) {
    if (data.empty()) throw PreconditionError("MSE over an empty dataset");
    double sse = 0.0;
    for (const auto& obs : data) {
        const double r = model.predict(obs.x, obs.z) - obs.y;
        sse += r * r;
    }
    return sse / static_cast<double>(data.size());
}

ModelSnapshot LassoCvTrainer::operator()(std::span<const Observation> data) const {
    const std::size_t n = data.size();
    if (n < 2) throw PreconditionError("trainer needs at least two observations");
    const Eigen::Index p = static_cast<Eigen::Index>(data.front().z.size()) + 1;
    const int k = std::max(2, std::min<int>(folds, static_cast<int>(n)));

    std::vector<GramStats> fold_stats(k, GramStats(p));
    GramStats total(p);
    auto fold_lo = [&](int f) { return n * f / k; };
    for (int f = 0; f < k; ++f) {
        const auto lo = fold_lo(f), hi = fold_lo(f + 1);
        Eigen::MatrixXd rows(static_cast<Eigen::Index>(hi - lo), p);
        Eigen::VectorXd ys(rows.rows());
        for (std::size_t i = lo; i < hi; ++i) {
            const auto r = static_cast<Eigen::Index>(i - lo);
            rows(r, 0) = data[i].x;
            for (Eigen::Index j = 1; j < p; ++j) rows(r, j) = data[i].z[j - 1];
            ys(r) = data[i].y;
        }
        fold_stats[f].add_rows(rows, ys);
        total.merge(fold_stats[f]);
    }

    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(p);
    const LassoProblem full = LassoProblem::from(total, ones);
    double scale = full.xcov.cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) scale = 1.0;
    // Descending grid so each fit warm-starts from a sparser one.
    std::vector<double> etas = log_spaced(eta_hi * scale, eta_lo * scale, num_etas);

    std::vector<double> cv_sse(etas.size(), 0.0);
    for (int f = 0; f < k; ++f) {
        GramStats train = total;
        train.merge(fold_stats[f], -1.0);
        if (train.count() <= 0) continue;
        const LassoProblem prob = LassoProblem::from(train, ones);
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
        for (std::size_t e = 0; e < etas.size(); ++e) {
            cd_converge(prob, beta, etas[e], max_sweeps, tol);
            const double icpt = prob.intercept(beta);
            for (std::size_t i = fold_lo(f); i < fold_lo(f + 1); ++i) {
                double pred = icpt + beta(0) * data[i].x;
                for (Eigen::Index j = 1; j < p; ++j) pred += beta(j) * data[i].z[j - 1];
                cv_sse[e] += (pred - data[i].y) * (pred - data[i].y);
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t e = 1; e < etas.size(); ++e)
        if (cv_sse[e] < cv_sse[best]) best = e;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (std::size_t e = 0; e <= best; ++e) cd_converge(full, beta, etas[e], max_sweeps, tol);
    return ModelSnapshot(std::vector<double>(beta.data(), beta.data() + p), full.intercept(beta), 0);
}

namespace {

std::vector<Observation> with_dummy_x(std::span<const Observation> data, const DummySampler& sampler,
                                      RngStream& rng) {
    std::vector<Observation> out(data.begin(), data.end());
    for (auto& obs : out) obs.x = sample_dummy(sampler, obs.z, rng);
    return out;
}

}  // namespace

OfflineResult crt_pvalue(std::span<const Observation> data, const Trainer& trainer,
                         const DummySampler& sampler, int m, RngStream& rng) {
    if (data.size() < 2) throw PreconditionError("CRT needs n >= 2");
    if (m < 1) throw DomainError("M must be >= 1");
    OfflineResult res;
    res.m = m;
    res.statistic = dataset_mse(trainer(data), data);
    res.dummy_statistics.reserve(m);
    for (int i = 0; i < m; ++i) {
        const auto dummy = with_dummy_x(data, sampler, rng);
        res.dummy_statistics.push_back(dataset_mse(trainer(dummy), dummy));
    }
    res.p_value = randomization_p_value(res.statistic, res.dummy_statistics);
    return res;
}

OfflineResult hrt_pvalue(std::span<const Observation> data, double split_fraction,
                         const Trainer& trainer, const DummySampler& sampler, int m,
                         RngStream& rng) {
    if (m < 1) throw DomainError("M must be >= 1");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw DomainError("split_fraction must lie in (0, 1)");
    const auto n_train = static_cast<std::size_t>(std::floor(split_fraction * data.size()));
    if (n_train < 2 || n_train >= data.size())
        throw PreconditionError("degenerate split: both parts must be non-empty");
    const auto train = data.first(n_train);
    const auto holdout = data.subspan(n_train);

    const ModelSnapshot model = trainer(train);
    OfflineResult res;
    res.m = m;
    res.statistic = dataset_mse(model, holdout);
    res.dummy_statistics.reserve(m);
    for (int i = 0; i < m; ++i)
        res.dummy_statistics.push_back(dataset_mse(model, with_dummy_x(holdout, sampler, rng)));
    res.p_value = randomization_p_value(res.statistic, res.dummy_statistics);
    return res;
}

std::vector<double> crt_prefix_pvalues(std::span<const Observation> data,
                                       std::span<const std::size_t> prefix_lengths,
                                       const Trainer& trainer, const DummySampler& sampler, int m,
                                       RngStream& rng) {
    std::vector<double> out;
    for (std::size_t len : prefix_lengths) {
        if (len > data.size()) throw PreconditionError("prefix longer than the data");
        out.push_back(crt_pvalue(data.first(len), trainer, sampler, m, rng).p_value);
    }
    return out;
}

}  // namespace ecrt
