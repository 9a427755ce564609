#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ecrt/core.hpp"
#include "ecrt/lasso.hpp"
#include "ecrt/rng.hpp"
#include "ecrt/sampler.hpp"

namespace ecrt {

struct OfflineResult {
    double p_value = 1.0;
    double statistic = 0.0;
    std::vector<double> dummy_statistics;
    int m = 0;
};

/// (1 + #{dummy <= statistic}) / (1 + M). Smaller statistics are stronger
/// evidence against the null.
double randomization_p_value(double statistic, std::span<const double> dummy_statistics);

/// Fits a predictor on a dataset.
using Trainer = std::function<ModelSnapshot(std::span<const Observation>)>;

/// Lasso with eta chosen by k-fold cross-validated MSE over a grid relative to
/// the data's own max |centered X'y|.
struct LassoCvTrainer {
    int folds = 5;
    int num_etas = 20;
    double eta_lo = 1e-3;
    double eta_hi = 1e1;
    int max_sweeps = 200;
    double tol = 1e-7;

    ModelSnapshot operator()(std::span<const Observation> data) const;
};

double dataset_mse(const ModelSnapshot& model, std::span<const Observation> data);

/// Offline conditional randomization test: refits the model on each of M
/// dummy datasets. The statistic is the in-sample MSE of the fitted model.
OfflineResult crt_pvalue(std::span<const Observation> data, const Trainer& trainer,
                         const DummySampler& sampler, int m, RngStream& rng);

/// Holdout randomization test: one fit on the training split, statistics are
/// holdout MSEs with only the holdout x column resampled.
OfflineResult hrt_pvalue(std::span<const Observation> data, double split_fraction,
                         const Trainer& trainer, const DummySampler& sampler, int m,
                         RngStream& rng);

/// CRT p-values on growing prefixes of one dataset, as a peeking analyst
/// would compute them. Prefix lengths must not exceed data.size().
std::vector<double> crt_prefix_pvalues(std::span<const Observation> data,
                                       std::span<const std::size_t> prefix_lengths,
                                       const Trainer& trainer, const DummySampler& sampler, int m,
                                       RngStream& rng);

}  // namespace ecrt
