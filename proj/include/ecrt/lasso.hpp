#pragma once

#include <deque>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ecrt/core.hpp"

namespace ecrt {

/// Feature vector [x, z] of an observation.
Eigen::VectorXd features(double x, std::span<const double> z);

/// Running sums of a least-squares problem. Removal (weight -1) supports
/// bounded training windows.
class GramStats {
public:
    explicit GramStats(Eigen::Index p = 0);

    void add(const Eigen::VectorXd& f, double y, double weight = 1.0);
    void add(const Observation& obs, double weight = 1.0);
    /// Adds every row of f (n x p) with responses y.
    void add_rows(const Eigen::MatrixXd& f, const Eigen::VectorXd& y);
    void merge(const GramStats& other, double weight = 1.0);

    Eigen::Index dim() const { return sum_f_.size(); }
    double count() const { return n_; }

    const Eigen::VectorXd& sum_f() const { return sum_f_; }
    double sum_y() const { return sum_y_; }
    const Eigen::MatrixXd& sum_ff() const { return sum_ff_; }
    const Eigen::VectorXd& sum_fy() const { return sum_fy_; }
    double sum_yy() const { return sum_yy_; }

    void restore(double n, Eigen::VectorXd sum_f, double sum_y, Eigen::MatrixXd sum_ff,
                 Eigen::VectorXd sum_fy, double sum_yy);

private:
    double n_ = 0.0;
    Eigen::VectorXd sum_f_;
    double sum_y_ = 0.0;
    Eigen::MatrixXd sum_ff_;
    Eigen::VectorXd sum_fy_;
    double sum_yy_ = 0.0;
};

/// Centered form of (1/n) sum (f'beta + b - y)^2 with the intercept profiled
/// out: beta'C beta - 2 c'beta + var_y.
struct LassoProblem {
    Eigen::MatrixXd cov;   // C
    Eigen::VectorXd xcov;  // c
    double var_y = 0.0;
    Eigen::VectorXd mean_f;
    double mean_y = 0.0;
    Eigen::VectorXd penalty_factor;  // per-coordinate multiplier on eta

    static LassoProblem from(const GramStats& stats, const Eigen::VectorXd& penalty_factor);

    double objective(const Eigen::VectorXd& beta, double eta) const;
    double intercept(const Eigen::VectorXd& beta) const { return mean_y - mean_f.dot(beta); }
    /// Gradient of the smooth part, 2 (C beta - c).
    Eigen::VectorXd smooth_gradient(const Eigen::VectorXd& beta) const;
};

/// Cyclic coordinate descent with soft-thresholding, warm-started from beta.
/// Returns the objective after the last sweep.
double cd_sweeps(const LassoProblem& prob, Eigen::VectorXd& beta, double eta, int sweeps);

/// Runs sweeps until the relative objective change drops below tol.
double cd_converge(const LassoProblem& prob, Eigen::VectorXd& beta, double eta, int max_sweeps,
                   double tol);

/// Sweeps taken after each new observation: at least min_sweeps, then more
/// until the relative objective change drops below tol or max_sweeps is hit.
struct StepRule {
    int min_sweeps = 3;
    int max_sweeps = 50;
    double tol = 1e-7;
};

double cd_step(const LassoProblem& prob, Eigen::VectorXd& beta, double eta, const StepRule& rule);

/// Frozen linear predictor.
class ModelSnapshot {
public:
    ModelSnapshot() = default;
    ModelSnapshot(std::vector<double> beta, double intercept, long frozen_at)
        : beta_(std::move(beta)), intercept_(intercept), frozen_at_(frozen_at) {}

    double predict(double x, std::span<const double> z) const;

    const std::vector<double>& beta() const { return beta_; }
    double intercept() const { return intercept_; }
    long frozen_at() const { return frozen_at_; }
    bool operator==(const ModelSnapshot&) const = default;

private:
    std::vector<double> beta_;
    double intercept_ = 0.0;
    long frozen_at_ = 0;
};

/// Single warm-started lasso at a fixed eta.
class LassoState {
public:
    /// window == 0 keeps every observation.
    LassoState(std::size_t d, double eta, std::size_t window = 0);

    void add(const Observation& obs);
    /// Returns the objective after each sweep.
    std::vector<double> cd_sweep(int sweeps);
    /// add() followed by cd_step(); returns the objective.
    double step(const Observation& obs, const StepRule& rule = {});

    double objective() const;
    double predict(double x, std::span<const double> z) const;
    ModelSnapshot snapshot(long t) const;

    const Eigen::VectorXd& beta() const { return beta_; }
    double intercept() const;
    double eta() const { return eta_; }
    long n_seen() const { return n_seen_; }
    const GramStats& stats() const { return stats_; }
    LassoProblem problem() const;

private:
    std::size_t d_;
    double eta_;
    std::size_t window_cap_;
    std::deque<Observation> window_;
    GramStats stats_;
    Eigen::VectorXd beta_;
    long n_seen_ = 0;
};

struct LadderOptions {
    int num_models = 20;
    double eta_lo = 1e-3;
    double eta_hi = 1e1;
    int holdout_len = 50;  // max(25, 5 * largest batch) for the default batch set
    int sweeps_per_step = 3;       // minimum per new observation
    int max_sweeps_per_step = 50;  // cap when the objective is still moving
    double step_tol = 1e-7;
    int warmup_max_sweeps = 500;
    double warmup_tol = 1e-8;
    std::size_t max_window = 0;  // 0 = all past data
    bool standardize = false;

    static int default_holdout(int max_batch) { return std::max(25, 5 * max_batch); }
    StepRule step_rule() const { return {sweeps_per_step, max_sweeps_per_step, step_tol}; }
};

/// L lasso models on a grid of eta, trained on all but the trailing holdout
/// points, plus the running model trained on everything and regularized with
/// the eta that currently wins on the holdout.
class ModelLadder {
public:
    ModelLadder(std::size_t d, LadderOptions opts);

    /// Fits the grid and the running model on the warm-up sample.
    void initialize(std::span<const Observation> warmup);
    void online_update(const Observation& obs);

    /// Index of the rung with the smallest holdout MSE; ties go to the
    /// smaller eta.
    std::size_t select_eta() const;
    ModelSnapshot snapshot(long t) const;
    double predict(double x, std::span<const double> z) const;

    bool initialized() const { return initialized_; }
    std::size_t dim() const { return d_; }
    const LadderOptions& options() const { return opts_; }
    const std::vector<double>& etas() const { return etas_; }
    std::size_t selected() const { return selected_; }
    long n_seen() const { return n_seen_; }
    std::size_t holdout_size() const { return holdout_.size(); }
    double holdout_mse(std::size_t rung) const;
    const Eigen::VectorXd& running_beta() const { return running_beta_; }
    const Eigen::VectorXd& rung_beta(std::size_t l) const { return rung_betas_[l]; }
    LassoProblem running_problem() const;
    LassoProblem prefix_problem() const;

    // Raw state access for checkpointing.
    struct Raw {
        std::vector<double> etas;
        std::vector<Eigen::VectorXd> rung_betas;
        Eigen::VectorXd running_beta;
        Eigen::VectorXd penalty_factor;
        GramStats full, prefix;
        std::deque<Observation> holdout;
        std::deque<Observation> full_window, prefix_window;
        std::size_t selected = 0;
        long n_seen = 0;
        bool initialized = false;
    };
    Raw raw() const;
    static ModelLadder from_raw(std::size_t d, LadderOptions opts, Raw raw);

private:
    std::size_t target_holdout() const;
    void absorb(const Observation& obs);
    void sweep_rungs(bool converge);

    std::size_t d_;
    LadderOptions opts_;
    std::vector<double> etas_;
    std::vector<Eigen::VectorXd> rung_betas_;
    Eigen::VectorXd running_beta_;
    Eigen::VectorXd penalty_factor_;
    GramStats full_, prefix_;
    std::deque<Observation> holdout_;
    std::deque<Observation> full_window_, prefix_window_;
    std::size_t selected_ = 0;
    long n_seen_ = 0;
    bool initialized_ = false;
};

}  // namespace ecrt
