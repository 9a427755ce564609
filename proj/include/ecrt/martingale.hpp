#pragma once

#include <string>
#include <vector>

#include "ecrt/betting.hpp"
#include "ecrt/core.hpp"
#include "ecrt/lasso.hpp"
#include "ecrt/records.hpp"
#include "ecrt/rng.hpp"
#include "ecrt/sampler.hpp"

namespace ecrt {

/// Uniform mixture over V betting fractions v_i = (i - 0.5) / V, each with
/// its running product prod_j (1 + v_i W_j). Products are held as logs; a
/// product that hits zero is stored as -inf and stays there.
class MixtureState {
public:
    explicit MixtureState(int grid_size = 1000);

    void update(BettingScore w);
    /// Grid mean of the products.
    double wealth() const;
    /// prod_j (1 + v W_j); exact at grid points, replayed from history
    /// elsewhere.
    double base_wealth(double v) const;

    int grid_size() const { return static_cast<int>(log_products_.size()); }
    double grid_point(int i) const { return (i + 0.5) / grid_size(); }
    long num_bets() const { return static_cast<long>(history_.size()); }
    const std::vector<double>& log_products() const { return log_products_; }
    const std::vector<double>& history() const { return history_; }
    double max_product() const;

    static MixtureState from_raw(std::vector<double> log_products, std::vector<double> history);

private:
    std::vector<double> log_products_;
    std::vector<double> history_;
};

/// Functional form of the update.
MixtureState mixture_update(MixtureState state, BettingScore w);
double base_wealth(const MixtureState& state, double v);

/// Wealth process for one batch size: bets once per completed batch using
/// the model frozen when that batch began.
struct BatchTrack {
    int b = 1;
    MixtureState mixture;
    std::vector<Observation> pending;
    ModelSnapshot frozen_model;
};

/// Model defaults matched to a test configuration.
LadderOptions ladder_options_for(const TestConfig& cfg);

struct StepResult {
    double wealth = 1.0;
    Decision decision = Decision::not_rejected;
};

/// Sequential e-CRT: ensemble over batch sizes of mixture martingales fed by
/// de-randomized betting scores, with an online lasso ladder as the model.
class Tester {
public:
    Tester(TestConfig cfg, SamplerPtr sampler, RngStream rng);
    Tester(TestConfig cfg, SamplerPtr sampler, RngStream rng, LadderOptions model_opts);

    /// Trains the initial model; the test clock stays at 0.
    void warm_up(std::span<const Observation> warmup);
    StepResult step(const Observation& obs);

    bool warmed_up() const { return ladder_.initialized(); }
    bool decided() const { return decided_; }
    long t() const { return t_; }
    double wealth() const { return wealth_; }
    Decision decision() const { return decided_ ? Decision::rejected : Decision::not_rejected; }
    const std::vector<WealthPoint>& trajectory() const { return trajectory_; }
    const std::vector<BatchTrack>& tracks() const { return tracks_; }
    const ModelLadder& ladder() const { return ladder_; }
    const TestConfig& config() const { return cfg_; }
    const DummySampler& sampler() const { return *sampler_; }
    const RngStream& rng() const { return rng_; }
    TestOutcome outcome() const;

    std::string checkpoint() const;
    /// Sampler is read from the blob.
    static Tester restore(const std::string& blob);

private:
    double ensemble_wealth() const;

    TestConfig cfg_;
    SamplerPtr sampler_;
    RngStream rng_;
    ScoreFn score_fn_;
    ModelLadder ladder_;
    std::vector<BatchTrack> tracks_;
    long t_ = 0;
    double wealth_ = 1.0;
    bool decided_ = false;
    std::vector<WealthPoint> trajectory_;
};

struct CheckpointError : Error {
    using Error::Error;
};

struct InsufficientWarmup : Error {
    using Error::Error;
};

/// Warm-up on the first n_init observations, then steps until rejection or
/// end of stream. Nothing is read after a rejection.
TestOutcome run_sequential(const ObservationSource& stream, const TestConfig& cfg,
                           SamplerPtr sampler, RngStream rng);
TestOutcome run_sequential(const ObservationSource& stream, const TestConfig& cfg,
                           SamplerPtr sampler, RngStream rng, const LadderOptions& model_opts);

}  // namespace ecrt
