#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecrt/core.hpp"
#include "ecrt/datagen.hpp"
#include "ecrt/martingale.hpp"
#include "json.hpp"

namespace ecrt {

enum class Scenario {
    type1,
    power,
    stopping_hist,
    ablate_k,
    ablate_batches,
    dim_sweep,
    rho_sweep,
    misspec_sweep,
    peeking_hazard
};

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct ExperimentSpec {
    Scenario scenario = Scenario::type1;
    int trials = 200;
    int horizon = 1000;
    std::vector<long> checkpoints;  // empty: every 100 steps up to horizon
    TestConfig test;
    SyntheticConfig data;
    int parallelism = 1;
    std::uint64_t seed = 0;
    // Swept parameter values: K for ablate_k, d for dim_sweep, rho for
    // rho_sweep, sigma_tilde for misspec_sweep. Empty picks a default.
    std::vector<double> sweep;
    int offline_m = 100;

    void validate() const;
    std::vector<long> resolved_checkpoints() const;
};

nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);

/// One configuration run over all trials.
struct Variant {
    std::string label;
    double param = 0.0;
    TestConfig test;
    SyntheticConfig data;
    bool offline_peeking = false;
};

std::vector<Variant> expand_variants(const ExperimentSpec& spec);

struct TrialResult {
    Decision decision = Decision::not_rejected;
    long stop_time = 0;
    double final_wealth = 1.0;
    std::vector<double> wealth_at;     // per checkpoint; NaN for offline variants
    std::vector<char> rejected_by;     // per checkpoint
};

struct VariantTrials {
    Variant variant;
    std::vector<TrialResult> trials;
};

/// Runs every variant over spec.trials seeded trials. Trial i uses the same
/// RNG streams in every variant, so variants are paired.
std::vector<VariantTrials> run_trials(const ExperimentSpec& spec);

/// Single trial, exposed for tests and tools.
TrialResult run_trial(const ExperimentSpec& spec, const Variant& variant, int trial_index);

struct MetricsRow {
    std::string variant;
    double param = 0.0;
    long t = 0;
    double rejection_rate = 0.0;
    double mean_wealth = 0.0;
    double stop_q10 = 0.0;
    double stop_q50 = 0.0;
    double stop_q90 = 0.0;
    int trials = 0;
};

struct MetricsTable {
    std::string scenario;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<MetricsRow> rows;

    const MetricsRow* find(const std::string& variant, long t) const;
};

MetricsTable aggregate(const ExperimentSpec& spec, const std::vector<VariantTrials>& runs);
MetricsTable run_experiment(const ExperimentSpec& spec);

enum class ReportFormat { csv, json };

std::string emit_report(const MetricsTable& table, ReportFormat format);
void write_report(const MetricsTable& table, ReportFormat format, const std::string& path);
MetricsTable parse_csv_report(const std::string& text);

/// Linear-interpolation quantile of an unsorted sample; NaN when empty.
double quantile(std::vector<double> values, double q);

}  // namespace ecrt
