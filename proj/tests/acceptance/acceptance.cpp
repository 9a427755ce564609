// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Pass criterion numbers as arguments
// to run a subset.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ecrt/betting.hpp"
#include "ecrt/datagen.hpp"
#include "ecrt/harness.hpp"
#include "ecrt/lasso.hpp"
#include "ecrt/martingale.hpp"
#include "ecrt/offline.hpp"
#include "oracles.hpp"

using namespace ecrt;

namespace {

struct Result {
    bool pass = false;
    std::string detail;
};

int workers() { return std::max(1u, std::thread::hardware_concurrency()); }

double nominal_se(int n) { return std::sqrt(0.05 * 0.95 / n); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Runs body(i) for i in [0, n) across worker threads.
void parallel_for(int n, const std::function<void(int)>& body) {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min(workers(), n); ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) body(i);
        });
    for (auto& t : pool) t.join();
}

std::size_t index_of(const std::vector<long>& cps, long t) {
    return static_cast<std::size_t>(std::find(cps.begin(), cps.end(), t) - cps.begin());
}

double rate_at(const std::vector<TrialResult>& trials, std::size_t c, std::size_t count) {
    double k = 0.0;
    for (std::size_t i = 0; i < count; ++i) k += trials[i].rejected_by[c];
    return k / static_cast<double>(count);
}

// --- shared runs

ExperimentSpec base_spec(Scenario s, int trials, int horizon, std::uint64_t seed) {
    ExperimentSpec spec;
    spec.scenario = s;
    spec.trials = trials;
    spec.horizon = horizon;
    spec.parallelism = workers();
    spec.seed = seed;
    return spec;
}

const ExperimentSpec& null_spec() {
    static const ExperimentSpec spec = base_spec(Scenario::type1, 500, 1000, 101);
    return spec;
}

// 500 null trials; the first 200 serve the type-I check.
const VariantTrials& null_runs() {
    static const VariantTrials runs = run_trials(null_spec()).front();
    return runs;
}

// --- criteria

Result type_one() {
    const auto& runs = null_runs();
    const auto cps = null_spec().resolved_checkpoints();
    double worst = 0.0;
    long worst_t = 0;
    for (std::size_t c = 0; c < cps.size(); ++c) {
        const double r = rate_at(runs.trials, c, 200);
        if (r >= worst) {
            worst = r;
            worst_t = cps[c];
        }
    }
    return {worst <= 0.08,
            fmt("200 null trials, max rejection rate %.3f at t=%ld (limit 0.08)", worst, worst_t)};
}

const MetricsTable& power_table() {
    static const MetricsTable table = run_experiment(base_spec(Scenario::power, 200, 2000, 202));
    return table;
}

Result power() {
    const auto& table = power_table();
    bool monotone = true;
    for (std::size_t i = 1; i < table.rows.size(); ++i)
        monotone = monotone && table.rows[i].rejection_rate >= table.rows[i - 1].rejection_rate;
    const double final_rate = table.find("ecrt", 2000)->rejection_rate;
    const double mid = table.find("ecrt", 1000)->rejection_rate;
    return {final_rate >= 0.85 && monotone,
            fmt("rate %.3f at t=2000 (>= 0.85), %.3f at t=1000, monotone=%s", final_rate, mid,
                monotone ? "yes" : "no")};
}

Result early_stopping() {
    const MetricsRow* row = power_table().find("ecrt", 2000);
    return {row->stop_q50 <= 800.0,
            fmt("median stop time %.1f among rejecting trials (limit 800); q10 %.1f, q90 %.1f",
                row->stop_q50, row->stop_q10, row->stop_q90)};
}

Result derandomization() {
    const auto table = run_experiment(base_spec(Scenario::ablate_k, 200, 2000, 303));
    double min_gap = 1.0, max_gap = -1.0;
    long min_t = 0;
    for (long t : base_spec(Scenario::ablate_k, 200, 2000, 303).resolved_checkpoints()) {
        const double gap = table.find("K=20", t)->rejection_rate - table.find("K=1", t)->rejection_rate;
        if (gap < min_gap) {
            min_gap = gap;
            min_t = t;
        }
        max_gap = std::max(max_gap, gap);
    }
    const double mid = table.find("K=20", 1000)->rejection_rate - table.find("K=1", 1000)->rejection_rate;
    return {min_gap >= -0.03,
            fmt("power(K=20) - power(K=1): min %+.3f at t=%ld, max %+.3f, at t=1000 %+.3f", min_gap,
                min_t, max_gap, mid)};
}

Result quadrature() {
    const std::vector<double> values{-1.0, -0.5, 0.0, 0.5, 1.0};
    const int max_len = 8;
    long checked = 0;
    double worst = 0.0;
    std::vector<MixtureState> stack{MixtureState(1000)};
    std::vector<double> hist;
    std::function<void()> visit = [&] {
        const double got = stack.back().wealth();
        const double want = oracle::mixture_integral(hist);
        worst = std::max(worst, std::abs(got - want) / std::abs(want));
        ++checked;
        if (static_cast<int>(hist.size()) == max_len) return;
        for (double w : values) {
            stack.push_back(mixture_update(stack.back(), {w}));
            hist.push_back(w);
            visit();
            hist.pop_back();
            stack.pop_back();
        }
    };
    visit();
    return {worst <= 1e-4 && checked == 488281,
            fmt("%ld histories, worst relative error %.3g (limit 1e-4)", checked, worst)};
}

Result supermartingale() {
    const auto& runs = null_runs();
    const auto cps = null_spec().resolved_checkpoints();
    bool ok = true;
    std::ostringstream detail;
    for (long t : {100L, 500L, 1000L}) {
        const std::size_t c = index_of(cps, t);
        std::vector<double> w;
        for (const auto& tr : runs.trials) w.push_back(tr.wealth_at[c]);
        const double m = oracle::mean(w), se = oracle::standard_error(w);
        ok = ok && m <= 1.0 + 3.0 * se;
        detail << fmt("E[S_%ld]=%.3f (<= %.3f) ", t, m, 1.0 + 3.0 * se);
    }

    const int runs_n = 1000, bets = 5000;
    std::vector<char> crossed(runs_n, 0);
    parallel_for(runs_n, [&](int r) {
        RngStream rng(404, static_cast<std::uint64_t>(r));
        MixtureState m(1000);
        for (int i = 0; i < bets; ++i) {
            m.update({rng.uniform() < 0.5 ? 1.0 : -1.0});
            if (m.wealth() >= 20.0) {
                crossed[r] = 1;
                return;
            }
        }
    });
    const double freq = std::count(crossed.begin(), crossed.end(), 1) / static_cast<double>(runs_n);
    const double limit = 0.05 + 2.0 * nominal_se(runs_n);
    ok = ok && freq <= limit;
    detail << fmt("Ville crossing freq %.3f (<= %.3f)", freq, limit);
    return {ok, detail.str()};
}

Result score_symmetry() {
    SyntheticConfig cfg;
    cfg.n = 1;
    RngStream setup(505, 0);
    const Dataset ds = gen_dataset(cfg, setup);
    const auto& sampler = *ds.true_sampler;
    std::vector<double> beta(20, 0.0);
    beta[0] = 0.7;
    beta[1] = -0.3;
    beta[5] = 0.2;
    const ModelSnapshot model(beta, 0.5, 0);

    bool ok = true;
    std::ostringstream detail;
    for (ScoreKind kind : {ScoreKind::sign, ScoreKind::tanh}) {
        for (int k : {1, 20}) {
            RngStream rng(505, 1 + static_cast<std::uint64_t>(k) * 2 + (kind == ScoreKind::tanh));
            const ScoreFn fn{kind};
            std::vector<double> ws;
            for (int i = 0; i < 10000; ++i) {
                std::vector<Observation> batch(5);
                for (auto& o : batch) {
                    for (int j = 0; j < 19; ++j) o.z.push_back(rng.normal());
                    o.x = sampler.draw(o.z, rng);
                    double wz = 0.0;
                    for (int j = 0; j < 19; ++j) wz += ds.w[j] * o.z[j];
                    o.y = wz * wz + rng.normal();
                }
                ws.push_back(derandomized_score(model, batch, sampler, k, fn, rng).w);
            }
            const double m = oracle::mean(ws), se = oracle::standard_error(ws);
            ok = ok && std::abs(m) <= 3.0 * se;
            detail << fmt("%s/K=%d: |%.4f| <= %.4f; ", to_string(kind).c_str(), k, m, 3.0 * se);
        }
    }
    return {ok, detail.str()};
}

Result offline_validity() {
    const int reps = 300;
    std::vector<double> pvals(reps);
    parallel_for(reps, [&](int r) {
        SyntheticConfig cfg;
        cfg.n = 300;
        RngStream data_rng(606, 2 * static_cast<std::uint64_t>(r));
        RngStream test_rng(606, 2 * static_cast<std::uint64_t>(r) + 1);
        const Dataset ds = gen_dataset(cfg, data_rng);
        pvals[r] = crt_pvalue(ds.observations, LassoCvTrainer{}, *ds.true_sampler, 100, test_rng).p_value;
    });
    const double small = std::count_if(pvals.begin(), pvals.end(), [](double p) { return p <= 0.05; }) /
                         static_cast<double>(reps);
    const double limit = 0.05 + 2.0 * nominal_se(reps);

    ExperimentSpec peek = base_spec(Scenario::peeking_hazard, 200, 300, 607);
    for (long t = 30; t <= 300; t += 30) peek.checkpoints.push_back(t);
    peek.offline_m = 100;
    const auto table = run_experiment(peek);
    const double peek_rate = table.find("crt_peek", 300)->rejection_rate;
    const double ecrt_rate = table.find("ecrt", 300)->rejection_rate;
    const double peek_limit = 0.05 + 3.0 * nominal_se(200);
    return {small <= limit && peek_rate > peek_limit,
            fmt("CRT P(p<=0.05)=%.3f (<= %.3f); min-p peeking over 10 looks rejects %.3f "
                "(> %.3f); e-CRT on the same data %.3f",
                small, limit, peek_rate, peek_limit, ecrt_rate)};
}

double kkt_violation(const LassoProblem& prob, const Eigen::VectorXd& beta, double eta) {
    const Eigen::VectorXd g = prob.smooth_gradient(beta);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        worst = std::max(worst, beta(j) == 0.0 ? std::max(0.0, std::abs(g(j)) - eta)
                                               : std::abs(g(j) + eta * (beta(j) > 0 ? 1.0 : -1.0)));
    return worst;
}

Result lasso() {
    double worst_obj = 0.0, worst_kkt = 0.0, worst_online = 0.0;
    for (int problem = 0; problem < 50; ++problem) {
        RngStream rng(707, static_cast<std::uint64_t>(problem));
        const int n = 20 + static_cast<int>(rng.uniform() * 60);
        const int d = 2 + static_cast<int>(rng.uniform() * 8);
        std::vector<Observation> data(n);
        for (auto& o : data) {
            o.x = rng.normal();
            o.y = 0.5 * o.x + rng.normal();
            for (int j = 0; j < d; ++j) {
                o.z.push_back(rng.normal() + 0.3 * o.x);
                o.y += (j % 2 ? 0.0 : 0.8) * o.z.back();
            }
        }
        GramStats stats(d + 1);
        for (const auto& o : data) stats.add(o);
        const LassoProblem prob = LassoProblem::from(stats, Eigen::VectorXd::Ones(d + 1));
        const double eta = 2.0 * prob.xcov.cwiseAbs().maxCoeff() * std::pow(10.0, -2.5 * rng.uniform());

        Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
        const double ours = cd_converge(prob, beta, eta, 100000, 1e-16);
        Eigen::MatrixXd f;
        Eigen::VectorXd y;
        oracle::design(data, f, y);
        const Eigen::VectorXd ref = oracle::proximal_gradient(f, y, eta);
        const double theirs = oracle::lasso_objective(f, y, ref.head(d + 1), ref(d + 1), eta);
        worst_obj = std::max(worst_obj, std::abs(ours - theirs));
        worst_kkt = std::max(worst_kkt, kkt_violation(prob, beta, eta));

        LassoState online(static_cast<std::size_t>(d), eta);
        for (const auto& o : data) online.step(o, LadderOptions{}.step_rule());
        worst_online = std::max(worst_online, online.objective() - ours);
    }
    return {worst_obj <= 1e-6 && worst_kkt <= 1e-6 && worst_online <= 1e-4,
            fmt("50 problems: |objective - prox-grad| %.2g, KKT %.2g (<= 1e-6); online gap %.2g "
                "(<= 1e-4)",
                worst_obj, worst_kkt, worst_online)};
}

Result robustness() {
    ExperimentSpec spec = base_spec(Scenario::misspec_sweep, 200, 1000, 808);
    spec.sweep = {0.1, 3.0};
    const auto small_init = run_experiment(spec);
    spec.sweep = {3.0};
    spec.test.n_init = 200;
    const auto large_init = run_experiment(spec);

    const double se = nominal_se(200);
    const double narrow = small_init.find("sigma_tilde=0.1", 1000)->rejection_rate;
    const double wide20 = small_init.find("sigma_tilde=3", 1000)->rejection_rate;
    const double wide200 = large_init.find("sigma_tilde=3", 1000)->rejection_rate;
    const bool ok = narrow <= 0.05 + 2.0 * se && wide20 - 0.05 >= 3.0 * se && wide200 < wide20;
    return {ok, fmt("sigma~=0.1: %.3f (<= %.3f); sigma~=3, n_init=20: %.3f (excess >= %.3f); "
                    "n_init=200: %.3f (smaller excess)",
                    narrow, 0.05 + 2.0 * se, wide20, 3.0 * se, wide200)};
}

Result properties() {
    long violations = 0;
    RngStream rng(909, 0);
    for (ScoreKind kind : {ScoreKind::sign, ScoreKind::tanh}) {
        const ScoreFn fn{kind};
        for (int i = 0; i < 100000; ++i) {
            const double scale = std::pow(10.0, 16.0 * rng.uniform() - 8.0);
            const double a = scale * rng.normal(), b = scale * rng.normal();
            const double g = fn(a, b);
            violations += g != -fn(b, a);
            violations += std::abs(g) > 1.0;
            violations += b > a && !(g > 0.0);
            const double qa = std::abs(a), hi = std::abs(b), lo = hi * rng.uniform();
            violations += fn(qa, hi) < fn(qa, lo);
        }
    }

    // checkpoint/restore against uninterrupted runs
    long mismatches = 0;
    for (int s = 0; s < 5; ++s) {
        SyntheticConfig dc;
        dc.regime = s % 2 ? Regime::null : Regime::non_null;
        dc.n = 800;
        RngStream data_rng(910, static_cast<std::uint64_t>(s));
        const Dataset ds = gen_dataset(dc, data_rng);
        const std::span<const Observation> all(ds.observations);
        TestConfig cfg;
        cfg.score_kind = s % 2 ? ScoreKind::tanh : ScoreKind::sign;
        Tester direct(cfg, ds.true_sampler, RngStream(911, static_cast<std::uint64_t>(s)));
        Tester paused(cfg, ds.true_sampler, RngStream(911, static_cast<std::uint64_t>(s)));
        direct.warm_up(all.first(20));
        paused.warm_up(all.first(20));
        const std::size_t cut = 20 + 37 * (s + 1);
        std::size_t i = 20;
        for (; i < cut && !direct.decided(); ++i) {
            direct.step(all[i]);
            paused.step(all[i]);
        }
        Tester resumed = Tester::restore(paused.checkpoint());
        for (; i < all.size() && !direct.decided(); ++i) {
            direct.step(all[i]);
            resumed.step(all[i]);
        }
        mismatches += direct.trajectory() != resumed.trajectory();
        mismatches += direct.checkpoint() != resumed.checkpoint();
    }

    ExperimentSpec spec = base_spec(Scenario::ablate_batches, 16, 300, 912);
    spec.parallelism = 1;
    const std::string serial = emit_report(run_experiment(spec), ReportFormat::csv);
    spec.parallelism = std::max(4, workers());
    const std::string parallel = emit_report(run_experiment(spec), ReportFormat::csv);

    return {violations == 0 && mismatches == 0 && serial == parallel,
            fmt("score property violations %ld over 2x10^5 inputs; checkpoint mismatches %ld/5; "
                "report identical across parallelism: %s",
                violations, mismatches, serial == parallel ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<int, std::pair<const char*, std::function<Result()>>> criteria{
        {1, {"type-I control", type_one}},
        {2, {"power", power}},
        {3, {"early stopping", early_stopping}},
        {4, {"de-randomization ordering", derandomization}},
        {5, {"mixture quadrature", quadrature}},
        {6, {"supermartingale and Ville", supermartingale}},
        {7, {"null score symmetry", score_symmetry}},
        {8, {"offline CRT validity", offline_validity}},
        {9, {"lasso correctness", lasso}},
        {10, {"sampler robustness trends", robustness}},
        {11, {"property suites", properties}},
    };
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::stoi(argv[i]));
    if (selected.empty())
        for (const auto& [id, _] : criteria) selected.push_back(id);

    int failed = 0;
    for (int id : selected) {
        const auto it = criteria.find(id);
        if (it == criteria.end()) {
            std::printf("criterion %2d: FAIL unknown criterion\n", id);
            ++failed;
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Result r;
        try {
            r = it->second.second();
        } catch (const std::exception& e) {
            r = {false, std::string("error: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %2d: %s %s | %s [%.1fs]\n", id, r.pass ? "PASS" : "FAIL",
                    it->second.first, r.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !r.pass;
    }
    return failed == 0 ? 0 : 1;
}
