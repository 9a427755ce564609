#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ecrt/datagen.hpp"
#include "ecrt/harness.hpp"
#include "ecrt/lasso.hpp"
#include "ecrt/martingale.hpp"
#include "ecrt/records.hpp"
#include "ecrt/sampler.hpp"

using namespace ecrt;

namespace {

constexpr int kExitRejected = 0;
constexpr int kExitNotRejected = 1;
constexpr int kExitError = 2;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error("'" + path + "' is not valid JSON: " + e.what());
    }
}

// Opens path for reading, with "-" meaning stdin.
std::istream& open_input(const std::string& path, std::ifstream& file) {
    if (path == "-") return std::cin;
    file.open(path);
    if (!file) throw Error("cannot open '" + path + "'");
    return file;
}

std::ostream& open_output(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path, std::ios::binary);
    if (!file) throw Error("cannot open '" + path + "' for writing");
    return file;
}

// Unlabeled rows as an n x (d+1) matrix with x in column 0.
Eigen::MatrixXd unlabeled_rows(const std::string& path) {
    std::ifstream file;
    std::istream& in = open_input(path, file);
    const auto obs = read_records(in, std::nullopt, false);
    if (obs.empty()) throw PreconditionError("'" + path + "' holds no records");
    const auto d = static_cast<Eigen::Index>(obs.front().z.size());
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(obs.size()), d + 1);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        rows(i, 0) = obs[i].x;
        for (Eigen::Index j = 0; j < d; ++j) rows(i, j + 1) = obs[i].z[j];
    }
    return rows;
}

SamplerPtr fit_sampler(const std::string& path, const std::string& kind) {
    const Eigen::MatrixXd rows = unlabeled_rows(path);
    if (kind == "gaussian") return std::make_shared<FittedGaussianSampler>(fit_gaussian_sampler(rows));
    if (kind == "logistic") return std::make_shared<BernoulliLogisticSampler>(fit_logistic_sampler(rows));
    throw DomainError("unknown sampler kind '" + kind + "'");
}

// --- simulate

struct SimulateArgs {
    std::string spec_path;
    std::string format = "csv";
    std::string out;
    int parallelism = 0;
};

int run_simulate(const SimulateArgs& a) {
    ExperimentSpec spec = experiment_spec_from_json(read_json_file(a.spec_path));
    if (a.parallelism > 0) spec.parallelism = a.parallelism;
    const ReportFormat fmt = a.format == "json" ? ReportFormat::json : ReportFormat::csv;
    const MetricsTable table = run_experiment(spec);
    if (a.out.empty() || a.out == "-")
        std::cout << emit_report(table, fmt);
    else
        write_report(table, fmt, a.out);
    return 0;
}

// --- test

struct TestArgs {
    std::string data = "-";
    std::string config;
    std::string sampler;
    std::string unlabeled;
    std::string sampler_kind = "gaussian";
    std::string log;
};

void log_line(std::ostream& out, long t, double wealth, Decision d) {
    nlohmann::json j{{"t", t}, {"wealth", wealth}, {"decision", to_string(d)}};
    out << j.dump() << '\n';
}

int run_test(const TestArgs& a) {
    TestConfig cfg;
    if (!a.config.empty()) cfg = test_config_from_json(read_json_file(a.config));
    SamplerPtr sampler = a.sampler.empty() ? fit_sampler(a.unlabeled, a.sampler_kind)
                                           : sampler_from_json(read_json_file(a.sampler));

    std::ifstream data_file;
    std::istream& in = open_input(a.data, data_file);
    std::ofstream log_file;
    std::ostream& log = open_output(a.log, log_file);
    RecordReader reader(in, sampler->dim(), true);

    std::vector<Observation> warmup;
    while (static_cast<int>(warmup.size()) < cfg.n_init) {
        auto obs = reader.next();
        if (!obs) break;
        warmup.push_back(std::move(*obs));
    }
    Tester tester(cfg, sampler, RngStream(cfg.seed, 0));
    tester.warm_up(warmup);
    log_line(log, 0, tester.wealth(), tester.decision());
    while (!tester.decided()) {
        auto obs = reader.next();
        if (!obs) break;
        const StepResult r = tester.step(*obs);
        log_line(log, tester.t(), r.wealth, r.decision);
    }
    log.flush();
    std::fprintf(stderr, "%s at t=%ld, wealth %.6g (threshold %.6g)\n",
                 to_string(tester.decision()).c_str(), tester.t(), tester.wealth(),
                 ville_threshold(cfg.alpha));
    return tester.decided() ? kExitRejected : kExitNotRejected;
}

// --- fit-sampler

struct FitArgs {
    std::string data;
    std::string kind = "gaussian";
    std::string out;
};

int run_fit(const FitArgs& a) {
    const SamplerPtr s = fit_sampler(a.data, a.kind);
    std::ofstream file;
    std::ostream& out = open_output(a.out, file);
    out << s->to_json().dump(2) << '\n';
    return 0;
}

// --- bench

int run_bench(int reps) {
    using clock = std::chrono::steady_clock;
    auto per_op = [](clock::time_point start, long ops) {
        return std::chrono::duration<double, std::micro>(clock::now() - start).count() / ops;
    };

    RngStream rng(1, 0);
    MixtureState mix(1000);
    auto start = clock::now();
    for (int i = 0; i < reps; ++i) mix.update({rng.uniform() < 0.5 ? 0.5 : -0.5});
    std::printf("mixture_update (V=1000)      %10.3f us/bet\n", per_op(start, reps));

    SyntheticConfig dc;
    dc.regime = Regime::non_null;
    dc.n = 20 + reps;
    RngStream data_rng(2, 0);
    const Dataset ds = gen_dataset(dc, data_rng);
    const std::span<const Observation> all(ds.observations);

    ModelLadder ladder(19, LadderOptions{});
    start = clock::now();
    ladder.initialize(all.first(20));
    std::printf("ladder warm-up (n=20)        %10.3f us\n", per_op(start, 1));
    start = clock::now();
    for (int i = 0; i < reps; ++i) ladder.online_update(all[20 + i]);
    std::printf("ladder online_update (L=20)  %10.3f us/obs\n", per_op(start, reps));

    const ModelSnapshot snap = ladder.snapshot(0);
    const ScoreFn fn{};
    start = clock::now();
    double acc = 0.0;
    for (int i = 0; i + 10 <= reps; i += 10)
        acc += derandomized_score(snap, all.subspan(20 + i, 10), *ds.true_sampler, 20, fn, rng).w;
    std::printf("derandomized_score (b=10,K=20) %8.3f us/batch\n", per_op(start, std::max(1, reps / 10)));

    Tester tester(TestConfig{}, ds.true_sampler, RngStream(3, 0));
    tester.warm_up(all.first(20));
    start = clock::now();
    long steps = 0;
    for (int i = 0; i < reps && !tester.decided(); ++i, ++steps) tester.step(all[20 + i]);
    std::printf("tester step (defaults)       %10.3f us/obs over %ld steps\n",
                per_op(start, std::max(1L, steps)), steps);
    return acc == acc ? 0 : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential conditional independence testing by betting"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run a seeded experiment and write a metrics report");
    simulate->add_option("spec", sim.spec_path, "Experiment spec (JSON)")->required()->check(CLI::ExistingFile);
    simulate->add_option("--format", sim.format, "Report format")->check(CLI::IsMember({"csv", "json"}));
    simulate->add_option("-o,--out", sim.out, "Output path (default stdout)");
    simulate->add_option("-j,--parallelism", sim.parallelism, "Override worker count");

    TestArgs ta;
    auto* test = app.add_subcommand("test", "Run the sequential test on a record stream");
    test->add_option("data", ta.data, "NDJSON records {x, y, z}; '-' for stdin");
    test->add_option("-c,--config", ta.config, "Test config (JSON); defaults if omitted");
    auto* sampler_opt = test->add_option("-s,--sampler", ta.sampler, "Sampler file from fit-sampler");
    auto* unlabeled_opt =
        test->add_option("-u,--unlabeled", ta.unlabeled, "Unlabeled NDJSON to fit the sampler from");
    sampler_opt->excludes(unlabeled_opt);
    test->add_option("--sampler-kind", ta.sampler_kind, "Sampler family for --unlabeled")
        ->check(CLI::IsMember({"gaussian", "logistic"}));
    test->add_option("-l,--log", ta.log, "Wealth log path (default stdout)");

    FitArgs fa;
    auto* fit = app.add_subcommand("fit-sampler", "Fit P(X|Z) from unlabeled records");
    fit->add_option("data", fa.data, "NDJSON records {x, z}; '-' for stdin")->required();
    fit->add_option("-k,--kind", fa.kind, "Sampler family")->check(CLI::IsMember({"gaussian", "logistic"}));
    fit->add_option("-o,--out", fa.out, "Sampler file (default stdout)");

    int reps = 2000;
    auto* bench = app.add_subcommand("bench", "Time the martingale and lasso inner loops");
    bench->add_option("-n,--reps", reps, "Iterations per loop")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitError;
    }

    try {
        if (*simulate) return run_simulate(sim);
        if (*test) {
            if (ta.sampler.empty() && ta.unlabeled.empty())
                throw PreconditionError("test needs --sampler or --unlabeled");
            return run_test(ta);
        }
        if (*fit) return run_fit(fa);
        if (*bench) return run_bench(reps);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
    return kExitError;
}
