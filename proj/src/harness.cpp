#include "ecrt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "ecrt/offline.hpp"
#include "ecrt/records.hpp"

namespace ecrt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::pair<Scenario, const char*> kScenarioNames[] = {
    {Scenario::type1, "type1"},
    {Scenario::power, "power"},
    {Scenario::stopping_hist, "stopping_hist"},
    {Scenario::ablate_k, "ablate_k"},
    {Scenario::ablate_batches, "ablate_batches"},
    {Scenario::dim_sweep, "dim_sweep"},
    {Scenario::rho_sweep, "rho_sweep"},
    {Scenario::misspec_sweep, "misspec_sweep"},
    {Scenario::peeking_hazard, "peeking_hazard"},
};

std::string fmt6(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double round6(double v) { return std::isnan(v) ? v : std::stod(fmt6(v)); }

std::string param_label(const char* name, double v) { return std::string(name) + "=" + fmt6(v); }

}  // namespace

std::string to_string(Scenario s) {
    for (const auto& [k, name] : kScenarioNames)
        if (k == s) return name;
    return "unknown";
}

Scenario scenario_from_string(const std::string& s) {
    for (const auto& [k, name] : kScenarioNames)
        if (s == name) return k;
    throw DomainError("unknown scenario '" + s + "'");
}

void ExperimentSpec::validate() const {
    if (trials < 1) throw DomainError("trials must be >= 1");
    if (horizon < 1) throw DomainError("horizon must be >= 1");
    if (parallelism < 1) throw DomainError("parallelism must be >= 1");
    if (offline_m < 1) throw DomainError("offline_m must be >= 1");
    test.validate();
    data.validate();
    long prev = 0;
    for (long c : checkpoints) {
        if (c <= prev) throw DomainError("checkpoints must be positive and strictly increasing");
        if (c > horizon) throw DomainError("checkpoint beyond horizon");
        prev = c;
    }
}

std::vector<long> ExperimentSpec::resolved_checkpoints() const {
    if (!checkpoints.empty()) return checkpoints;
    std::vector<long> out;
    for (long t = 100; t <= horizon; t += 100) out.push_back(t);
    if (out.empty() || out.back() != horizon) out.push_back(horizon);
    return out;
}

nlohmann::json to_json(const ExperimentSpec& spec) {
    nlohmann::json data = {{"regime", to_string(spec.data.regime)},
                           {"d", spec.data.d},
                           {"signal_amp", spec.data.signal_amp},
                           {"rho", spec.data.rho},
                           {"sigma_tilde", spec.data.sigma_tilde}};
    if (spec.data.coefficient_seed) data["coefficient_seed"] = *spec.data.coefficient_seed;
    return {{"scenario", to_string(spec.scenario)},
            {"trials", spec.trials},
            {"horizon", spec.horizon},
            {"checkpoints", spec.checkpoints},
            {"test", to_json(spec.test)},
            {"data", data},
            {"parallelism", spec.parallelism},
            {"seed", spec.seed},
            {"sweep", spec.sweep},
            {"offline_m", spec.offline_m}};
}

ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
    ExperimentSpec s;
    try {
        s.scenario = scenario_from_string(j.at("scenario").get<std::string>());
        s.trials = j.value("trials", s.trials);
        s.horizon = j.value("horizon", s.horizon);
        s.checkpoints = j.value("checkpoints", s.checkpoints);
        if (j.contains("test")) s.test = test_config_from_json(j.at("test"));
        if (j.contains("data")) {
            const auto& d = j.at("data");
            if (d.contains("regime")) s.data.regime = regime_from_string(d.at("regime"));
            s.data.d = d.value("d", s.data.d);
            s.data.signal_amp = d.value("signal_amp", s.data.signal_amp);
            s.data.rho = d.value("rho", s.data.rho);
            s.data.sigma_tilde = d.value("sigma_tilde", s.data.sigma_tilde);
            if (d.contains("coefficient_seed"))
                s.data.coefficient_seed = d.at("coefficient_seed").get<std::uint64_t>();
        }
        s.parallelism = j.value("parallelism", s.parallelism);
        s.seed = j.value("seed", s.seed);
        s.sweep = j.value("sweep", s.sweep);
        s.offline_m = j.value("offline_m", s.offline_m);
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("bad experiment spec: ") + e.what());
    }
    s.validate();
    return s;
}

std::vector<Variant> expand_variants(const ExperimentSpec& spec) {
    std::vector<Variant> out;
    auto base = [&](Regime regime) {
        Variant v{"ecrt", 0.0, spec.test, spec.data, false};
        v.data.regime = regime;
        return v;
    };
    auto sweep_or = [&](std::vector<double> dflt) { return spec.sweep.empty() ? dflt : spec.sweep; };

    switch (spec.scenario) {
        case Scenario::type1:
            out.push_back(base(Regime::null));
            break;
        case Scenario::power:
        case Scenario::stopping_hist:
            out.push_back(base(Regime::non_null));
            break;
        // Ablations are power studies.
        case Scenario::ablate_k:
            for (double k : sweep_or({1, 20})) {
                Variant v = base(Regime::non_null);
                v.label = param_label("K", k);
                v.param = k;
                v.test.k_derandomize = static_cast<int>(k);
                out.push_back(v);
            }
            break;
        case Scenario::ablate_batches: {
            for (int b : spec.test.batch_sizes) {
                Variant v = base(Regime::non_null);
                v.label = param_label("b", b);
                v.param = b;
                v.test.batch_sizes = {b};
                out.push_back(v);
            }
            Variant ens = base(Regime::non_null);
            ens.label = "ensemble";
            out.push_back(ens);
            break;
        }
        case Scenario::dim_sweep:
            for (double d : sweep_or({5, 10, 19, 50})) {
                Variant v = base(spec.data.regime);
                v.label = param_label("d", d);
                v.param = d;
                v.data.d = static_cast<int>(d);
                out.push_back(v);
            }
            break;
        case Scenario::rho_sweep:
            for (double r : sweep_or({0.0, 0.25, 0.5, 0.75})) {
                Variant v = base(spec.data.regime);
                v.label = param_label("rho", r);
                v.param = r;
                v.data.rho = r;
                out.push_back(v);
            }
            break;
        case Scenario::misspec_sweep:
            for (double s : sweep_or({0.1, 0.5, 1.0, 2.0, 3.0})) {
                Variant v = base(spec.data.regime);
                v.label = param_label("sigma_tilde", s);
                v.param = s;
                v.data.sigma_tilde = s;
                out.push_back(v);
            }
            break;
        case Scenario::peeking_hazard: {
            out.push_back(base(Regime::null));
            Variant peek = base(Regime::null);
            peek.label = "crt_peek";
            peek.offline_peeking = true;
            out.push_back(peek);
            break;
        }
    }
    for (auto& v : out) {
        v.test.validate();
        v.data.validate();
    }
    return out;
}

TrialResult run_trial(const ExperimentSpec& spec, const Variant& variant, int trial_index) {
    const auto checkpoints = spec.resolved_checkpoints();
    const auto idx = static_cast<std::uint64_t>(trial_index);
    RngStream data_rng(spec.seed, 2 * idx);
    RngStream test_rng(spec.seed, 2 * idx + 1);

    SyntheticConfig dcfg = variant.data;
    dcfg.n = variant.test.n_init + spec.horizon;
    const Dataset ds = gen_dataset(dcfg, data_rng);
    SamplerPtr sampler = ds.true_sampler;
    if (dcfg.sigma_tilde != 1.0)
        sampler = std::make_shared<GaussianLinearSampler>(
            misspecified_sampler(*ds.true_sampler, dcfg.sigma_tilde));

    TrialResult res;
    if (variant.offline_peeking) {
        std::vector<std::size_t> looks(checkpoints.begin(), checkpoints.end());
        const auto pvals = crt_prefix_pvalues(ds.observations, looks, LassoCvTrainer{}, *sampler,
                                              spec.offline_m, test_rng);
        res.stop_time = static_cast<long>(dcfg.n);
        bool rejected = false;
        for (std::size_t c = 0; c < checkpoints.size(); ++c) {
            if (!rejected && pvals[c] <= variant.test.alpha) {
                rejected = true;
                res.stop_time = checkpoints[c];
            }
            res.rejected_by.push_back(rejected);
            res.wealth_at.push_back(kNaN);
        }
        res.decision = rejected ? Decision::rejected : Decision::not_rejected;
        res.final_wealth = kNaN;
        return res;
    }

    const TestOutcome out =
        run_sequential(source_from(ds.observations), variant.test, sampler, test_rng);
    res.decision = out.decision;
    res.stop_time = out.stop_time;
    res.final_wealth = out.final_wealth;
    for (long c : checkpoints) {
        const long at = std::min(c, out.stop_time);
        res.wealth_at.push_back(out.trajectory.at(static_cast<std::size_t>(at)).wealth);
        res.rejected_by.push_back(out.decision == Decision::rejected && out.stop_time <= c);
    }
    return res;
}

std::vector<VariantTrials> run_trials(const ExperimentSpec& spec) {
    spec.validate();
    const auto variants = expand_variants(spec);
    std::vector<VariantTrials> runs;
    for (const auto& v : variants) runs.push_back({v, std::vector<TrialResult>(spec.trials)});

    const std::size_t jobs = variants.size() * static_cast<std::size_t>(spec.trials);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t job = next.fetch_add(1);
            if (job >= jobs) return;
            const std::size_t vi = job / spec.trials;
            const int ti = static_cast<int>(job % spec.trials);
            try {
                runs[vi].trials[ti] = run_trial(spec, runs[vi].variant, ti);
            } catch (const std::exception& e) {
                std::lock_guard lock(failure_mu);
                if (!failure)
                    failure = std::make_exception_ptr(Error("trial " + std::to_string(ti) + " (" +
                                                            runs[vi].variant.label + "): " + e.what()));
                next.store(jobs);
            }
        }
    };
    const int threads = std::min<int>(spec.parallelism, static_cast<int>(jobs));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return runs;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) return kNaN;
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

MetricsTable aggregate(const ExperimentSpec& spec, const std::vector<VariantTrials>& runs) {
    const auto checkpoints = spec.resolved_checkpoints();
    MetricsTable table;
    table.scenario = to_string(spec.scenario);
    // Worker count does not affect results, so it stays out of the hash.
    nlohmann::json hashed = to_json(spec);
    hashed.erase("parallelism");
    table.config_hash = content_hash(hashed.dump());
    table.seed = spec.seed;
    for (const auto& run : runs) {
        for (std::size_t c = 0; c < checkpoints.size(); ++c) {
            MetricsRow row;
            row.variant = run.variant.label;
            row.param = run.variant.param;
            row.t = checkpoints[c];
            row.trials = static_cast<int>(run.trials.size());
            double rejected = 0.0, wealth_sum = 0.0;
            std::vector<double> stops;
            for (const auto& tr : run.trials) {
                if (tr.rejected_by[c]) {
                    rejected += 1.0;
                    stops.push_back(static_cast<double>(tr.stop_time));
                }
                wealth_sum += tr.wealth_at[c];
            }
            row.rejection_rate = rejected / row.trials;
            row.mean_wealth = wealth_sum / row.trials;
            row.stop_q10 = quantile(stops, 0.1);
            row.stop_q50 = quantile(stops, 0.5);
            row.stop_q90 = quantile(stops, 0.9);
            table.rows.push_back(row);
        }
    }
    return table;
}

MetricsTable run_experiment(const ExperimentSpec& spec) { return aggregate(spec, run_trials(spec)); }

const MetricsRow* MetricsTable::find(const std::string& variant, long t) const {
    for (const auto& r : rows)
        if (r.variant == variant && r.t == t) return &r;
    return nullptr;
}

// --- reports

namespace {

const char* kCsvHeader =
    "variant,param,t,rejection_rate,mean_wealth,stop_q10,stop_q50,stop_q90,trials";

nlohmann::json num_json(double v) {
    return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(round6(v));
}

}  // namespace

std::string emit_report(const MetricsTable& table, ReportFormat format) {
    if (table.rows.empty()) throw PreconditionError("cannot emit an empty metrics table");
    std::ostringstream out;
    if (format == ReportFormat::csv) {
        out << "# scenario=" << table.scenario << " config_hash=" << table.config_hash
            << " seed=" << table.seed << '\n';
        out << kCsvHeader << '\n';
        for (const auto& r : table.rows) {
            out << r.variant << ',' << fmt6(r.param) << ',' << r.t << ',' << fmt6(r.rejection_rate)
                << ',' << fmt6(r.mean_wealth) << ',' << fmt6(r.stop_q10) << ','
                << fmt6(r.stop_q50) << ',' << fmt6(r.stop_q90) << ',' << r.trials << '\n';
        }
        return out.str();
    }
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json row;
        row["variant"] = r.variant;
        row["param"] = num_json(r.param);
        row["t"] = r.t;
        row["rejection_rate"] = num_json(r.rejection_rate);
        row["mean_wealth"] = num_json(r.mean_wealth);
        row["stop_q10"] = num_json(r.stop_q10);
        row["stop_q50"] = num_json(r.stop_q50);
        row["stop_q90"] = num_json(r.stop_q90);
        row["trials"] = r.trials;
        rows.push_back(row);
    }
    nlohmann::json doc;
    doc["scenario"] = table.scenario;
    doc["config_hash"] = table.config_hash;
    doc["seed"] = table.seed;
    doc["rows"] = rows;
    return doc.dump(2) + "\n";
}

void write_report(const MetricsTable& table, ReportFormat format, const std::string& path) {
    const std::string text = emit_report(table, format);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw Error("write to '" + path + "' failed");
}

MetricsTable parse_csv_report(const std::string& text) {
    MetricsTable table;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    auto num = [](const std::string& s) {
        return s == "nan" ? kNaN : std::stod(s);
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream meta(line.substr(1));
            std::string kv;
            while (meta >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
                if (key == "scenario") table.scenario = val;
                if (key == "config_hash") table.config_hash = val;
                if (key == "seed") table.seed = std::stoull(val);
            }
            continue;
        }
        if (!header_seen) {
            if (line != kCsvHeader) throw Error("unexpected CSV header");
            header_seen = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 9) throw Error("malformed CSV row: " + line);
        MetricsRow r;
        r.variant = cells[0];
        r.param = num(cells[1]);
        r.t = std::stol(cells[2]);
        r.rejection_rate = num(cells[3]);
        r.mean_wealth = num(cells[4]);
        r.stop_q10 = num(cells[5]);
        r.stop_q50 = num(cells[6]);
        r.stop_q90 = num(cells[7]);
        r.trials = std::stoi(cells[8]);
        table.rows.push_back(r);
    }
    return table;
}

}  // namespace ecrt
