#include "ecrt/martingale.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ecrt {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_factor(double v, double w) {
    const double a = v * w;
    return a <= -1.0 ? kNegInf : std::log1p(a);
}

}  // namespace

// --- MixtureState

MixtureState::MixtureState(int grid_size) : log_products_(grid_size, 0.0) {
    if (grid_size < 1) throw DomainError("grid_size must be positive");
}

void MixtureState::update(BettingScore w) {
    if (!(std::abs(w.w) <= 1.0)) throw DomainError("betting score outside [-1, 1]");
    const int v_count = grid_size();
    for (int i = 0; i < v_count; ++i) {
        double& lp = log_products_[i];
        if (lp == kNegInf) continue;
        lp += log_factor(grid_point(i), w.w);
    }
    history_.push_back(w.w);
}

double MixtureState::wealth() const {
    double mx = kNegInf;
    for (double lp : log_products_) mx = std::max(mx, lp);
    if (mx == kNegInf) return 0.0;
    double acc = 0.0;
    for (double lp : log_products_) acc += std::exp(lp - mx);
    return std::exp(mx + std::log(acc / static_cast<double>(log_products_.size())));
}

double MixtureState::max_product() const {
    double mx = kNegInf;
    for (double lp : log_products_) mx = std::max(mx, lp);
    return std::exp(mx);
}

double MixtureState::base_wealth(double v) const {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("betting fraction must lie in [0, 1]");
    const int v_count = grid_size();
    const double pos = v * v_count - 0.5;
    const int i = static_cast<int>(std::lround(pos));
    if (i >= 0 && i < v_count && grid_point(i) == v) return std::exp(log_products_[i]);
    double lp = 0.0;
    for (double w : history_) {
        lp += log_factor(v, w);
        if (lp == kNegInf) return 0.0;
    }
    return std::exp(lp);
}

MixtureState MixtureState::from_raw(std::vector<double> log_products, std::vector<double> history) {
    MixtureState m(static_cast<int>(log_products.size()));
    m.log_products_ = std::move(log_products);
    m.history_ = std::move(history);
    return m;
}

MixtureState mixture_update(MixtureState state, BettingScore w) {
    state.update(w);
    return state;
}

double base_wealth(const MixtureState& state, double v) { return state.base_wealth(v); }

// --- Tester

LadderOptions ladder_options_for(const TestConfig& cfg) {
    LadderOptions o;
    o.holdout_len = LadderOptions::default_holdout(cfg.max_batch());
    return o;
}

Tester::Tester(TestConfig cfg, SamplerPtr sampler, RngStream rng)
    : Tester(cfg, std::move(sampler), rng, ladder_options_for(cfg)) {}

Tester::Tester(TestConfig cfg, SamplerPtr sampler, RngStream rng, LadderOptions model_opts)
    : cfg_(std::move(cfg)),
      sampler_(std::move(sampler)),
      rng_(rng),
      score_fn_{cfg_.score_kind, cfg_.score_magnitude},
      ladder_(sampler_ ? sampler_->dim() : 0, model_opts) {
    cfg_.validate();
    if (!sampler_) throw PreconditionError("tester needs a sampler");
    for (int b : cfg_.batch_sizes) tracks_.push_back(BatchTrack{b, MixtureState(cfg_.grid_size), {}, {}});
    trajectory_.push_back({0, 1.0});
}

void Tester::warm_up(std::span<const Observation> warmup) {
    if (ladder_.initialized()) throw PreconditionError("tester already warmed up");
    if (warmup.size() < static_cast<std::size_t>(cfg_.n_init))
        throw InsufficientWarmup("warm-up needs " + std::to_string(cfg_.n_init) +
                                 " observations, got " + std::to_string(warmup.size()));
    ladder_.initialize(warmup);
    const ModelSnapshot first = ladder_.snapshot(0);
    for (auto& tr : tracks_) tr.frozen_model = first;
}

double Tester::ensemble_wealth() const {
    double s = 0.0;
    for (const auto& tr : tracks_) s += tr.mixture.wealth();
    return s / static_cast<double>(tracks_.size());
}

StepResult Tester::step(const Observation& obs) {
    if (decided_) throw PreconditionError("tester already rejected; no further steps allowed");
    if (!ladder_.initialized()) throw PreconditionError("step before warm-up");
    if (obs.z.size() != sampler_->dim()) throw DimensionMismatch("observation dimension mismatch");
    ++t_;

    std::vector<std::size_t> completed;
    for (std::size_t i = 0; i < tracks_.size(); ++i) {
        BatchTrack& tr = tracks_[i];
        tr.pending.push_back(obs);
        if (static_cast<int>(tr.pending.size()) < tr.b) continue;
        const BettingScore w = derandomized_score(tr.frozen_model, tr.pending, *sampler_,
                                                  cfg_.k_derandomize, score_fn_, rng_);
        tr.mixture.update(w);
        tr.pending.clear();
        completed.push_back(i);
    }
    if (!completed.empty()) wealth_ = ensemble_wealth();
    trajectory_.push_back({t_, wealth_});

    if (decide(wealth_, cfg_.alpha) == Decision::rejected) {
        decided_ = true;
        return {wealth_, Decision::rejected};
    }
    ladder_.online_update(obs);
    // The next batch of each completed track is scored by a model that has
    // seen exactly the samples before it.
    if (!completed.empty()) {
        const ModelSnapshot snap = ladder_.snapshot(t_);
        for (std::size_t i : completed) tracks_[i].frozen_model = snap;
    }
    return {wealth_, Decision::not_rejected};
}

TestOutcome Tester::outcome() const {
    return TestOutcome{decision(), t_, wealth_, trajectory_};
}

// --- checkpoint

namespace {

using nlohmann::json;

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json obs_json(const Observation& o) { return {o.x, o.y, o.z}; }
Observation obs_from(const json& j) {
    return Observation{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<std::vector<double>>()};
}

json obs_list(const auto& list) {
    json a = json::array();
    for (const auto& o : list) a.push_back(obs_json(o));
    return a;
}

template <class C>
C obs_list_from(const json& j) {
    C out;
    for (const auto& e : j) out.push_back(obs_from(e));
    return out;
}

json gram_json(const GramStats& g) {
    const Eigen::MatrixXd& m = g.sum_ff();
    return {{"n", g.count()},
            {"sum_f", vec_json(g.sum_f())},
            {"sum_y", g.sum_y()},
            {"sum_ff", std::vector<double>(m.data(), m.data() + m.size())},
            {"sum_fy", vec_json(g.sum_fy())},
            {"sum_yy", g.sum_yy()}};
}

GramStats gram_from(const json& j) {
    Eigen::VectorXd sf = vec_from(j.at("sum_f"));
    const Eigen::Index p = sf.size();
    const auto flat = j.at("sum_ff").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != p * p) throw CheckpointError("gram size mismatch");
    GramStats g(p);
    g.restore(j.at("n").get<double>(), std::move(sf), j.at("sum_y").get<double>(),
              Eigen::Map<const Eigen::MatrixXd>(flat.data(), p, p), vec_from(j.at("sum_fy")),
              j.at("sum_yy").get<double>());
    return g;
}

json log_products_json(const std::vector<double>& lp) {
    json a = json::array();
    for (double v : lp) a.push_back(v == kNegInf ? json(nullptr) : json(v));
    return a;
}

std::vector<double> log_products_from(const json& j) {
    std::vector<double> out;
    for (const auto& e : j) out.push_back(e.is_null() ? kNegInf : e.get<double>());
    return out;
}

json snapshot_json(const ModelSnapshot& s) {
    return {{"beta", s.beta()}, {"intercept", s.intercept()}, {"frozen_at", s.frozen_at()}};
}

ModelSnapshot snapshot_from(const json& j) {
    return ModelSnapshot(j.at("beta").get<std::vector<double>>(), j.at("intercept").get<double>(),
                         j.at("frozen_at").get<long>());
}

json ladder_opts_json(const LadderOptions& o) {
    return {{"num_models", o.num_models},         {"eta_lo", o.eta_lo},
            {"eta_hi", o.eta_hi},                 {"holdout_len", o.holdout_len},
            {"sweeps_per_step", o.sweeps_per_step}, {"warmup_max_sweeps", o.warmup_max_sweeps},
            {"warmup_tol", o.warmup_tol},         {"max_sweeps_per_step", o.max_sweeps_per_step},
            {"step_tol", o.step_tol},         {"max_window", o.max_window},
            {"standardize", o.standardize}};
}

LadderOptions ladder_opts_from(const json& j) {
    LadderOptions o;
    o.num_models = j.at("num_models");
    o.eta_lo = j.at("eta_lo");
    o.eta_hi = j.at("eta_hi");
    o.holdout_len = j.at("holdout_len");
    o.sweeps_per_step = j.at("sweeps_per_step");
    o.warmup_max_sweeps = j.at("warmup_max_sweeps");
    o.warmup_tol = j.at("warmup_tol");
    o.max_sweeps_per_step = j.at("max_sweeps_per_step");
    o.step_tol = j.at("step_tol");
    o.max_window = j.at("max_window");
    o.standardize = j.at("standardize");
    return o;
}

}  // namespace

std::string Tester::checkpoint() const {
    const auto raw = ladder_.raw();
    json rungs = json::array();
    for (const auto& b : raw.rung_betas) rungs.push_back(vec_json(b));
    json ladder = {{"etas", raw.etas},
                   {"rung_betas", rungs},
                   {"running_beta", vec_json(raw.running_beta)},
                   {"penalty_factor", vec_json(raw.penalty_factor)},
                   {"full", gram_json(raw.full)},
                   {"prefix", gram_json(raw.prefix)},
                   {"holdout", obs_list(raw.holdout)},
                   {"full_window", obs_list(raw.full_window)},
                   {"prefix_window", obs_list(raw.prefix_window)},
                   {"selected", raw.selected},
                   {"n_seen", raw.n_seen},
                   {"initialized", raw.initialized}};
    json tracks = json::array();
    for (const auto& tr : tracks_)
        tracks.push_back({{"b", tr.b},
                          {"log_products", log_products_json(tr.mixture.log_products())},
                          {"history", tr.mixture.history()},
                          {"pending", obs_list(tr.pending)},
                          {"frozen_model", snapshot_json(tr.frozen_model)}});
    json traj = json::array();
    for (const auto& p : trajectory_) traj.push_back({p.t, p.wealth});
    const auto& rs = rng_.state();
    json body = {{"config", to_json(cfg_)},
                 {"config_hash", config_hash(cfg_)},
                 {"sampler", sampler_->to_json()},
                 {"rng", {{"s", rs.s}, {"has_spare", rs.has_spare}, {"spare", rs.spare}}},
                 {"model_options", ladder_opts_json(ladder_.options())},
                 {"ladder", ladder},
                 {"tracks", tracks},
                 {"t", t_},
                 {"wealth", wealth_},
                 {"decided", decided_},
                 {"trajectory", traj}};
    const std::string body_text = body.dump();
    json doc = {{"format", "ecrt-checkpoint"},
                {"version", kCheckpointVersion},
                {"checksum", content_hash(body_text)},
                {"body", body}};
    return doc.dump();
}

Tester Tester::restore(const std::string& blob) {
    json doc;
    try {
        doc = json::parse(blob);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != "ecrt-checkpoint")
        throw CheckpointError("corrupt checkpoint: not a checkpoint document");
    if (doc.value("version", -1) != kCheckpointVersion)
        throw CheckpointError("checkpoint version mismatch");
    try {
        const json& body = doc.at("body");
        if (content_hash(body.dump()) != doc.at("checksum").get<std::string>())
            throw CheckpointError("corrupt checkpoint: checksum mismatch");
        const TestConfig cfg = test_config_from_json(body.at("config"));
        if (config_hash(cfg) != body.at("config_hash").get<std::string>())
            throw CheckpointError("corrupt checkpoint: config hash mismatch");

        RngStream::State rs;
        rs.s = body.at("rng").at("s").get<std::array<std::uint64_t, 4>>();
        rs.has_spare = body.at("rng").at("has_spare");
        rs.spare = body.at("rng").at("spare");

        const LadderOptions opts = ladder_opts_from(body.at("model_options"));
        Tester tester(cfg, sampler_from_json(body.at("sampler")), RngStream(rs), opts);

        const json& lj = body.at("ladder");
        ModelLadder::Raw raw;
        raw.etas = lj.at("etas").get<std::vector<double>>();
        for (const auto& b : lj.at("rung_betas")) raw.rung_betas.push_back(vec_from(b));
        raw.running_beta = vec_from(lj.at("running_beta"));
        raw.penalty_factor = vec_from(lj.at("penalty_factor"));
        raw.full = gram_from(lj.at("full"));
        raw.prefix = gram_from(lj.at("prefix"));
        raw.holdout = obs_list_from<std::deque<Observation>>(lj.at("holdout"));
        raw.full_window = obs_list_from<std::deque<Observation>>(lj.at("full_window"));
        raw.prefix_window = obs_list_from<std::deque<Observation>>(lj.at("prefix_window"));
        raw.selected = lj.at("selected");
        raw.n_seen = lj.at("n_seen");
        raw.initialized = lj.at("initialized");
        tester.ladder_ = ModelLadder::from_raw(tester.sampler_->dim(), opts, std::move(raw));

        const json& tj = body.at("tracks");
        if (tj.size() != tester.tracks_.size()) throw CheckpointError("corrupt checkpoint: track count");
        for (std::size_t i = 0; i < tj.size(); ++i) {
            BatchTrack& tr = tester.tracks_[i];
            tr.b = tj[i].at("b");
            tr.mixture = MixtureState::from_raw(log_products_from(tj[i].at("log_products")),
                                                tj[i].at("history").get<std::vector<double>>());
            tr.pending = obs_list_from<std::vector<Observation>>(tj[i].at("pending"));
            tr.frozen_model = snapshot_from(tj[i].at("frozen_model"));
        }
        tester.t_ = body.at("t");
        tester.wealth_ = body.at("wealth");
        tester.decided_ = body.at("decided");
        tester.trajectory_.clear();
        for (const auto& p : body.at("trajectory"))
            tester.trajectory_.push_back({p.at(0).get<long>(), p.at(1).get<double>()});
        return tester;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
    }
}

// --- driver

TestOutcome run_sequential(const ObservationSource& stream, const TestConfig& cfg,
                           SamplerPtr sampler, RngStream rng) {
    return run_sequential(stream, cfg, std::move(sampler), rng, ladder_options_for(cfg));
}

TestOutcome run_sequential(const ObservationSource& stream, const TestConfig& cfg,
                           SamplerPtr sampler, RngStream rng, const LadderOptions& model_opts) {
    Tester tester(cfg, std::move(sampler), rng, model_opts);
    std::vector<Observation> warmup;
    warmup.reserve(cfg.n_init);
    while (warmup.size() < static_cast<std::size_t>(cfg.n_init)) {
        auto obs = stream();
        if (!obs)
            throw InsufficientWarmup("stream ended after " + std::to_string(warmup.size()) +
                                     " of " + std::to_string(cfg.n_init) + " warm-up observations");
        warmup.push_back(std::move(*obs));
    }
    tester.warm_up(warmup);
    while (!tester.decided()) {
        auto obs = stream();
        if (!obs) break;
        tester.step(*obs);
    }
    return tester.outcome();
}

}  // namespace ecrt
