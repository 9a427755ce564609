#include "ecrt/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ecrt/sampler.hpp"

namespace ecrt {

Eigen::VectorXd features(double x, std::span<const double> z) {
    Eigen::VectorXd f(static_cast<Eigen::Index>(z.size()) + 1);
    f(0) = x;
    for (std::size_t j = 0; j < z.size(); ++j) f(static_cast<Eigen::Index>(j) + 1) = z[j];
    return f;
}

// --- GramStats

GramStats::GramStats(Eigen::Index p)
    : sum_f_(Eigen::VectorXd::Zero(p)),
      sum_ff_(Eigen::MatrixXd::Zero(p, p)),
      sum_fy_(Eigen::VectorXd::Zero(p)) {}

void GramStats::add(const Eigen::VectorXd& f, double y, double weight) {
    n_ += weight;
    sum_f_ += weight * f;
    sum_y_ += weight * y;
    sum_ff_.noalias() += weight * f * f.transpose();
    sum_fy_ += (weight * y) * f;
    sum_yy_ += weight * y * y;
}

void GramStats::add(const Observation& obs, double weight) {
    add(features(obs.x, obs.z), obs.y, weight);
}

void GramStats::add_rows(const Eigen::MatrixXd& f, const Eigen::VectorXd& y) {
    if (f.cols() != dim() || f.rows() != y.size()) throw DimensionMismatch("add_rows shape mismatch");
    n_ += static_cast<double>(f.rows());
    sum_f_ += f.colwise().sum().transpose();
    sum_y_ += y.sum();
    sum_ff_.noalias() += f.transpose() * f;
    sum_fy_.noalias() += f.transpose() * y;
    sum_yy_ += y.squaredNorm();
}

void GramStats::merge(const GramStats& other, double weight) {
    if (other.dim() != dim()) throw DimensionMismatch("merge of stats with different dimensions");
    n_ += weight * other.n_;
    sum_f_ += weight * other.sum_f_;
    sum_y_ += weight * other.sum_y_;
    sum_ff_ += weight * other.sum_ff_;
    sum_fy_ += weight * other.sum_fy_;
    sum_yy_ += weight * other.sum_yy_;
}

void GramStats::restore(double n, Eigen::VectorXd sum_f, double sum_y, Eigen::MatrixXd sum_ff,
                        Eigen::VectorXd sum_fy, double sum_yy) {
    n_ = n;
    sum_f_ = std::move(sum_f);
    sum_y_ = sum_y;
    sum_ff_ = std::move(sum_ff);
    sum_fy_ = std::move(sum_fy);
    sum_yy_ = sum_yy;
}

// --- LassoProblem

LassoProblem LassoProblem::from(const GramStats& s, const Eigen::VectorXd& penalty_factor) {
    LassoProblem p;
    const double n = s.count();
    if (n <= 0) throw PreconditionError("lasso problem over an empty window");
    p.mean_f = s.sum_f() / n;
    p.mean_y = s.sum_y() / n;
    p.cov = s.sum_ff() / n - p.mean_f * p.mean_f.transpose();
    p.xcov = s.sum_fy() / n - p.mean_y * p.mean_f;
    p.var_y = std::max(0.0, s.sum_yy() / n - p.mean_y * p.mean_y);
    p.penalty_factor = penalty_factor.size() == s.dim()
                           ? penalty_factor
                           : Eigen::VectorXd::Ones(s.dim());
    return p;
}

double LassoProblem::objective(const Eigen::VectorXd& beta, double eta) const {
    const double smooth = beta.dot(cov * beta) - 2.0 * xcov.dot(beta) + var_y;
    return smooth + eta * (penalty_factor.array() * beta.array().abs()).sum();
}

Eigen::VectorXd LassoProblem::smooth_gradient(const Eigen::VectorXd& beta) const {
    return 2.0 * (cov * beta - xcov);
}

namespace {

// One cyclic pass; cb tracks cov * beta.
void sweep_once(const LassoProblem& prob, Eigen::VectorXd& beta, Eigen::VectorXd& cb, double eta) {
    const Eigen::Index p = beta.size();
    for (Eigen::Index j = 0; j < p; ++j) {
        const double cjj = prob.cov(j, j);
        double next = 0.0;
        if (cjj > 1e-14) {
            // Minimizer of cjj b^2 - 2 r b + eta_j |b|.
            const double r = prob.xcov(j) - cb(j) + cjj * beta(j);
            const double thr = 0.5 * eta * prob.penalty_factor(j);
            if (r > thr)
                next = (r - thr) / cjj;
            else if (r < -thr)
                next = (r + thr) / cjj;
        }
        const double delta = next - beta(j);
        if (delta != 0.0) {
            cb.noalias() += delta * prob.cov.col(j);
            beta(j) = next;
        }
    }
}

double objective_from(const LassoProblem& prob, const Eigen::VectorXd& beta,
                      const Eigen::VectorXd& cb, double eta) {
    const double smooth = beta.dot(cb) - 2.0 * prob.xcov.dot(beta) + prob.var_y;
    return smooth + eta * (prob.penalty_factor.array() * beta.array().abs()).sum();
}

}  // namespace

double cd_sweeps(const LassoProblem& prob, Eigen::VectorXd& beta, double eta, int sweeps) {
    Eigen::VectorXd cb = prob.cov * beta;
    for (int s = 0; s < sweeps; ++s) sweep_once(prob, beta, cb, eta);
    return prob.objective(beta, eta);
}

double cd_converge(const LassoProblem& prob, Eigen::VectorXd& beta, double eta, int max_sweeps,
                   double tol) {
    Eigen::VectorXd cb = prob.cov * beta;
    double prev = objective_from(prob, beta, cb, eta);
    for (int s = 0; s < max_sweeps; ++s) {
        sweep_once(prob, beta, cb, eta);
        const double cur = objective_from(prob, beta, cb, eta);
        if (std::abs(prev - cur) <= tol * std::max(1.0, std::abs(cur))) return prob.objective(beta, eta);
        prev = cur;
    }
    return prob.objective(beta, eta);
}

double cd_step(const LassoProblem& prob, Eigen::VectorXd& beta, double eta, const StepRule& rule) {
    const int first = std::max(0, std::min(rule.min_sweeps, rule.max_sweeps));
    double obj = cd_sweeps(prob, beta, eta, first);
    if (rule.max_sweeps > first) obj = cd_converge(prob, beta, eta, rule.max_sweeps - first, rule.tol);
    return obj;
}

// --- ModelSnapshot

double ModelSnapshot::predict(double x, std::span<const double> z) const {
    if (beta_.size() != z.size() + 1)
        throw DimensionMismatch("model expects " + std::to_string(beta_.size()) +
                                " features, got " + std::to_string(z.size() + 1));
    double s = intercept_ + beta_[0] * x;
    for (std::size_t j = 0; j < z.size(); ++j) s += beta_[j + 1] * z[j];
    return s;
}

// --- LassoState

LassoState::LassoState(std::size_t d, double eta, std::size_t window)
    : d_(d),
      eta_(eta),
      window_cap_(window),
      stats_(static_cast<Eigen::Index>(d) + 1),
      beta_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d) + 1)) {
    if (!(eta >= 0.0)) throw DomainError("eta must be non-negative");
}

void LassoState::add(const Observation& obs) {
    if (obs.z.size() != d_) throw DimensionMismatch("observation dimension mismatch");
    stats_.add(obs);
    if (window_cap_ > 0) {
        window_.push_back(obs);
        if (window_.size() > window_cap_) {
            stats_.add(window_.front(), -1.0);
            window_.pop_front();
        }
    }
    ++n_seen_;
}

LassoProblem LassoState::problem() const { return LassoProblem::from(stats_, {}); }

std::vector<double> LassoState::cd_sweep(int sweeps) {
    if (stats_.count() <= 0) throw PreconditionError("cd_sweep on an empty window");
    const LassoProblem prob = problem();
    std::vector<double> trace;
    trace.reserve(sweeps);
    for (int s = 0; s < sweeps; ++s) trace.push_back(cd_sweeps(prob, beta_, eta_, 1));
    return trace;
}

double LassoState::step(const Observation& obs, const StepRule& rule) {
    add(obs);
    return cd_step(problem(), beta_, eta_, rule);
}

double LassoState::objective() const { return problem().objective(beta_, eta_); }

double LassoState::intercept() const {
    return stats_.count() > 0 ? problem().intercept(beta_) : 0.0;
}

double LassoState::predict(double x, std::span<const double> z) const {
    return snapshot(0).predict(x, z);
}

ModelSnapshot LassoState::snapshot(long t) const {
    return ModelSnapshot(std::vector<double>(beta_.data(), beta_.data() + beta_.size()),
                         intercept(), t);
}

// --- ModelLadder

ModelLadder::ModelLadder(std::size_t d, LadderOptions opts)
    : d_(d),
      opts_(opts),
      running_beta_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d) + 1)),
      penalty_factor_(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(d) + 1)),
      full_(static_cast<Eigen::Index>(d) + 1),
      prefix_(static_cast<Eigen::Index>(d) + 1) {
    if (opts_.num_models < 1) throw DomainError("ladder needs at least one model");
    if (opts_.holdout_len < 1) throw DomainError("holdout length must be >= 1");
}

std::size_t ModelLadder::target_holdout() const {
    // Until enough data has arrived, half of it is held out.
    return std::min<std::size_t>(opts_.holdout_len, static_cast<std::size_t>(n_seen_ / 2));
}

void ModelLadder::absorb(const Observation& obs) {
    if (obs.z.size() != d_) throw DimensionMismatch("observation dimension mismatch");
    ++n_seen_;
    full_.add(obs);
    if (opts_.max_window > 0) {
        full_window_.push_back(obs);
        if (full_window_.size() > opts_.max_window) {
            full_.add(full_window_.front(), -1.0);
            full_window_.pop_front();
        }
    }
    holdout_.push_back(obs);
    while (holdout_.size() > target_holdout()) {
        prefix_.add(holdout_.front());
        if (opts_.max_window > 0) {
            prefix_window_.push_back(holdout_.front());
            if (prefix_window_.size() > opts_.max_window) {
                prefix_.add(prefix_window_.front(), -1.0);
                prefix_window_.pop_front();
            }
        }
        holdout_.pop_front();
    }
}

LassoProblem ModelLadder::running_problem() const {
    return LassoProblem::from(full_, penalty_factor_);
}

LassoProblem ModelLadder::prefix_problem() const {
    return LassoProblem::from(prefix_, penalty_factor_);
}

void ModelLadder::sweep_rungs(bool converge) {
    if (prefix_.count() <= 0) return;
    const LassoProblem prob = prefix_problem();
    for (std::size_t l = 0; l < etas_.size(); ++l) {
        if (converge)
            cd_converge(prob, rung_betas_[l], etas_[l], opts_.warmup_max_sweeps, opts_.warmup_tol);
        else
            cd_step(prob, rung_betas_[l], etas_[l], opts_.step_rule());
    }
}

void ModelLadder::initialize(std::span<const Observation> warmup) {
    if (warmup.size() < 2) throw PreconditionError("warm-up needs at least two observations");
    for (const auto& obs : warmup) absorb(obs);

    const LassoProblem full = running_problem();
    if (opts_.standardize) {
        for (Eigen::Index j = 0; j < penalty_factor_.size(); ++j)
            penalty_factor_(j) = std::sqrt(std::max(full.cov(j, j), 1e-12));
    }
    // Grid relative to the smallest eta that zeroes every coefficient.
    double scale = 0.0;
    for (Eigen::Index j = 0; j < full.xcov.size(); ++j)
        scale = std::max(scale, std::abs(full.xcov(j)) / penalty_factor_(j));
    if (!(scale > 0.0)) scale = 1.0;
    etas_ = log_spaced(opts_.eta_lo * scale, opts_.eta_hi * scale, opts_.num_models);
    rung_betas_.assign(etas_.size(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d_) + 1));

    sweep_rungs(true);
    selected_ = select_eta();
    const LassoProblem prob = running_problem();
    cd_converge(prob, running_beta_, etas_[selected_], opts_.warmup_max_sweeps, opts_.warmup_tol);
    initialized_ = true;
}

void ModelLadder::online_update(const Observation& obs) {
    if (!initialized_) throw PreconditionError("ladder used before initialization");
    absorb(obs);
    sweep_rungs(false);
    selected_ = select_eta();
    cd_step(running_problem(), running_beta_, etas_[selected_], opts_.step_rule());
}

double ModelLadder::holdout_mse(std::size_t rung) const {
    if (holdout_.empty()) throw PreconditionError("empty holdout");
    const Eigen::VectorXd& beta = rung_betas_.at(rung);
    const double icpt = prefix_.count() > 0 ? prefix_problem().intercept(beta) : 0.0;
    double sse = 0.0;
    for (const auto& obs : holdout_) {
        double pred = icpt + beta(0) * obs.x;
        for (std::size_t j = 0; j < d_; ++j) pred += beta(static_cast<Eigen::Index>(j) + 1) * obs.z[j];
        sse += (pred - obs.y) * (pred - obs.y);
    }
    return sse / static_cast<double>(holdout_.size());
}

std::size_t ModelLadder::select_eta() const {
    if (holdout_.empty()) throw PreconditionError("select_eta needs a non-empty holdout");
    if (prefix_.count() <= 0) return 0;
    std::size_t best = 0;
    double best_mse = std::numeric_limits<double>::infinity();
    // etas_ is ascending, so strict < keeps the least regularized on ties.
    for (std::size_t l = 0; l < etas_.size(); ++l) {
        const double mse = holdout_mse(l);
        if (mse < best_mse) {
            best_mse = mse;
            best = l;
        }
    }
    return best;
}

ModelSnapshot ModelLadder::snapshot(long t) const {
    if (!initialized_) throw PreconditionError("snapshot before warm-up");
    const double icpt = running_problem().intercept(running_beta_);
    return ModelSnapshot(
        std::vector<double>(running_beta_.data(), running_beta_.data() + running_beta_.size()),
        icpt, t);
}

double ModelLadder::predict(double x, std::span<const double> z) const {
    return snapshot(0).predict(x, z);
}

ModelLadder::Raw ModelLadder::raw() const {
    return Raw{etas_,    rung_betas_,    running_beta_,  penalty_factor_, full_,    prefix_,
               holdout_, full_window_, prefix_window_, selected_,       n_seen_, initialized_};
}

ModelLadder ModelLadder::from_raw(std::size_t d, LadderOptions opts, Raw raw) {
    ModelLadder m(d, opts);
    m.etas_ = std::move(raw.etas);
    m.rung_betas_ = std::move(raw.rung_betas);
    m.running_beta_ = std::move(raw.running_beta);
    m.penalty_factor_ = std::move(raw.penalty_factor);
    m.full_ = std::move(raw.full);
    m.prefix_ = std::move(raw.prefix);
    m.holdout_ = std::move(raw.holdout);
    m.full_window_ = std::move(raw.full_window);
    m.prefix_window_ = std::move(raw.prefix_window);
    m.selected_ = raw.selected;
    m.n_seen_ = raw.n_seen;
    m.initialized_ = raw.initialized;
    return m;
}

}  // namespace ecrt
