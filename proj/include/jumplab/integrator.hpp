#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "jumplab/errors.hpp"
#include "jumplab/noise.hpp"
#include "jumplab/operators.hpp"
#include "jumplab/rng.hpp"
#include "jumplab/spaces.hpp"

namespace jumplab {

struct SimConfig {
    double dt_max = 1e-2;
    double horizon = 1.0;
    double solver_tol = 1e-10;
    int solver_max_iter = 50;
    std::uint64_t seed = 0;
    std::size_t checkpoint_stride = 1;
    int max_halvings = 10;

    void validate() const {
        detail::require(dt_max > 0.0 && horizon > 0.0 && dt_max <= horizon,
                        "SimConfig requires 0 < dt_max <= T");
        detail::require(solver_tol > 0.0, "solver_tol must be > 0");
        detail::require(solver_max_iter >= 1, "solver_max_iter must be >= 1");
        detail::require(checkpoint_stride >= 1, "checkpoint_stride must be >= 1");
        detail::require(max_halvings >= 0, "max_halvings must be >= 0");
    }
};

struct StepStats {
    int iterations = 0;
    double residual = 0.0;
    int halvings = 0;

    void absorb(const StepStats& o) {
        iterations = std::max(iterations, o.iterations);
        residual = std::max(residual, o.residual);
        halvings = std::max(halvings, o.halvings);
    }
};

/// Solves w + dt (A w + sum_i m_i G(w, z_i)) = u.
///
/// Operators with a tridiagonal Jacobian use Newton's method with Armijo
/// backtracking on the H-norm of the residual; custom maps use Picard
/// iteration with adaptive damping. A failed solve is retried as two half
/// steps, recursively, up to `max_halvings` levels.
///
/// Convergence means |residual|_H <= tol * max(1, |u|_H).
class ImplicitStepper {
public:
    ImplicitStepper(const MonotoneOperator& op, const JumpCoupling& coupling, const MarkSpace& marks,
                    double tol = 1e-10, int max_iter = 50, int max_halvings = 10)
        : op_(op), coupling_(coupling), marks_(marks), tol_(tol), max_iter_(max_iter),
          max_halvings_(max_halvings) {
        const std::size_t n = op.space().n();
        coupling.check(op.space(), marks);
        if (coupling.is_additive()) additive_drift_ = compensator_drift(coupling, marks, StateVector(n));
        w_ = StateVector(n);
        trial_ = StateVector(n);
        res_ = StateVector(n);
        trial_res_ = StateVector(n);
        aw_ = StateVector(n);
        delta_ = StateVector(n);
        scratch_.resize(n);
        jac_ = Tridiagonal(n);
    }

    const MonotoneOperator& op() const noexcept { return op_; }
    const GridSpace& space() const noexcept { return op_.space(); }

    /// Advances u by dt in place. Throws NonConverged (time field = `time`).
    StepStats step(StateVector& u, double dt, double time = 0.0) {
        StepStats stats;
        if (!try_step(u, dt, stats, 0)) {
            throw NonConverged("implicit step did not converge after " +
                                   std::to_string(max_halvings_) + " halvings",
                               time, u.values(), stats.residual);
        }
        return stats;
    }

private:
    double hnorm(const StateVector& v) const { return norm_h(space(), v); }

    void drift(const StateVector& w, StateVector& out) {
        op_.apply_into(w.span(), out.span());
        if (coupling_.is_additive()) {
            out += additive_drift_;
        } else {
            out += compensator_drift(coupling_, marks_, w);
        }
    }

    // res = w + dt * drift(w) - u
    double residual(const StateVector& w, const StateVector& u, double dt, StateVector& res) {
        drift(w, aw_);
        for (std::size_t i = 0; i < res.size(); ++i) res[i] = w[i] + dt * aw_[i] - u[i];
        return hnorm(res);
    }

    bool try_step(StateVector& u, double dt, StepStats& stats, int depth) {
        StepStats local;
        if (solve(u, dt, local)) {
            stats.absorb(local);
            stats.halvings = std::max(stats.halvings, depth);
            u = w_;
            return true;
        }
        stats.residual = std::max(stats.residual, local.residual);
        if (depth >= max_halvings_) return false;
        StateVector saved = u;
        if (!try_step(u, 0.5 * dt, stats, depth + 1) || !try_step(u, 0.5 * dt, stats, depth + 1)) {
            u = saved;
            return false;
        }
        return true;
    }

    bool solve(const StateVector& u, double dt, StepStats& stats) {
        const double target = tol_ * std::max(1.0, hnorm(u));
        w_ = u;
        double r = residual(w_, u, dt, res_);
        if (!std::isfinite(r)) return false;
        const bool newton = op_.has_jacobian();
        double damping = 1.0;
        for (int it = 0; it < max_iter_; ++it) {
            if (r <= target) {
                stats.iterations = it;
                stats.residual = r;
                return true;
            }
            if (newton) {
                op_.jacobian_into(w_.span(), jac_);
                std::vector<double> jd;
                if (!coupling_.is_additive()) jd = compensator_drift_jacobian_diag(coupling_, marks_, w_);
                for (std::size_t i = 0; i < jac_.size(); ++i) {
                    jac_.diag[i] = 1.0 + dt * (jac_.diag[i] + (jd.empty() ? 0.0 : jd[i]));
                    if (i + 1 < jac_.size()) {
                        jac_.lower[i] *= dt;
                        jac_.upper[i] *= dt;
                    }
                }
                for (std::size_t i = 0; i < delta_.size(); ++i) delta_[i] = -res_[i];
                try {
                    solve_tridiagonal_inplace(jac_, delta_.span(), scratch_);
                } catch (const ContractViolation&) {
                    stats.residual = r;
                    return false;
                }
                double lambda = 1.0;
                bool accepted = false;
                for (int ls = 0; ls < 40; ++ls) {
                    trial_ = w_;
                    trial_.axpy(lambda, delta_);
                    const double rt = residual(trial_, u, dt, trial_res_);
                    if (std::isfinite(rt) && rt <= (1.0 - 1e-4 * lambda) * r) {
                        std::swap(w_, trial_);
                        std::swap(res_, trial_res_);
                        r = rt;
                        accepted = true;
                        break;
                    }
                    lambda *= 0.5;
                }
                if (!accepted) {
                    stats.residual = r;
                    return r <= target;
                }
            } else {
                // Damped Picard: w <- w - theta * res.
                trial_ = w_;
                trial_.axpy(-damping, res_);
                const double rt = residual(trial_, u, dt, trial_res_);
                if (std::isfinite(rt) && rt < r) {
                    std::swap(w_, trial_);
                    std::swap(res_, trial_res_);
                    r = rt;
                    damping = std::min(1.0, 1.5 * damping);
                } else {
                    damping *= 0.5;
                    if (damping < 1e-12) break;
                }
            }
        }
        stats.iterations = max_iter_;
        stats.residual = r;
        return r <= target;
    }

    const MonotoneOperator& op_;
    const JumpCoupling& coupling_;
    const MarkSpace& marks_;
    double tol_;
    int max_iter_;
    int max_halvings_;
    StateVector additive_drift_;
    StateVector w_, trial_, res_, trial_res_, aw_, delta_;
    std::vector<double> scratch_;
    Tridiagonal jac_;
};

/// One implicit Euler step of the continuous (between-jump) dynamics.
inline StateVector implicit_step(const MonotoneOperator& op, const JumpCoupling& coupling,
                                 const MarkSpace& marks, const StateVector& u, double dt,
                                 double tol = 1e-10, int max_iter = 50,
                                 StepStats* stats = nullptr) {
    op.space().check(u);
    detail::require(dt > 0.0, "implicit_step requires dt > 0");
    ImplicitStepper stepper(op, coupling, marks, tol, max_iter);
    StateVector w = u;
    const StepStats s = stepper.step(w, dt);
    if (stats) *stats = s;
    return w;
}

// ---------------------------------------------------------------------------
// Path simulation
// ---------------------------------------------------------------------------

struct Checkpoint {
    double time = 0.0;
    StateVector state;
};

using CheckpointSeries = std::vector<Checkpoint>;

struct JumpRecord {
    double time = 0.0;
    std::size_t mark = 0;
    double pre_h = 0.0;
    double post_h = 0.0;
    double increment_h = 0.0;
    double bookkeeping_error = 0.0;  // |post - pre - G(pre, z)|_H
};

/// Path t -> u(t): norms at every grid time and every jump time (post-jump,
/// right-continuous values), full states at checkpoints.
struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<double> h_norms;
    std::vector<double> v_norms;
    std::vector<int> jump_marks;  // mark index at jump entries, -1 at grid entries
    std::vector<JumpRecord> jumps;
    CheckpointSeries checkpoints;
    std::size_t jump_count = 0;
    StepStats solver;
    std::uint64_t stream_key = 0;
};

namespace detail {

/// Number of grid intervals covering [t0, t1] with spacing dt (last one may be short).
inline std::size_t grid_steps(double t0, double t1, double dt) {
    const double ratio = (t1 - t0) / dt;
    const auto k = static_cast<std::size_t>(std::ceil(ratio - 1e-9));
    return std::max<std::size_t>(k, 1);
}

inline double grid_time(double t0, double t1, double dt, std::size_t k, std::size_t steps) {
    return k >= steps ? t1 : t0 + static_cast<double>(k) * dt;
}

}  // namespace detail

/// Drives `u` from t0 to t1 along `stream` (event times in the stream's own
/// clock, which here coincides with [t0, t1] up to the caller's offset).
/// Observer: on_grid(k, t, u) for k = 0..steps, on_jump(t, mark, pre, post).
template <typename OnGrid, typename OnJump>
StepStats run_path(ImplicitStepper& stepper, const JumpCoupling& coupling, StateVector& u,
                   const JumpStream& stream, double t0, double t1, double dt, OnGrid&& on_grid,
                   OnJump&& on_jump) {
    StepStats stats;
    const std::size_t steps = detail::grid_steps(t0, t1, dt);
    auto ev = std::lower_bound(stream.events.begin(), stream.events.end(), t0,
                               [](const JumpEvent& e, double t) { return e.time <= t; });
    double t = t0;
    on_grid(std::size_t{0}, t, static_cast<const StateVector&>(u));
    StateVector pre, inc;
    for (std::size_t k = 1; k <= steps; ++k) {
        const double target = detail::grid_time(t0, t1, dt, k, steps);
        while (ev != stream.events.end() && ev->time <= target) {
            if (ev->time > t) stats.absorb(stepper.step(u, ev->time - t, t));
            t = ev->time;
            pre = u;
            coupling.evaluate(ev->mark, pre, inc);
            u += inc;
            on_jump(t, ev->mark, static_cast<const StateVector&>(pre),
                    static_cast<const StateVector&>(u), static_cast<const StateVector&>(inc));
            ++ev;
        }
        if (target > t) stats.absorb(stepper.step(u, target - t, t));
        t = target;
        on_grid(k, t, static_cast<const StateVector&>(u));
    }
    return stats;
}

/// Simulates on [t0, t1] with a given jump stream; records as TrajectoryRecord.
inline TrajectoryRecord simulate_with_stream(const MonotoneOperator& op,
                                             const JumpCoupling& coupling, const MarkSpace& marks,
                                             const StateVector& x0, const JumpStream& stream,
                                             double t0, double t1, const SimConfig& cfg) {
    const GridSpace& space = op.space();
    space.check(x0);
    ImplicitStepper stepper(op, coupling, marks, cfg.solver_tol, cfg.solver_max_iter,
                            cfg.max_halvings);
    TrajectoryRecord rec;
    rec.stream_key = stream.seed_key;
    StateVector u = x0;
    const std::size_t steps = detail::grid_steps(t0, t1, cfg.dt_max);
    rec.times.reserve(steps + 1);
    rec.h_norms.reserve(steps + 1);
    rec.v_norms.reserve(steps + 1);
    auto on_grid = [&](std::size_t k, double t, const StateVector& s) {
        rec.times.push_back(t);
        rec.h_norms.push_back(norm_h(space, s));
        rec.v_norms.push_back(norm_v(space, s));
        rec.jump_marks.push_back(-1);
        if (k % cfg.checkpoint_stride == 0 || k == steps) rec.checkpoints.push_back({t, s});
    };
    auto on_jump = [&](double t, std::size_t mark, const StateVector& pre, const StateVector& post,
                       const StateVector& inc) {
        JumpRecord j;
        j.time = t;
        j.mark = mark;
        j.pre_h = norm_h(space, pre);
        j.post_h = norm_h(space, post);
        j.increment_h = norm_h(space, inc);
        j.bookkeeping_error = norm_h(space, post - pre - coupling.evaluate(mark, pre));
        rec.jumps.push_back(j);
        ++rec.jump_count;
        rec.times.push_back(t);
        rec.h_norms.push_back(j.post_h);
        rec.v_norms.push_back(norm_v(space, post));
        rec.jump_marks.push_back(static_cast<int>(mark));
    };
    rec.solver = run_path(stepper, coupling, u, stream, t0, t1, cfg.dt_max, on_grid, on_jump);
    return rec;
}

namespace detail {

inline Rng member_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t purpose) {
    return Rng::substream(seed, index).split(purpose);
}

inline constexpr std::uint64_t kInitPurpose = 0;
inline constexpr std::uint64_t kJumpPurpose = 1;

}  // namespace detail

/// Simulates one path on [0, T]; the jump stream is substream 0 of cfg.seed.
inline TrajectoryRecord simulate(const MonotoneOperator& op, const JumpCoupling& coupling,
                                 const MarkSpace& marks, const StateVector& x0,
                                 const SimConfig& cfg) {
    cfg.validate();
    Rng rng = detail::member_rng(cfg.seed, 0, detail::kJumpPurpose);
    const JumpStream stream = sample_stream(marks, cfg.horizon, rng);
    return simulate_with_stream(op, coupling, marks, x0, stream, 0.0, cfg.horizon, cfg);
}

/// Two paths driven by the identical jump stream on the identical grid.
inline std::pair<TrajectoryRecord, TrajectoryRecord> simulate_coupled(
    const MonotoneOperator& op, const JumpCoupling& coupling, const MarkSpace& marks,
    const StateVector& x0, const StateVector& y0, const SimConfig& cfg) {
    cfg.validate();
    Rng rng = detail::member_rng(cfg.seed, 0, detail::kJumpPurpose);
    const JumpStream stream = sample_stream(marks, cfg.horizon, rng);
    return {simulate_with_stream(op, coupling, marks, x0, stream, 0.0, cfg.horizon, cfg),
            simulate_with_stream(op, coupling, marks, y0, stream, 0.0, cfg.horizon, cfg)};
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

using Observable = std::function<double(const StateVector&)>;

struct NamedObservable {
    std::string name;
    Observable f;
};

/// Per-time mean and Monte Carlo standard error.
struct TimeSeriesStat {
    std::string name;
    std::vector<double> mean;
    std::vector<double> se;
};

namespace detail {

/// Welford accumulators over a time grid, mergeable with Chan's formula.
struct GridMoments {
    double count = 0.0;
    std::vector<double> mean;
    std::vector<double> m2;

    explicit GridMoments(std::size_t len = 0) : mean(len, 0.0), m2(len, 0.0) {}

    void add(const std::vector<double>& values) {
        count += 1.0;
        for (std::size_t k = 0; k < mean.size(); ++k) {
            const double d = values[k] - mean[k];
            mean[k] += d / count;
            m2[k] += d * (values[k] - mean[k]);
        }
    }

    void merge(const GridMoments& o) {
        if (o.count == 0.0) return;
        if (count == 0.0) {
            *this = o;
            return;
        }
        const double total = count + o.count;
        for (std::size_t k = 0; k < mean.size(); ++k) {
            const double d = o.mean[k] - mean[k];
            mean[k] += d * o.count / total;
            m2[k] += o.m2[k] + d * d * count * o.count / total;
        }
        count = total;
    }

    TimeSeriesStat finish(std::string name) const {
        TimeSeriesStat s;
        s.name = std::move(name);
        s.mean = mean;
        s.se.resize(mean.size(), 0.0);
        if (count > 1.0)
            for (std::size_t k = 0; k < mean.size(); ++k)
                s.se[k] = std::sqrt(std::max(0.0, m2[k] / (count - 1.0)) / count);
        return s;
    }
};

/// Runs `work(i)` for i in [0, count) on a fixed chunking; `fold(chunk)` is
/// called afterwards in chunk order so results do not depend on scheduling.
template <typename Work>
void for_chunks(std::size_t count, std::size_t chunk, std::size_t threads, Work&& work) {
    const std::size_t chunks = (count + chunk - 1) / chunk;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(chunks, 1));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t c = next++; c < chunks; c = next++) work(c);
    };
    if (threads <= 1) {
        worker();
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

inline constexpr std::size_t kChunk = 8;

}  // namespace detail

struct EnsembleOptions {
    std::size_t members = 1;
    std::vector<NamedObservable> observables;
    bool keep_checkpoints = true;
    std::size_t threads = 1;
};

struct EnsembleSummary {
    std::vector<double> times;
    TimeSeriesStat h2;  // |u|_H^2
    TimeSeriesStat vp;  // |u|_V^p
    std::vector<TimeSeriesStat> observables;
    std::vector<CheckpointSeries> checkpoints;  // per member (empty if aborted)
    std::vector<StateVector> terminal;          // per completed member
    std::vector<std::size_t> member_ids;        // ids of completed members
    std::size_t members = 0;
    std::size_t aborted = 0;
    bool partial = false;
    std::size_t total_jumps = 0;
    StepStats solver;
};

using InitialSampler = std::function<StateVector(Rng&)>;

inline InitialSampler fixed_initial(StateVector x0) {
    return [x0 = std::move(x0)](Rng&) { return x0; };
}

/// M independent paths; member i uses substream i of cfg.seed.
inline EnsembleSummary simulate_ensemble(const MonotoneOperator& op, const JumpCoupling& coupling,
                                         const MarkSpace& marks, const InitialSampler& sampler,
                                         const SimConfig& cfg, const EnsembleOptions& opts) {
    cfg.validate();
    detail::require(opts.members >= 1, "ensemble needs M >= 1");
    const GridSpace& space = op.space();
    const double p = space.p();
    const std::size_t steps = detail::grid_steps(0.0, cfg.horizon, cfg.dt_max);
    const std::size_t len = steps + 1;
    const std::size_t n_obs = opts.observables.size();
    const std::size_t chunks = (opts.members + detail::kChunk - 1) / detail::kChunk;

    struct ChunkResult {
        std::vector<detail::GridMoments> moments;
        std::vector<std::pair<std::size_t, CheckpointSeries>> checkpoints;
        std::vector<std::pair<std::size_t, StateVector>> terminal;
        std::size_t aborted = 0;
        std::size_t jumps = 0;
        StepStats solver;
    };
    std::vector<ChunkResult> results(chunks);

    detail::for_chunks(opts.members, detail::kChunk, opts.threads, [&](std::size_t c) {
        ChunkResult& res = results[c];
        res.moments.assign(2 + n_obs, detail::GridMoments(len));
        ImplicitStepper stepper(op, coupling, marks, cfg.solver_tol, cfg.solver_max_iter,
                                cfg.max_halvings);
        std::vector<std::vector<double>> series(2 + n_obs, std::vector<double>(len));
        const std::size_t lo = c * detail::kChunk;
        const std::size_t hi = std::min(opts.members, lo + detail::kChunk);
        for (std::size_t i = lo; i < hi; ++i) {
            Rng init = detail::member_rng(cfg.seed, i, detail::kInitPurpose);
            Rng jr = detail::member_rng(cfg.seed, i, detail::kJumpPurpose);
            StateVector u = sampler(init);
            space.check(u);
            const JumpStream stream = sample_stream(marks, cfg.horizon, jr);
            CheckpointSeries cps;
            auto on_grid = [&](std::size_t k, double t, const StateVector& s) {
                const double nh = norm_h(space, s);
                series[0][k] = nh * nh;
                series[1][k] = std::pow(norm_v(space, s), p);
                for (std::size_t o = 0; o < n_obs; ++o) series[2 + o][k] = opts.observables[o].f(s);
                if (opts.keep_checkpoints && (k % cfg.checkpoint_stride == 0 || k == steps))
                    cps.push_back({t, s});
            };
            try {
                const StepStats st = run_path(stepper, coupling, u, stream, 0.0, cfg.horizon,
                                              cfg.dt_max, on_grid,
                                              [](double, std::size_t, const StateVector&,
                                                 const StateVector&, const StateVector&) {});
                res.solver.absorb(st);
            } catch (const NonConverged&) {
                ++res.aborted;
                continue;
            }
            for (std::size_t o = 0; o < series.size(); ++o) res.moments[o].add(series[o]);
            res.jumps += stream.events.size();
            res.terminal.emplace_back(i, u);
            if (opts.keep_checkpoints) res.checkpoints.emplace_back(i, std::move(cps));
        }
    });

    EnsembleSummary out;
    out.members = opts.members;
    out.times.resize(len);
    for (std::size_t k = 0; k < len; ++k) out.times[k] = detail::grid_time(0.0, cfg.horizon, cfg.dt_max, k, steps);
    std::vector<detail::GridMoments> total(2 + n_obs, detail::GridMoments(len));
    for (auto& r : results) {
        for (std::size_t o = 0; o < total.size(); ++o) total[o].merge(r.moments[o]);
        out.aborted += r.aborted;
        out.total_jumps += r.jumps;
        out.solver.absorb(r.solver);
        for (auto& [id, st] : r.terminal) {
            out.member_ids.push_back(id);
            out.terminal.push_back(std::move(st));
        }
        for (auto& [id, cp] : r.checkpoints) out.checkpoints.push_back(std::move(cp));
    }
    out.partial = out.aborted > 0;
    out.h2 = total[0].finish("h2");
    out.vp = total[1].finish("vp");
    for (std::size_t o = 0; o < n_obs; ++o)
        out.observables.push_back(total[2 + o].finish(opts.observables[o].name));
    return out;
}

/// Synchronously coupled ensemble: pair i shares one jump stream.
struct CoupledSummary {
    std::vector<double> times;
    TimeSeriesStat msd;       // E |u(t,x) - u(t,y)|_H^2
    double initial_msd = 0.0; // mean |x - y|_H^2
    bool additive = false;
    std::size_t pairs = 0;
    std::size_t monotone_violations = 0;  // paths whose distance increased somewhere
    double dt = 0.0;
};

inline CoupledSummary simulate_coupled_ensemble(const MonotoneOperator& op,
                                                const JumpCoupling& coupling,
                                                const MarkSpace& marks,
                                                const InitialSampler& x_sampler,
                                                const InitialSampler& y_sampler,
                                                const SimConfig& cfg, std::size_t pairs,
                                                std::size_t threads = 1) {
    cfg.validate();
    detail::require(pairs >= 1, "coupled ensemble needs at least one pair");
    const GridSpace& space = op.space();
    const std::size_t steps = detail::grid_steps(0.0, cfg.horizon, cfg.dt_max);
    const std::size_t len = steps + 1;
    const std::size_t chunks = (pairs + detail::kChunk - 1) / detail::kChunk;
    struct ChunkResult {
        detail::GridMoments moments;
        double d0 = 0.0;
        std::size_t violations = 0;
    };
    std::vector<ChunkResult> results(chunks);
    detail::for_chunks(pairs, detail::kChunk, threads, [&](std::size_t c) {
        ChunkResult& res = results[c];
        res.moments = detail::GridMoments(len);
        ImplicitStepper sx(op, coupling, marks, cfg.solver_tol, cfg.solver_max_iter, cfg.max_halvings);
        ImplicitStepper sy(op, coupling, marks, cfg.solver_tol, cfg.solver_max_iter, cfg.max_halvings);
        std::vector<std::vector<double>> grid_states(len);
        std::vector<double> dist(len);
        const std::size_t lo = c * detail::kChunk;
        const std::size_t hi = std::min(pairs, lo + detail::kChunk);
        auto nojump = [](double, std::size_t, const StateVector&, const StateVector&,
                         const StateVector&) {};
        for (std::size_t i = lo; i < hi; ++i) {
            Rng init = detail::member_rng(cfg.seed, i, detail::kInitPurpose);
            Rng jr = detail::member_rng(cfg.seed, i, detail::kJumpPurpose);
            StateVector u = x_sampler(init);
            StateVector v = y_sampler(init);
            const JumpStream stream = sample_stream(marks, cfg.horizon, jr);
            run_path(sx, coupling, u, stream, 0.0, cfg.horizon, cfg.dt_max,
                     [&](std::size_t k, double, const StateVector& s) { grid_states[k] = s.values(); },
                     nojump);
            run_path(sy, coupling, v, stream, 0.0, cfg.horizon, cfg.dt_max,
                     [&](std::size_t k, double, const StateVector& s) {
                         const double nh = norm_h(space, StateVector(grid_states[k]) - s);
                         dist[k] = nh * nh;
                     },
                     nojump);
            bool mono = true;
            for (std::size_t k = 1; k < len; ++k)
                if (dist[k] > dist[k - 1] * (1.0 + 1e-10) + 1e-300) mono = false;
            if (!mono) ++res.violations;
            res.d0 += dist[0];
            res.moments.add(dist);
        }
    });
    CoupledSummary out;
    out.dt = cfg.dt_max;
    out.pairs = pairs;
    out.additive = coupling.is_additive();
    out.times.resize(len);
    for (std::size_t k = 0; k < len; ++k) out.times[k] = detail::grid_time(0.0, cfg.horizon, cfg.dt_max, k, steps);
    detail::GridMoments total(len);
    double d0 = 0.0;
    for (auto& r : results) {
        total.merge(r.moments);
        d0 += r.d0;
        out.monotone_violations += r.violations;
    }
    out.initial_msd = d0 / static_cast<double>(pairs);
    out.msd = total.finish("msd");
    return out;
}

}  // namespace jumplab
