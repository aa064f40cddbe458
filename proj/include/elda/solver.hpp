#pragma once

#include "elda/filter_bank.hpp"
#include "elda/types.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace elda {

struct LineSearchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SolverTrace;

// What an objective hands back per full evaluation: the smoothed value,
// its exact gradient, and the fidelity component of that gradient (the
// z-step consumes grad f on its own).
struct Evaluation {
    Scalar value = 0.0;
    Vector grad;
    Vector grad_f;
};

// Constants of the descent algorithm. alpha_schedule holds either a single
// constant or one step size per iteration; beta defaults to alpha, so
// tau_k = alpha_k * beta_k / (alpha_k + beta_k) = alpha_k / 2.
struct SolverConfig {
    Scalar rho = 0.5;       // backtracking shrink
    Scalar gamma = 0.5;     // eps shrink
    Scalar eps0 = 1e-3;     // initial smoothing radius
    Scalar sigma_red = 1.0; // reduction threshold constant
    Scalar c = 10.0;        // candidate condition, gradient clause
    Scalar iota = 1e-3;     // candidate condition, decrease clause
    Scalar tau_desc = 1e-3; // line-search sufficient decrease
    Scalar eps_tol = 1e-8;  // termination tolerance
    int max_iters = 100;
    int max_backtracks = 60;
    std::vector<Scalar> alpha_schedule; // size 1 (constant) or >= max_iters
    std::vector<Scalar> beta_schedule;  // empty: beta_k = alpha_k
    GradMode u_grad_mode = GradMode::exact;

    Scalar alpha_at(int k) const {
        return alpha_schedule.size() == 1 ? alpha_schedule[0]
                                          : alpha_schedule[static_cast<std::size_t>(k)];
    }
    Scalar beta_at(int k) const {
        if (beta_schedule.empty()) return alpha_at(k);
        return beta_schedule.size() == 1 ? beta_schedule[0]
                                         : beta_schedule[static_cast<std::size_t>(k)];
    }
    Scalar tau_at(int k) const {
        const Scalar a = alpha_at(k), b = beta_at(k);
        return a * b / (a + b);
    }
};

inline void validate(const SolverConfig& cfg) {
    auto in01 = [](Scalar v) { return v > 0.0 && v < 1.0; };
    if (!in01(cfg.rho)) throw std::invalid_argument("solver: rho must lie in (0,1)");
    if (!in01(cfg.gamma)) throw std::invalid_argument("solver: gamma must lie in (0,1)");
    if (cfg.eps0 <= 0.0 || cfg.sigma_red <= 0.0 || cfg.c <= 0.0 || cfg.iota <= 0.0 ||
        cfg.tau_desc <= 0.0 || cfg.eps_tol <= 0.0)
        throw std::invalid_argument("solver: constants must be > 0");
    if (cfg.max_iters < 0) throw std::invalid_argument("solver: max_iters must be >= 0");
    if (cfg.max_backtracks < 1) throw std::invalid_argument("solver: max_backtracks must be >= 1");
    if (cfg.alpha_schedule.empty())
        throw std::invalid_argument("solver: alpha schedule missing");
    if (cfg.alpha_schedule.size() != 1 &&
        static_cast<int>(cfg.alpha_schedule.size()) < cfg.max_iters)
        throw std::invalid_argument("solver: alpha schedule shorter than max_iters");
    for (Scalar a : cfg.alpha_schedule)
        if (a <= 0.0) throw std::invalid_argument("solver: alpha values must be > 0");
    if (!cfg.beta_schedule.empty() && cfg.beta_schedule.size() != 1 &&
        static_cast<int>(cfg.beta_schedule.size()) < cfg.max_iters)
        throw std::invalid_argument("solver: beta schedule shorter than max_iters");
    for (Scalar b : cfg.beta_schedule)
        if (b <= 0.0) throw std::invalid_argument("solver: beta values must be > 0");
}

// One completed iteration. phi and grad_norm are taken at (x_k, eps_k);
// phi_next and grad_norm_next at (x_{k+1}, eps_k), which is exactly what
// the descent conditions and the reduction rule consumed, so every
// accepted step can be re-verified from the trace alone.
struct TraceRecord {
    int k = 0;
    Scalar eps = 0.0;
    Scalar phi = 0.0;
    Scalar grad_norm = 0.0;
    char branch = 'u';
    int backtracks = 0;
    Scalar alpha_used = 0.0;
    Scalar step_norm = 0.0;
    Scalar phi_next = 0.0;
    Scalar grad_norm_next = 0.0;
    Scalar ms = 0.0;
};

struct SolverTrace {
    std::vector<TraceRecord> records;
    Index m = 0; // feature location count (the m of the m*eps/2 envelope)
    Scalar final_eps = 0.0;
    Scalar final_phi = 0.0;
    Scalar final_grad_norm = 0.0;
    std::string termination = "max_iters";

    Scalar u_branch_ratio() const {
        if (records.empty()) return 0.0;
        Index u = 0;
        for (const auto& r : records)
            if (r.branch == 'u') ++u;
        return static_cast<Scalar>(u) / static_cast<Scalar>(records.size());
    }
};

struct SolveResult {
    Vector x;
    SolverTrace trace;
};

// Raised when an iteration fails; carries the completed iterations so the
// caller can report a diagnostic tail.
struct SolverFailure : std::runtime_error {
    SolverTrace partial;
    SolverFailure(const std::string& msg, SolverTrace trace)
        : std::runtime_error(msg), partial(std::move(trace)) {}
};

// --- the individual steps ----------------------------------------------------

// Lines 3-4: z = x - alpha grad f(x), u = z - tau grad r_eps(z) with the
// regularizer gradient taken in the requested (possibly inexact) mode.
template <class Obj>
std::pair<Vector, Vector> u_candidate(Obj& obj, const Vector& x, const Vector& grad_f_x,
                                      Scalar eps, Scalar alpha, Scalar tau, GradMode mode) {
    Vector z = x - alpha * grad_f_x;
    Vector u = z - tau * obj.grad_reg(z, eps, mode);
    return {std::move(z), std::move(u)};
}

// The candidate acceptance condition: ||grad phi(x)|| <= c ||u - x|| and
// phi(u) - phi(x) <= -(iota/2) ||u - x||^2 (both non-strict).
inline bool check_condition_u(Scalar grad_norm_x, Scalar phi_x, Scalar phi_u,
                              Scalar step_norm, Scalar c, Scalar iota) {
    return grad_norm_x <= c * step_norm &&
           phi_u - phi_x <= -0.5 * iota * step_norm * step_norm;
}

template <class Obj>
struct LineSearchOutcome {
    Vector v;
    Scalar alpha_used = 0.0;
    int backtracks = 0;
    Scalar phi_v = 0.0;
};

// Safeguard step v = x - alpha grad phi_eps(x) with backtracking until
// phi(v) - phi(x) <= -tau_desc ||v - x||^2. Exceeding the backtrack cap
// signals a broken gradient, not a tight schedule, and raises.
template <class Obj>
LineSearchOutcome<Obj> v_candidate_with_linesearch(Obj& obj, const Vector& x,
                                                   const Vector& grad_phi_x, Scalar phi_x,
                                                   Scalar eps, Scalar alpha_init, Scalar rho,
                                                   Scalar tau_desc, int max_backtracks) {
    LineSearchOutcome<Obj> out;
    Scalar alpha = alpha_init;
    for (int bt = 0;; ++bt) {
        Vector v = x - alpha * grad_phi_x;
        const Scalar phi_v = obj.value(v, eps);
        const Scalar step2 = (v - x).squaredNorm();
        if (phi_v - phi_x <= -tau_desc * step2) {
            out.v = std::move(v);
            out.alpha_used = alpha;
            out.backtracks = bt;
            out.phi_v = phi_v;
            return out;
        }
        if (bt >= max_backtracks)
            throw LineSearchError("line search exceeded " + std::to_string(max_backtracks) +
                                  " backtracks");
        alpha *= rho;
    }
}

// Line 15: shrink eps iff the new gradient norm is strictly below
// sigma_red * gamma * eps.
inline Scalar epsilon_update(Scalar eps, Scalar grad_norm_next, Scalar sigma_red, Scalar gamma) {
    return (grad_norm_next < sigma_red * gamma * eps) ? gamma * eps : eps;
}

// --- drivers -----------------------------------------------------------------

namespace detail {

template <class Obj>
struct StepResult {
    Vector x_next;
    TraceRecord rec;
};

// Lines 3-13 for one iteration; fills everything in the record except the
// post-step gradient norm and timing.
template <class Obj>
StepResult<Obj> descend_once(Obj& obj, const Vector& x, Scalar eps, Scalar phi_x,
                             const Vector& grad_phi_x, const Vector& grad_f_x, int k,
                             const SolverConfig& cfg) {
    StepResult<Obj> out;
    out.rec.k = k;
    out.rec.eps = eps;
    out.rec.phi = phi_x;
    const Scalar grad_norm = grad_phi_x.norm();
    out.rec.grad_norm = grad_norm;

    const Scalar alpha = cfg.alpha_at(k);
    auto [z, u] = u_candidate(obj, x, grad_f_x, eps, alpha, cfg.tau_at(k), cfg.u_grad_mode);
    const Scalar phi_u = obj.value(u, eps);
    const Scalar du = (u - x).norm();

    if (check_condition_u(grad_norm, phi_x, phi_u, du, cfg.c, cfg.iota)) {
        out.x_next = std::move(u);
        out.rec.branch = 'u';
        out.rec.backtracks = 0;
        out.rec.alpha_used = alpha;
        out.rec.step_norm = du;
        out.rec.phi_next = phi_u;
    } else {
        auto ls = v_candidate_with_linesearch(obj, x, grad_phi_x, phi_x, eps, alpha, cfg.rho,
                                              cfg.tau_desc, cfg.max_backtracks);
        out.rec.branch = 'v';
        out.rec.backtracks = ls.backtracks;
        out.rec.alpha_used = ls.alpha_used;
        out.rec.step_norm = (ls.v - x).norm();
        out.rec.phi_next = ls.phi_v;
        out.x_next = std::move(ls.v);
    }
    if (!out.x_next.allFinite()) throw NumericError("solver: non-finite iterate");
    return out;
}

} // namespace detail

// The full descent algorithm: inexact candidate with acceptance check,
// safeguard line search, eps reduction, termination on sigma_red * eps
// falling below eps_tol or on the iteration cap.
template <class Obj>
SolveResult run(Obj& obj, Vector x0, const SolverConfig& cfg) {
    validate(cfg);
    SolveResult res;
    res.trace.m = obj.m();

    Vector x = std::move(x0);
    Scalar eps = cfg.eps0;

    if (cfg.max_iters == 0) {
        const auto ev = obj.evaluate(x, eps);
        res.trace.final_eps = eps;
        res.trace.final_phi = ev.value;
        res.trace.final_grad_norm = ev.grad.norm();
        res.x = std::move(x);
        return res;
    }

    auto cur = obj.evaluate(x, eps);
    for (int k = 0; k < cfg.max_iters; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        detail::StepResult<Obj> step;
        try {
            step = detail::descend_once(obj, x, eps, cur.value, cur.grad, cur.grad_f, k, cfg);
        } catch (const LineSearchError& e) {
            throw SolverFailure(std::string("iteration ") + std::to_string(k) + ": " + e.what(),
                                res.trace);
        } catch (const NumericError& e) {
            throw SolverFailure(std::string("iteration ") + std::to_string(k) + ": " + e.what(),
                                res.trace);
        }

        auto next = obj.evaluate(step.x_next, eps);
        const Scalar gn_next = next.grad.norm();
        step.rec.grad_norm_next = gn_next;

        const Scalar eps_next = epsilon_update(eps, gn_next, cfg.sigma_red, cfg.gamma);
        const bool stop = cfg.sigma_red * eps < cfg.eps_tol;

        step.rec.ms = std::chrono::duration<Scalar, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        res.trace.records.push_back(step.rec);

        x = std::move(step.x_next);
        if (eps_next == eps) {
            cur = std::move(next);
        } else {
            eps = eps_next;
            cur = obj.evaluate(x, eps);
        }
        if (stop) {
            res.trace.termination = "tolerance";
            break;
        }
    }

    res.trace.final_eps = eps;
    res.trace.final_phi = cur.value;
    res.trace.final_grad_norm = cur.grad.norm();
    res.x = std::move(x);
    return res;
}

// Lines 3-14 only, eps held fixed; the fixed-smoothing convergence regime.
template <class Obj>
SolveResult run_fixed_eps(Obj& obj, Vector x0, Scalar eps, int iterations,
                          const SolverConfig& cfg) {
    SolverConfig c = cfg;
    c.max_iters = iterations;
    validate(c);
    SolveResult res;
    res.trace.m = obj.m();

    Vector x = std::move(x0);
    auto cur = obj.evaluate(x, eps);
    for (int k = 0; k < iterations; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        auto step = detail::descend_once(obj, x, eps, cur.value, cur.grad, cur.grad_f, k, c);
        auto next = obj.evaluate(step.x_next, eps);
        step.rec.grad_norm_next = next.grad.norm();
        step.rec.ms = std::chrono::duration<Scalar, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        res.trace.records.push_back(step.rec);
        x = std::move(step.x_next);
        cur = std::move(next);
    }
    res.trace.final_eps = eps;
    res.trace.final_phi = cur.value;
    res.trace.final_grad_norm = cur.grad.norm();
    res.x = std::move(x);
    return res;
}

// Reference baseline: x_{k+1} = x_k - alpha_k grad phi_eps(x_k) at fixed
// eps, no candidate test, no line search.
template <class Obj>
SolveResult plain_gd(Obj& obj, Vector x0, const SolverConfig& cfg) {
    validate(cfg);
    SolveResult res;
    res.trace.m = obj.m();
    const Scalar eps = cfg.eps0;

    Vector x = std::move(x0);
    auto cur = obj.evaluate(x, eps);
    for (int k = 0; k < cfg.max_iters; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        TraceRecord rec;
        rec.k = k;
        rec.eps = eps;
        rec.phi = cur.value;
        rec.grad_norm = cur.grad.norm();
        const Scalar alpha = cfg.alpha_at(k);
        Vector x_next = x - alpha * cur.grad;
        if (!x_next.allFinite())
            throw SolverFailure("iteration " + std::to_string(k) + ": non-finite iterate",
                                res.trace);
        auto next = obj.evaluate(x_next, eps);
        rec.branch = 'v';
        rec.backtracks = 0;
        rec.alpha_used = alpha;
        rec.step_norm = (x_next - x).norm();
        rec.phi_next = next.value;
        rec.grad_norm_next = next.grad.norm();
        rec.ms = std::chrono::duration<Scalar, std::milli>(std::chrono::steady_clock::now() - t0)
                     .count();
        res.trace.records.push_back(rec);
        x = std::move(x_next);
        cur = std::move(next);
    }
    res.trace.final_eps = eps;
    res.trace.final_phi = cur.value;
    res.trace.final_grad_norm = cur.grad.norm();
    res.x = std::move(x);
    return res;
}

// --- trace replay ------------------------------------------------------------

struct TraceCheck {
    bool ok = true;
    std::string what;

    void fail(const std::string& msg) {
        if (ok) what = msg;
        ok = false;
    }
};

// Monotone descent at fixed eps: within every run of constant eps,
// phi(x_{k+1}) <= phi(x_k), checked on the recorded values.
inline TraceCheck check_monotone_fixed_eps(const SolverTrace& t) {
    TraceCheck c;
    for (const auto& r : t.records)
        if (r.phi_next > r.phi)
            c.fail("phi increased at k=" + std::to_string(r.k));
    for (std::size_t i = 1; i < t.records.size(); ++i)
        if (t.records[i].eps == t.records[i - 1].eps &&
            t.records[i].phi > t.records[i - 1].phi)
            c.fail("phi increased across k=" + std::to_string(t.records[i].k));
    return c;
}

// Each accepted step satisfies its own clause, recomputed from the trace.
inline TraceCheck check_per_step_decrease(const SolverTrace& t, const SolverConfig& cfg) {
    TraceCheck c;
    for (const auto& r : t.records) {
        const Scalar s2 = r.step_norm * r.step_norm;
        if (r.branch == 'u') {
            if (r.grad_norm > cfg.c * r.step_norm)
                c.fail("u-step gradient clause violated at k=" + std::to_string(r.k));
            if (r.phi_next - r.phi > -0.5 * cfg.iota * s2)
                c.fail("u-step decrease clause violated at k=" + std::to_string(r.k));
        } else {
            if (r.phi_next - r.phi > -cfg.tau_desc * s2)
                c.fail("v-step decrease clause violated at k=" + std::to_string(r.k));
        }
    }
    return c;
}

// The envelope phi_eps(x) + m eps / 2 never increases, across both
// branches and across eps reductions; includes the final iterate.
inline TraceCheck check_lyapunov(const SolverTrace& t) {
    TraceCheck c;
    const Scalar half_m = 0.5 * static_cast<Scalar>(t.m);
    auto envelope = [&](Scalar phi, Scalar eps) { return phi + half_m * eps; };
    for (std::size_t i = 1; i < t.records.size(); ++i)
        if (envelope(t.records[i].phi, t.records[i].eps) >
            envelope(t.records[i - 1].phi, t.records[i - 1].eps))
            c.fail("Lyapunov envelope increased at k=" + std::to_string(t.records[i].k));
    if (!t.records.empty()) {
        const auto& last = t.records.back();
        if (envelope(t.final_phi, t.final_eps) > envelope(last.phi, last.eps))
            c.fail("Lyapunov envelope increased at the final iterate");
    }
    return c;
}

// eps_k = eps0 * gamma^{r_k} with nondecreasing reduction count, the
// reduction rule matching the recorded post-step gradient norms, and the
// backtrack cap respected.
inline TraceCheck check_eps_trajectory(const SolverTrace& t, const SolverConfig& cfg) {
    TraceCheck c;
    for (std::size_t i = 0; i < t.records.size(); ++i) {
        const auto& r = t.records[i];
        const Scalar eps_next =
            (i + 1 < t.records.size()) ? t.records[i + 1].eps : t.final_eps;
        const Scalar expected = epsilon_update(r.eps, r.grad_norm_next, cfg.sigma_red, cfg.gamma);
        if (eps_next != expected)
            c.fail("eps update rule violated at k=" + std::to_string(r.k));
        if (r.backtracks > cfg.max_backtracks)
            c.fail("backtrack cap exceeded at k=" + std::to_string(r.k));
    }
    return c;
}

// --- CSV export ----------------------------------------------------------------

inline void write_trace_csv(const SolverTrace& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("trace: cannot open " + path.string());
    out << "k,eps,phi,grad_norm,branch,backtracks,alpha,step_norm,ms\n";
    out.precision(17);
    for (const auto& r : t.records)
        out << r.k << ',' << r.eps << ',' << r.phi << ',' << r.grad_norm << ',' << r.branch
            << ',' << r.backtracks << ',' << r.alpha_used << ',' << r.step_norm << ','
            << r.ms << '\n';
}

} // namespace elda
