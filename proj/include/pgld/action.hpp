#ifndef PGLD_ACTION_HPP
#define PGLD_ACTION_HPP

#include <deque>

#include "pgld/skeleton.hpp"

namespace pgld {

enum class TargetKind { terminal_distance, sup_deviation };

// Rare event "the trajectory deviates from the reference by at least delta":
// G(traj) = delta - deviation(traj), met when G <= 0.
struct TargetFunctional {
    TargetKind kind = TargetKind::terminal_distance;
    Trajectory reference;  // the chi = 0 skeleton solution, stride 1
    double delta = 0;

    double deviation(const Trajectory& traj) const {
        if (traj.snapshots.size() != reference.snapshots.size())
            throw std::invalid_argument("TargetFunctional: trajectory/reference length mismatch");
        auto dist = [&](std::size_t i) {
            const ScalarField& a = traj.snapshots[i];
            const ScalarField& b = reference.snapshots[i];
            ScalarField d(a.grid);
            for (std::size_t q = 0; q < d.values.size(); ++q)
                d.values[q] = a.values[q] - b.values[q];
            return l2_norm(d);
        };
        if (kind == TargetKind::terminal_distance) return dist(traj.snapshots.size() - 1);
        double m = 0;
        for (std::size_t i = 0; i < traj.snapshots.size(); ++i) m = std::max(m, dist(i));
        return m;
    }

    double evaluate(const Trajectory& traj) const { return delta - deviation(traj); }
    bool met(const Trajectory& traj) const { return evaluate(traj) <= 0; }
};

inline TargetFunctional make_target(TargetKind kind, const SimSetup& setup, double delta) {
    if (!(delta >= 0)) throw std::invalid_argument("make_target: delta must be >= 0");
    TargetFunctional t;
    t.kind = kind;
    t.delta = delta;
    ControlPath zero = ControlPath::zero(setup.T, setup.noise.m_noise);
    t.reference = solve_skeleton(zero, setup);
    return t;
}

struct ActionOptions {
    int n_segments = 8;
    double rho0 = 10.0;
    int penalty_stages = 5;
    int max_iters = 200;        // per stage
    double grad_tol = 1e-8;
    double fd_step = 1e-6;
    double feas_tol = 1e-4;     // acceptable residual max(G,0)
    std::string gradient = "auto";  // "fd" | "adjoint" | "auto"
};

struct TraceRow {
    int stage = 0, iter = 0;
    double energy = 0, residual = 0, grad_norm = 0;
};

struct ActionResult {
    ControlPath chi_star;
    double I = 0;
    double penalty_residual = 0;
    bool feasible = false;
    std::vector<TraceRow> trace;
};

namespace detail {

// flattened coefficients <-> control path
inline ControlPath unpack_control(const std::vector<double>& c, double T, int segs, int m) {
    ControlPath chi;
    for (int p = 0; p < segs; ++p) {
        chi.knots.push_back(T * (p + 1) / segs);
        U0Vector u(m);
        for (int j = 0; j < m; ++j) u.u[j] = c[std::size_t(p * m + j)];
        chi.values.push_back(std::move(u));
    }
    return chi;
}

inline bool adjoint_applicable(const TargetFunctional& target, const SimSetup& setup) {
    return !setup.advection && setup.noise.kind == SigmaKind::constant &&
           setup.noise.time_amp == 0.0 && target.kind == TargetKind::terminal_distance &&
           !setup.forcing.g_source;
}

class ActionObjective {
  public:
    ActionObjective(const TargetFunctional& target, const SimSetup& setup,
                    const ActionOptions& opts)
        : target_(target), setup_(setup), opts_(opts), stepper_(setup),
          m_(setup.noise.m_noise) {
        use_adjoint_ = opts.gradient == "adjoint" ||
                       (opts.gradient == "auto" && adjoint_applicable(target, setup));
        if (opts.gradient == "adjoint" && !adjoint_applicable(target, setup))
            throw std::invalid_argument(
                "minimize_action: adjoint gradient needs advection off, constant "
                "time-independent noise amplitudes and a terminal target");
    }

    int dim() const { return opts_.n_segments * m_; }

    double energy(const std::vector<double>& c) const {
        double e = 0;
        double dseg = setup_.T / opts_.n_segments;
        for (int p = 0; p < opts_.n_segments; ++p)
            for (int j = 0; j < m_; ++j) {
                double v = c[std::size_t(p * m_ + j)];
                e += 0.5 * dseg * v * v / setup_.noise.q[std::size_t(j)];
            }
        return e;
    }

    // penalized objective; also reports constraint residual max(G,0)
    double value(const std::vector<double>& c, double rho, double* residual = nullptr) const {
        ControlPath chi = unpack_control(c, setup_.T, opts_.n_segments, m_);
        RunOptions ro;
        ro.control = &chi;
        Trajectory traj = stepper_.run(ro);
        double G = target_.evaluate(traj);
        double r = std::max(G, 0.0);
        if (residual) *residual = r;
        return energy(c) + rho * r * r;
    }

    std::vector<double> gradient(const std::vector<double>& c, double rho) const {
        return use_adjoint_ ? grad_adjoint(c, rho) : grad_fd(c, rho);
    }

    std::vector<double> grad_fd(const std::vector<double>& c, double rho) const {
        double f0 = value(c, rho);
        std::vector<double> g(c.size());
        std::vector<double> cp = c;
        for (std::size_t i = 0; i < c.size(); ++i) {
            double h = opts_.fd_step * std::max(1.0, std::abs(c[i]));
            cp[i] = c[i] + h;
            g[i] = (value(cp, rho) - f0) / h;
            cp[i] = c[i];
        }
        return g;
    }

    std::vector<double> grad_adjoint(const std::vector<double>& c, double rho) const {
        const Grid& grid = setup_.grid;
        const int K = setup_.steps();
        const double dt = setup_.dt, dseg = setup_.T / opts_.n_segments;
        ControlPath chi = unpack_control(c, setup_.T, opts_.n_segments, m_);
        RunOptions ro;
        ro.control = &chi;
        Trajectory traj = stepper_.run(ro);
        double G = target_.evaluate(traj);
        double r = std::max(G, 0.0);

        std::vector<double> g(c.size());
        double dsegq;
        for (int p = 0; p < opts_.n_segments; ++p)
            for (int j = 0; j < m_; ++j) {
                dsegq = dseg / setup_.noise.q[std::size_t(j)];
                g[std::size_t(p * m_ + j)] = dsegq * c[std::size_t(p * m_ + j)];
            }
        if (r <= 0) return g;  // penalty inactive

        const ScalarField& thetaT = traj.snapshots.back();
        const ScalarField& ref = target_.reference.snapshots.back();
        ScalarField d(grid);
        for (std::size_t q = 0; q < d.values.size(); ++q)
            d.values[q] = thetaT.values[q] - ref.values[q];
        double dev = l2_norm(d);
        if (dev < 1e-10) return grad_fd(c, rho);  // kink of the deviation at the reference

        // adjoint recursion: nu_K = W d / dev, nu <- M (M + dt A)^{-1} nu
        Eigen::VectorXd nu(long(grid.size()));
        for (long n = 0; n < long(grid.size()); ++n)
            nu[n] = stepper_.mass()[n] * d.values[std::size_t(n)] / dev;
        // d penalty / d dev = -2 rho r; d dev / d u_n = dt * (P^{K-n})^T nu_K
        std::vector<double> coef(std::size_t(K * m_), 0.0);
        for (int n = K - 1; n >= 0; --n) {
            Eigen::VectorXd t = stepper_.implicit_solve(nu);
            for (long q = 0; q < t.size(); ++q) nu[q] = stepper_.mass()[q] * t[q];
            // pairing of nu with the per-mode drift fields s_j omega_j
            for (int j = 0; j < m_; ++j) {
                double s = 0;
                const auto& w = setup_.noise.carrier.modes[std::size_t(j)].values;
                for (long q = 0; q < nu.size(); ++q) s += nu[q] * w[std::size_t(q)];
                coef[std::size_t(n * m_ + j)] = dt * setup_.noise.amp[std::size_t(j)] * s;
            }
        }
        int steps_per_seg = K / opts_.n_segments;
        if (steps_per_seg * opts_.n_segments != K)
            throw std::invalid_argument("minimize_action: segment count must divide step count");
        for (int n = 0; n < K; ++n) {
            int p = n / steps_per_seg;
            for (int j = 0; j < m_; ++j)
                g[std::size_t(p * m_ + j)] += -2.0 * rho * r * coef[std::size_t(n * m_ + j)];
        }
        return g;
    }

  private:
    const TargetFunctional& target_;
    const SimSetup& setup_;
    const ActionOptions& opts_;
    Stepper stepper_;
    int m_;
    bool use_adjoint_ = false;
};

// limited-memory BFGS with Armijo backtracking
inline void lbfgs_minimize(const ActionObjective& obj, std::vector<double>& c, double rho,
                           const ActionOptions& opts, int stage, std::vector<TraceRow>& trace) {
    const std::size_t n = c.size();
    const int mem = 8;
    std::deque<std::vector<double>> S, Yv;
    std::deque<double> rho_lb;
    std::vector<double> g = obj.gradient(c, rho);
    double f = obj.value(c, rho);
    for (int it = 0; it < opts.max_iters; ++it) {
        double gnorm = 0;
        for (double v : g) gnorm += v * v;
        gnorm = std::sqrt(gnorm);
        double res;
        obj.value(c, rho, &res);
        trace.push_back({stage, it, obj.energy(c), res, gnorm});
        if (gnorm < opts.grad_tol) break;

        // two-loop recursion
        std::vector<double> q = g;
        std::vector<double> alpha(S.size());
        for (int i = int(S.size()) - 1; i >= 0; --i) {
            double a = 0;
            for (std::size_t k = 0; k < n; ++k) a += S[i][k] * q[k];
            a *= rho_lb[i];
            alpha[std::size_t(i)] = a;
            for (std::size_t k = 0; k < n; ++k) q[k] -= a * Yv[i][k];
        }
        double gamma = 1.0;
        if (!S.empty()) {
            double sy = 0, yy = 0;
            for (std::size_t k = 0; k < n; ++k) {
                sy += S.back()[k] * Yv.back()[k];
                yy += Yv.back()[k] * Yv.back()[k];
            }
            if (yy > 0) gamma = sy / yy;
        }
        for (auto& v : q) v *= gamma;
        for (std::size_t i = 0; i < S.size(); ++i) {
            double b = 0;
            for (std::size_t k = 0; k < n; ++k) b += Yv[i][k] * q[k];
            b *= rho_lb[i];
            double a = alpha[i];
            for (std::size_t k = 0; k < n; ++k) q[k] += (a - b) * S[i][k];
        }
        // descent direction -q; Armijo backtracking
        double dg = 0;
        for (std::size_t k = 0; k < n; ++k) dg -= q[k] * g[k];
        if (dg >= 0) {  // fall back to steepest descent
            q = g;
            dg = -gnorm * gnorm;
        }
        double step = 1.0;
        std::vector<double> cn(n);
        double fn = f;
        bool ok = false;
        for (int ls = 0; ls < 40; ++ls) {
            for (std::size_t k = 0; k < n; ++k) cn[k] = c[k] - step * q[k];
            fn = obj.value(cn, rho);
            if (fn <= f + 1e-4 * step * dg) {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if (!ok) break;  // stagnation
        std::vector<double> gn = obj.gradient(cn, rho);
        std::vector<double> s(n), y(n);
        double sy = 0;
        for (std::size_t k = 0; k < n; ++k) {
            s[k] = cn[k] - c[k];
            y[k] = gn[k] - g[k];
            sy += s[k] * y[k];
        }
        if (sy > 1e-14) {
            S.push_back(s);
            Yv.push_back(y);
            rho_lb.push_back(1.0 / sy);
            if (int(S.size()) > mem) {
                S.pop_front();
                Yv.pop_front();
                rho_lb.pop_front();
            }
        }
        c = cn;
        f = fn;
        g = gn;
    }
}

}  // namespace detail

inline double control_energy_flat(const std::vector<double>& c, const SimSetup& setup,
                                  int n_segments) {
    ControlPath chi = detail::unpack_control(c, setup.T, n_segments, setup.noise.m_noise);
    return control_energy(chi, setup.noise);
}

inline ActionResult minimize_action(const TargetFunctional& target, const SimSetup& setup,
                                    const ActionOptions& opts,
                                    const ControlPath* warm_start = nullptr) {
    if (int(target.reference.snapshots.size()) != setup.steps() + 1)
        throw std::invalid_argument("minimize_action: reference must be a stride-1 trajectory");
    detail::ActionObjective obj(target, setup, opts);
    std::vector<double> c(std::size_t(obj.dim()), 0.0);
    if (warm_start) {
        if (warm_start->segments() != opts.n_segments ||
            warm_start->modes() != setup.noise.m_noise)
            throw std::invalid_argument("minimize_action: warm start shape mismatch");
        for (int p = 0; p < opts.n_segments; ++p)
            for (int j = 0; j < setup.noise.m_noise; ++j)
                c[std::size_t(p * setup.noise.m_noise + j)] = warm_start->values[std::size_t(p)].u[std::size_t(j)];
    }
    ActionResult res;
    double rho = opts.rho0;
    for (int stage = 0; stage < opts.penalty_stages; ++stage) {
        detail::lbfgs_minimize(obj, c, rho, opts, stage, res.trace);
        double resid;
        obj.value(c, rho, &resid);
        if (resid <= opts.feas_tol && stage >= 1) break;  // feasible, stop escalating
        rho *= 4.0;
    }
    double resid;
    obj.value(c, rho, &resid);
    res.chi_star = detail::unpack_control(c, setup.T, opts.n_segments, setup.noise.m_noise);
    res.I = control_energy(res.chi_star, setup.noise);
    res.penalty_residual = resid;
    res.feasible = resid <= opts.feas_tol;
    return res;
}

struct RateCurveEntry {
    double delta = 0, I = 0, residual = 0;
    bool feasible = false;
};

struct RateCurve {
    std::vector<RateCurveEntry> entries;
    bool monotone = true;
};

inline RateCurve rate_curve(TargetKind kind, const std::vector<double>& deltas,
                            const SimSetup& setup, const ActionOptions& opts) {
    for (std::size_t i = 1; i < deltas.size(); ++i)
        if (!(deltas[i] > deltas[i - 1]))
            throw std::invalid_argument("rate_curve: deltas must be ascending");
    RateCurve curve;
    TargetFunctional target = make_target(kind, setup, 0.0);
    ControlPath warm;
    bool have_warm = false;
    for (double d : deltas) {
        target.delta = d;
        ActionResult r = minimize_action(target, setup, opts, have_warm ? &warm : nullptr);
        curve.entries.push_back({d, r.I, r.penalty_residual, r.feasible});
        warm = r.chi_star;
        have_warm = true;
        std::size_t n = curve.entries.size();
        if (n >= 2 && curve.entries[n - 1].I < curve.entries[n - 2].I - 1e-9)
            curve.monotone = false;
    }
    return curve;
}

inline void write_action_csv(const ActionResult& res, std::ostream& os) {
    os << "stage,iter,energy,residual,grad_norm\n";
    for (const auto& r : res.trace)
        os << r.stage << ',' << r.iter << ',' << r.energy << ',' << r.residual << ','
           << r.grad_norm << '\n';
}

}  // namespace pgld

#endif
