#ifndef PGLD_STEPPER_HPP
#define PGLD_STEPPER_HPP

#include <Eigen/SparseCholesky>
#include <optional>

#include "pgld/control.hpp"
#include "pgld/noise.hpp"
#include "pgld/velocity.hpp"

namespace pgld {

struct SimState {
    double t = 0;
    ScalarField theta;
    HVectorField v;
    SurfaceField p_s;
};

struct Trajectory {
    std::vector<double> times;      // t_0 .. t_K
    std::vector<double> l2sq;       // per time node
    std::vector<double> v2sq;       // per time node
    std::vector<double> noise_work; // per step: 2 sqrt(eps) <theta, s dW> + eps |s dW|^2
    std::vector<int> iters;         // per step linear-solve iteration count
    std::vector<ScalarField> snapshots;
    int snapshot_stride = 1;
    double dt = 0;

    const ScalarField& final_theta() const { return snapshots.back(); }
};

// Full problem description for one run.
struct SimSetup {
    Grid grid;
    PhysParams params;
    ForcingSet forcing;
    NoiseModel noise;
    ScalarField theta0;
    double T = 1.0, dt = 0.01;
    bool advection = true;  // explicit B(v,theta) term
    bool velocity = true;   // diagnose (v, p_s); required when advection is on

    int steps() const { return int(std::llround(T / dt)); }

    void validate() const {
        params.validate();
        noise.validate();
        if (!(T > 0) || !(dt > 0)) throw std::invalid_argument("SimSetup: T and dt must be positive");
        double k = T / dt;
        if (std::abs(k - std::llround(k)) > 1e-9 * std::max(1.0, k))
            throw std::invalid_argument("SimSetup: dt must divide T");
        if (!theta0.grid.same_as(grid)) throw std::invalid_argument("SimSetup: theta0 grid mismatch");
        if (!noise.carrier.grid.same_as(grid))
            throw std::invalid_argument("SimSetup: noise carrier grid mismatch");
        if (advection && !velocity)
            throw std::invalid_argument("SimSetup: advection requires the velocity diagnosis");
        if (forcing.theta_star.grid.nx != 0) validate_theta_star(forcing.theta_star);
    }
};

struct RunOptions {
    double eps = 0;
    const ControlPath* control = nullptr;
    std::uint64_t master_seed = 0;
    std::uint64_t sample_index = 0;
    int snapshot_stride = 1;
    // externally supplied Wiener increments (coupled-path studies); overrides rng
    const std::vector<U0Vector>* increments = nullptr;
    // frozen states feeding sigma's theta argument (Picard iteration); index = step
    const std::vector<ScalarField>* sigma_states = nullptr;
};

// Semi-implicit Euler-Maruyama: diffusion implicit, advection / noise / control
// drift explicit; (v, p_s) re-diagnosed once per step from the updated theta.
class Stepper {
  public:
    explicit Stepper(const SimSetup& setup) : setup_(setup) {
        setup_.validate();
        const Grid& g = setup_.grid;
        mass_ = detail::mass_diagonal(g);
        Eigen::SparseMatrix<double> A = detail::a2_stiffness_matrix(g, setup_.params);
        Eigen::SparseMatrix<double> M(long(g.size()), long(g.size()));
        std::vector<Eigen::Triplet<double>> mt;
        mt.reserve(g.size());
        for (long n = 0; n < long(g.size()); ++n) mt.emplace_back(n, n, mass_[n]);
        M.setFromTriplets(mt.begin(), mt.end());
        sys_ = M + setup_.dt * A;
        chol_.compute(sys_);
        if (chol_.info() != Eigen::Success)
            throw std::runtime_error("Stepper: implicit-system factorization failed");
        if (setup_.velocity)
            vsolver_ = std::make_unique<DiagnosticSolver>(g, setup_.params);
        // constant part of the rhs: Robin relaxation toward theta*
        robin_rhs_.assign(g.size(), 0.0);
        if (setup_.forcing.theta_star.grid.nx != 0) {
            int top = g.nz - 1;
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i)
                    robin_rhs_[g.idx(i, j, top)] =
                        setup_.params.beta_robin * g.ws(i, j) * setup_.forcing.theta_star(i, j);
        }
    }

    const SimSetup& setup() const { return setup_; }

    // (M + dt A)^{-1} applied to a coefficient vector (adjoint computations)
    Eigen::VectorXd implicit_solve(const Eigen::VectorXd& rhs) const { return chol_.solve(rhs); }
    const Eigen::VectorXd& mass() const { return mass_; }

    SimState initial_state() const {
        SimState s;
        s.t = 0;
        s.theta = setup_.theta0;
        diagnose(s);
        return s;
    }

    void diagnose(SimState& s) const {
        if (vsolver_) {
            DiagnosticSolution d = vsolver_->solve(s.theta, setup_.forcing.mu);
            s.v = std::move(d.v);
            s.p_s = std::move(d.p_s);
        } else {
            s.v = HVectorField(setup_.grid);
            s.p_s = SurfaceField(setup_.grid);
        }
    }

    // One step; returns the realized noise-work increment
    // 2 sqrt(eps) <theta_n, sigma dW> + eps l2(sigma dW)^2.
    double step(SimState& s, double eps, const U0Vector* dW, const ControlPath* chi,
                const ScalarField* sigma_state = nullptr) const {
        const Grid& g = setup_.grid;
        const double dt = setup_.dt;
        const ScalarField& sig_arg = sigma_state ? *sigma_state : s.theta;

        Eigen::VectorXd rhs(long(g.size()));
        for (long n = 0; n < long(g.size()); ++n)
            rhs[n] = mass_[n] * s.theta.values[std::size_t(n)] + dt * robin_rhs_[std::size_t(n)];

        if (setup_.forcing.g_source) {
            ScalarField gsrc = setup_.forcing.g_at(s.t, g);
            for (long n = 0; n < long(g.size()); ++n)
                rhs[n] += dt * mass_[n] * gsrc.values[std::size_t(n)];
        }
        if (setup_.advection) {
            ScalarField adv = advect(s.v, s.theta, setup_.params);
            for (long n = 0; n < long(g.size()); ++n)
                rhs[n] -= dt * mass_[n] * adv.values[std::size_t(n)];
        }
        if (chi) {
            ScalarField drift = apply_sigma(setup_.noise, s.t, sig_arg,
                                            chi->value_at(s.t + 0.5 * dt));
            for (long n = 0; n < long(g.size()); ++n)
                rhs[n] += dt * mass_[n] * drift.values[std::size_t(n)];
        }
        double nw = 0;
        if (dW && eps > 0) {
            ScalarField xi = apply_sigma(setup_.noise, s.t, sig_arg, *dW);
            double se = std::sqrt(eps);
            nw = 2.0 * se * l2_inner(s.theta, xi) + eps * l2_inner(xi, xi);
            for (long n = 0; n < long(g.size()); ++n)
                rhs[n] += se * mass_[n] * xi.values[std::size_t(n)];
        }

        Eigen::VectorXd sol = chol_.solve(rhs);
        if (chol_.info() != Eigen::Success)
            throw std::runtime_error("Stepper: implicit solve failed at t=" + std::to_string(s.t));
        for (long n = 0; n < long(g.size()); ++n) {
            double v = sol[n];
            if (!std::isfinite(v))
                throw std::runtime_error("Stepper: non-finite state at t=" + std::to_string(s.t));
            s.theta.values[std::size_t(n)] = v;
        }
        s.t += dt;
        diagnose(s);
        return nw;
    }

    Trajectory run(const RunOptions& opt) const {
        const int K = setup_.steps();
        Trajectory traj;
        traj.dt = setup_.dt;
        traj.snapshot_stride = std::max(1, opt.snapshot_stride);
        SimState s = initial_state();
        auto record_node = [&](const SimState& st) {
            NormReport nr = compute_norms(st.theta, setup_.params);
            traj.times.push_back(st.t);
            traj.l2sq.push_back(nr.l2 * nr.l2);
            traj.v2sq.push_back(nr.v2 * nr.v2);
        };
        record_node(s);
        traj.snapshots.push_back(s.theta);
        RngStream rng(opt.master_seed, opt.sample_index, 0);
        const bool noisy = opt.eps > 0;
        for (int n = 0; n < K; ++n) {
            std::optional<U0Vector> dw;
            if (opt.increments) {
                if (int(opt.increments->size()) != K)
                    throw std::invalid_argument("Stepper: increment count mismatch");
                dw = (*opt.increments)[n];
            } else if (noisy) {
                rng.set_step(std::uint64_t(n));
                dw = sample_increment(setup_.noise, setup_.dt, rng);
            }
            const ScalarField* frozen = nullptr;
            if (opt.sigma_states) {
                if (int(opt.sigma_states->size()) <= n)
                    throw std::invalid_argument("Stepper: frozen sigma states too short");
                frozen = &(*opt.sigma_states)[n];
            }
            double nw = step(s, opt.eps, dw ? &*dw : nullptr, opt.control, frozen);
            traj.noise_work.push_back(nw);
            traj.iters.push_back(1);
            record_node(s);
            if ((n + 1) % traj.snapshot_stride == 0 || n + 1 == K)
                traj.snapshots.push_back(s.theta);
        }
        return traj;
    }

  private:
    SimSetup setup_;
    Eigen::VectorXd mass_;
    std::vector<double> robin_rhs_;
    Eigen::SparseMatrix<double> sys_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol_;
    std::unique_ptr<DiagnosticSolver> vsolver_;
};

inline Trajectory simulate(const SimSetup& setup, double eps, const ControlPath* control,
                           std::uint64_t seed, std::uint64_t sample_index = 0,
                           int snapshot_stride = 1) {
    Stepper st(setup);
    RunOptions opt;
    opt.eps = eps;
    opt.control = control;
    opt.master_seed = seed;
    opt.sample_index = sample_index;
    opt.snapshot_stride = snapshot_stride;
    return st.run(opt);
}

// ---------------------------------------------------------------------------
// Energy audit: feeds the recorded monitors into the Gronwall checker against
// a data-built budget
//   Z(t) = l2(theta0)^2 + C int |g|^2 + C t |theta*|^2_Gamma + running noise work,
// with a == 1 absorbing the Young-inequality cross terms.
// ---------------------------------------------------------------------------

inline GronwallAudit energy_monitor(const Trajectory& traj, const SimSetup& setup, double eps) {
    (void)eps;
    const std::size_t n = traj.times.size();
    if (traj.l2sq.size() != n || traj.v2sq.size() != n || traj.noise_work.size() + 1 != n)
        throw std::invalid_argument("energy_monitor: trajectory monitors missing or inconsistent");
    for (double v : traj.l2sq)
        if (!std::isfinite(v)) throw std::invalid_argument("energy_monitor: non-finite monitor");
    const PhysParams& p = setup.params;
    double C = 4.0 * std::max({1.0, 1.0 / poincare_constant_k2(p), p.beta_robin});
    double ts_sq = 0;
    if (setup.forcing.theta_star.grid.nx != 0)
        ts_sq = surface_inner(setup.forcing.theta_star, setup.forcing.theta_star);

    std::vector<double> Y = traj.l2sq, X = traj.v2sq, a(n, 1.0), Z(n, 0.0);
    double g_int = 0, nw_cum = 0, nw_max = 0;
    double prev_gsq = 0;
    if (setup.forcing.g_source) {
        ScalarField g0 = setup.forcing.g_at(traj.times[0], setup.grid);
        prev_gsq = l2_inner(g0, g0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            double dt = traj.times[i] - traj.times[i - 1];
            double gsq = prev_gsq;
            if (setup.forcing.g_source) {
                ScalarField gi = setup.forcing.g_at(traj.times[i], setup.grid);
                gsq = l2_inner(gi, gi);
            }
            g_int += 0.5 * dt * (prev_gsq + gsq);
            prev_gsq = gsq;
            nw_cum += traj.noise_work[i - 1];
            nw_max = std::max(nw_max, nw_cum);
        }
        Z[i] = traj.l2sq[0] + C * g_int + C * traj.times[i] * ts_sq + nw_max;
    }
    return gronwall_audit(traj.times, Y, X, a, Z);
}

// ---------------------------------------------------------------------------
// Dyadic time-increment statistic
//   S_N = sum_k int_{t_{k-1}}^{t_k} l2(theta(s) - theta(t_k))^2 ds,  t_k = k T 2^{-N},
// averaged over paths staying inside G_R = {sup l2^2 + int v2^2 <= R}.
// ---------------------------------------------------------------------------

struct IncrementReport {
    std::vector<int> levels;
    std::vector<double> S;      // ensemble mean per level
    double slope = 0;           // least-squares slope of log2 S vs N
    int paths_kept = 0, paths_total = 0;
};

inline IncrementReport increment_statistic(const SimSetup& setup, double eps,
                                           const ControlPath* control,
                                           const std::vector<int>& N_list, int n_paths,
                                           std::uint64_t seed,
                                           double R = std::numeric_limits<double>::infinity()) {
    if (N_list.empty()) throw std::invalid_argument("increment_statistic: empty level list");
    const int K = setup.steps();
    for (int N : N_list) {
        long blocks = 1l << N;
        if (K % blocks != 0)
            throw std::invalid_argument("increment_statistic: dt too coarse for level " +
                                        std::to_string(N));
    }
    Stepper st(setup);
    IncrementReport rep;
    rep.levels = N_list;
    rep.S.assign(N_list.size(), 0.0);
    rep.paths_total = n_paths;
    const double dt = setup.dt;
    for (int path = 0; path < n_paths; ++path) {
        RunOptions opt;
        opt.eps = eps;
        opt.control = control;
        opt.master_seed = seed;
        opt.sample_index = std::uint64_t(path);
        opt.snapshot_stride = 1;
        Trajectory traj = st.run(opt);
        // G_R membership
        double supl2 = 0, intv2 = 0;
        for (std::size_t i = 0; i < traj.times.size(); ++i) {
            supl2 = std::max(supl2, traj.l2sq[i]);
            if (i > 0) intv2 += 0.5 * dt * (traj.v2sq[i] + traj.v2sq[i - 1]);
        }
        if (supl2 + intv2 > R) continue;
        ++rep.paths_kept;
        for (std::size_t li = 0; li < N_list.size(); ++li) {
            int blocks = 1 << N_list[li];
            int stride = K / blocks;
            double S = 0;
            for (int b = 0; b < blocks; ++b) {
                const ScalarField& anchor = traj.snapshots[std::size_t((b + 1) * stride)];
                // trapezoid over the block of l2(theta(s) - anchor)^2
                for (int s2 = 0; s2 <= stride; ++s2) {
                    const ScalarField& th = traj.snapshots[std::size_t(b * stride + s2)];
                    ScalarField d(setup.grid);
                    for (std::size_t q = 0; q < d.values.size(); ++q)
                        d.values[q] = th.values[q] - anchor.values[q];
                    double val = l2_inner(d, d);
                    double w = (s2 == 0 || s2 == stride) ? 0.5 : 1.0;
                    S += w * dt * val;
                }
            }
            rep.S[li] += S;
        }
    }
    if (rep.paths_kept == 0) throw std::runtime_error("increment_statistic: no path stayed in G_R");
    for (double& s : rep.S) s /= rep.paths_kept;
    // least squares log2 S vs N
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = int(N_list.size());
    for (int i = 0; i < m; ++i) {
        double x = N_list[i], y = std::log2(std::max(rep.S[i], 1e-300));
        sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    rep.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return rep;
}

// ---------------------------------------------------------------------------
// Pathwise stability with the exponential weight phi(t) = exp(-L2 int |theta_b|^2).
// ---------------------------------------------------------------------------

struct StabilityReport {
    std::vector<double> times;
    std::vector<double> d;   // weighted squared distance
    bool monotone = false;   // d non-increasing within per-step tolerance
    double max_uptick = 0;
};

inline StabilityReport pathwise_stability(const SimSetup& setup, const ScalarField& theta0_a,
                                          const ScalarField& theta0_b, double eps,
                                          std::uint64_t seed, double L2_weight,
                                          double per_step_tol = 1e-10) {
    SimSetup sa = setup, sb = setup;
    sa.theta0 = theta0_a;
    sb.theta0 = theta0_b;
    Stepper st_a(sa), st_b(sb);
    const int K = setup.steps();
    // shared noise path
    std::vector<U0Vector> dW;
    dW.reserve(std::size_t(K));
    RngStream rng(seed, 0, 0);
    for (int n = 0; n < K; ++n) {
        rng.set_step(std::uint64_t(n));
        dW.push_back(sample_increment(setup.noise, setup.dt, rng));
    }
    SimState a = st_a.initial_state(), b = st_b.initial_state();
    StabilityReport rep;
    auto dist_sq = [&](const SimState& s1, const SimState& s2) {
        ScalarField d(setup.grid);
        for (std::size_t q = 0; q < d.values.size(); ++q)
            d.values[q] = s1.theta.values[q] - s2.theta.values[q];
        return l2_inner(d, d);
    };
    double phi_exp = 0;  // accumulates L2_weight * int v2(theta_b)^2
    rep.times.push_back(0);
    rep.d.push_back(dist_sq(a, b));
    rep.monotone = true;
    for (int n = 0; n < K; ++n) {
        NormReport nb0 = compute_norms(b.theta, setup.params);
        const U0Vector* w = eps > 0 ? &dW[std::size_t(n)] : nullptr;
        st_a.step(a, eps, w, nullptr);
        st_b.step(b, eps, w, nullptr);
        NormReport nb1 = compute_norms(b.theta, setup.params);
        phi_exp += 0.5 * setup.dt * (nb0.v2 * nb0.v2 + nb1.v2 * nb1.v2) * L2_weight;
        double d = std::exp(-phi_exp) * dist_sq(a, b);
        double uptick = d - rep.d.back();
        rep.max_uptick = std::max(rep.max_uptick, uptick);
        if (uptick > per_step_tol) rep.monotone = false;
        rep.times.push_back(a.t);
        rep.d.push_back(d);
    }
    return rep;
}

// Monitor CSV: t, l2^2, v2^2, dt, iters (one row per step, first row at t_1).
inline void write_monitor_csv(const Trajectory& traj, std::ostream& os) {
    os << "t,l2sq,v2sq,dt,iters\n";
    char buf[64];
    auto put = [&](double x) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
        (void)ec;
        os.write(buf, p - buf);
    };
    for (std::size_t i = 1; i < traj.times.size(); ++i) {
        put(traj.times[i]); os << ',';
        put(traj.l2sq[i]); os << ',';
        put(traj.v2sq[i]); os << ',';
        put(traj.dt); os << ',';
        os << traj.iters[i - 1] << '\n';
    }
}

}  // namespace pgld

#endif
