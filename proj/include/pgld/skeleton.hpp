#ifndef PGLD_SKELETON_HPP
#define PGLD_SKELETON_HPP

#include "pgld/stepper.hpp"

namespace pgld {

inline void chi_check(const ControlPath& control, const SimSetup& setup);

// Deterministic controlled equation: noise replaced by the drift sigma(t,theta) chi(t).
inline Trajectory solve_skeleton(const ControlPath& control, const SimSetup& setup,
                                 int snapshot_stride = 1) {
    chi_check(control, setup);
    Stepper st(setup);
    RunOptions opt;
    opt.eps = 0;
    opt.control = &control;
    opt.snapshot_stride = snapshot_stride;
    return st.run(opt);
}

inline void chi_check(const ControlPath& control, const SimSetup& setup) {
    control.validate();
    if (control.modes() != setup.noise.m_noise)
        throw std::invalid_argument("skeleton: control mode count != noise modes");
    if (control.horizon() < setup.T - 1e-9)
        throw std::invalid_argument("skeleton: control not defined on the full horizon");
}

struct PicardResult {
    Trajectory traj;
    std::vector<int> sweeps_per_window;
    double max_contraction = 0;  // worst observed ratio of successive sweep differences
};

// Fixed-point solve: on each window, repeatedly solve the linear equation with
// sigma(t, eta(t)) frozen at the previous iterate until successive iterates
// agree in sup-l2, then continue from the window's final state.
inline PicardResult picard_solve(const ControlPath& control, const SimSetup& setup,
                                 double window_T0, int max_sweeps = 50, double tol = 1e-12) {
    chi_check(control, setup);
    if (!(window_T0 > 0)) throw std::invalid_argument("picard_solve: window_T0 must be positive");
    Stepper st(setup);
    const int K = setup.steps();
    const int win_steps = std::max(1, int(std::llround(window_T0 / setup.dt)));

    PicardResult res;
    res.traj.dt = setup.dt;
    res.traj.snapshot_stride = 1;
    SimState s0 = st.initial_state();
    auto record = [&](const SimState& s) {
        NormReport nr = compute_norms(s.theta, setup.params);
        res.traj.times.push_back(s.t);
        res.traj.l2sq.push_back(nr.l2 * nr.l2);
        res.traj.v2sq.push_back(nr.v2 * nr.v2);
        res.traj.snapshots.push_back(s.theta);
    };
    record(s0);

    int n0 = 0;
    while (n0 < K) {
        int n1 = std::min(K, n0 + win_steps);
        int len = n1 - n0;
        // eta at the step start times t_{n0} .. t_{n1-1}
        std::vector<ScalarField> eta(std::size_t(len), s0.theta);
        std::vector<ScalarField> window_thetas;
        double prev_diff = -1;
        int sweep = 0;
        for (;; ++sweep) {
            if (sweep >= max_sweeps)
                throw std::runtime_error(
                    "picard_solve: no contraction on window starting at t=" +
                    std::to_string(s0.t) + " (last difference " + std::to_string(prev_diff) +
                    "); shrink window_T0");
            SimState s = s0;
            std::vector<ScalarField> cur;
            cur.reserve(std::size_t(len));
            double sup_diff = 0;
            for (int i = 0; i < len; ++i) {
                st.step(s, 0.0, nullptr, &control, &eta[std::size_t(i)]);
                cur.push_back(s.theta);
                if (!window_thetas.empty()) {
                    // previous sweep's state at the same node
                    ScalarField d(setup.grid);
                    for (std::size_t q = 0; q < d.values.size(); ++q)
                        d.values[q] = s.theta.values[q] - window_thetas[std::size_t(i)].values[q];
                    sup_diff = std::max(sup_diff, l2_norm(d));
                }
            }
            if (window_thetas.empty()) sup_diff = 1.0;  // first sweep: force a check sweep
            if (sweep >= 2 && prev_diff > tol && sup_diff > tol)
                res.max_contraction = std::max(res.max_contraction, sup_diff / prev_diff);
            window_thetas = cur;
            if (sup_diff < tol) break;
            if (prev_diff > 0 && sup_diff > 10.0 * prev_diff)
                throw std::runtime_error("picard_solve: sweeps diverging; shrink window_T0");
            prev_diff = sup_diff;
            // next iterate's eta: state at t_{n0} is s0.theta, then cur[0..len-2]
            for (int i = len - 1; i >= 1; --i) eta[std::size_t(i)] = cur[std::size_t(i - 1)];
        }
        res.sweeps_per_window.push_back(sweep + 1);
        // commit the window
        SimState s = s0;
        for (int i = 0; i < len; ++i) {
            s.t = s0.t + (i + 1) * setup.dt;
            s.theta = window_thetas[std::size_t(i)];
            record(s);
        }
        s0.t = s.t;
        s0.theta = s.theta;
        st.diagnose(s0);
        n0 = n1;
    }
    res.traj.noise_work.assign(std::size_t(K), 0.0);
    res.traj.iters.assign(std::size_t(K), 1);
    return res;
}

// A-priori bound audit: l2(theta)^2 + int v2^2 against
// C (int |g|^2 + t |theta*|^2 + K int ||chi||_{U0}^2 + l2(theta0)^2) exp(C K int ||chi||^2).
inline GronwallAudit skeleton_energy_bound(const Trajectory& traj, const ControlPath& control,
                                           const SimSetup& setup) {
    const std::size_t n = traj.times.size();
    if (traj.l2sq.size() != n || traj.v2sq.size() != n)
        throw std::invalid_argument("skeleton_energy_bound: monitors missing");
    const PhysParams& p = setup.params;
    double C = 4.0 * std::max({1.0, 1.0 / poincare_constant_k2(p), p.beta_robin});
    double Kg = std::max(setup.noise.K_growth, 1.0);
    double ts_sq = 0;
    if (setup.forcing.theta_star.grid.nx != 0)
        ts_sq = surface_inner(setup.forcing.theta_star, setup.forcing.theta_star);

    std::vector<double> Y = traj.l2sq, X = traj.v2sq, a(n, 0.0), Z(n, 0.0);
    double g_int = 0, chi_int = 0, prev_gsq = 0;
    if (setup.forcing.g_source) {
        ScalarField g0 = setup.forcing.g_at(traj.times[0], setup.grid);
        prev_gsq = l2_inner(g0, g0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        double chi_sq = setup.noise.u0_norm_sq(
            control.value_at(std::min(traj.times[i] + 1e-12, setup.T)));
        a[i] = 1.0 + C * Kg * chi_sq;
        if (i > 0) {
            double dt = traj.times[i] - traj.times[i - 1];
            double gsq = prev_gsq;
            if (setup.forcing.g_source) {
                ScalarField gi = setup.forcing.g_at(traj.times[i], setup.grid);
                gsq = l2_inner(gi, gi);
            }
            g_int += 0.5 * dt * (prev_gsq + gsq);
            prev_gsq = gsq;
            double chi_prev = setup.noise.u0_norm_sq(
                control.value_at(std::min(traj.times[i - 1] + 1e-12, setup.T)));
            chi_int += 0.5 * dt * (chi_prev + chi_sq);
        }
        Z[i] = C * (g_int + traj.times[i] * ts_sq + Kg * chi_int + traj.l2sq[0]);
    }
    return gronwall_audit(traj.times, Y, X, a, Z);
}

}  // namespace pgld

#endif
