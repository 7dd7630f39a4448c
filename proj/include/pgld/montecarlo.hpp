#ifndef PGLD_MONTECARLO_HPP
#define PGLD_MONTECARLO_HPP

#include <atomic>
#include <cstdlib>
#include <thread>

#include "pgld/action.hpp"

namespace pgld {

struct TailEstimate {
    double eps = 0, delta = 0;
    int n_samples = 0;
    double p_hat = 0;
    double ci_low = 0, ci_high = 0;   // 95% interval
    double n_effective = 0;           // equals n_samples for crude MC
    double mean_weight = 1.0;         // Girsanov weights, no event restriction
    double mean_weight_se = 0;
    double estimator_variance = 0;    // per-sample variance of the (weighted) indicator
};

inline int worker_count() {
    if (const char* env = std::getenv("PGLD_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

namespace detail {

// deterministic parallel map: results land in index order regardless of schedule
template <class F>
inline void parallel_for(int n, F&& body) {
    int workers = std::min(worker_count(), std::max(1, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= n) return;
                body(i);
            }
        });
    for (auto& t : pool) t.join();
}

inline void wilson_interval(double p, int n, double& lo, double& hi) {
    const double z = 1.959963984540054;
    double z2 = z * z;
    double den = 1.0 + z2 / n;
    double center = (p + z2 / (2.0 * n)) / den;
    double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * double(n) * n)) / den;
    lo = std::max(0.0, center - half);
    hi = std::min(1.0, center + half);
}

}  // namespace detail

// Crude Monte Carlo tail probability of the target event.
inline TailEstimate estimate_tail(const SimSetup& setup, double eps, const TargetFunctional& target,
                                  int n_samples, std::uint64_t seed) {
    if (n_samples < 100) throw std::invalid_argument("estimate_tail: need >= 100 samples");
    Stepper st(setup);
    std::vector<char> hit(std::size_t(n_samples), 0);
    detail::parallel_for(n_samples, [&](int i) {
        RunOptions opt;
        opt.eps = eps;
        opt.master_seed = seed;
        opt.sample_index = std::uint64_t(i);
        Trajectory traj = st.run(opt);
        hit[std::size_t(i)] = target.met(traj) ? 1 : 0;
    });
    long hits = 0;
    for (char h : hit) hits += h;
    TailEstimate e;
    e.eps = eps;
    e.delta = target.delta;
    e.n_samples = n_samples;
    e.p_hat = double(hits) / n_samples;
    detail::wilson_interval(e.p_hat, n_samples, e.ci_low, e.ci_high);
    e.n_effective = n_samples;
    e.estimator_variance = e.p_hat * (1.0 - e.p_hat);
    return e;
}

struct LdpFit {
    double slope = 0;        // of log p_hat vs 1/eps (expected negative, ~ -I)
    double slope_se = 0;
    double intercept = 0;
    double ratio = 0;        // slope / (-I_ref)
    bool valid = false;
    std::string note;
};

inline LdpFit ldp_fit(const std::vector<double>& eps_list,
                      const std::vector<TailEstimate>& estimates, double I_ref) {
    if (eps_list.size() != estimates.size() || eps_list.size() < 3)
        throw std::invalid_argument("ldp_fit: need >= 3 matched (eps, estimate) pairs");
    std::vector<double> x, y;
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        if (estimates[i].p_hat <= 0) {
            LdpFit f;
            f.note = "zero hit count at eps=" + std::to_string(eps_list[i]) +
                     "; needs importance sampling";
            return f;
        }
        x.push_back(1.0 / eps_list[i]);
        y.push_back(std::log(estimates[i].p_hat));
    }
    std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i]; sy += y[i]; sxx += x[i] * x[i]; sxy += x[i] * y[i];
    }
    double den = double(n) * sxx - sx * sx;
    LdpFit f;
    f.slope = (double(n) * sxy - sx * sy) / den;
    f.intercept = (sy - f.slope * sx) / n;
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = y[i] - f.intercept - f.slope * x[i];
        ss += r * r;
    }
    if (n > 2) f.slope_se = std::sqrt(ss / (double(n) - 2) / (sxx - sx * sx / double(n)));
    f.ratio = I_ref != 0 ? f.slope / (-I_ref) : 0;
    if (f.slope >= 0) {
        f.note = "non-negative slope: probabilities must shrink with eps";
        return f;
    }
    f.valid = true;
    return f;
}

// Girsanov-tilted estimator: simulate with the drift sigma chi* added and weight
// each path by the inverse change-of-measure density so the weighted hit
// fraction is unbiased for the original dynamics.  Norm-based targets are
// symmetric under chi -> -chi, so a one-sided tilt would silently miss the
// mirror half of the event; we therefore tilt half the samples by +chi* and
// half by -chi* and weight against the two-component mixture density,
//   w = exp(C) / cosh(B),   C = (1/2eps) int ||chi||^2 dt,
//   B = (1/sqrt(eps)) int <chi, dW~>  (dW~ = increments in original coordinates).
inline TailEstimate girsanov_importance_sampling(const SimSetup& setup, const ControlPath& chi_star,
                                                 double eps, const TargetFunctional& target,
                                                 int n_samples, std::uint64_t seed) {
    if (n_samples < 100)
        throw std::invalid_argument("girsanov_importance_sampling: need >= 100 samples");
    if (!(eps > 0)) throw std::invalid_argument("girsanov_importance_sampling: eps must be > 0");
    chi_check(chi_star, setup);
    Stepper st(setup);
    const int K = setup.steps();
    const double dt = setup.dt;
    std::vector<double> w(std::size_t(n_samples), 0.0);
    std::vector<char> hit(std::size_t(n_samples), 0);
    const double se = std::sqrt(eps);
    ControlPath chi_neg = chi_star;
    for (auto& v : chi_neg.values)
        for (double& u : v.u) u = -u;
    detail::parallel_for(n_samples, [&](int i) {
        const double sign = (i % 2 == 0) ? 1.0 : -1.0;
        const ControlPath& tilt = sign > 0 ? chi_star : chi_neg;
        RngStream rng(seed, std::uint64_t(i), 0);
        std::vector<U0Vector> dW;
        dW.reserve(std::size_t(K));
        double B = 0, C = 0;
        for (int n = 0; n < K; ++n) {
            rng.set_step(std::uint64_t(n));
            U0Vector inc = sample_increment(setup.noise, dt, rng);
            double t_mid = (n + 0.5) * dt;
            const U0Vector& chi = chi_star.value_at(t_mid);
            B += (1.0 / se) * setup.noise.u0_inner(chi, inc);
            C += (0.5 / eps) * setup.noise.u0_norm_sq(chi) * dt;
            dW.push_back(std::move(inc));
        }
        B += 2.0 * sign * C;  // shift of the innovations back to original coordinates
        RunOptions opt;
        opt.eps = eps;
        opt.control = &tilt;
        opt.increments = &dW;
        opt.master_seed = seed;
        opt.sample_index = std::uint64_t(i);
        Trajectory traj = st.run(opt);
        // e^C / cosh(B), evaluated without overflow
        double ab = std::abs(B);
        w[std::size_t(i)] = 2.0 * std::exp(C - ab) / (1.0 + std::exp(-2.0 * ab));
        hit[std::size_t(i)] = target.met(traj) ? 1 : 0;
    });
    double sw = 0, sww = 0, swh = 0, swwhh = 0;
    for (int i = 0; i < n_samples; ++i) {
        double wi = w[std::size_t(i)];
        sw += wi;
        sww += wi * wi;
        double v = wi * hit[std::size_t(i)];
        swh += v;
        swwhh += v * v;
    }
    TailEstimate e;
    e.eps = eps;
    e.delta = target.delta;
    e.n_samples = n_samples;
    e.p_hat = swh / n_samples;
    e.mean_weight = sw / n_samples;
    double mw_var = (sww / n_samples - e.mean_weight * e.mean_weight) / n_samples;
    e.mean_weight_se = std::sqrt(std::max(0.0, mw_var));
    e.estimator_variance = std::max(0.0, swwhh / n_samples - e.p_hat * e.p_hat);
    double sehat = std::sqrt(e.estimator_variance / n_samples);
    e.ci_low = e.p_hat - 1.959963984540054 * sehat;
    e.ci_high = e.p_hat + 1.959963984540054 * sehat;
    e.n_effective = sww > 0 ? sw * sw / sww : 0;
    if (e.n_effective < 10)
        throw std::runtime_error("girsanov_importance_sampling: weight degeneracy, n_eff = " +
                                 std::to_string(e.n_effective));
    return e;
}

struct WeakContinuityReport {
    std::vector<double> eps;       // or family index when eps is held fixed
    std::vector<double> distance;  // sup-l2 to the reference skeleton
    bool decreasing = true;
};

// Distance between the eps-noisy run driven by the perturbed control and the
// limit skeleton at the reference control, per ladder entry.
inline WeakContinuityReport weak_continuity_experiment(const SimSetup& setup,
                                                       const std::vector<double>& eps_list,
                                                       const std::vector<ControlPath>& family,
                                                       const ControlPath& reference,
                                                       std::uint64_t seed) {
    if (eps_list.size() != family.size())
        throw std::invalid_argument("weak_continuity_experiment: ladder/family size mismatch");
    Trajectory ref = solve_skeleton(reference, setup);
    Stepper st(setup);
    WeakContinuityReport rep;
    rep.eps = eps_list;
    for (std::size_t i = 0; i < family.size(); ++i) {
        chi_check(family[i], setup);
        RunOptions opt;
        opt.eps = eps_list[i];
        opt.control = &family[i];
        opt.master_seed = seed;
        opt.sample_index = std::uint64_t(i);
        Trajectory traj = st.run(opt);
        double d = 0;
        for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
            ScalarField diff(setup.grid);
            for (std::size_t q = 0; q < diff.values.size(); ++q)
                diff.values[q] = traj.snapshots[k].values[q] - ref.snapshots[k].values[q];
            d = std::max(d, l2_norm(diff));
        }
        rep.distance.push_back(d);
        if (i > 0 && rep.distance[i] > rep.distance[i - 1]) rep.decreasing = false;
    }
    return rep;
}

}  // namespace pgld

#endif
