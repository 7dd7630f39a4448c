#ifndef PGLD_NOISE_HPP
#define PGLD_NOISE_HPP

#include <string>

#include "pgld/operators.hpp"
#include "pgld/rng.hpp"

namespace pgld {

enum class SigmaKind { constant, diagonal_lipschitz, linear_clipped };

inline SigmaKind sigma_kind_from_string(const std::string& s) {
    if (s == "constant") return SigmaKind::constant;
    if (s == "diagonal_lipschitz") return SigmaKind::diagonal_lipschitz;
    if (s == "linear_clipped") return SigmaKind::linear_clipped;
    throw std::invalid_argument("unknown sigma kind: " + s);
}

// Coefficients of an element of U0 = Q^{1/2} U, stored in the U basis:
// w = sum_j u_j e_j, with ||w||_{U0}^2 = sum_j u_j^2 / q_j.
struct U0Vector {
    std::vector<double> u;

    U0Vector() = default;
    explicit U0Vector(int m) : u(m, 0.0) {}

    int modes() const { return int(u.size()); }
};

// Finite-rank diagonal noise in the leading eigenmodes of the diffusion
// operator.  sigma(t,theta) maps a U0 element to a field, mode by mode.
struct NoiseModel {
    int m_noise = 1;
    std::vector<double> q;         // mode variances, q_j > 0
    ModeBasis carrier;             // carrier.modes.size() >= m_noise
    SigmaKind kind = SigmaKind::constant;
    std::vector<double> amp;       // s_j base amplitudes
    double lip_alpha = 0.0;        // diagonal_lipschitz: g_j = s_j (1 + alpha sin(c_j))
    double time_amp = 0.0;         // multiplies t^gamma_holder time modulation
    double gamma_holder = 0.5;
    double c_clip = 1.0;           // linear_clipped clamp level
    // declared assumption constants
    double K_growth = 1.0, L_lipschitz = 1.0, L1_holder = 1.0;

    void validate() const {
        if (m_noise < 1) throw std::invalid_argument("NoiseModel: m_noise must be >= 1");
        if (int(q.size()) != m_noise || int(amp.size()) != m_noise)
            throw std::invalid_argument("NoiseModel: q and amp must have m_noise entries");
        for (double v : q)
            if (!(v > 0)) throw std::invalid_argument("NoiseModel: q_j must be positive");
        if (int(carrier.modes.size()) < m_noise)
            throw std::invalid_argument("NoiseModel: carrier basis too small");
        if (!(c_clip > 0)) throw std::invalid_argument("NoiseModel: c_clip must be positive");
        if (!(gamma_holder > 0 && gamma_holder <= 1))
            throw std::invalid_argument("NoiseModel: gamma must lie in (0,1]");
    }

    double u0_norm_sq(const U0Vector& w) const {
        double s = 0;
        for (int j = 0; j < m_noise; ++j) s += w.u[j] * w.u[j] / q[j];
        return s;
    }

    double u0_inner(const U0Vector& a, const U0Vector& b) const {
        double s = 0;
        for (int j = 0; j < m_noise; ++j) s += a.u[j] * b.u[j] / q[j];
        return s;
    }
};

// Wiener increment over dt: independent N(0, q_j dt) per mode (U-basis coefficients).
inline U0Vector sample_increment(const NoiseModel& model, double dt, RngStream& rng) {
    if (!(dt >= 0)) throw std::invalid_argument("sample_increment: dt must be >= 0");
    U0Vector w(model.m_noise);
    if (dt == 0) return w;
    for (int j = 0; j < model.m_noise; ++j)
        w.u[j] = std::sqrt(model.q[j] * dt) * rng.normal();
    return w;
}

namespace detail {

// per-mode diagonal amplitude g_j(t, c_j) where c_j = <theta, omega_j>_{L2}
inline double sigma_gain(const NoiseModel& m, int j, double t, double cj) {
    double tmod = 1.0 + m.time_amp * std::pow(std::max(t, 0.0), m.gamma_holder);
    switch (m.kind) {
        case SigmaKind::constant:
            return m.amp[j] * tmod;
        case SigmaKind::diagonal_lipschitz:
            return m.amp[j] * (1.0 + m.lip_alpha * std::sin(cj)) * tmod;
        case SigmaKind::linear_clipped:
            return m.amp[j] * std::clamp(cj, -m.c_clip, m.c_clip) * tmod;
    }
    throw std::invalid_argument("apply_sigma: unknown kind");
}

}  // namespace detail

// sigma(t,theta) applied to a U0 element: sum_j u_j g_j(t, <theta,omega_j>) omega_j
inline ScalarField apply_sigma(const NoiseModel& model, double t, const ScalarField& theta,
                               const U0Vector& u) {
    if (!theta.grid.same_as(model.carrier.grid))
        throw std::invalid_argument("apply_sigma: grid mismatch");
    if (u.modes() != model.m_noise) throw std::invalid_argument("apply_sigma: mode count mismatch");
    ScalarField out(theta.grid);
    for (int j = 0; j < model.m_noise; ++j) {
        if (u.u[j] == 0.0) continue;
        double cj = l2_inner(theta, model.carrier.modes[j]);
        double a = u.u[j] * detail::sigma_gain(model, j, t, cj);
        const auto& w = model.carrier.modes[j].values;
        for (std::size_t n = 0; n < out.values.size(); ++n) out.values[n] += a * w[n];
    }
    return out;
}

// Hilbert-Schmidt norm squared of sigma(t,theta) as a map U0 -> L2:
// sum_j q_j g_j(t,c_j)^2 (images of the orthonormal U0 basis sqrt(q_j) e_j).
inline double sigma_hs_norm_sq(const NoiseModel& model, double t, const ScalarField& theta) {
    double s = 0;
    for (int j = 0; j < model.m_noise; ++j) {
        double cj = l2_inner(theta, model.carrier.modes[j]);
        double gj = detail::sigma_gain(model, j, t, cj);
        s += model.q[j] * gj * gj;
    }
    return s;
}

struct AssumptionReport {
    double growth_quotient = 0;   // ||sigma||_HS^2 / (1 + l2(theta)^2)
    double lipschitz_quotient = 0;  // ||sigma(t,th1)-sigma(t,th2)||_HS^2 / l2(th1-th2)^2
    double holder_quotient = 0;   // ||sigma(t,th)-sigma(s,th)||_HS^2 / ((1+l2^2)|t-s|^{2gamma})
    bool pass = false;
};

// Empirical check of the growth / Lipschitz / time-regularity constants over
// random fields spanned by the carrier modes.
inline AssumptionReport verify_assumptions(const NoiseModel& model, int n_samples, RngStream& rng) {
    if (n_samples < 100) throw std::invalid_argument("verify_assumptions: need >= 100 samples");
    model.validate();
    const Grid& g = model.carrier.grid;
    auto random_field = [&](double scale) {
        ScalarField f(g);
        for (int j = 0; j < model.m_noise; ++j) {
            double c = scale * rng.normal();
            const auto& w = model.carrier.modes[j].values;
            for (std::size_t n = 0; n < f.values.size(); ++n) f.values[n] += c * w[n];
        }
        return f;
    };
    auto hs_diff_sq = [&](double t1, const ScalarField& a, double t2, const ScalarField& b) {
        double s = 0;
        for (int j = 0; j < model.m_noise; ++j) {
            double g1 = detail::sigma_gain(model, j, t1, l2_inner(a, model.carrier.modes[j]));
            double g2 = detail::sigma_gain(model, j, t2, l2_inner(b, model.carrier.modes[j]));
            s += model.q[j] * (g1 - g2) * (g1 - g2);
        }
        return s;
    };
    AssumptionReport rep;
    for (int n = 0; n < n_samples; ++n) {
        double t = rng.uniform();
        ScalarField th1 = random_field(1.0 + 10.0 * rng.uniform());
        ScalarField th2 = random_field(1.0 + 10.0 * rng.uniform());
        double l1 = l2_norm(th1);
        rep.growth_quotient = std::max(rep.growth_quotient,
                                       sigma_hs_norm_sq(model, t, th1) / (1.0 + l1 * l1));
        ScalarField diff(g);
        for (std::size_t i = 0; i < diff.values.size(); ++i)
            diff.values[i] = th1.values[i] - th2.values[i];
        double dl2 = l2_norm(diff);
        if (dl2 > 1e-12)
            rep.lipschitz_quotient = std::max(rep.lipschitz_quotient,
                                              hs_diff_sq(t, th1, t, th2) / (dl2 * dl2));
        double s = rng.uniform();
        double dt = std::abs(t - s);
        if (dt > 1e-6)
            rep.holder_quotient = std::max(
                rep.holder_quotient,
                hs_diff_sq(t, th1, s, th1) /
                    ((1.0 + l1 * l1) * std::pow(dt, 2.0 * model.gamma_holder)));
    }
    rep.pass = rep.growth_quotient <= model.K_growth &&
               rep.lipschitz_quotient <= model.L_lipschitz &&
               rep.holder_quotient <= model.L1_holder;
    return rep;
}

}  // namespace pgld

#endif
