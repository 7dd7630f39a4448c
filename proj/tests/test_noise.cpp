#include <catch2/catch_amalgamated.hpp>

#include "pgld/noise.hpp"

using namespace pgld;

namespace {

NoiseModel make_model(const Grid& g, SigmaKind kind, int m = 3) {
    PhysParams p;
    NoiseModel nm;
    nm.m_noise = m;
    nm.carrier = eigenmodes_a2(p, g, m);
    nm.q = {1.0, 0.5, 0.25};
    nm.q.resize(m, 0.25);
    nm.amp = {0.8, 0.5, 0.3};
    nm.amp.resize(m, 0.3);
    nm.kind = kind;
    nm.lip_alpha = 0.4;
    nm.K_growth = 10.0;
    nm.L_lipschitz = 10.0;
    nm.L1_holder = 10.0;
    return nm;
}

}  // namespace

TEST_CASE("rng streams are deterministic and independent") {
    RngStream a(7, 3), b(7, 3);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());

    RngStream c(7, 4);
    bool differ = false;
    RngStream a2(7, 3);
    for (int i = 0; i < 10; ++i) differ |= (a2.uniform() != c.uniform());
    CHECK(differ);

    // set_step resets the draw counter: replaying a step replays its numbers
    RngStream d(11, 0);
    d.set_step(5);
    double first = d.uniform();
    d.uniform();
    d.set_step(5);
    CHECK(d.uniform() == first);
}

TEST_CASE("rng normals have the right moments") {
    RngStream rng(123, 0);
    const int n = 200000;
    double s1 = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        s1 += x;
        s2 += x * x;
    }
    double mean = s1 / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
    CHECK_THAT(var, Catch::Matchers::WithinAbs(1.0, 0.02));
}

TEST_CASE("wiener increments match their variances") {
    Grid g = build_grid(5, 5, 5, 1, 1, 1);
    NoiseModel nm = make_model(g, SigmaKind::constant);
    RngStream rng(99, 0);

    U0Vector z = sample_increment(nm, 0.0, rng);
    for (double v : z.u) CHECK(v == 0.0);
    CHECK_THROWS_AS(sample_increment(nm, -0.1, rng), std::invalid_argument);

    const int n = 100000;
    const double dt = 0.03;
    std::vector<double> s1(nm.m_noise, 0.0), s2(nm.m_noise, 0.0);
    for (int i = 0; i < n; ++i) {
        U0Vector w = sample_increment(nm, dt, rng);
        for (int j = 0; j < nm.m_noise; ++j) {
            s1[j] += w.u[j];
            s2[j] += w.u[j] * w.u[j];
        }
    }
    for (int j = 0; j < nm.m_noise; ++j) {
        double var = nm.q[j] * dt;
        double mean = s1[j] / n;
        CHECK(std::abs(mean) <= 4.0 * std::sqrt(var / n));
        CHECK_THAT(s2[j] / n, Catch::Matchers::WithinRel(var, 0.05));
    }
}

TEST_CASE("u0 norm uses the inverse covariance weights") {
    Grid g = build_grid(5, 5, 5, 1, 1, 1);
    NoiseModel nm = make_model(g, SigmaKind::constant);
    U0Vector w(nm.m_noise);
    w.u = {2.0, 1.0, 0.5};
    // sum u_j^2 / q_j = 4/1 + 1/0.5 + 0.25/0.25
    CHECK_THAT(nm.u0_norm_sq(w), Catch::Matchers::WithinRel(7.0, 1e-14));
    CHECK_THAT(nm.u0_inner(w, w), Catch::Matchers::WithinRel(nm.u0_norm_sq(w), 1e-14));
}

TEST_CASE("apply_sigma on basis elements") {
    Grid g = build_grid(5, 5, 5, 1, 1, 1);
    NoiseModel nm = make_model(g, SigmaKind::constant);
    ScalarField theta(g, 0.7);

    U0Vector zero(nm.m_noise);
    ScalarField out0 = apply_sigma(nm, 0.3, theta, zero);
    for (double v : out0.values) CHECK(v == 0.0);

    // constant sigma applied to e_1: amp_0 * omega_0, independent of theta
    U0Vector e1(nm.m_noise);
    e1.u[0] = 2.0;
    ScalarField out = apply_sigma(nm, 0.0, theta, e1);
    for (std::size_t n = 0; n < out.values.size(); ++n)
        CHECK_THAT(out.values[n],
                   Catch::Matchers::WithinAbs(2.0 * nm.amp[0] * nm.carrier.modes[0].values[n],
                                              1e-13));

    U0Vector bad(nm.m_noise + 1);
    CHECK_THROWS_AS(apply_sigma(nm, 0.0, theta, bad), std::invalid_argument);
}

TEST_CASE("hs norm agrees with a direct basis-image sum") {
    Grid g = build_grid(5, 5, 5, 1, 1, 1);
    for (SigmaKind kind : {SigmaKind::constant, SigmaKind::diagonal_lipschitz,
                           SigmaKind::linear_clipped}) {
        NoiseModel nm = make_model(g, kind);
        nm.time_amp = 0.3;
        RngStream rng(5, 0);
        ScalarField theta(g);
        for (double& v : theta.values) v = rng.normal();
        double t = 0.4;
        // image of the orthonormal U0 basis vector sqrt(q_j) e_j
        double direct = 0;
        for (int j = 0; j < nm.m_noise; ++j) {
            U0Vector ej(nm.m_noise);
            ej.u[j] = std::sqrt(nm.q[j]);
            double nrm = l2_norm(apply_sigma(nm, t, theta, ej));
            direct += nrm * nrm;
        }
        CHECK_THAT(sigma_hs_norm_sq(nm, t, theta), Catch::Matchers::WithinRel(direct, 1e-12));
    }
}

TEST_CASE("lipschitz gain stays within the declared constant") {
    Grid g = build_grid(5, 5, 5, 1, 1, 1);
    NoiseModel nm = make_model(g, SigmaKind::diagonal_lipschitz);
    // |g_j(c1)-g_j(c2)| <= amp_j * alpha * |c1-c2|; per-mode HS contribution
    // q_j (amp_j alpha)^2 dc^2, and |<th1-th2,w_j>| <= l2(th1-th2).
    double bound = 0;
    for (int j = 0; j < nm.m_noise; ++j)
        bound += nm.q[j] * nm.amp[j] * nm.amp[j] * nm.lip_alpha * nm.lip_alpha;
    RngStream rng(17, 0);
    for (int trial = 0; trial < 200; ++trial) {
        ScalarField a(g), b(g);
        for (double& v : a.values) v = 3.0 * rng.normal();
        for (double& v : b.values) v = 3.0 * rng.normal();
        double num = 0;
        for (int j = 0; j < nm.m_noise; ++j) {
            double g1 = detail::sigma_gain(nm, j, 0.0, l2_inner(a, nm.carrier.modes[j]));
            double g2 = detail::sigma_gain(nm, j, 0.0, l2_inner(b, nm.carrier.modes[j]));
            num += nm.q[j] * (g1 - g2) * (g1 - g2);
        }
        ScalarField d(g);
        for (std::size_t n = 0; n < d.values.size(); ++n) d.values[n] = a.values[n] - b.values[n];
        double dl2 = l2_norm(d);
        CHECK(num <= bound * dl2 * dl2 * (1 + 1e-10));
    }
}

TEST_CASE("linear_clipped saturates at the clamp level") {
    Grid g = build_grid(5, 5, 5, 1, 1, 1);
    NoiseModel nm = make_model(g, SigmaKind::linear_clipped);
    nm.c_clip = 0.5;
    // theta with huge projection onto mode 0
    ScalarField big(g);
    for (std::size_t n = 0; n < big.values.size(); ++n)
        big.values[n] = 100.0 * nm.carrier.modes[0].values[n];
    double gj = detail::sigma_gain(nm, 0, 0.0, l2_inner(big, nm.carrier.modes[0]));
    CHECK_THAT(gj, Catch::Matchers::WithinRel(nm.amp[0] * nm.c_clip, 1e-12));
}

TEST_CASE("verify_assumptions passes for honest constants and flags dishonest ones") {
    Grid g = build_grid(5, 5, 5, 1, 1, 1);
    {
        NoiseModel nm = make_model(g, SigmaKind::constant);
        RngStream rng(1, 0);
        AssumptionReport rep = verify_assumptions(nm, 500, rng);
        CHECK(rep.pass);
        // constant sigma (time_amp = 0): no state or time dependence at all
        CHECK(rep.lipschitz_quotient == 0.0);
        CHECK(rep.holder_quotient == 0.0);
        CHECK(rep.growth_quotient > 0.0);
    }
    {
        NoiseModel nm = make_model(g, SigmaKind::diagonal_lipschitz);
        nm.time_amp = 0.2;
        RngStream rng(2, 0);
        AssumptionReport rep = verify_assumptions(nm, 500, rng);
        CHECK(rep.pass);
        CHECK(rep.lipschitz_quotient > 0.0);
        CHECK(rep.holder_quotient > 0.0);
    }
    {
        NoiseModel nm = make_model(g, SigmaKind::diagonal_lipschitz);
        nm.L_lipschitz = 1e-8;  // dishonest declaration
        RngStream rng(3, 0);
        AssumptionReport rep = verify_assumptions(nm, 500, rng);
        CHECK_FALSE(rep.pass);
    }
    {
        NoiseModel nm = make_model(g, SigmaKind::constant);
        RngStream rng(4, 0);
        CHECK_THROWS_AS(verify_assumptions(nm, 50, rng), std::invalid_argument);
    }
}

TEST_CASE("model validation rejects inconsistent input") {
    Grid g = build_grid(5, 5, 5, 1, 1, 1);
    NoiseModel nm = make_model(g, SigmaKind::constant);
    NoiseModel bad = nm;
    bad.q[1] = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = nm;
    bad.q.pop_back();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = nm;
    bad.m_noise = 10;  // carrier only holds 3 modes
    bad.q.resize(10, 1.0);
    bad.amp.resize(10, 1.0);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = nm;
    bad.gamma_holder = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_THROWS_AS(sigma_kind_from_string("bogus"), std::invalid_argument);
}
