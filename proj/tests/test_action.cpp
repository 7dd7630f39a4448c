#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "pgld/action.hpp"

using namespace pgld;

namespace {

SimSetup mode_setup(int m = 1, double T = 0.5, double dt = 0.5 / 32) {
    SimSetup s;
    s.grid = build_grid(5, 5, 5, 1, 1, 1);
    s.params = PhysParams{};
    s.forcing.mu = SurfaceField(s.grid);
    s.noise.m_noise = m;
    s.noise.carrier = eigenmodes_a2(s.params, s.grid, m);
    s.noise.q.assign(std::size_t(m), 1.5);
    s.noise.amp.assign(std::size_t(m), 0.6);
    s.noise.K_growth = s.noise.L_lipschitz = s.noise.L1_holder = 10.0;
    s.theta0 = ScalarField(s.grid);
    s.T = T;
    s.dt = dt;
    s.advection = false;
    s.velocity = false;
    return s;
}

ActionOptions tight_options() {
    ActionOptions o;
    o.n_segments = 8;
    o.rho0 = 100.0;
    o.penalty_stages = 7;
    o.max_iters = 300;
    o.grad_tol = 1e-10;
    o.feas_tol = 1e-5;
    return o;
}

}  // namespace

TEST_CASE("control energy closed forms") {
    SimSetup s = mode_setup(2);
    ControlPath zero = ControlPath::zero(s.T, 2, 4);
    CHECK(control_energy(zero, s.noise) == 0.0);

    ControlPath c = ControlPath::zero(s.T, 2, 1);
    c.values[0].u = {0.8, 0.0};
    // (1/2) a^2 T / q1
    CHECK_THAT(control_energy(c, s.noise),
               Catch::Matchers::WithinRel(0.5 * 0.64 * s.T / 1.5, 1e-14));

    // additivity over disjoint segments
    ControlPath two = ControlPath::zero(s.T, 2, 2);
    two.values[0].u = {0.8, 0.0};
    two.values[1].u = {0.0, -0.3};
    double e1 = 0.5 * 0.64 * (s.T / 2) / 1.5, e2 = 0.5 * 0.09 * (s.T / 2) / 1.5;
    CHECK_THAT(control_energy(two, s.noise), Catch::Matchers::WithinRel(e1 + e2, 1e-14));
}

TEST_CASE("control csv round trip is exact") {
    ControlPath c = ControlPath::zero(0.75, 3, 4);
    RngStream rng(8, 0);
    for (auto& v : c.values)
        for (double& u : v.u) u = rng.normal();
    std::ostringstream os;
    write_control_csv(c, os);
    std::istringstream is(os.str());
    ControlPath back = read_control_csv(is);
    REQUIRE(back.segments() == c.segments());
    REQUIRE(back.modes() == c.modes());
    for (std::size_t p = 0; p < c.knots.size(); ++p) {
        CHECK(back.knots[p] == c.knots[p]);
        for (int j = 0; j < 3; ++j) CHECK(back.values[p].u[std::size_t(j)] == c.values[p].u[std::size_t(j)]);
    }
    std::istringstream bad("wrong,header\n");
    CHECK_THROWS_AS(read_control_csv(bad), std::runtime_error);
}

TEST_CASE("zero deviation costs nothing") {
    SimSetup s = mode_setup();
    TargetFunctional t = make_target(TargetKind::terminal_distance, s, 0.0);
    ActionOptions o = tight_options();
    o.penalty_stages = 2;
    ActionResult r = minimize_action(t, s, o);
    CHECK(r.feasible);
    CHECK(r.I == 0.0);
    CHECK(r.penalty_residual == 0.0);
    CHECK_THROWS_AS(make_target(TargetKind::terminal_distance, s, -0.1), std::invalid_argument);
}

TEST_CASE("single-mode problem matches the linear-quadratic oracle") {
    SimSetup s = mode_setup();
    const double lam = s.noise.carrier.eigenvalues[0];
    const double amp = 0.6, q = 1.5, x = 0.3;
    const int K = s.steps(), P = 8;

    std::vector<double> chi_oracle;
    double I_disc = oracles::lq_action_discrete(lam, amp, q, s.T, x, K, P, &chi_oracle);
    double I_cont = oracles::lq_action(lam, amp, q, s.T, x);
    CHECK_THAT(I_disc, Catch::Matchers::WithinRel(I_cont, 0.05));  // dt + segmentation error

    TargetFunctional t = make_target(TargetKind::terminal_distance, s, x);
    ActionResult r = minimize_action(t, s, tight_options());
    CHECK(r.feasible);
    CHECK_THAT(r.I, Catch::Matchers::WithinRel(I_disc, 0.01));
    // the optimal control profile itself
    for (int p = 0; p < P; ++p)
        CHECK_THAT(r.chi_star.values[std::size_t(p)].u[0],
                   Catch::Matchers::WithinRel(chi_oracle[std::size_t(p)], 0.03));
    CHECK(!r.trace.empty());

    std::ostringstream os;
    write_action_csv(r, os);
    CHECK(os.str().rfind("stage,iter,energy,residual,grad_norm\n", 0) == 0);
}

TEST_CASE("rate scales quadratically in the deviation size") {
    SimSetup s = mode_setup();
    ActionOptions o = tight_options();
    TargetFunctional t1 = make_target(TargetKind::terminal_distance, s, 0.15);
    TargetFunctional t2 = make_target(TargetKind::terminal_distance, s, 0.30);
    ActionResult r1 = minimize_action(t1, s, o);
    ActionResult r2 = minimize_action(t2, s, o);
    REQUIRE(r1.feasible);
    REQUIRE(r2.feasible);
    CHECK_THAT(r2.I / r1.I, Catch::Matchers::WithinRel(4.0, 0.01));
}

TEST_CASE("finite-difference and adjoint gradients agree") {
    SimSetup s = mode_setup(2);
    TargetFunctional t = make_target(TargetKind::terminal_distance, s, 0.25);
    ActionOptions o = tight_options();
    o.n_segments = 4;
    detail::ActionObjective obj(t, s, o);
    RngStream rng(55, 0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> c(std::size_t(obj.dim()));
        for (double& v : c) v = 0.5 * rng.normal();
        double rho = 50.0;
        std::vector<double> ga = obj.grad_adjoint(c, rho);
        std::vector<double> gf = obj.grad_fd(c, rho);
        double scale = 0;
        for (double v : ga) scale = std::max(scale, std::abs(v));
        for (std::size_t i = 0; i < c.size(); ++i)
            CHECK_THAT(gf[i], Catch::Matchers::WithinAbs(ga[i], 1e-4 * std::max(1.0, scale)));
    }
}

TEST_CASE("optimizer modes and input validation") {
    SimSetup s = mode_setup();
    TargetFunctional t = make_target(TargetKind::terminal_distance, s, 0.2);
    ActionOptions o = tight_options();

    // forced finite differences reach the same minimum
    ActionOptions ofd = o;
    ofd.gradient = "fd";
    ActionResult ra = minimize_action(t, s, o);
    ActionResult rf = minimize_action(t, s, ofd);
    CHECK_THAT(rf.I, Catch::Matchers::WithinRel(ra.I, 1e-3));

    // adjoint demanded where it does not apply
    SimSetup slip = s;
    slip.noise.kind = SigmaKind::diagonal_lipschitz;
    slip.noise.lip_alpha = 0.3;
    TargetFunctional tl = make_target(TargetKind::terminal_distance, slip, 0.2);
    ActionOptions oadj = o;
    oadj.gradient = "adjoint";
    CHECK_THROWS_AS(minimize_action(tl, slip, oadj), std::invalid_argument);

    // warm start of the wrong shape
    ControlPath bad = ControlPath::zero(s.T, s.noise.m_noise, o.n_segments + 1);
    CHECK_THROWS_AS(minimize_action(t, s, o, &bad), std::invalid_argument);

    // reference must be stride 1
    TargetFunctional coarse = t;
    coarse.reference.snapshots.pop_back();
    CHECK_THROWS_AS(minimize_action(coarse, s, o), std::invalid_argument);
}

TEST_CASE("sup-deviation targets are no harder than terminal ones") {
    SimSetup s = mode_setup();
    ActionOptions o = tight_options();
    TargetFunctional tt = make_target(TargetKind::terminal_distance, s, 0.2);
    TargetFunctional ts = make_target(TargetKind::sup_deviation, s, 0.2);
    ActionResult rt = minimize_action(tt, s, o);
    ActionResult rs = minimize_action(ts, s, o);
    REQUIRE(rt.feasible);
    REQUIRE(rs.feasible);
    CHECK(rs.I <= rt.I * (1 + 1e-6));
}

TEST_CASE("state-dependent noise still admits a feasible minimizer") {
    SimSetup s = mode_setup(2);
    s.noise.kind = SigmaKind::diagonal_lipschitz;
    s.noise.lip_alpha = 0.3;
    TargetFunctional t = make_target(TargetKind::terminal_distance, s, 0.15);
    ActionOptions o = tight_options();
    o.n_segments = 4;
    ActionResult r = minimize_action(t, s, o);
    REQUIRE(r.feasible);
    // certificate: replay the minimizer through the fixed-point solver
    PicardResult pr = picard_solve(r.chi_star, s, s.T);
    double dev = t.deviation(pr.traj);
    CHECK(dev >= t.delta - 10 * o.feas_tol);
    CHECK(r.I > 0);
}

TEST_CASE("rate curve rises with the deviation") {
    SimSetup s = mode_setup();
    ActionOptions o = tight_options();
    RateCurve curve = rate_curve(TargetKind::terminal_distance, {0.1, 0.2, 0.3}, s, o);
    REQUIRE(curve.entries.size() == 3);
    CHECK(curve.monotone);
    for (const auto& e : curve.entries) CHECK(e.feasible);
    CHECK(curve.entries[2].I > curve.entries[0].I);
    CHECK_THROWS_AS(rate_curve(TargetKind::terminal_distance, {0.2, 0.1}, s, o),
                    std::invalid_argument);
}
