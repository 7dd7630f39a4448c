// Command-line front end: simulate | skeleton | action | mc | audit | modes.
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "pgld/pgld.hpp"

namespace fs = std::filesystem;
using namespace pgld;

namespace {

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

int cmd_simulate(const std::string& cfg_path, double eps_override, std::int64_t seed_override,
                 const std::string& out) {
    RunConfig cfg = load_config(cfg_path);
    if (eps_override >= 0) cfg.eps = eps_override;
    if (seed_override >= 0) cfg.master_seed = std::uint64_t(seed_override);
    SimSetup setup = build_setup(cfg);
    ensure_dir(out);
    Trajectory traj = simulate(setup, cfg.eps, nullptr, cfg.master_seed, 0, 1);
    std::ofstream mon(join(out, "monitor.csv"));
    write_monitor_csv(traj, mon);
    mon.close();
    write_snapshot(traj.final_theta(), join(out, "theta_final.fld"));
    write_manifest(make_manifest(cfg, {join(out, "monitor.csv"), join(out, "theta_final.fld")}),
                   join(out, "manifest.json"));
    std::cout << "simulate: " << traj.times.size() - 1 << " steps, final l2^2 = "
              << traj.l2sq.back() << "\n";
    return 0;
}

int cmd_skeleton(const std::string& cfg_path, const std::string& control_path, double picard_window,
                 const std::string& out) {
    RunConfig cfg = load_config(cfg_path);
    SimSetup setup = build_setup(cfg);
    ControlPath chi = control_path.empty()
                          ? ControlPath::zero(setup.T, setup.noise.m_noise)
                          : read_control_csv_file(control_path);
    ensure_dir(out);
    Trajectory traj;
    if (picard_window > 0) {
        PicardResult pr = picard_solve(chi, setup, picard_window);
        traj = std::move(pr.traj);
        std::cout << "skeleton (picard): windows " << pr.sweeps_per_window.size()
                  << ", max contraction " << pr.max_contraction << "\n";
    } else {
        traj = solve_skeleton(chi, setup);
    }
    std::ofstream mon(join(out, "monitor.csv"));
    write_monitor_csv(traj, mon);
    mon.close();
    write_snapshot(traj.final_theta(), join(out, "theta_final.fld"));
    GronwallAudit audit = skeleton_energy_bound(traj, chi, setup);
    std::cout << "skeleton: energy bound " << (audit.pass ? "pass" : "FAIL")
              << ", slack " << audit.max_slack << "\n";
    write_manifest(make_manifest(cfg, {join(out, "monitor.csv"), join(out, "theta_final.fld")}),
                   join(out, "manifest.json"));
    return audit.pass ? 0 : 2;
}

int cmd_action(const std::string& cfg_path, double delta, const std::string& kind_str, int segments,
               const std::string& out) {
    RunConfig cfg = load_config(cfg_path);
    SimSetup setup = build_setup(cfg);
    TargetKind kind = kind_str == "sup" ? TargetKind::sup_deviation : TargetKind::terminal_distance;
    ActionOptions opts;
    opts.n_segments = segments;
    TargetFunctional target = make_target(kind, setup, delta);
    ActionResult res = minimize_action(target, setup, opts);
    ensure_dir(out);
    std::ofstream conv(join(out, "convergence.csv"));
    write_action_csv(res, conv);
    conv.close();
    write_control_csv(res.chi_star, join(out, "chi_star.csv"));
    write_manifest(make_manifest(cfg, {join(out, "convergence.csv"), join(out, "chi_star.csv")}),
                   join(out, "manifest.json"));
    std::cout << "action: I = " << res.I << ", residual = " << res.penalty_residual
              << (res.feasible ? "" : " (infeasible at this penalty)") << "\n";
    return res.feasible ? 0 : 2;
}

int cmd_mc(const std::string& cfg_path, double delta, const std::string& ladder_str, int samples,
           const std::string& is_control, const std::string& out) {
    RunConfig cfg = load_config(cfg_path);
    SimSetup setup = build_setup(cfg);
    std::vector<double> ladder;
    {
        std::istringstream ss(ladder_str);
        std::string tok;
        while (std::getline(ss, tok, ',')) ladder.push_back(std::stod(tok));
    }
    if (ladder.empty()) throw std::invalid_argument("mc: empty eps ladder");
    TargetFunctional target = make_target(TargetKind::terminal_distance, setup, delta);
    ensure_dir(out);
    std::ofstream csv(join(out, "tails.csv"));
    csv << "eps,p_hat,ci_low,ci_high,n_eff,mean_weight\n";
    std::vector<TailEstimate> ests;
    for (double eps : ladder) {
        TailEstimate e;
        if (is_control.empty()) {
            e = estimate_tail(setup, eps, target, samples, cfg.master_seed);
        } else {
            ControlPath chi = read_control_csv_file(is_control);
            e = girsanov_importance_sampling(setup, chi, eps, target, samples, cfg.master_seed);
        }
        ests.push_back(e);
        csv << e.eps << ',' << e.p_hat << ',' << e.ci_low << ',' << e.ci_high << ','
            << e.n_effective << ',' << e.mean_weight << '\n';
        std::cout << "mc: eps=" << eps << " p_hat=" << e.p_hat << " n_eff=" << e.n_effective
                  << "\n";
    }
    csv.close();
    write_manifest(make_manifest(cfg, {join(out, "tails.csv")}), join(out, "manifest.json"));
    return 0;
}

int cmd_audit(const std::string& cfg_path, int samples) {
    RunConfig cfg = load_config(cfg_path);
    SimSetup setup = build_setup(cfg);
    bool all_pass = true;

    Trajectory traj = simulate(setup, cfg.eps, nullptr, cfg.master_seed, 0, 1);
    GronwallAudit energy = energy_monitor(traj, setup, cfg.eps);
    std::cout << "audit energy: " << (energy.pass ? "pass" : "FAIL")
              << " slack " << energy.max_slack << "\n";
    all_pass = all_pass && energy.pass;

    RngStream rng(cfg.master_seed, 12345, 0);
    AssumptionReport ar = verify_assumptions(setup.noise, std::max(samples, 100), rng);
    std::cout << "audit noise assumptions: " << (ar.pass ? "pass" : "FAIL")
              << " growth " << ar.growth_quotient << " lipschitz " << ar.lipschitz_quotient
              << " holder " << ar.holder_quotient << "\n";
    all_pass = all_pass && ar.pass;

    DiagnosticSolution d = solve_diagnostic(setup.theta0, setup.forcing.mu, setup.params);
    std::cout << "audit diagnostic residuals: momentum " << d.residual_momentum
              << " constraint " << d.residual_constraint << "\n";
    all_pass = all_pass && d.residual_momentum <= 1e-9 && d.residual_constraint <= 1e-9;
    return all_pass ? 0 : 2;
}

int cmd_modes(const std::string& cfg_path, int m, const std::string& out) {
    RunConfig cfg = load_config(cfg_path);
    Grid grid = build_grid(cfg.nx, cfg.ny, cfg.nz, cfg.Lx, cfg.Ly, cfg.h);
    PhysParams p = cfg.phys;
    p.h = cfg.h;
    ModeBasis basis = eigenmodes_a2(p, grid, m);
    ensure_dir(out);
    std::ofstream csv(join(out, "eigenvalues.csv"));
    csv << "index,lambda\n";
    for (int i = 0; i < basis.count(); ++i) csv << i << ',' << basis.eigenvalues[std::size_t(i)] << '\n';
    csv.close();
    std::vector<std::string> outputs = {join(out, "eigenvalues.csv")};
    for (int i = 0; i < basis.count(); ++i) {
        std::string path = join(out, "mode_" + std::to_string(i) + ".fld");
        write_snapshot(basis.modes[std::size_t(i)], path);
        outputs.push_back(path);
    }
    write_manifest(make_manifest(cfg, outputs), join(out, "manifest.json"));
    std::cout << "modes: lambda_1 = " << basis.eigenvalues.front() << ", lambda_" << m << " = "
              << basis.eigenvalues.back() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale laboratory for stochastic planetary geostrophic dynamics"};
    app.require_subcommand(1);

    std::string cfg, out = "out", control, kind = "terminal", ladder = "0.4,0.2,0.1,0.05";
    std::string is_control;
    double eps = -1, delta = 0.1, picard_window = 0;
    std::int64_t seed = -1;
    int samples = 1000, segments = 8, m = 4;

    auto* sim = app.add_subcommand("simulate", "integrate the stochastic temperature equation");
    sim->add_option("--config", cfg)->required();
    sim->add_option("--eps", eps);
    sim->add_option("--seed", seed);
    sim->add_option("--out", out);

    auto* ske = app.add_subcommand("skeleton", "solve the deterministic controlled equation");
    ske->add_option("--config", cfg)->required();
    ske->add_option("--control", control);
    ske->add_option("--picard-window", picard_window);
    ske->add_option("--out", out);

    auto* act = app.add_subcommand("action", "minimum-action rate function");
    act->add_option("--config", cfg)->required();
    act->add_option("--delta", delta)->required();
    act->add_option("--kind", kind);
    act->add_option("--segments", segments);
    act->add_option("--out", out);

    auto* mc = app.add_subcommand("mc", "tail probabilities over an eps ladder");
    mc->add_option("--config", cfg)->required();
    mc->add_option("--delta", delta)->required();
    mc->add_option("--eps-ladder", ladder);
    mc->add_option("--samples", samples);
    mc->add_option("--is-control", is_control);
    mc->add_option("--out", out);

    auto* aud = app.add_subcommand("audit", "energy and assumption audits");
    aud->add_option("--config", cfg)->required();
    aud->add_option("--samples", samples);

    auto* mod = app.add_subcommand("modes", "diffusion-operator eigenmodes");
    mod->add_option("--config", cfg)->required();
    mod->add_option("--m", m);
    mod->add_option("--out", out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 1 : 0;
    }

    try {
        if (sim->parsed()) return cmd_simulate(cfg, eps, seed, out);
        if (ske->parsed()) return cmd_skeleton(cfg, control, picard_window, out);
        if (act->parsed()) return cmd_action(cfg, delta, kind, segments, out);
        if (mc->parsed()) return cmd_mc(cfg, delta, ladder, samples, is_control, out);
        if (aud->parsed()) return cmd_audit(cfg, samples);
        if (mod->parsed()) return cmd_modes(cfg, m, out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
