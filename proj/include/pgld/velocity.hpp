#ifndef PGLD_VELOCITY_HPP
#define PGLD_VELOCITY_HPP

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <memory>

#include "pgld/operators.hpp"

namespace pgld {

struct DiagnosticSolution {
    HVectorField v;
    SurfaceField p_s;              // gauge-fixed: weighted horizontal mean zero
    double residual_momentum = 0;  // discrete L2 of the momentum equations
    double residual_constraint = 0;  // max over (x,y) of the depth-integrated divergence
    double constants_ratio = 0;    // filled by verify_estimate
};

// Sparse direct solve of the linear diagnostic system
//   grad p_s - int_{-h}^z grad theta dz + f v^perp + L1 v = 0,  int_{-h}^0 div v = 0,
// assembled in weighted (quadrature) form so the constraint block is exactly the
// transpose of the pressure-gradient block.  Wall-normal velocity components
// carry Dirichlet rows.  The pressure is determined only up to the four parity
// (checkerboard) modes of the collocated centered gradient, so the system is
// bordered with those modes; the matching multipliers vanish by compatibility.
class DiagnosticSolver {
  public:
    DiagnosticSolver(const Grid& grid, const PhysParams& params)
        : grid_(grid), params_(params) {
        params_.validate();
        assemble();
    }

    const Grid& grid() const { return grid_; }
    const PhysParams& params() const { return params_; }

    DiagnosticSolution solve(const ScalarField& theta, const SurfaceField& mu) const {
        const Grid& g = grid_;
        if (!theta.grid.same_as(g) || !mu.grid.same_as(g))
            throw std::invalid_argument("DiagnosticSolver: grid mismatch");
        detail::check_finite(theta.values, "DiagnosticSolver theta");
        detail::check_finite(mu.values, "DiagnosticSolver mu");

        const std::size_t N = g.size(), Ns = g.surface_size();
        Eigen::VectorXd b = Eigen::VectorXd::Zero(long(dim_));

        // baroclinic forcing: cumulative trapezoid of grad theta from z=-h
        ScalarField tx = grad_x(theta), ty = grad_y(theta);
        ScalarField Tx(g), Ty(g);
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                double ax = 0, ay = 0;
                for (int k = 1; k < g.nz; ++k) {
                    ax += 0.5 * g.dz * (tx(i, j, k - 1) + tx(i, j, k));
                    ay += 0.5 * g.dz * (ty(i, j, k - 1) + ty(i, j, k));
                    Tx(i, j, k) = ax;
                    Ty(i, j, k) = ay;
                }
            }
        int top = g.nz - 1;
        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i) {
                    std::size_t n = g.idx(i, j, k);
                    double w = g.w(i, j, k);
                    if (i != 0 && i != g.nx - 1) b[long(n)] = w * Tx(i, j, k);
                    if (j != 0 && j != g.ny - 1) b[long(N + n)] = w * Ty(i, j, k);
                }
        for (int j = 0; j < g.ny; ++j)
            for (int i = 1; i < g.nx - 1; ++i)
                b[long(g.idx(i, j, top))] += params_.kappa * g.ws(i, j) * mu(i, j);

        Eigen::VectorXd x = lu_->solve(b);
        if (lu_->info() != Eigen::Success)
            throw std::runtime_error("DiagnosticSolver: sparse solve failed");

        DiagnosticSolution sol;
        sol.v = HVectorField(g);
        sol.p_s = SurfaceField(g);
        for (std::size_t n = 0; n < N; ++n) {
            sol.v.v1[n] = x[long(n)];
            sol.v.v2[n] = x[long(N + n)];
        }
        for (std::size_t s = 0; s < Ns; ++s) sol.p_s.values[s] = x[long(2 * N + s)];

        // residuals from the assembled system
        Eigen::VectorXd r = A_ * x - b;
        double mom = 0;
        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i) {
                    std::size_t n = g.idx(i, j, k);
                    double w = g.w(i, j, k);
                    mom += r[long(n)] * r[long(n)] / w + r[long(N + n)] * r[long(N + n)] / w;
                }
        sol.residual_momentum = std::sqrt(mom);
        // the constraint rows have zero rhs, so their residual equals the weak
        // depth-integrated divergence evaluated at the solution
        double cmax = 0;
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                std::size_t s = g.sidx(i, j);
                cmax = std::max(cmax, std::abs(r[long(2 * N + s)]) / g.ws(i, j));
            }
        sol.residual_constraint = cmax;
        return sol;
    }

  private:
    void assemble() {
        const Grid& g = grid_;
        const std::size_t N = g.size(), Ns = g.surface_size();
        dim_ = 2 * N + Ns + 4;
        std::vector<Eigen::Triplet<double>> T;
        T.reserve(20 * N);

        auto dir1 = [&](int i, int) { return i == 0 || i == g.nx - 1; };
        auto dir2 = [&](int, int j) { return j == 0 || j == g.ny - 1; };

        // L1 stiffness per component, skipping Dirichlet rows
        auto edge = [&](std::size_t base, std::size_t a, std::size_t b2, double c,
                        bool a_dir, bool b_dir) {
            if (!a_dir) {
                T.emplace_back(int(base + a), int(base + a), c);
                T.emplace_back(int(base + a), int(base + b2), -c);
            }
            if (!b_dir) {
                T.emplace_back(int(base + b2), int(base + b2), c);
                T.emplace_back(int(base + b2), int(base + a), -c);
            }
        };
        for (int comp = 0; comp < 2; ++comp) {
            std::size_t base = comp == 0 ? 0 : N;
            auto is_dir = [&](int i, int j) { return comp == 0 ? dir1(i, j) : dir2(i, j); };
            for (int k = 0; k < g.nz; ++k)
                for (int j = 0; j < g.ny; ++j) {
                    double c = params_.A_h * g.wy(j) * g.wz(k) / g.dx;
                    for (int i = 0; i + 1 < g.nx; ++i)
                        edge(base, g.idx(i, j, k), g.idx(i + 1, j, k), c,
                             is_dir(i, j), is_dir(i + 1, j));
                }
            for (int k = 0; k < g.nz; ++k)
                for (int i = 0; i < g.nx; ++i) {
                    double c = params_.A_h * g.wx(i) * g.wz(k) / g.dy;
                    for (int j = 0; j + 1 < g.ny; ++j)
                        edge(base, g.idx(i, j, k), g.idx(i, j + 1, k), c,
                             is_dir(i, j), is_dir(i, j + 1));
                }
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i) {
                    if (is_dir(i, j)) continue;
                    double c = params_.A_nu * g.wx(i) * g.wy(j) / g.dz;
                    for (int k = 0; k + 1 < g.nz; ++k)
                        edge(base, g.idx(i, j, k), g.idx(i, j, k + 1), c, false, false);
                }
            // Dirichlet identity rows
            for (int k = 0; k < g.nz; ++k)
                for (int j = 0; j < g.ny; ++j)
                    for (int i = 0; i < g.nx; ++i)
                        if (is_dir(i, j)) {
                            std::size_t n = g.idx(i, j, k);
                            T.emplace_back(int(base + n), int(base + n), 1.0);
                        }
        }

        // Coriolis f v^perp = f (-v2, v1), collocated and weighted
        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j < g.ny; ++j) {
                double f = params_.f0 + params_.beta_cor * g.y(j);
                if (f == 0.0) continue;
                for (int i = 0; i < g.nx; ++i) {
                    std::size_t n = g.idx(i, j, k);
                    double w = g.w(i, j, k);
                    if (!dir1(i, j)) T.emplace_back(int(n), int(N + n), -w * f);
                    if (!dir2(i, j)) T.emplace_back(int(N + n), int(n), w * f);
                }
            }

        // pressure gradient block G (centered; rows needing one-sided stencils
        // are exactly the Dirichlet rows and are skipped) and its transpose as
        // the depth-integrated divergence constraint
        auto put_g = [&](std::size_t vrow, std::size_t s, double val) {
            T.emplace_back(int(vrow), int(2 * N + s), val);
            T.emplace_back(int(2 * N + s), int(vrow), val);
        };
        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i) {
                    std::size_t n = g.idx(i, j, k);
                    double w = g.w(i, j, k);
                    if (!dir1(i, j)) {
                        put_g(n, g.sidx(i + 1, j), w / (2.0 * g.dx));
                        put_g(n, g.sidx(i - 1, j), -w / (2.0 * g.dx));
                    }
                    if (!dir2(i, j)) {
                        put_g(N + n, g.sidx(i, j + 1), w / (2.0 * g.dy));
                        put_g(N + n, g.sidx(i, j - 1), -w / (2.0 * g.dy));
                    }
                }

        // border with the four parity modes of the collocated gradient
        for (int m = 0; m < 4; ++m)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i) {
                    double z = 1.0;
                    if (m & 1) z *= (i % 2 == 0) ? 1.0 : -1.0;
                    if (m & 2) z *= (j % 2 == 0) ? 1.0 : -1.0;
                    double val = g.ws(i, j) * z;
                    std::size_t s = g.sidx(i, j);
                    T.emplace_back(int(2 * N + s), int(2 * N + Ns + m), val);
                    T.emplace_back(int(2 * N + Ns + m), int(2 * N + s), val);
                }

        A_.resize(long(dim_), long(dim_));
        A_.setFromTriplets(T.begin(), T.end());
        A_.makeCompressed();
        lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
        lu_->compute(A_);
        if (lu_->info() != Eigen::Success)
            throw std::runtime_error("DiagnosticSolver: factorization failed");
    }

    Grid grid_;
    PhysParams params_;
    std::size_t dim_ = 0;
    Eigen::SparseMatrix<double> A_;
    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

inline DiagnosticSolution solve_diagnostic(const ScalarField& theta, const SurfaceField& mu,
                                           const PhysParams& params, double tol = 1e-10) {
    if (!(tol > 0)) throw std::invalid_argument("solve_diagnostic: tol must be positive");
    DiagnosticSolver solver(theta.grid, params);
    DiagnosticSolution sol = solver.solve(theta, mu);
    if (sol.residual_momentum > 1e3 * tol || sol.residual_constraint > 1e3 * tol)
        throw std::runtime_error("solve_diagnostic: residual above tolerance, momentum " +
                                 std::to_string(sol.residual_momentum) + " constraint " +
                                 std::to_string(sol.residual_constraint));
    return sol;
}

namespace detail {

inline double h1_norm_sq_3d(const ScalarField& f) {
    ScalarField fx = grad_x(f), fy = grad_y(f), fz = grad_z(f);
    return l2_inner(f, f) + l2_inner(fx, fx) + l2_inner(fy, fy) + l2_inner(fz, fz);
}

inline double h1_norm_sq_surface(const SurfaceField& f) {
    const Grid& g = f.grid;
    double s = 0;
    auto dx_at = [&](int i, int j) {
        if (i == 0) return (-3.0 * f(0, j) + 4.0 * f(1, j) - f(2, j)) / (2.0 * g.dx);
        if (i == g.nx - 1)
            return (3.0 * f(i, j) - 4.0 * f(i - 1, j) + f(i - 2, j)) / (2.0 * g.dx);
        return (f(i + 1, j) - f(i - 1, j)) / (2.0 * g.dx);
    };
    auto dy_at = [&](int i, int j) {
        if (j == 0) return (-3.0 * f(i, 0) + 4.0 * f(i, 1) - f(i, 2)) / (2.0 * g.dy);
        if (j == g.ny - 1)
            return (3.0 * f(i, j) - 4.0 * f(i, j - 1) + f(i, j - 2)) / (2.0 * g.dy);
        return (f(i, j + 1) - f(i, j - 1)) / (2.0 * g.dy);
    };
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double gx = dx_at(i, j), gy = dy_at(i, j);
            s += g.ws(i, j) * (f(i, j) * f(i, j) + gx * gx + gy * gy);
        }
    return s;
}

}  // namespace detail

// Quotient (||v||_H1^2 + ||p_s||_L2^2) / (||theta||_L2^2 + ||mu||_H1^2):
// the discrete counterpart of the elliptic-regularity constant.
inline double verify_estimate(const ScalarField& theta, const SurfaceField& mu,
                              const DiagnosticSolution& sol, const PhysParams& params) {
    (void)params;
    double denom = l2_inner(theta, theta) + detail::h1_norm_sq_surface(mu);
    if (denom <= 0)
        throw std::invalid_argument("verify_estimate: zero forcing (theta and mu both vanish)");
    ScalarField f1(sol.v.grid), f2(sol.v.grid);
    f1.values = sol.v.v1;
    f2.values = sol.v.v2;
    double num = detail::h1_norm_sq_3d(f1) + detail::h1_norm_sq_3d(f2) +
                 surface_inner(sol.p_s, sol.p_s);
    return num / denom;
}

}  // namespace pgld

#endif
