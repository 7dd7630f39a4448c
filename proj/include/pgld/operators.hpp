#ifndef PGLD_OPERATORS_HPP
#define PGLD_OPERATORS_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <functional>
#include <numeric>

#include "pgld/grid.hpp"

namespace pgld {

// Time-dependent heat source g(t); forcing data for the temperature equation.
struct ForcingSet {
    SurfaceField mu;          // wind stress (zonal), acts on v1
    SurfaceField theta_star;  // surface reference temperature
    std::function<ScalarField(double)> g_source;  // may be empty (g = 0)

    ScalarField g_at(double t, const Grid& grid) const {
        if (g_source) return g_source(t);
        return ScalarField(grid);
    }
};

// theta* must satisfy the discrete compatibility condition d(theta*)/dn = 0 on
// the lateral boundary; checked when forcing is loaded.
inline void validate_theta_star(const SurfaceField& ts, double tol = 1e-8) {
    const Grid& g = ts.grid;
    double scale = 1.0;
    for (double v : ts.values) scale = std::max(scale, std::abs(v));
    auto check = [&](double d) {
        if (std::abs(d) > tol * scale)
            throw std::invalid_argument("ForcingSet: theta_star violates d/dn = 0 on the side walls");
    };
    for (int j = 0; j < g.ny; ++j) {
        check((-3.0 * ts(0, j) + 4.0 * ts(1, j) - ts(2, j)) / (2.0 * g.dx));
        int n = g.nx - 1;
        check((3.0 * ts(n, j) - 4.0 * ts(n - 1, j) + ts(n - 2, j)) / (2.0 * g.dx));
    }
    for (int i = 0; i < g.nx; ++i) {
        check((-3.0 * ts(i, 0) + 4.0 * ts(i, 1) - ts(i, 2)) / (2.0 * g.dy));
        int n = g.ny - 1;
        check((3.0 * ts(i, n) - 4.0 * ts(i, n - 1) + ts(i, n - 2)) / (2.0 * g.dy));
    }
}

// ---------------------------------------------------------------------------
// A2 stiffness: variational edge-difference assembly.  For theta, eta on the
// grid,  a2(theta,eta) = K_h * sum_edges + K_nu * sum_z_edges + robin surface
// term, which makes the operator exactly symmetric positive semi-definite in
// the weighted (trapezoidal) inner product, and positive definite for
// beta_robin > 0.
// ---------------------------------------------------------------------------

// y[.] += a2-stiffness applied to x[.] (plain algebraic action, no mass inverse)
inline void a2_stiffness_apply(const Grid& g, const PhysParams& p,
                               const std::vector<double>& x, std::vector<double>& y) {
    // x-direction edges
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j) {
            double c = p.K_h * g.wy(j) * g.wz(k) / g.dx;
            for (int i = 0; i + 1 < g.nx; ++i) {
                std::size_t a = g.idx(i, j, k), b = g.idx(i + 1, j, k);
                double f = c * (x[b] - x[a]);
                y[a] -= f;
                y[b] += f;
            }
        }
    // y-direction edges
    for (int k = 0; k < g.nz; ++k)
        for (int i = 0; i < g.nx; ++i) {
            double c = p.K_h * g.wx(i) * g.wz(k) / g.dy;
            for (int j = 0; j + 1 < g.ny; ++j) {
                std::size_t a = g.idx(i, j, k), b = g.idx(i, j + 1, k);
                double f = c * (x[b] - x[a]);
                y[a] -= f;
                y[b] += f;
            }
        }
    // z-direction edges
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double c = p.K_nu * g.wx(i) * g.wy(j) / g.dz;
            for (int k = 0; k + 1 < g.nz; ++k) {
                std::size_t a = g.idx(i, j, k), b = g.idx(i, j, k + 1);
                double f = c * (x[b] - x[a]);
                y[a] -= f;
                y[b] += f;
            }
        }
    // Robin term on the surface z=0
    int top = g.nz - 1;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            std::size_t a = g.idx(i, j, top);
            y[a] += p.beta_robin * g.ws(i, j) * x[a];
        }
}

// a2 energy a(theta,theta), the discrete counterpart of ||theta||^2
inline double a2_energy(const ScalarField& theta, const PhysParams& p) {
    std::vector<double> y(theta.values.size(), 0.0);
    a2_stiffness_apply(theta.grid, p, theta.values, y);
    double s = 0;
    for (std::size_t n = 0; n < y.size(); ++n) s += y[n] * theta.values[n];
    return s;
}

// Weak-form action of A2 in field form: M^{-1} (A theta - robin theta* term).
// With theta_star == nullptr the pure operator is returned.
inline ScalarField apply_a2(const ScalarField& theta, const PhysParams& p,
                            const SurfaceField* theta_star = nullptr) {
    const Grid& g = theta.grid;
    if (theta_star && !theta_star->grid.same_as(g))
        throw std::invalid_argument("apply_a2: grid mismatch");
    std::vector<double> y(g.size(), 0.0);
    a2_stiffness_apply(g, p, theta.values, y);
    if (theta_star) {
        int top = g.nz - 1;
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                y[g.idx(i, j, top)] -= p.beta_robin * g.ws(i, j) * (*theta_star)(i, j);
    }
    ScalarField out(g);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                out(i, j, k) = y[g.idx(i, j, k)] / g.w(i, j, k);
    return out;
}

// ---------------------------------------------------------------------------
// A1: same assembly per velocity component with A_h, A_nu, no Robin term.
// Wall-normal components carry homogeneous Dirichlet rows (v.n = 0); the wind
// stress mu enters as a surface source on v1.
// ---------------------------------------------------------------------------

inline void a1_stiffness_apply(const Grid& g, const PhysParams& p,
                               const std::vector<double>& x, std::vector<double>& y) {
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j) {
            double c = p.A_h * g.wy(j) * g.wz(k) / g.dx;
            for (int i = 0; i + 1 < g.nx; ++i) {
                std::size_t a = g.idx(i, j, k), b = g.idx(i + 1, j, k);
                double f = c * (x[b] - x[a]);
                y[a] -= f;
                y[b] += f;
            }
        }
    for (int k = 0; k < g.nz; ++k)
        for (int i = 0; i < g.nx; ++i) {
            double c = p.A_h * g.wx(i) * g.wz(k) / g.dy;
            for (int j = 0; j + 1 < g.ny; ++j) {
                std::size_t a = g.idx(i, j, k), b = g.idx(i, j + 1, k);
                double f = c * (x[b] - x[a]);
                y[a] -= f;
                y[b] += f;
            }
        }
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double c = p.A_nu * g.wx(i) * g.wy(j) / g.dz;
            for (int k = 0; k + 1 < g.nz; ++k) {
                std::size_t a = g.idx(i, j, k), b = g.idx(i, j, k + 1);
                double f = c * (x[b] - x[a]);
                y[a] -= f;
                y[b] += f;
            }
        }
}

inline HVectorField apply_a1(const HVectorField& v, const PhysParams& p, const SurfaceField& mu) {
    const Grid& g = v.grid;
    if (!mu.grid.same_as(g)) throw std::invalid_argument("apply_a1: grid mismatch");
    std::vector<double> y1(g.size(), 0.0), y2(g.size(), 0.0);
    a1_stiffness_apply(g, p, v.v1, y1);
    a1_stiffness_apply(g, p, v.v2, y2);
    int top = g.nz - 1;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            y1[g.idx(i, j, top)] -= p.kappa * g.ws(i, j) * mu(i, j);
    HVectorField out(g);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                std::size_t n = g.idx(i, j, k);
                double w = g.w(i, j, k);
                if (i == 0 || i == g.nx - 1)
                    out.v1[n] = v.v1[n];  // Dirichlet wall row
                else
                    out.v1[n] = y1[n] / w;
                if (j == 0 || j == g.ny - 1)
                    out.v2[n] = v.v2[n];
                else
                    out.v2[n] = y2[n] / w;
            }
    return out;
}

// Vertical velocity from the divergence constraint: w(z) = -int_{-h}^z div v.
inline ScalarField diagnose_w(const HVectorField& v) {
    const Grid& g = v.grid;
    ScalarField d1{}, d2{};
    {
        ScalarField f1(g), f2(g);
        f1.values = v.v1;
        f2.values = v.v2;
        d1 = grad_x(f1);
        d2 = grad_y(f2);
    }
    ScalarField w(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double acc = 0;
            w(i, j, 0) = 0.0;
            for (int k = 1; k < g.nz; ++k) {
                double da = d1(i, j, k - 1) + d2(i, j, k - 1);
                double db = d1(i, j, k) + d2(i, j, k);
                acc += 0.5 * g.dz * (da + db);
                w(i, j, k) = -acc;
            }
        }
    return w;
}

namespace detail {
inline ScalarField transport(const HVectorField& v, const ScalarField& w, const ScalarField& f) {
    // v . grad f + w df/dz
    const Grid& g = f.grid;
    ScalarField fx = grad_x(f), fy = grad_y(f), fz = grad_z(f);
    ScalarField out(g);
    for (std::size_t n = 0; n < g.size(); ++n)
        out.values[n] = v.v1[n] * fx.values[n] + v.v2[n] * fy.values[n] + w.values[n] * fz.values[n];
    return out;
}
}  // namespace detail

// Skew-symmetrized trilinear form:
//   b(v,theta,eta) = 1/2 [ <v.grad theta + w dz theta, eta> - <v.grad eta + w dz eta, theta> ]
// so b(v,theta,eta) = -b(v,eta,theta) holds to machine precision.
inline double trilinear_b(const HVectorField& v, const ScalarField& theta,
                          const ScalarField& eta, const PhysParams&) {
    const Grid& g = theta.grid;
    if (!v.grid.same_as(g) || !eta.grid.same_as(g))
        throw std::invalid_argument("trilinear_b: grid mismatch");
    ScalarField w = diagnose_w(v);
    double fwd = l2_inner(detail::transport(v, w, theta), eta);
    double bwd = l2_inner(detail::transport(v, w, eta), theta);
    return 0.5 * (fwd - bwd);
}

// The field B(v,theta) with <B(v,theta), eta>_L2 = b(v,theta,eta) for every eta.
inline ScalarField advect(const HVectorField& v, const ScalarField& theta, const PhysParams&) {
    const Grid& g = theta.grid;
    if (!v.grid.same_as(g)) throw std::invalid_argument("advect: grid mismatch");
    ScalarField w = diagnose_w(v);
    ScalarField out = detail::transport(v, w, theta);

    // adjoint part: - M^{-1} [ Dx^T(W v1 theta) + Dy^T(W v2 theta) + Dz^T(W w theta) ]
    ScalarField a(g), b(g), c(g);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                std::size_t n = g.idx(i, j, k);
                double wt = g.w(i, j, k) * theta.values[n];
                a.values[n] = wt * v.v1[n];
                b.values[n] = wt * v.v2[n];
                c.values[n] = wt * w.values[n];
            }
    ScalarField ta = grad_x_transpose(a), tb = grad_y_transpose(b), tc = grad_z_transpose(c);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                std::size_t n = g.idx(i, j, k);
                double adj = (ta.values[n] + tb.values[n] + tc.values[n]) / g.w(i, j, k);
                out.values[n] = 0.5 * (out.values[n] - adj);
            }
    return out;
}

// ---------------------------------------------------------------------------
// Eigenmodes of A2 (theta* = 0): generalized problem  A w = lambda M w  with
// diagonal mass M.  Symmetrized to  M^{-1/2} A M^{-1/2}.
// ---------------------------------------------------------------------------

struct ModeBasis {
    Grid grid;
    std::vector<double> eigenvalues;      // ascending
    std::vector<ScalarField> modes;       // L2-orthonormal

    int count() const { return int(eigenvalues.size()); }
};

namespace detail {

inline Eigen::VectorXd mass_diagonal(const Grid& g) {
    Eigen::VectorXd m(g.size());
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                m[long(g.idx(i, j, k))] = g.w(i, j, k);
    return m;
}

inline Eigen::SparseMatrix<double> a2_stiffness_matrix(const Grid& g, const PhysParams& p) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(7 * g.size());
    auto edge = [&](std::size_t a, std::size_t b, double c) {
        trips.emplace_back(int(a), int(a), c);
        trips.emplace_back(int(b), int(b), c);
        trips.emplace_back(int(a), int(b), -c);
        trips.emplace_back(int(b), int(a), -c);
    };
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j) {
            double c = p.K_h * g.wy(j) * g.wz(k) / g.dx;
            for (int i = 0; i + 1 < g.nx; ++i) edge(g.idx(i, j, k), g.idx(i + 1, j, k), c);
        }
    for (int k = 0; k < g.nz; ++k)
        for (int i = 0; i < g.nx; ++i) {
            double c = p.K_h * g.wx(i) * g.wz(k) / g.dy;
            for (int j = 0; j + 1 < g.ny; ++j) edge(g.idx(i, j, k), g.idx(i, j + 1, k), c);
        }
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double c = p.K_nu * g.wx(i) * g.wy(j) / g.dz;
            for (int k = 0; k + 1 < g.nz; ++k) edge(g.idx(i, j, k), g.idx(i, j, k + 1), c);
        }
    int top = g.nz - 1;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            trips.emplace_back(int(g.idx(i, j, top)), int(g.idx(i, j, top)),
                               p.beta_robin * g.ws(i, j));
    Eigen::SparseMatrix<double> A(long(g.size()), long(g.size()));
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

}  // namespace detail

inline ModeBasis eigenmodes_a2(const PhysParams& p, const Grid& g, int m) {
    const long dim = long(g.size());
    if (m < 1 || m > dim) throw std::invalid_argument("eigenmodes_a2: invalid mode count");
    Eigen::VectorXd mass = detail::mass_diagonal(g);
    Eigen::VectorXd sqm = mass.cwiseSqrt();

    Eigen::MatrixXd vecs;  // columns: M^{1/2}-scaled eigenvectors
    Eigen::VectorXd vals;

    if (dim <= 3000) {
        // dense route
        Eigen::SparseMatrix<double> A = detail::a2_stiffness_matrix(g, p);
        Eigen::MatrixXd S(A);
        for (long r = 0; r < dim; ++r)
            for (long c = 0; c < dim; ++c) S(r, c) /= sqm[r] * sqm[c];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
        if (es.info() != Eigen::Success)
            throw std::runtime_error("eigenmodes_a2: dense eigensolver failed");
        vals = es.eigenvalues().head(m);
        vecs = es.eigenvectors().leftCols(m);
    } else {
        // subspace inverse iteration with conjugate-gradient inner solves
        Eigen::SparseMatrix<double> A = detail::a2_stiffness_matrix(g, p);
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
        cg.setTolerance(1e-12);
        cg.compute(A);
        int q = std::min<long>(m + 8, dim);
        Eigen::MatrixXd X = Eigen::MatrixXd::Random(dim, q);
        Eigen::MatrixXd prev_ritz;
        for (int it = 0; it < 200; ++it) {
            // Y = A^{-1} M X, then M-orthonormalize via the scaled QR
            Eigen::MatrixXd Y(dim, q);
            for (int c = 0; c < q; ++c)
                Y.col(c) = cg.solve((mass.array() * X.col(c).array()).matrix());
            Eigen::MatrixXd Z = sqm.asDiagonal() * Y;
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(Z);
            Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, q);
            // Rayleigh-Ritz on span(Q) in the symmetrized metric
            Eigen::MatrixXd B(dim, q);
            for (int c = 0; c < q; ++c) {
                Eigen::VectorXd u = (Q.col(c).array() / sqm.array()).matrix();
                B.col(c) = (A * u).cwiseQuotient(sqm);
            }
            Eigen::MatrixXd H = Q.transpose() * B;
            H = 0.5 * (H + H.transpose()).eval();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
            Eigen::MatrixXd ritz = Q * es.eigenvectors();
            vals = es.eigenvalues().head(m);
            vecs = ritz.leftCols(m);
            // residual check
            double worst = 0;
            for (int c = 0; c < m; ++c) {
                Eigen::VectorXd u = (vecs.col(c).array() / sqm.array()).matrix();
                Eigen::VectorXd r = (A * u).cwiseQuotient(sqm) - vals[c] * vecs.col(c);
                worst = std::max(worst, r.norm() / std::max(vals[c], 1e-300));
            }
            if (worst < 1e-9) break;
            X = (ritz.array().colwise() / sqm.array()).matrix();
            if (it == 199)
                throw std::runtime_error("eigenmodes_a2: subspace iteration did not converge, residual " +
                                         std::to_string(worst));
        }
    }

    ModeBasis basis;
    basis.grid = g;
    basis.eigenvalues.assign(vals.data(), vals.data() + m);
    basis.modes.reserve(m);
    for (int c = 0; c < m; ++c) {
        ScalarField f(g);
        for (long n = 0; n < dim; ++n) f.values[n] = vecs(n, c) / sqm[n];
        // fix sign: first nonzero weighted entry positive, for reproducibility
        for (long n = 0; n < dim; ++n) {
            if (std::abs(f.values[n]) > 1e-12) {
                if (f.values[n] < 0)
                    for (auto& v : f.values) v = -v;
                break;
            }
        }
        basis.modes.push_back(std::move(f));
    }
    return basis;
}

// ---------------------------------------------------------------------------
// Gronwall audit: verify Y(t) + int_0^t X <= Z(t) * exp(int_0^t a) on a grid.
// ---------------------------------------------------------------------------

struct GronwallAudit {
    std::vector<double> times;
    bool pass = false;
    double max_slack = 0;     // max over t of (Y + int X) - Z e^{int a}; negative when passing
    int first_violation = -1; // index of first violating time, -1 if none
};

inline GronwallAudit gronwall_audit(const std::vector<double>& times,
                                    const std::vector<double>& Y,
                                    const std::vector<double>& X,
                                    const std::vector<double>& a,
                                    const std::vector<double>& Z) {
    std::size_t n = times.size();
    if (Y.size() != n || X.size() != n || a.size() != n || Z.size() != n)
        throw std::invalid_argument("gronwall_audit: length mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(Y[i] >= 0) || !(X[i] >= 0) || !(a[i] >= 0) || !(Z[i] >= 0))
            throw std::invalid_argument("gronwall_audit: negative or non-finite entry at index " +
                                        std::to_string(i));
        if (i > 0 && Z[i] < Z[i - 1] - 1e-300 * std::abs(Z[i - 1]))
            throw std::invalid_argument("gronwall_audit: Z must be non-decreasing");
    }
    GronwallAudit out;
    out.times = times;
    out.pass = true;
    out.max_slack = -std::numeric_limits<double>::infinity();
    double intX = 0, intA = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            double dt = times[i] - times[i - 1];
            intX += 0.5 * dt * (X[i] + X[i - 1]);
            intA += 0.5 * dt * (a[i] + a[i - 1]);
        }
        double lhs = Y[i] + intX;
        double rhs = Z[i] * std::exp(intA);
        double slack = lhs - rhs;
        if (slack > out.max_slack) out.max_slack = slack;
        if (slack > 1e-12 * std::max(1.0, rhs) && out.pass) {
            out.pass = false;
            out.first_violation = int(i);
        }
    }
    return out;
}

}  // namespace pgld

#endif
