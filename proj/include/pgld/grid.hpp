#ifndef PGLD_GRID_HPP
#define PGLD_GRID_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgld {

// Structured node-centered grid on the box [0,Lx] x [0,Ly] x (-h,0).
// z runs from -h at k=0 to 0 (the ocean surface) at k=nz-1.
struct Grid {
    int nx = 0, ny = 0, nz = 0;
    double Lx = 0, Ly = 0, h = 0;
    double dx = 0, dy = 0, dz = 0;

    std::size_t size() const { return std::size_t(nx) * ny * nz; }
    std::size_t surface_size() const { return std::size_t(nx) * ny; }

    // x-fastest node ordering
    std::size_t idx(int i, int j, int k) const {
        return std::size_t(i) + std::size_t(nx) * (std::size_t(j) + std::size_t(ny) * k);
    }
    std::size_t sidx(int i, int j) const { return std::size_t(i) + std::size_t(nx) * j; }

    double x(int i) const { return i * dx; }
    double y(int j) const { return j * dy; }
    double z(int k) const { return -h + k * dz; }

    // trapezoidal quadrature weights per axis
    double wx(int i) const { return (i == 0 || i == nx - 1) ? 0.5 * dx : dx; }
    double wy(int j) const { return (j == 0 || j == ny - 1) ? 0.5 * dy : dy; }
    double wz(int k) const { return (k == 0 || k == nz - 1) ? 0.5 * dz : dz; }
    double w(int i, int j, int k) const { return wx(i) * wy(j) * wz(k); }
    double ws(int i, int j) const { return wx(i) * wy(j); }

    bool same_as(const Grid& o) const {
        return nx == o.nx && ny == o.ny && nz == o.nz && Lx == o.Lx && Ly == o.Ly && h == o.h;
    }
};

inline Grid build_grid(int nx, int ny, int nz, double Lx, double Ly, double h) {
    if (nx < 3 || ny < 3 || nz < 3)
        throw std::invalid_argument("build_grid: node counts must be >= 3");
    if (!(Lx > 0) || !(Ly > 0) || !(h > 0))
        throw std::invalid_argument("build_grid: extents must be positive");
    Grid g;
    g.nx = nx; g.ny = ny; g.nz = nz;
    g.Lx = Lx; g.Ly = Ly; g.h = h;
    g.dx = Lx / (nx - 1);
    g.dy = Ly / (ny - 1);
    g.dz = h / (nz - 1);
    return g;
}

struct ScalarField {
    Grid grid;
    std::vector<double> values;

    ScalarField() = default;
    explicit ScalarField(const Grid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}

    double& operator()(int i, int j, int k) { return values[grid.idx(i, j, k)]; }
    double operator()(int i, int j, int k) const { return values[grid.idx(i, j, k)]; }
};

// Horizontal velocity (v1, v2) at every 3D node.
struct HVectorField {
    Grid grid;
    std::vector<double> v1, v2;

    HVectorField() = default;
    explicit HVectorField(const Grid& g, double f1 = 0.0, double f2 = 0.0)
        : grid(g), v1(g.size(), f1), v2(g.size(), f2) {}
};

// One value per horizontal node (surface pressure, wind stress, theta*).
struct SurfaceField {
    Grid grid;
    std::vector<double> values;

    SurfaceField() = default;
    explicit SurfaceField(const Grid& g, double fill = 0.0) : grid(g), values(g.surface_size(), fill) {}

    double& operator()(int i, int j) { return values[grid.sidx(i, j)]; }
    double operator()(int i, int j) const { return values[grid.sidx(i, j)]; }
};

struct PhysParams {
    double A_h = 1.0, A_nu = 1.0;     // eddy viscosities
    double K_h = 1.0, K_nu = 1.0;     // conductivities
    double beta_robin = 1.0;          // Robin coefficient at z=0
    double f0 = 0.0, beta_cor = 0.0;  // Coriolis f = f0 + beta_cor * y
    double kappa = 1.0;               // wind-stress boundary weight
    double h = 1.0;                   // depth, kept in sync with the grid

    void validate() const {
        if (!(A_h > 0 && A_nu > 0 && K_h > 0 && K_nu > 0 && beta_robin > 0))
            throw std::invalid_argument("PhysParams: viscosities, conductivities and beta_robin must be positive");
        if (!(h > 0)) throw std::invalid_argument("PhysParams: depth must be positive");
    }
};

struct NormReport {
    double l2 = 0;          // L2(O)
    double v2 = 0;          // weighted gradient norm with Robin surface term
    double h1 = 0;          // full H1(O)
    double surface_l2 = 0;  // L2 of the z=0 trace
};

inline double poincare_constant_k2(const PhysParams& p) {
    if (!(p.beta_robin > 0 && p.K_nu > 0 && p.h > 0))
        throw std::invalid_argument("poincare_constant_k2: beta_robin, K_nu, h must be positive");
    return std::min(p.beta_robin / (2.0 * p.h), p.K_nu / (2.0 * p.h * p.h));
}

namespace detail {
inline void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}
}  // namespace detail

// --- difference operators (centered interior, one-sided second order at ends) ---

inline ScalarField grad_x(const ScalarField& f) {
    const Grid& g = f.grid;
    ScalarField out(g);
    const double c = 1.0 / (2.0 * g.dx);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j) {
            out(0, j, k) = c * (-3.0 * f(0, j, k) + 4.0 * f(1, j, k) - f(2, j, k));
            for (int i = 1; i < g.nx - 1; ++i)
                out(i, j, k) = c * (f(i + 1, j, k) - f(i - 1, j, k));
            int n = g.nx - 1;
            out(n, j, k) = c * (3.0 * f(n, j, k) - 4.0 * f(n - 1, j, k) + f(n - 2, j, k));
        }
    return out;
}

inline ScalarField grad_y(const ScalarField& f) {
    const Grid& g = f.grid;
    ScalarField out(g);
    const double c = 1.0 / (2.0 * g.dy);
    for (int k = 0; k < g.nz; ++k)
        for (int i = 0; i < g.nx; ++i) {
            out(i, 0, k) = c * (-3.0 * f(i, 0, k) + 4.0 * f(i, 1, k) - f(i, 2, k));
            for (int j = 1; j < g.ny - 1; ++j)
                out(i, j, k) = c * (f(i, j + 1, k) - f(i, j - 1, k));
            int n = g.ny - 1;
            out(i, n, k) = c * (3.0 * f(i, n, k) - 4.0 * f(i, n - 1, k) + f(i, n - 2, k));
        }
    return out;
}

inline ScalarField grad_z(const ScalarField& f) {
    const Grid& g = f.grid;
    ScalarField out(g);
    const double c = 1.0 / (2.0 * g.dz);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            out(i, j, 0) = c * (-3.0 * f(i, j, 0) + 4.0 * f(i, j, 1) - f(i, j, 2));
            for (int k = 1; k < g.nz - 1; ++k)
                out(i, j, k) = c * (f(i, j, k + 1) - f(i, j, k - 1));
            int n = g.nz - 1;
            out(i, j, n) = c * (3.0 * f(i, j, n) - 4.0 * f(i, j, n - 1) + f(i, j, n - 2));
        }
    return out;
}

// Plain transposes of the difference operators above (scatter form), used for
// adjoint-consistent assembly of the advection term.
inline ScalarField grad_x_transpose(const ScalarField& f) {
    const Grid& g = f.grid;
    ScalarField out(g);
    const double c = 1.0 / (2.0 * g.dx);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j) {
            double a = f(0, j, k);
            out(0, j, k) += -3.0 * c * a;
            out(1, j, k) += 4.0 * c * a;
            out(2, j, k) += -c * a;
            for (int i = 1; i < g.nx - 1; ++i) {
                double b = c * f(i, j, k);
                out(i + 1, j, k) += b;
                out(i - 1, j, k) -= b;
            }
            int n = g.nx - 1;
            double e = f(n, j, k);
            out(n, j, k) += 3.0 * c * e;
            out(n - 1, j, k) += -4.0 * c * e;
            out(n - 2, j, k) += c * e;
        }
    return out;
}

inline ScalarField grad_y_transpose(const ScalarField& f) {
    const Grid& g = f.grid;
    ScalarField out(g);
    const double c = 1.0 / (2.0 * g.dy);
    for (int k = 0; k < g.nz; ++k)
        for (int i = 0; i < g.nx; ++i) {
            double a = f(i, 0, k);
            out(i, 0, k) += -3.0 * c * a;
            out(i, 1, k) += 4.0 * c * a;
            out(i, 2, k) += -c * a;
            for (int j = 1; j < g.ny - 1; ++j) {
                double b = c * f(i, j, k);
                out(i, j + 1, k) += b;
                out(i, j - 1, k) -= b;
            }
            int n = g.ny - 1;
            double e = f(i, n, k);
            out(i, n, k) += 3.0 * c * e;
            out(i, n - 1, k) += -4.0 * c * e;
            out(i, n - 2, k) += c * e;
        }
    return out;
}

inline ScalarField grad_z_transpose(const ScalarField& f) {
    const Grid& g = f.grid;
    ScalarField out(g);
    const double c = 1.0 / (2.0 * g.dz);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double a = f(i, j, 0);
            out(i, j, 0) += -3.0 * c * a;
            out(i, j, 1) += 4.0 * c * a;
            out(i, j, 2) += -c * a;
            for (int k = 1; k < g.nz - 1; ++k) {
                double b = c * f(i, j, k);
                out(i, j, k + 1) += b;
                out(i, j, k - 1) -= b;
            }
            int n = g.nz - 1;
            double e = f(i, j, n);
            out(i, j, n) += 3.0 * c * e;
            out(i, j, n - 1) += -4.0 * c * e;
            out(i, j, n - 2) += c * e;
        }
    return out;
}

// --- quadrature ---

inline double l2_inner(const ScalarField& a, const ScalarField& b) {
    const Grid& g = a.grid;
    if (!g.same_as(b.grid)) throw std::invalid_argument("l2_inner: grid mismatch");
    double s = 0;
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                s += g.w(i, j, k) * a(i, j, k) * b(i, j, k);
    return s;
}

inline double l2_norm(const ScalarField& a) { return std::sqrt(std::max(0.0, l2_inner(a, a))); }

inline double surface_inner(const SurfaceField& a, const SurfaceField& b) {
    const Grid& g = a.grid;
    double s = 0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            s += g.ws(i, j) * a(i, j) * b(i, j);
    return s;
}

inline double surface_l2_norm(const SurfaceField& a) {
    return std::sqrt(std::max(0.0, surface_inner(a, a)));
}

// L2 norm of the z=0 trace of a 3D field
inline double trace_l2_sq(const ScalarField& f) {
    const Grid& g = f.grid;
    int top = g.nz - 1;
    double s = 0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double v = f(i, j, top);
            s += g.ws(i, j) * v * v;
        }
    return s;
}

inline NormReport compute_norms(const ScalarField& theta, const PhysParams& p) {
    detail::check_finite(theta.values, "compute_norms");
    const Grid& g = theta.grid;
    ScalarField tx = grad_x(theta), ty = grad_y(theta), tz = grad_z(theta);
    double l2sq = 0, gh = 0, gz = 0;
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                double w = g.w(i, j, k);
                double t = theta(i, j, k);
                l2sq += w * t * t;
                gh += w * (tx(i, j, k) * tx(i, j, k) + ty(i, j, k) * ty(i, j, k));
                gz += w * tz(i, j, k) * tz(i, j, k);
            }
    double surf = trace_l2_sq(theta);
    NormReport r;
    r.l2 = std::sqrt(l2sq);
    r.v2 = std::sqrt(std::max(0.0, p.K_h * gh + p.K_nu * gz + p.beta_robin * surf));
    r.h1 = std::sqrt(l2sq + gh + gz);
    r.surface_l2 = std::sqrt(surf);
    return r;
}

}  // namespace pgld

#endif
