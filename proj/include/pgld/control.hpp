#ifndef PGLD_CONTROL_HPP
#define PGLD_CONTROL_HPP

#include <charconv>
#include <fstream>
#include <sstream>

#include "pgld/noise.hpp"

namespace pgld {

// Piecewise-constant control in U0: value chi_p on the interval (tau_{p-1}, tau_p],
// with tau_0 = 0.  Stores the L2(0,T;U0) density (the integrand of the energy).
struct ControlPath {
    std::vector<double> knots;      // tau_1 < ... < tau_P = T (tau_0 = 0 implied)
    std::vector<U0Vector> values;   // one per interval

    ControlPath() = default;
    ControlPath(std::vector<double> k, std::vector<U0Vector> v)
        : knots(std::move(k)), values(std::move(v)) {
        validate();
    }

    static ControlPath zero(double T, int m, int segments = 1) {
        ControlPath c;
        for (int p = 1; p <= segments; ++p) {
            c.knots.push_back(T * p / segments);
            c.values.emplace_back(m);
        }
        return c;
    }

    void validate() const {
        if (knots.size() != values.size())
            throw std::invalid_argument("ControlPath: knot/value count mismatch");
        double prev = 0;
        for (double t : knots) {
            if (!(t > prev)) throw std::invalid_argument("ControlPath: knots must increase from 0");
            prev = t;
        }
        if (!values.empty()) {
            int m = values.front().modes();
            for (const auto& v : values)
                if (v.modes() != m)
                    throw std::invalid_argument("ControlPath: inconsistent mode counts");
        }
    }

    double horizon() const { return knots.empty() ? 0.0 : knots.back(); }
    int segments() const { return int(knots.size()); }
    int modes() const { return values.empty() ? 0 : values.front().modes(); }

    // value on the interval containing t (left-continuous convention at knots)
    const U0Vector& value_at(double t) const {
        if (values.empty()) throw std::invalid_argument("ControlPath: empty path");
        for (std::size_t p = 0; p < knots.size(); ++p)
            if (t <= knots[p] + 1e-14 * std::max(1.0, knots.back())) return values[p];
        return values.back();
    }
};

// 1/2 int_0^T ||chi||_{U0}^2 dt for the piecewise-constant path
inline double control_energy(const ControlPath& chi, const NoiseModel& model) {
    chi.validate();
    double e = 0, prev = 0;
    for (std::size_t p = 0; p < chi.knots.size(); ++p) {
        e += 0.5 * model.u0_norm_sq(chi.values[p]) * (chi.knots[p] - prev);
        prev = chi.knots[p];
    }
    return e;
}

inline void write_control_csv(const ControlPath& chi, std::ostream& os) {
    os << "knot,mode,value\n";
    char buf[64];
    auto put = [&](double x) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
        (void)ec;
        os.write(buf, p - buf);
    };
    for (std::size_t p = 0; p < chi.knots.size(); ++p)
        for (int j = 0; j < chi.values[p].modes(); ++j) {
            put(chi.knots[p]);
            os << ',' << j << ',';
            put(chi.values[p].u[j]);
            os << '\n';
        }
}

inline void write_control_csv(const ControlPath& chi, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_control_csv: cannot open " + path);
    write_control_csv(chi, f);
}

inline ControlPath read_control_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("knot,mode,value", 0) != 0)
        throw std::runtime_error("read_control_csv: bad header");
    ControlPath c;
    std::vector<std::pair<int, double>> pending;
    double cur = -1;
    auto flush = [&]() {
        if (pending.empty()) return;
        int m = 0;
        for (auto& [j, v] : pending) m = std::max(m, j + 1);
        U0Vector u(m);
        for (auto& [j, v] : pending) u.u[j] = v;
        c.knots.push_back(cur);
        c.values.push_back(std::move(u));
        pending.clear();
    };
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string a, b, v;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, v))
            throw std::runtime_error("read_control_csv: malformed row: " + line);
        double knot = 0, val = 0;
        int mode = 0;
        auto r1 = std::from_chars(a.data(), a.data() + a.size(), knot);
        auto r2 = std::from_chars(b.data(), b.data() + b.size(), mode);
        auto r3 = std::from_chars(v.data(), v.data() + v.size(), val);
        if (r1.ec != std::errc{} || r2.ec != std::errc{} || r3.ec != std::errc{})
            throw std::runtime_error("read_control_csv: parse failure: " + line);
        if (knot != cur) {
            flush();
            cur = knot;
        }
        pending.emplace_back(mode, val);
    }
    flush();
    c.validate();
    return c;
}

inline ControlPath read_control_csv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_control_csv: cannot open " + path);
    return read_control_csv(f);
}

}  // namespace pgld

#endif
