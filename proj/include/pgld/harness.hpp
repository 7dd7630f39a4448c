#ifndef PGLD_HARNESS_HPP
#define PGLD_HARNESS_HPP

#include <json.hpp>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <memory>

#include "pgld/montecarlo.hpp"

namespace pgld {

// ---------------------------------------------------------------------------
// Restricted arithmetic expressions over (x, y, z, t) for analytic field specs.
// ---------------------------------------------------------------------------

class Expr {
  public:
    virtual ~Expr() = default;
    virtual double eval(double x, double y, double z, double t) const = 0;
};

using ExprPtr = std::shared_ptr<const Expr>;

namespace detail {

struct NumExpr : Expr {
    double v;
    explicit NumExpr(double v_) : v(v_) {}
    double eval(double, double, double, double) const override { return v; }
};

struct VarExpr : Expr {
    int which;  // 0..3 -> x,y,z,t
    explicit VarExpr(int w) : which(w) {}
    double eval(double x, double y, double z, double t) const override {
        switch (which) {
            case 0: return x;
            case 1: return y;
            case 2: return z;
            default: return t;
        }
    }
};

struct UnaryExpr : Expr {
    double (*fn)(double);
    ExprPtr a;
    UnaryExpr(double (*f)(double), ExprPtr a_) : fn(f), a(std::move(a_)) {}
    double eval(double x, double y, double z, double t) const override {
        return fn(a->eval(x, y, z, t));
    }
};

struct BinExpr : Expr {
    char op;
    ExprPtr a, b;
    BinExpr(char o, ExprPtr a_, ExprPtr b_) : op(o), a(std::move(a_)), b(std::move(b_)) {}
    double eval(double x, double y, double z, double t) const override {
        double l = a->eval(x, y, z, t), r = b->eval(x, y, z, t);
        switch (op) {
            case '+': return l + r;
            case '-': return l - r;
            case '*': return l * r;
            case '/': return l / r;
            default: return std::pow(l, r);
        }
    }
};

class ExprParser {
  public:
    explicit ExprParser(const std::string& s) : s_(s) {}

    ExprPtr parse() {
        ExprPtr e = expr();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing input");
        return e;
    }

  private:
    [[noreturn]] void fail(const std::string& why) const {
        throw std::invalid_argument("expression error at position " + std::to_string(pos_) +
                                    ": " + why + " in \"" + s_ + "\"");
    }
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    ExprPtr expr() {
        ExprPtr e = term();
        for (;;) {
            if (eat('+')) e = std::make_shared<BinExpr>('+', e, term());
            else if (eat('-')) e = std::make_shared<BinExpr>('-', e, term());
            else return e;
        }
    }
    ExprPtr term() {
        ExprPtr e = unary();
        for (;;) {
            if (eat('*')) e = std::make_shared<BinExpr>('*', e, unary());
            else if (eat('/')) e = std::make_shared<BinExpr>('/', e, unary());
            else return e;
        }
    }
    ExprPtr unary() {
        if (eat('-'))
            return std::make_shared<BinExpr>('-', std::make_shared<NumExpr>(0.0), unary());
        return power();
    }
    ExprPtr power() {
        ExprPtr base = primary();
        if (eat('^')) return std::make_shared<BinExpr>('^', base, unary());
        return base;
    }
    ExprPtr primary() {
        skip_ws();
        if (pos_ >= s_.size()) fail("unexpected end");
        char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            double v = std::stod(s_.substr(pos_), &used);
            pos_ += used;
            return std::make_shared<NumExpr>(v);
        }
        if (c == '(') {
            ++pos_;
            ExprPtr e = expr();
            if (!eat(')')) fail("missing ')'");
            return e;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                ++pos_;
            std::string id = s_.substr(start, pos_ - start);
            if (id == "x") return std::make_shared<VarExpr>(0);
            if (id == "y") return std::make_shared<VarExpr>(1);
            if (id == "z") return std::make_shared<VarExpr>(2);
            if (id == "t") return std::make_shared<VarExpr>(3);
            if (id == "pi") return std::make_shared<NumExpr>(std::numbers::pi);
            static const std::pair<const char*, double (*)(double)> fns[] = {
                {"sin", std::sin}, {"cos", std::cos}, {"tan", std::tan},
                {"exp", std::exp}, {"log", std::log}, {"sqrt", std::sqrt},
                {"abs", std::fabs}, {"tanh", std::tanh}, {"sinh", std::sinh},
                {"cosh", std::cosh}};
            for (auto& [name, fn] : fns)
                if (id == name) {
                    if (!eat('(')) fail("function " + id + " needs '('");
                    ExprPtr a = expr();
                    if (!eat(')')) fail("missing ')'");
                    return std::make_shared<UnaryExpr>(fn, a);
                }
            fail("unknown identifier '" + id + "'");
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline ExprPtr parse_expression(const std::string& s) { return detail::ExprParser(s).parse(); }

// ---------------------------------------------------------------------------
// Snapshot format PGLDFLD0: magic, LE int32 dims, LE double extents, LE doubles
// x-fastest.
// ---------------------------------------------------------------------------

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
    os.write(b, 4);
}
inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}
inline void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = char(u >> (8 * i));
    os.write(b, 8);
}
inline double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}
}  // namespace detail

inline void write_snapshot(const ScalarField& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_snapshot: cannot open " + path);
    os.write("PGLDFLD0", 8);
    detail::put_u32(os, std::uint32_t(f.grid.nx));
    detail::put_u32(os, std::uint32_t(f.grid.ny));
    detail::put_u32(os, std::uint32_t(f.grid.nz));
    detail::put_f64(os, f.grid.Lx);
    detail::put_f64(os, f.grid.Ly);
    detail::put_f64(os, f.grid.h);
    for (double v : f.values) detail::put_f64(os, v);
    if (!os) throw std::runtime_error("write_snapshot: write failed for " + path);
}

inline ScalarField read_snapshot(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_snapshot: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != "PGLDFLD0")
        throw std::runtime_error("read_snapshot: bad magic in " + path);
    std::uint32_t nx = detail::get_u32(is), ny = detail::get_u32(is), nz = detail::get_u32(is);
    double Lx = detail::get_f64(is), Ly = detail::get_f64(is), h = detail::get_f64(is);
    if (!is) throw std::runtime_error("read_snapshot: truncated header in " + path);
    if (nx < 3 || ny < 3 || nz < 3 || nx > 100000 || ny > 100000 || nz > 100000)
        throw std::runtime_error("read_snapshot: invalid dimensions in " + path);
    Grid g = build_grid(int(nx), int(ny), int(nz), Lx, Ly, h);
    ScalarField f(g);
    for (double& v : f.values) {
        v = detail::get_f64(is);
        if (!is) throw std::runtime_error("read_snapshot: truncated data in " + path);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Run configuration (JSON) and setup construction.
// ---------------------------------------------------------------------------

struct FieldSpec {
    std::string kind = "constant";  // constant | expr | file
    double value = 0;
    std::string expr;
    std::string path;
};

struct RunConfig {
    int nx = 5, ny = 5, nz = 5;
    double Lx = 1, Ly = 1, h = 1;
    PhysParams phys;
    FieldSpec mu, theta_star, theta0;
    FieldSpec g_source;        // kind "none" to disable
    std::string noise_kind = "constant";
    int m_noise = 1;
    std::vector<double> q, amp;
    double lip_alpha = 0, time_amp = 0, gamma_holder = 0.5, c_clip = 1;
    double K_growth = 10, L_lipschitz = 10, L1_holder = 10;
    double T = 1, dt = 0.01;
    double eps = 0;
    std::uint64_t master_seed = 0;
    bool advection = true, velocity = true;
    nlohmann::json experiment;  // subcommand-specific knobs
};

namespace detail {

inline FieldSpec field_spec_from_json(const nlohmann::json& j) {
    FieldSpec s;
    s.kind = j.value("kind", "constant");
    if (s.kind == "constant") s.value = j.value("value", 0.0);
    else if (s.kind == "expr") s.expr = j.at("expr").get<std::string>();
    else if (s.kind == "file") s.path = j.at("path").get<std::string>();
    else if (s.kind != "none") throw std::invalid_argument("bad field spec kind: " + s.kind);
    return s;
}

inline nlohmann::json field_spec_to_json(const FieldSpec& s) {
    nlohmann::json j;
    j["kind"] = s.kind;
    if (s.kind == "constant") j["value"] = s.value;
    else if (s.kind == "expr") j["expr"] = s.expr;
    else if (s.kind == "file") j["path"] = s.path;
    return j;
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    const auto& g = j.at("grid");
    c.nx = g.at("nx"); c.ny = g.at("ny"); c.nz = g.at("nz");
    c.Lx = g.at("Lx"); c.Ly = g.at("Ly"); c.h = g.at("h");
    const auto& p = j.at("phys");
    c.phys.A_h = p.value("A_h", 1.0);
    c.phys.A_nu = p.value("A_nu", 1.0);
    c.phys.K_h = p.value("K_h", 1.0);
    c.phys.K_nu = p.value("K_nu", 1.0);
    c.phys.beta_robin = p.value("beta_robin", 1.0);
    c.phys.f0 = p.value("f0", 0.0);
    c.phys.beta_cor = p.value("beta_cor", 0.0);
    c.phys.kappa = p.value("kappa", 1.0);
    c.phys.h = c.h;
    if (j.contains("forcing")) {
        const auto& f = j.at("forcing");
        if (f.contains("mu")) c.mu = detail::field_spec_from_json(f.at("mu"));
        if (f.contains("theta_star")) c.theta_star = detail::field_spec_from_json(f.at("theta_star"));
        if (f.contains("g")) c.g_source = detail::field_spec_from_json(f.at("g"));
        else c.g_source.kind = "none";
    } else {
        c.g_source.kind = "none";
    }
    if (j.contains("theta0")) c.theta0 = detail::field_spec_from_json(j.at("theta0"));
    const auto& n = j.at("noise");
    c.noise_kind = n.value("kind", "constant");
    c.m_noise = n.value("m", 1);
    c.q = n.value("q", std::vector<double>(std::size_t(c.m_noise), 1.0));
    c.amp = n.value("amp", std::vector<double>(std::size_t(c.m_noise), 1.0));
    c.lip_alpha = n.value("lip_alpha", 0.0);
    c.time_amp = n.value("time_amp", 0.0);
    c.gamma_holder = n.value("gamma", 0.5);
    c.c_clip = n.value("c_clip", 1.0);
    c.K_growth = n.value("K", 10.0);
    c.L_lipschitz = n.value("L", 10.0);
    c.L1_holder = n.value("L1", 10.0);
    const auto& t = j.at("time");
    c.T = t.at("T");
    c.dt = t.at("dt");
    c.eps = j.value("eps", 0.0);
    c.master_seed = j.value("seed", std::uint64_t(0));
    c.advection = j.value("advection", true);
    c.velocity = j.value("velocity", true);
    if (j.contains("experiment")) c.experiment = j.at("experiment");
    return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["grid"] = {{"nx", c.nx}, {"ny", c.ny}, {"nz", c.nz},
                 {"Lx", c.Lx}, {"Ly", c.Ly}, {"h", c.h}};
    j["phys"] = {{"A_h", c.phys.A_h},   {"A_nu", c.phys.A_nu},
                 {"K_h", c.phys.K_h},   {"K_nu", c.phys.K_nu},
                 {"beta_robin", c.phys.beta_robin}, {"f0", c.phys.f0},
                 {"beta_cor", c.phys.beta_cor},     {"kappa", c.phys.kappa}};
    j["forcing"] = {{"mu", detail::field_spec_to_json(c.mu)},
                    {"theta_star", detail::field_spec_to_json(c.theta_star)}};
    if (c.g_source.kind != "none") j["forcing"]["g"] = detail::field_spec_to_json(c.g_source);
    j["theta0"] = detail::field_spec_to_json(c.theta0);
    j["noise"] = {{"kind", c.noise_kind}, {"m", c.m_noise}, {"q", c.q}, {"amp", c.amp},
                  {"lip_alpha", c.lip_alpha}, {"time_amp", c.time_amp},
                  {"gamma", c.gamma_holder}, {"c_clip", c.c_clip},
                  {"K", c.K_growth}, {"L", c.L_lipschitz}, {"L1", c.L1_holder}};
    j["time"] = {{"T", c.T}, {"dt", c.dt}};
    j["eps"] = c.eps;
    j["seed"] = c.master_seed;
    j["advection"] = c.advection;
    j["velocity"] = c.velocity;
    if (!c.experiment.is_null()) j["experiment"] = c.experiment;
    return j;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("load_config: cannot open " + path);
    nlohmann::json j;
    is >> j;
    return config_from_json(j);
}

inline ScalarField build_field(const FieldSpec& s, const Grid& g, double t = 0) {
    ScalarField f(g);
    if (s.kind == "constant") {
        for (double& v : f.values) v = s.value;
    } else if (s.kind == "expr") {
        ExprPtr e = parse_expression(s.expr);
        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i)
                    f(i, j, k) = e->eval(g.x(i), g.y(j), g.z(k), t);
    } else if (s.kind == "file") {
        f = read_snapshot(s.path);
        if (!f.grid.same_as(g)) throw std::invalid_argument("build_field: snapshot grid mismatch");
    } else {
        throw std::invalid_argument("build_field: unsupported kind " + s.kind);
    }
    return f;
}

inline SurfaceField build_surface_field(const FieldSpec& s, const Grid& g) {
    SurfaceField f(g);
    if (s.kind == "constant") {
        for (double& v : f.values) v = s.value;
    } else if (s.kind == "expr") {
        ExprPtr e = parse_expression(s.expr);
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) f(i, j) = e->eval(g.x(i), g.y(j), 0.0, 0.0);
    } else {
        throw std::invalid_argument("build_surface_field: unsupported kind " + s.kind);
    }
    return f;
}

inline SimSetup build_setup(const RunConfig& c) {
    SimSetup s;
    s.grid = build_grid(c.nx, c.ny, c.nz, c.Lx, c.Ly, c.h);
    s.params = c.phys;
    s.params.h = c.h;
    s.forcing.mu = build_surface_field(c.mu, s.grid);
    s.forcing.theta_star = build_surface_field(c.theta_star, s.grid);
    if (c.g_source.kind == "expr") {
        std::string expr = c.g_source.expr;
        Grid g = s.grid;
        ExprPtr e = parse_expression(expr);
        s.forcing.g_source = [e, g](double t) {
            ScalarField f(g);
            for (int k = 0; k < g.nz; ++k)
                for (int j = 0; j < g.ny; ++j)
                    for (int i = 0; i < g.nx; ++i)
                        f(i, j, k) = e->eval(g.x(i), g.y(j), g.z(k), t);
            return f;
        };
    } else if (c.g_source.kind == "constant" && c.g_source.value != 0) {
        Grid g = s.grid;
        double v = c.g_source.value;
        s.forcing.g_source = [g, v](double) { return ScalarField(g, v); };
    }
    s.noise.kind = sigma_kind_from_string(c.noise_kind);
    s.noise.m_noise = c.m_noise;
    s.noise.q = c.q;
    s.noise.amp = c.amp;
    s.noise.lip_alpha = c.lip_alpha;
    s.noise.time_amp = c.time_amp;
    s.noise.gamma_holder = c.gamma_holder;
    s.noise.c_clip = c.c_clip;
    s.noise.K_growth = c.K_growth;
    s.noise.L_lipschitz = c.L_lipschitz;
    s.noise.L1_holder = c.L1_holder;
    s.noise.carrier = eigenmodes_a2(s.params, s.grid, c.m_noise);
    s.theta0 = build_field(c.theta0, s.grid);
    s.T = c.T;
    s.dt = c.dt;
    s.advection = c.advection;
    s.velocity = c.velocity;
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Manifests: FNV-1a digests over output files; no timestamps so identical runs
// produce identical manifest bytes under any thread count.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t digest_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("digest_file: cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (is) {
        is.read(buf, sizeof buf);
        h = fnv1a64(buf, std::size_t(is.gcount()), h);
    }
    return h;
}

inline std::string digest_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline nlohmann::json make_manifest(const RunConfig& config,
                                    const std::vector<std::string>& outputs) {
    nlohmann::json m;
    std::string cfg = config_to_json(config).dump();
    m["config_digest"] = digest_hex(fnv1a64(cfg.data(), cfg.size()));
    m["tool_version"] = "pgld 1.0";
    m["master_seed"] = config.master_seed;
    nlohmann::json inv = nlohmann::json::array();
    for (const auto& p : outputs)
        inv.push_back({{"path", p}, {"digest", digest_hex(digest_file(p))}});
    m["outputs"] = inv;
    return m;
}

inline void write_manifest(const nlohmann::json& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_manifest: cannot open " + path);
    os << m.dump(2) << '\n';
}

}  // namespace pgld

#endif
