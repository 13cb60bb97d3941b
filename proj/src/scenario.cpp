#include "mflqg/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mflqg {

namespace {

struct Entry {
    int line = 0;
    bool knotted = false;
    double t = 0.0;
    std::vector<double> values;
};

struct RawScenario {
    // section -> key -> entries (knot entries keep file order)
    std::map<std::string, std::map<std::string, std::vector<Entry>>> sections;
};

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

RawScenario tokenize(const std::string& document) {
    RawScenario raw;
    std::istringstream in(document);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("unterminated section header", lineno);
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw ParseError("empty section name", lineno);
            raw.sections[section];
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
        if (section.empty()) throw ParseError("entry before any [section]", lineno);
        std::string lhs = trim(line.substr(0, eq));
        std::string rhs = trim(line.substr(eq + 1));
        Entry e;
        e.line = lineno;
        size_t at = lhs.find('@');
        std::string key;
        if (at != std::string::npos) {
            key = trim(lhs.substr(0, at));
            std::string ts = trim(lhs.substr(at + 1));
            char* end = nullptr;
            e.t = std::strtod(ts.c_str(), &end);
            if (end == ts.c_str() || *end != '\0')
                throw ParseError("bad knot time '" + ts + "'", lineno, key);
            e.knotted = true;
        } else {
            key = lhs;
        }
        if (key.empty()) throw ParseError("empty key", lineno);
        std::istringstream vs(rhs);
        std::string tok;
        while (vs >> tok) {
            // allow comma separators
            if (!tok.empty() && tok.back() == ',') tok.pop_back();
            if (tok.empty()) continue;
            char* end = nullptr;
            double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0')
                throw ParseError("bad number '" + tok + "'", lineno, key);
            e.values.push_back(v);
        }
        if (e.values.empty()) throw ParseError("no values", lineno, key);
        raw.sections[section][key].push_back(e);
    }
    return raw;
}

Eigen::MatrixXd to_matrix(const std::vector<double>& vals, int rows, int cols,
                          const std::string& key, int line) {
    Eigen::MatrixXd out(rows, cols);
    if (vals.size() == 1) {
        out.setConstant(vals[0]);
        return out;
    }
    if (static_cast<int>(vals.size()) != rows * cols)
        throw DimensionError(key, "expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                                      " = " + std::to_string(rows * cols) + " values, got " +
                                      std::to_string(vals.size()) + " (line " +
                                      std::to_string(line) + ")");
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out(i, j) = vals[static_cast<size_t>(i * cols + j)];
    return out;
}

// Fill a CoefficientPath from the list of entries for one key.
void fill_path(CoefficientPath& dst, const std::vector<Entry>& entries, const TimeGrid& grid,
               const std::string& key) {
    const int rows = dst.rows(), cols = dst.cols();
    if (entries.size() == 1 && !entries[0].knotted) {
        Eigen::MatrixXd v = to_matrix(entries[0].values, rows, cols, key, entries[0].line);
        for (int i = 0; i < grid.knots(); ++i) dst.at_knot(i) = v;
        return;
    }
    std::vector<std::pair<double, Eigen::MatrixXd>> knots;
    for (const auto& e : entries) {
        if (!e.knotted)
            throw ParseError("mixing plain and '@ t' entries", e.line, key);
        knots.emplace_back(e.t, to_matrix(e.values, rows, cols, key, e.line));
    }
    std::stable_sort(knots.begin(), knots.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    if (static_cast<int>(knots.size()) == grid.knots()) {
        // one entry per grid knot: assign by order (bitwise round-trip path)
        for (int i = 0; i < grid.knots(); ++i) dst.at_knot(i) = knots[static_cast<size_t>(i)].second;
        return;
    }
    for (int i = 0; i < grid.knots(); ++i) {
        double t = grid.t(i);
        size_t j = 0;
        while (j + 1 < knots.size() && knots[j + 1].first <= t) ++j;
        if (dst.interp() == Interp::PiecewiseConstantLeft || j + 1 >= knots.size() ||
            t <= knots[0].first) {
            dst.at_knot(i) = (t < knots[0].first) ? knots[0].second : knots[j].second;
        } else {
            double t0 = knots[j].first, t1 = knots[j + 1].first;
            double w = (t1 > t0) ? (t - t0) / (t1 - t0) : 0.0;
            dst.at_knot(i) = (1.0 - w) * knots[j].second + w * knots[j + 1].second;
        }
    }
}

// Blocked family (gamma & friends): values are count blocks of rows x cols, or a scalar.
void fill_family(std::vector<CoefficientPath>& fam, const std::vector<Entry>& entries,
                 const TimeGrid& grid, const std::string& key) {
    if (fam.empty()) return;
    const int rows = fam[0].rows(), cols = fam[0].cols();
    const int count = static_cast<int>(fam.size());
    auto split = [&](const Entry& e) {
        std::vector<Eigen::MatrixXd> blocks;
        if (e.values.size() == 1) {
            for (int j = 0; j < count; ++j)
                blocks.push_back(Eigen::MatrixXd::Constant(rows, cols, e.values[0]));
        } else if (static_cast<int>(e.values.size()) == count * rows * cols) {
            for (int j = 0; j < count; ++j) {
                std::vector<double> sub(e.values.begin() + j * rows * cols,
                                        e.values.begin() + (j + 1) * rows * cols);
                blocks.push_back(to_matrix(sub, rows, cols, key, e.line));
            }
        } else {
            throw DimensionError(key, "expected 1 or " + std::to_string(count * rows * cols) +
                                          " values, got " + std::to_string(e.values.size()) +
                                          " (line " + std::to_string(e.line) + ")");
        }
        return blocks;
    };
    if (entries.size() == 1 && !entries[0].knotted) {
        auto blocks = split(entries[0]);
        for (int j = 0; j < count; ++j)
            for (int i = 0; i < grid.knots(); ++i) fam[static_cast<size_t>(j)].at_knot(i) = blocks[static_cast<size_t>(j)];
        return;
    }
    // knot tables per block: reuse fill_path on synthesized per-block entries
    for (int j = 0; j < count; ++j) {
        std::vector<Entry> sub;
        for (const auto& e : entries) {
            auto blocks = split(e);
            Entry se = e;
            se.values.clear();  // refill row-major (to_matrix expects row-major)
            for (int rr = 0; rr < rows; ++rr)
                for (int cc = 0; cc < cols; ++cc) se.values.push_back(blocks[static_cast<size_t>(j)](rr, cc));
            sub.push_back(se);
        }
        fill_path(fam[static_cast<size_t>(j)], sub, grid, key);
    }
}

const Entry& single(const std::vector<Entry>& es, const std::string& key) {
    if (es.size() != 1 || es[0].knotted)
        throw ParseError("constant entry cannot carry '@ t' knots", es[0].line, key);
    return es[0];
}

double scalar_of(const std::vector<Entry>& es, const std::string& key) {
    const Entry& e = single(es, key);
    if (e.values.size() != 1) throw DimensionError(key, "expected a single scalar");
    return e.values[0];
}

} // namespace

MFLQProblem load_scenario(const std::string& document) {
    RawScenario raw = tokenize(document);
    auto* prob = raw.sections.count("problem") ? &raw.sections["problem"] : nullptr;
    if (!prob) throw ParseError("missing [problem] section", 0);

    auto ivalue = [&](const std::string& key, long long dflt, bool required = false) -> long long {
        if (!prob->count(key)) {
            if (required) throw ParseError("missing required key '" + key + "' in [problem]", 0, key);
            return dflt;
        }
        return static_cast<long long>(scalar_of((*prob)[key], key));
    };

    int n = static_cast<int>(ivalue("n", 0, true));
    int m = static_cast<int>(ivalue("m", 0, true));
    int k = static_cast<int>(ivalue("k", 0, true));
    int r = static_cast<int>(ivalue("r", 0, true));
    int rt = static_cast<int>(ivalue("rtilde", 0, true));
    if (n < 1 || m < 1 || k < 1 || r < 1 || rt < 1)
        throw ParseError("dimensions must be >= 1", 0, "problem");
    double T = prob->count("T") ? scalar_of((*prob)["T"], "T") : 1.0;
    int steps = static_cast<int>(ivalue("steps", 1000));

    Interp interp = Interp::PiecewiseConstantLeft;
    if (prob->count("interpolation")) {
        // interpolation is textual; re-tokenize from the raw line is overkill, accept 0/1
        double v = scalar_of((*prob)["interpolation"], "interpolation");
        interp = (v != 0.0) ? Interp::PiecewiseLinear : Interp::PiecewiseConstantLeft;
    }

    // [sim] dt may refine the grid
    if (raw.sections.count("sim") && raw.sections["sim"].count("dt")) {
        double dt = scalar_of(raw.sections["sim"]["dt"], "dt");
        if (dt > 0.0) {
            double ratio = T / dt;
            long long s = std::llround(ratio);
            if (s < 2 || std::abs(ratio - static_cast<double>(s)) > 1e-12 * std::max(1.0, ratio))
                throw ParseError("dt does not divide the horizon", 0, "dt");
            steps = static_cast<int>(s);
        }
    }

    TimeGrid grid = TimeGrid::make(T, steps);
    MFLQProblem p = MFLQProblem::zero(n, m, k, r, rt, grid, interp);
    if (prob->count("interpolation")) { /* already applied through zero() */ }

    std::map<std::string, std::function<void(const std::vector<Entry>&)>> setters;
    auto path = [&](const std::string& sec, const std::string& key, CoefficientPath* dst) {
        setters[sec + "." + key] = [dst, key, &p](const std::vector<Entry>& es) {
            fill_path(*dst, es, p.grid, key);
        };
    };
    auto family = [&](const std::string& sec, const std::string& key,
                      std::vector<CoefficientPath>* dst) {
        setters[sec + "." + key] = [dst, key, &p](const std::vector<Entry>& es) {
            fill_family(*dst, es, p.grid, key);
        };
    };
    auto constant = [&](const std::string& sec, const std::string& key, Eigen::MatrixXd* dst,
                        int rows, int cols) {
        setters[sec + "." + key] = [dst, key, rows, cols](const std::vector<Entry>& es) {
            const Entry& e = single(es, key);
            *dst = to_matrix(e.values, rows, cols, key, e.line);
        };
    };
    auto vconstant = [&](const std::string& sec, const std::string& key, Eigen::VectorXd* dst,
                         int rows) {
        setters[sec + "." + key] = [dst, key, rows](const std::vector<Entry>& es) {
            const Entry& e = single(es, key);
            *dst = to_matrix(e.values, rows, 1, key, e.line).col(0);
        };
    };

    vconstant("init", "mu0", &p.mu0, n);
    constant("init", "sigma0", &p.sigma0, n, n);
    path("dynamics", "a", &p.a); path("dynamics", "abar", &p.abar);
    path("dynamics", "b", &p.b); path("dynamics", "bbar", &p.bbar);
    path("dynamics", "c", &p.c);
    path("bsde", "alpha", &p.alpha); path("bsde", "alphabar", &p.alphabar);
    path("bsde", "beta", &p.beta); path("bsde", "betabar", &p.betabar);
    family("bsde", "gamma", &p.gamma); family("bsde", "gammabar", &p.gammabar);
    family("bsde", "gammatilde", &p.gammatilde);
    family("bsde", "gammabartilde", &p.gammabartilde);
    path("bsde", "psi", &p.psi); path("bsde", "psibar", &p.psibar);
    constant("bsde", "rho", &p.rho, m, n); constant("bsde", "rhobar", &p.rhobar, m, n);
    path("observation", "f", &p.f); path("observation", "fbar", &p.fbar);
    path("observation", "g", &p.g); path("observation", "h", &p.h);
    path("cost", "A", &p.A); path("cost", "Abar", &p.Abar); path("cost", "B", &p.B);
    path("cost", "D", &p.D); path("cost", "Dbar", &p.Dbar);
    path("cost", "Ftilde", &p.Ftilde); path("cost", "Fbartilde", &p.Fbartilde);
    path("cost", "Gtilde", &p.Gtilde);
    constant("cost", "H", &p.H, n, n); constant("cost", "Hbar", &p.Hbar, n, n);
    vconstant("cost", "Ltilde", &p.Ltilde, n); vconstant("cost", "Lbartilde", &p.Lbartilde, n);
    constant("cost", "M", &p.M, m, m); vconstant("cost", "N", &p.N, m);

    for (const auto& [sec, entries] : raw.sections) {
        if (sec == "problem") continue;
        for (const auto& [key, es] : entries) {
            if (sec == "sim") {
                if (key == "paths") p.sim_paths = static_cast<long long>(scalar_of(es, key));
                else if (key == "seed") p.sim_seed = static_cast<unsigned long long>(scalar_of(es, key));
                else if (key == "dt") p.sim_dt = scalar_of(es, key);
                else throw ParseError("unknown key '" + key + "' in [sim]", es[0].line, key);
                continue;
            }
            auto it = setters.find(sec + "." + key);
            if (it == setters.end())
                throw ParseError("unknown key '" + key + "' in [" + sec + "]", es[0].line, key);
            it->second(es);
        }
    }
    return p;
}

MFLQProblem load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_scenario(ss.str());
}

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void emit_matrix(std::string& out, const Eigen::MatrixXd& v) {
    for (int i = 0; i < v.rows(); ++i)
        for (int j = 0; j < v.cols(); ++j) { out += " "; out += num(v(i, j)); }
}

void emit_path(std::string& out, const std::string& key, const CoefficientPath& cp,
               const TimeGrid& grid) {
    if (cp.is_constant()) {
        out += key + " ="; emit_matrix(out, cp.at_knot(0)); out += "\n";
        return;
    }
    for (int i = 0; i < grid.knots(); ++i) {
        out += key + " @ " + num(grid.t(i)) + " =";
        emit_matrix(out, cp.at_knot(i));
        out += "\n";
    }
}

void emit_family(std::string& out, const std::string& key,
                 const std::vector<CoefficientPath>& fam, const TimeGrid& grid) {
    bool all_const = true;
    for (const auto& cp : fam) all_const = all_const && cp.is_constant();
    if (all_const) {
        out += key + " =";
        for (const auto& cp : fam) emit_matrix(out, cp.at_knot(0));
        out += "\n";
        return;
    }
    for (int i = 0; i < grid.knots(); ++i) {
        out += key + " @ " + num(grid.t(i)) + " =";
        for (const auto& cp : fam) emit_matrix(out, cp.at_knot(i));
        out += "\n";
    }
}

void emit_const(std::string& out, const std::string& key, const Eigen::MatrixXd& v) {
    out += key + " ="; emit_matrix(out, v); out += "\n";
}

} // namespace

std::string save_scenario(const MFLQProblem& p) {
    std::string out;
    out += "[problem]\n";
    out += "n = " + std::to_string(p.n) + "\nm = " + std::to_string(p.m) + "\nk = " +
           std::to_string(p.k) + "\nr = " + std::to_string(p.r) + "\nrtilde = " +
           std::to_string(p.rt) + "\n";
    out += "T = " + num(p.grid.horizon) + "\nsteps = " + std::to_string(p.grid.step_count) + "\n";
    out += "interpolation = " + std::string(p.a.interp() == Interp::PiecewiseLinear ? "1" : "0") + "\n";
    out += "\n[init]\n";
    emit_const(out, "mu0", p.mu0); emit_const(out, "sigma0", p.sigma0);
    out += "\n[dynamics]\n";
    emit_path(out, "a", p.a, p.grid); emit_path(out, "abar", p.abar, p.grid);
    emit_path(out, "b", p.b, p.grid); emit_path(out, "bbar", p.bbar, p.grid);
    emit_path(out, "c", p.c, p.grid);
    out += "\n[bsde]\n";
    emit_path(out, "alpha", p.alpha, p.grid); emit_path(out, "alphabar", p.alphabar, p.grid);
    emit_path(out, "beta", p.beta, p.grid); emit_path(out, "betabar", p.betabar, p.grid);
    emit_family(out, "gamma", p.gamma, p.grid); emit_family(out, "gammabar", p.gammabar, p.grid);
    emit_family(out, "gammatilde", p.gammatilde, p.grid);
    emit_family(out, "gammabartilde", p.gammabartilde, p.grid);
    emit_path(out, "psi", p.psi, p.grid); emit_path(out, "psibar", p.psibar, p.grid);
    emit_const(out, "rho", p.rho); emit_const(out, "rhobar", p.rhobar);
    out += "\n[observation]\n";
    emit_path(out, "f", p.f, p.grid); emit_path(out, "fbar", p.fbar, p.grid);
    emit_path(out, "g", p.g, p.grid); emit_path(out, "h", p.h, p.grid);
    out += "\n[cost]\n";
    emit_path(out, "A", p.A, p.grid); emit_path(out, "Abar", p.Abar, p.grid);
    emit_path(out, "B", p.B, p.grid);
    emit_path(out, "D", p.D, p.grid); emit_path(out, "Dbar", p.Dbar, p.grid);
    emit_path(out, "Ftilde", p.Ftilde, p.grid); emit_path(out, "Fbartilde", p.Fbartilde, p.grid);
    emit_path(out, "Gtilde", p.Gtilde, p.grid);
    emit_const(out, "H", p.H); emit_const(out, "Hbar", p.Hbar);
    emit_const(out, "Ltilde", p.Ltilde); emit_const(out, "Lbartilde", p.Lbartilde);
    emit_const(out, "M", p.M); emit_const(out, "N", p.N);
    out += "\n[sim]\n";
    out += "paths = " + std::to_string(p.sim_paths) + "\n";
    out += "seed = " + std::to_string(p.sim_seed) + "\n";
    if (p.sim_dt > 0.0) out += "dt = " + num(p.sim_dt) + "\n";
    return out;
}

MFLQProblem al_example_problem(int step_count) {
    TimeGrid grid = TimeGrid::make(1.0, step_count);
    MFLQProblem p = MFLQProblem::zero(1, 1, 1, 1, 1, grid);
    auto c1 = [&](double v) {
        return CoefficientPath::constant(Eigen::MatrixXd::Constant(1, 1, v), grid);
    };
    p.mu0 << 1.0;
    p.a = c1(0.03); p.abar = c1(0.03); p.b = c1(1.0); p.bbar = c1(0.01); p.c = c1(0.04);
    p.beta = c1(0.06); p.psi = c1(1.0);
    p.rho(0, 0) = 1.0;
    p.f = c1(0.1); p.h = c1(0.1);
    p.B = c1(1.0);
    p.H(0, 0) = 0.01;
    p.Hbar(0, 0) = -0.01;  // terminal risk weight on the variance of x_T
    p.N << 1.0;
    p.sim_paths = 20000;
    p.sim_seed = 42;
    return p;
}

} // namespace mflqg
