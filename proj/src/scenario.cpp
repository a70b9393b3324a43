#include "multitime/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "multitime/delta_model.hpp"
#include "multitime/errors.hpp"
#include "multitime/field.hpp"
#include "multitime/holonomy.hpp"
#include "multitime/lattice.hpp"
#include "multitime/operator.hpp"
#include "multitime/polynomial.hpp"
#include "multitime/potential.hpp"
#include "multitime/serialize.hpp"

namespace multitime {
namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";  // keep in sync with the build metadata
constexpr int kManifestFormat = 1;
constexpr double kPi = 3.14159265358979323846;

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Config reading. Every accessor names the full key path on failure so a
// bad config is rejected with an actionable message before any computation.

class Node {
  public:
    Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

    const json& raw() const { return *j_; }
    const std::string& path() const { return path_; }
    bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

    Node child(const std::string& key) const {
        require(key);
        return Node((*j_)[key], join(key));
    }

    Node object(const std::string& key) const {
        Node n = child(key);
        if (!n.raw().is_object()) fail(key, "must be an object");
        return n;
    }

    std::vector<Node> array(const std::string& key) const {
        require(key);
        const json& a = (*j_)[key];
        if (!a.is_array()) fail(key, "must be an array");
        std::vector<Node> out;
        for (std::size_t i = 0; i < a.size(); ++i)
            out.emplace_back(a[i], join(key) + "[" + std::to_string(i) + "]");
        return out;
    }

    std::string str(const std::string& key) const {
        require(key);
        const json& v = (*j_)[key];
        if (!v.is_string()) fail(key, "must be a string");
        return v.get<std::string>();
    }

    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const json& v = (*j_)[key];
        if (!v.is_boolean()) fail(key, "must be a boolean");
        return v.get<bool>();
    }

    double number(const std::string& key) const {
        require(key);
        return number_at(key);
    }
    double number(const std::string& key, double fallback) const {
        return has(key) ? number_at(key) : fallback;
    }
    double positive(const std::string& key) const {
        const double v = number(key);
        if (!(v > 0.0)) fail(key, "must be a positive number");
        return v;
    }
    double positive(const std::string& key, double fallback) const {
        const double v = number(key, fallback);
        if (!(v > 0.0)) fail(key, "must be a positive number");
        return v;
    }

    long integer(const std::string& key) const {
        require(key);
        return integer_at(key);
    }
    long integer(const std::string& key, long fallback) const {
        return has(key) ? integer_at(key) : fallback;
    }

    std::vector<double> numbers(const std::string& key) const {
        require(key);
        const json& a = (*j_)[key];
        if (!a.is_array()) fail(key, "must be an array of numbers");
        std::vector<double> out;
        for (const json& v : a) {
            if (!v.is_number()) fail(key, "must be an array of numbers");
            out.push_back(v.get<double>());
            if (!std::isfinite(out.back())) fail(key, "must contain only finite numbers");
        }
        return out;
    }

    std::vector<long> integers(const std::string& key) const {
        require(key);
        const json& a = (*j_)[key];
        if (!a.is_array()) fail(key, "must be an array of integers");
        std::vector<long> out;
        for (const json& v : a) {
            if (!v.is_number_integer()) fail(key, "must be an array of integers");
            out.push_back(v.get<long>());
        }
        return out;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw invalid_input_error("parameter \"" + join(key) + "\" " + what);
    }
    [[noreturn]] void fail_self(const std::string& what) const {
        throw invalid_input_error("parameter \"" + path_ + "\" " + what);
    }

  private:
    std::string join(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }
    void require(const std::string& key) const {
        if (!has(key))
            throw invalid_input_error("missing required parameter \"" + join(key) + "\"");
    }
    double number_at(const std::string& key) const {
        const json& v = (*j_)[key];
        if (!v.is_number()) fail(key, "must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(key, "must be finite");
        return d;
    }
    long integer_at(const std::string& key) const {
        const json& v = (*j_)[key];
        if (!v.is_number_integer()) fail(key, "must be an integer");
        return v.get<long>();
    }

    const json* j_;
    std::string path_;
};

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
    return out;
}

Polynomial parse_polynomial(const Node& n) {
    if (!n.raw().is_object()) n.fail_self("must be a polynomial object {n_vars, terms}");
    const long nv = n.integer("n_vars");
    if (nv < 1 || nv > 16) n.fail("n_vars", "must be between 1 and 16");
    std::vector<Monomial> terms;
    for (const Node& t : n.array("terms")) {
        if (!t.raw().is_object()) t.fail_self("must be an object {coeff, powers}");
        Monomial m;
        m.coeff = t.number("coeff");
        const std::vector<long> pw = t.integers("powers");
        if (static_cast<long>(pw.size()) != nv)
            t.fail("powers", "must list one exponent per variable");
        for (long p : pw) {
            if (p < 0 || p > 32) t.fail("powers", "must contain exponents in [0, 32]");
            m.powers.push_back(static_cast<int>(p));
        }
        terms.push_back(std::move(m));
    }
    return Polynomial(static_cast<std::size_t>(nv), std::move(terms));
}

Operator parse_operator(const Node& n) {
    if (!n.raw().is_object()) n.fail_self("must be a matrix object {dim, re, im}");
    try {
        return operator_from_json(n.raw());
    } catch (const std::exception& e) {
        throw invalid_input_error("parameter \"" + n.path() + "\": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Generator-field spec shared by the propagator scenarios.

struct FieldSpec {
    std::string kind;
    int n_times = 2;
    int dim = 2;
    Polynomial g;     // gradient-scalar
    Operator matrix;  // gradient-scalar
    unsigned seed = 1;
};

FieldSpec parse_field(const Node& params, unsigned seed, json& eff) {
    const Node f = params.object("field");
    FieldSpec s;
    s.seed = seed;
    s.kind = f.str("kind");
    if (s.kind == "pauli-pair") {
        s.n_times = 2;
        s.dim = 2;
    } else if (s.kind == "commuting-diagonal") {
        const long nt = f.integer("n_times");
        const long d = f.integer("dim");
        if (nt < 2 || nt > 16) f.fail("n_times", "must be between 2 and 16");
        if (d < 1 || d > 64) f.fail("dim", "must be between 1 and 64");
        s.n_times = static_cast<int>(nt);
        s.dim = static_cast<int>(d);
    } else if (s.kind == "gradient-scalar") {
        s.g = parse_polynomial(f.object("g"));
        s.matrix = parse_operator(f.child("matrix"));
        s.n_times = static_cast<int>(s.g.n_vars());
        s.dim = static_cast<int>(s.matrix.rows());
        if (s.n_times < 2) f.fail("g", "must depend on at least two time variables");
    } else {
        f.fail("kind", "must be one of pauli-pair, commuting-diagonal, gradient-scalar");
    }
    eff["field"] = f.raw();
    return s;
}

HamiltonianField build_field(const FieldSpec& s) {
    if (s.kind == "pauli-pair") return make_pauli_pair_field();
    if (s.kind == "commuting-diagonal")
        return make_commuting_diagonal_field(s.n_times, s.dim, s.seed);
    return make_gradient_scalar_field(s.g, s.matrix);
}

// ---------------------------------------------------------------------------
// Potential spec shared by the interaction-relation scenarios.

struct PotentialSpec {
    std::string kind;
    double charge = 0.0;
    double amplitude = 0.0;
    double width = 1.0;
    int n_particles = 2;
    int space_dim = 3;
    std::vector<Polynomial> polys;  // external / gradient-gauge externals
    Polynomial g;                   // gradient-gauge
};

PotentialSpec parse_potential(const Node& params, json& eff) {
    const Node p = params.object("potential");
    PotentialSpec s;
    s.kind = p.str("kind");
    if (s.kind == "coulomb-split" || s.kind == "gaussian-pair") {
        if (s.kind == "coulomb-split") {
            s.charge = p.number("charge");
        } else {
            s.amplitude = p.number("amplitude");
            s.width = p.positive("width");
        }
        const long np = p.integer("n_particles", 2);
        const long d = p.integer("space_dim", 3);
        if (np < 2 || np > 16) p.fail("n_particles", "must be between 2 and 16");
        if (d != 1 && d != 3) p.fail("space_dim", "must be 1 or 3");
        s.n_particles = static_cast<int>(np);
        s.space_dim = static_cast<int>(d);
    } else if (s.kind == "external" || s.kind == "gradient-gauge") {
        const long d = p.integer("space_dim");
        if (d < 1 || d > 3) p.fail("space_dim", "must be between 1 and 3");
        s.space_dim = static_cast<int>(d);
        const char* list_key = s.kind == "external" ? "polynomials" : "externals";
        for (const Node& q : p.array(list_key)) {
            Polynomial poly = parse_polynomial(q);
            if (poly.n_vars() != static_cast<std::size_t>(1 + s.space_dim))
                q.fail_self("must be a polynomial in 1 + space_dim variables");
            s.polys.push_back(std::move(poly));
        }
        if (s.polys.size() < 2) p.fail(list_key, "must list at least two particles");
        s.n_particles = static_cast<int>(s.polys.size());
        if (s.kind == "gradient-gauge") {
            s.g = parse_polynomial(p.object("g"));
            if (s.g.n_vars() != static_cast<std::size_t>(s.n_particles))
                p.fail("g", "must be a polynomial in one variable per particle");
        }
    } else {
        p.fail("kind",
               "must be one of coulomb-split, gaussian-pair, external, gradient-gauge");
    }
    eff["potential"] = p.raw();
    return s;
}

PotentialField build_potential(const PotentialSpec& s) {
    if (s.kind == "coulomb-split")
        return make_coulomb_split_potential(s.charge, s.n_particles, s.space_dim);
    if (s.kind == "gaussian-pair")
        return make_gaussian_pair_potential(s.amplitude, s.width, s.n_particles, s.space_dim);
    if (s.kind == "external") return make_external_potential(s.polys, s.space_dim);
    return make_gradient_gauge_potential(s.g, s.polys, s.space_dim);
}

// ---------------------------------------------------------------------------
// Output plumbing.

struct RunContext {
    std::string scenario;
    std::string dir;
    unsigned long seed = 1;
    bool verbose = false;
    std::vector<std::string> files;
};

struct Csv {
    explicit Csv(const std::string& header) : text(header + "\n") {}
    void row(std::initializer_list<std::string> cells) {
        bool first = true;
        for (const std::string& c : cells) {
            if (!first) text += ',';
            text += c;
            first = false;
        }
        text += '\n';
    }
    std::string text;
};

void write_raw(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open output file '" + path + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw io_error("failed writing output file '" + path + "'");
}

void write_text_file(RunContext& ctx, const std::string& name, const std::string& text) {
    write_raw(ctx.dir + "/" + name, text);
    ctx.files.push_back(name);
    if (ctx.verbose) std::cerr << "[" << ctx.scenario << "] wrote " << ctx.dir << "/" << name << "\n";
}

void write_json_file(RunContext& ctx, const std::string& name, const json& j) {
    write_text_file(ctx, name, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// consistency-check: pairwise flatness residuals of a generator field at
// one time tuple. Output: consistency.json.

struct ConsistencyParams {
    FieldSpec field;
    Eigen::VectorXd time;
    double fd_step = 1e-4;
    double tolerance = 1e-8;
};

ConsistencyParams parse_consistency(const Node& p, unsigned seed, json& eff) {
    ConsistencyParams out;
    out.field = parse_field(p, seed, eff);
    const std::vector<double> tv = p.numbers("time");
    if (static_cast<int>(tv.size()) != out.field.n_times)
        p.fail("time", "must list one value per time variable (expected " +
                           std::to_string(out.field.n_times) + ")");
    out.time = to_eigen(tv);
    out.fd_step = p.positive("fd_step", 1e-4);
    out.tolerance = p.positive("tolerance", 1e-8);
    eff["time"] = tv;
    eff["fd_step"] = out.fd_step;
    eff["tolerance"] = out.tolerance;
    return out;
}

void run_consistency(const ConsistencyParams& p, RunContext& ctx) {
    const HamiltonianField field = build_field(p.field);
    const CurvatureReport rep = consistency_residual(field, p.time, p.fd_step);
    json r_norms = json::array();
    json f_norms = json::array();
    for (int j = 0; j < rep.n_times; ++j) {
        json rrow = json::array();
        json frow = json::array();
        for (int k = 0; k < rep.n_times; ++k) {
            rrow.push_back(operator_norm(rep.r(j, k)));
            frow.push_back(operator_norm(rep.f(j, k)));
        }
        r_norms.push_back(std::move(rrow));
        f_norms.push_back(std::move(frow));
    }
    json out{{"n_times", rep.n_times},
             {"dim", field.dim()},
             {"max_r_norm", rep.max_R_norm},
             {"r_norms", std::move(r_norms)},
             {"f_norms", std::move(f_norms)},
             {"consistent", rep.max_R_norm <= p.tolerance}};
    if (rep.worst_j >= 0) {
        out["worst"] = json::array({rep.worst_j, rep.worst_k});
        out["worst_r"] = operator_to_json(rep.r(rep.worst_j, rep.worst_k));
    } else {
        out["worst"] = nullptr;
        out["worst_r"] = nullptr;
    }
    write_json_file(ctx, "consistency.json", out);
}

// ---------------------------------------------------------------------------
// holonomy-scan: norm of the axis-rectangle loop defect over a dyadic dt
// sweep, against the commutator norm it converges to. Outputs:
// holonomy_scan.csv (dt, loop_minus_identity, ratio_to_dt2), holonomy_scan.json.

struct HolonomyScanParams {
    FieldSpec field;
    Eigen::VectorXd corner;
    int axis_j = 0;
    int axis_k = 1;
    std::vector<long> dt_pows;
    int steps_per_edge = 1;
};

HolonomyScanParams parse_holonomy_scan(const Node& p, unsigned seed, json& eff) {
    HolonomyScanParams out;
    out.field = parse_field(p, seed, eff);
    const std::vector<double> cv = p.numbers("corner");
    if (static_cast<int>(cv.size()) != out.field.n_times)
        p.fail("corner", "must list one value per time variable (expected " +
                             std::to_string(out.field.n_times) + ")");
    out.corner = to_eigen(cv);
    const std::vector<long> axes = p.integers("axes");
    if (axes.size() != 2) p.fail("axes", "must list exactly two axis indices");
    for (long a : axes)
        if (a < 0 || a >= out.field.n_times)
            p.fail("axes", "entries must lie in [0, n_times)");
    if (axes[0] == axes[1]) p.fail("axes", "entries must be distinct");
    out.axis_j = static_cast<int>(axes[0]);
    out.axis_k = static_cast<int>(axes[1]);
    out.dt_pows = p.integers("dt_pows");
    if (out.dt_pows.empty()) p.fail("dt_pows", "must be a nonempty array of integers");
    for (long q : out.dt_pows)
        if (q < 1 || q > 40) p.fail("dt_pows", "entries must lie in [1, 40]");
    const long spe = p.integer("steps_per_edge", 1);
    if (spe < 1 || spe > 1000000) p.fail("steps_per_edge", "must be in [1, 1000000]");
    out.steps_per_edge = static_cast<int>(spe);
    eff["corner"] = cv;
    eff["axes"] = axes;
    eff["dt_pows"] = out.dt_pows;
    eff["steps_per_edge"] = out.steps_per_edge;
    return out;
}

void run_holonomy_scan(const HolonomyScanParams& p, RunContext& ctx) {
    const HamiltonianField field = build_field(p.field);
    Csv csv("dt,loop_minus_identity,ratio_to_dt2");
    double final_ratio = 0.0;
    for (long pow2 : p.dt_pows) {
        const double dt = std::ldexp(1.0, -static_cast<int>(pow2));
        const RectangleHolonomy h =
            rectangle_holonomy(field, p.corner, p.axis_j, p.axis_k, dt, p.steps_per_edge);
        const double nrm = operator_norm(h.loop_minus_identity);
        final_ratio = nrm / (dt * dt);
        csv.row({fmt17(dt), fmt17(nrm), fmt17(final_ratio)});
    }
    const double comm = operator_norm(
        commutator(field.eval(p.axis_j, p.corner), field.eval(p.axis_k, p.corner)));
    json out{{"commutator_norm", comm},
             {"final_ratio", final_ratio},
             {"final_relative_deviation",
              comm > 0.0 ? std::abs(final_ratio - comm) / comm : final_ratio},
             {"n_rows", p.dt_pows.size()}};
    write_text_file(ctx, "holonomy_scan.csv", csv.text);
    write_json_file(ctx, "holonomy_scan.json", out);
}

// ---------------------------------------------------------------------------
// stokes: boundary transport vs surface-ordered exponential of an affine
// patch over a mesh sweep. Outputs: stokes.csv (mesh, gap), stokes.json.

struct StokesParams {
    FieldSpec field;
    Eigen::VectorXd origin, edge_s, edge_t;
    std::vector<long> mesh_list;
    double fd_step = 1e-4;
};

StokesParams parse_stokes(const Node& p, unsigned seed, json& eff) {
    StokesParams out;
    out.field = parse_field(p, seed, eff);
    const Node patch = p.object("patch");
    const auto read_edge = [&](const char* key) {
        const std::vector<double> v = patch.numbers(key);
        if (static_cast<int>(v.size()) != out.field.n_times)
            patch.fail(key, "must list one value per time variable (expected " +
                                std::to_string(out.field.n_times) + ")");
        return to_eigen(v);
    };
    out.origin = read_edge("origin");
    out.edge_s = read_edge("edge_s");
    out.edge_t = read_edge("edge_t");
    out.mesh_list = p.integers("mesh_list");
    if (out.mesh_list.empty()) p.fail("mesh_list", "must be a nonempty array of integers");
    for (long m : out.mesh_list)
        if (m < 1 || m > 4096) p.fail("mesh_list", "entries must lie in [1, 4096]");
    out.fd_step = p.positive("fd_step", 1e-4);
    eff["patch"] = patch.raw();
    eff["mesh_list"] = out.mesh_list;
    eff["fd_step"] = out.fd_step;
    return out;
}

void run_stokes(const StokesParams& p, RunContext& ctx) {
    const HamiltonianField field = build_field(p.field);
    const SurfacePatch patch = make_affine_patch(p.origin, p.edge_s, p.edge_t);
    Csv csv("mesh,gap");
    std::vector<double> gaps;
    StokesReport last;
    for (long m : p.mesh_list) {
        last = stokes_compare(field, patch, static_cast<int>(m), p.fd_step);
        gaps.push_back(last.gap);
        csv.row({std::to_string(m), fmt17(last.gap)});
    }
    json ratios = json::array();
    for (std::size_t i = 0; i + 1 < gaps.size(); ++i) {
        if (gaps[i] > 0.0)
            ratios.push_back(gaps[i + 1] / gaps[i]);
        else
            ratios.push_back(nullptr);
    }
    json out{{"mesh_list", p.mesh_list},
             {"gaps", gaps},
             {"halving_ratios", std::move(ratios)},
             {"final_gap", gaps.back()},
             {"boundary", operator_to_json(last.boundary)},
             {"surface", operator_to_json(last.surface)}};
    write_text_file(ctx, "stokes.csv", csv.text);
    write_json_file(ctx, "stokes.json", out);
}

// ---------------------------------------------------------------------------
// potential-analyze: cross-dependence residuals of a per-particle potential
// on random spacetime configurations. Outputs: relations.csv
// (sample, i, j, r1, r2), relations.json.

struct PotentialAnalyzeParams {
    PotentialSpec pot;
    long n_samples = 100;
    double min_separation = 1e-2;
    double half_width = 2.0;
    double fd_step = 1e-3;
};

PotentialAnalyzeParams parse_potential_analyze(const Node& p, json& eff) {
    PotentialAnalyzeParams out;
    out.pot = parse_potential(p, eff);
    out.n_samples = p.integer("n_samples", 100);
    if (out.n_samples < 1 || out.n_samples > 1000000)
        p.fail("n_samples", "must be in [1, 1000000]");
    out.min_separation = p.number("min_separation", 1e-2);
    if (out.min_separation < 0.0) p.fail("min_separation", "must be >= 0");
    out.half_width = p.positive("half_width", 2.0);
    out.fd_step = p.positive("fd_step", 1e-3);
    eff["n_samples"] = out.n_samples;
    eff["min_separation"] = out.min_separation;
    eff["half_width"] = out.half_width;
    eff["fd_step"] = out.fd_step;
    return out;
}

void run_potential_analyze(const PotentialAnalyzeParams& p, RunContext& ctx) {
    const PotentialField v = build_potential(p.pot);
    const SampleSet samples =
        make_random_configurations(static_cast<int>(p.n_samples), v.n_particles(),
                                   v.space_dim(), ctx.seed, p.min_separation, p.half_width);
    const RelationReport rep = relation_residuals(v, samples.configs, p.fd_step);
    Csv csv("sample,i,j,r1,r2");
    for (const RelationRow& r : rep.rows)
        csv.row({std::to_string(r.sample), std::to_string(r.i), std::to_string(r.j),
                 fmt17(r.r1), fmt17(r.r2)});
    json out{{"kind", p.pot.kind},
             {"n_particles", v.n_particles()},
             {"space_dim", v.space_dim()},
             {"n_samples", p.n_samples},
             {"n_rejected_draws", samples.n_rejected},
             {"excluded_samples", rep.excluded},
             {"max_r1", rep.max_r1},
             {"max_r2", rep.max_r2}};
    write_text_file(ctx, "relations.csv", csv.text);
    write_json_file(ctx, "relations.json", out);
}

// ---------------------------------------------------------------------------
// gauge-decompose: split V_j = v_tilde_j(t_j, x_j) + d theta/d t_j and report
// the recovered phase. Outputs: theta.csv, gauge.json.

struct GaugeDecomposeParams {
    PotentialSpec pot;
    Eigen::VectorXd lo, hi;
    long grid_n = 64;
    long spatial_samples = 8;
    double tol = 1e-6;
};

GaugeDecomposeParams parse_gauge_decompose(const Node& p, json& eff) {
    GaugeDecomposeParams out;
    out.pot = parse_potential(p, eff);
    const Node box = p.object("box");
    const auto read_corner = [&](const char* key) {
        const std::vector<double> v = box.numbers(key);
        if (static_cast<int>(v.size()) != out.pot.n_particles)
            box.fail(key, "must list one value per particle (expected " +
                              std::to_string(out.pot.n_particles) + ")");
        return to_eigen(v);
    };
    out.lo = read_corner("lo");
    out.hi = read_corner("hi");
    out.grid_n = p.integer("grid_n", 64);
    if (out.grid_n < 4 || out.grid_n > 4096) p.fail("grid_n", "must be in [4, 4096]");
    out.tol = p.positive("tol", 1e-6);
    out.spatial_samples = p.integer("spatial_samples", 8);
    if (out.spatial_samples < 2 || out.spatial_samples > 1024)
        p.fail("spatial_samples", "must be in [2, 1024]");
    eff["box"] = box.raw();
    eff["grid_n"] = out.grid_n;
    eff["tol"] = out.tol;
    eff["spatial_samples"] = out.spatial_samples;
    return out;
}

void run_gauge_decompose(const GaugeDecomposeParams& p, RunContext& ctx) {
    const PotentialField v = build_potential(p.pot);
    const GaugeDecomposition dec =
        gauge_decompose(v, TimeBox{p.lo, p.hi}, static_cast<int>(p.grid_n), p.tol,
                        static_cast<int>(p.spatial_samples), ctx.seed);
    const int n = v.n_particles();
    Csv csv(n == 2 ? "t0,t1,theta" : "fraction,theta");
    if (n == 2) {
        // Full corner grid of the verification box, plot-ready.
        for (long i = 0; i <= p.grid_n; ++i) {
            for (long j = 0; j <= p.grid_n; ++j) {
                TimePoint t(2);
                t[0] = p.lo[0] + (p.hi[0] - p.lo[0]) * static_cast<double>(i) /
                                     static_cast<double>(p.grid_n);
                t[1] = p.lo[1] + (p.hi[1] - p.lo[1]) * static_cast<double>(j) /
                                     static_cast<double>(p.grid_n);
                csv.row({fmt17(t[0]), fmt17(t[1]), fmt17(dec.theta(t))});
            }
        }
    } else {
        // Diagonal profile lo -> hi for higher particle counts.
        for (long k = 0; k <= p.grid_n; ++k) {
            const double f = static_cast<double>(k) / static_cast<double>(p.grid_n);
            const TimePoint t = p.lo + f * (p.hi - p.lo);
            csv.row({fmt17(f), fmt17(dec.theta(t))});
        }
    }
    json out{{"residual", dec.residual},
             {"vtilde_x_spread", dec.vtilde_x_spread},
             {"w_x_spread", dec.w_x_spread},
             {"theta_at_hi", dec.theta(p.hi)}};
    write_text_file(ctx, "theta.csv", csv.text);
    write_json_file(ctx, "gauge.json", out);
}

// ---------------------------------------------------------------------------
// coulomb-commutator: two-particle commutator residual against its analytic
// gradient form on a frozen slice, over a grid refinement list. Outputs:
// commutator.csv (n, residual), commutator.json.

struct CoulombCommutatorParams {
    std::vector<long> n_list;
    long stencil_order = 4;
    double extent = 3.2;
    double charge = 0.5;
    double width = 0.3;
    Eigen::Vector3d frozen_x2 = Eigen::Vector3d(2.0, 0.0, 0.0);
};

CoulombCommutatorParams parse_coulomb_commutator(const Node& p, json& eff) {
    CoulombCommutatorParams out;
    out.n_list = p.has("n_list") ? p.integers("n_list") : std::vector<long>{32, 64};
    if (out.n_list.empty()) p.fail("n_list", "must be a nonempty array of integers");
    for (long n : out.n_list)
        if (n < 8 || n > 256) p.fail("n_list", "entries must lie in [8, 256]");
    out.stencil_order = p.integer("stencil_order", 4);
    if (out.stencil_order != 2 && out.stencil_order != 4)
        p.fail("stencil_order", "must be 2 or 4");
    out.extent = p.positive("extent", 3.2);
    out.charge = p.number("charge", 0.5);
    out.width = p.positive("width", 0.3);
    if (p.has("frozen_x2")) {
        const std::vector<double> x2 = p.numbers("frozen_x2");
        if (x2.size() != 3) p.fail("frozen_x2", "must list three coordinates");
        out.frozen_x2 = Eigen::Vector3d(x2[0], x2[1], x2[2]);
    }
    eff["n_list"] = out.n_list;
    eff["stencil_order"] = out.stencil_order;
    eff["extent"] = out.extent;
    eff["charge"] = out.charge;
    eff["width"] = out.width;
    eff["frozen_x2"] = std::vector<double>{out.frozen_x2[0], out.frozen_x2[1], out.frozen_x2[2]};
    return out;
}

void run_coulomb_commutator(const CoulombCommutatorParams& p, RunContext& ctx) {
    const Eigen::Vector3d c2 = p.frozen_x2;
    const double w = p.width;
    const double q = p.charge;
    const auto psi = [w, c2](const Eigen::Vector3d& x1, const Eigen::Vector3d& x2) {
        return Complex(
            std::exp(-(x1.squaredNorm() + (x2 - c2).squaredNorm()) / (2.0 * w * w)), 0.0);
    };
    const auto pot = [q](const Eigen::Vector3d& x1, const Eigen::Vector3d& x2) {
        return q / (x1 - x2).norm();
    };
    PairFirstOrderOp rhs;
    rhs.grad1 = [q](const Eigen::Vector3d& x1, const Eigen::Vector3d& x2) {
        const Eigen::Vector3d d = x1 - x2;
        return Eigen::Vector3d(q * d / std::pow(d.norm(), 3));
    };
    rhs.grad2 = rhs.grad1;

    Csv csv("n,residual");
    std::vector<double> residuals;
    for (long n : p.n_list) {
        Grid g;
        g.space_dim = 3;
        g.points_per_axis = static_cast<int>(n);
        g.spacing = p.extent / static_cast<double>(n);
        g.origin = -p.extent / 2.0 + g.spacing / 2.0;
        g.boundary = Boundary::zero_padded;
        SliceSpec slice;
        slice.frozen_x2 = c2;
        slice.mass = 1.0;
        slice.stencil_order = static_cast<int>(p.stencil_order);
        const double res = schrodinger_pair_commutator_slice(g, slice, pot, psi, rhs);
        residuals.push_back(res);
        csv.row({std::to_string(n), fmt17(res)});
        if (ctx.verbose)
            std::cerr << "[" << ctx.scenario << "] n=" << n << " residual=" << res << "\n";
    }
    json slopes = json::array();
    for (std::size_t i = 0; i + 1 < residuals.size(); ++i) {
        if (residuals[i] > 0.0 && residuals[i + 1] > 0.0)
            slopes.push_back(std::log(residuals[i] / residuals[i + 1]) / std::log(2.0));
        else
            slopes.push_back(nullptr);
    }
    json out{{"n_list", p.n_list},
             {"residuals", residuals},
             {"refinement_slopes", std::move(slopes)}};
    write_text_file(ctx, "commutator.csv", csv.text);
    write_json_file(ctx, "commutator.json", out);
}

// ---------------------------------------------------------------------------
// order-gap: defect between the two evolution orders of a pair of
// single-time generators under the characteristic scheme. Outputs:
// order_gap.csv (t1, t2, gap, normalized, commutator_norm), order_gap.json.

struct OrderGapParams {
    long cells = 512;
    double spacing = 0.1 / 16.0;
    double origin = -1.6;
    long halfwidth = 48;
    std::vector<long> centers{192, 320};
    std::vector<double> masses{0.4, 0.25};
    double amplitude = 0.9;
    double width = 0.8;
    long stencil_order = 4;
    std::vector<std::pair<double, double>> times;
};

// Compact cos^2 bump over cells [center-hw, center+hw] with a fixed phase
// ramp; the two-particle state is the normalized product of two of these.
void add_pulse(GridFunction& f, long hw, long center, const Eigen::VectorXcd& spinor) {
    for (long c = center - hw; c <= center + hw; ++c) {
        const double u = static_cast<double>(c - center) / static_cast<double>(hw + 1);
        const double amp = std::cos(0.5 * kPi * u);
        const Complex ph = std::polar(amp * amp, 0.3 * static_cast<double>(c));
        for (int s = 0; s < spinor.size(); ++s)
            f.values()[f.index({c}, {s})] += ph * spinor[s];
    }
}

OrderGapParams parse_order_gap(const Node& p, json& eff) {
    OrderGapParams out;
    out.cells = p.integer("cells", 512);
    if (out.cells < 8 || out.cells > 8192) p.fail("cells", "must be in [8, 8192]");
    out.spacing = p.positive("spacing", 0.1 / 16.0);
    out.origin = p.number("origin", -1.6);
    if (p.has("pulse")) {
        const Node pulse = p.object("pulse");
        out.halfwidth = pulse.integer("halfwidth", 48);
        if (pulse.has("centers")) {
            out.centers = pulse.integers("centers");
            if (out.centers.size() != 2) pulse.fail("centers", "must list two cell indices");
        }
    }
    if (out.halfwidth < 1) p.fail("pulse.halfwidth", "must be >= 1");
    for (long c : out.centers)
        if (c - out.halfwidth < 0 || c + out.halfwidth >= out.cells)
            p.fail("pulse.centers", "pulse support must lie inside the grid");
    if (p.has("masses")) {
        out.masses = p.numbers("masses");
        if (out.masses.size() != 2) p.fail("masses", "must list two masses");
    }
    out.amplitude = p.number("amplitude", 0.9);
    out.width = p.positive("width", 0.8);
    out.stencil_order = p.integer("stencil_order", 4);
    if (out.stencil_order != 2 && out.stencil_order != 4)
        p.fail("stencil_order", "must be 2 or 4");
    for (const Node& t : p.array("times")) {
        const json& v = t.raw();
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            t.fail_self("must be a pair [t1, t2]");
        out.times.emplace_back(v[0].get<double>(), v[1].get<double>());
    }
    if (out.times.empty()) p.fail("times", "must list at least one [t1, t2] pair");
    eff["cells"] = out.cells;
    eff["spacing"] = out.spacing;
    eff["origin"] = out.origin;
    eff["pulse"] = json{{"halfwidth", out.halfwidth}, {"centers", out.centers}};
    eff["masses"] = out.masses;
    eff["amplitude"] = out.amplitude;
    eff["width"] = out.width;
    eff["stencil_order"] = out.stencil_order;
    eff["times"] = p.raw()["times"];
    return out;
}

void run_order_gap(const OrderGapParams& p, RunContext& ctx) {
    Grid g;
    g.space_dim = 1;
    g.points_per_axis = static_cast<int>(p.cells);
    g.spacing = p.spacing;
    g.origin = p.origin;
    g.boundary = Boundary::zero_padded;

    GridFunction f(g, {2}), q(g, {2});
    Eigen::VectorXcd sa(2), sb(2);
    sa << Complex(1.0, 0.0), Complex(0.2, 0.5);
    sb << Complex(0.0, 0.7), Complex(1.0, 0.0);
    add_pulse(f, p.halfwidth, p.centers[0], sa);
    add_pulse(q, p.halfwidth, p.centers[1], sb);
    GridFunction psi(g, {2, 2});
    for (long c1 = 0; c1 < p.cells; ++c1)
        for (long c2 = 0; c2 < p.cells; ++c2)
            for (int s1 = 0; s1 < 2; ++s1)
                for (int s2 = 0; s2 < 2; ++s2)
                    psi.values()[psi.index({c1, c2}, {s1, s2})] =
                        f.values()[f.index({c1}, {s1})] * q.values()[q.index({c2}, {s2})];
    psi.values() /= psi.norm();

    PartialHamiltonianSpec a;
    a.particle = 0;
    a.kind = HamiltonianKind::dirac1d;
    a.mass = p.masses[0];
    a.stencil_order = static_cast<int>(p.stencil_order);
    if (p.amplitude != 0.0) {
        const double amp = p.amplitude;
        const double s = p.width;
        a.scalar_potential = [amp, s](const Eigen::VectorXd& x) {
            const double r = x[0] - x[1];
            return 0.5 * amp * std::exp(-r * r / (2.0 * s * s));
        };
    }
    PartialHamiltonianSpec b = a;
    b.particle = 1;
    b.mass = p.masses[1];

    Csv csv("t1,t2,gap,normalized,commutator_norm");
    double max_gap = 0.0, max_norm = 0.0, min_norm = 0.0;
    bool first = true;
    for (const auto& [t1, t2] : p.times) {
        const OrderGapResult res = order_gap(a, b, psi, t1, t2, g.spacing);
        csv.row({fmt17(t1), fmt17(t2), fmt17(res.gap), fmt17(res.normalized),
                 fmt17(res.commutator_norm)});
        max_gap = std::max(max_gap, res.gap);
        max_norm = first ? res.normalized : std::max(max_norm, res.normalized);
        min_norm = first ? res.normalized : std::min(min_norm, res.normalized);
        first = false;
        if (ctx.verbose)
            std::cerr << "[" << ctx.scenario << "] t1=" << t1 << " t2=" << t2
                      << " gap=" << res.gap << "\n";
    }
    json out{{"n_rows", p.times.size()},
             {"max_gap", max_gap},
             {"max_normalized", max_norm},
             {"min_normalized", min_norm}};
    write_text_file(ctx, "order_gap.csv", csv.text);
    write_json_file(ctx, "order_gap.json", out);
}

// ---------------------------------------------------------------------------
// lightcone: per-step amplitude outside the one-cell-per-step cone of a
// 1D two-spinor pulse. Outputs: lightcone.csv (step, max_outside),
// lightcone.json.

struct LightconeParams {
    long cells = 1280;
    double spacing = 0.05;
    double origin = 0.0;
    double mass = 0.0;
    long steps = 500;
    long support_lo = 0;
    long support_hi = 0;
    bool has_potential = false;
    double pot_amplitude = 0.0;
    double pot_width = 1.0;
};

LightconeParams parse_lightcone(const Node& p, json& eff) {
    LightconeParams out;
    out.cells = p.integer("cells", 1280);
    if (out.cells < 8 || out.cells > 1 << 20) p.fail("cells", "must be in [8, 2^20]");
    out.spacing = p.positive("spacing", 0.05);
    out.origin = p.number("origin", -0.5 * out.spacing * static_cast<double>(out.cells));
    out.mass = p.number("mass");
    if (out.mass < 0.0) p.fail("mass", "must be >= 0");
    out.steps = p.integer("steps", 500);
    if (out.steps < 1) p.fail("steps", "must be >= 1");
    out.support_lo = out.cells / 2 - 8;
    out.support_hi = out.cells / 2 + 8;
    if (p.has("support")) {
        const Node sup = p.object("support");
        out.support_lo = sup.integer("lo");
        out.support_hi = sup.integer("hi");
    }
    if (out.support_lo < 0 || out.support_hi >= out.cells || out.support_lo > out.support_hi)
        p.fail("support", "must satisfy 0 <= lo <= hi < cells");
    if (out.support_lo - out.steps < 0 || out.support_hi + out.steps > out.cells - 1)
        p.fail("steps", "cone [lo - steps, hi + steps] must stay inside the grid; got [" +
                            std::to_string(out.support_lo - out.steps) + ", " +
                            std::to_string(out.support_hi + out.steps) + "] with cells = " +
                            std::to_string(out.cells));
    if (p.has("potential")) {
        const Node pot = p.object("potential");
        out.has_potential = true;
        out.pot_amplitude = pot.number("amplitude");
        out.pot_width = pot.positive("width");
    }
    eff["cells"] = out.cells;
    eff["spacing"] = out.spacing;
    eff["origin"] = out.origin;
    eff["mass"] = out.mass;
    eff["steps"] = out.steps;
    eff["support"] = json{{"lo", out.support_lo}, {"hi", out.support_hi}};
    eff["potential"] = out.has_potential ? json{{"amplitude", out.pot_amplitude},
                                                {"width", out.pot_width}}
                                         : json(nullptr);
    return out;
}

void run_lightcone(const LightconeParams& p, RunContext& ctx) {
    Grid g;
    g.space_dim = 1;
    g.points_per_axis = static_cast<int>(p.cells);
    g.spacing = p.spacing;
    g.origin = p.origin;
    g.boundary = Boundary::zero_padded;
    GridFunction psi(g, {2});
    for (long c = p.support_lo; c <= p.support_hi; ++c) {
        psi.values()[psi.index({c}, {0})] = std::polar(1.0, 0.1 * static_cast<double>(c));
        psi.values()[psi.index({c}, {1})] = std::polar(0.5, -0.2 * static_cast<double>(c));
    }
    Dirac1dOptions opt;
    opt.mass = p.mass;
    if (p.has_potential) {
        const double amp = p.pot_amplitude;
        const double w = p.pot_width;
        opt.scalar_potential = [amp, w](double x) {
            return amp * std::exp(-x * x / (2.0 * w * w));
        };
    }
    const std::vector<LightConeRow> rows = dirac1d_lightcone_scan(
        psi, static_cast<double>(p.steps) * p.spacing, opt, p.support_lo, p.support_hi);
    Csv csv("step,max_outside");
    double max_outside = 0.0;
    for (const LightConeRow& r : rows) {
        csv.row({std::to_string(r.step), fmt17(r.max_outside)});
        max_outside = std::max(max_outside, r.max_outside);
    }
    json out{{"steps", p.steps},
             {"mass", p.mass},
             {"max_outside", max_outside},
             {"all_zero", max_outside == 0.0}};
    write_text_file(ctx, "lightcone.csv", csv.text);
    write_json_file(ctx, "lightcone.json", out);
}

// ---------------------------------------------------------------------------
// delta-evolve / overlap-test: inductive multi-time construction over a
// shared setup of pulsed particles with a finite-range pair interaction.

struct DeltaParticle {
    long center = 0;
    long halfwidth = 0;
    Eigen::VectorXcd spinor;
    double mass = 1.0;
};

struct DeltaSetup {
    long cells = 64;
    double spacing = 0.1;
    double origin = 0.0;
    std::vector<DeltaParticle> particles;
    double delta = 0.0;
    bool interacting = false;
    double amplitude = 0.0;
    double width = 1.0;
    std::vector<std::pair<std::vector<double>, std::vector<double>>> targets;
};

DeltaSetup parse_delta_setup(const Node& p, json& eff) {
    DeltaSetup out;
    const Node grid = p.object("grid");
    out.cells = grid.integer("cells");
    if (out.cells < 8 || out.cells > 8192) grid.fail("cells", "must be in [8, 8192]");
    out.spacing = grid.positive("spacing");
    out.origin = grid.number("origin");

    for (const Node& q : p.array("particles")) {
        DeltaParticle dp;
        dp.center = q.integer("center_cell");
        dp.halfwidth = q.integer("halfwidth");
        if (dp.halfwidth < 0) q.fail("halfwidth", "must be >= 0");
        if (dp.center - dp.halfwidth < 0 || dp.center + dp.halfwidth >= out.cells)
            q.fail("center_cell", "pulse support must lie inside the grid");
        const json& sp = q.child("spinor").raw();
        if (!sp.is_array() || sp.size() != 2) q.fail("spinor", "must list two components");
        dp.spinor.resize(2);
        for (int s = 0; s < 2; ++s) {
            const json& c = sp[s];
            if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number())
                q.fail("spinor", "components must be [re, im] pairs");
            dp.spinor[s] = Complex(c[0].get<double>(), c[1].get<double>());
        }
        dp.mass = q.number("mass");
        out.particles.push_back(std::move(dp));
    }
    if (out.particles.empty()) p.fail("particles", "must list at least one particle");
    const int n = static_cast<int>(out.particles.size());

    out.delta = p.positive("delta");
    if (p.has("interaction") && !p.raw()["interaction"].is_null()) {
        const Node w = p.object("interaction");
        out.interacting = true;
        out.amplitude = w.number("amplitude");
        out.width = w.positive("width");
    }

    for (const Node& t : p.array("targets")) {
        const std::vector<double> times = t.numbers("times");
        const std::vector<double> xs = t.numbers("positions");
        if (static_cast<int>(times.size()) != n)
            t.fail("times", "must list one value per particle (expected " +
                                std::to_string(n) + ")");
        if (static_cast<int>(xs.size()) != n)
            t.fail("positions", "must list one value per particle (expected " +
                                    std::to_string(n) + ")");
        out.targets.emplace_back(times, xs);
    }
    if (out.targets.empty()) p.fail("targets", "must list at least one target");

    eff["grid"] = json{{"cells", out.cells}, {"spacing", out.spacing}, {"origin", out.origin}};
    eff["particles"] = p.raw()["particles"];
    eff["delta"] = out.delta;
    eff["interaction"] = out.interacting ? json{{"amplitude", out.amplitude},
                                                {"width", out.width}}
                                         : json(nullptr);
    eff["targets"] = p.raw()["targets"];
    return out;
}

GridFunction build_delta_phi0(const DeltaSetup& s) {
    Grid g;
    g.space_dim = 1;
    g.points_per_axis = static_cast<int>(s.cells);
    g.spacing = s.spacing;
    g.origin = s.origin;
    g.boundary = Boundary::zero_padded;
    const int n = static_cast<int>(s.particles.size());

    std::vector<Eigen::VectorXcd> pulse(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const DeltaParticle& dp = s.particles[static_cast<std::size_t>(i)];
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(2 * s.cells);
        for (long c = dp.center - dp.halfwidth; c <= dp.center + dp.halfwidth; ++c) {
            const double u = static_cast<double>(c - dp.center) /
                             static_cast<double>(dp.halfwidth + 1);
            const double amp = std::cos(0.5 * kPi * u);
            const Complex ph = std::polar(amp * amp, 0.3 * static_cast<double>(c));
            for (int sp = 0; sp < 2; ++sp) v[2 * c + sp] += ph * dp.spinor[sp];
        }
        pulse[static_cast<std::size_t>(i)] = std::move(v);
    }

    GridFunction phi0(g, std::vector<int>(static_cast<std::size_t>(n), 2));
    std::vector<long> cc(static_cast<std::size_t>(n), 0);
    std::vector<int> sp(static_cast<std::size_t>(n), 0);
    const auto advance = [](auto& idx, long limit) {
        for (std::size_t k = idx.size(); k-- > 0;) {
            if (++idx[k] < limit) return true;
            idx[k] = 0;
        }
        return false;
    };
    do {
        do {
            Complex v(1.0, 0.0);
            for (int i = 0; i < n; ++i)
                v *= pulse[static_cast<std::size_t>(i)]
                          [2 * cc[static_cast<std::size_t>(i)] + sp[static_cast<std::size_t>(i)]];
            phi0.values()[phi0.index(cc, sp)] = v;
        } while (advance(sp, 2));
    } while (advance(cc, s.cells));
    phi0.values() /= phi0.norm();
    return phi0;
}

PairPotential build_delta_pair(const DeltaSetup& s) {
    PairPotential pair;
    pair.range = s.delta;
    if (s.interacting) {
        const double amp = s.amplitude;
        const double w = s.width;
        pair.profile = [amp, w](double r) {
            return Complex(amp * std::exp(-r * r / (2.0 * w * w)), 0.0);
        };
    }
    return pair;
}

SpacetimeConfig target_config(const DeltaSetup& s, std::size_t k) {
    SpacetimeConfig q;
    const auto& [times, xs] = s.targets[k];
    for (std::size_t i = 0; i < times.size(); ++i) {
        Eigen::VectorXd x(1);
        x << xs[i];
        q.points.push_back({times[i], x});
    }
    return q;
}

// Snapped copy of the target (times to step multiples, positions to cell
// centers), matching the canonical configuration the construction used.
SpacetimeConfig snapped_config(const DeltaSetup& s, const SpacetimeConfig& q) {
    SpacetimeConfig out = q;
    for (SpacetimePoint& pt : out.points) {
        pt.t = s.spacing * static_cast<double>(std::llround(pt.t / s.spacing));
        const long cell = std::llround((pt.x[0] - s.origin) / s.spacing);
        pt.x[0] = s.origin + s.spacing * static_cast<double>(cell);
    }
    return out;
}

json partition_blocks_json(const Partition& p) {
    json out = json::array();
    for (const auto& block : p.blocks()) out.push_back(block);
    return out;
}

struct DeltaEvolveParams {
    DeltaSetup setup;
    bool compute_overlap = true;
    bool export_slices = false;
};

DeltaEvolveParams parse_delta_evolve(const Node& p, json& eff) {
    DeltaEvolveParams out;
    out.setup = parse_delta_setup(p, eff);
    out.compute_overlap = p.flag("compute_overlap", true);
    out.export_slices = p.flag("export_slices", false);
    eff["compute_overlap"] = out.compute_overlap;
    eff["export_slices"] = out.export_slices;
    return out;
}

void run_delta_evolve(const DeltaEvolveParams& p, RunContext& ctx) {
    const DeltaSetup& s = p.setup;
    const GridFunction phi0 = build_delta_phi0(s);
    const PairPotential pair = build_delta_pair(s);
    std::vector<double> masses;
    for (const DeltaParticle& dp : s.particles) masses.push_back(dp.mass);

    json targets = json::array();
    for (std::size_t k = 0; k < s.targets.size(); ++k) {
        const SpacetimeConfig q = target_config(s, k);
        ConstructionScheme asc;
        asc.masses = masses;
        asc.order = SweepOrder::time_ascending;
        ConstructionScheme desc = asc;
        desc.order = SweepOrder::time_descending;

        const ConstructPhiResult ra = construct_phi(phi0, q, pair, asc);
        const ConstructPhiResult rd = construct_phi(phi0, q, pair, desc);
        const double dev_order = (ra.value - rd.value).cwiseAbs().maxCoeff();

        const SpacetimeConfig qs = snapped_config(s, q);
        const std::vector<Partition> adm = admissible_partitions(qs, s.delta);
        json adm_json = json::array();
        for (const Partition& part : adm) adm_json.push_back(partition_blocks_json(part));

        json deviations{{"construction_order", dev_order}};
        if (p.compute_overlap)
            deviations["overlap"] = overlap_welldefinedness(phi0, q, pair, asc);
        else
            deviations["overlap"] = nullptr;

        json stages = json::array();
        for (const FamilyStage& st : ra.slice.trace)
            stages.push_back(json{{"from_time", st.from_time},
                                  {"to_time", st.to_time},
                                  {"evolved", st.evolved},
                                  {"norm_after", st.norm_after}});

        json entry{{"times", s.targets[k].first},
                   {"positions", s.targets[k].second},
                   {"target_cells", ra.target_cells},
                   {"partition", partition_blocks_json(ra.slice.partition)},
                   {"family_times", ra.slice.family_times},
                   {"n_admissible", adm.size()},
                   {"admissible_partitions", std::move(adm_json)},
                   {"value", vector_to_json(ra.value)},
                   {"value_max_abs", ra.value.cwiseAbs().maxCoeff()},
                   {"deviations", std::move(deviations)},
                   {"stages", std::move(stages)}};

        if (p.export_slices) {
            const std::string name = "slice_" + std::to_string(k) + ".bin";
            std::vector<double> tuple;
            for (const SpacetimePoint& pt : qs.points) tuple.push_back(pt.t);
            write_snapshot(ra.slice.data, tuple, ctx.dir + "/" + name);
            ctx.files.push_back(name);
            if (ctx.verbose)
                std::cerr << "[" << ctx.scenario << "] wrote " << ctx.dir << "/" << name << "\n";
            entry["slice_file"] = name;
        }
        targets.push_back(std::move(entry));
        if (ctx.verbose)
            std::cerr << "[" << ctx.scenario << "] target " << k
                      << " construction-order deviation " << dev_order << "\n";
    }

    json out{{"n_particles", s.particles.size()},
             {"delta", s.delta},
             {"grid", json{{"cells", s.cells}, {"spacing", s.spacing}, {"origin", s.origin}}},
             {"interaction", s.interacting ? json{{"amplitude", s.amplitude},
                                                  {"width", s.width}}
                                           : json(nullptr)},
             {"targets", std::move(targets)}};
    write_json_file(ctx, "delta_evolve.json", out);
}

struct OverlapTestParams {
    DeltaSetup setup;
};

OverlapTestParams parse_overlap_test(const Node& p, json& eff) {
    OverlapTestParams out;
    out.setup = parse_delta_setup(p, eff);
    return out;
}

void run_overlap_test(const OverlapTestParams& p, RunContext& ctx) {
    const DeltaSetup& s = p.setup;
    const GridFunction phi0 = build_delta_phi0(s);
    const PairPotential pair = build_delta_pair(s);
    ConstructionScheme scheme;
    for (const DeltaParticle& dp : s.particles) scheme.masses.push_back(dp.mass);

    Csv csv("target,n_admissible,deviation");
    json targets = json::array();
    double max_dev = 0.0;
    for (std::size_t k = 0; k < s.targets.size(); ++k) {
        const SpacetimeConfig q = target_config(s, k);
        const double dev = overlap_welldefinedness(phi0, q, pair, scheme);
        const SpacetimeConfig qs = snapped_config(s, q);
        const std::vector<Partition> adm = admissible_partitions(qs, s.delta);
        json adm_json = json::array();
        for (const Partition& part : adm) adm_json.push_back(partition_blocks_json(part));
        csv.row({std::to_string(k), std::to_string(adm.size()), fmt17(dev)});
        targets.push_back(json{{"times", s.targets[k].first},
                               {"positions", s.targets[k].second},
                               {"n_admissible", adm.size()},
                               {"admissible_partitions", std::move(adm_json)},
                               {"deviation", dev}});
        max_dev = std::max(max_dev, dev);
        if (ctx.verbose)
            std::cerr << "[" << ctx.scenario << "] target " << k << " deviation " << dev
                      << " over " << adm.size() << " partitions\n";
    }
    json out{{"targets", std::move(targets)}, {"max_deviation", max_dev}};
    write_text_file(ctx, "overlap_test.csv", csv.text);
    write_json_file(ctx, "overlap_test.json", out);
}

}  // namespace

const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{
        "consistency-check", "holonomy-scan",      "stokes",
        "potential-analyze", "gauge-decompose",    "coulomb-commutator",
        "order-gap",         "lightcone",          "delta-evolve",
        "overlap-test"};
    return names;
}

ScenarioRun run_scenario(const json& config, const std::string& output_dir, bool verbose) {
    if (!config.is_object())
        throw invalid_input_error("config root must be a JSON object");
    const Node root(config, "");
    const std::string name = root.str("scenario");
    const auto& known = scenario_names();
    if (std::find(known.begin(), known.end(), name) == known.end()) {
        std::string msg = "unknown scenario \"" + name + "\"; known scenarios: ";
        for (std::size_t i = 0; i < known.size(); ++i) {
            if (i) msg += ", ";
            msg += known[i];
        }
        throw invalid_input_error(msg);
    }
    if (output_dir.empty())
        throw invalid_input_error(
            "missing required key \"output_dir\" (set it in the config or pass --output)");
    const long seed = root.integer("seed", 1);
    if (seed < 0) root.fail("seed", "must be >= 0");

    const json empty = json::object();
    const json& pj = config.contains("parameters") ? config.at("parameters") : empty;
    if (!pj.is_object())
        throw invalid_input_error("parameter \"parameters\" must be an object");
    const Node params(pj, "parameters");

    // Parse phase: every config key is read and validated here, before any
    // directory is created or any computation starts.
    json effective = json::object();
    std::function<void(RunContext&)> task;
    try {
        if (name == "consistency-check") {
            auto p = parse_consistency(params, static_cast<unsigned>(seed), effective);
            task = [p = std::move(p)](RunContext& c) { run_consistency(p, c); };
        } else if (name == "holonomy-scan") {
            auto p = parse_holonomy_scan(params, static_cast<unsigned>(seed), effective);
            task = [p = std::move(p)](RunContext& c) { run_holonomy_scan(p, c); };
        } else if (name == "stokes") {
            auto p = parse_stokes(params, static_cast<unsigned>(seed), effective);
            task = [p = std::move(p)](RunContext& c) { run_stokes(p, c); };
        } else if (name == "potential-analyze") {
            auto p = parse_potential_analyze(params, effective);
            task = [p = std::move(p)](RunContext& c) { run_potential_analyze(p, c); };
        } else if (name == "gauge-decompose") {
            auto p = parse_gauge_decompose(params, effective);
            task = [p = std::move(p)](RunContext& c) { run_gauge_decompose(p, c); };
        } else if (name == "coulomb-commutator") {
            auto p = parse_coulomb_commutator(params, effective);
            task = [p = std::move(p)](RunContext& c) { run_coulomb_commutator(p, c); };
        } else if (name == "order-gap") {
            auto p = parse_order_gap(params, effective);
            task = [p = std::move(p)](RunContext& c) { run_order_gap(p, c); };
        } else if (name == "lightcone") {
            auto p = parse_lightcone(params, effective);
            task = [p = std::move(p)](RunContext& c) { run_lightcone(p, c); };
        } else if (name == "delta-evolve") {
            auto p = parse_delta_evolve(params, effective);
            task = [p = std::move(p)](RunContext& c) { run_delta_evolve(p, c); };
        } else {
            auto p = parse_overlap_test(params, effective);
            task = [p = std::move(p)](RunContext& c) { run_overlap_test(p, c); };
        }
    } catch (const invalid_input_error& e) {
        throw invalid_input_error(name + ": " + e.what());
    }

    std::error_code ec;
    std::filesystem::create_directories(output_dir, ec);
    if (ec)
        throw io_error("cannot create output directory '" + output_dir +
                       "': " + ec.message());

    RunContext ctx{name, output_dir, static_cast<unsigned long>(seed), verbose, {}};
    const auto t0 = std::chrono::steady_clock::now();
    task(ctx);
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();

    json manifest{{"scenario", name},
                  {"seed", seed},
                  {"parameters", effective},
                  {"output_dir", output_dir},
                  {"output_files", ctx.files},
                  {"versions", json{{"multitime", kVersion},
                                    {"manifest_format", kManifestFormat}}},
                  {"wall_time_ms", wall_ms}};
    write_raw(output_dir + "/manifest.json", manifest.dump(2) + "\n");
    if (verbose) std::cerr << "[" << name << "] wrote " << output_dir << "/manifest.json\n";

    return ScenarioRun{name, std::move(ctx.files), std::move(manifest)};
}

}  // namespace multitime
