#include "multitime/potential.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

namespace multitime {
namespace {

std::string fmt_point(const Eigen::VectorXd& p) {
    std::ostringstream out;
    out << "(";
    for (int i = 0; i < p.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6g", p(i));
        out << (i ? ", " : "") << buf;
    }
    out << ")";
    return out.str();
}

void check_config(const PotentialField& v, const Configuration& x) {
    if (x.rows() != v.n_particles() || x.cols() != 1 + v.space_dim())
        throw shape_error("potential: configuration must be n_particles x (1 + space_dim)");
}

std::vector<double> row_values(const Configuration& x, int j) {
    std::vector<double> vals(static_cast<size_t>(x.cols()));
    for (int c = 0; c < x.cols(); ++c) vals[static_cast<size_t>(c)] = x(j, c);
    return vals;
}

double pair_distance(const Configuration& x, int i, int j) {
    return (x.row(i).tail(x.cols() - 1) - x.row(j).tail(x.cols() - 1)).norm();
}

}  // namespace

PotentialField PotentialField::scalar(int n_particles, int space_dim, ScalarEval eval) {
    if (n_particles < 1) throw invalid_input_error("potential: n_particles must be >= 1");
    if (space_dim != 1 && space_dim != 3) throw invalid_input_error("potential: space_dim must be 1 or 3");
    if (!eval) throw invalid_input_error("potential: missing evaluator");
    PotentialField f;
    f.n_particles_ = n_particles;
    f.space_dim_ = space_dim;
    f.matrix_valued_ = false;
    f.spin_dims_.assign(static_cast<size_t>(n_particles), 1);
    f.scalar_eval_ = std::move(eval);
    return f;
}

PotentialField PotentialField::matrix(int n_particles, int space_dim,
                                      std::vector<int> spin_dims, MatrixEval eval) {
    if (n_particles < 1) throw invalid_input_error("potential: n_particles must be >= 1");
    if (space_dim != 1 && space_dim != 3) throw invalid_input_error("potential: space_dim must be 1 or 3");
    if (static_cast<int>(spin_dims.size()) != n_particles)
        throw shape_error("potential: spin_dims must have one entry per particle");
    for (int k : spin_dims)
        if (k < 1) throw invalid_input_error("potential: spin dims must be positive");
    if (!eval) throw invalid_input_error("potential: missing evaluator");
    PotentialField f;
    f.n_particles_ = n_particles;
    f.space_dim_ = space_dim;
    f.matrix_valued_ = true;
    f.spin_dims_ = std::move(spin_dims);
    f.matrix_eval_ = std::move(eval);
    return f;
}

double PotentialField::eval_scalar(int j, const Configuration& x) const {
    if (matrix_valued_) throw invalid_input_error("potential: scalar evaluation of a matrix field");
    if (j < 0 || j >= n_particles_) throw invalid_input_error("potential: particle index out of range");
    check_config(*this, x);
    return scalar_eval_(j, x);
}

Operator PotentialField::eval_matrix(int j, const Configuration& x) const {
    if (!matrix_valued_) throw invalid_input_error("potential: matrix evaluation of a scalar field");
    if (j < 0 || j >= n_particles_) throw invalid_input_error("potential: particle index out of range");
    check_config(*this, x);
    Operator m = matrix_eval_(j, x);
    const int k = spin_dims_[static_cast<size_t>(j)];
    if (m.rows() != k || m.cols() != k)
        throw shape_error("potential: value has wrong spin dimension for particle " + std::to_string(j));
    if (m.allFinite() && !is_hermitian(m, 1e-10))
        throw invalid_input_error("potential: value not Hermitian for particle " + std::to_string(j));
    return m;
}

PotentialField make_coulomb_split_potential(double charge, int n_particles, int space_dim) {
    if (n_particles < 2) throw invalid_input_error("coulomb-split: needs at least two particles");
    return PotentialField::scalar(n_particles, space_dim,
        [charge, n_particles](int j, const Configuration& x) {
            double sum = 0.0;
            for (int i = 0; i < n_particles; ++i)
                if (i != j) sum += 1.0 / pair_distance(x, i, j);
            return 0.5 * charge * sum;
        });
}

PotentialField make_gaussian_pair_potential(double amplitude, double width,
                                            int n_particles, int space_dim) {
    if (n_particles < 2) throw invalid_input_error("gaussian-pair: needs at least two particles");
    if (width <= 0.0) throw invalid_input_error("gaussian-pair: width must be positive");
    const double inv2w2 = 1.0 / (2.0 * width * width);
    return PotentialField::scalar(n_particles, space_dim,
        [amplitude, inv2w2, n_particles](int j, const Configuration& x) {
            double sum = 0.0;
            for (int i = 0; i < n_particles; ++i) {
                if (i == j) continue;
                const double r = pair_distance(x, i, j);
                sum += std::exp(-r * r * inv2w2);
            }
            return 0.5 * amplitude * sum;
        });
}

PotentialField make_external_potential(std::vector<Polynomial> per_particle, int space_dim) {
    const int n = static_cast<int>(per_particle.size());
    if (n < 1) throw invalid_input_error("external: needs at least one particle");
    for (const Polynomial& p : per_particle)
        if (p.n_vars() != 1 + space_dim)
            throw shape_error("external: polynomials must be in (t, x) of one particle");
    auto terms = std::make_shared<std::vector<Polynomial>>(std::move(per_particle));
    return PotentialField::scalar(n, space_dim, [terms](int j, const Configuration& x) {
        return (*terms)[static_cast<size_t>(j)].eval(row_values(x, j));
    });
}

PotentialField make_gradient_gauge_potential(const Polynomial& g,
                                             std::vector<Polynomial> externals,
                                             int space_dim) {
    const int n = static_cast<int>(externals.size());
    if (n < 1) throw invalid_input_error("gradient-gauge: needs at least one particle");
    if (g.n_vars() != n)
        throw shape_error("gradient-gauge: g must be a polynomial in the particle times");
    for (const Polynomial& p : externals)
        if (p.n_vars() != 1 + space_dim)
            throw shape_error("gradient-gauge: externals must be in (t, x) of one particle");
    auto dg = std::make_shared<std::vector<Polynomial>>();
    for (int j = 0; j < n; ++j) dg->push_back(g.derivative(j));
    auto ext = std::make_shared<std::vector<Polynomial>>(std::move(externals));
    return PotentialField::scalar(n, space_dim, [dg, ext, n](int j, const Configuration& x) {
        std::vector<double> times(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) times[static_cast<size_t>(i)] = x(i, 0);
        return (*dg)[static_cast<size_t>(j)].eval(times) +
               (*ext)[static_cast<size_t>(j)].eval(row_values(x, j));
    });
}

SampleSet make_random_configurations(int n_samples, int n_particles, int space_dim,
                                     unsigned long seed, double min_separation,
                                     double half_width) {
    if (n_samples < 0) throw invalid_input_error("sampler: n_samples must be >= 0");
    if (n_particles < 1 || (space_dim != 1 && space_dim != 3))
        throw invalid_input_error("sampler: bad particle count or space dim");
    if (min_separation < 0.0 || half_width <= 0.0)
        throw invalid_input_error("sampler: bad separation or box size");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> time_dist(-1.0, 1.0);
    std::uniform_real_distribution<double> pos_dist(-half_width, half_width);
    SampleSet out;
    const long max_attempts = 10000L * (n_samples + 1);
    long attempts = 0;
    while (static_cast<int>(out.configs.size()) < n_samples) {
        if (++attempts > max_attempts)
            throw invalid_input_error("sampler: separation constraint rejects nearly all draws");
        Configuration x(n_particles, 1 + space_dim);
        for (int j = 0; j < n_particles; ++j) {
            x(j, 0) = time_dist(rng);
            for (int a = 1; a <= space_dim; ++a) x(j, a) = pos_dist(rng);
        }
        bool ok = true;
        for (int i = 0; i < n_particles && ok; ++i)
            for (int j = i + 1; j < n_particles && ok; ++j)
                ok = pair_distance(x, i, j) >= min_separation;
        if (ok)
            out.configs.push_back(std::move(x));
        else
            ++out.n_rejected;
    }
    return out;
}

RelationReport relation_residuals(const PotentialField& v,
                                  const std::vector<Configuration>& samples,
                                  double fd_step) {
    if (v.is_matrix())
        throw invalid_input_error("relation residuals: scalar field required (see matrix_relation_residuals)");
    if (fd_step <= 0.0) throw invalid_input_error("relation residuals: fd_step must be positive");
    const int n = v.n_particles();
    const int d = v.space_dim();
    RelationReport rep;
    for (size_t s = 0; s < samples.size(); ++s) {
        const Configuration& x = samples[s];
        check_config(v, x);
        // dv(j, i, c) = dV_j / d x_{i,c} by centered differences; c = 0 is time.
        std::vector<double> dv(static_cast<size_t>(n * n * (1 + d)), 0.0);
        bool finite = true;
        for (int j = 0; j < n && finite; ++j) finite = std::isfinite(v.eval_scalar(j, x));
        for (int j = 0; j < n && finite; ++j) {
            for (int i = 0; i < n && finite; ++i) {
                if (i == j) continue;
                for (int c = 0; c <= d && finite; ++c) {
                    Configuration xp = x, xm = x;
                    xp(i, c) += fd_step;
                    xm(i, c) -= fd_step;
                    const double fp = v.eval_scalar(j, xp);
                    const double fm = v.eval_scalar(j, xm);
                    finite = std::isfinite(fp) && std::isfinite(fm);
                    dv[static_cast<size_t>((j * n + i) * (1 + d) + c)] = (fp - fm) / (2.0 * fd_step);
                }
            }
        }
        if (!finite) {
            rep.excluded.push_back(static_cast<int>(s));
            continue;
        }
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                const auto at = [&](int jj, int ii, int c) {
                    return dv[static_cast<size_t>((jj * n + ii) * (1 + d) + c)];
                };
                const double r1 = std::abs(at(j, i, 0) - at(i, j, 0));
                double r2 = 0.0;
                for (int a = 1; a <= d; ++a) r2 = std::max(r2, std::abs(at(j, i, a)));
                rep.rows.push_back({static_cast<int>(s), i, j, r1, r2});
                rep.max_r1 = std::max(rep.max_r1, r1);
                rep.max_r2 = std::max(rep.max_r2, r2);
            }
        }
    }
    return rep;
}

namespace {

double hs_dot(const Operator& a, const Operator& b) {
    return (a * b).trace().real();
}

// Least-squares coefficients of v's value at x for particle j in the given
// basis, with the Gram conditioning guard.
Eigen::VectorXd basis_coefficients(const PotentialField& v, const MatrixBasisSet& basis,
                                   int j, const Configuration& x, bool* finite) {
    const Operator m = v.eval_matrix(j, x);
    if (!m.allFinite()) {
        *finite = false;
        return Eigen::VectorXd();
    }
    const Eigen::VectorXd xj = x.row(j).transpose();
    const std::vector<Operator> bas = basis.eval(j, xj);
    const int k = v.spin_dims()[static_cast<size_t>(j)];
    if (static_cast<int>(bas.size()) != k * k)
        throw shape_error("matrix basis: expected spin_dim^2 matrices for particle " + std::to_string(j));
    for (const Operator& b : bas) {
        if (b.rows() != k || b.cols() != k)
            throw shape_error("matrix basis: wrong matrix size for particle " + std::to_string(j));
        if (!is_hermitian(b, 1e-10))
            throw invalid_input_error("matrix basis: non-Hermitian element for particle " + std::to_string(j));
    }
    const int nb = k * k;
    Eigen::MatrixXd gram(nb, nb);
    Eigen::VectorXd rhs(nb);
    for (int a = 0; a < nb; ++a) {
        for (int b = a; b < nb; ++b) {
            gram(a, b) = hs_dot(bas[static_cast<size_t>(a)], bas[static_cast<size_t>(b)]);
            gram(b, a) = gram(a, b);
        }
        rhs(a) = hs_dot(bas[static_cast<size_t>(a)], m);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const double lmax = eig.eigenvalues().maxCoeff();
    const double lmin = eig.eigenvalues().minCoeff();
    const double cond = (lmin > 0.0) ? lmax / lmin : std::numeric_limits<double>::infinity();
    if (cond > 1e8) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3g", cond);
        throw invalid_input_error("matrix basis: ill-conditioned (condition " + std::string(buf) +
                                  ") for particle " + std::to_string(j) + " at point " + fmt_point(xj));
    }
    *finite = true;
    return gram.ldlt().solve(rhs);
}

}  // namespace

MatrixBasisSet make_standard_matrix_basis(const PotentialField& v) {
    if (!v.is_matrix()) throw invalid_input_error("standard basis: matrix field required");
    const int d = v.space_dim();
    auto per_particle = std::make_shared<std::vector<std::vector<Operator>>>();
    for (int j = 0; j < v.n_particles(); ++j) {
        const int k = v.spin_dims()[static_cast<size_t>(j)];
        std::vector<Operator> list;
        list.push_back(Operator::Identity(k, k));
        if (d == 1 && k == 2) {
            list.push_back(pauli_x());
        } else if (d == 3 && k == 2) {
            list.push_back(pauli_x());
            list.push_back(pauli_y());
            list.push_back(pauli_z());
        } else if (d == 3 && k == 4) {
            for (int a = 1; a <= 3; ++a) list.push_back(dirac_alpha(a));
        } else {
            throw invalid_input_error("standard basis: unsupported spin dim " + std::to_string(k) +
                                      " for space dim " + std::to_string(d));
        }
        // Complete to a Hermitian basis by Hilbert-Schmidt orthogonalization
        // over elementary Hermitian matrices. The identity/kinetic block is
        // kept unscaled; only the completion is normalized.
        std::vector<Operator> pool;
        for (int p = 0; p < k; ++p) {
            Operator e = Operator::Zero(k, k);
            e(p, p) = 1.0;
            pool.push_back(e);
        }
        for (int p = 0; p < k; ++p) {
            for (int q = p + 1; q < k; ++q) {
                Operator es = Operator::Zero(k, k), ea = Operator::Zero(k, k);
                es(p, q) = es(q, p) = 1.0;
                ea(p, q) = Complex(0, 1);
                ea(q, p) = Complex(0, -1);
                pool.push_back(es);
                pool.push_back(ea);
            }
        }
        for (const Operator& cand : pool) {
            if (static_cast<int>(list.size()) == k * k) break;
            Operator r = cand;
            for (const Operator& a : list) r -= a * (hs_dot(a, r) / hs_dot(a, a));
            const double nrm = std::sqrt(hs_dot(r, r));
            if (nrm > 1e-6) list.push_back(r / nrm);
        }
        if (static_cast<int>(list.size()) != k * k)
            throw integrator_failure_error("standard basis: completion failed");
        per_particle->push_back(std::move(list));
    }
    MatrixBasisSet out;
    out.eval = [per_particle](int j, const Eigen::VectorXd&) {
        return (*per_particle)[static_cast<size_t>(j)];
    };
    return out;
}

MatrixRelationReport matrix_relation_residuals(const PotentialField& v,
                                               const MatrixBasisSet& basis,
                                               const std::vector<Configuration>& samples,
                                               double fd_step) {
    if (!v.is_matrix())
        throw invalid_input_error("matrix relation residuals: matrix field required");
    if (fd_step <= 0.0)
        throw invalid_input_error("matrix relation residuals: fd_step must be positive");
    if (!basis.eval) throw invalid_input_error("matrix relation residuals: missing basis");
    const int n = v.n_particles();
    const int block = 1 + v.space_dim();
    MatrixRelationReport rep;
    for (size_t s = 0; s < samples.size(); ++s) {
        const Configuration& x = samples[s];
        check_config(v, x);
        // deriv[j][i] has entry (alpha, c) = d d_{j,alpha} / d x_{i,c}.
        std::vector<std::vector<Eigen::MatrixXd>> deriv(
            static_cast<size_t>(n), std::vector<Eigen::MatrixXd>(static_cast<size_t>(n)));
        bool finite = true;
        for (int j = 0; j < n && finite; ++j)
            finite = v.eval_matrix(j, x).allFinite();
        for (int j = 0; j < n && finite; ++j) {
            const int nb = v.spin_dims()[static_cast<size_t>(j)] *
                           v.spin_dims()[static_cast<size_t>(j)];
            for (int i = 0; i < n && finite; ++i) {
                if (i == j) continue;
                Eigen::MatrixXd dd(nb, block);
                for (int c = 0; c < block && finite; ++c) {
                    Configuration xp = x, xm = x;
                    xp(i, c) += fd_step;
                    xm(i, c) -= fd_step;
                    bool okp = true, okm = true;
                    const Eigen::VectorXd cp = basis_coefficients(v, basis, j, xp, &okp);
                    const Eigen::VectorXd cm = basis_coefficients(v, basis, j, xm, &okm);
                    finite = okp && okm;
                    if (finite) dd.col(c) = (cp - cm) / (2.0 * fd_step);
                }
                deriv[static_cast<size_t>(j)][static_cast<size_t>(i)] = std::move(dd);
            }
        }
        if (!finite) {
            rep.excluded.push_back(static_cast<int>(s));
            continue;
        }
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                const Eigen::MatrixXd& dji = deriv[static_cast<size_t>(j)][static_cast<size_t>(i)];
                const Eigen::MatrixXd& dij = deriv[static_cast<size_t>(i)][static_cast<size_t>(j)];
                double cross = 0.0;
                for (int alpha = block; alpha < dji.rows(); ++alpha)
                    for (int c = 0; c < block; ++c)
                        cross = std::max(cross, std::abs(dji(alpha, c)));
                double curl = 0.0;
                for (int mu = 0; mu < block; ++mu)
                    for (int nu = 0; nu < block; ++nu)
                        curl = std::max(curl, std::abs(dji(mu, nu) - dij(nu, mu)));
                rep.rows.push_back({static_cast<int>(s), i, j, cross, curl});
                rep.max_cross = std::max(rep.max_cross, cross);
                rep.max_curl = std::max(rep.max_curl, curl);
            }
        }
    }
    return rep;
}

double staircase_integral(const std::function<double(int, const TimePoint&)>& w,
                          const std::vector<TimePoint>& vertices, int steps) {
    if (!w) throw invalid_input_error("staircase integral: missing integrand");
    if (vertices.empty()) throw invalid_input_error("staircase integral: no vertices");
    if (steps < 1) throw invalid_input_error("staircase integral: steps must be >= 1");
    const auto dim = vertices.front().size();
    double total = 0.0;
    for (size_t seg = 0; seg + 1 < vertices.size(); ++seg) {
        const TimePoint& a = vertices[seg];
        const TimePoint& b = vertices[seg + 1];
        if (a.size() != dim || b.size() != dim)
            throw shape_error("staircase integral: vertex arity mismatch");
        const TimePoint delta = b - a;
        if (delta.norm() == 0.0) continue;
        const auto integrand = [&](double sfrac) {
            const TimePoint t = a + sfrac * delta;
            double val = 0.0;
            for (int j = 0; j < dim; ++j)
                if (delta(j) != 0.0) val += delta(j) * w(j, t);
            return val;
        };
        double acc = 0.5 * (integrand(0.0) + integrand(1.0));
        for (int k = 1; k < steps; ++k) acc += integrand(static_cast<double>(k) / steps);
        total += acc / steps;
    }
    return total;
}

namespace {

// Shared state behind the callables a decomposition returns.
struct GaugeImpl {
    PotentialField v;
    std::vector<Configuration> probes;  // spatial probe configurations, times zeroed
    int n = 0;
    int steps = 0;

    explicit GaugeImpl(PotentialField field) : v(std::move(field)) {}

    // W_j(t) averaged over the probes, with the observed spatial spread.
    std::pair<double, double> w_eval(int j, const TimePoint& t) const {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
        for (const Configuration& probe : probes) {
            Configuration full = probe, ref = probe;
            for (int i = 0; i < n; ++i) full(i, 0) = t(i);
            ref(j, 0) = t(j);
            const double val = v.eval_scalar(j, full) - v.eval_scalar(j, ref);
            lo = std::min(lo, val);
            hi = std::max(hi, val);
            sum += val;
        }
        return {sum / static_cast<double>(probes.size()), hi - lo};
    }

    std::vector<TimePoint> axis_staircase(const TimePoint& from, const TimePoint& to) const {
        std::vector<TimePoint> verts;
        verts.push_back(from);
        TimePoint cur = from;
        for (int j = 0; j < n; ++j) {
            cur(j) = to(j);
            verts.push_back(cur);
        }
        return verts;
    }
};

}  // namespace

GaugeDecomposition gauge_decompose(const PotentialField& v, const TimeBox& box,
                                   int grid_n, double tol, int spatial_samples,
                                   unsigned long seed) {
    if (v.is_matrix()) throw invalid_input_error("gauge split: scalar field required");
    const int n = v.n_particles();
    if (box.lo.size() != n || box.hi.size() != n)
        throw shape_error("gauge split: box arity must match particle count");
    for (int j = 0; j < n; ++j)
        if (!(box.hi(j) > box.lo(j)))
            throw invalid_input_error("gauge split: box must have positive extent");
    if (grid_n < 4) throw invalid_input_error("gauge split: grid must have at least 4 points per axis");
    if (tol <= 0.0) throw invalid_input_error("gauge split: tol must be positive");
    if (spatial_samples < 2) throw invalid_input_error("gauge split: need at least 2 spatial probes");

    auto impl = std::make_shared<GaugeImpl>(v);
    impl->n = n;
    impl->steps = grid_n;
    {
        SampleSet set = make_random_configurations(spatial_samples, n, v.space_dim(),
                                                   seed, 5e-2, 1.5);
        for (Configuration& c : set.configs) c.col(0).setZero();
        impl->probes = std::move(set.configs);
    }

    GaugeDecomposition out;

    // The per-particle term must not see other particles' positions.
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < 5; ++k) {
            TimePoint t = TimePoint::Zero(n);
            t(j) = box.lo(j) + (box.hi(j) - box.lo(j)) * k / 4.0;
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (const Configuration& probe : impl->probes) {
                Configuration ref = probe;
                ref.row(j).tail(v.space_dim()) = impl->probes.front().row(j).tail(v.space_dim());
                ref(j, 0) = t(j);
                const double val = v.eval_scalar(j, ref);
                if (!std::isfinite(val))
                    throw invalid_input_error("gauge split: non-finite potential at probe point");
                lo = std::min(lo, val);
                hi = std::max(hi, val);
            }
            out.vtilde_x_spread = std::max(out.vtilde_x_spread, hi - lo);
            if (hi - lo > 10.0 * tol)
                throw inconsistent_input_error(
                    "gauge split: per-particle term for particle " + std::to_string(j) +
                    " varies with other particles' positions (spread " + std::to_string(hi - lo) + ")");
        }
    }

    // Tabulate W on the time grid and check it carries no position dependence.
    const int npts = grid_n;
    long total = 1;
    for (int j = 0; j < n; ++j) total *= npts;
    std::vector<std::vector<double>> w_tab(static_cast<size_t>(n),
                                           std::vector<double>(static_cast<size_t>(total)));
    std::vector<double> h(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j)
        h[static_cast<size_t>(j)] = (box.hi(j) - box.lo(j)) / (npts - 1);
    const auto grid_point = [&](long idx) {
        TimePoint t(n);
        long rem = idx;
        for (int j = n - 1; j >= 0; --j) {
            t(j) = box.lo(j) + h[static_cast<size_t>(j)] * (rem % npts);
            rem /= npts;
        }
        return t;
    };
    for (long idx = 0; idx < total; ++idx) {
        const TimePoint t = grid_point(idx);
        for (int j = 0; j < n; ++j) {
            const auto [mean, spread] = impl->w_eval(j, t);
            if (!std::isfinite(mean))
                throw invalid_input_error("gauge split: non-finite potential at grid point");
            out.w_x_spread = std::max(out.w_x_spread, spread);
            if (spread > 10.0 * tol)
                throw inconsistent_input_error(
                    "gauge split: interaction remainder for particle " + std::to_string(j) +
                    " varies with positions (spread " + std::to_string(spread) +
                    ") at t = " + fmt_point(t));
            w_tab[static_cast<size_t>(j)][static_cast<size_t>(idx)] = mean;
        }
    }

    // theta on the grid: axis-ordered trapezoid staircase from the origin.
    const auto w_mean = [impl](int j, const TimePoint& t) { return impl->w_eval(j, t).first; };
    const double base =
        staircase_integral(w_mean, impl->axis_staircase(TimePoint::Zero(n), box.lo), grid_n);
    std::vector<double> theta_tab(static_cast<size_t>(total));
    std::vector<long> stride(static_cast<size_t>(n));
    stride[static_cast<size_t>(n - 1)] = 1;
    for (int j = n - 2; j >= 0; --j)
        stride[static_cast<size_t>(j)] = stride[static_cast<size_t>(j + 1)] * npts;
    for (long idx = 0; idx < total; ++idx) {
        // Last axis with a nonzero index gives the incoming staircase leg.
        int axis = -1;
        for (int j = n - 1; j >= 0; --j) {
            if ((idx / stride[static_cast<size_t>(j)]) % npts > 0) {
                axis = j;
                break;
            }
        }
        if (axis < 0) {
            theta_tab[static_cast<size_t>(idx)] = base;
            continue;
        }
        const long prev = idx - stride[static_cast<size_t>(axis)];
        theta_tab[static_cast<size_t>(idx)] =
            theta_tab[static_cast<size_t>(prev)] +
            0.5 * h[static_cast<size_t>(axis)] *
                (w_tab[static_cast<size_t>(axis)][static_cast<size_t>(prev)] +
                 w_tab[static_cast<size_t>(axis)][static_cast<size_t>(idx)]);
    }

    // Verification: centered d theta / d t_j against W_j at interior points.
    for (long idx = 0; idx < total; ++idx) {
        for (int j = 0; j < n; ++j) {
            const long kj = (idx / stride[static_cast<size_t>(j)]) % npts;
            if (kj == 0 || kj == npts - 1) continue;
            const double dtheta = (theta_tab[static_cast<size_t>(idx + stride[static_cast<size_t>(j)])] -
                                   theta_tab[static_cast<size_t>(idx - stride[static_cast<size_t>(j)])]) /
                                  (2.0 * h[static_cast<size_t>(j)]);
            out.residual = std::max(out.residual,
                                    std::abs(dtheta - w_tab[static_cast<size_t>(j)][static_cast<size_t>(idx)]));
        }
    }

    const int theta_steps = grid_n;
    out.theta = [impl, theta_steps](const TimePoint& t) {
        if (t.size() != impl->n) throw shape_error("theta: time tuple arity");
        const auto wm = [&impl](int j, const TimePoint& s) { return impl->w_eval(j, s).first; };
        return staircase_integral(wm, impl->axis_staircase(TimePoint::Zero(impl->n), t),
                                  theta_steps);
    };
    out.v_tilde = [impl](int j, const Eigen::VectorXd& xj) {
        if (j < 0 || j >= impl->n) throw invalid_input_error("v_tilde: particle index out of range");
        if (xj.size() != 1 + impl->v.space_dim()) throw shape_error("v_tilde: point arity");
        Configuration ref = impl->probes.front();
        ref.row(j) = xj.transpose();
        return impl->v.eval_scalar(j, ref);
    };
    out.w = [impl](int j, const TimePoint& t) {
        if (j < 0 || j >= impl->n) throw invalid_input_error("w: particle index out of range");
        if (t.size() != impl->n) throw shape_error("w: time tuple arity");
        return impl->w_eval(j, t).first;
    };
    return out;
}

}  // namespace multitime
