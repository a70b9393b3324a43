#include "multitime/holonomy.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

namespace multitime {

// ---------------------------------------------------------------- field

HamiltonianField::HamiltonianField(int n_times, int dim,
                                   std::function<Operator(int, const TimePoint&)> eval,
                                   bool expect_hermitian)
    : n_times_(n_times), dim_(dim), expect_hermitian_(expect_hermitian), eval_(std::move(eval)) {
    if (n_times_ < 1) throw invalid_input_error("field: n_times must be >= 1");
    if (dim_ < 1) throw invalid_input_error("field: dim must be >= 1");
    if (!eval_) throw invalid_input_error("field: missing evaluator");
}

Operator HamiltonianField::eval(int j, const TimePoint& t) const {
    if (j < 0 || j >= n_times_) throw invalid_input_error("field eval: generator index out of range");
    if (t.size() != n_times_) throw shape_error("field eval: time tuple arity mismatch");
    Operator h = eval_(j, t);
    if (h.rows() != dim_ || h.cols() != dim_) throw shape_error("field eval: generator has wrong shape");
    return h;
}

void HamiltonianField::validate_hermitian(const std::vector<TimePoint>& points, double tol) const {
    for (const auto& t : points)
        for (int j = 0; j < n_times_; ++j) {
            const Operator h = eval(j, t);
            if (operator_norm(h - h.adjoint()) > tol)
                throw invalid_input_error("field: generator deviates from Hermitian beyond tolerance");
        }
}

HamiltonianField make_commuting_diagonal_field(int n_times, int dim, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Operator> diag(static_cast<std::size_t>(n_times));
    for (auto& d : diag) {
        d = Operator::Zero(dim, dim);
        for (int i = 0; i < dim; ++i) d(i, i) = u(gen);
    }
    return HamiltonianField(n_times, dim,
                            [diag](int j, const TimePoint&) { return diag[static_cast<std::size_t>(j)]; });
}

HamiltonianField make_pauli_pair_field() {
    const Operator sx = pauli_x(), sz = pauli_z();
    return HamiltonianField(2, 2, [sx, sz](int j, const TimePoint&) { return j == 0 ? sx : sz; });
}

HamiltonianField make_gradient_scalar_field(const Polynomial& g, const Operator& a) {
    const int n = static_cast<int>(g.n_vars());
    if (a.rows() != a.cols()) throw shape_error("gradient field: matrix must be square");
    std::vector<Polynomial> grads;
    for (int j = 0; j < n; ++j) grads.push_back(g.derivative(static_cast<std::size_t>(j)));
    return HamiltonianField(n, static_cast<int>(a.rows()), [grads, a](int j, const TimePoint& t) {
        std::vector<double> x(t.data(), t.data() + t.size());
        return Operator(grads[static_cast<std::size_t>(j)].eval(x) * a);
    });
}

HamiltonianField make_tabulated_field(TabulatedField data) {
    const int n = data.n_times;
    if (n < 1) throw invalid_input_error("tabulated field: n_times must be >= 1");
    if (data.lo.size() != n || data.hi.size() != n || static_cast<int>(data.shape.size()) != n)
        throw shape_error("tabulated field: box/shape arity mismatch");
    std::size_t nodes = 1;
    for (int ax = 0; ax < n; ++ax) {
        if (data.shape[static_cast<std::size_t>(ax)] < 2)
            throw invalid_input_error("tabulated field: need >= 2 nodes per axis");
        if (!(data.hi(ax) > data.lo(ax)))
            throw invalid_input_error("tabulated field: box must have positive extent");
        nodes *= static_cast<std::size_t>(data.shape[static_cast<std::size_t>(ax)]);
    }
    if (static_cast<int>(data.values.size()) != n)
        throw shape_error("tabulated field: one node array per generator required");
    for (const auto& arr : data.values) {
        if (arr.size() != nodes) throw shape_error("tabulated field: node count mismatch");
        for (const auto& m : arr)
            if (m.rows() != data.dim || m.cols() != data.dim)
                throw shape_error("tabulated field: node matrix shape mismatch");
    }

    auto shared = std::make_shared<TabulatedField>(std::move(data));
    return HamiltonianField(n, shared->dim, [shared](int j, const TimePoint& t) {
        const int n = shared->n_times;
        // locate the cell and barycentric weights per axis
        std::vector<int> base(static_cast<std::size_t>(n));
        std::vector<double> w(static_cast<std::size_t>(n));
        for (int ax = 0; ax < n; ++ax) {
            const int nodes = shared->shape[static_cast<std::size_t>(ax)];
            const double span = shared->hi(ax) - shared->lo(ax);
            const double u = (t(ax) - shared->lo(ax)) / span * (nodes - 1);
            if (u < -1e-9 || u > nodes - 1 + 1e-9)
                throw invalid_input_error("tabulated field: evaluation outside the sampled box");
            const double uc = std::clamp(u, 0.0, static_cast<double>(nodes - 1));
            int b = static_cast<int>(std::floor(uc));
            if (b >= nodes - 1) b = nodes - 2;
            base[static_cast<std::size_t>(ax)] = b;
            w[static_cast<std::size_t>(ax)] = uc - b;
        }
        Operator acc = Operator::Zero(shared->dim, shared->dim);
        const auto& arr = shared->values[static_cast<std::size_t>(j)];
        for (int corner = 0; corner < (1 << n); ++corner) {
            double weight = 1.0;
            std::size_t flat = 0;
            for (int ax = 0; ax < n; ++ax) {
                const int bit = (corner >> ax) & 1;
                weight *= bit ? w[static_cast<std::size_t>(ax)] : 1.0 - w[static_cast<std::size_t>(ax)];
                flat = flat * static_cast<std::size_t>(shared->shape[static_cast<std::size_t>(ax)]) +
                       static_cast<std::size_t>(base[static_cast<std::size_t>(ax)] + bit);
            }
            if (weight != 0.0) acc += weight * arr[flat];
        }
        return acc;
    });
}

TabulatedField tabulate_field(const HamiltonianField& field, const Eigen::VectorXd& lo,
                              const Eigen::VectorXd& hi, const std::vector<int>& shape) {
    const int n = field.n_times();
    TabulatedField out;
    out.n_times = n;
    out.dim = field.dim();
    out.lo = lo;
    out.hi = hi;
    out.shape = shape;
    std::size_t nodes = 1;
    for (int s : shape) nodes *= static_cast<std::size_t>(s);
    out.values.assign(static_cast<std::size_t>(n), {});
    for (int j = 0; j < n; ++j) {
        out.values[static_cast<std::size_t>(j)].reserve(nodes);
        for (std::size_t flat = 0; flat < nodes; ++flat) {
            std::size_t rem = flat;
            TimePoint t(n);
            for (int ax = n - 1; ax >= 0; --ax) {
                const std::size_t s = static_cast<std::size_t>(shape[static_cast<std::size_t>(ax)]);
                const std::size_t idx = rem % s;
                rem /= s;
                t(ax) = lo(ax) + (hi(ax) - lo(ax)) * static_cast<double>(idx) / static_cast<double>(s - 1);
            }
            out.values[static_cast<std::size_t>(j)].push_back(field.eval(j, t));
        }
    }
    return out;
}

// ----------------------------------------------------------------- path

void TimePath::validate(int n_times) const {
    if (vertices.size() < 1) throw invalid_input_error("path: needs at least one vertex");
    if (steps.size() != vertices.size() - 1)
        throw shape_error("path: need one step count per segment");
    for (const auto& v : vertices)
        if (v.size() != n_times) throw shape_error("path: vertex arity mismatch");
    for (int s : steps)
        if (s < 1) throw invalid_input_error("path: step counts must be >= 1");
}

bool TimePath::is_closed(double tol) const {
    if (vertices.empty()) return false;
    return (vertices.front() - vertices.back()).norm() <= tol;
}

bool TimePath::is_axiparallel(double tol) const {
    for (std::size_t i = 0; i + 1 < vertices.size(); ++i) {
        const Eigen::VectorXd d = vertices[i + 1] - vertices[i];
        int moving = 0;
        for (Eigen::Index ax = 0; ax < d.size(); ++ax)
            if (std::abs(d(ax)) > tol) ++moving;
        if (moving > 1) return false;
    }
    return true;
}

TimePath make_staircase(const TimePoint& start, const TimePoint& end, int axis_first,
                        int steps_per_segment) {
    TimePoint mid = start;
    mid(axis_first) = end(axis_first);
    TimePath p;
    p.vertices = {start, mid, end};
    p.steps = {steps_per_segment, steps_per_segment};
    return p;
}

TimePath make_random_staircase(const TimePoint& start, const TimePoint& end, int n_corners,
                               int steps_per_segment, unsigned seed) {
    const Eigen::Index n = start.size();
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // Random interleaving: split each axis travel into random chunks and
    // shuffle the chunk order. Movement stays monotone per axis.
    struct Chunk {
        Eigen::Index axis;
        double frac;
    };
    std::vector<Chunk> chunks;
    const int per_axis = std::max(1, n_corners / std::max<int>(1, static_cast<int>(n)));
    for (Eigen::Index ax = 0; ax < n; ++ax) {
        std::vector<double> cuts{0.0, 1.0};
        for (int c = 0; c < per_axis; ++c) cuts.push_back(u(gen));
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
            if (cuts[i + 1] > cuts[i]) chunks.push_back({ax, cuts[i + 1] - cuts[i]});
    }
    std::shuffle(chunks.begin(), chunks.end(), gen);

    TimePath p;
    p.vertices.push_back(start);
    TimePoint cur = start;
    for (const auto& ch : chunks) {
        cur(ch.axis) += ch.frac * (end(ch.axis) - start(ch.axis));
        p.vertices.push_back(cur);
        p.steps.push_back(steps_per_segment);
    }
    p.vertices.back() = end;  // guard against rounding drift on the last vertex
    return p;
}

SurfacePatch make_affine_patch(const TimePoint& origin, const TimePoint& edge_s,
                               const TimePoint& edge_t) {
    if (origin.size() != edge_s.size() || origin.size() != edge_t.size())
        throw shape_error("affine patch: arity mismatch");
    SurfacePatch patch;
    patch.n_times = static_cast<int>(origin.size());
    patch.f = [origin, edge_s, edge_t](double s, double t) {
        return TimePoint(origin + s * edge_s + t * edge_t);
    };
    patch.jacobian = [edge_s, edge_t](double, double, TimePoint& ds, TimePoint& dt) {
        ds = edge_s;
        dt = edge_t;
    };
    return patch;
}

// ------------------------------------------------------------ transport

namespace {

// One midpoint step: exp(-i sum_j H_j(mid) * delta_j).
Operator step_exp(const HamiltonianField& field, const TimePoint& mid, const TimePoint& delta) {
    Operator gen = Operator::Zero(field.dim(), field.dim());
    for (int j = 0; j < field.n_times(); ++j) {
        const double dj = delta(j);
        if (dj != 0.0) gen += dj * field.eval(j, mid);
    }
    return matrix_exp(gen, Complex(0, -1));
}

void patch_jacobian(const SurfacePatch& patch, double s, double t, TimePoint& ds, TimePoint& dt) {
    if (patch.jacobian) {
        patch.jacobian(s, t, ds, dt);
        return;
    }
    const double h = patch.fd_step;
    ds = (patch.f(s + h, t) - patch.f(s - h, t)) / (2 * h);
    dt = (patch.f(s, t + h) - patch.f(s, t - h)) / (2 * h);
}

}  // namespace

Operator path_ordered_exp(const HamiltonianField& field, const TimePath& path) {
    path.validate(field.n_times());
    Operator u = Operator::Identity(field.dim(), field.dim());
    for (std::size_t seg = 0; seg + 1 < path.vertices.size(); ++seg) {
        const TimePoint& a = path.vertices[seg];
        const TimePoint& b = path.vertices[seg + 1];
        const int n = path.steps[seg];
        const TimePoint delta = (b - a) / n;
        if (delta.norm() == 0.0) continue;
        for (int i = 0; i < n; ++i) {
            const TimePoint mid = a + (i + 0.5) * delta;
            u = step_exp(field, mid, delta) * u;
        }
    }
    return u;
}

Operator dyson_third_order(const HamiltonianField& field, const TimePath& path) {
    path.validate(field.n_times());
    const int d = field.dim();
    const Operator id = Operator::Identity(d, d);
    // Ordered sums of one, two and three step generators; same-step
    // powers carry the exponential series weights.
    Operator s1 = Operator::Zero(d, d), s2 = s1, s3 = s1;
    for (std::size_t seg = 0; seg + 1 < path.vertices.size(); ++seg) {
        const TimePoint& a = path.vertices[seg];
        const TimePoint& b = path.vertices[seg + 1];
        const int n = path.steps[seg];
        const TimePoint delta = (b - a) / n;
        if (delta.norm() == 0.0) continue;
        for (int i = 0; i < n; ++i) {
            const TimePoint mid = a + (i + 0.5) * delta;
            Operator g = Operator::Zero(d, d);
            for (int j = 0; j < field.n_times(); ++j) {
                const double dj = delta(j);
                if (dj != 0.0) g += dj * field.eval(j, mid);
            }
            g *= Complex(0, -1);
            s3 += g * s2 + 0.5 * g * g * s1 + (1.0 / 6.0) * g * g * g;
            s2 += g * s1 + 0.5 * g * g;
            s1 += g;
        }
    }
    return id + s1 + s2 + s3;
}

CurvatureReport consistency_residual(const HamiltonianField& field, const TimePoint& t,
                                     double fd_step) {
    if (fd_step <= 0.0) throw invalid_input_error("consistency_residual: fd_step must be positive");
    if (t.size() != field.n_times()) throw shape_error("consistency_residual: time tuple arity");
    const int n = field.n_times();
    const int d = field.dim();
    const Complex I(0, 1);

    // dH[j][k] = dH_k / dt_j, centered.
    std::vector<std::vector<Operator>> dH(static_cast<std::size_t>(n),
                                          std::vector<Operator>(static_cast<std::size_t>(n)));
    for (int j = 0; j < n; ++j) {
        TimePoint tp = t, tm = t;
        tp(j) += fd_step;
        tm(j) -= fd_step;
        for (int k = 0; k < n; ++k)
            dH[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] =
                (field.eval(k, tp) - field.eval(k, tm)) / (2 * fd_step);
    }
    std::vector<Operator> H(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) H[static_cast<std::size_t>(j)] = field.eval(j, t);

    CurvatureReport rep;
    rep.n_times = n;
    rep.R.assign(static_cast<std::size_t>(n) * n, Operator::Zero(d, d));
    rep.F.assign(static_cast<std::size_t>(n) * n, Operator::Zero(d, d));
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
            if (j == k) continue;
            const Operator comm = commutator(H[static_cast<std::size_t>(j)], H[static_cast<std::size_t>(k)]);
            const Operator& dHk_dj = dH[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
            const Operator& dHj_dk = dH[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
            Operator r = comm - I * dHk_dj + I * dHj_dk;
            Operator f = -dHk_dj + dHj_dk - I * comm;
            const double nrm = operator_norm(r);
            if (nrm > rep.max_R_norm) {
                rep.max_R_norm = nrm;
                rep.worst_j = j;
                rep.worst_k = k;
            }
            rep.R[static_cast<std::size_t>(j) * n + k] = std::move(r);
            rep.F[static_cast<std::size_t>(j) * n + k] = std::move(f);
        }
    }
    return rep;
}

RectangleHolonomy rectangle_holonomy(const HamiltonianField& field, const TimePoint& corner,
                                     int axis_j, int axis_k, double dt, int steps_per_edge) {
    if (axis_j == axis_k) throw invalid_input_error("rectangle_holonomy: need two distinct axes");
    if (axis_j < 0 || axis_j >= field.n_times() || axis_k < 0 || axis_k >= field.n_times())
        throw invalid_input_error("rectangle_holonomy: axis out of range");
    const int d = field.dim();
    RectangleHolonomy out;
    if (dt == 0.0) {
        out.u_westnorth = Operator::Identity(d, d);
        out.u_southeast = Operator::Identity(d, d);
        out.difference = Operator::Zero(d, d);
        out.loop_minus_identity = Operator::Zero(d, d);
        return out;
    }
    TimePoint north = corner, east = corner, opposite = corner;
    north(axis_k) += dt;
    east(axis_j) += dt;
    opposite(axis_j) += dt;
    opposite(axis_k) += dt;

    TimePath wn, se;
    wn.vertices = {corner, north, opposite};
    wn.steps = {steps_per_edge, steps_per_edge};
    se.vertices = {corner, east, opposite};
    se.steps = {steps_per_edge, steps_per_edge};

    out.u_westnorth = path_ordered_exp(field, wn);
    out.u_southeast = path_ordered_exp(field, se);
    out.difference = out.u_westnorth - out.u_southeast;
    out.loop_minus_identity =
        out.u_westnorth.inverse() * out.u_southeast - Operator::Identity(d, d);
    return out;
}

double path_independence_gap(const HamiltonianField& field, const TimePath& a, const TimePath& b) {
    a.validate(field.n_times());
    b.validate(field.n_times());
    if ((a.vertices.front() - b.vertices.front()).norm() != 0.0 ||
        (a.vertices.back() - b.vertices.back()).norm() != 0.0)
        throw invalid_input_error("path_independence_gap: paths must share both endpoints");
    return operator_norm(path_ordered_exp(field, a) - path_ordered_exp(field, b));
}

Operator patch_boundary_transport(const HamiltonianField& field, const SurfacePatch& patch,
                                  int mesh) {
    if (mesh < 1) throw invalid_input_error("boundary transport: mesh must be >= 1");
    TimePath p;
    auto push_edge = [&](auto point_at) {
        for (int i = 0; i < mesh; ++i) {
            if (p.vertices.empty()) p.vertices.push_back(point_at(0.0));
            p.vertices.push_back(point_at(static_cast<double>(i + 1) / mesh));
            p.steps.push_back(1);
        }
    };
    push_edge([&](double u) { return patch.f(u, 0.0); });
    push_edge([&](double u) { return patch.f(1.0, u); });
    push_edge([&](double u) { return patch.f(1.0 - u, 1.0); });
    push_edge([&](double u) { return patch.f(0.0, 1.0 - u); });
    return path_ordered_exp(field, p);
}

Operator surface_ordered_exp(const HamiltonianField& field, const SurfacePatch& patch, int mesh,
                             double fd_step) {
    if (mesh < 1) throw invalid_input_error("surface_ordered_exp: mesh must be >= 1");
    if (patch.n_times != field.n_times())
        throw shape_error("surface_ordered_exp: patch arity mismatch");
    const int d = field.dim();
    const double h = 1.0 / mesh;
    const Complex I(0, 1);

    // Generator of transport in the s direction at t=0, and in the t
    // direction at fixed s: sum_j H_j(f) * (tangent)_j.
    auto tangent_gen = [&](double s, double t, bool along_t) {
        TimePoint ds(patch.n_times), dtv(patch.n_times);
        patch_jacobian(patch, s, t, ds, dtv);
        const TimePoint& tan = along_t ? dtv : ds;
        const TimePoint pos = patch.f(s, t);
        Operator g = Operator::Zero(d, d);
        for (int j = 0; j < field.n_times(); ++j)
            if (tan(j) != 0.0) g += tan(j) * field.eval(j, pos);
        return g;
    };

    Operator acc = Operator::Identity(d, d);
    Operator h_transport = Operator::Identity(d, d);  // (0,0) -> (s,0) along the bottom edge
    for (int is = 0; is < mesh; ++is) {
        const double s_c = (is + 0.5) * h;
        // advance bottom-edge transport to s_c (half step into the cell column)
        h_transport = matrix_exp(tangent_gen(is * h + 0.25 * h, 0.0, false) * (0.5 * h),
                                 Complex(0, -1)) *
                      h_transport;
        Operator g_transport = Operator::Identity(d, d);  // (s_c,0) -> (s_c,t)
        Operator col = Operator::Identity(d, d);
        for (int it = 0; it < mesh; ++it) {
            const double t_c = (it + 0.5) * h;
            g_transport = matrix_exp(tangent_gen(s_c, it * h + 0.25 * h, true) * (0.5 * h),
                                     Complex(0, -1)) *
                          g_transport;

            // curvature two-form contracted with the cell's tangent plane
            const TimePoint pos = patch.f(s_c, t_c);
            const CurvatureReport rep = consistency_residual(field, pos, fd_step);
            TimePoint dfs(patch.n_times), dft(patch.n_times);
            patch_jacobian(patch, s_c, t_c, dfs, dft);
            Operator fcontr = Operator::Zero(d, d);
            for (int i = 0; i < field.n_times(); ++i)
                for (int j = 0; j < field.n_times(); ++j)
                    if (i != j && dfs(i) != 0.0 && dft(j) != 0.0)
                        fcontr += dfs(i) * dft(j) * rep.f(i, j);

            const Operator transport = g_transport * h_transport;
            const Operator fhat = transport.inverse() * fcontr * transport;
            col = col * matrix_exp(fhat * (h * h), I);  // larger t further right within the column
            g_transport = matrix_exp(tangent_gen(s_c, it * h + 0.75 * h, true) * (0.5 * h),
                                     Complex(0, -1)) *
                          g_transport;
        }
        acc = acc * col;  // larger s further right
        h_transport = matrix_exp(tangent_gen(is * h + 0.75 * h, 0.0, false) * (0.5 * h),
                                 Complex(0, -1)) *
                      h_transport;
    }
    return acc;
}

StokesReport stokes_compare(const HamiltonianField& field, const SurfacePatch& patch, int mesh,
                            double fd_step) {
    StokesReport rep;
    rep.boundary = patch_boundary_transport(field, patch, mesh);
    rep.surface = surface_ordered_exp(field, patch, mesh, fd_step);
    rep.gap = operator_norm(rep.boundary - rep.surface);
    return rep;
}

Vector multitime_solve(const HamiltonianField& field, const TimePath& path, const Vector& phi0) {
    if (phi0.size() != field.dim()) throw shape_error("multitime_solve: state dimension mismatch");
    return path_ordered_exp(field, path) * phi0;
}

FrobeniusReport frobenius_residual(const std::vector<StateFlow>& flows, const TimePoint& t,
                                   const Vector& phi, double fd_step, double dir_step) {
    if (fd_step <= 0.0 || dir_step <= 0.0)
        throw invalid_input_error("frobenius_residual: steps must be positive");
    const int n = static_cast<int>(flows.size());
    if (n < 2) throw invalid_input_error("frobenius_residual: need at least two flows");
    if (t.size() != n) throw shape_error("frobenius_residual: time arity must match flow count");

    auto time_deriv = [&](int j, int k) {
        // d f_j / d t_k, centered
        TimePoint tp = t, tm = t;
        tp(k) += fd_step;
        tm(k) -= fd_step;
        return Vector((flows[static_cast<std::size_t>(j)](tp, phi) -
                       flows[static_cast<std::size_t>(j)](tm, phi)) /
                      (2 * fd_step));
    };
    auto dir_deriv = [&](int j, const Vector& dir) {
        // (D_phi f_j)[dir], centered along dir
        const double scale = dir.norm();
        if (scale == 0.0) return Vector(Vector::Zero(phi.size()));
        const double eps = dir_step * (1.0 + phi.norm()) / scale;
        return Vector((flows[static_cast<std::size_t>(j)](t, phi + eps * dir) -
                       flows[static_cast<std::size_t>(j)](t, phi - eps * dir)) /
                      (2 * eps));
    };

    FrobeniusReport rep;
    for (int j = 0; j < n; ++j) {
        const Vector fj = flows[static_cast<std::size_t>(j)](t, phi);
        for (int k = j + 1; k < n; ++k) {
            const Vector fk = flows[static_cast<std::size_t>(k)](t, phi);
            const Vector lhs = time_deriv(j, k) + dir_deriv(j, fk);
            const Vector rhs = time_deriv(k, j) + dir_deriv(k, fj);
            const double nrm = (lhs - rhs).norm();
            rep.pair_norms.push_back(nrm);
            rep.max_norm = std::max(rep.max_norm, nrm);
            ++rep.n_pairs;
        }
    }
    return rep;
}

}  // namespace multitime
