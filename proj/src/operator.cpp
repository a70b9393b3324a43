#include "multitime/operator.hpp"

#include <unsupported/Eigen/MatrixFunctions>
#include <cmath>

#include "multitime/serialize.hpp"

namespace multitime {

namespace {

void require_square(const Operator& a, const char* who) {
    if (a.rows() != a.cols() || a.rows() == 0)
        throw shape_error(std::string(who) + ": operator must be square and non-empty");
}

void require_finite(const Operator& a, const char* who) {
    if (!a.allFinite())
        throw invalid_input_error(std::string(who) + ": non-finite entries");
}

}  // namespace

double operator_norm(const Operator& a) {
    require_square(a, "operator_norm");
    require_finite(a, "operator_norm");
    const double fro = a.norm();
    if (fro == 0.0) return 0.0;

    // Power iteration on A†A; eigenvalue estimate converges to the
    // squared largest singular value. Deterministic start vector with
    // all modes populated.
    const Eigen::Index n = a.rows();
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = Complex(1.0, 0.3 + static_cast<double>(i) / static_cast<double>(n));
    v.normalize();

    double lambda = 0.0;
    for (int it = 0; it < 10000; ++it) {
        Vector w = a.adjoint() * (a * v);
        const double wn = w.norm();
        if (wn == 0.0) return 0.0;  // v landed in the kernel: norm-dominant part already seen
        const double next = v.dot(w).real();
        w /= wn;
        v = w;
        if (it > 0 && std::abs(next - lambda) <= 1e-10 * std::abs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

double frobenius_norm(const Operator& a) {
    require_finite(a, "frobenius_norm");
    return a.norm();
}

bool is_hermitian(const Operator& a, double tol) {
    require_square(a, "is_hermitian");
    require_finite(a, "is_hermitian");
    return operator_norm(a - a.adjoint()) <= tol;
}

Operator commutator(const Operator& a, const Operator& b) {
    require_square(a, "commutator");
    require_square(b, "commutator");
    if (a.rows() != b.rows()) throw shape_error("commutator: dimension mismatch");
    return a * b - b * a;
}

Operator matrix_exp(const Operator& a, Complex scale) {
    require_square(a, "matrix_exp");
    require_finite(a, "matrix_exp");
    if (!std::isfinite(scale.real()) || !std::isfinite(scale.imag()))
        throw invalid_input_error("matrix_exp: non-finite scale");
    Operator b = scale * a;
    return b.exp();
}

Spectrum spectral_decompose(const Operator& a, double cluster_tol) {
    require_square(a, "spectral_decompose");
    require_finite(a, "spectral_decompose");
    if (!is_hermitian(a, 1e-10))
        throw invalid_input_error("spectral_decompose: operator is not Hermitian");
    if (cluster_tol < 0.0) cluster_tol = 1e-8 * operator_norm(a);

    Eigen::SelfAdjointEigenSolver<Operator> es(a);
    if (es.info() != Eigen::Success)
        throw invalid_input_error("spectral_decompose: eigensolver failed");
    const auto& evals = es.eigenvalues();   // ascending
    const auto& evecs = es.eigenvectors();

    Spectrum s;
    const Eigen::Index n = a.rows();
    Eigen::Index lo = 0;
    while (lo < n) {
        Eigen::Index hi = lo + 1;
        while (hi < n && evals(hi) - evals(hi - 1) <= cluster_tol) ++hi;
        const Eigen::Index k = hi - lo;
        Operator block = evecs.middleCols(lo, k);
        s.projectors.push_back(block * block.adjoint());
        s.values.push_back(evals.segment(lo, k).mean());
        s.multiplicities.push_back(static_cast<int>(k));
        lo = hi;
    }
    return s;
}

SpectralCommuteReport spectral_commute(const Operator& a, const Operator& b, double tol) {
    require_square(a, "spectral_commute");
    require_square(b, "spectral_commute");
    if (a.rows() != b.rows()) throw shape_error("spectral_commute: dimension mismatch");
    if (!is_hermitian(a, 1e-10) || !is_hermitian(b, 1e-10))
        throw invalid_input_error("spectral_commute: operators must be Hermitian");

    const Spectrum sa = spectral_decompose(a);
    const Spectrum sb = spectral_decompose(b);

    SpectralCommuteReport rep;
    for (std::size_t i = 0; i < sa.projectors.size(); ++i) {
        for (std::size_t j = 0; j < sb.projectors.size(); ++j) {
            const double nrm = operator_norm(commutator(sa.projectors[i], sb.projectors[j]));
            if (nrm > rep.worst_norm) {
                rep.worst_norm = nrm;
                rep.worst_a = static_cast<int>(i);
                rep.worst_b = static_cast<int>(j);
            }
        }
    }
    rep.commute = rep.worst_norm <= tol;
    return rep;
}

Operator pauli_x() {
    Operator m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

Operator pauli_y() {
    Operator m(2, 2);
    m << Complex(0, 0), Complex(0, -1), Complex(0, 1), Complex(0, 0);
    return m;
}

Operator pauli_z() {
    Operator m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}

Operator dirac_alpha(int k) {
    if (k < 1 || k > 3) throw invalid_input_error("dirac_alpha: k must be 1..3");
    Operator s = (k == 1) ? pauli_x() : (k == 2) ? pauli_y() : pauli_z();
    Operator m = Operator::Zero(4, 4);
    m.block(0, 2, 2, 2) = s;
    m.block(2, 0, 2, 2) = s;
    return m;
}

Operator dirac_beta() {
    Operator m = Operator::Zero(4, 4);
    m(0, 0) = 1;
    m(1, 1) = 1;
    m(2, 2) = -1;
    m(3, 3) = -1;
    return m;
}

nlohmann::json operator_to_json(const Operator& a) {
    nlohmann::json j;
    j["dim"] = a.rows();
    if (a.rows() != a.cols()) throw shape_error("operator_to_json: operator must be square");
    std::vector<double> re, im;
    re.reserve(static_cast<std::size_t>(a.size()));
    im.reserve(static_cast<std::size_t>(a.size()));
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            re.push_back(a(r, c).real());
            im.push_back(a(r, c).imag());
        }
    }
    j["re"] = re;
    j["im"] = im;
    return j;
}

Operator operator_from_json(const nlohmann::json& j) {
    if (!j.contains("dim") || !j.contains("re") || !j.contains("im"))
        throw io_error("matrix json: missing dim/re/im");
    const Eigen::Index n = j.at("dim").get<Eigen::Index>();
    if (n <= 0) throw io_error("matrix json: dim must be positive");
    const auto re = j.at("re").get<std::vector<double>>();
    const auto im = j.at("im").get<std::vector<double>>();
    if (re.size() != static_cast<std::size_t>(n * n) || im.size() != re.size())
        throw io_error("matrix json: re/im length must equal dim^2");
    Operator a(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < n; ++c) {
            const std::size_t k = static_cast<std::size_t>(r * n + c);
            a(r, c) = Complex(re[k], im[k]);
        }
    if (!a.allFinite()) throw io_error("matrix json: non-finite entries");
    return a;
}

nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json j;
    j["dim"] = v.size();
    std::vector<double> re, im;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        re.push_back(v(i).real());
        im.push_back(v(i).imag());
    }
    j["re"] = re;
    j["im"] = im;
    return j;
}

Vector vector_from_json(const nlohmann::json& j) {
    if (!j.contains("dim") || !j.contains("re") || !j.contains("im"))
        throw io_error("vector json: missing dim/re/im");
    const Eigen::Index n = j.at("dim").get<Eigen::Index>();
    if (n <= 0) throw io_error("vector json: dim must be positive");
    const auto re = j.at("re").get<std::vector<double>>();
    const auto im = j.at("im").get<std::vector<double>>();
    if (re.size() != static_cast<std::size_t>(n) || im.size() != re.size())
        throw io_error("vector json: re/im length must equal dim");
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = Complex(re[i], im[i]);
    if (!v.allFinite()) throw io_error("vector json: non-finite entries");
    return v;
}

}  // namespace multitime
