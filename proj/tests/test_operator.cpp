#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "multitime/operator.hpp"
#include "multitime/serialize.hpp"
#include "test_util.hpp"

using namespace multitime;
using testutil::random_hermitian;
using testutil::random_complex;
using testutil::taylor_exp;

TEST_CASE("matrix_exp agrees with a truncated-series reference") {
    auto gen = testutil::rng(42);
    for (int trial = 0; trial < 30; ++trial) {
        const int dim = 2 + static_cast<int>(gen() % 7);
        const Operator a = random_complex(dim, gen, 0.8);
        const Complex scale = (trial % 2 == 0) ? Complex(1, 0) : Complex(0, -0.7);
        const Operator got = matrix_exp(a, scale);
        const Operator want = taylor_exp(a, scale);
        CHECK((got - want).norm() <= 1e-12 * want.norm());
    }
}

TEST_CASE("matrix_exp of i*theta*pauli_x matches the closed form") {
    // exp(i theta sx) = cos(theta) I + i sin(theta) sx.
    const double theta = 0.7;
    const Operator got = matrix_exp(pauli_x(), Complex(0, theta));
    Operator want(2, 2);
    want << Complex(std::cos(theta), 0), Complex(0, std::sin(theta)),
            Complex(0, std::sin(theta)), Complex(std::cos(theta), 0);
    CHECK((got - want).norm() <= 1e-14);
}

TEST_CASE("matrix_exp of -i*t*H is unitary for Hermitian H") {
    auto gen = testutil::rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int dim = 2 + static_cast<int>(gen() % 7);
        Operator h = random_hermitian(dim, gen);
        h /= operator_norm(h);
        std::uniform_real_distribution<double> tdist(0.0, 100.0);
        const double t = tdist(gen);  // ‖tH‖ up to 100
        const Operator u = matrix_exp(h, Complex(0, -t));
        const Operator dev = u.adjoint() * u - Operator::Identity(dim, dim);
        CHECK(operator_norm(dev) <= 1e-12);
    }
}

TEST_CASE("matrix_exp satisfies the one-parameter group law") {
    auto gen = testutil::rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int dim = 2 + static_cast<int>(gen() % 7);
        Operator h = random_hermitian(dim, gen);
        h /= operator_norm(h);
        std::uniform_real_distribution<double> tdist(0.0, 50.0);
        const double t1 = tdist(gen), t2 = tdist(gen);
        const Operator u12 = matrix_exp(h, Complex(0, -(t1 + t2)));
        const Operator u = matrix_exp(h, Complex(0, -t1)) * matrix_exp(h, Complex(0, -t2));
        CHECK(operator_norm(u - u12) <= 1e-10);
    }
}

TEST_CASE("matrix_exp rejects non-finite input") {
    Operator a(2, 2);
    a << 1, 0, 0, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS((void)matrix_exp(a), invalid_input_error);
    CHECK_THROWS_AS((void)matrix_exp(pauli_x(), Complex(std::numeric_limits<double>::infinity(), 0)),
                    invalid_input_error);
}

TEST_CASE("commutator of pauli_x and pauli_z") {
    // sx sz = [[0,-1],[1,0]], sz sx = [[0,1],[-1,0]]; difference has
    // entries (0,-2;2,0) = -2i*sy and operator norm 2.
    const Operator c = commutator(pauli_x(), pauli_z());
    Operator want(2, 2);
    want << 0, -2, 2, 0;
    CHECK((c - want).norm() <= 1e-15);
    CHECK(operator_norm(c) == doctest::Approx(2.0).epsilon(1e-12));
    const Operator minus2isy = Complex(0, -2) * pauli_y();
    CHECK((c - minus2isy).norm() <= 1e-15);
}

TEST_CASE("operator_norm matches singular values") {
    SUBCASE("diagonal") {
        Operator a = Operator::Zero(2, 2);
        a(0, 0) = 3.0;
        a(1, 1) = -1.0;
        CHECK(operator_norm(a) == doctest::Approx(3.0).epsilon(1e-10));
    }
    SUBCASE("random vs SVD") {
        auto gen = testutil::rng(13);
        for (int trial = 0; trial < 20; ++trial) {
            const int dim = 2 + static_cast<int>(gen() % 7);
            const Operator a = random_complex(dim, gen, 2.0);
            Eigen::JacobiSVD<Operator> svd(a);
            const double want = svd.singularValues()(0);
            CHECK(operator_norm(a) == doctest::Approx(want).epsilon(1e-8));
        }
    }
    SUBCASE("zero matrix") { CHECK(operator_norm(Operator::Zero(3, 3)) == 0.0); }
}

TEST_CASE("spectral_decompose reconstructs the operator") {
    auto gen = testutil::rng(17);
    for (int trial = 0; trial < 15; ++trial) {
        const int dim = 2 + static_cast<int>(gen() % 7);
        const Operator a = random_hermitian(dim, gen, 2.0);
        const Spectrum s = spectral_decompose(a);

        Operator sum = Operator::Zero(dim, dim);
        Operator recon = Operator::Zero(dim, dim);
        int total_mult = 0;
        for (std::size_t k = 0; k < s.projectors.size(); ++k) {
            const Operator& p = s.projectors[k];
            CHECK(operator_norm(p * p - p) <= 1e-10);            // idempotent
            CHECK(operator_norm(p - p.adjoint()) <= 1e-10);      // orthogonal projector
            sum += p;
            recon += s.values[k] * p;
            total_mult += s.multiplicities[k];
            for (std::size_t l = 0; l < k; ++l)
                CHECK(operator_norm(s.projectors[l] * p) <= 1e-10);  // mutually orthogonal
        }
        CHECK(total_mult == dim);
        CHECK(operator_norm(sum - Operator::Identity(dim, dim)) <= 1e-10);
        CHECK(operator_norm(recon - a) <= 1e-8 * (1.0 + operator_norm(a)));
    }
}

TEST_CASE("spectral_decompose merges nearly degenerate eigenvalues") {
    Operator a = Operator::Zero(3, 3);
    a(0, 0) = 1.0;
    a(1, 1) = 1.0 + 1e-12;
    a(2, 2) = 5.0;
    const Spectrum s = spectral_decompose(a);  // default tol 1e-8*norm = 5e-8
    REQUIRE(s.projectors.size() == 2);
    CHECK(s.multiplicities[0] == 2);
    CHECK(s.multiplicities[1] == 1);
    CHECK(s.values[1] == doctest::Approx(5.0));
}

TEST_CASE("spectral_decompose rejects non-Hermitian input") {
    Operator a(2, 2);
    a << 0, 1, 0, 0;
    CHECK_THROWS_AS((void)spectral_decompose(a), invalid_input_error);
}

TEST_CASE("spectral_commute on pauli_x vs pauli_z") {
    // Projectors (I±sx)/2 and (I±sz)/2: every pair commutator equals
    // ±(sx sz - sz sx)/4 = ∓ i sy / 2, operator norm exactly 1/2.
    const auto rep = spectral_commute(pauli_x(), pauli_z(), 0.4);
    CHECK_FALSE(rep.commute);
    CHECK(rep.worst_norm == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(rep.worst_a >= 0);
    CHECK(rep.worst_b >= 0);
}

TEST_CASE("spectral_commute accepts simultaneously diagonalizable pairs") {
    auto gen = testutil::rng(23);
    for (int trial = 0; trial < 15; ++trial) {
        const int dim = 2 + static_cast<int>(gen() % 6);
        const Operator u = testutil::random_unitary(dim, gen);
        std::uniform_real_distribution<double> ev(-2.0, 2.0);
        Eigen::VectorXd da(dim), db(dim);
        for (int i = 0; i < dim; ++i) {
            da(i) = ev(gen);
            db(i) = ev(gen);
        }
        const Operator a = u * da.asDiagonal().toDenseMatrix().cast<Complex>() * u.adjoint();
        const Operator b = u * db.asDiagonal().toDenseMatrix().cast<Complex>() * u.adjoint();
        const double tol = 1e-8;
        const auto rep = spectral_commute(a, b, tol);
        CHECK(rep.commute);
        // Guarantee provided by the spectral certificate:
        const double bound =
            dim * tol * (operator_norm(a) + operator_norm(b));
        CHECK(operator_norm(commutator(a, b)) <= bound + 1e-12);
    }
}

TEST_CASE("spectral_commute rejects non-Hermitian input") {
    Operator a(2, 2);
    a << 0, 1, 0, 0;
    CHECK_THROWS_AS((void)spectral_commute(a, pauli_z(), 1e-10), invalid_input_error);
}

TEST_CASE("dirac matrices satisfy the anticommutation algebra") {
    const Operator beta = dirac_beta();
    CHECK(operator_norm(beta * beta - Operator::Identity(4, 4)) <= 1e-15);
    for (int i = 1; i <= 3; ++i) {
        const Operator ai = dirac_alpha(i);
        CHECK(operator_norm(ai - ai.adjoint()) <= 1e-15);
        CHECK(operator_norm(ai * beta + beta * ai) <= 1e-15);
        for (int j = 1; j <= 3; ++j) {
            const Operator aj = dirac_alpha(j);
            const Operator want = (i == j) ? Operator(2.0 * Operator::Identity(4, 4))
                                           : Operator(Operator::Zero(4, 4));
            CHECK(operator_norm(ai * aj + aj * ai - want) <= 1e-15);
        }
    }
}

TEST_CASE("matrix json round trip") {
    auto gen = testutil::rng(29);
    const Operator a = random_complex(5, gen, 3.0);
    const auto j = operator_to_json(a);
    const Operator b = operator_from_json(j);
    CHECK((a - b).norm() == 0.0);

    nlohmann::json bad = j;
    bad["re"] = std::vector<double>{1.0};
    CHECK_THROWS_AS((void)operator_from_json(bad), io_error);
    nlohmann::json missing;
    missing["dim"] = 2;
    CHECK_THROWS_AS((void)operator_from_json(missing), io_error);
}

TEST_CASE("vector json round trip") {
    Vector v(3);
    v << Complex(1, -2), Complex(0, 0.5), Complex(-3, 0);
    const Vector w = vector_from_json(vector_to_json(v));
    CHECK((v - w).norm() == 0.0);
}
