#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "multitime/errors.hpp"

namespace multitime {

using Complex = std::complex<double>;
using Operator = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// Largest singular value, by power iteration on A†A to 1e-10 relative
// convergence. Returns 0 for the zero matrix.
double operator_norm(const Operator& a);

double frobenius_norm(const Operator& a);

// ‖A − A†‖ ≤ tol, in operator norm.
bool is_hermitian(const Operator& a, double tol = 1e-10);

// AB − BA.
Operator commutator(const Operator& a, const Operator& b);

// exp(scale·A) by scaling-and-squaring with a fixed-order rational
// approximant. Non-finite entries are rejected.
Operator matrix_exp(const Operator& a, Complex scale = Complex(1.0, 0.0));

// Eigen-decomposition of a Hermitian operator with eigenvalues merged
// into clusters; one orthogonal projector per cluster. Projectors of a
// cluster span all its eigenvectors, so they are basis-independent even
// under degeneracy.
struct Spectrum {
    std::vector<double> values;          // cluster means, ascending
    std::vector<int> multiplicities;     // cluster sizes
    std::vector<Operator> projectors;    // rank = multiplicity, sum = I
};

// cluster_tol < 0 selects the default 1e-8·‖A‖. Non-Hermitian input is
// rejected (defined for Hermitian operators only).
Spectrum spectral_decompose(const Operator& a, double cluster_tol = -1.0);

struct SpectralCommuteReport {
    bool commute = false;
    double worst_norm = 0.0;  // max over projector pairs of ‖[P_a, Q_b]‖
    int worst_a = -1;         // cluster index into spectrum of A
    int worst_b = -1;         // cluster index into spectrum of B
};

// True iff every projector pair of the two spectra satisfies
// ‖[P_a, Q_b]‖ ≤ tol. Requires Hermitian inputs of equal dimension.
SpectralCommuteReport spectral_commute(const Operator& a, const Operator& b,
                                       double tol = 1e-10);

// Constant matrices used throughout the 2-spinor and 4-spinor code.
Operator pauli_x();
Operator pauli_y();
Operator pauli_z();
Operator dirac_alpha(int k);  // k = 1..3, 4x4 standard representation
Operator dirac_beta();

}  // namespace multitime
