#pragma once

#include <cstddef>
#include <vector>

#include "multitime/errors.hpp"

namespace multitime {

// Real polynomial in n variables, stored as a list of monomials.
// Exact partial derivatives make these handy as analytic references.
struct Monomial {
    double coeff = 0.0;
    std::vector<int> powers;  // one exponent per variable
};

class Polynomial {
  public:
    Polynomial() = default;
    Polynomial(std::size_t n_vars, std::vector<Monomial> terms)
        : n_vars_(n_vars), terms_(std::move(terms)) {
        for (const auto& m : terms_) {
            if (m.powers.size() != n_vars_)
                throw shape_error("polynomial monomial arity mismatch");
            for (int p : m.powers)
                if (p < 0) throw invalid_input_error("negative monomial exponent");
        }
    }

    std::size_t n_vars() const { return n_vars_; }
    const std::vector<Monomial>& terms() const { return terms_; }

    double eval(const std::vector<double>& x) const {
        if (x.size() != n_vars_) throw shape_error("polynomial eval arity mismatch");
        double acc = 0.0;
        for (const auto& m : terms_) {
            double v = m.coeff;
            for (std::size_t i = 0; i < n_vars_; ++i)
                for (int p = 0; p < m.powers[i]; ++p) v *= x[i];
            acc += v;
        }
        return acc;
    }

    // d/dx_i, computed exactly on the monomial representation.
    Polynomial derivative(std::size_t i) const {
        if (i >= n_vars_) throw invalid_input_error("derivative variable out of range");
        std::vector<Monomial> out;
        for (const auto& m : terms_) {
            if (m.powers[i] == 0) continue;
            Monomial d = m;
            d.coeff *= m.powers[i];
            d.powers[i] -= 1;
            out.push_back(std::move(d));
        }
        return Polynomial(n_vars_, std::move(out));
    }

  private:
    std::size_t n_vars_ = 0;
    std::vector<Monomial> terms_;
};

}  // namespace multitime
