#pragma once

// Full component enumeration over the finite index ranges. Dummy sums and all
// epsilon/delta/metric values are expanded numerically; field atoms become
// opaque component symbols (anticommuting for form-degree 1). This is the
// independent oracle behind the canonicalizer and the engine behind matrix
// assembly, weak-equality testing, and linear reductions.

#include "hjcas/expr.hpp"

#include <map>
#include <optional>
#include <vector>

namespace hjcas::comps {

/// one concrete field/Dirac occurrence, serialized; `odd` tags Grassmann parity
struct Symbol {
    std::string text;
    bool odd = false;
    bool operator<(Symbol const &o) const { return text < o.text; }
    bool operator==(Symbol const &o) const { return text == o.text && odd == o.odd; }
};

/// sorted product of symbols with the Grassmann sign folded into coefficients
using Monomial = std::vector<Symbol>;

struct CompPoly {
    std::map<Monomial, RatFunc> coeffs;

    bool is_zero() const;
    void add(Monomial m, RatFunc c, int sign = 1);
    friend CompPoly operator+(CompPoly const &a, CompPoly const &b);
    friend CompPoly operator-(CompPoly const &a, CompPoly const &b);
    friend CompPoly operator*(CompPoly const &a, CompPoly const &b);
    bool operator==(CompPoly const &o) const;
    std::string str() const;
};

/// sorted free-index assignment: values listed in the order of the sorted
/// free signature of the expression
using Assignment = std::vector<int>;

using ComponentMap = std::map<Assignment, CompPoly>;

/// expand every dummy sum and numeric atom; result keyed by free assignment.
/// The free signature (sorted) is returned through `sig_out` when non-null.
ComponentMap enumerate_components(Expression const &x, FreeSignature *sig_out = nullptr);

bool components_equal(Expression const &a, Expression const &b);
bool components_zero(Expression const &a);

// --- exact linear algebra over the rational-function field ------------------

using Row = std::vector<RatFunc>;
using Matrix = std::vector<Row>;

/// solve A u = b exactly; empty optional when inconsistent. Undetermined
/// unknowns are set to zero.
std::optional<std::vector<RatFunc>> solve_linear(Matrix A, std::vector<RatFunc> b);

/// exact inverse; empty optional when singular. When singular, `null_out`
/// (if non-null) receives one nonzero null vector.
std::optional<Matrix> invert(Matrix const &m, std::vector<RatFunc> *null_out = nullptr);

Matrix mat_mul(Matrix const &a, Matrix const &b);
bool is_identity(Matrix const &m);

/// least structure solve: find coefficients c_j with target = sum c_j cand_j,
/// comparing componentwise. Candidates must share the target's free signature.
std::optional<std::vector<RatFunc>>
match_combination(Expression const &target, std::vector<Expression> const &candidates);

} // namespace hjcas::comps
