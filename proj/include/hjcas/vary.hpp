#pragma once

// Functional derivatives, Poisson brackets as distributional kernels,
// smearing, integration-by-parts normal forms, and reduction modulo the
// constraint ideal (solvable-momentum elimination plus linear span matching
// over enumerated components).

#include "hjcas/components.hpp"
#include "hjcas/expr.hpp"

#include <optional>
#include <vector>

namespace hjcas::vary {

/// configuration field paired with its momentum; momentum slots are the
/// slot-wise duals of the configuration slots
struct CanonicalPair {
    std::string config;
    std::string momentum;
    std::vector<Index> config_slots; // canonical signature (placeholder names)
};

struct CanonicalStructure {
    std::vector<CanonicalPair> pairs;

    bool is_momentum(std::string const &f) const;
    bool is_config(std::string const &f) const;
    CanonicalPair const *pair_of(std::string const &f) const; // either side
};

/// hard cap on Dirac-derivative order in kernels
inline constexpr int kMaxDiracOrder = 2;

/// partial derivative of `x` with respect to the atom pattern
/// (field, variation flag, derivative arity impl. by occurrence): every
/// occurrence contributes the rest of its term times delta projectors tying
/// the occurrence's slots to `slots`, with the occurrence's own derivative
/// prefix REPORTED via `deriv_out` — used by bracket machinery.
/// For plain polarization at fixed occurrence shape use polarize().

/// d x / d(field with exactly the given derivative multiset absent) summed
/// over occurrences after integration by parts: the Euler-Lagrange-type
/// functional derivative. Slots name the result's free indices (dual
/// positions).
Expression functional_derivative(Expression const &density, std::string const &field,
                                 std::vector<Index> const &slots,
                                 bool variation = false);

/// plain (point) polarization: sum over occurrences of `field` of
/// (-1)^0 rest * projectors, keeping each occurrence's derivative prefix on
/// the Dirac side. Internal helper exposed for the kernel builders:
/// result terms carry a Dirac atom holding the occurrence prefix.
/// Not for public use; see poisson_kernel.

/// d density / d(dot(field)): the velocity coefficient of an affine
/// Lagrangian; slots name the pattern in the field's own positions and the
/// result carries them at dual positions
Expression velocity_coefficient(Expression const &density, std::string const &field,
                                std::vector<Index> const &slots);

/// {f(x), g(y)} as a kernel: terms carry exactly one Dirac atom whose
/// derivative indices act on the first argument; all field atoms at x.
Expression poisson_kernel(Expression const &f, Expression const &g,
                          CanonicalStructure const &cs);

/// kernel transpose: K'(x,y) = K(y,x) normalized back to coefficients at x
Expression kernel_transpose(Expression const &K);

/// integral over the common point of K1(x,z) * block(z) * K2(z,y);
/// `block` must be field-free (index atoms and coefficients only)
Expression kernel_compose(Expression const &K1, Expression const &block,
                          Expression const &K2);

/// integrate a kernel against 1 in y: drops the Dirac atom (derivative terms
/// integrate to zero only when separately smeared; here derivatives transfer
/// as x-derivatives of the coefficient, which is the density of int K dy)
Expression kernel_integrate_y(Expression const &K);

/// {F, G} for smeared functionals (densities under an implicit integral):
/// sum over pairs of dF/dq dG/dp - dF/dp dG/dq, one density at the common
/// point
Expression poisson_smeared(Expression const &F, Expression const &G,
                           CanonicalStructure const &cs);

/// {F, h(z)}: smeared F against the unsmeared local density h; result is an
/// expression at z carrying h's free indices
Expression poisson_smeared_local(Expression const &F, Expression const &h,
                                 CanonicalStructure const &cs);

/// move every derivative off the (unique per term) occurrence of `testfield`
/// by formal integration by parts; canonical representative of the
/// density modulo total divergences, for densities linear in the test field
Expression strip_test_field(Expression const &x, std::string const &testfield);

/// does any term contain the field?
bool contains_field(Expression const &x, std::string const &field);

// --- reduction modulo constraints -------------------------------------------

struct SolvableRule {
    FieldPattern pattern;
    Expression rhs;
};

/// detect `momentum - f(config)` (or pure momentum) shape
std::optional<SolvableRule> detect_solvable(Expression const &constraint,
                                            CanonicalStructure const &cs);

struct ReduceOutcome {
    Expression residue;       // zero iff weakly zero
    bool in_span = false;     // residue vanished via span matching
    std::vector<std::pair<size_t, comps::CompPoly>> combination; // per-basis info
};

/// eliminate solvable constraints, then test membership of the remainder in
/// the linear span of `span_basis` densities with field-dependent
/// coefficients, solved over enumerated components with a
/// divisibility-quotient candidate basis.
ReduceOutcome reduce_mod_constraints(Expression const &x,
                                     std::vector<Expression> const &constraints,
                                     CanonicalStructure const &cs);

/// span-only reduction (no elimination); basis entries may carry free indices
ReduceOutcome span_reduce(Expression const &x, std::vector<Expression> const &basis);

} // namespace hjcas::vary
