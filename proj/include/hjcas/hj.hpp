#pragma once

// The Hamilton-Jacobi pipeline: momenta and primary Hamiltonians,
// involutive/non-involutive classification, the generalized-bracket matrix
// and its exact inverse, the corrected bracket, Frobenius integrability,
// the constraint algebra, degree-of-freedom counting, and the
// characteristic equations.

#include "hjcas/components.hpp"
#include "hjcas/expr.hpp"
#include "hjcas/model.hpp"
#include "hjcas/vary.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hjcas::hj {

enum class Origin { Primary, Integrability };
enum class Classification { Unknown, Involutive, NonInvolutive };

struct Hamiltonian {
    std::string label;
    Expression density;          // family density; frees = the family pattern
    std::vector<Index> frees;    // pattern indices in a fixed order
    Origin origin = Origin::Primary;
    Classification cls = Classification::Unknown;
    std::string parameter;       // evolution-parameter name ("" when none)
    RatFunc normalization = RatFunc(1); // raw residue = normalization * density
    std::string source_field;    // primaries: the config field it came from
};

class pipeline_error : public std::runtime_error
{
  public:
    explicit pipeline_error(std::string const &m) : std::runtime_error(m) {}
};

struct BracketMatrix {
    struct BasisEntry {
        size_t ham;               // index into the non-involutive list
        comps::Assignment assign; // concrete values of the family's frees
    };
    std::vector<BasisEntry> basis;
    comps::Matrix entries;
    comps::Matrix inverse;

    struct Block {
        size_t row, col;     // indices into the non-involutive list
        Expression form;     // compact display (with the family label indices)
        bool compact = false;
    };
    std::vector<Block> blocks;     // of C
    std::vector<Block> inv_blocks; // of C^{-1}
    bool all_compact = false;
};

struct AlgebraEntry {
    size_t h1, h2; // indices into the involutive list
    Expression bracket;                 // reduced smeared bracket density
    std::string test1, test2;           // smearing test-field names
    std::vector<std::pair<size_t, Expression>> structure; // constraint -> f
    Expression residue;
    bool closed = false;
};

struct CharacteristicEquation {
    std::string field;
    std::vector<Index> frees;
    Expression dt_part;
    std::vector<std::pair<std::string, Expression>> parameter_parts;
    bool multiplier = false;
};

struct TableEntry {
    std::string f, g;          // atom names (fields or momenta)
    Expression kernel;         // generalized bracket kernel, x-normal form
};

struct Options {
    int max_iterations = 10;
    bool build_table = true;
};

struct Pipeline {
    model::Model mdl;
    vary::CanonicalStructure cs;
    Expression H0;
    std::vector<Hamiltonian> hams;
    std::vector<size_t> involutive, non_involutive;
    BracketMatrix C;
    std::vector<TableEntry> table;
    std::vector<AlgebraEntry> algebra;
    int passes = 0;
    bool converged = false;
    int dof_standard = 0;
    int dof_paper = 0;
    std::vector<CharacteristicEquation> char_eqs;
    std::vector<std::string> warnings;

    /// all constraint densities (for reductions)
    std::vector<Expression> constraint_densities() const;
    /// reduce by eliminating solvable constraints only
    Expression eliminate(Expression const &x) const;
};

/// stage 1: momenta + canonical structure + primary Hamiltonians + H0
void extract_momenta(Pipeline &p);

/// stage 2: classify primaries via weak vanishing of mutual Poisson kernels
void classify(Pipeline &p);

/// stage 3: assemble the non-involutive bracket matrix and invert exactly
void assemble_and_invert(Pipeline &p);

/// generalized bracket kernel of two expressions (atoms or densities at x/y)
Expression generalized_kernel(Pipeline const &p, Expression const &f,
                              Expression const &g);

/// generalized bracket of two smeared functionals (densities under integrals)
Expression generalized_smeared(Pipeline const &p, Expression const &F,
                               Expression const &G);

/// stage 4: Frobenius integrability loop; appends secondaries
void integrability_loop(Pipeline &p, Options const &opt);

/// stage 5: pairwise algebra of involutive Hamiltonians
void constraint_algebra(Pipeline &p);

/// stage 6: degrees of freedom (standard and paper-style counts)
void dof_count(Pipeline &p);

/// stage 7: characteristic equations and multiplier identification
void characteristic_equations(Pipeline &p);

/// gauge transformations: (field, parameter, coefficient), raw coefficients
std::vector<std::tuple<std::string, std::string, Expression>>
gauge_transformations(Pipeline const &p);

/// stage 8: generalized bracket table over all canonical atoms
void bracket_table(Pipeline &p);

/// run everything
Pipeline run(model::Model const &m, Options const &opt = {});

} // namespace hjcas::hj
