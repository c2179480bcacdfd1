#pragma once

// Immutable exact symbolic tensor expressions: sums of terms, each term a
// rational-function coefficient in lam times a product of indexed atoms
// (fields, epsilon symbols, Kronecker deltas, the internal metric, and the
// two-point Dirac distribution used by bracket kernels).
//
// Index discipline: a contracted (dummy) index name appears exactly twice in
// a term, once upper and once lower, with equal kind. Everything else is a
// free index, and all terms of one expression must share the same free-index
// multiset and total form degree.

#include "hjcas/rational.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hjcas {

enum class IndexKind { Spacetime, Spatial, Internal };
enum class IndexPos { Upper, Lower };

constexpr int range_of(IndexKind k)
{
    return k == IndexKind::Spatial ? 2 : 3;
}
/// concrete values an index takes: spacetime/internal 0..2, spatial 1..2
constexpr int first_value(IndexKind k)
{
    return k == IndexKind::Spatial ? 1 : 0;
}

std::string to_string(IndexKind k);

struct Index {
    IndexKind kind;
    IndexPos pos;
    std::string name;

    Index() = default;
    Index(IndexKind k, IndexPos p, std::string n)
        : kind(k), pos(p), name(std::move(n))
    {}
    bool operator==(Index const &o) const
    {
        return kind == o.kind && pos == o.pos && name == o.name;
    }
    Index flipped() const
    {
        return Index(kind, pos == IndexPos::Upper ? IndexPos::Lower : IndexPos::Upper,
                     name);
    }
};

inline Index up(IndexKind k, std::string n) { return Index(k, IndexPos::Upper, std::move(n)); }
inline Index dn(IndexKind k, std::string n) { return Index(k, IndexPos::Lower, std::move(n)); }

enum class AtomType {
    Field,     // named field, slots per its signature
    Delta,     // mixed Kronecker delta, slots [upper, lower], any kind
    Metric,    // internal metric, slots both upper or both lower
    Eps2,      // 2d spatial Levi-Civita, slots both upper or both lower
    Eps3Int,   // 3-index internal epsilon, slots all upper or all lower
    Eps3St,    // 3-index spacetime epsilon, slots all upper or all lower
    Dirac,     // delta^2(x-y); `deriv` are derivatives on the first argument
};

struct Atom {
    AtomType type = AtomType::Field;
    std::string field;        // field name, AtomType::Field only
    bool variation = false;   // field-space 1-form (delta F); grades the atom odd
    bool dot = false;         // time derivative marker, model layer only
    std::vector<Index> deriv; // spatial/spacetime derivative prefix, all lower
    std::vector<Index> slots;

    int form_degree() const { return variation ? 1 : 0; }
    bool antisymmetric_slots() const
    {
        return type == AtomType::Eps2 || type == AtomType::Eps3Int ||
               type == AtomType::Eps3St;
    }
    bool symmetric_slots() const { return type == AtomType::Metric; }
    bool operator==(Atom const &o) const
    {
        return type == o.type && field == o.field && variation == o.variation &&
               dot == o.dot && deriv == o.deriv && slots == o.slots;
    }
};

// atom constructors
Atom field_atom(std::string name, std::vector<Index> slots, bool variation = false);
Atom delta_atom(Index upper, Index lower);
Atom metric_atom(Index a, Index b); // both up or both down, internal
Atom eps2_atom(IndexPos pos, std::string a, std::string b);
Atom eps3int_atom(IndexPos pos, std::string i, std::string j, std::string k);
Atom eps3st_atom(IndexPos pos, std::string m, std::string a, std::string n);
Atom dirac_atom();

struct Term {
    RatFunc coeff;
    std::vector<Atom> atoms;
};

struct FreeIndex {
    std::string name;
    IndexKind kind;
    IndexPos pos;
    bool operator<(FreeIndex const &o) const
    {
        return std::tie(name, kind, pos) < std::tie(o.name, o.kind, o.pos);
    }
    bool operator==(FreeIndex const &o) const
    {
        return name == o.name && kind == o.kind && pos == o.pos;
    }
};

using FreeSignature = std::vector<FreeIndex>; // sorted

class structural_error : public std::runtime_error
{
  public:
    explicit structural_error(std::string const &msg) : std::runtime_error(msg) {}
};

struct Expression {
    std::vector<Term> terms; // kept canonically sorted by canon::canonicalize

    bool is_empty() const { return terms.empty(); }
    static Expression zero() { return Expression{}; }
};

// --- term/expression inspection ---------------------------------------------

/// every index occurrence of a term, in a fixed structural scan order
std::vector<Index const *> index_occurrences(Term const &t);
std::vector<Index *> index_occurrences(Term &t);

/// free indices of a term; throws structural_error on malformed contraction
FreeSignature term_free_indices(Term const &t);
/// dummy index names of a term
std::set<std::string> term_dummy_names(Term const &t);
/// all index names of a term
std::set<std::string> term_index_names(Term const &t);

int term_form_degree(Term const &t);

/// free indices of a whole expression (validates uniformity across terms)
FreeSignature free_indices(Expression const &x);
std::string signature_str(FreeSignature const &sig);

// --- primitive builders ------------------------------------------------------

Expression expr_term(RatFunc coeff, std::vector<Atom> atoms);
Expression expr_atom(Atom a);
Expression expr_const(RatFunc c);

// --- algebra -----------------------------------------------------------------

/// sum; free-index signatures and form degrees must agree
Expression add(Expression const &a, Expression const &b);
Expression sub(Expression const &a, Expression const &b);
/// distributed product; dummy names of b are refreshed to avoid collisions;
/// shared free names of opposite position contract
Expression mul(Expression const &a, Expression const &b);
Expression scale(Expression const &a, RatFunc const &c);
Expression negate(Expression const &a);

/// partial derivative d_idx applied to the whole expression (Leibniz);
/// idx must be a Lower spatial or spacetime index
Expression derivative(Expression const &x, Index const &idx);
/// divergence: contract a fresh derivative against the free upper index `name`
Expression divergence(Expression const &x, std::string const &name);

/// rename a free index (name only; kind/pos unchanged)
Expression rename_free(Expression const &x, std::string const &from, std::string const &to);

struct FieldPattern {
    std::string field;
    bool variation = false;
    std::vector<Index> slots; // pattern slot indices (names bind the replacement)
};

/// simultaneous substitution of every occurrence of the pattern field by the
/// replacement (whose free indices must be exactly the pattern slot names,
/// in dual... same positions as declared on the atom). Derivative prefixes
/// distribute by Leibniz. Dotted occurrences are rejected.
Expression substitute_field(Expression const &x, FieldPattern const &pat,
                            Expression const &replacement);

/// exact substitution of the coupling lam
Expression substitute_lam(Expression const &x, Rat const &value);

/// fresh-name helper: smallest "base0","base1",... not in `used`
std::string fresh_name(std::set<std::string> &used, std::string const &base);

/// rename every dummy of every term away from the given names
Expression refresh_dummies_away_from(Expression const &x,
                                     std::set<std::string> const &avoid);

} // namespace hjcas
