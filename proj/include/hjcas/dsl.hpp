#pragma once

// Text syntax for expressions and model files (.hjm). Line-oriented model
// grammar; expressions use `*`, `+`, `-`, integer and rational constants,
// the coupling `lam`, `dot(...)` for velocities, `d_a(...)`/`d_mu(...)` for
// derivatives, `var(...)` for field-space variations, and the structural
// atoms eps2up/eps2dn/eps3/eps3up/eps3st/eps3stdn/delta/metric/metricup/
// sdelta/sdeltaup.
//
// Index kinds are inferred from names: mu,nu,al,be,ga,rho,si,ta (spacetime);
// a,b,c,d,f,g,h (spatial); i,j,k,l,m,n,r,s (internal); digit suffixes allowed.
// Field occurrences take slot positions from their declaration; `^`/`_`
// markers override, and undeclared (test) fields default to lower
// spatial/spacetime and upper internal slots.

#include "hjcas/expr.hpp"

#include <map>
#include <optional>
#include <string>

namespace hjcas::dsl {

class parse_error : public std::runtime_error
{
  public:
    parse_error(std::string const &msg, int line, int col)
        : std::runtime_error(msg + " (line " + std::to_string(line) + ", column " +
                             std::to_string(col) + ")"),
          line(line), col(col)
    {}
    int line, col;
};

struct FieldSig {
    std::vector<Index> slots; // canonical slot kinds/positions (names are placeholders)
};

struct Context {
    std::map<std::string, FieldSig> fields; // declared fields (and momenta)
    bool has_lam = false;                   // `lam` recognized as the coupling
    bool allow_unknown_fields = true;       // test fields etc.
    bool allow_dot = false;
    bool allow_var = false;
};

std::optional<IndexKind> kind_of_name(std::string const &name);

/// parse one expression; `line0` offsets diagnostics for embedded text
Expression parse_expression(std::string const &text, Context const &ctx, int line0 = 1);

struct PrintOptions {
    bool explicit_positions = true; // emit ^/_ markers on field/delta slots
};

std::string print_expression(Expression const &x, PrintOptions const &opts = {});

/// print a single coefficient the way print_expression does
std::string print_coeff(RatFunc const &c);

} // namespace hjcas::dsl
