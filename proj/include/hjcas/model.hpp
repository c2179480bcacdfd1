#pragma once

// Model declarations: fields, the coupling, a velocity-affine split
// Lagrangian, and an optional covariant action. Includes the .hjm parser,
// the canonical printer, and the builtin library.

#include "hjcas/canon.hpp"
#include "hjcas/dsl.hpp"
#include "hjcas/expr.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hjcas::model {

struct FieldDecl {
    std::string name;
    std::vector<Index> slots; // canonical positions, placeholder names
    std::string momentum;     // momentum field name (dual signature)
    int components() const;
};

struct CovFieldDecl {
    std::string name;
    std::vector<Index> slots;        // spacetime signature
    std::string time_split;          // split field holding the 0-component
    std::string space_split;         // split field holding spatial components
};

struct Model {
    std::string name;
    bool has_lam = false;
    canon::InternalMetric metric = canon::InternalMetric::Euclidean;
    std::vector<FieldDecl> fields;
    Expression split_lagrangian;
    std::vector<CovFieldDecl> cov_fields;
    std::optional<Expression> covariant_action;

    int config_components() const;
    FieldDecl const *field(std::string const &name) const;
    dsl::Context expr_context(bool allow_unknown) const;
};

/// parse and validate a model source; throws dsl::parse_error or
/// structural_error with positioned/診断 messages
Model parse_model(std::string const &source);

/// canonical .hjm serialization; parse_model(print_model(m)) reproduces m
std::string print_model(Model const &m);

std::vector<std::string> builtin_names();
Model builtin(std::string const &name);

/// covariant Euler-Lagrange equations, one per covariant field, with the
/// overall rational content normalized out (sign fixed positive-leading)
std::vector<std::pair<std::string, Expression>> euler_lagrange(Model const &m);

/// normalize an expression by its rational content; returns the factor f
/// such that input = f * output
std::pair<Expression, RatFunc> normalize_content(Expression const &x);

} // namespace hjcas::model
