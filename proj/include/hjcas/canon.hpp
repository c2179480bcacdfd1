#pragma once

// Deterministic canonical form: epsilon/delta/metric contraction identities,
// dummy renaming by first occurrence, total atom order with wedge sign
// tracking, like-term merging, and a sound zero test for this identity class.

#include "hjcas/expr.hpp"

#include <cstdint>

namespace hjcas::canon {

enum class InternalMetric { Euclidean, Lorentzian };

/// ambient internal metric used by contraction rules and enumeration;
/// euclidean unless a ScopedMetric says otherwise
InternalMetric ambient_metric();

class ScopedMetric
{
  public:
    explicit ScopedMetric(InternalMetric m);
    ~ScopedMetric();
    ScopedMetric(ScopedMetric const &) = delete;

  private:
    InternalMetric prev_;
};

struct CanonicalForm {
    Expression expression;
    std::uint64_t fingerprint = 0;
};

CanonicalForm canonicalize(Expression const &x);

bool is_zero(Expression const &x);
bool equal(Expression const &a, Expression const &b);

/// canonical serialization of one term's atom list (no coefficient)
std::string term_key(Term const &t);
/// canonical serialization of a whole expression, coefficients included
std::string expr_key(Expression const &x);

} // namespace hjcas::canon
