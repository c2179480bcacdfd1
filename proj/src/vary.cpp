#include "hjcas/vary.hpp"
#include "hjcas/canon.hpp"

#include <algorithm>
#include <cassert>
#include <functional>

namespace hjcas::vary {

bool CanonicalStructure::is_momentum(std::string const &f) const
{
    for (auto const &p : pairs)
        if (p.momentum == f)
            return true;
    return false;
}

bool CanonicalStructure::is_config(std::string const &f) const
{
    for (auto const &p : pairs)
        if (p.config == f)
            return true;
    return false;
}

CanonicalPair const *CanonicalStructure::pair_of(std::string const &f) const
{
    for (auto const &p : pairs)
        if (p.config == f || p.momentum == f)
            return &p;
    return nullptr;
}

namespace {

std::vector<Index> dual_slots(std::vector<Index> const &slots)
{
    std::vector<Index> out;
    out.reserve(slots.size());
    for (auto const &s : slots)
        out.push_back(s.flipped());
    return out;
}

struct Occurrence {
    size_t term;
    size_t atom;
};

std::vector<Occurrence> occurrences(Expression const &x, std::string const &field,
                                    bool variation)
{
    std::vector<Occurrence> out;
    for (size_t t = 0; t < x.terms.size(); ++t)
        for (size_t a = 0; a < x.terms[t].atoms.size(); ++a) {
            auto const &at = x.terms[t].atoms[a];
            if (at.type == AtomType::Field && at.field == field &&
                at.variation == variation && !at.dot)
                out.push_back({t, a});
        }
    return out;
}

// rest of the term with delta projectors tying the occurrence's slots to the
// pattern names (result free indices sit at the dual of the occurrence's
// positions). Grassmann sign for odd occurrences = parity of odd atoms to the
// left.
Term occurrence_rest(Term const &t, size_t atom_idx, std::vector<Index> const &pattern)
{
    auto const &occ = t.atoms[atom_idx];
    if (occ.slots.size() != pattern.size())
        throw structural_error("polarization: slot arity mismatch on '" + occ.field +
                               "'");
    Term rest;
    rest.coeff = t.coeff;
    int odd_before = 0;
    for (size_t i = 0; i < t.atoms.size(); ++i) {
        if (i == atom_idx)
            continue;
        if (i < atom_idx && t.atoms[i].form_degree() == 1)
            ++odd_before;
        rest.atoms.push_back(t.atoms[i]);
    }
    if (occ.form_degree() == 1 && (odd_before % 2))
        rest.coeff = -rest.coeff;
    for (size_t s = 0; s < occ.slots.size(); ++s) {
        Index const &I = occ.slots[s];
        if (I.kind != pattern[s].kind)
            throw structural_error("polarization: slot kind mismatch on '" + occ.field +
                                   "'");
        Index P(I.kind, I.pos == IndexPos::Upper ? IndexPos::Lower : IndexPos::Upper,
                pattern[s].name);
        if (I.pos == IndexPos::Upper)
            rest.atoms.push_back(delta_atom(I, P));
        else
            rest.atoms.push_back(delta_atom(P, I));
    }
    return rest;
}

// ensure pattern names don't collide with names already used in x
void check_pattern_names(Expression const &x, std::vector<Index> const &pattern)
{
    for (auto const &t : x.terms) {
        auto names = term_index_names(t);
        for (auto const &p : pattern)
            if (names.count(p.name))
                throw structural_error("pattern name '" + p.name +
                                       "' collides with expression indices");
    }
}

Expression fold_derivatives(Expression e, std::vector<Index> const &dv)
{
    for (auto const &d : dv)
        e = derivative(e, Index(d.kind, IndexPos::Lower, d.name));
    return e;
}

int dirac_order(Term const &t)
{
    for (auto const &a : t.atoms)
        if (a.type == AtomType::Dirac)
            return (int)a.deriv.size();
    return 0;
}

void check_dirac_cap(Expression const &x)
{
    for (auto const &t : x.terms)
        if (dirac_order(t) > kMaxDiracOrder)
            throw structural_error(
                "kernel exceeds the supported Dirac-derivative order (" +
                std::to_string(kMaxDiracOrder) + ")");
}

} // namespace

Expression functional_derivative(Expression const &density, std::string const &field,
                                 std::vector<Index> const &slots, bool variation)
{
    check_pattern_names(density, slots);
    Expression out;
    for (auto const &occ : occurrences(density, field, variation)) {
        Term const &t = density.terms[occ.term];
        Atom const &a = t.atoms[occ.atom];
        Term rest = occurrence_rest(t, occ.atom, slots);
        Expression contrib;
        contrib.terms.push_back(rest);
        contrib = fold_derivatives(contrib, a.deriv);
        if (a.deriv.size() % 2)
            contrib = negate(contrib);
        out = add(out, contrib);
    }
    return out;
}

Expression velocity_coefficient(Expression const &density, std::string const &field,
                                std::vector<Index> const &slots)
{
    check_pattern_names(density, slots);
    Expression out;
    for (size_t t = 0; t < density.terms.size(); ++t)
        for (size_t a = 0; a < density.terms[t].atoms.size(); ++a) {
            auto const &at = density.terms[t].atoms[a];
            if (at.type != AtomType::Field || at.field != field || !at.dot)
                continue;
            if (!at.deriv.empty())
                throw structural_error("derived velocity of '" + field + "'");
            Expression contrib;
            contrib.terms.push_back(occurrence_rest(density.terms[t], a, slots));
            out = add(out, contrib);
        }
    return out;
}

Expression poisson_kernel(Expression const &f, Expression const &g,
                          CanonicalStructure const &cs)
{
    for (auto const *e : {&f, &g})
        for (auto const &t : e->terms)
            for (auto const &a : t.atoms)
                if (a.variation || a.dot)
                    throw structural_error("poisson_kernel: phase-space densities only");

    // free-name collision between f and g would silently contract; forbid
    {
        auto sf = f.is_empty() ? FreeSignature{} : free_indices(f);
        auto sg = g.is_empty() ? FreeSignature{} : free_indices(g);
        for (auto const &a : sf)
            for (auto const &b : sg)
                if (a.name == b.name)
                    throw structural_error("poisson_kernel: free index '" + a.name +
                                           "' used on both sides");
    }

    Expression out;
    auto one_direction = [&](std::string const &qf, std::string const &pf, int sign) {
        for (auto const &of : occurrences(f, qf, false)) {
            Term const &tf = f.terms[of.term];
            Atom const &af = tf.atoms[of.atom];
            for (auto const &og : occurrences(g, pf, false)) {
                Term tg = g.terms[og.term];
                // refresh g-term dummies away from f-term names
                std::set<std::string> reserved = term_index_names(tf);
                for (auto const &n : term_index_names(tg))
                    reserved.insert(n);
                {
                    auto dg = term_dummy_names(tg);
                    std::map<std::string, std::string> ren;
                    for (auto const &d : dg)
                        if (term_index_names(tf).count(d))
                            ren[d] = fresh_name(reserved, "y");
                    for (auto *ix : index_occurrences(tg))
                        if (auto it = ren.find(ix->name); it != ren.end())
                            ix->name = it->second;
                }
                Atom const &ag = tg.atoms[og.atom];
                if (af.slots.size() != ag.slots.size())
                    throw structural_error("canonical pair arity mismatch");

                // transfer side: rest_g + Dirac, folded over both prefixes
                Term rest_g;
                rest_g.coeff = tg.coeff;
                for (size_t i = 0; i < tg.atoms.size(); ++i)
                    if (i != og.atom)
                        rest_g.atoms.push_back(tg.atoms[i]);
                rest_g.atoms.push_back(dirac_atom());
                Expression trans;
                trans.terms.push_back(rest_g);
                std::vector<Index> all_derivs = af.deriv;
                all_derivs.insert(all_derivs.end(), ag.deriv.begin(), ag.deriv.end());
                trans = fold_derivatives(trans, all_derivs);
                int s = sign * ((ag.deriv.size() % 2) ? -1 : 1);

                // x side: rest_f + slot projectors between the two occurrences
                Term rest_f;
                rest_f.coeff = tf.coeff * RatFunc(Rat(s));
                for (size_t i = 0; i < tf.atoms.size(); ++i)
                    if (i != of.atom)
                        rest_f.atoms.push_back(tf.atoms[i]);
                for (size_t sl = 0; sl < af.slots.size(); ++sl) {
                    Index const &I = af.slots[sl];
                    Index const &J = ag.slots[sl];
                    if (I.kind != J.kind || I.pos == J.pos)
                        throw structural_error(
                            "canonical pair '" + qf + "'/'" + pf +
                            "' slots are not dual at position " + std::to_string(sl));
                    if (I.pos == IndexPos::Upper)
                        rest_f.atoms.push_back(delta_atom(I, J));
                    else
                        rest_f.atoms.push_back(delta_atom(J, I));
                }
                Expression xside;
                xside.terms.push_back(rest_f);
                out = add(out, mul(xside, trans));
            }
        }
    };

    for (auto const &pair : cs.pairs) {
        one_direction(pair.config, pair.momentum, +1);
        one_direction(pair.momentum, pair.config, -1);
    }
    check_dirac_cap(out);
    return out;
}

Expression kernel_transpose(Expression const &K)
{
    Expression out;
    for (auto const &t : K.terms) {
        int order = dirac_order(t);
        Term base;
        base.coeff = t.coeff * RatFunc(Rat(order % 2 ? -1 : 1));
        std::vector<Index> derivs;
        for (auto const &a : t.atoms) {
            if (a.type == AtomType::Dirac) {
                derivs = a.deriv;
                base.atoms.push_back(dirac_atom());
            } else
                base.atoms.push_back(a);
        }
        Expression e;
        e.terms.push_back(base);
        out = add(out, fold_derivatives(e, derivs));
    }
    check_dirac_cap(out);
    return out;
}

Expression kernel_compose(Expression const &K1, Expression const &block,
                          Expression const &K2)
{
    for (auto const &t : block.terms)
        for (auto const &a : t.atoms)
            if (a.type == AtomType::Field || a.type == AtomType::Dirac)
                throw structural_error("kernel_compose: block must be field-free");

    Expression out;
    for (auto const &t1 : K1.terms) {
        // split K1 term
        Term rest1;
        rest1.coeff = t1.coeff;
        std::vector<Index> derivs1;
        for (auto const &a : t1.atoms) {
            if (a.type == AtomType::Dirac)
                derivs1 = a.deriv;
            else
                rest1.atoms.push_back(a);
        }
        std::set<std::string> avoid = term_index_names(t1);
        for (auto const &t2 : K2.terms) {
            Expression e2;
            e2.terms.push_back(t2);
            e2 = refresh_dummies_away_from(e2, avoid);
            e2 = fold_derivatives(e2, derivs1);
            Expression left;
            left.terms.push_back(rest1);
            out = add(out, mul(mul(left, block), e2));
        }
    }
    check_dirac_cap(out);
    return out;
}

Expression kernel_integrate_y(Expression const &K)
{
    Expression out;
    for (auto const &t : K.terms) {
        if (dirac_order(t) > 0)
            continue;
        Term nt;
        nt.coeff = t.coeff;
        for (auto const &a : t.atoms)
            if (a.type != AtomType::Dirac)
                nt.atoms.push_back(a);
        out.terms.push_back(nt);
    }
    return canon::canonicalize(out).expression;
}

namespace {

std::vector<Index> freshened(std::vector<Index> sig, Expression const &a,
                             Expression const &b, char const *base)
{
    std::set<std::string> used;
    for (auto const *e : {&a, &b})
        for (auto const &t : e->terms)
            for (auto const &n : term_index_names(t))
                used.insert(n);
    for (size_t i = 0; i < sig.size(); ++i)
        sig[i].name = fresh_name(used, base + std::to_string(i));
    return sig;
}

} // namespace

Expression poisson_smeared(Expression const &F, Expression const &G,
                           CanonicalStructure const &cs)
{
    Expression out;
    for (auto const &pair : cs.pairs) {
        auto qs = freshened(pair.config_slots, F, G, "q");
        auto ps = dual_slots(qs);
        Expression dFdq = functional_derivative(F, pair.config, qs);
        Expression dGdp = functional_derivative(G, pair.momentum, ps);
        if (!dFdq.is_empty() && !dGdp.is_empty())
            out = add(out, mul(dFdq, dGdp));
        Expression dFdp = functional_derivative(F, pair.momentum, ps);
        Expression dGdq = functional_derivative(G, pair.config, qs);
        if (!dFdp.is_empty() && !dGdq.is_empty())
            out = sub(out, mul(dFdp, dGdq));
    }
    return out;
}

Expression poisson_smeared_local(Expression const &F, Expression const &h,
                                 CanonicalStructure const &cs)
{
    Expression out;
    for (auto const &pair : cs.pairs) {
        // direction 1: momentum occurrences in h against dF/dq
        auto run = [&](std::string const &h_field, std::string const &F_field,
                       std::vector<Index> const &pat_h, std::vector<Index> const &pat_F,
                       int sign) {
            for (auto const &oh : occurrences(h, h_field, false)) {
                Term const &t = h.terms[oh.term];
                Atom const &a = t.atoms[oh.atom];
                Term rest = occurrence_rest(t, oh.atom, pat_h);
                Expression hx;
                hx.terms.push_back(rest);
                Expression fd = functional_derivative(F, F_field, pat_F);
                if (fd.is_empty())
                    continue;
                fd = refresh_dummies_away_from(fd, term_index_names(t));
                fd = fold_derivatives(fd, a.deriv);
                Expression piece = mul(hx, fd);
                out = sign > 0 ? add(out, piece) : sub(out, piece);
            }
        };
        auto qs = freshened(pair.config_slots, F, h, "q");
        auto ps = dual_slots(qs);
        run(pair.momentum, pair.config, ps, qs, +1);
        run(pair.config, pair.momentum, qs, ps, -1);
    }
    return out;
}

Expression strip_test_field(Expression const &x, std::string const &testfield)
{
    Expression out;
    for (auto const &t : x.terms) {
        int found = -1;
        for (size_t i = 0; i < t.atoms.size(); ++i)
            if (t.atoms[i].type == AtomType::Field && t.atoms[i].field == testfield) {
                if (found >= 0)
                    throw structural_error("strip_test_field: '" + testfield +
                                           "' appears twice in a term");
                found = (int)i;
            }
        if (found < 0) {
            out.terms.push_back(t);
            continue;
        }
        Atom const &a = t.atoms[found];
        if (a.deriv.empty()) {
            out.terms.push_back(t);
            continue;
        }
        Term rest;
        rest.coeff = t.coeff * RatFunc(Rat(a.deriv.size() % 2 ? -1 : 1));
        for (size_t i = 0; i < t.atoms.size(); ++i)
            if ((int)i != found)
                rest.atoms.push_back(t.atoms[i]);
        Expression re;
        re.terms.push_back(rest);
        re = fold_derivatives(re, a.deriv);
        Atom bare = a;
        bare.deriv.clear();
        Expression be;
        be.terms.push_back(Term{RatFunc(1), {bare}});
        Expression piece = mul(re, be);
        for (auto const &tt : piece.terms)
            out.terms.push_back(tt);
    }
    return canon::canonicalize(out).expression;
}

bool contains_field(Expression const &x, std::string const &field)
{
    for (auto const &t : x.terms)
        for (auto const &a : t.atoms)
            if (a.type == AtomType::Field && a.field == field)
                return true;
    return false;
}

std::optional<SolvableRule> detect_solvable(Expression const &constraint,
                                            CanonicalStructure const &cs)
{
    for (size_t i = 0; i < constraint.terms.size(); ++i) {
        auto const &t = constraint.terms[i];
        if (t.atoms.size() != 1)
            continue;
        auto const &a = t.atoms[0];
        if (a.type != AtomType::Field || !cs.is_momentum(a.field) || !a.deriv.empty() ||
            a.dot || a.variation)
            continue;
        if (!t.coeff.is_constant())
            continue;
        // no other occurrence of this momentum
        bool clean = true;
        for (size_t j = 0; j < constraint.terms.size() && clean; ++j) {
            if (j == i)
                continue;
            for (auto const &b : constraint.terms[j].atoms)
                if (b.type == AtomType::Field && b.field == a.field)
                    clean = false;
        }
        if (!clean)
            continue;
        Expression rest;
        for (size_t j = 0; j < constraint.terms.size(); ++j)
            if (j != i)
                rest.terms.push_back(constraint.terms[j]);
        SolvableRule rule;
        rule.pattern = FieldPattern{a.field, false, a.slots};
        rule.rhs = scale(rest, RatFunc(-1) / t.coeff);
        return rule;
    }
    return std::nullopt;
}

namespace {

// multiset division of monomials (sub-multiset removal)
std::optional<comps::Monomial> divide_monomial(comps::Monomial const &M,
                                               comps::Monomial const &m)
{
    comps::Monomial q = M;
    for (auto const &s : m) {
        auto it = std::find(q.begin(), q.end(), s);
        if (it == q.end())
            return std::nullopt;
        q.erase(it);
    }
    return q;
}

} // namespace

ReduceOutcome span_reduce(Expression const &x, std::vector<Expression> const &basis)
{
    ReduceOutcome out;
    out.residue = canon::canonicalize(x).expression;
    if (out.residue.is_empty()) {
        out.in_span = true;
        return out;
    }
    if (basis.empty())
        return out;

    auto rmap = comps::enumerate_components(out.residue);
    // enumerate basis densities (per free assignment)
    struct BasisComp {
        size_t which;
        comps::CompPoly poly;
    };
    std::vector<BasisComp> bcomps;
    for (size_t k = 0; k < basis.size(); ++k) {
        if (basis[k].is_empty())
            continue;
        auto bm = comps::enumerate_components(basis[k]);
        for (auto const &[asg, poly] : bm)
            if (!poly.is_zero())
                bcomps.push_back({k, poly});
    }
    if (bcomps.empty())
        return out;

    // solve independently per free assignment of the residue
    for (auto const &[asg, rpoly] : rmap) {
        if (rpoly.is_zero())
            continue;
        // candidates: quotient monomials times basis components
        std::vector<comps::CompPoly> cands;
        std::set<std::string> seen;
        for (auto const &bc : bcomps) {
            for (auto const &[Mono, c] : rpoly.coeffs) {
                for (auto const &[bmono, bc2] : bc.poly.coeffs) {
                    auto q = divide_monomial(Mono, bmono);
                    if (!q)
                        continue;
                    comps::CompPoly qp;
                    qp.add(*q, RatFunc(1));
                    comps::CompPoly prod = qp * bc.poly;
                    if (prod.is_zero())
                        continue;
                    std::string key = prod.str();
                    if (seen.insert(key).second)
                        cands.push_back(std::move(prod));
                }
            }
            if (cands.size() > 4000)
                break;
        }
        if (cands.empty())
            return out;
        // linear system over all monomials touched
        std::map<comps::Monomial, size_t> rows;
        auto touch = [&](comps::CompPoly const &p) {
            for (auto const &[m, c] : p.coeffs)
                rows.emplace(m, rows.size());
        };
        touch(rpoly);
        for (auto const &c : cands)
            touch(c);
        comps::Matrix A(rows.size(), comps::Row(cands.size(), RatFunc(0)));
        std::vector<RatFunc> b(rows.size(), RatFunc(0));
        for (auto const &[m, c] : rpoly.coeffs)
            b[rows.at(m)] = c;
        for (size_t j = 0; j < cands.size(); ++j)
            for (auto const &[m, c] : cands[j].coeffs)
                A[rows.at(m)][j] = c;
        auto sol = comps::solve_linear(std::move(A), std::move(b));
        if (!sol)
            return out; // residue stands
    }
    out.in_span = true;
    out.residue = Expression::zero();
    return out;
}

ReduceOutcome reduce_mod_constraints(Expression const &x,
                                     std::vector<Expression> const &constraints,
                                     CanonicalStructure const &cs)
{
    std::vector<SolvableRule> rules;
    std::vector<Expression> span;
    for (auto const &c : constraints) {
        if (auto r = detect_solvable(c, cs))
            rules.push_back(std::move(*r));
        else
            span.push_back(c);
    }
    auto apply_rules = [&](Expression e) {
        for (int pass = 0; pass < 4; ++pass) {
            bool changed = false;
            for (auto const &r : rules) {
                if (contains_field(e, r.pattern.field)) {
                    e = substitute_field(e, r.pattern, r.rhs);
                    changed = true;
                }
            }
            if (!changed)
                break;
        }
        return e;
    };
    Expression residue = apply_rules(x);
    for (auto &s : span)
        s = apply_rules(s);
    if (canon::is_zero(residue)) {
        ReduceOutcome out;
        out.residue = Expression::zero();
        out.in_span = true;
        return out;
    }
    return span_reduce(residue, span);
}

} // namespace hjcas::vary
