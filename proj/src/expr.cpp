#include "hjcas/expr.hpp"
#include "hjcas/canon.hpp"

#include <algorithm>
#include <cassert>

namespace hjcas {

std::string to_string(IndexKind k)
{
    switch (k) {
    case IndexKind::Spacetime: return "spacetime";
    case IndexKind::Spatial: return "spatial";
    case IndexKind::Internal: return "internal";
    }
    return "?";
}

Atom field_atom(std::string name, std::vector<Index> slots, bool variation)
{
    Atom a;
    a.type = AtomType::Field;
    a.field = std::move(name);
    a.variation = variation;
    a.slots = std::move(slots);
    return a;
}

Atom delta_atom(Index upper, Index lower)
{
    if (upper.pos != IndexPos::Upper || lower.pos != IndexPos::Lower)
        throw structural_error("delta_atom: slots must be [upper, lower]");
    if (upper.kind != lower.kind)
        throw structural_error("delta_atom: mixed kinds");
    Atom a;
    a.type = AtomType::Delta;
    a.slots = {std::move(upper), std::move(lower)};
    return a;
}

Atom metric_atom(Index i, Index j)
{
    if (i.pos != j.pos)
        throw structural_error("metric_atom: slots must share position");
    if (i.kind != j.kind || i.kind == IndexKind::Spacetime)
        throw structural_error("metric_atom: internal or spatial indices only");
    Atom a;
    a.type = AtomType::Metric;
    a.slots = {std::move(i), std::move(j)};
    return a;
}

Atom eps2_atom(IndexPos pos, std::string x, std::string y)
{
    Atom a;
    a.type = AtomType::Eps2;
    a.slots = {Index(IndexKind::Spatial, pos, std::move(x)),
               Index(IndexKind::Spatial, pos, std::move(y))};
    return a;
}

Atom eps3int_atom(IndexPos pos, std::string i, std::string j, std::string k)
{
    Atom a;
    a.type = AtomType::Eps3Int;
    a.slots = {Index(IndexKind::Internal, pos, std::move(i)),
               Index(IndexKind::Internal, pos, std::move(j)),
               Index(IndexKind::Internal, pos, std::move(k))};
    return a;
}

Atom eps3st_atom(IndexPos pos, std::string m, std::string x, std::string n)
{
    Atom a;
    a.type = AtomType::Eps3St;
    a.slots = {Index(IndexKind::Spacetime, pos, std::move(m)),
               Index(IndexKind::Spacetime, pos, std::move(x)),
               Index(IndexKind::Spacetime, pos, std::move(n))};
    return a;
}

Atom dirac_atom()
{
    Atom a;
    a.type = AtomType::Dirac;
    return a;
}

std::vector<Index const *> index_occurrences(Term const &t)
{
    std::vector<Index const *> out;
    for (auto const &a : t.atoms) {
        for (auto const &d : a.deriv)
            out.push_back(&d);
        for (auto const &s : a.slots)
            out.push_back(&s);
    }
    return out;
}

std::vector<Index *> index_occurrences(Term &t)
{
    std::vector<Index *> out;
    for (auto &a : t.atoms) {
        for (auto &d : a.deriv)
            out.push_back(&d);
        for (auto &s : a.slots)
            out.push_back(&s);
    }
    return out;
}

FreeSignature term_free_indices(Term const &t)
{
    std::map<std::string, std::vector<Index const *>> by_name;
    for (auto const *i : index_occurrences(t))
        by_name[i->name].push_back(i);
    FreeSignature sig;
    for (auto const &[name, occ] : by_name) {
        if (occ.size() == 1) {
            sig.push_back({name, occ[0]->kind, occ[0]->pos});
        } else if (occ.size() == 2) {
            if (occ[0]->kind != occ[1]->kind)
                throw structural_error("index '" + name + "' contracted across kinds");
            if (occ[0]->pos == occ[1]->pos)
                throw structural_error("index '" + name +
                                       "' repeated with equal position");
        } else {
            throw structural_error("index '" + name + "' appears " +
                                   std::to_string(occ.size()) + " times");
        }
    }
    std::sort(sig.begin(), sig.end());
    return sig;
}

std::set<std::string> term_dummy_names(Term const &t)
{
    std::map<std::string, int> count;
    for (auto const *i : index_occurrences(t))
        count[i->name]++;
    std::set<std::string> out;
    for (auto const &[n, c] : count)
        if (c == 2)
            out.insert(n);
    return out;
}

std::set<std::string> term_index_names(Term const &t)
{
    std::set<std::string> out;
    for (auto const *i : index_occurrences(t))
        out.insert(i->name);
    return out;
}

int term_form_degree(Term const &t)
{
    int d = 0;
    for (auto const &a : t.atoms)
        d += a.form_degree();
    return d;
}

FreeSignature free_indices(Expression const &x)
{
    if (x.terms.empty())
        return {};
    FreeSignature sig = term_free_indices(x.terms.front());
    int deg = term_form_degree(x.terms.front());
    for (size_t i = 1; i < x.terms.size(); ++i) {
        if (term_free_indices(x.terms[i]) != sig)
            throw structural_error("free-index mismatch across terms: {" +
                                   signature_str(sig) + "} vs {" +
                                   signature_str(term_free_indices(x.terms[i])) + "}");
        if (term_form_degree(x.terms[i]) != deg)
            throw structural_error("form-degree mismatch across terms");
    }
    return sig;
}

std::string signature_str(FreeSignature const &sig)
{
    std::string s;
    for (auto const &f : sig) {
        if (!s.empty())
            s += ", ";
        s += (f.pos == IndexPos::Upper ? "^" : "_") + f.name + ":" + to_string(f.kind);
    }
    return s;
}

Expression expr_term(RatFunc coeff, std::vector<Atom> atoms)
{
    Expression e;
    e.terms.push_back(Term{std::move(coeff), std::move(atoms)});
    return canon::canonicalize(e).expression;
}

Expression expr_atom(Atom a) { return expr_term(RatFunc(1), {std::move(a)}); }

Expression expr_const(RatFunc c) { return expr_term(std::move(c), {}); }

std::string fresh_name(std::set<std::string> &used, std::string const &base)
{
    for (int i = 0;; ++i) {
        std::string cand = base + std::to_string(i);
        if (!used.count(cand)) {
            used.insert(cand);
            return cand;
        }
    }
}

Expression add(Expression const &a, Expression const &b)
{
    if (!a.is_empty() && !b.is_empty()) {
        FreeSignature sa = free_indices(a), sb = free_indices(b);
        if (sa != sb)
            throw structural_error("add: free-index mismatch: {" + signature_str(sa) +
                                   "} vs {" + signature_str(sb) + "}");
        int da = term_form_degree(a.terms.front());
        int db = term_form_degree(b.terms.front());
        if (da != db)
            throw structural_error("add: form-degree mismatch");
    }
    Expression r;
    r.terms = a.terms;
    r.terms.insert(r.terms.end(), b.terms.begin(), b.terms.end());
    return canon::canonicalize(r).expression;
}

Expression sub(Expression const &a, Expression const &b) { return add(a, negate(b)); }

Expression negate(Expression const &a)
{
    Expression r = a;
    for (auto &t : r.terms)
        t.coeff = -t.coeff;
    return r;
}

Expression scale(Expression const &a, RatFunc const &c)
{
    if (c.is_zero())
        return Expression::zero();
    Expression r = a;
    for (auto &t : r.terms)
        t.coeff = t.coeff * c;
    return canon::canonicalize(r).expression;
}

namespace {

// rename dummies of term `t` away from `reserved`
void refresh_dummies(Term &t, std::set<std::string> &reserved)
{
    auto dummies = term_dummy_names(t);
    std::map<std::string, std::string> ren;
    for (auto const &d : dummies) {
        if (reserved.count(d))
            ren[d] = fresh_name(reserved, "z");
        else
            reserved.insert(d);
    }
    if (ren.empty())
        return;
    for (auto *i : index_occurrences(t))
        if (auto it = ren.find(i->name); it != ren.end())
            i->name = it->second;
}

} // namespace

Expression refresh_dummies_away_from(Expression const &x,
                                     std::set<std::string> const &avoid)
{
    Expression r = x;
    for (auto &t : r.terms) {
        std::set<std::string> reserved = avoid;
        for (auto const &n : term_index_names(t))
            reserved.insert(n);
        std::map<std::string, std::string> ren;
        for (auto const &d : term_dummy_names(t))
            if (avoid.count(d))
                ren[d] = fresh_name(reserved, "z");
        for (auto *i : index_occurrences(t))
            if (auto it = ren.find(i->name); it != ren.end())
                i->name = it->second;
    }
    return r;
}

Expression mul(Expression const &a, Expression const &b)
{
    Expression r;
    for (auto const &ta : a.terms) {
        for (auto const &tb : b.terms) {
            // avoid dummy-name capture in both directions; shared free names
            // contract on purpose
            Term ta2 = ta;
            {
                std::set<std::string> reserved = term_index_names(tb);
                for (auto const &n : term_index_names(ta))
                    reserved.insert(n);
                auto dummies = term_dummy_names(ta2);
                std::map<std::string, std::string> ren;
                for (auto const &d : dummies)
                    if (term_index_names(tb).count(d))
                        ren[d] = fresh_name(reserved, "z");
                for (auto *i : index_occurrences(ta2))
                    if (auto it = ren.find(i->name); it != ren.end())
                        i->name = it->second;
            }
            Term tb2 = tb;
            {
                std::set<std::string> fixed = term_index_names(ta2);
                std::set<std::string> reserved = fixed;
                for (auto const &n : term_index_names(tb2))
                    reserved.insert(n);
                auto dummies = term_dummy_names(tb2);
                std::map<std::string, std::string> ren;
                for (auto const &d : dummies)
                    if (fixed.count(d))
                        ren[d] = fresh_name(reserved, "z");
                for (auto *i : index_occurrences(tb2))
                    if (auto it = ren.find(i->name); it != ren.end())
                        i->name = it->second;
            }
            Term t;
            t.coeff = ta2.coeff * tb2.coeff;
            t.atoms = ta2.atoms;
            t.atoms.insert(t.atoms.end(), tb2.atoms.begin(), tb2.atoms.end());
            r.terms.push_back(std::move(t));
        }
    }
    return canon::canonicalize(r).expression;
}

Expression derivative(Expression const &x, Index const &idx)
{
    if (idx.pos != IndexPos::Lower)
        throw structural_error("derivative index must be lower");
    if (idx.kind == IndexKind::Internal)
        throw structural_error("derivative index must be spatial or spacetime");
    Expression r;
    for (auto const &t : x.terms) {
        for (size_t k = 0; k < t.atoms.size(); ++k) {
            if (t.atoms[k].type != AtomType::Field && t.atoms[k].type != AtomType::Dirac)
                continue;
            Term nt = t;
            nt.atoms[k].deriv.push_back(idx);
            r.terms.push_back(std::move(nt));
        }
    }
    return canon::canonicalize(r).expression;
}

Expression divergence(Expression const &x, std::string const &name)
{
    Expression r;
    for (auto const &t : x.terms) {
        // find the free occurrence of `name` (must be upper)
        Term base = t;
        Index const *occ = nullptr;
        for (auto const *i : index_occurrences(base))
            if (i->name == name)
                occ = i;
        if (!occ || occ->pos != IndexPos::Upper)
            throw structural_error("divergence: no free upper index '" + name + "'");
        Index didx(occ->kind, IndexPos::Lower, name);
        for (size_t k = 0; k < base.atoms.size(); ++k) {
            if (base.atoms[k].type != AtomType::Field && base.atoms[k].type != AtomType::Dirac)
                continue;
            Term nt = base;
            nt.atoms[k].deriv.push_back(didx);
            r.terms.push_back(std::move(nt));
        }
    }
    return canon::canonicalize(r).expression;
}

Expression rename_free(Expression const &x, std::string const &from, std::string const &to)
{
    Expression r = x;
    for (auto &t : r.terms) {
        if (term_index_names(t).count(to))
            throw structural_error("rename_free: name '" + to + "' already used");
        for (auto *i : index_occurrences(t))
            if (i->name == from)
                i->name = to;
    }
    return canon::canonicalize(r).expression;
}

Expression substitute_field(Expression const &x, FieldPattern const &pat,
                            Expression const &replacement)
{
    // validate replacement signature = pattern slot names/kinds/positions
    if (!replacement.is_empty()) {
        FreeSignature want;
        for (auto const &s : pat.slots)
            want.push_back({s.name, s.kind, s.pos});
        std::sort(want.begin(), want.end());
        FreeSignature got = free_indices(replacement);
        if (got != want)
            throw structural_error("substitute_field: replacement signature {" +
                                   signature_str(got) + "} does not match pattern {" +
                                   signature_str(want) + "}");
    }

    Expression out;
    for (auto const &t : x.terms) {
        // factor list: each entry is an Expression (single atoms stay atoms)
        std::vector<Expression> factors;
        bool any = false;
        for (auto const &a : t.atoms) {
            bool match = a.type == AtomType::Field && a.field == pat.field &&
                         a.variation == pat.variation;
            if (match && a.slots.size() != pat.slots.size())
                throw structural_error("substitute_field: slot arity mismatch on '" +
                                       pat.field + "'");
            if (!match) {
                Expression e;
                e.terms.push_back(Term{RatFunc(1), {a}});
                factors.push_back(std::move(e));
                continue;
            }
            if (a.dot)
                throw structural_error("substitute_field: dotted occurrence of '" +
                                       pat.field + "'");
            any = true;
            // instantiate replacement: pattern slot names -> actual indices
            std::set<std::string> host_names = term_index_names(t);
            for (auto const &s : pat.slots)
                host_names.insert(s.name);
            Expression inst = refresh_dummies_away_from(replacement, host_names);
            std::set<std::string> taken = host_names;
            for (auto &tt : inst.terms)
                for (auto *i : index_occurrences(tt))
                    taken.insert(i->name);
            for (auto const &s : a.slots)
                taken.insert(s.name);
            // two-phase rename to avoid collisions
            std::map<std::string, std::string> tmp;
            for (size_t k = 0; k < pat.slots.size(); ++k)
                tmp[pat.slots[k].name] = fresh_name(taken, "w");
            for (auto &tt : inst.terms)
                for (auto *i : index_occurrences(tt))
                    if (auto it = tmp.find(i->name); it != tmp.end())
                        i->name = it->second;
            for (size_t k = 0; k < pat.slots.size(); ++k) {
                for (auto &tt : inst.terms)
                    for (auto *i : index_occurrences(tt)) {
                        if (i->name == tmp[pat.slots[k].name]) {
                            if (i->kind != a.slots[k].kind)
                                throw structural_error(
                                    "substitute_field: slot kind mismatch");
                            i->name = a.slots[k].name;
                        }
                    }
            }
            // apply the occurrence's derivative prefix
            for (auto const &d : a.deriv)
                inst = derivative(inst, d);
            factors.push_back(std::move(inst));
        }
        if (!any) {
            out.terms.push_back(t);
            continue;
        }
        Expression prod = expr_const(t.coeff);
        for (auto const &f : factors)
            prod = mul(prod, f);
        for (auto const &tt : prod.terms)
            out.terms.push_back(tt);
    }
    return canon::canonicalize(out).expression;
}

Expression substitute_lam(Expression const &x, Rat const &value)
{
    Expression r = x;
    for (auto &t : r.terms)
        t.coeff = t.coeff.subst_lam(value);
    return canon::canonicalize(r).expression;
}

} // namespace hjcas
