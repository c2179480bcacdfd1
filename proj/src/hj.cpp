#include "hjcas/hj.hpp"
#include "hjcas/canon.hpp"
#include "hjcas/dsl.hpp"

#include <algorithm>
#include <cassert>
#include <functional>
#include <sstream>

namespace hjcas::hj {

namespace {

std::vector<Index> display_pattern(std::vector<Index> const &slots)
{
    // stable human-facing names per kind
    static char const *sp[] = {"a", "b", "c", "d"};
    static char const *in[] = {"i", "j", "k", "l"};
    static char const *st[] = {"mu", "nu", "al", "be"};
    std::map<IndexKind, int> cnt;
    std::vector<Index> out;
    for (auto const &s : slots) {
        int n = cnt[s.kind]++;
        char const *name = s.kind == IndexKind::Spatial ? sp[n]
                           : s.kind == IndexKind::Internal ? in[n]
                                                           : st[n];
        out.emplace_back(s.kind, s.pos, name);
    }
    return out;
}

std::vector<Index> renamed_pattern(std::vector<Index> const &slots,
                                   std::string const &prefix)
{
    std::vector<Index> out;
    for (size_t i = 0; i < slots.size(); ++i)
        out.emplace_back(slots[i].kind, slots[i].pos, prefix + std::to_string(i));
    return out;
}

std::vector<Index> dual(std::vector<Index> const &slots)
{
    std::vector<Index> out;
    for (auto const &s : slots)
        out.push_back(s.flipped());
    return out;
}

Expression atom_expr(std::string const &name, std::vector<Index> slots)
{
    return expr_atom(field_atom(name, std::move(slots)));
}

/// density with its free indices renamed to a fresh pattern
Expression with_frees(Expression const &density, std::vector<Index> const &from,
                      std::vector<Index> const &to)
{
    Expression e = density;
    // two-phase rename to avoid collisions
    for (size_t i = 0; i < from.size(); ++i)
        e = rename_free(e, from[i].name, "@tmp" + std::to_string(i));
    for (size_t i = 0; i < from.size(); ++i)
        e = rename_free(e, "@tmp" + std::to_string(i), to[i].name);
    return e;
}

int components_of(std::vector<Index> const &frees)
{
    int n = 1;
    for (auto const &f : frees)
        n *= range_of(f.kind);
    return n;
}

/// test-field atom smearing a constraint: slots dual to the density's frees
Expression smear(Hamiltonian const &h, std::string const &testname)
{
    if (h.frees.empty())
        return mul(atom_expr(testname, {}), h.density);
    return mul(atom_expr(testname, dual(h.frees)), h.density);
}

// assignments of a pattern in lexicographic order
std::vector<comps::Assignment> assignments_of(std::vector<Index> const &frees)
{
    std::vector<comps::Assignment> out;
    comps::Assignment cur(frees.size(), 0);
    std::function<void(size_t)> rec = [&](size_t k) {
        if (k == frees.size()) {
            out.push_back(cur);
            return;
        }
        for (int v = first_value(frees[k].kind);
             v < first_value(frees[k].kind) + range_of(frees[k].kind); ++v) {
            cur[k] = v;
            rec(k + 1);
        }
    };
    rec(0);
    return out;
}

} // namespace

std::vector<Expression> Pipeline::constraint_densities() const
{
    std::vector<Expression> out;
    for (auto const &h : hams)
        out.push_back(h.density);
    return out;
}

Expression Pipeline::eliminate(Expression const &x) const
{
    std::vector<vary::SolvableRule> rules;
    for (auto const &h : hams)
        if (auto r = vary::detect_solvable(h.density, cs))
            rules.push_back(std::move(*r));
    Expression e = x;
    for (int pass = 0; pass < 4; ++pass) {
        bool changed = false;
        for (auto const &r : rules)
            if (vary::contains_field(e, r.pattern.field)) {
                e = substitute_field(e, r.pattern, r.rhs);
                changed = true;
            }
        if (!changed)
            break;
    }
    return e;
}

void extract_momenta(Pipeline &p)
{
    auto const &m = p.mdl;
    for (auto const &f : m.fields) {
        vary::CanonicalPair pair;
        pair.config = f.name;
        pair.momentum = f.momentum;
        pair.config_slots = f.slots;
        p.cs.pairs.push_back(pair);
    }

    for (auto const &f : m.fields) {
        auto pattern = display_pattern(f.slots);
        Expression a_I =
            vary::velocity_coefficient(m.split_lagrangian, f.name, pattern);
        Expression mom = atom_expr(f.momentum, dual(pattern));
        Hamiltonian h;
        h.label = "phi[" + f.momentum + "]";
        h.density = sub(mom, a_I);
        h.frees = dual(pattern);
        h.origin = Origin::Primary;
        h.source_field = f.name;
        p.hams.push_back(std::move(h));
    }

    Expression V;
    for (auto const &t : m.split_lagrangian.terms) {
        bool dotted = false;
        for (auto const &a : t.atoms)
            if (a.dot)
                dotted = true;
        if (!dotted)
            V.terms.push_back(t);
    }
    p.H0 = negate(canon::canonicalize(V).expression);
}

namespace {

bool kernel_weakly_zero(Pipeline const &p, Expression const &K)
{
    if (K.is_empty())
        return true;
    auto outcome = vary::reduce_mod_constraints(K, p.constraint_densities(), p.cs);
    return outcome.residue.is_empty();
}

Expression family_kernel(Pipeline const &p, size_t i, size_t j)
{
    auto const &hi = p.hams[i];
    auto const &hj2 = p.hams[j];
    Expression a = with_frees(hi.density, hi.frees, renamed_pattern(hi.frees, "u"));
    Expression b = with_frees(hj2.density, hj2.frees, renamed_pattern(hj2.frees, "v"));
    return vary::poisson_kernel(a, b, p.cs);
}

} // namespace

void classify(Pipeline &p)
{
    size_t n = p.hams.size();
    std::vector<std::vector<bool>> nonzero(n, std::vector<bool>(n, false));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i; j < n; ++j) {
            Expression K = family_kernel(p, i, j);
            bool wz = kernel_weakly_zero(p, K);
            nonzero[i][j] = nonzero[j][i] = !wz;
        }
    p.involutive.clear();
    p.non_involutive.clear();
    for (size_t i = 0; i < n; ++i) {
        bool ni = false;
        for (size_t j = 0; j < n; ++j)
            if (nonzero[i][j])
                ni = true;
        p.hams[i].cls = ni ? Classification::NonInvolutive : Classification::Involutive;
        (ni ? p.non_involutive : p.involutive).push_back(i);
    }
}

namespace {

struct LabelBlockSpec {
    std::vector<Index> row_labels, col_labels;
};

// compact form candidates connecting row/col label indices pairwise per kind
std::vector<Expression> block_candidates(std::vector<Index> const &rows,
                                         std::vector<Index> const &cols)
{
    std::map<IndexKind, std::vector<Index>> rk, ck;
    for (auto const &r : rows)
        rk[r.kind].push_back(r);
    for (auto const &c : cols)
        ck[c.kind].push_back(c);
    if (rk.size() != ck.size())
        return {};
    std::vector<std::vector<Expression>> options;
    for (auto const &[kind, rlist] : rk) {
        auto it = ck.find(kind);
        if (it == ck.end() || it->second.size() != rlist.size() || rlist.size() != 1)
            return {};
        Index const &r = rlist[0];
        Index const &c = it->second[0];
        std::vector<Expression> opts;
        if (r.pos != c.pos) {
            Index upI = r.pos == IndexPos::Upper ? r : c;
            Index dnI = r.pos == IndexPos::Upper ? c : r;
            opts.push_back(expr_atom(delta_atom(upI, dnI)));
        } else {
            if (kind == IndexKind::Spatial) {
                opts.push_back(expr_atom(eps2_atom(r.pos, r.name, c.name)));
                opts.push_back(expr_atom(metric_atom(r, c)));
            } else if (kind == IndexKind::Internal) {
                opts.push_back(expr_atom(metric_atom(r, c)));
            } else
                return {};
        }
        options.push_back(std::move(opts));
    }
    std::vector<Expression> cands = {expr_const(RatFunc(1))};
    for (auto const &opts : options) {
        std::vector<Expression> next;
        for (auto const &c : cands)
            for (auto const &o : opts)
                next.push_back(mul(c, o));
        cands = std::move(next);
    }
    return cands;
}

// fit entries[(rowassign),(colassign)] = sum_j x_j * cand_j(components)
std::optional<Expression> fit_block(std::vector<Index> const &rows,
                                    std::vector<Index> const &cols,
                                    std::function<RatFunc(comps::Assignment const &,
                                                          comps::Assignment const &)>
                                        entry)
{
    auto cands = block_candidates(rows, cols);
    if (cands.empty())
        return std::nullopt;
    // component tables of candidates, keyed by (row assign, col assign)
    std::vector<Index> all = rows;
    all.insert(all.end(), cols.begin(), cols.end());
    FreeSignature sig;
    for (auto const &ix : all)
        sig.push_back({ix.name, ix.kind, ix.pos});
    std::sort(sig.begin(), sig.end());
    // positions of row/col labels in the sorted signature
    std::vector<size_t> rpos, cpos;
    for (auto const &r : rows)
        for (size_t k = 0; k < sig.size(); ++k)
            if (sig[k].name == r.name)
                rpos.push_back(k);
    for (auto const &c : cols)
        for (size_t k = 0; k < sig.size(); ++k)
            if (sig[k].name == c.name)
                cpos.push_back(k);

    auto rassigns = assignments_of(rows);
    auto cassigns = assignments_of(cols);
    size_t nr = rassigns.size(), nc = cassigns.size();
    comps::Matrix A(nr * nc, comps::Row(cands.size(), RatFunc(0)));
    std::vector<RatFunc> b(nr * nc, RatFunc(0));
    std::vector<comps::ComponentMap> cmaps;
    for (auto const &c : cands)
        cmaps.push_back(comps::enumerate_components(c));
    for (size_t r = 0; r < nr; ++r)
        for (size_t c = 0; c < nc; ++c) {
            b[r * nc + c] = entry(rassigns[r], cassigns[c]);
            comps::Assignment full(sig.size(), 0);
            for (size_t k = 0; k < rpos.size(); ++k)
                full[rpos[k]] = rassigns[r][k];
            for (size_t k = 0; k < cpos.size(); ++k)
                full[cpos[k]] = cassigns[c][k];
            for (size_t j = 0; j < cands.size(); ++j) {
                auto it = cmaps[j].find(full);
                RatFunc v(0);
                if (it != cmaps[j].end() && !it->second.is_zero()) {
                    if (it->second.coeffs.size() != 1 ||
                        !it->second.coeffs.begin()->first.empty())
                        return std::nullopt;
                    v = it->second.coeffs.begin()->second;
                }
                A[r * nc + c][j] = v;
            }
        }
    auto sol = comps::solve_linear(std::move(A), std::move(b));
    if (!sol)
        return std::nullopt;
    Expression form;
    for (size_t j = 0; j < cands.size(); ++j)
        if (!(*sol)[j].is_zero())
            form = add(form, scale(cands[j], (*sol)[j]));
    return form;
}

} // namespace

void assemble_and_invert(Pipeline &p)
{
    auto &C = p.C;
    C = BracketMatrix{};
    std::vector<size_t> const &ni = p.non_involutive;
    if (ni.empty())
        return;

    // basis
    std::vector<size_t> offset(ni.size());
    size_t total = 0;
    for (size_t k = 0; k < ni.size(); ++k) {
        offset[k] = total;
        auto asg = assignments_of(p.hams[ni[k]].frees);
        for (auto const &a : asg)
            C.basis.push_back({ni[k], a});
        total += asg.size();
    }
    C.entries.assign(total, comps::Row(total, RatFunc(0)));

    // family kernels, enumerated
    struct FamKernel {
        Expression K;
        comps::ComponentMap comp;
        FreeSignature sig;
    };
    std::vector<std::vector<FamKernel>> fk(ni.size(), std::vector<FamKernel>(ni.size()));
    for (size_t I = 0; I < ni.size(); ++I)
        for (size_t J = 0; J < ni.size(); ++J) {
            FamKernel fkk;
            fkk.K = family_kernel(p, ni[I], ni[J]);
            if (!fkk.K.is_empty()) {
                for (auto const &t : fkk.K.terms) {
                    for (auto const &a : t.atoms) {
                        if (a.type == AtomType::Field)
                            throw pipeline_error(
                                "unsupported form: field-dependent bracket of "
                                "non-involutive Hamiltonians");
                        if (a.type == AtomType::Dirac && !a.deriv.empty())
                            throw pipeline_error(
                                "unsupported form: non-ultralocal bracket of "
                                "non-involutive Hamiltonians");
                    }
                }
                fkk.comp = comps::enumerate_components(fkk.K, &fkk.sig);
            }
            fk[I][J] = std::move(fkk);
        }

    // fill entries
    for (size_t I = 0; I < ni.size(); ++I) {
        auto upat = renamed_pattern(p.hams[ni[I]].frees, "u");
        auto rassigns = assignments_of(p.hams[ni[I]].frees);
        for (size_t J = 0; J < ni.size(); ++J) {
            auto vpat = renamed_pattern(p.hams[ni[J]].frees, "v");
            auto cassigns = assignments_of(p.hams[ni[J]].frees);
            auto const &fkk = fk[I][J];
            if (fkk.K.is_empty())
                continue;
            // locate label positions in the sorted signature
            std::vector<size_t> up, vp;
            for (auto const &u : upat)
                for (size_t k = 0; k < fkk.sig.size(); ++k)
                    if (fkk.sig[k].name == u.name)
                        up.push_back(k);
            for (auto const &v : vpat)
                for (size_t k = 0; k < fkk.sig.size(); ++k)
                    if (fkk.sig[k].name == v.name)
                        vp.push_back(k);
            for (size_t r = 0; r < rassigns.size(); ++r)
                for (size_t c = 0; c < cassigns.size(); ++c) {
                    comps::Assignment full(fkk.sig.size(), 0);
                    for (size_t k = 0; k < up.size(); ++k)
                        full[up[k]] = rassigns[r][k];
                    for (size_t k = 0; k < vp.size(); ++k)
                        full[vp[k]] = cassigns[c][k];
                    auto it = fkk.comp.find(full);
                    if (it == fkk.comp.end() || it->second.is_zero())
                        continue;
                    auto const &poly = it->second.coeffs;
                    if (poly.size() != 1 || poly.begin()->first.size() != 1 ||
                        poly.begin()->first[0].text.substr(0, 6) != "@dirac")
                        throw pipeline_error("unsupported bracket-matrix entry form");
                    C.entries[offset[I] + r][offset[J] + c] = poly.begin()->second;
                }
        }
    }

    std::vector<RatFunc> nullvec;
    auto inv = comps::invert(C.entries, &nullvec);
    if (!inv) {
        std::string msg = "singular non-involutive bracket matrix; a further "
                          "involutive split is required (null vector:";
        for (auto const &v : nullvec)
            msg += " " + v.str();
        msg += ")";
        throw pipeline_error(msg);
    }
    C.inverse = *inv;

    // compact re-display of C and its inverse
    C.all_compact = true;
    for (size_t I = 0; I < ni.size(); ++I)
        for (size_t J = 0; J < ni.size(); ++J) {
            auto upat = renamed_pattern(p.hams[ni[I]].frees, "u");
            auto vpat = renamed_pattern(p.hams[ni[J]].frees, "v");
            auto rassigns = assignments_of(p.hams[ni[I]].frees);
            auto cassigns = assignments_of(p.hams[ni[J]].frees);
            auto locate = [&](comps::Assignment const &ra, comps::Assignment const &ca,
                              comps::Matrix const &M) {
                size_t r = std::find(rassigns.begin(), rassigns.end(), ra) -
                           rassigns.begin();
                size_t c = std::find(cassigns.begin(), cassigns.end(), ca) -
                           cassigns.begin();
                return M[offset[I] + r][offset[J] + c];
            };
            BracketMatrix::Block blk{I, J, Expression::zero(), false};
            if (auto f = fit_block(upat, vpat,
                                   [&](auto const &ra, auto const &ca) {
                                       return locate(ra, ca, C.entries);
                                   })) {
                blk.form = *f;
                blk.compact = true;
            } else
                C.all_compact = false;
            C.blocks.push_back(blk);

            BracketMatrix::Block iblk{I, J, Expression::zero(), false};
            if (auto f = fit_block(dual(upat), dual(vpat),
                                   [&](auto const &ra, auto const &ca) {
                                       return locate(ra, ca, C.inverse);
                                   })) {
                iblk.form = *f;
                iblk.compact = true;
            } else
                C.all_compact = false;
            C.inv_blocks.push_back(iblk);
        }
}

namespace {

Expression inv_block_form(Pipeline const &p, size_t I, size_t J)
{
    size_t n = p.non_involutive.size();
    auto const &blk = p.C.inv_blocks[I * n + J];
    if (!blk.compact)
        throw pipeline_error("no compact form for an inverse bracket-matrix block");
    return blk.form;
}

} // namespace

Expression generalized_kernel(Pipeline const &p, Expression const &f,
                              Expression const &g)
{
    Expression K = vary::poisson_kernel(f, g, p.cs);
    auto const &ni = p.non_involutive;
    for (size_t I = 0; I < ni.size(); ++I) {
        auto const &hI = p.hams[ni[I]];
        auto upat = renamed_pattern(hI.frees, "u");
        Expression dI = with_frees(hI.density, hI.frees, upat);
        Expression KfI = vary::poisson_kernel(f, dI, p.cs);
        if (KfI.is_empty())
            continue;
        for (size_t J = 0; J < ni.size(); ++J) {
            auto const &hJ = p.hams[ni[J]];
            auto vpat = renamed_pattern(hJ.frees, "v");
            Expression block = inv_block_form(p, I, J);
            if (block.is_empty())
                continue;
            Expression dJ = with_frees(hJ.density, hJ.frees, vpat);
            Expression KJg = vary::poisson_kernel(dJ, g, p.cs);
            if (KJg.is_empty())
                continue;
            K = sub(K, vary::kernel_compose(KfI, block, KJg));
        }
    }
    return K;
}

Expression generalized_smeared(Pipeline const &p, Expression const &F,
                               Expression const &G)
{
    Expression B = vary::poisson_smeared(F, G, p.cs);
    auto const &ni = p.non_involutive;
    for (size_t I = 0; I < ni.size(); ++I) {
        auto const &hI = p.hams[ni[I]];
        auto upat = renamed_pattern(hI.frees, "u");
        Expression dI = with_frees(hI.density, hI.frees, upat);
        Expression FI = vary::poisson_smeared_local(F, dI, p.cs);
        if (FI.is_empty())
            continue;
        for (size_t J = 0; J < ni.size(); ++J) {
            auto const &hJ = p.hams[ni[J]];
            auto vpat = renamed_pattern(hJ.frees, "v");
            Expression block = inv_block_form(p, I, J);
            if (block.is_empty())
                continue;
            Expression dJ = with_frees(hJ.density, hJ.frees, vpat);
            Expression GJ = vary::poisson_smeared_local(G, dJ, p.cs);
            if (GJ.is_empty())
                continue;
            B = add(B, mul(mul(FI, block), GJ));
        }
    }
    return B;
}

namespace {

// weak residue of {h[test], H'}*: stripped, eliminated, span-reduced against
// the involutive densities
struct IntegrabilityResidue {
    Expression reduced;     // eliminated but not span-reduced
    Expression residue;     // after span reduction
};

IntegrabilityResidue h_prime_residue(Pipeline const &p, size_t h,
                                     std::string const &testname)
{
    auto const &ham = p.hams[h];
    Expression F = smear(ham, testname);
    Expression B = generalized_smeared(p, F, p.H0);
    B = vary::strip_test_field(B, testname);
    Expression red = p.eliminate(B);
    std::vector<Expression> span;
    for (size_t k : p.involutive) {
        Expression d = p.eliminate(p.hams[k].density);
        if (!d.is_empty())
            span.push_back(d);
    }
    IntegrabilityResidue out;
    out.reduced = canon::canonicalize(red).expression;
    out.residue = vary::span_reduce(out.reduced, span).residue;
    return out;
}

bool pairwise_weakly_zero(Pipeline const &p, size_t i, size_t j)
{
    Expression Fi = smear(p.hams[i], "tA");
    Expression Fj = smear(p.hams[j], "tB");
    Expression B = generalized_smeared(p, Fi, Fj);
    B = vary::strip_test_field(B, "tB");
    Expression red = p.eliminate(B);
    std::vector<Expression> span;
    for (size_t k : p.involutive) {
        Expression d = p.eliminate(p.hams[k].density);
        if (!d.is_empty())
            span.push_back(d);
    }
    return vary::span_reduce(red, span).residue.is_empty();
}

} // namespace

void integrability_loop(Pipeline &p, Options const &opt)
{
    p.passes = 0;
    p.converged = false;
    while (p.passes < opt.max_iterations) {
        ++p.passes;
        bool added = false;
        std::vector<size_t> snapshot = p.involutive;
        for (size_t h : snapshot) {
            auto res = h_prime_residue(p, h, "tN");
            if (res.residue.is_empty())
                continue;
            // new Hamiltonian: extract the density against the test field
            auto const &src = p.hams[h];
            std::vector<Index> tslots = dual(src.frees);
            Expression density =
                vary::functional_derivative(res.residue, "tN", tslots);
            auto [norm, factor] = model::normalize_content(density);
            Hamiltonian nh;
            int count = 1;
            for (auto const &x : p.hams)
                if (x.origin == Origin::Integrability)
                    ++count;
            nh.label = "tau" + std::to_string(count);
            nh.density = norm;
            nh.normalization = factor;
            nh.frees = src.frees;
            nh.origin = Origin::Integrability;
            nh.cls = Classification::Involutive;
            p.hams.push_back(nh);
            p.involutive.push_back(p.hams.size() - 1);
            added = true;
        }
        if (!added) {
            p.converged = true;
            break;
        }
    }
    if (!p.converged) {
        std::string open;
        for (size_t h : p.involutive) {
            auto res = h_prime_residue(p, h, "tN");
            if (!res.residue.is_empty())
                open += " " + p.hams[h].label;
            if (open.size() > 200)
                break;
        }
        throw pipeline_error("integrability did not converge within " +
                             std::to_string(opt.max_iterations) +
                             " iterations; open residues on:" + open);
    }
    // re-classification of the full involutive set under the starred bracket
    for (size_t i : p.involutive)
        for (size_t j : p.involutive) {
            if (j < i)
                continue;
            if (!pairwise_weakly_zero(p, i, j))
                throw pipeline_error(
                    "Hamiltonian " + p.hams[i].label + " is not involutive against " +
                    p.hams[j].label +
                    " under the generalized bracket; a further involutive split is "
                    "out of scope");
        }
    // evolution-parameter names
    int nprim = 0, nsec = 0;
    for (size_t i : p.involutive) {
        auto &h = p.hams[i];
        if (h.origin == Origin::Primary)
            h.parameter = "dlam" + std::to_string(++nprim);
        else
            h.parameter = "dUps" + std::to_string(++nsec);
    }
}

void constraint_algebra(Pipeline &p)
{
    p.algebra.clear();
    // structure basis: involutive densities that survive elimination
    std::vector<size_t> basis_idx;
    std::vector<Expression> basis;
    for (size_t k : p.involutive) {
        Expression d = p.eliminate(p.hams[k].density);
        if (!d.is_empty()) {
            basis_idx.push_back(k);
            basis.push_back(canon::canonicalize(d).expression);
        }
    }

    for (size_t a = 0; a < p.involutive.size(); ++a)
        for (size_t b = a; b < p.involutive.size(); ++b) {
            size_t i = p.involutive[a], j = p.involutive[b];
            AlgebraEntry e;
            e.h1 = i;
            e.h2 = j;
            e.test1 = "tA";
            e.test2 = "tB";
            Expression Fi = smear(p.hams[i], e.test1);
            Expression Fj = smear(p.hams[j], e.test2);
            Expression B = generalized_smeared(p, Fi, Fj);
            B = vary::strip_test_field(B, e.test2);
            e.bracket = canon::canonicalize(p.eliminate(B)).expression;
            if (e.bracket.is_empty()) {
                e.closed = true;
                e.residue = Expression::zero();
                p.algebra.push_back(std::move(e));
                continue;
            }
            // symbolic structure-function candidates
            std::vector<Expression> cands;
            std::vector<std::pair<size_t, Expression>> cand_struct;
            for (size_t k = 0; k < basis.size(); ++k) {
                auto const &hk = p.hams[basis_idx[k]];
                auto const &hi = p.hams[i];
                auto const &hj2 = p.hams[j];
                bool all1int = hk.frees.size() == 1 &&
                               hk.frees[0].kind == IndexKind::Internal &&
                               hi.frees.size() == 1 && hj2.frees.size() == 1 &&
                               hi.frees[0].kind == IndexKind::Internal &&
                               hj2.frees[0].kind == IndexKind::Internal;
                bool all0 = hk.frees.empty() && hi.frees.empty() && hj2.frees.empty();
                Expression cand;
                if (all1int) {
                    Expression dens =
                        with_frees(basis[k], hk.frees,
                                   {Index(IndexKind::Internal, hk.frees[0].pos, "x0")});
                    Expression raise =
                        hk.frees[0].pos == IndexPos::Lower
                            ? expr_atom(metric_atom(up(IndexKind::Internal, "x0"),
                                                    up(IndexKind::Internal, "x3")))
                            : expr_atom(metric_atom(dn(IndexKind::Internal, "x0"),
                                                    dn(IndexKind::Internal, "x3")));
                    Expression eps = expr_atom(
                        eps3int_atom(IndexPos::Lower, "x3", "x1", "x2"));
                    Expression t1 =
                        atom_expr(e.test1, {up(IndexKind::Internal, "x1")});
                    Expression t2 =
                        atom_expr(e.test2, {up(IndexKind::Internal, "x2")});
                    cand = mul(mul(mul(mul(eps, t1), t2), raise), dens);
                } else if (all0) {
                    cand = mul(mul(atom_expr(e.test1, {}), atom_expr(e.test2, {})),
                               basis[k]);
                } else
                    continue;
                cands.push_back(cand);
                // structure function displayed without the density factor
                Expression fdisp;
                if (all1int) {
                    Expression eps = expr_atom(
                        eps3int_atom(IndexPos::Lower, "x3", "x1", "x2"));
                    fdisp = mul(mul(eps, atom_expr(e.test1,
                                                   {up(IndexKind::Internal, "x1")})),
                                atom_expr(e.test2, {up(IndexKind::Internal, "x2")}));
                } else
                    fdisp = mul(atom_expr(e.test1, {}), atom_expr(e.test2, {}));
                cand_struct.emplace_back(basis_idx[k], fdisp);
            }
            bool done = false;
            if (!cands.empty()) {
                if (auto sol = comps::match_combination(e.bracket, cands)) {
                    for (size_t k = 0; k < cands.size(); ++k)
                        if (!(*sol)[k].is_zero())
                            e.structure.emplace_back(
                                cand_struct[k].first,
                                scale(cand_struct[k].second, (*sol)[k]));
                    e.closed = true;
                    e.residue = Expression::zero();
                    done = true;
                }
            }
            if (!done) {
                auto out = vary::span_reduce(e.bracket, basis);
                e.closed = out.in_span;
                e.residue = out.residue;
            }
            p.algebra.push_back(std::move(e));
        }
}

void dof_count(Pipeline &p)
{
    int n_phase = 2 * p.mdl.config_components();
    int n_ni = 0, n_inv = 0;
    for (size_t k : p.non_involutive)
        n_ni += components_of(p.hams[k].frees);
    for (size_t k : p.involutive)
        n_inv += components_of(p.hams[k].frees);
    int num = n_phase - n_ni - 2 * n_inv;
    if (num < 0 || num % 2)
        throw pipeline_error("inconsistent degree-of-freedom count: (" +
                             std::to_string(n_phase) + " - " + std::to_string(n_ni) +
                             " - 2*" + std::to_string(n_inv) + ") is not an even "
                             "nonnegative number");
    p.dof_standard = num / 2;
    int dynamical = 0;
    for (auto const &ce : p.char_eqs)
        if (!ce.multiplier) {
            auto const *f = p.mdl.field(ce.field);
            dynamical += f ? f->components() : 0;
        }
    p.dof_paper = dynamical - n_inv;
}

void characteristic_equations(Pipeline &p)
{
    p.char_eqs.clear();
    for (auto const &f : p.mdl.fields) {
        CharacteristicEquation ce;
        ce.field = f.name;
        ce.frees = display_pattern(f.slots);
        Expression fat = atom_expr(f.name, ce.frees);
        Expression Kdt = generalized_kernel(p, fat, p.H0);
        ce.dt_part =
            canon::canonicalize(p.eliminate(vary::kernel_integrate_y(Kdt))).expression;
        bool only_primary = true;
        for (size_t k : p.involutive) {
            auto const &h = p.hams[k];
            Expression G = smear(h, h.parameter);
            Expression Kp = generalized_kernel(p, fat, G);
            Expression coeff = canon::canonicalize(
                                   p.eliminate(vary::kernel_integrate_y(Kp)))
                                   .expression;
            if (!coeff.is_empty()) {
                ce.parameter_parts.emplace_back(h.parameter, coeff);
                if (h.origin == Origin::Integrability)
                    only_primary = false;
            }
        }
        ce.multiplier = ce.dt_part.is_empty() && only_primary;
        p.char_eqs.push_back(std::move(ce));
    }
}

std::vector<std::tuple<std::string, std::string, Expression>>
gauge_transformations(Pipeline const &p)
{
    std::vector<std::tuple<std::string, std::string, Expression>> out;
    for (auto const &ce : p.char_eqs)
        for (auto const &[param, coeff] : ce.parameter_parts)
            out.emplace_back(ce.field, param, coeff);
    return out;
}

void bracket_table(Pipeline &p)
{
    p.table.clear();
    std::vector<std::pair<std::string, std::vector<Index>>> atoms;
    for (auto const &f : p.mdl.fields) {
        atoms.emplace_back(f.name, display_pattern(f.slots));
        atoms.emplace_back(f.momentum, dual(display_pattern(f.slots)));
    }
    auto primed = [](std::vector<Index> v) {
        for (auto &ix : v)
            ix.name += "2";
        return v;
    };
    for (size_t i = 0; i < atoms.size(); ++i)
        for (size_t j = i; j < atoms.size(); ++j) {
            TableEntry te;
            te.f = atoms[i].first;
            te.g = atoms[j].first;
            Expression fa = atom_expr(atoms[i].first, atoms[i].second);
            Expression ga = atom_expr(atoms[j].first, primed(atoms[j].second));
            te.kernel = generalized_kernel(p, fa, ga);
            p.table.push_back(std::move(te));
        }
}

Pipeline run(model::Model const &m, Options const &opt)
{
    canon::ScopedMetric mg(m.metric);
    Pipeline p;
    p.mdl = m;
    extract_momenta(p);
    classify(p);
    assemble_and_invert(p);
    integrability_loop(p, opt);
    constraint_algebra(p);
    characteristic_equations(p);
    dof_count(p);
    if (opt.build_table)
        bracket_table(p);
    return p;
}

} // namespace hjcas::hj
