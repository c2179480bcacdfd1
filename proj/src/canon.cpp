#include "hjcas/canon.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <functional>

namespace hjcas::canon {

namespace {

thread_local InternalMetric g_metric = InternalMetric::Euclidean;

int metric_entry(int i, int j)
{
    if (i != j)
        return 0;
    if (g_metric == InternalMetric::Lorentzian && i == 0)
        return -1;
    return 1;
}

int det_eta() { return g_metric == InternalMetric::Lorentzian ? -1 : 1; }

} // namespace

InternalMetric ambient_metric() { return g_metric; }

ScopedMetric::ScopedMetric(InternalMetric m) : prev_(g_metric) { g_metric = m; }
ScopedMetric::~ScopedMetric() { g_metric = prev_; }

namespace {

char pos_char(IndexPos p) { return p == IndexPos::Upper ? '^' : '_'; }
char kind_char(IndexKind k)
{
    switch (k) {
    case IndexKind::Spacetime: return 't';
    case IndexKind::Spatial: return 's';
    case IndexKind::Internal: return 'n';
    }
    return '?';
}

void append_index(std::string &out, Index const &i)
{
    out += kind_char(i.kind);
    out += pos_char(i.pos);
    out += i.name;
    out += ',';
}

std::string atom_string(Atom const &a)
{
    std::string s;
    s += std::to_string((int)a.type);
    s += '/';
    s += a.field;
    s += a.variation ? "~v" : "";
    s += a.dot ? "~d" : "";
    s += ":D[";
    for (auto const &d : a.deriv)
        append_index(s, d);
    s += "]S[";
    for (auto const &sl : a.slots)
        append_index(s, sl);
    s += ']';
    return s;
}

// name-blind structural key used to group interchangeable atoms
std::string static_key(Atom const &a)
{
    std::string s;
    s += std::to_string((int)a.type);
    s += '/';
    s += a.field;
    s += a.variation ? "~v" : "";
    s += a.dot ? "~d" : "";
    s += ":d";
    s += std::to_string(a.deriv.size());
    s += ":S[";
    for (auto const &sl : a.slots) {
        s += kind_char(sl.kind);
        s += pos_char(sl.pos);
    }
    s += ']';
    return s;
}

// ---------------------------------------------------------------------------
// rewrite rules (one step); returns true + replacement terms when a rule fired
// ---------------------------------------------------------------------------

struct Rewritten {
    bool fired = false;
    std::vector<Term> out;
};

int count_name(Term const &t, std::string const &name)
{
    int c = 0;
    for (auto const *i : index_occurrences(t))
        if (i->name == name)
            ++c;
    return c;
}

// replace the occurrence of `name` other than the one inside atom `skip`
void replace_partner(Term &t, size_t skip_atom, std::string const &name, Index const &to)
{
    for (size_t k = 0; k < t.atoms.size(); ++k) {
        if (k == skip_atom)
            continue;
        auto &a = t.atoms[k];
        for (auto &d : a.deriv)
            if (d.name == name) {
                d.name = to.name;
                return;
            }
        for (auto &s : a.slots)
            if (s.name == name) {
                s.name = to.name;
                return;
            }
    }
    throw structural_error("internal: partner index not found: " + name);
}

Rewritten try_delta(Term const &t)
{
    for (size_t k = 0; k < t.atoms.size(); ++k) {
        auto const &a = t.atoms[k];
        if (a.type != AtomType::Delta)
            continue;
        Index const &u = a.slots[0];
        Index const &l = a.slots[1];
        Term nt = t;
        if (u.name == l.name) { // trace
            nt.coeff = nt.coeff * RatFunc(Rat(range_of(u.kind)));
            nt.atoms.erase(nt.atoms.begin() + k);
            return {true, {nt}};
        }
        if (count_name(t, u.name) == 2) {
            replace_partner(nt, k, u.name, l);
            nt.atoms.erase(nt.atoms.begin() + k);
            return {true, {nt}};
        }
        if (count_name(t, l.name) == 2) {
            replace_partner(nt, k, l.name, u);
            nt.atoms.erase(nt.atoms.begin() + k);
            return {true, {nt}};
        }
    }
    return {};
}

Rewritten try_metric_pair(Term const &t)
{
    for (size_t k = 0; k < t.atoms.size(); ++k) {
        auto const &a = t.atoms[k];
        if (a.type != AtomType::Metric)
            continue;
        for (size_t m = k + 1; m < t.atoms.size(); ++m) {
            auto const &b = t.atoms[m];
            if (b.type != AtomType::Metric)
                continue;
            if (a.slots[0].pos == b.slots[0].pos)
                continue; // same position, no contraction
            // find shared name
            for (int sa = 0; sa < 2; ++sa)
                for (int sb = 0; sb < 2; ++sb) {
                    if (a.slots[sa].name != b.slots[sb].name)
                        continue;
                    Index other_a = a.slots[1 - sa];
                    Index other_b = b.slots[1 - sb];
                    Index up = other_a.pos == IndexPos::Upper ? other_a : other_b;
                    Index dnx = other_a.pos == IndexPos::Upper ? other_b : other_a;
                    Term nt = t;
                    // erase higher first
                    nt.atoms.erase(nt.atoms.begin() + m);
                    nt.atoms.erase(nt.atoms.begin() + k);
                    nt.atoms.push_back(delta_atom(up, dnx));
                    return {true, {nt}};
                }
        }
    }
    return {};
}

// build determinant expansion for an epsilon pair
std::vector<Term> eps_pair_det(Term const &t, size_t k, size_t m,
                               std::function<Atom(Index, Index)> entry,
                               RatFunc const &factor)
{
    auto const &A = t.atoms[k].slots;
    auto const &B = t.atoms[m].slots;
    int n = (int)A.size();
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i)
        perm[i] = i;
    std::vector<Term> out;
    do {
        int sgn = 1;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (perm[i] > perm[j])
                    sgn = -sgn;
        Term nt = t;
        // erase both atoms, higher index first
        nt.atoms.erase(nt.atoms.begin() + std::max(k, m));
        nt.atoms.erase(nt.atoms.begin() + std::min(k, m));
        for (int i = 0; i < n; ++i)
            nt.atoms.push_back(entry(A[i], B[perm[i]]));
        nt.coeff = nt.coeff * factor * RatFunc(Rat(sgn));
        out.push_back(std::move(nt));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

Rewritten try_eps_pairs(Term const &t)
{
    // spatial eps2: one upper + one lower in the same term
    for (size_t k = 0; k < t.atoms.size(); ++k) {
        if (t.atoms[k].type != AtomType::Eps2)
            continue;
        for (size_t m = 0; m < t.atoms.size(); ++m) {
            if (m == k || t.atoms[m].type != AtomType::Eps2)
                continue;
            if (t.atoms[k].slots[0].pos != IndexPos::Upper ||
                t.atoms[m].slots[0].pos != IndexPos::Lower)
                continue;
            // eps^{ab} eps_{cd} = delta^a_c delta^b_d - delta^a_d delta^b_c
            auto entry = [](Index upI, Index dnI) { return delta_atom(upI, dnI); };
            return {true, eps_pair_det(t, k, m, entry, RatFunc(1))};
        }
    }
    // internal eps3 pairs, any positions (metric enters for equal positions)
    for (size_t k = 0; k < t.atoms.size(); ++k) {
        if (t.atoms[k].type != AtomType::Eps3Int)
            continue;
        for (size_t m = k + 1; m < t.atoms.size(); ++m) {
            if (t.atoms[m].type != AtomType::Eps3Int)
                continue;
            IndexPos pk = t.atoms[k].slots[0].pos;
            IndexPos pm = t.atoms[m].slots[0].pos;
            if (pk != pm) {
                size_t ku = pk == IndexPos::Upper ? k : m;
                size_t kd = pk == IndexPos::Upper ? m : k;
                auto entry = [](Index upI, Index dnI) { return delta_atom(upI, dnI); };
                return {true, eps_pair_det(t, ku, kd, entry, RatFunc(1))};
            }
            // equal positions: entries are metric atoms, overall det(eta)
            auto entry = [](Index a, Index b) { return metric_atom(a, b); };
            return {true, eps_pair_det(t, k, m, entry, RatFunc(Rat(det_eta())))};
        }
    }
    // spacetime eps3: only mixed-position pairs reduce (no spacetime metric)
    for (size_t k = 0; k < t.atoms.size(); ++k) {
        if (t.atoms[k].type != AtomType::Eps3St)
            continue;
        for (size_t m = 0; m < t.atoms.size(); ++m) {
            if (m == k || t.atoms[m].type != AtomType::Eps3St)
                continue;
            if (t.atoms[k].slots[0].pos != IndexPos::Upper ||
                t.atoms[m].slots[0].pos != IndexPos::Lower)
                continue;
            auto entry = [](Index upI, Index dnI) { return delta_atom(upI, dnI); };
            return {true, eps_pair_det(t, k, m, entry, RatFunc(1))};
        }
    }
    return {};
}

Rewritten rewrite_step(Term const &t)
{
    if (t.coeff.is_zero())
        return {true, {}};
    if (auto r = try_delta(t); r.fired)
        return r;
    if (auto r = try_metric_pair(t); r.fired)
        return r;
    if (auto r = try_eps_pairs(t); r.fired)
        return r;
    return {};
}

// ---------------------------------------------------------------------------
// canonical labeling of an irreducible term
// ---------------------------------------------------------------------------

struct Labeled {
    std::string key; // canonical atom-structure string
    int sign = 1;
    Term term;       // atoms in canonical order with canonical dummy names
    bool zero = false;
};

// parity of reordering restricted to odd atoms
int grassmann_sign(std::vector<size_t> const &order, std::vector<int> const &degree)
{
    std::vector<size_t> odd_orig;
    for (size_t p : order)
        if (degree[p] == 1)
            odd_orig.push_back(p);
    int sgn = 1;
    for (size_t i = 0; i < odd_orig.size(); ++i)
        for (size_t j = i + 1; j < odd_orig.size(); ++j)
            if (odd_orig[i] > odd_orig[j])
                sgn = -sgn;
    return sgn;
}

int perm_parity(std::vector<int> const &p)
{
    int sgn = 1;
    for (size_t i = 0; i < p.size(); ++i)
        for (size_t j = i + 1; j < p.size(); ++j)
            if (p[i] > p[j])
                sgn = -sgn;
    return sgn;
}

Labeled label_term(Term const &t)
{
    size_t n = t.atoms.size();
    std::vector<int> degree(n);
    for (size_t i = 0; i < n; ++i)
        degree[i] = t.atoms[i].form_degree();

    auto dummies = term_dummy_names(t);
    std::set<std::string> free_names;
    for (auto const *ix : index_occurrences(t))
        if (!dummies.count(ix->name))
            free_names.insert(ix->name);

    // group atoms by static key
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i)
        order[i] = i;
    std::vector<std::string> skeys(n);
    for (size_t i = 0; i < n; ++i)
        skeys[i] = static_key(t.atoms[i]);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return skeys[a] < skeys[b]; });

    // runs of equal static keys
    std::vector<std::pair<size_t, size_t>> runs; // [begin,end) into order
    for (size_t i = 0; i < n;) {
        size_t j = i;
        while (j < n && skeys[order[j]] == skeys[order[i]])
            ++j;
        runs.emplace_back(i, j);
        i = j;
    }

    // per-atom slot/deriv ordering alternatives
    auto slot_orders = [&](Atom const &a) {
        std::vector<std::vector<int>> res;
        int m = (int)a.slots.size();
        if (a.antisymmetric_slots() || a.symmetric_slots()) {
            std::vector<int> p(m);
            for (int i = 0; i < m; ++i)
                p[i] = i;
            do
                res.push_back(p);
            while (std::next_permutation(p.begin(), p.end()));
        } else {
            std::vector<int> p(m);
            for (int i = 0; i < m; ++i)
                p[i] = i;
            res.push_back(p);
        }
        return res;
    };
    auto deriv_orders = [&](Atom const &a) {
        std::vector<std::vector<int>> res;
        std::vector<int> p(a.deriv.size());
        for (size_t i = 0; i < p.size(); ++i)
            p[i] = (int)i;
        do
            res.push_back(p);
        while (std::next_permutation(p.begin(), p.end()));
        return res;
    };

    std::map<std::string, std::pair<bool, bool>> seen_signs; // key -> (+ seen, - seen)
    std::string best_key;
    int best_sign = 1;
    Term best_term;
    bool have_best = false;

    long candidate_budget = 200000;

    // enumerate permutations within runs
    std::function<void(size_t, std::vector<size_t> &)> enum_runs =
        [&](size_t ri, std::vector<size_t> &cur) {
            if (candidate_budget <= 0)
                throw structural_error("canonicalization budget exceeded");
            if (ri == runs.size()) {
                // atoms in `cur` order; now enumerate slot/deriv orders per atom
                int base_sign = grassmann_sign(cur, degree);
                std::vector<std::vector<std::vector<int>>> sopts, dopts;
                for (size_t p : cur) {
                    sopts.push_back(slot_orders(t.atoms[p]));
                    dopts.push_back(deriv_orders(t.atoms[p]));
                }
                std::vector<size_t> schoice(n, 0), dchoice(n, 0);
                while (true) {
                    --candidate_budget;
                    if (candidate_budget <= 0)
                        throw structural_error("canonicalization budget exceeded");
                    // build the candidate term
                    Term cand;
                    cand.coeff = t.coeff;
                    int sgn = base_sign;
                    for (size_t ii = 0; ii < n; ++ii) {
                        Atom a = t.atoms[cur[ii]];
                        auto const &sp = sopts[ii][schoice[ii]];
                        auto const &dp = dopts[ii][dchoice[ii]];
                        if (a.antisymmetric_slots())
                            sgn *= perm_parity(sp);
                        std::vector<Index> ns(a.slots.size()), nd(a.deriv.size());
                        for (size_t q = 0; q < sp.size(); ++q)
                            ns[q] = a.slots[sp[q]];
                        for (size_t q = 0; q < dp.size(); ++q)
                            nd[q] = a.deriv[dp[q]];
                        a.slots = std::move(ns);
                        a.deriv = std::move(nd);
                        cand.atoms.push_back(std::move(a));
                    }
                    // rename dummies by first occurrence, avoiding free names
                    std::map<std::string, std::string> ren;
                    int counter = 0;
                    auto next_dummy = [&]() {
                        std::string cand_name;
                        do
                            cand_name = "#" + std::to_string(counter++);
                        while (free_names.count(cand_name));
                        return cand_name;
                    };
                    for (auto *ix : index_occurrences(cand)) {
                        if (!dummies.count(ix->name))
                            continue;
                        auto it = ren.find(ix->name);
                        if (it == ren.end())
                            it = ren.emplace(ix->name, next_dummy()).first;
                    }
                    for (auto *ix : index_occurrences(cand))
                        if (auto it = ren.find(ix->name); it != ren.end())
                            ix->name = it->second;
                    std::string key;
                    for (auto const &a : cand.atoms) {
                        key += atom_string(a);
                        key += '&';
                    }
                    auto &fl = seen_signs[key];
                    (sgn > 0 ? fl.first : fl.second) = true;
                    if (!have_best || key < best_key) {
                        have_best = true;
                        best_key = key;
                        best_sign = sgn;
                        best_term = cand;
                    }
                    // advance choices
                    size_t pos = 0;
                    for (; pos < n; ++pos) {
                        if (++dchoice[pos] < dopts[pos].size())
                            break;
                        dchoice[pos] = 0;
                        if (++schoice[pos] < sopts[pos].size())
                            break;
                        schoice[pos] = 0;
                    }
                    if (pos == n)
                        break;
                }
                return;
            }
            auto [b, e] = runs[ri];
            std::vector<size_t> runvals(cur.begin() + b, cur.begin() + e);
            std::sort(runvals.begin(), runvals.end());
            do {
                for (size_t q = 0; q < runvals.size(); ++q)
                    cur[b + q] = runvals[q];
                enum_runs(ri + 1, cur);
            } while (std::next_permutation(runvals.begin(), runvals.end()));
        };

    std::vector<size_t> cur = order;
    enum_runs(0, cur);

    Labeled res;
    for (auto const &[k, fl] : seen_signs)
        if (fl.first && fl.second) {
            res.zero = true;
            return res;
        }
    res.key = best_key;
    res.sign = best_sign;
    res.term = best_term;
    res.term.coeff = t.coeff * RatFunc(Rat(best_sign));
    return res;
}

std::uint64_t fnv1a(std::string const &s, std::uint64_t h = 1469598103934665603ull)
{
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

CanonicalForm canonicalize(Expression const &x)
{
    // validate + rewrite to irreducible terms
    std::deque<Term> work(x.terms.begin(), x.terms.end());
    std::vector<Term> irreducible;
    long steps = 0;
    while (!work.empty()) {
        if (++steps > 2000000)
            throw structural_error("canonicalization rewrite budget exceeded");
        Term t = std::move(work.front());
        work.pop_front();
        (void)term_free_indices(t); // validates contraction discipline
        auto r = rewrite_step(t);
        if (r.fired) {
            for (auto &nt : r.out)
                work.push_back(std::move(nt));
        } else {
            irreducible.push_back(std::move(t));
        }
    }

    // label + merge
    std::map<std::string, Term> merged;
    for (auto const &t : irreducible) {
        auto lab = label_term(t);
        if (lab.zero)
            continue;
        auto it = merged.find(lab.key);
        if (it == merged.end())
            merged.emplace(lab.key, lab.term);
        else
            it->second.coeff = it->second.coeff + lab.term.coeff;
    }

    CanonicalForm cf;
    std::uint64_t h = 1469598103934665603ull;
    for (auto const &[key, term] : merged) {
        if (term.coeff.is_zero())
            continue;
        cf.expression.terms.push_back(term);
        h = fnv1a(key, h);
        h = fnv1a(term.coeff.str(), h);
    }
    cf.fingerprint = h;
    if (!cf.expression.is_empty())
        (void)free_indices(cf.expression); // uniformity check
    return cf;
}

bool is_zero(Expression const &x) { return canonicalize(x).expression.is_empty(); }

bool equal(Expression const &a, Expression const &b)
{
    return is_zero(sub(a, b));
}

std::string term_key(Term const &t)
{
    auto lab = label_term(t);
    return lab.zero ? std::string("0") : lab.key;
}

std::string expr_key(Expression const &x)
{
    auto cf = canonicalize(x);
    std::string out;
    for (auto const &t : cf.expression.terms) {
        out += t.coeff.str();
        out += "*";
        out += label_term(t).key;
        out += ";";
    }
    return out.empty() ? "0" : out;
}

} // namespace hjcas::canon
