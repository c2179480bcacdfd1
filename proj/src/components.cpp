#include "hjcas/components.hpp"
#include "hjcas/canon.hpp"

#include <algorithm>
#include <cassert>
#include <functional>

namespace hjcas::comps {

bool CompPoly::is_zero() const
{
    for (auto const &[m, c] : coeffs)
        if (!c.is_zero())
            return false;
    return true;
}

void CompPoly::add(Monomial m, RatFunc c, int sign)
{
    if (c.is_zero())
        return;
    if (sign < 0)
        c = -c;
    auto it = coeffs.find(m);
    if (it == coeffs.end())
        coeffs.emplace(std::move(m), std::move(c));
    else {
        it->second = it->second + c;
        if (it->second.is_zero())
            coeffs.erase(it);
    }
}

CompPoly operator+(CompPoly const &a, CompPoly const &b)
{
    CompPoly r = a;
    for (auto const &[m, c] : b.coeffs)
        r.add(m, c);
    return r;
}

CompPoly operator-(CompPoly const &a, CompPoly const &b)
{
    CompPoly r = a;
    for (auto const &[m, c] : b.coeffs)
        r.add(m, -c);
    return r;
}

// multiply monomials with Grassmann sign; zero (empty optional) when an odd
// symbol repeats
static std::optional<std::pair<Monomial, int>> mul_monomials(Monomial const &a,
                                                             Monomial const &b)
{
    Monomial m = a;
    m.insert(m.end(), b.begin(), b.end());
    // bubble sort, counting odd-odd swaps
    int sign = 1;
    for (size_t i = 0; i + 1 < m.size(); ++i)
        for (size_t j = 0; j + 1 < m.size() - i; ++j)
            if (m[j + 1] < m[j]) {
                if (m[j].odd && m[j + 1].odd)
                    sign = -sign;
                std::swap(m[j], m[j + 1]);
            }
    for (size_t i = 0; i + 1 < m.size(); ++i)
        if (m[i].odd && m[i] == m[i + 1])
            return std::nullopt;
    return std::make_pair(std::move(m), sign);
}

CompPoly operator*(CompPoly const &a, CompPoly const &b)
{
    CompPoly r;
    for (auto const &[ma, ca] : a.coeffs)
        for (auto const &[mb, cb] : b.coeffs) {
            auto prod = mul_monomials(ma, mb);
            if (!prod)
                continue;
            r.add(prod->first, ca * cb, prod->second);
        }
    return r;
}

bool CompPoly::operator==(CompPoly const &o) const { return (*this - o).is_zero(); }

std::string CompPoly::str() const
{
    if (coeffs.empty())
        return "0";
    std::string s;
    for (auto const &[m, c] : coeffs) {
        if (!s.empty())
            s += " + ";
        s += "(" + c.str() + ")";
        for (auto const &sym : m)
            s += "*" + sym.text;
    }
    return s;
}

namespace {

int eps_sign(std::vector<int> const &v)
{
    int sgn = 1;
    for (size_t i = 0; i < v.size(); ++i)
        for (size_t j = i + 1; j < v.size(); ++j) {
            if (v[i] == v[j])
                return 0;
            if (v[i] > v[j])
                sgn = -sgn;
        }
    return sgn;
}

int metric_value(int i, int j)
{
    if (i != j)
        return 0;
    if (canon::ambient_metric() == canon::InternalMetric::Lorentzian && i == 0)
        return -1;
    return 1;
}

} // namespace

ComponentMap enumerate_components(Expression const &x, FreeSignature *sig_out)
{
    FreeSignature sig = free_indices(x);
    if (sig_out)
        *sig_out = sig;
    std::map<std::string, size_t> free_pos;
    for (size_t i = 0; i < sig.size(); ++i)
        free_pos[sig[i].name] = i;

    ComponentMap out;

    // seed all free assignments so zero entries exist explicitly
    std::vector<Assignment> assignments;
    {
        Assignment cur(sig.size(), 0);
        std::function<void(size_t)> rec = [&](size_t k) {
            if (k == sig.size()) {
                assignments.push_back(cur);
                return;
            }
            for (int v = first_value(sig[k].kind);
                 v < first_value(sig[k].kind) + range_of(sig[k].kind); ++v) {
                cur[k] = v;
                rec(k + 1);
            }
        };
        rec(0);
        for (auto const &a : assignments)
            out[a]; // default empty poly
    }

    for (auto const &t : x.terms) {
        std::vector<std::string> dummies;
        for (auto const &d : term_dummy_names(t))
            dummies.push_back(d);
        // kind of each dummy
        std::map<std::string, IndexKind> dummy_kind;
        for (auto const *i : index_occurrences(t))
            if (std::find(dummies.begin(), dummies.end(), i->name) != dummies.end())
                dummy_kind[i->name] = i->kind;

        for (auto const &fa : assignments) {
            std::map<std::string, int> val;
            for (size_t i = 0; i < sig.size(); ++i)
                val[sig[i].name] = fa[i];

            std::function<void(size_t)> sum_dummies = [&](size_t k) {
                if (k == dummies.size()) {
                    // evaluate the term at this assignment
                    RatFunc numeric = t.coeff;
                    Monomial mono;
                    int sign = 1;
                    for (auto const &a : t.atoms) {
                        auto v = [&](Index const &ix) { return val.at(ix.name); };
                        switch (a.type) {
                        case AtomType::Delta:
                            if (v(a.slots[0]) != v(a.slots[1]))
                                numeric = RatFunc(0);
                            break;
                        case AtomType::Metric:
                            numeric = numeric *
                                      RatFunc(Rat(metric_value(v(a.slots[0]), v(a.slots[1]))));
                            break;
                        case AtomType::Eps2: {
                            int s = (v(a.slots[0]) == 1 && v(a.slots[1]) == 2)   ? 1
                                    : (v(a.slots[0]) == 2 && v(a.slots[1]) == 1) ? -1
                                                                                 : 0;
                            numeric = numeric * RatFunc(Rat(s));
                            break;
                        }
                        case AtomType::Eps3Int:
                        case AtomType::Eps3St: {
                            int s = eps_sign(
                                {v(a.slots[0]), v(a.slots[1]), v(a.slots[2])});
                            numeric = numeric * RatFunc(Rat(s));
                            break;
                        }
                        case AtomType::Field:
                        case AtomType::Dirac: {
                            Symbol sym;
                            sym.odd = a.form_degree() == 1;
                            std::string s = a.type == AtomType::Dirac
                                                ? std::string("@dirac")
                                                : a.field;
                            if (a.variation)
                                s = "var(" + s + ")";
                            if (a.dot)
                                s = "dot(" + s + ")";
                            std::vector<int> dv;
                            for (auto const &d : a.deriv)
                                dv.push_back(v(d));
                            std::sort(dv.begin(), dv.end());
                            s += "{";
                            for (int d : dv)
                                s += std::to_string(d) + ",";
                            s += "}[";
                            for (auto const &sl : a.slots)
                                s += std::to_string(v(sl)) +
                                     (sl.pos == IndexPos::Upper ? "^" : "_") + ",";
                            s += "]";
                            sym.text = std::move(s);
                            auto prod = mul_monomials(mono, {sym});
                            if (!prod) {
                                numeric = RatFunc(0);
                                break;
                            }
                            sign *= prod->second;
                            mono = std::move(prod->first);
                            break;
                        }
                        }
                        if (numeric.is_zero())
                            break;
                    }
                    if (!numeric.is_zero())
                        out[fa].add(std::move(mono), numeric, sign);
                    return;
                }
                auto kind = dummy_kind.at(dummies[k]);
                for (int v = first_value(kind); v < first_value(kind) + range_of(kind);
                     ++v) {
                    val[dummies[k]] = v;
                    sum_dummies(k + 1);
                }
                val.erase(dummies[k]);
            };
            sum_dummies(0);
        }
    }
    return out;
}

bool components_zero(Expression const &a)
{
    auto m = enumerate_components(a);
    for (auto const &[as, poly] : m)
        if (!poly.is_zero())
            return false;
    return true;
}

bool components_equal(Expression const &a, Expression const &b)
{
    if (a.is_empty())
        return components_zero(b);
    if (b.is_empty())
        return components_zero(a);
    if (free_indices(a) != free_indices(b))
        return false;
    auto ma = enumerate_components(a);
    auto mb = enumerate_components(b);
    for (auto const &[as, poly] : ma) {
        auto it = mb.find(as);
        if (it == mb.end()) {
            if (!poly.is_zero())
                return false;
        } else if (!(poly == it->second))
            return false;
    }
    return true;
}

std::optional<std::vector<RatFunc>> solve_linear(Matrix A, std::vector<RatFunc> b)
{
    size_t rows = A.size();
    size_t cols = rows ? A[0].size() : 0;
    std::vector<int> pivot_col_of_row;
    size_t r = 0;
    for (size_t c = 0; c < cols && r < rows; ++c) {
        size_t p = r;
        while (p < rows && A[p][c].is_zero())
            ++p;
        if (p == rows)
            continue;
        std::swap(A[p], A[r]);
        std::swap(b[p], b[r]);
        RatFunc inv = RatFunc(1) / A[r][c];
        for (size_t cc = c; cc < cols; ++cc)
            A[r][cc] = A[r][cc] * inv;
        b[r] = b[r] * inv;
        for (size_t rr = 0; rr < rows; ++rr) {
            if (rr == r || A[rr][c].is_zero())
                continue;
            RatFunc f = A[rr][c];
            for (size_t cc = c; cc < cols; ++cc)
                A[rr][cc] = A[rr][cc] - f * A[r][cc];
            b[rr] = b[rr] - f * b[r];
        }
        pivot_col_of_row.push_back((int)c);
        ++r;
    }
    for (size_t rr = r; rr < rows; ++rr)
        if (!b[rr].is_zero())
            return std::nullopt;
    std::vector<RatFunc> u(cols, RatFunc(0));
    for (size_t rr = 0; rr < r; ++rr)
        u[pivot_col_of_row[rr]] = b[rr];
    return u;
}

std::optional<Matrix> invert(Matrix const &m, std::vector<RatFunc> *null_out)
{
    size_t n = m.size();
    Matrix a = m;
    Matrix inv(n, Row(n, RatFunc(0)));
    for (size_t i = 0; i < n; ++i)
        inv[i][i] = RatFunc(1);
    for (size_t c = 0; c < n; ++c) {
        size_t p = c;
        while (p < n && a[p][c].is_zero())
            ++p;
        if (p == n) {
            if (null_out) {
                // column c of the partially reduced system is dependent;
                // reconstruct a null vector by back substitution
                null_out->assign(n, RatFunc(0));
                (*null_out)[c] = RatFunc(1);
                for (size_t r2 = 0; r2 < c; ++r2)
                    (*null_out)[r2] = -a[r2][c];
            }
            return std::nullopt;
        }
        std::swap(a[p], a[c]);
        std::swap(inv[p], inv[c]);
        RatFunc f = RatFunc(1) / a[c][c];
        for (size_t cc = 0; cc < n; ++cc) {
            a[c][cc] = a[c][cc] * f;
            inv[c][cc] = inv[c][cc] * f;
        }
        for (size_t r2 = 0; r2 < n; ++r2) {
            if (r2 == c || a[r2][c].is_zero())
                continue;
            RatFunc g = a[r2][c];
            for (size_t cc = 0; cc < n; ++cc) {
                a[r2][cc] = a[r2][cc] - g * a[c][cc];
                inv[r2][cc] = inv[r2][cc] - g * inv[c][cc];
            }
        }
    }
    return inv;
}

Matrix mat_mul(Matrix const &a, Matrix const &b)
{
    size_t n = a.size(), m = b.empty() ? 0 : b[0].size(), k = b.size();
    Matrix r(n, Row(m, RatFunc(0)));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j)
            for (size_t l = 0; l < k; ++l)
                r[i][j] = r[i][j] + a[i][l] * b[l][j];
    return r;
}

bool is_identity(Matrix const &m)
{
    for (size_t i = 0; i < m.size(); ++i)
        for (size_t j = 0; j < m.size(); ++j) {
            if (i == j && !(m[i][j] == RatFunc(1)))
                return false;
            if (i != j && !m[i][j].is_zero())
                return false;
        }
    return true;
}

std::optional<std::vector<RatFunc>>
match_combination(Expression const &target, std::vector<Expression> const &candidates)
{
    // equations: one per (assignment, monomial) over target and all candidates
    std::map<std::pair<Assignment, Monomial>, size_t> eqn_index;
    auto touch = [&](ComponentMap const &m) {
        for (auto const &[a, poly] : m)
            for (auto const &[mono, c] : poly.coeffs)
                eqn_index.emplace(std::make_pair(a, mono), eqn_index.size());
    };
    auto tmap = enumerate_components(target);
    touch(tmap);
    std::vector<ComponentMap> cmaps;
    for (auto const &c : candidates) {
        cmaps.push_back(enumerate_components(c));
        touch(cmaps.back());
    }
    size_t rows = eqn_index.size(), cols = candidates.size();
    Matrix A(rows, Row(cols, RatFunc(0)));
    std::vector<RatFunc> b(rows, RatFunc(0));
    for (auto const &[a, poly] : tmap)
        for (auto const &[mono, c] : poly.coeffs)
            b[eqn_index.at({a, mono})] = c;
    for (size_t j = 0; j < cols; ++j)
        for (auto const &[a, poly] : cmaps[j])
            for (auto const &[mono, c] : poly.coeffs)
                A[eqn_index.at({a, mono})][j] = c;
    return solve_linear(std::move(A), std::move(b));
}

} // namespace hjcas::comps
