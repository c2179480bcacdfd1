#include "hjcas/dsl.hpp"
#include "hjcas/canon.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>

namespace hjcas::dsl {

std::optional<IndexKind> kind_of_name(std::string const &name)
{
    std::string base;
    for (char c : name) {
        if (std::isdigit((unsigned char)c))
            break;
        base += c;
    }
    static const std::map<std::string, IndexKind> table = {
        {"mu", IndexKind::Spacetime}, {"nu", IndexKind::Spacetime},
        {"al", IndexKind::Spacetime}, {"be", IndexKind::Spacetime},
        {"ga", IndexKind::Spacetime}, {"rho", IndexKind::Spacetime},
        {"si", IndexKind::Spacetime}, {"ta", IndexKind::Spacetime},
        {"a", IndexKind::Spatial},    {"b", IndexKind::Spatial},
        {"c", IndexKind::Spatial},    {"d", IndexKind::Spatial},
        {"f", IndexKind::Spatial},    {"g", IndexKind::Spatial},
        {"h", IndexKind::Spatial},
        {"i", IndexKind::Internal},   {"j", IndexKind::Internal},
        {"k", IndexKind::Internal},   {"l", IndexKind::Internal},
        {"m", IndexKind::Internal},   {"n", IndexKind::Internal},
        {"r", IndexKind::Internal},   {"s", IndexKind::Internal},
    };
    auto it = table.find(base);
    if (it == table.end())
        return std::nullopt;
    return it->second;
}

namespace {

struct Token {
    enum Type { Name, Number, Sym, End } type = End;
    std::string text;
    int line = 1, col = 1;
};

class Lexer
{
  public:
    Lexer(std::string const &src, int line0) : src_(src), line_(line0) { advance(); }

    Token const &peek() const { return cur_; }
    Token next()
    {
        Token t = cur_;
        advance();
        return t;
    }

  private:
    void advance()
    {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '\n') {
                ++line_;
                col_ = 1;
                ++pos_;
            } else if (std::isspace((unsigned char)c)) {
                ++col_;
                ++pos_;
            } else if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n')
                    ++pos_;
            } else
                break;
        }
        cur_ = Token{};
        cur_.line = line_;
        cur_.col = col_;
        if (pos_ >= src_.size()) {
            cur_.type = Token::End;
            return;
        }
        char c = src_[pos_];
        if (std::isalpha((unsigned char)c)) {
            std::string name;
            while (pos_ < src_.size() &&
                   (std::isalnum((unsigned char)src_[pos_]) || src_[pos_] == '_')) {
                name += src_[pos_++];
                ++col_;
            }
            cur_.type = Token::Name;
            cur_.text = std::move(name);
            return;
        }
        if (std::isdigit((unsigned char)c)) {
            std::string num;
            while (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_])) {
                num += src_[pos_++];
                ++col_;
            }
            cur_.type = Token::Number;
            cur_.text = std::move(num);
            return;
        }
        cur_.type = Token::Sym;
        cur_.text = std::string(1, c);
        ++pos_;
        ++col_;
    }

    std::string const &src_;
    size_t pos_ = 0;
    int line_, col_ = 1;
    Token cur_;
};

class Parser
{
  public:
    Parser(std::string const &text, Context const &ctx, int line0)
        : lex_(text, line0), ctx_(ctx)
    {}

    Expression parse()
    {
        Expression e = parse_expr();
        if (lex_.peek().type != Token::End)
            fail("unexpected trailing input '" + lex_.peek().text + "'");
        return e;
    }

  private:
    [[noreturn]] void fail(std::string const &msg)
    {
        throw parse_error(msg, lex_.peek().line, lex_.peek().col);
    }

    bool accept_sym(char c)
    {
        if (lex_.peek().type == Token::Sym && lex_.peek().text[0] == c) {
            lex_.next();
            return true;
        }
        return false;
    }
    void expect_sym(char c)
    {
        if (!accept_sym(c))
            fail(std::string("expected '") + c + "'");
    }

    Expression parse_expr()
    {
        bool neg = false;
        if (accept_sym('-'))
            neg = true;
        else
            (void)accept_sym('+');
        Expression acc = parse_product();
        if (neg)
            acc = negate(acc);
        while (true) {
            if (accept_sym('+'))
                acc = add(acc, parse_product());
            else if (accept_sym('-'))
                acc = sub(acc, parse_product());
            else
                break;
        }
        return acc;
    }

    Expression parse_product()
    {
        Expression acc = parse_factor();
        while (true) {
            if (accept_sym('*'))
                acc = mul(acc, parse_factor());
            else if (accept_sym('/')) {
                // divisor: integer or lam
                Token t = lex_.next();
                if (t.type == Token::Number)
                    acc = scale(acc, RatFunc(1) / RatFunc(Rat(Int(t.text))));
                else if (t.type == Token::Name && t.text == "lam" && ctx_.has_lam)
                    acc = scale(acc, RatFunc(1) / RatFunc::lam());
                else
                    fail("expected integer or 'lam' after '/'");
            } else
                break;
        }
        return acc;
    }

    Index parse_slot(IndexKind *declared_kind, IndexPos *declared_pos, bool *was_marked)
    {
        std::optional<IndexPos> marked;
        if (accept_sym('^'))
            marked = IndexPos::Upper;
        else if (accept_sym('_'))
            marked = IndexPos::Lower;
        if (was_marked)
            *was_marked = marked.has_value();
        Token t = lex_.next();
        if (t.type != Token::Name)
            throw parse_error("expected index name", t.line, t.col);
        auto kind = kind_of_name(t.text);
        if (declared_kind)
            kind = *declared_kind;
        if (!kind)
            throw parse_error("cannot infer index kind of '" + t.text + "'", t.line,
                              t.col);
        IndexPos pos;
        if (marked)
            pos = *marked;
        else if (declared_pos)
            pos = *declared_pos;
        else
            pos = (*kind == IndexKind::Internal) ? IndexPos::Upper : IndexPos::Lower;
        return Index(*kind, pos, t.text);
    }

    std::vector<Index> parse_slot_list(std::vector<Index> const *sig,
                                       std::vector<bool> *marked_out = nullptr)
    {
        std::vector<Index> slots;
        if (!accept_sym('['))
            return slots;
        size_t k = 0;
        while (true) {
            IndexKind dk;
            IndexPos dp;
            IndexKind *pdk = nullptr;
            IndexPos *pdp = nullptr;
            if (sig) {
                if (k >= sig->size())
                    fail("too many indices");
                dk = (*sig)[k].kind;
                dp = (*sig)[k].pos;
                pdk = &dk;
                pdp = &dp;
            }
            bool marked = false;
            slots.push_back(parse_slot(pdk, pdp, &marked));
            if (marked_out)
                marked_out->push_back(marked);
            ++k;
            if (accept_sym(']'))
                break;
            expect_sym(',');
        }
        if (sig && k != sig->size())
            fail("too few indices");
        return slots;
    }

    Expression parse_structural(std::string const &name)
    {
        std::vector<bool> marked;
        auto slots = parse_slot_list(nullptr, &marked);
        auto need = [&](size_t n) {
            if (slots.size() != n)
                fail(name + " takes " + std::to_string(n) + " indices");
        };
        auto force = [&](IndexKind k, IndexPos p) {
            for (auto &s : slots) {
                s.kind = k;
                s.pos = p;
            }
        };
        if (name == "eps2up") {
            need(2);
            force(IndexKind::Spatial, IndexPos::Upper);
            return expr_atom(eps2_atom(IndexPos::Upper, slots[0].name, slots[1].name));
        }
        if (name == "eps2dn") {
            need(2);
            return expr_atom(eps2_atom(IndexPos::Lower, slots[0].name, slots[1].name));
        }
        if (name == "eps3") {
            need(3);
            return expr_atom(eps3int_atom(IndexPos::Lower, slots[0].name, slots[1].name,
                                          slots[2].name));
        }
        if (name == "eps3up") {
            need(3);
            return expr_atom(eps3int_atom(IndexPos::Upper, slots[0].name, slots[1].name,
                                          slots[2].name));
        }
        if (name == "eps3st") {
            need(3);
            return expr_atom(eps3st_atom(IndexPos::Upper, slots[0].name, slots[1].name,
                                         slots[2].name));
        }
        if (name == "eps3stdn") {
            need(3);
            return expr_atom(eps3st_atom(IndexPos::Lower, slots[0].name, slots[1].name,
                                         slots[2].name));
        }
        if (name == "delta") {
            need(2);
            IndexKind k0 = slots[0].kind;
            if (slots[1].kind != k0)
                fail("delta slots must share a kind");
            bool both_marked = marked[0] && marked[1];
            if (both_marked && slots[0].pos == slots[1].pos) {
                // delta[^i,^j] / delta[_i,_j]: the metric in that kind
                if (k0 == IndexKind::Spacetime)
                    fail("no spacetime metric; use mixed delta");
                Atom a;
                a.type = AtomType::Metric;
                a.slots = {slots[0], slots[1]};
                return expr_atom(a);
            }
            if (!both_marked) {
                // default mixed orientation: first up, second down
                if (!marked[0] && !marked[1]) {
                    slots[0].pos = IndexPos::Upper;
                    slots[1].pos = IndexPos::Lower;
                } else if (marked[0]) {
                    slots[1].pos = slots[0].pos == IndexPos::Upper ? IndexPos::Lower
                                                                   : IndexPos::Upper;
                } else {
                    slots[0].pos = slots[1].pos == IndexPos::Upper ? IndexPos::Lower
                                                                   : IndexPos::Upper;
                }
            }
            if (slots[0].pos == IndexPos::Lower)
                std::swap(slots[0], slots[1]);
            return expr_atom(delta_atom(slots[0], slots[1]));
        }
        if (name == "metric" || name == "metricup") {
            need(2);
            IndexPos p = name == "metric" ? IndexPos::Lower : IndexPos::Upper;
            for (auto &s : slots) {
                s.pos = p;
                if (s.kind != IndexKind::Internal)
                    fail("metric indices must be internal");
            }
            return expr_atom(metric_atom(slots[0], slots[1]));
        }
        if (name == "sdelta" || name == "sdeltaup") {
            need(2);
            IndexPos p = name == "sdelta" ? IndexPos::Lower : IndexPos::Upper;
            for (auto &s : slots) {
                s.pos = p;
                if (s.kind != IndexKind::Spatial)
                    fail("sdelta indices must be spatial");
            }
            Atom a;
            a.type = AtomType::Metric;
            a.slots = {slots[0], slots[1]};
            return expr_atom(a);
        }
        fail("unknown structural atom '" + name + "'");
    }

    static bool is_structural(std::string const &n)
    {
        return n == "eps2up" || n == "eps2dn" || n == "eps3" || n == "eps3up" ||
               n == "eps3st" || n == "eps3stdn" || n == "delta" || n == "metric" ||
               n == "metricup" || n == "sdelta" || n == "sdeltaup";
    }

    Expression parse_field_ref(std::string const &name, bool variation, bool dotted)
    {
        auto it = ctx_.fields.find(name);
        std::vector<Index> const *sig = nullptr;
        if (it != ctx_.fields.end())
            sig = &it->second.slots;
        else if (!ctx_.allow_unknown_fields)
            fail("unknown field or parameter '" + name + "'");
        auto slots = parse_slot_list(sig);
        if (sig && slots.empty() && !sig->empty())
            fail("field '" + name + "' needs " + std::to_string(sig->size()) +
                 " indices");
        Atom a = field_atom(name, std::move(slots), variation);
        a.dot = dotted;
        return expr_atom(a);
    }

    Expression parse_factor()
    {
        Token t = lex_.peek();
        if (t.type == Token::Number) {
            lex_.next();
            return expr_const(RatFunc(Rat(Int(t.text))));
        }
        if (accept_sym('(')) {
            Expression e = parse_expr();
            expect_sym(')');
            return e;
        }
        if (t.type != Token::Name)
            fail("expected factor");
        lex_.next();
        std::string name = t.text;
        if (name == "lam") {
            if (!ctx_.has_lam)
                throw parse_error("unknown field or parameter 'lam'", t.line, t.col);
            return expr_const(RatFunc::lam());
        }
        if (name == "dot") {
            if (!ctx_.allow_dot)
                throw parse_error("dot(...) not allowed here", t.line, t.col);
            expect_sym('(');
            Token f = lex_.next();
            if (f.type != Token::Name)
                fail("expected field inside dot(...)");
            Expression e = parse_field_ref(f.text, false, true);
            expect_sym(')');
            return e;
        }
        if (name == "var") {
            if (!ctx_.allow_var)
                throw parse_error("var(...) not allowed here", t.line, t.col);
            expect_sym('(');
            Token f = lex_.next();
            if (f.type != Token::Name)
                fail("expected field inside var(...)");
            Expression e = parse_field_ref(f.text, true, false);
            expect_sym(')');
            return e;
        }
        if (name == "dirac2") {
            return expr_atom(dirac_atom());
        }
        if (name.size() > 2 && name[0] == 'd' && name[1] == '_') {
            std::string idx = name.substr(2);
            auto kind = kind_of_name(idx);
            if (!kind)
                throw parse_error("cannot infer kind of derivative index '" + idx + "'",
                                  t.line, t.col);
            if (*kind == IndexKind::Internal)
                throw parse_error("derivative index must be spatial or spacetime",
                                  t.line, t.col);
            expect_sym('(');
            Expression e = parse_expr();
            expect_sym(')');
            return derivative(e, dn(*kind, idx));
        }
        if (is_structural(name))
            return parse_structural(name);
        return parse_field_ref(name, false, false);
    }

    Lexer lex_;
    Context const &ctx_;
};

} // namespace

Expression parse_expression(std::string const &text, Context const &ctx, int line0)
{
    Parser p(text, ctx, line0);
    return p.parse();
}

// ---------------------------------------------------------------------------
// printer
// ---------------------------------------------------------------------------

namespace {

std::string printable_dummy_pools(IndexKind k, int n)
{
    static const std::vector<std::string> sp = {"c", "d", "f", "g", "h"};
    static const std::vector<std::string> in = {"k", "l", "m", "n", "r", "s"};
    static const std::vector<std::string> st = {"rho", "si", "ta", "ga", "be"};
    auto const &pool = k == IndexKind::Spatial ? sp
                       : k == IndexKind::Internal ? in
                                                  : st;
    if (n < (int)pool.size())
        return pool[n];
    return pool[n % pool.size()] + std::to_string(n / pool.size());
}

std::string atom_to_string(Atom const &a, PrintOptions const &opts)
{
    std::string body;
    auto slot_str = [&](bool positions) {
        std::string s = "[";
        for (size_t i = 0; i < a.slots.size(); ++i) {
            if (i)
                s += ",";
            if (positions)
                s += a.slots[i].pos == IndexPos::Upper ? "^" : "_";
            s += a.slots[i].name;
        }
        s += "]";
        return s;
    };
    switch (a.type) {
    case AtomType::Field:
        body = a.field + (a.slots.empty() ? "" : slot_str(opts.explicit_positions));
        break;
    case AtomType::Delta:
        body = "delta" + slot_str(true);
        break;
    case AtomType::Metric:
        if (a.slots[0].kind == IndexKind::Spatial)
            body = (a.slots[0].pos == IndexPos::Upper ? "sdeltaup" : "sdelta") +
                   slot_str(false);
        else
            body = (a.slots[0].pos == IndexPos::Upper ? "metricup" : "metric") +
                   slot_str(false);
        break;
    case AtomType::Eps2:
        body = (a.slots[0].pos == IndexPos::Upper ? "eps2up" : "eps2dn") +
               slot_str(false);
        break;
    case AtomType::Eps3Int:
        body = (a.slots[0].pos == IndexPos::Upper ? "eps3up" : "eps3") + slot_str(false);
        break;
    case AtomType::Eps3St:
        body = (a.slots[0].pos == IndexPos::Upper ? "eps3st" : "eps3stdn") +
               slot_str(false);
        break;
    case AtomType::Dirac:
        body = "dirac2";
        break;
    }
    if (a.variation)
        body = "var(" + body + ")";
    if (a.dot)
        body = "dot(" + body + ")";
    for (auto it = a.deriv.rbegin(); it != a.deriv.rend(); ++it)
        body = "d_" + it->name + "(" + body + ")";
    return body;
}

} // namespace

std::string print_coeff(RatFunc const &c) { return c.str("lam"); }

std::string print_expression(Expression const &x, PrintOptions const &opts)
{
    auto cf = canon::canonicalize(x);
    if (cf.expression.is_empty())
        return "0";
    std::string out;
    bool first = true;
    for (auto const &t : cf.expression.terms) {
        // rename canonical '#k' dummies to printable per-kind names
        Term pt = t;
        std::set<std::string> used;
        for (auto const *ix : index_occurrences(pt))
            used.insert(ix->name);
        std::map<std::string, std::string> ren;
        std::map<IndexKind, int> counter;
        for (auto *ix : index_occurrences(pt)) {
            if (ix->name.empty() || ix->name[0] != '#')
                continue;
            auto it = ren.find(ix->name);
            if (it == ren.end()) {
                std::string cand;
                do
                    cand = printable_dummy_pools(ix->kind, counter[ix->kind]++);
                while (used.count(cand));
                used.insert(cand);
                it = ren.emplace(ix->name, cand).first;
            }
        }
        for (auto *ix : index_occurrences(pt))
            if (auto it = ren.find(ix->name); it != ren.end())
                ix->name = it->second;

        // coefficient
        RatFunc c = pt.coeff;
        std::string cs = c.str("lam");
        bool neg = false;
        if (!cs.empty() && cs[0] == '-' && cs.find(" - ") == std::string::npos &&
            cs.find(" + ") == std::string::npos) {
            neg = true;
            cs = cs.substr(1);
        }
        std::string piece;
        bool coeff_is_one = (cs == "1");
        bool needs_parens = cs.find(' ') != std::string::npos;
        if (!coeff_is_one || pt.atoms.empty())
            piece = needs_parens ? "(" + cs + ")" : cs;
        for (auto const &a : pt.atoms) {
            if (!piece.empty())
                piece += "*";
            piece += atom_to_string(a, opts);
        }
        if (first) {
            out += (neg ? "-" : "") + piece;
            first = false;
        } else {
            out += (neg ? " - " : " + ") + piece;
        }
    }
    return out;
}

} // namespace hjcas::dsl
