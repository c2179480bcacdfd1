#include "hjcas/model.hpp"
#include "hjcas/vary.hpp"

#include <algorithm>
#include <cassert>
#include <set>
#include <sstream>

namespace hjcas::model {

int FieldDecl::components() const
{
    int n = 1;
    for (auto const &s : slots)
        n *= range_of(s.kind);
    return n;
}

int Model::config_components() const
{
    int n = 0;
    for (auto const &f : fields)
        n += f.components();
    return n;
}

FieldDecl const *Model::field(std::string const &name) const
{
    for (auto const &f : fields)
        if (f.name == name)
            return &f;
    return nullptr;
}

dsl::Context Model::expr_context(bool allow_unknown) const
{
    dsl::Context ctx;
    ctx.has_lam = has_lam;
    ctx.allow_unknown_fields = allow_unknown;
    for (auto const &f : fields) {
        ctx.fields[f.name] = dsl::FieldSig{f.slots};
        std::vector<Index> dual;
        for (auto const &s : f.slots)
            dual.push_back(s.flipped());
        ctx.fields[f.momentum] = dsl::FieldSig{dual};
    }
    return ctx;
}

namespace {

struct Line {
    int number;
    std::string text;
};

bool is_directive(std::string const &first_word)
{
    static const std::set<std::string> kw = {"model",    "param",      "metric",
                                             "field",    "covfield",   "lagrangian",
                                             "covlagrangian"};
    return kw.count(first_word) > 0;
}

std::string first_word(std::string const &line)
{
    std::istringstream is(line);
    std::string w;
    is >> w;
    return w;
}

[[noreturn]] void err(std::string const &msg, int line)
{
    throw dsl::parse_error(msg, line, 1);
}

struct FieldLine {
    std::string name;
    std::vector<Index> slots;
    std::string momentum;                    // field lines
    std::string time_split, space_split;     // covfield lines
};

// parse "NAME[slot,...] kinds=... momentum=... splits=a,b"
FieldLine parse_field_line(std::string const &rest, bool covariant, int lineno)
{
    FieldLine out;
    std::istringstream is(rest);
    std::string head;
    is >> head;
    // split head into NAME and optional [..]
    std::string name = head;
    std::string slotspec;
    if (auto p = head.find('['); p != std::string::npos) {
        name = head.substr(0, p);
        if (head.back() != ']')
            err("malformed slot list on field '" + name + "'", lineno);
        slotspec = head.substr(p + 1, head.size() - p - 2);
    }
    out.name = name;

    std::vector<std::pair<std::optional<IndexPos>, std::string>> rawslots;
    if (!slotspec.empty()) {
        std::istringstream ss(slotspec);
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::optional<IndexPos> pos;
            if (!item.empty() && item[0] == '^') {
                pos = IndexPos::Upper;
                item = item.substr(1);
            } else if (!item.empty() && item[0] == '_') {
                pos = IndexPos::Lower;
                item = item.substr(1);
            }
            if (item.empty())
                err("empty index name in field '" + name + "'", lineno);
            rawslots.emplace_back(pos, item);
        }
    }

    std::vector<IndexKind> kinds;
    bool kinds_given = false;
    std::string attr;
    while (is >> attr) {
        auto eq = attr.find('=');
        if (eq == std::string::npos)
            err("malformed attribute '" + attr + "'", lineno);
        std::string key = attr.substr(0, eq), val = attr.substr(eq + 1);
        if (key == "kinds") {
            kinds_given = true;
            std::istringstream ks(val);
            std::string k;
            while (std::getline(ks, k, ',')) {
                if (k == "spatial")
                    kinds.push_back(IndexKind::Spatial);
                else if (k == "internal")
                    kinds.push_back(IndexKind::Internal);
                else if (k == "spacetime")
                    kinds.push_back(IndexKind::Spacetime);
                else
                    err("unknown index kind '" + k + "'", lineno);
            }
        } else if (key == "momentum") {
            out.momentum = val;
        } else if (key == "splits") {
            auto comma = val.find(',');
            if (comma == std::string::npos)
                err("splits needs two field names", lineno);
            out.time_split = val.substr(0, comma);
            out.space_split = val.substr(comma + 1);
        } else {
            err("unknown attribute '" + key + "'", lineno);
        }
    }
    if (kinds_given && kinds.size() != rawslots.size())
        err("kinds list does not match slot count on '" + name + "'", lineno);
    for (size_t i = 0; i < rawslots.size(); ++i) {
        IndexKind k;
        if (kinds_given)
            k = kinds[i];
        else {
            auto ik = dsl::kind_of_name(rawslots[i].second);
            if (!ik)
                err("cannot infer kind of index '" + rawslots[i].second + "'", lineno);
            k = *ik;
        }
        IndexPos p = rawslots[i].first.value_or(
            k == IndexKind::Internal ? IndexPos::Upper : IndexPos::Lower);
        out.slots.emplace_back(k, p, rawslots[i].second);
    }
    if (!covariant && out.momentum.empty())
        out.momentum = "p_" + out.name;
    (void)covariant;
    return out;
}

void validate_split_lagrangian(Model const &m, int lineno)
{
    auto const &L = m.split_lagrangian;
    if (L.is_empty())
        return;
    auto sig = free_indices(L);
    if (!sig.empty())
        err("Lagrangian density is not a scalar: unbalanced free index '" +
                sig.front().name + "'",
            lineno);
    for (auto const &t : L.terms) {
        int dots = 0;
        for (auto const &a : t.atoms) {
            if (a.type != AtomType::Field)
                continue;
            if (a.dot) {
                ++dots;
                if (!a.deriv.empty())
                    err("derivatives of velocities are not supported", lineno);
                if (!m.field(a.field))
                    err("unknown dotted field '" + a.field + "'", lineno);
            } else if (!m.field(a.field)) {
                // declared momenta parse fine but are not Lagrangian variables
                for (auto const &f : m.fields)
                    if (f.momentum == a.field)
                        err("momentum '" + a.field + "' cannot appear in the Lagrangian",
                            lineno);
            }
        }
        for (auto const *ix : index_occurrences(t))
            if (ix->kind == IndexKind::Spacetime)
                err("spacetime index in the split Lagrangian", lineno);
        if (dots > 1) {
            Expression one;
            one.terms.push_back(t);
            err("non-affine velocity term: " + dsl::print_expression(one), lineno);
        }
    }
}

} // namespace

Model parse_model(std::string const &source)
{
    std::vector<Line> lines;
    {
        std::istringstream is(source);
        std::string raw;
        int n = 0;
        while (std::getline(is, raw)) {
            ++n;
            if (auto h = raw.find('#'); h != std::string::npos)
                raw = raw.substr(0, h);
            // trim
            auto b = raw.find_first_not_of(" \t\r");
            if (b == std::string::npos)
                continue;
            auto e = raw.find_last_not_of(" \t\r");
            lines.push_back({n, raw.substr(b, e - b + 1)});
        }
    }

    Model m;
    bool have_model = false, have_lag = false;
    int lag_line = 1, covlag_line = 1;
    std::string lag_text, covlag_text;
    std::vector<std::pair<FieldLine, int>> covfield_lines;

    size_t i = 0;
    while (i < lines.size()) {
        auto const &[no, text] = lines[i];
        std::string w = first_word(text);
        if (!is_directive(w))
            err("expected a directive, got '" + w + "'", no);
        std::string rest = text.substr(std::min(text.size(), text.find(w) + w.size()));
        if (w == "model") {
            std::istringstream is(rest);
            if (!(is >> m.name))
                err("model needs a name", no);
            have_model = true;
            ++i;
        } else if (w == "param") {
            std::istringstream is(rest);
            std::string p;
            if (!(is >> p))
                err("param needs a name", no);
            if (p != "lam")
                err("only the coupling parameter 'lam' is supported", no);
            m.has_lam = true;
            ++i;
        } else if (w == "metric") {
            std::istringstream is(rest);
            std::string v;
            is >> v;
            if (v == "euclidean")
                m.metric = canon::InternalMetric::Euclidean;
            else if (v == "lorentzian")
                m.metric = canon::InternalMetric::Lorentzian;
            else
                err("metric must be euclidean or lorentzian", no);
            ++i;
        } else if (w == "field") {
            auto fl = parse_field_line(rest, false, no);
            for (auto const &f : m.fields)
                if (f.name == fl.name || f.momentum == fl.name ||
                    f.name == fl.momentum || f.momentum == fl.momentum)
                    err("duplicate field or momentum name '" + fl.name + "'", no);
            m.fields.push_back(FieldDecl{fl.name, fl.slots, fl.momentum});
            ++i;
        } else if (w == "covfield") {
            covfield_lines.emplace_back(parse_field_line(rest, true, no), no);
            ++i;
        } else if (w == "lagrangian" || w == "covlagrangian") {
            std::string acc = rest;
            int start = no;
            ++i;
            while (i < lines.size() && !is_directive(first_word(lines[i].text))) {
                acc += "\n" + lines[i].text;
                ++i;
            }
            if (w == "lagrangian") {
                lag_text = acc;
                lag_line = start;
                have_lag = true;
            } else {
                covlag_text = acc;
                covlag_line = start;
            }
        }
    }

    if (!have_model)
        err("missing 'model' directive", 1);
    if (m.fields.empty())
        err("model declares no fields", 1);
    if (!have_lag)
        err("missing 'lagrangian' directive", 1);

    canon::ScopedMetric mg(m.metric);

    // covariant declarations
    for (auto const &[fl, no] : covfield_lines) {
        if (fl.slots.empty() || fl.slots.front().kind != IndexKind::Spacetime)
            err("covfield '" + fl.name + "' must start with a spacetime index", no);
        if (fl.time_split.empty())
            err("covfield '" + fl.name + "' needs splits=time,space", no);
        auto const *tf = m.field(fl.time_split);
        auto const *sf = m.field(fl.space_split);
        if (!tf || !sf)
            err("covfield splits reference unknown fields", no);
        // signature compatibility
        std::vector<Index> tail(fl.slots.begin() + 1, fl.slots.end());
        if (tf->slots.size() != tail.size() || sf->slots.size() != tail.size() + 1)
            err("covfield '" + fl.name + "' split signatures do not match", no);
        m.cov_fields.push_back(CovFieldDecl{fl.name, fl.slots, fl.time_split,
                                            fl.space_split});
    }

    // expressions
    {
        dsl::Context ctx = m.expr_context(false);
        ctx.allow_dot = true;
        m.split_lagrangian = dsl::parse_expression(lag_text, ctx, lag_line);
        validate_split_lagrangian(m, lag_line);
    }
    if (!covlag_text.empty()) {
        dsl::Context ctx;
        ctx.has_lam = m.has_lam;
        ctx.allow_unknown_fields = false;
        for (auto const &cf : m.cov_fields)
            ctx.fields[cf.name] = dsl::FieldSig{cf.slots};
        Expression act = dsl::parse_expression(covlag_text, ctx, covlag_line);
        if (!act.is_empty() && !free_indices(act).empty())
            err("covariant action is not a scalar", covlag_line);
        m.covariant_action = act;
    }
    return m;
}

std::string print_model(Model const &m)
{
    canon::ScopedMetric mg(m.metric);
    std::ostringstream os;
    os << "model " << m.name << "\n";
    if (m.has_lam)
        os << "param lam\n";
    os << "metric "
       << (m.metric == canon::InternalMetric::Euclidean ? "euclidean" : "lorentzian")
       << "\n";
    auto slot_str = [](std::vector<Index> const &slots) {
        std::string s;
        if (slots.empty())
            return s;
        s = "[";
        for (size_t i = 0; i < slots.size(); ++i) {
            if (i)
                s += ",";
            s += slots[i].pos == IndexPos::Upper ? "^" : "_";
            s += slots[i].name;
        }
        s += "]";
        return s;
    };
    auto kinds_str = [](std::vector<Index> const &slots) {
        std::string s;
        for (size_t i = 0; i < slots.size(); ++i) {
            if (i)
                s += ",";
            s += to_string(slots[i].kind);
        }
        return s;
    };
    for (auto const &f : m.fields) {
        os << "field " << f.name << slot_str(f.slots);
        if (!f.slots.empty())
            os << " kinds=" << kinds_str(f.slots);
        os << " momentum=" << f.momentum << "\n";
    }
    os << "lagrangian " << dsl::print_expression(m.split_lagrangian) << "\n";
    for (auto const &cf : m.cov_fields) {
        os << "covfield " << cf.name << slot_str(cf.slots) << " kinds="
           << kinds_str(cf.slots) << " splits=" << cf.time_split << ","
           << cf.space_split << "\n";
    }
    if (m.covariant_action)
        os << "covlagrangian " << dsl::print_expression(*m.covariant_action) << "\n";
    return os.str();
}

namespace {

char const *kPcsSource = R"(# 3d Palatini plus Chern-Simons, 2+1 split form
model pcs
param lam
metric euclidean
field e0[^i] kinds=internal momentum=p0
field A0[^i] kinds=internal momentum=Pi0
field e[_a,^i] kinds=spatial,internal momentum=p
field A[_a,^i] kinds=spatial,internal momentum=Pi
lagrangian
    eps2up[a,b]*metric[i,j]*(e[b,i] + lam*A[b,i])*dot(A[a,j])
  + 1/2*eps2up[a,b]*( metric[i,j]*e0[i]*(d_a(A[b,j]) - d_b(A[a,j]))
                     + eps3[i,j,k]*e0[i]*A[a,j]*A[b,k] )
  + eps2up[a,b]*( metric[i,j]*A0[i]*d_a(e[b,j]) + eps3[i,j,k]*A0[i]*A[a,j]*e[b,k] )
  + lam*eps2up[a,b]*( metric[i,j]*A0[i]*(d_a(A[b,j]) - d_b(A[a,j]))
                     + eps3[i,j,k]*A0[i]*A[a,j]*A[b,k] )
covfield e[_mu,^i] kinds=spacetime,internal splits=e0,e
covfield A[_mu,^i] kinds=spacetime,internal splits=A0,A
covlagrangian
    1/2*eps3st[mu,al,nu]*( metric[i,j]*e[mu,i]*(d_al(A[nu,j]) - d_nu(A[al,j]))
                          + eps3[i,j,k]*e[mu,i]*A[al,j]*A[nu,k] )
  + lam*eps3st[mu,al,nu]*( metric[i,j]*A[mu,i]*d_al(A[nu,j])
                          + 1/3*eps3[i,j,k]*A[mu,i]*A[al,j]*A[nu,k] )
)";

char const *kAbelianCsSource = R"(# abelian Chern-Simons in first-order split form
model abelian-cs
field A0 momentum=Pi0
field A[_a] kinds=spatial momentum=Pi
lagrangian eps2up[a,b]*A[b]*dot(A[a]) + 2*A0*eps2up[a,b]*d_a(A[b])
covfield A[_mu] kinds=spacetime splits=A0,A
covlagrangian eps3st[mu,al,nu]*A[mu]*d_al(A[nu])
)";

char const *kMaxwellSource = R"(# first-order (phase-space) Maxwell on the 2d slice
model maxwell-first-order
field A0 momentum=piA0
field A[_a] kinds=spatial momentum=piA
field E[^a] kinds=spatial momentum=sigma
lagrangian
    E[a]*dot(A[a])
  - 1/2*sdelta[a,b]*E[a]*E[b]
  - 1/2*(eps2up[a,b]*d_a(A[b]))*(eps2up[c,d]*d_c(A[d]))
  + A0*d_a(E[a])
)";

} // namespace

std::vector<std::string> builtin_names()
{
    return {"pcs", "palatini", "abelian-cs", "maxwell-first-order"};
}

Model builtin(std::string const &name)
{
    if (name == "pcs")
        return parse_model(kPcsSource);
    if (name == "palatini") {
        Model m = parse_model(kPcsSource);
        m.name = "palatini";
        m.has_lam = false;
        m.split_lagrangian = substitute_lam(m.split_lagrangian, Rat(0));
        if (m.covariant_action)
            m.covariant_action = substitute_lam(*m.covariant_action, Rat(0));
        return m;
    }
    if (name == "abelian-cs")
        return parse_model(kAbelianCsSource);
    if (name == "maxwell-first-order")
        return parse_model(kMaxwellSource);
    std::string names;
    for (auto const &n : builtin_names())
        names += (names.empty() ? "" : ", ") + n;
    throw structural_error("unknown builtin model '" + name + "'; available: " + names);
}

std::pair<Expression, RatFunc> normalize_content(Expression const &x)
{
    auto cf = canon::canonicalize(x);
    if (cf.expression.is_empty())
        return {cf.expression, RatFunc(1)};
    // gather rational contents; fall back to 1 on lam-dependent denominators
    Int num_gcd = 0, den_lcm = 1;
    for (auto const &t : cf.expression.terms) {
        if (t.coeff.den().degree() > 0)
            return {cf.expression, RatFunc(1)};
        Rat dc = t.coeff.den().coeff(0);
        for (int k = 0; k <= t.coeff.num().degree(); ++k) {
            Rat c = t.coeff.num().coeff(k) / dc;
            if (c == 0)
                continue;
            Int n = numerator(c) < 0 ? Int(-numerator(c)) : numerator(c);
            Int d = denominator(c);
            num_gcd = num_gcd == 0 ? n : boost::multiprecision::gcd(num_gcd, n);
            den_lcm = den_lcm / boost::multiprecision::gcd(den_lcm, d) * d;
        }
    }
    if (num_gcd == 0)
        return {cf.expression, RatFunc(1)};
    Rat content(num_gcd, den_lcm);
    // sign from the canonically first term's leading numerator coefficient
    Rat lead = cf.expression.terms.front().coeff.num().leading();
    if (lead < 0)
        content = -content;
    RatFunc f{Rat(content)};
    return {scale(cf.expression, RatFunc(1) / f), f};
}

std::vector<std::pair<std::string, Expression>> euler_lagrange(Model const &m)
{
    if (!m.covariant_action)
        throw structural_error("model '" + m.name + "' has no covariant action");
    canon::ScopedMetric mg(m.metric);
    std::vector<std::pair<std::string, Expression>> out;
    for (auto const &cf : m.cov_fields) {
        std::vector<Index> pattern = cf.slots; // declaration names are usable
        auto [norm, factor] =
            normalize_content(vary::functional_derivative(*m.covariant_action, cf.name,
                                                          pattern));
        (void)factor;
        out.emplace_back(cf.name, norm);
    }
    return out;
}

} // namespace hjcas::model
