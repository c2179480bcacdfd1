#include "hjcas/rational.hpp"

namespace hjcas {

std::string Poly::str(std::string const &var) const
{
    if (is_zero())
        return "0";
    std::string out;
    bool first = true;
    for (int k = degree(); k >= 0; --k) {
        Rat c = coeff(k);
        if (c == 0)
            continue;
        std::string piece;
        Rat a = c < 0 ? Rat(-c) : c;
        if (k == 0) {
            piece = rat_to_string(a);
        } else {
            std::string pow = (k == 1) ? var : var + "^" + std::to_string(k);
            piece = (a == 1) ? pow : rat_to_string(a) + "*" + pow;
        }
        if (first) {
            out = (c < 0 ? "-" : "") + piece;
            first = false;
        } else {
            out += (c < 0 ? " - " : " + ") + piece;
        }
    }
    return out;
}

std::string RatFunc::str(std::string const &var) const
{
    if (is_zero())
        return "0";
    std::string n = num_.str(var);
    if (den_ == Poly(Rat(1)))
        return n;
    std::string d = den_.str(var);
    bool n_atomic = num_.degree() <= 0 ||
                    (n.find('+') == std::string::npos &&
                     n.find(' ') == std::string::npos);
    bool d_atomic = den_.degree() <= 0 ||
                    (d.find('+') == std::string::npos &&
                     d.find(' ') == std::string::npos);
    if (!n_atomic)
        n = "(" + n + ")";
    if (!d_atomic)
        d = "(" + d + ")";
    return n + "/" + d;
}

} // namespace hjcas
