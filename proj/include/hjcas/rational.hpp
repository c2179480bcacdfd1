#pragma once

// Exact coefficient arithmetic: arbitrary-precision rationals and rational
// functions in the single coupling `lam` (the inverse Barbero-Immirzi-like
// parameter). No floating point anywhere.

#include <boost/multiprecision/cpp_int.hpp>

#include <cassert>
#include <stdexcept>
#include <string>
#include <vector>

namespace hjcas {

using Int = boost::multiprecision::cpp_int;
using Rat = boost::multiprecision::cpp_rational;

inline Rat rat(long n, long d = 1) { return Rat(Int(n), Int(d)); }

inline std::string rat_to_string(Rat const &r)
{
    std::string s = numerator(r).str();
    if (denominator(r) != 1)
        s += "/" + denominator(r).str();
    return s;
}

/// dense univariate polynomial over Rat, coeffs[k] is the lam^k coefficient
class Poly
{
  public:
    Poly() = default;
    explicit Poly(Rat c)
    {
        if (c != 0)
            coeffs_.push_back(std::move(c));
    }
    static Poly lam()
    {
        Poly p;
        p.coeffs_ = {Rat(0), Rat(1)};
        return p;
    }

    bool is_zero() const { return coeffs_.empty(); }
    int degree() const { return (int)coeffs_.size() - 1; } // -1 for zero
    Rat coeff(int k) const
    {
        if (k < 0 || k >= (int)coeffs_.size())
            return Rat(0);
        return coeffs_[k];
    }
    Rat leading() const { return is_zero() ? Rat(0) : coeffs_.back(); }

    friend Poly operator+(Poly const &a, Poly const &b)
    {
        Poly r;
        size_t n = std::max(a.coeffs_.size(), b.coeffs_.size());
        r.coeffs_.resize(n, Rat(0));
        for (size_t i = 0; i < n; ++i)
            r.coeffs_[i] = a.coeff((int)i) + b.coeff((int)i);
        r.trim();
        return r;
    }
    friend Poly operator-(Poly const &a, Poly const &b)
    {
        Poly r;
        size_t n = std::max(a.coeffs_.size(), b.coeffs_.size());
        r.coeffs_.resize(n, Rat(0));
        for (size_t i = 0; i < n; ++i)
            r.coeffs_[i] = a.coeff((int)i) - b.coeff((int)i);
        r.trim();
        return r;
    }
    friend Poly operator*(Poly const &a, Poly const &b)
    {
        if (a.is_zero() || b.is_zero())
            return Poly();
        Poly r;
        r.coeffs_.assign(a.coeffs_.size() + b.coeffs_.size() - 1, Rat(0));
        for (size_t i = 0; i < a.coeffs_.size(); ++i)
            for (size_t j = 0; j < b.coeffs_.size(); ++j)
                r.coeffs_[i + j] += a.coeffs_[i] * b.coeffs_[j];
        r.trim();
        return r;
    }
    Poly operator-() const
    {
        Poly r = *this;
        for (auto &c : r.coeffs_)
            c = -c;
        return r;
    }

    /// polynomial division, returns (quotient, remainder)
    static std::pair<Poly, Poly> divmod(Poly a, Poly const &b)
    {
        if (b.is_zero())
            throw std::domain_error("Poly: division by zero");
        Poly q;
        q.coeffs_.assign(std::max<int>(a.degree() - b.degree() + 1, 0), Rat(0));
        while (!a.is_zero() && a.degree() >= b.degree()) {
            Rat f = a.leading() / b.leading();
            int shift = a.degree() - b.degree();
            q.coeffs_[shift] += f;
            for (int i = 0; i <= b.degree(); ++i)
                a.coeffs_[i + shift] -= f * b.coeffs_[i];
            a.trim();
        }
        q.trim();
        return {q, a};
    }

    static Poly gcd(Poly a, Poly b)
    {
        while (!b.is_zero()) {
            auto [q, r] = divmod(a, b);
            (void)q;
            a = std::move(b);
            b = std::move(r);
        }
        if (a.is_zero())
            return a;
        // normalize monic
        Rat l = a.leading();
        for (auto &c : a.coeffs_)
            c /= l;
        return a;
    }

    Rat eval(Rat const &x) const
    {
        Rat acc(0);
        for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it)
            acc = acc * x + *it;
        return acc;
    }

    bool operator==(Poly const &o) const { return coeffs_ == o.coeffs_; }

    std::string str(std::string const &var = "lam") const;

  private:
    void trim()
    {
        while (!coeffs_.empty() && coeffs_.back() == 0)
            coeffs_.pop_back();
    }
    std::vector<Rat> coeffs_;
};

/// reduced ratio of two polynomials in lam; denominator kept monic
class RatFunc
{
  public:
    RatFunc() : num_(), den_(Rat(1)) {}
    RatFunc(Rat c) : num_(std::move(c)), den_(Rat(1)) {}
    RatFunc(long c) : num_(Rat(c)), den_(Rat(1)) {}
    RatFunc(Poly n, Poly d) : num_(std::move(n)), den_(std::move(d)) { reduce(); }
    static RatFunc lam() { return RatFunc(Poly::lam(), Poly(Rat(1))); }
    static RatFunc of(long n, long d) { return RatFunc(Rat(Int(n), Int(d))); }

    bool is_zero() const { return num_.is_zero(); }
    bool is_one() const { return num_ == Poly(Rat(1)) && den_ == Poly(Rat(1)); }
    bool is_constant() const { return num_.degree() <= 0 && den_.degree() <= 0; }
    /// constant value; only valid when is_constant()
    Rat constant() const
    {
        assert(is_constant());
        if (num_.is_zero())
            return Rat(0);
        return num_.coeff(0) / den_.coeff(0);
    }
    Poly const &num() const { return num_; }
    Poly const &den() const { return den_; }

    friend RatFunc operator+(RatFunc const &a, RatFunc const &b)
    {
        return RatFunc(a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_);
    }
    friend RatFunc operator-(RatFunc const &a, RatFunc const &b)
    {
        return RatFunc(a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_);
    }
    friend RatFunc operator*(RatFunc const &a, RatFunc const &b)
    {
        return RatFunc(a.num_ * b.num_, a.den_ * b.den_);
    }
    friend RatFunc operator/(RatFunc const &a, RatFunc const &b)
    {
        if (b.is_zero())
            throw std::domain_error("RatFunc: division by zero");
        return RatFunc(a.num_ * b.den_, a.den_ * b.num_);
    }
    RatFunc operator-() const
    {
        RatFunc r = *this;
        r.num_ = -r.num_;
        return r;
    }
    RatFunc &operator+=(RatFunc const &o) { return *this = *this + o; }
    RatFunc &operator-=(RatFunc const &o) { return *this = *this - o; }
    RatFunc &operator*=(RatFunc const &o) { return *this = *this * o; }

    bool operator==(RatFunc const &o) const
    {
        return num_ == o.num_ && den_ == o.den_;
    }

    /// exact substitution lam -> value (e.g. the Palatini limit lam = 0)
    RatFunc subst_lam(Rat const &v) const
    {
        Rat d = den_.eval(v);
        if (d == 0)
            throw std::domain_error("RatFunc: pole at substituted value");
        return RatFunc(Rat(num_.eval(v) / d));
    }

    std::string str(std::string const &var = "lam") const;

  private:
    void reduce()
    {
        if (den_.is_zero())
            throw std::domain_error("RatFunc: zero denominator");
        if (num_.is_zero()) {
            den_ = Poly(Rat(1));
            return;
        }
        Poly g = Poly::gcd(num_, den_);
        if (g.degree() > 0) {
            num_ = Poly::divmod(num_, g).first;
            den_ = Poly::divmod(den_, g).first;
        }
        Rat l = den_.leading();
        if (l != 1) {
            // make denominator monic
            Poly scaled_n, scaled_d;
            num_ = scale(num_, Rat(1) / l);
            den_ = scale(den_, Rat(1) / l);
        }
    }
    static Poly scale(Poly const &p, Rat const &f)
    {
        return p * Poly(f);
    }

    Poly num_, den_;
};

} // namespace hjcas
