#pragma once
// Exact rational arithmetic. All probabilities, utilities and values in the
// library are cbs::Rational; nothing is ever rounded to floating point.

#include <boost/multiprecision/cpp_int.hpp>

#include <string>

#include "cbs/errors.hpp"

namespace cbs {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

// Parses "p", "-p" or "p/q" (q > 0 after normalization). Whitespace is not
// accepted; env files store rationals exactly in this form.
inline Rational parse_rational(const std::string& text) {
    if (text.empty()) throw ParseError("empty rational literal");
    for (char c : text) {
        if (!(c == '-' || c == '/' || (c >= '0' && c <= '9')))
            throw ParseError("bad rational literal '" + text + "'");
    }
    try {
        Rational r(text);
        return r;
    } catch (const std::exception&) {
        throw ParseError("bad rational literal '" + text + "'");
    }
}

// Canonical text form: integers as "p", otherwise "p/q" with q > 0.
inline std::string to_string(const Rational& r) {
    if (denominator(r) == 1) return numerator(r).str();
    return numerator(r).str() + "/" + denominator(r).str();
}

inline Rational rational_pow(const Rational& base, unsigned exp) {
    Rational acc(1);
    Rational b = base;
    unsigned e = exp;
    while (e > 0) {
        if (e & 1u) acc *= b;
        b *= b;
        e >>= 1u;
    }
    return acc;
}

inline Rational rational_abs(const Rational& r) { return r < 0 ? Rational(-r) : r; }

}  // namespace cbs
