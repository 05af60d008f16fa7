#include "toolbudget/rational.hpp"

#include <boost/multiprecision/cpp_int.hpp>

namespace toolbudget {

namespace {

BigInt pow10(std::size_t n) {
    BigInt p = 1;
    for (std::size_t i = 0; i < n; ++i) p *= 10;
    return p;
}

// strict base-10 parse; cpp_int would read a leading zero as octal
BigInt parse_int(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("empty integer literal");
    std::size_t i = text[0] == '-' || text[0] == '+' ? 1 : 0;
    if (i == text.size()) throw std::invalid_argument("bad integer literal: " + text);
    BigInt value = 0;
    for (; i < text.size(); ++i) {
        if (text[i] < '0' || text[i] > '9')
            throw std::invalid_argument("bad integer literal: " + text);
        value = value * 10 + (text[i] - '0');
    }
    return text[0] == '-' ? BigInt(-value) : value;
}

}  // namespace

Rat rat_parse(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("empty rational literal");
    const auto slash = text.find('/');
    if (slash != std::string::npos) {
        BigInt num = parse_int(text.substr(0, slash));
        BigInt den = parse_int(text.substr(slash + 1));
        if (den == 0) throw std::invalid_argument("zero denominator: " + text);
        return Rat(num, den);
    }
    const auto dot = text.find('.');
    if (dot == std::string::npos) return Rat(parse_int(text));
    bool neg = text[0] == '-';
    std::string digits = text.substr(0, dot) + text.substr(dot + 1);
    if (neg) digits = digits.substr(1);
    const std::size_t places = text.size() - dot - 1;
    if (digits.empty() || places == 0) throw std::invalid_argument("bad decimal literal: " + text);
    Rat r(parse_int(digits), pow10(places));
    return neg ? -r : r;
}

std::string rat_canonical(const Rat& r) {
    const BigInt num = boost::multiprecision::numerator(r);
    const BigInt den = boost::multiprecision::denominator(r);
    if (den == 1) return num.str();
    return num.str() + "/" + den.str();
}

std::string rat_decimal(const Rat& r, int places) {
    const bool neg = r < 0;
    const Rat mag = neg ? Rat(-r) : r;
    const BigInt scale = pow10(static_cast<std::size_t>(places));
    // round half away from zero
    const Rat scaled = mag * scale;
    BigInt units = boost::multiprecision::numerator(scaled) / boost::multiprecision::denominator(scaled);
    const Rat frac = scaled - Rat(units);
    if (frac * 2 >= 1) ++units;
    BigInt whole = units / scale;
    BigInt rem = units % scale;
    std::string frac_str = rem.str();
    if (places > 0) {
        frac_str.insert(frac_str.begin(), static_cast<std::size_t>(places) - frac_str.size(), '0');
    }
    std::string out = (neg && units != 0 ? "-" : "") + whole.str();
    if (places > 0) out += "." + frac_str;
    return out;
}

}  // namespace toolbudget
