#pragma once
// Exact rational arithmetic for credits, probabilities, and scores.
//
// Budget feasibility is decided by a hard indicator, so money is never
// represented in binary floating point anywhere in the engine. Costs and
// budgets are entered as decimals (2 places), success probabilities as
// decimals (typically 3 places), and calibrated costs are exact quotients
// of the two.

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace toolbudget {

using Rat = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

// Credits and prices share the rational representation.
using Money = Rat;

inline double to_double(const Rat& r) { return r.template convert_to<double>(); }

inline Rat rat_from_int(std::int64_t n) { return Rat(n); }

// Parses "p/q", "p", "-p.q" (decimal) into an exact rational.
Rat rat_parse(const std::string& text);

// Canonical serialization: "p" when integral, else "p/q" fully reduced.
std::string rat_canonical(const Rat& r);

// Decimal rendering with a fixed number of places, round half away from zero.
// Used for human-facing context blocks and feedback traces, never for ledgers.
std::string rat_decimal(const Rat& r, int places = 2);

}  // namespace toolbudget
