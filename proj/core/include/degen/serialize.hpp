#ifndef DEGEN_SERIALIZE_HPP
#define DEGEN_SERIALIZE_HPP

#include <string>
#include <vector>
#include "degen/degenerate.hpp"

namespace degen
{

// JSON object with keys scope, Q, R, lambda, h, c, g (and zero when set).
// scope is a list of {name, dim}; matrices are lists of rows. Doubles are
// written with enough digits to read back bit-identical.
std::string factorToJson(const DegenerateFactor & phi, int indent = -1);
DegenerateFactor factorFromJson(const std::string & text);

// Array of labelled factors: [{"label": ..., "factor": {...}}, ...]
std::string factorsToJson(const std::vector<std::pair<std::string, DegenerateFactor>> & factors, int indent = -1);

} // namespace degen

#endif
