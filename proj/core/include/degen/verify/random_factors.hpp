#ifndef DEGEN_VERIFY_RANDOM_FACTORS_HPP
#define DEGEN_VERIFY_RANDOM_FACTORS_HPP

#include <random>
#include <string>
#include <vector>
#include "degen/canonical.hpp"
#include "degen/degenerate.hpp"

namespace degen::verify
{

using Rng = std::mt19937_64;

Vector gaussianVector(Rng & rng, Index n);
Matrix gaussianMatrix(Rng & rng, Index rows, Index cols);
// Haar-distributed orthogonal matrix
Matrix randomOrthogonal(Rng & rng, Index n);
// Splits n into at most parts blocks named prefix0, prefix1, ...
Scope randomScope(Rng & rng, Index n, int parts, const std::string & prefix = "v");

// Degeneracy k, Lambda drawn in [lambdaMin, lambdaMax], random h, c and g
DegenerateFactor randomFactor(Rng & rng, const Scope & scope, Index degeneracy, double lambdaMin = 0.5,
                              double lambdaMax = 2.0);
CanonicalFactor randomCanonical(Rng & rng, const Scope & scope, double eigMin = 0.5, double eigMax = 2.0);

// Draws from a normalisable factor through x = Q(Lambda^-1 h + Lambda^-1/2 e) + R c
Matrix sampleFactor(Rng & rng, const DegenerateFactor & phi, Index count);

} // namespace degen::verify

#endif
