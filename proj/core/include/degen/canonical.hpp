#ifndef DEGEN_CANONICAL_HPP
#define DEGEN_CANONICAL_HPP

#include <string>
#include <vector>
#include "degen/scope.hpp"
#include "degen/subspace.hpp"

namespace degen
{

// exp(-0.5 x'Kx + h'x + g) over a named scope
struct CanonicalFactor
{
    Scope scope;
    Matrix K;
    Vector h;
    double g = 0.0;

    static CanonicalFactor vacuous(const Scope & scope);
    Index dim() const { return scope.dim(); }
};

// Positive definiteness via LDLT with pivots above tol relative to the largest pivot
bool isPositiveDefinite(const Matrix & K, const RankTolerance & tol = {});

double normalisingG(const Matrix & K, const Vector & h, const RankTolerance & tol = {});
CanonicalFactor normalise(const CanonicalFactor & phi);

CanonicalFactor cMarginalise(const CanonicalFactor & phi, const std::vector<std::string> & outVars,
                             const RankTolerance & tol = {});
CanonicalFactor cMultiply(const CanonicalFactor & a, const CanonicalFactor & b);
CanonicalFactor cDivide(const CanonicalFactor & a, const CanonicalFactor & b);
CanonicalFactor cReduce(const CanonicalFactor & phi, const Evidence & evidence);

// phi is a factor over y = A x + b; result is the same function expressed over x
CanonicalFactor cRescopeAffine(const CanonicalFactor & phi, const Matrix & A, const Vector & b,
                               const Scope & newScope);

// Zero-pad to a superset scope and reorder to match it
CanonicalFactor cAlign(const CanonicalFactor & phi, const Scope & target);

// Mean and covariance of a normalisable factor
struct CanonicalMoments
{
    Vector mean;
    Matrix covariance;
};
CanonicalMoments cMoments(const CanonicalFactor & phi);

double cLogValue(const CanonicalFactor & phi, const Vector & x);

} // namespace degen

#endif
