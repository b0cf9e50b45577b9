/**
 * @file degenerate.hpp
 * @brief Gaussian factors whose covariance may be singular.
 *
 * A degenerate factor over x in R^n is
 *
 *     C(Q'x; Lambda, h, g) * delta(R'x - c)
 *
 * where [Q R] is orthogonal, Lambda is a non-negative diagonal precision over
 * the n-k free directions Q, and the k columns of R carry hard linear
 * constraints R'x = c. Every operation here keeps the factor in that form.
 */

#ifndef DEGEN_DEGENERATE_HPP
#define DEGEN_DEGENERATE_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>
#include "degen/canonical.hpp"
#include "degen/scope.hpp"
#include "degen/subspace.hpp"

namespace degen
{

struct OpOptions
{
    // Rank decisions on basis products and compact decompositions of covariances
    RankTolerance rank{1e-10};
    // Relative residual above which a hard-constraint system counts as unsolvable
    double consistency = 1e-8;
    // When false the log-normaliser g is not propagated (left at 0)
    bool trackNormaliser = true;
};

class DegenerateFactor
{
public:
    // Unity over the empty scope
    DegenerateFactor();
    DegenerateFactor(Scope scope, Matrix Q, Matrix R, Vector lambda, Vector h, Vector c, double g);

    static DegenerateFactor vacuous(const Scope & scope);
    // Distinguished value for a product of contradictory constraints
    static DegenerateFactor zero(const Scope & scope);
    // Unit point mass at x0
    static DegenerateFactor dirac(const Scope & scope, const Vector & x0);

    const Scope & scope() const { return scope_; }
    const Matrix & Q() const { return Q_; }
    const Matrix & R() const { return R_; }
    const Vector & lambda() const { return lambda_; }
    const Vector & h() const { return h_; }
    const Vector & c() const { return c_; }
    double g() const { return g_; }

    Index dim() const { return scope_.dim(); }
    Index degeneracy() const { return R_.cols(); }
    bool isZero() const { return zero_; }
    bool isNormalisable() const;

    // Description of the first broken structural invariant, if any
    std::optional<std::string> invariantViolation(double tol = 1e-10) const;

    DegenerateFactor withG(double g) const;
    DegenerateFactor withLambda(Vector lambda) const;

private:
    Scope scope_;
    Matrix Q_, R_;
    Vector lambda_, h_, c_;
    double g_ = 0.0;
    bool zero_ = false;
};

struct Moments
{
    Vector mean;
    Matrix covariance;
    Index rank = 0;
};

struct KLResult
{
    double value = 0.0;
    bool infinite = false;
};

struct UnscentedParams
{
    double alpha = 1.0;
    double beta = 2.0;
    double kappa = 0.0;
};

struct SigmaPoints
{
    Matrix points;
    Vector meanWeights;
    Vector covWeights;
};

struct EquivalentTransform
{
    Matrix A;
    Vector b;
    DegenerateFactor noise;
    // Moment-matched joint statistics of (x, y) used to build the above
    Vector mean;
    Matrix covariance;
};

using JointMap = std::function<Vector(const Vector & x, const Vector & w)>;

DegenerateFactor fromGaussian(const Scope & scope, const Vector & mean, const Matrix & covariance,
                              const RankTolerance & tol = {});
DegenerateFactor fromGaussian(const Vector & mean, const Matrix & covariance, const RankTolerance & tol = {});

Moments moments(const DegenerateFactor & phi);
double normalisingG(const DegenerateFactor & phi);
DegenerateFactor normalise(const DegenerateFactor & phi);
// Log of the canonical component at x, or nullopt when x is off the support
std::optional<double> logDensity(const DegenerateFactor & phi, const Vector & x, const RankTolerance & tol = {1e-9});

DegenerateFactor affineTransform(const DegenerateFactor & phi, const Matrix & A, const Vector & b,
                                 const Scope & newScope, const OpOptions & opts = {});
DegenerateFactor marginalise(const DegenerateFactor & phi, const std::vector<std::string> & outVars,
                             const OpOptions & opts = {});
DegenerateFactor multiply(const DegenerateFactor & a, const DegenerateFactor & b, const OpOptions & opts = {});
DegenerateFactor divide(const DegenerateFactor & a, const DegenerateFactor & b, const OpOptions & opts = {});
DegenerateFactor reduce(const DegenerateFactor & phi, const Evidence & evidence, const OpOptions & opts = {});

DegenerateFactor extendScope(const DegenerateFactor & phi, const Scope & newVars);
DegenerateFactor rearrangeScope(const DegenerateFactor & phi, const Scope & newOrder);
// Extend with any missing variables, then reorder to match target
DegenerateFactor align(const DegenerateFactor & phi, const Scope & target);

// Joint factor over (x, y) for y = A x + b + w with w distributed as noise
DegenerateFactor representConditional(const DegenerateFactor & noise, const Matrix & A, const Vector & b,
                                      const Scope & xScope, const Scope & yScope, const OpOptions & opts = {});

SigmaPoints sigmaPoints(const DegenerateFactor & prior, const UnscentedParams & params = {});
// prior is over (x, w); xVars names the x part, the remaining variables form w
EquivalentTransform equivalentTransformation(const DegenerateFactor & prior, const std::vector<std::string> & xVars,
                                             const JointMap & f, const Scope & noiseScope,
                                             const UnscentedParams & params = {}, const OpOptions & opts = {});

KLResult klDivergence(const DegenerateFactor & p, const DegenerateFactor & q, const RankTolerance & tol = {1e-9});

// N(Q Lambda^-1 h + R c, Q Lambda^-1 Q' + a R R'), scaled by the canonical
// part's mass; only meant for checking other code
CanonicalFactor denseLimitOracle(const DegenerateFactor & phi, double a);

// k = 0 factors only
CanonicalFactor toCanonical(const DegenerateFactor & phi);
DegenerateFactor fromCanonical(const CanonicalFactor & phi);

} // namespace degen

#endif
