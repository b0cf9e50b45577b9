#include "degen/canonical.hpp"
#include "degen/errors.hpp"

#include <cmath>
#include <numbers>
#include <Eigen/Cholesky>

namespace degen
{

namespace
{

void requireSameScope(const CanonicalFactor & a, const CanonicalFactor & b)
{
    if (!(a.scope == b.scope))
        throw ContractViolation("canonical factors have different scopes");
}

Matrix gather(const Matrix & M, const std::vector<Index> & r, const std::vector<Index> & c)
{
    return M(r, c);
}

} // namespace

CanonicalFactor CanonicalFactor::vacuous(const Scope & scope)
{
    const Index n = scope.dim();
    return {scope, Matrix::Zero(n, n), Vector::Zero(n), 0.0};
}

bool isPositiveDefinite(const Matrix & K, const RankTolerance & tol)
{
    if (K.rows() == 0)
        return true;
    if (!allFinite(K))
        return false;
    Eigen::LDLT<Matrix> ldlt(symmetrise(K));
    if (ldlt.info() != Eigen::Success)
        return false;
    const Vector d = ldlt.vectorD();
    const double scale = d.cwiseAbs().maxCoeff();
    return scale > 0.0 && d.minCoeff() > tol.cutoff(K.rows(), K.cols(), scale);
}

double normalisingG(const Matrix & K, const Vector & h, const RankTolerance & tol)
{
    if (!isPositiveDefinite(K, tol))
        throw NotNormalisable("precision matrix is not positive definite");
    const Index n = K.rows();
    if (n == 0)
        return 0.0;
    Eigen::LLT<Matrix> llt(symmetrise(K));
    const double logDetK = 2.0*llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    // log|2 pi K^-1| = n log 2pi - log|K|
    return -0.5*h.dot(llt.solve(h)) - 0.5*(static_cast<double>(n)*std::log(2.0*std::numbers::pi) - logDetK);
}

CanonicalFactor normalise(const CanonicalFactor & phi)
{
    CanonicalFactor out = phi;
    out.g = normalisingG(phi.K, phi.h);
    return out;
}

CanonicalFactor cMarginalise(const CanonicalFactor & phi, const std::vector<std::string> & outVars,
                             const RankTolerance & tol)
{
    if (outVars.empty())
        return phi;
    const Scope kept = phi.scope.without(outVars);
    const auto ix = phi.scope.indices(kept.names());
    const auto iy = phi.scope.indices(outVars);

    const Matrix Kxx = gather(phi.K, ix, ix);
    const Matrix Kxy = gather(phi.K, ix, iy);
    const Matrix Kyy = gather(phi.K, iy, iy);
    const Vector hx = phi.h(ix);
    const Vector hy = phi.h(iy);

    if (!isPositiveDefinite(Kyy, tol))
        throw DegeneracyDetected("marginalised precision block is singular");
    Eigen::LLT<Matrix> llt(symmetrise(Kyy));
    const Matrix KyyInvKyx = llt.solve(Kxy.transpose());
    const Vector KyyInvHy = llt.solve(hy);
    const double logDetKyy = 2.0*llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double ny = static_cast<double>(iy.size());

    CanonicalFactor out;
    out.scope = kept;
    out.K = symmetrise(Kxx - Kxy*KyyInvKyx);
    out.h = hx - Kxy*KyyInvHy;
    out.g = phi.g + 0.5*hy.dot(KyyInvHy) + 0.5*(ny*std::log(2.0*std::numbers::pi) - logDetKyy);
    return out;
}

CanonicalFactor cMultiply(const CanonicalFactor & a, const CanonicalFactor & b)
{
    requireSameScope(a, b);
    return {a.scope, symmetrise(a.K + b.K), a.h + b.h, a.g + b.g};
}

CanonicalFactor cDivide(const CanonicalFactor & a, const CanonicalFactor & b)
{
    requireSameScope(a, b);
    return {a.scope, symmetrise(a.K - b.K), a.h - b.h, a.g - b.g};
}

CanonicalFactor cReduce(const CanonicalFactor & phi, const Evidence & evidence)
{
    const auto names = evidenceNames(evidence);
    const Scope kept = phi.scope.without(names);
    const auto ix = phi.scope.indices(kept.names());
    const auto iy = phi.scope.indices(names);
    const Vector y0 = stackEvidence(evidence);
    if (y0.size() != static_cast<Index>(iy.size()))
        throw ContractViolation("evidence dimension does not match scope");

    const Matrix Kxy = gather(phi.K, ix, iy);
    const Matrix Kyy = gather(phi.K, iy, iy);
    const Vector hy = phi.h(iy);

    CanonicalFactor out;
    out.scope = kept;
    out.K = symmetrise(gather(phi.K, ix, ix));
    out.h = phi.h(ix) - Kxy*y0;
    out.g = phi.g + hy.dot(y0) - 0.5*y0.dot(Kyy*y0);
    return out;
}

CanonicalFactor cRescopeAffine(const CanonicalFactor & phi, const Matrix & A, const Vector & b,
                               const Scope & newScope)
{
    if (A.rows() != phi.dim() || b.size() != phi.dim() || A.cols() != newScope.dim())
        throw ContractViolation("affine rescope dimensions are inconsistent");
    const Vector Kb = phi.K*b;
    CanonicalFactor out;
    out.scope = newScope;
    out.K = symmetrise(A.transpose()*phi.K*A);
    out.h = A.transpose()*(phi.h - Kb);
    out.g = phi.g + (phi.h - 0.5*Kb).dot(b);
    return out;
}

CanonicalFactor cAlign(const CanonicalFactor & phi, const Scope & target)
{
    for (const auto & v : phi.scope.variables())
        if (!target.contains(v.name) || target.variable(v.name).dim != v.dim)
            throw ContractViolation("target scope does not contain variable " + v.name);
    const Index n = target.dim();
    CanonicalFactor out{target, Matrix::Zero(n, n), Vector::Zero(n), phi.g};
    const auto idx = target.indices(phi.scope.names());
    out.K(idx, idx) = phi.K;
    out.h(idx) = phi.h;
    return out;
}

CanonicalMoments cMoments(const CanonicalFactor & phi)
{
    if (!isPositiveDefinite(phi.K))
        throw NotNormalisable("precision matrix is not positive definite");
    if (phi.dim() == 0)
        return {Vector(0), Matrix(0, 0)};
    Eigen::LLT<Matrix> llt(symmetrise(phi.K));
    const Index n = phi.dim();
    const Matrix P = llt.solve(Matrix::Identity(n, n));
    return {llt.solve(phi.h), symmetrise(P)};
}

double cLogValue(const CanonicalFactor & phi, const Vector & x)
{
    return -0.5*x.dot(phi.K*x) + phi.h.dot(x) + phi.g;
}

} // namespace degen
