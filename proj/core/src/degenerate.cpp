#include "degen/degenerate.hpp"
#include "degen/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace degen
{

namespace
{

const double kLog2Pi = std::log(2.0*std::numbers::pi);
constexpr double kEps = std::numeric_limits<double>::epsilon();

Matrix rows(const Matrix & M, const std::vector<Index> & idx)
{
    return M(idx, Eigen::all);
}

double maxOrZero(const Vector & v)
{
    return v.size() == 0 ? 0.0 : v.maxCoeff();
}

struct PrecisionEig
{
    Matrix Z;
    Vector lambda;
};

// Eigenvalues within round-off of zero (relative to scale) are set to exactly zero
PrecisionEig diagonalisePrecision(const Matrix & S, double scale)
{
    SymmetricEigen e = symmetricEigen(S);
    const Index n = e.values.size();
    if (n == 0)
        return {std::move(e.vectors), std::move(e.values)};
    const double big = std::max(scale, e.values.cwiseAbs().maxCoeff());
    const double floor = 16.0*static_cast<double>(n)*kEps*big;
    for (Index i = 0; i < n; ++i)
        if (e.values(i) <= floor)
            e.values(i) = 0.0;
    return {std::move(e.vectors), std::move(e.values)};
}

Matrix hcat(const Matrix & A, const Matrix & B)
{
    Matrix out(A.rows(), A.cols() + B.cols());
    out << A, B;
    return out;
}

Vector vcat(const Vector & a, const Vector & b)
{
    Vector out(a.size() + b.size());
    out << a, b;
    return out;
}

// Least-squares solution of M x = rhs via (M'M)^-1 M' rhs, M full column rank
Vector normalSolve(const Matrix & M, const Vector & rhs)
{
    if (M.cols() == 0)
        return Vector(0);
    const Matrix MtM = symmetrise(M.transpose()*M);
    return MtM.ldlt().solve(M.transpose()*rhs);
}

bool residualTooLarge(const Vector & residual, double scale, const OpOptions & opts)
{
    return residual.size() > 0 && residual.norm() > opts.consistency*(1.0 + scale);
}

// Normalised factor from mean and covariance, rank decided by a compact eigendecomposition
DegenerateFactor fromCovariance(const Scope & scope, const Vector & mean, const SymmetricEigen & eig,
                                Index rank, bool trackNormaliser)
{
    const Index n = scope.dim();
    Matrix Q = eig.vectors.leftCols(rank);
    Matrix R = eig.vectors.rightCols(n - rank);
    const Vector lambda = eig.values.head(rank).cwiseInverse();
    const Vector h = lambda.cwiseProduct(Q.transpose()*mean);
    const Vector c = R.transpose()*mean;
    DegenerateFactor out(scope, std::move(Q), std::move(R), lambda, h, c, 0.0);
    return trackNormaliser ? normalise(out) : out;
}

} // namespace

// ---------------------------------------------------------------------------
// DegenerateFactor

DegenerateFactor::DegenerateFactor()
    : Q_(0, 0), R_(0, 0), lambda_(0), h_(0), c_(0)
{}

DegenerateFactor::DegenerateFactor(Scope scope, Matrix Q, Matrix R, Vector lambda, Vector h, Vector c, double g)
    : scope_(std::move(scope))
    , Q_(std::move(Q))
    , R_(std::move(R))
    , lambda_(std::move(lambda))
    , h_(std::move(h))
    , c_(std::move(c))
    , g_(g)
{
    const Index n = scope_.dim();
    if (Q_.rows() != n || R_.rows() != n || Q_.cols() + R_.cols() != n)
        throw InvalidInput("basis shapes do not match scope dimension");
    if (lambda_.size() != Q_.cols() || h_.size() != Q_.cols() || c_.size() != R_.cols())
        throw InvalidInput("parameter vector sizes do not match bases");
    if (!allFinite(Q_) || !allFinite(R_) || !allFinite(lambda_) || !allFinite(h_) || !allFinite(c_) || !std::isfinite(g_))
        throw InvalidInput("non-finite factor parameter");

    // Keep Lambda descending; stable so equal precisions keep their order
    std::vector<Index> order(static_cast<std::size_t>(lambda_.size()));
    std::iota(order.begin(), order.end(), Index(0));
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return lambda_(a) > lambda_(b); });
    if (!std::is_sorted(order.begin(), order.end()))
    {
        Q_ = Matrix(Q_(Eigen::all, order));
        lambda_ = Vector(lambda_(order));
        h_ = Vector(h_(order));
    }
}

DegenerateFactor DegenerateFactor::vacuous(const Scope & scope)
{
    const Index n = scope.dim();
    return DegenerateFactor(scope, Matrix::Identity(n, n), Matrix(n, 0), Vector::Zero(n), Vector::Zero(n), Vector(0), 0.0);
}

DegenerateFactor DegenerateFactor::zero(const Scope & scope)
{
    DegenerateFactor out = vacuous(scope);
    out.zero_ = true;
    return out;
}

DegenerateFactor DegenerateFactor::dirac(const Scope & scope, const Vector & x0)
{
    const Index n = scope.dim();
    if (x0.size() != n)
        throw InvalidInput("point dimension does not match scope");
    return DegenerateFactor(scope, Matrix(n, 0), Matrix::Identity(n, n), Vector(0), Vector(0), x0, 0.0);
}

bool DegenerateFactor::isNormalisable() const
{
    return !zero_ && (lambda_.size() == 0 || lambda_.minCoeff() > 0.0);
}

std::optional<std::string> DegenerateFactor::invariantViolation(double tol) const
{
    const Index n = dim();
    const Index m = Q_.cols(), k = R_.cols();
    if (Q_.rows() != n || R_.rows() != n || m + k != n)
        return "basis shapes inconsistent with scope";
    if (m > 0 && (Q_.transpose()*Q_ - Matrix::Identity(m, m)).cwiseAbs().maxCoeff() > tol)
        return "Q is not semi-orthogonal";
    if (k > 0 && (R_.transpose()*R_ - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() > tol)
        return "R is not semi-orthogonal";
    if (m > 0 && k > 0 && (Q_.transpose()*R_).cwiseAbs().maxCoeff() > tol)
        return "Q and R are not orthogonal";
    for (Index i = 0; i < m; ++i)
    {
        if (!(lambda_(i) >= 0.0))
            return "Lambda has a negative entry";
        if (i > 0 && lambda_(i) > lambda_(i - 1))
            return "Lambda is not descending";
    }
    if (!allFinite(h_) || !allFinite(c_) || !std::isfinite(g_))
        return "non-finite parameter";
    return std::nullopt;
}

DegenerateFactor DegenerateFactor::withG(double g) const
{
    DegenerateFactor out = *this;
    out.g_ = g;
    return out;
}

DegenerateFactor DegenerateFactor::withLambda(Vector lambda) const
{
    if (lambda.size() != lambda_.size())
        throw InvalidInput("precision vector has the wrong size");
    DegenerateFactor out = *this;
    out.lambda_ = std::move(lambda);
    return out;
}

// ---------------------------------------------------------------------------
// Conversions and queries

DegenerateFactor fromGaussian(const Scope & scope, const Vector & mean, const Matrix & covariance,
                              const RankTolerance & tol)
{
    const Index n = scope.dim();
    if (mean.size() != n || covariance.rows() != n || covariance.cols() != n)
        throw InvalidInput("mean/covariance dimensions do not match scope");
    requireFinite(mean, "mean");
    requireFinite(covariance, "covariance");
    if (n == 0)
        return DegenerateFactor(scope, Matrix(0, 0), Matrix(0, 0), Vector(0), Vector(0), Vector(0), 0.0);
    const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-10*scale)
        throw InvalidInput("covariance is not symmetric");

    const SymmetricEigen eig = symmetricEigen(covariance);
    const double top = std::max(0.0, eig.values(0));
    if (eig.values(n - 1) < -1e-9*top)
        throw InvalidInput("covariance is indefinite");
    const double cut = tol.cutoff(n, n, top);
    Index r = 0;
    while (r < n && eig.values(r) > cut)
        ++r;
    return fromCovariance(scope, mean, eig, r, true);
}

DegenerateFactor fromGaussian(const Vector & mean, const Matrix & covariance, const RankTolerance & tol)
{
    return fromGaussian(Scope{{"x", mean.size()}}, mean, covariance, tol);
}

Moments moments(const DegenerateFactor & phi)
{
    if (phi.isZero())
        throw InfiniteVariance("zero factor has no moments");
    if (!phi.isNormalisable())
        throw InfiniteVariance("factor has zero precision along a free direction");
    const Vector inv = phi.lambda().cwiseInverse();
    Moments m;
    m.mean = phi.Q()*inv.cwiseProduct(phi.h()) + phi.R()*phi.c();
    m.covariance = symmetrise(phi.Q()*inv.asDiagonal()*phi.Q().transpose());
    m.rank = phi.Q().cols();
    return m;
}

double normalisingG(const DegenerateFactor & phi)
{
    if (!phi.isNormalisable())
        throw NotNormalisable("factor has zero precision along a free direction");
    const Vector & L = phi.lambda();
    const Vector & h = phi.h();
    double g = 0.0;
    for (Index i = 0; i < L.size(); ++i)
        g += -0.5*h(i)*h(i)/L(i) - 0.5*(kLog2Pi - std::log(L(i)));
    return g;
}

DegenerateFactor normalise(const DegenerateFactor & phi)
{
    return phi.withG(normalisingG(phi));
}

std::optional<double> logDensity(const DegenerateFactor & phi, const Vector & x, const RankTolerance & tol)
{
    if (x.size() != phi.dim())
        throw InvalidInput("query point dimension does not match scope");
    if (phi.isZero())
        return std::nullopt;
    const double thr = tol.relative > 0.0 ? tol.relative : 1e-9;
    if ((phi.R().transpose()*x - phi.c()).norm() > thr*(1.0 + phi.c().norm()))
        return std::nullopt;
    const Vector e = phi.Q().transpose()*x;
    return -0.5*e.dot(phi.lambda().cwiseProduct(e)) + phi.h().dot(e) + phi.g();
}

CanonicalFactor toCanonical(const DegenerateFactor & phi)
{
    if (phi.degeneracy() > 0 || phi.isZero())
        throw ContractViolation("only non-degenerate factors have a canonical form");
    return {phi.scope(), symmetrise(phi.Q()*phi.lambda().asDiagonal()*phi.Q().transpose()), phi.Q()*phi.h(), phi.g()};
}

DegenerateFactor fromCanonical(const CanonicalFactor & phi)
{
    const Index n = phi.dim();
    const PrecisionEig e = diagonalisePrecision(phi.K, 0.0);
    if (n > 0)
    {
        const SymmetricEigen raw = symmetricEigen(phi.K);
        if (raw.values(n - 1) < -1e-9*std::max(1.0, std::abs(raw.values(0))))
            throw InvalidInput("canonical precision is indefinite");
    }
    return DegenerateFactor(phi.scope, e.Z, Matrix(n, 0), e.lambda, e.Z.transpose()*phi.h, Vector(0), phi.g);
}

CanonicalFactor denseLimitOracle(const DegenerateFactor & phi, double a)
{
    if (!(a > 0.0))
        throw InvalidInput("dense-limit parameter must be positive");
    // Canonical part times N(R'x - c; 0, a I)
    const Matrix & Q = phi.Q();
    const Matrix & R = phi.R();
    const double k = static_cast<double>(phi.degeneracy());
    CanonicalFactor out;
    out.scope = phi.scope();
    out.K = symmetrise(Q*phi.lambda().asDiagonal()*Q.transpose() + R*R.transpose()/a);
    out.h = Q*phi.h() + R*phi.c()/a;
    out.g = phi.g() - 0.5*phi.c().squaredNorm()/a - 0.5*k*(kLog2Pi + std::log(a));
    return out;
}

// ---------------------------------------------------------------------------
// Scope manipulation

DegenerateFactor extendScope(const DegenerateFactor & phi, const Scope & newVars)
{
    if (!phi.scope().disjointFrom(newVars))
        throw ContractViolation("extension variables already in scope");
    const Scope scope = phi.scope().unionWith(newVars);
    if (phi.isZero())
        return DegenerateFactor::zero(scope);
    const Index n0 = phi.dim(), m0 = phi.Q().cols(), k = phi.degeneracy(), e = newVars.dim();
    const Index n = n0 + e;

    Matrix Q = Matrix::Zero(n, m0 + e);
    Q.topLeftCorner(n0, m0) = phi.Q();
    Q.bottomRightCorner(e, e).setIdentity();
    Matrix R = Matrix::Zero(n, k);
    R.topRows(n0) = phi.R();
    return DegenerateFactor(scope, std::move(Q), std::move(R), vcat(phi.lambda(), Vector::Zero(e)),
                            vcat(phi.h(), Vector::Zero(e)), phi.c(), phi.g());
}

DegenerateFactor rearrangeScope(const DegenerateFactor & phi, const Scope & newOrder)
{
    if (!phi.scope().isPermutationOf(newOrder))
        throw ContractViolation("new order is not a permutation of the scope");
    if (phi.isZero())
        return DegenerateFactor::zero(newOrder);
    const auto idx = phi.scope().indices(newOrder.names());
    return DegenerateFactor(newOrder, rows(phi.Q(), idx), rows(phi.R(), idx), phi.lambda(), phi.h(), phi.c(), phi.g());
}

DegenerateFactor align(const DegenerateFactor & phi, const Scope & target)
{
    if (phi.scope() == target)
        return phi;
    std::vector<Variable> missing;
    for (const auto & v : target.variables())
        if (!phi.scope().contains(v.name))
            missing.push_back(v);
    const DegenerateFactor ext = missing.empty() ? phi : extendScope(phi, Scope(missing));
    return rearrangeScope(ext, target);
}

// ---------------------------------------------------------------------------
// Affine transformation

DegenerateFactor affineTransform(const DegenerateFactor & phi, const Matrix & A, const Vector & b,
                                 const Scope & newScope, const OpOptions & opts)
{
    if (A.cols() != phi.dim() || A.rows() != b.size() || newScope.dim() != b.size())
        throw InvalidInput("affine map dimensions are inconsistent");
    requireFinite(A, "affine matrix");
    requireFinite(b, "affine offset");
    if (phi.isZero())
        return DegenerateFactor::zero(newScope);
    const Moments mom = moments(phi);

    // Square-root factor of A cov A'
    const Matrix B = A*phi.Q()*phi.lambda().cwiseInverse().cwiseSqrt().asDiagonal();
    const CompactSVD svd = compactSVD(B, opts.rank);
    const Matrix & Qp = svd.U.matrix();
    const Matrix Rp = complement(svd.U).matrix();
    const Vector lambda = svd.s.cwiseAbs2().cwiseInverse();
    const Vector mu = A*mom.mean + b;

    DegenerateFactor out(newScope, Qp, Rp, lambda, lambda.cwiseProduct(Qp.transpose()*mu), Rp.transpose()*mu, 0.0);
    return opts.trackNormaliser ? normalise(out) : out;
}

// ---------------------------------------------------------------------------
// Marginalisation

DegenerateFactor marginalise(const DegenerateFactor & phi, const std::vector<std::string> & outVars,
                             const OpOptions & opts)
{
    if (outVars.empty())
        return phi;
    const Scope kept = phi.scope().without(outVars);
    if (phi.isZero())
        return DegenerateFactor::zero(kept);

    const auto ix = phi.scope().indices(kept.names());
    const auto iy = phi.scope().indices(outVars);
    const Matrix Qx = rows(phi.Q(), ix), Qy = rows(phi.Q(), iy);
    const Matrix Rx = rows(phi.R(), ix), Ry = rows(phi.R(), iy);
    const Vector & L = phi.lambda();
    const Vector & h = phi.h();
    const Vector & c = phi.c();
    const Index m = phi.Q().cols();
    const RankTolerance unit = opts.rank.anchored(1.0);
    const double scale = maxOrZero(L);

    const Matrix U = columnSpace(Qx, unit).matrix();
    const Matrix V = nullSpace(Qx, unit).matrix();
    const Matrix W = columnSpace(Rx.transpose()*Qx, unit).matrix();
    const Matrix Rp = leftNullSpace(U, unit).matrix();
    const Vector cp = Rp.transpose()*(Rx*c);

    const Matrix RyW = Ry*W;
    const Matrix F = (W*pseudoInverse(RyW, unit)*Qy).transpose();
    const Matrix G = (Qx.transpose() - F*Rx.transpose())*U;

    const Matrix VtLV = symmetrise(V.transpose()*L.asDiagonal()*V);
    if (!isPositiveDefinite(VtLV, opts.rank.anchored(scale)))
        throw DivergentIntegral("integral over the marginalised variables diverges");
    Matrix S = Matrix::Zero(m, m);
    if (V.cols() > 0)
        S = V*VtLV.ldlt().solve(V.transpose());

    const Matrix LS = L.asDiagonal()*S;
    const Matrix Khat = symmetrise(G.transpose()*(Matrix(L.asDiagonal()) - LS*L.asDiagonal())*G);
    const PrecisionEig e = diagonalisePrecision(Khat, scale);

    const Vector Fc = F*c;
    const Vector r = h - L.cwiseProduct(Fc);
    const Vector hp = e.Z.transpose()*G.transpose()*(r - LS*r);

    double g = 0.0;
    if (opts.trackNormaliser)
    {
        const double nv = static_cast<double>(V.cols());
        g = phi.g() + (h - 0.5*L.cwiseProduct(Fc)).dot(Fc) + 0.5*r.dot(S*r)
            + 0.5*(nv*kLog2Pi - logDetSPD(VtLV)) - 0.5*logDetSPD(RyW.transpose()*RyW);
    }
    return DegenerateFactor(kept, U*e.Z, Rp, e.lambda, hp, cp, g);
}

// ---------------------------------------------------------------------------
// Multiplication

DegenerateFactor multiply(const DegenerateFactor & a, const DegenerateFactor & b, const OpOptions & opts)
{
    const Scope scope = a.scope().unionWith(b.scope());
    if (a.isZero() || b.isZero())
        return DegenerateFactor::zero(scope);
    const DegenerateFactor p1 = align(a, scope);
    const DegenerateFactor p2 = align(b, scope);

    const Matrix & Q1 = p1.Q(); const Matrix & R1 = p1.R();
    const Matrix & Q2 = p2.Q(); const Matrix & R2 = p2.R();
    const Vector & L1 = p1.lambda(); const Vector & L2 = p2.lambda();
    const Vector & h1 = p1.h(); const Vector & h2 = p2.h();
    const Vector & c1 = p1.c(); const Vector & c2 = p2.c();
    const RankTolerance unit = opts.rank.anchored(1.0);

    const Matrix V = columnSpace(Q1*(Q1.transpose()*R2), unit).matrix();
    const Matrix Rp = hcat(R1, V);
    const Matrix M = R2.transpose()*V;
    const Vector rhs = c2 - R2.transpose()*(R1*c1);
    const Vector bv = normalSolve(M, rhs);
    if (residualTooLarge(M*bv - rhs, c1.norm() + c2.norm(), opts))
        return DegenerateFactor::zero(scope);
    const Vector cp = vcat(c1, bv);

    const Matrix U = leftNullSpace(Rp, unit).matrix();
    const Matrix Khat = symmetrise(U.transpose()*(Q1*L1.asDiagonal()*Q1.transpose() + Q2*L2.asDiagonal()*Q2.transpose())*U);
    const PrecisionEig e = diagonalisePrecision(Khat, std::max(maxOrZero(L1), maxOrZero(L2)));
    const Matrix Qp = U*e.Z;

    const Vector t1 = Q1.transpose()*(V*bv);
    const Vector t2 = Q2.transpose()*(Rp*cp);
    const Vector hp = Qp.transpose()*(Q1*(h1 - L1.cwiseProduct(t1)) + Q2*(h2 - L2.cwiseProduct(t2)));

    double g = 0.0;
    if (opts.trackNormaliser)
        g = p1.g() + p2.g() + (h1 - 0.5*L1.cwiseProduct(t1)).dot(t1) + (h2 - 0.5*L2.cwiseProduct(t2)).dot(t2)
            - 0.5*logDetSPD(M.transpose()*M);
    return DegenerateFactor(scope, Qp, Rp, e.lambda, hp, cp, g);
}

// ---------------------------------------------------------------------------
// Division

DegenerateFactor divide(const DegenerateFactor & a, const DegenerateFactor & b, const OpOptions & opts)
{
    const Scope scope = a.scope().unionWith(b.scope());
    if (b.isZero())
        throw ContractViolation("division by the zero factor");
    if (a.isZero())
        return DegenerateFactor::zero(scope);
    const DegenerateFactor p1 = align(a, scope);
    const DegenerateFactor p2 = align(b, scope);

    const Matrix & Q1 = p1.Q(); const Matrix & R1 = p1.R();
    const Matrix & Q2 = p2.Q(); const Matrix & R2 = p2.R();
    const Vector & L1 = p1.lambda(); const Vector & L2 = p2.lambda();
    const Vector & h1 = p1.h(); const Vector & h2 = p2.h();
    const Vector & c1 = p1.c(); const Vector & c2 = p2.c();
    const Index n = scope.dim();
    const double rel = opts.rank.threshold(n, n);
    const RankTolerance unit = opts.rank.anchored(1.0);

    if ((R2 - R1*(R1.transpose()*R2)).norm() > static_cast<double>(n)*rel)
        throw ContractViolation("denominator constraints are not implied by the numerator");
    const Vector R1c1 = R1*c1;
    if (residualTooLarge(c2 - R2.transpose()*R1c1, c1.norm() + c2.norm(), opts))
        throw ContractViolation("denominator constraint offset disagrees with the numerator");

    const Matrix Rp = leftNullSpace(hcat(Q1, R2), unit).matrix();
    const Vector cp = Rp.transpose()*R1c1;

    const Matrix Q12 = Q1.transpose()*Q2;
    const Matrix Kdiff = symmetrise(Matrix(L1.asDiagonal()) - Q12*L2.asDiagonal()*Q12.transpose());
    SymmetricEigen e = symmetricEigen(Kdiff);
    const double lmax = std::max({maxOrZero(L1), maxOrZero(L2), e.values.size() ? e.values.cwiseAbs().maxCoeff() : 0.0});
    const double floor = 16.0*static_cast<double>(e.values.size())*kEps*lmax;
    for (Index i = 0; i < e.values.size(); ++i)
    {
        if (e.values(i) < -static_cast<double>(n)*rel*lmax)
            throw IndefiniteQuotient("quotient precision is negative");
        if (e.values(i) <= floor)
            e.values(i) = 0.0;
    }

    const Matrix Qp = hcat(Q1*e.vectors, R2);
    const Vector lambda = vcat(e.values, Vector::Zero(R2.cols()));
    const Vector t = Q2.transpose()*R1c1;
    const Vector hp = Qp.transpose()*(Q1*h1 - Q2*(h2 - L2.cwiseProduct(t)));

    double g = 0.0;
    if (opts.trackNormaliser)
        g = p1.g() - p2.g() - (h2 - 0.5*L2.cwiseProduct(t)).dot(t);
    return DegenerateFactor(scope, Qp, Rp, lambda, hp, cp, g);
}

// ---------------------------------------------------------------------------
// Reduction

DegenerateFactor reduce(const DegenerateFactor & phi, const Evidence & evidence, const OpOptions & opts)
{
    if (evidence.empty())
        return phi;
    const auto names = evidenceNames(evidence);
    const Scope kept = phi.scope().without(names);
    const auto ix = phi.scope().indices(kept.names());
    const auto iy = phi.scope().indices(names);
    for (const auto & a : evidence)
        if (a.value.size() != phi.scope().variable(a.name).dim)
            throw ContractViolation("evidence for " + a.name + " has the wrong dimension");
    if (phi.isZero())
        return DegenerateFactor::zero(kept);
    const Vector y0 = stackEvidence(evidence);
    requireFinite(y0, "evidence");

    const Matrix Qx = rows(phi.Q(), ix);
    const Matrix Rx = rows(phi.R(), ix), Ry = rows(phi.R(), iy);
    const Vector & L = phi.lambda();
    const Vector & h = phi.h();
    const Vector & c = phi.c();
    const RankTolerance unit = opts.rank.anchored(1.0);

    const Matrix Rp = columnSpace(Rx, unit).matrix();
    const Matrix M = Rx.transpose()*Rp;
    const Vector rhs = c - Ry.transpose()*y0;
    const Vector cp = normalSolve(M, rhs);
    if (residualTooLarge(M*cp - rhs, c.norm() + y0.norm(), opts))
        return DegenerateFactor::zero(kept);

    const Matrix Ux = leftNullSpace(Rp, unit).matrix();
    const Matrix Khat = symmetrise(Ux.transpose()*Qx*L.asDiagonal()*Qx.transpose()*Ux);
    const PrecisionEig e = diagonalisePrecision(Khat, maxOrZero(L));
    const Matrix Qp = Ux*e.Z;

    Vector p(phi.dim());
    p(ix) = Rp*cp;
    p(iy) = y0;
    const Vector t = phi.Q().transpose()*p;
    const Vector hp = Qp.transpose()*Qx*(h - L.cwiseProduct(t));

    double g = 0.0;
    if (opts.trackNormaliser)
        g = phi.g() + (h - 0.5*L.cwiseProduct(t)).dot(t) - 0.5*logDetSPD(M.transpose()*M);
    return DegenerateFactor(kept, Qp, Rp, e.lambda, hp, cp, g);
}

// ---------------------------------------------------------------------------
// Conditional densities

DegenerateFactor representConditional(const DegenerateFactor & noise, const Matrix & A, const Vector & b,
                                      const Scope & xScope, const Scope & yScope, const OpOptions & opts)
{
    const Index nx = xScope.dim(), ny = yScope.dim();
    if (noise.dim() != ny || A.rows() != ny || A.cols() != nx || b.size() != ny)
        throw InvalidInput("conditional dimensions are inconsistent");
    if (!xScope.disjointFrom(yScope))
        throw ContractViolation("conditional scopes overlap");
    requireFinite(A, "conditional matrix");
    requireFinite(b, "conditional offset");
    const Scope scope = xScope.unionWith(yScope);
    if (noise.isZero())
        return DegenerateFactor::zero(scope);

    const Matrix & Q = noise.Q();
    const Matrix & R = noise.R();
    const Vector & L = noise.lambda();
    const Vector & h = noise.h();
    const Vector & c = noise.c();
    const Index n = nx + ny;
    const RankTolerance unit = opts.rank.anchored(1.0);

    Matrix F(ny, n);
    F << -A, Matrix::Identity(ny, ny);
    const Matrix FtR = F.transpose()*R;
    const Matrix Rp = columnSpace(FtR, unit).matrix();
    const Matrix RtR = symmetrise(R.transpose()*(Matrix::Identity(ny, ny) + A*A.transpose())*R);
    const Matrix Z = (Rp.transpose()*FtR)*RtR.inverse();
    const Vector cp = Z*(c + R.transpose()*b);

    // Compact decomposition of P F'Q Lambda Q'F P through its square-root factor;
    // its rank is the number of positive precisions
    const Matrix P = Matrix::Identity(n, n) - Rp*Rp.transpose();
    Index r = 0;
    while (r < L.size() && L(r) > 0.0)
        ++r;
    const Matrix B = P*F.transpose()*Q.leftCols(r)*L.head(r).cwiseSqrt().asDiagonal();
    Matrix Qplus(n, 0);
    Vector Lplus(0);
    if (r > 0)
    {
        Eigen::JacobiSVD<Matrix> svd(B, Eigen::ComputeThinU);
        Qplus = svd.matrixU().leftCols(r);
        canonicaliseSigns(Qplus);
        Lplus = svd.singularValues().head(r).cwiseAbs2();
    }
    const Matrix Qinf = leftNullSpace(hcat(Qplus, Rp), unit).matrix();
    const Matrix Qp = hcat(Qplus, Qinf);
    const Vector lambda = vcat(Lplus, Vector::Zero(Qinf.cols()));

    const Vector FRc = F*(Rp*cp);
    const Vector Qtb = Q.transpose()*b;
    const Vector QtFRc = Q.transpose()*FRc;
    const Vector hp = Qp.transpose()*F.transpose()*Q*(h + L.cwiseProduct(Qtb - QtFRc));

    double g = 0.0;
    if (opts.trackNormaliser)
        g = noise.g() - (h + 0.5*L.cwiseProduct(Qtb)).dot(Qtb) + (h + L.cwiseProduct(Qtb - 0.5*QtFRc)).dot(QtFRc)
            + (Z.rows() > 0 ? std::log(std::abs(Z.determinant())) : 0.0);
    return DegenerateFactor(scope, Qp, Rp, lambda, hp, cp, g);
}

SigmaPoints sigmaPoints(const DegenerateFactor & prior, const UnscentedParams & params)
{
    if (!prior.isNormalisable())
        throw NotNormalisable("sigma points need finite variance in every free direction");
    const Index d = prior.Q().cols();
    const Vector mean = moments(prior).mean;
    const double dd = static_cast<double>(d);
    const double lambdaU = params.alpha*params.alpha*(dd + params.kappa) - dd;

    SigmaPoints sp;
    if (d == 0 || dd + lambdaU <= 0.0)
    {
        if (d > 0)
            throw InvalidInput("unscented parameters give a non-positive spread");
        sp.points = mean;
        sp.meanWeights = Vector::Ones(1);
        sp.covWeights = Vector::Ones(1);
        return sp;
    }
    const double gamma = std::sqrt(dd + lambdaU);
    const Matrix offsets = gamma*prior.Q()*prior.lambda().cwiseInverse().cwiseSqrt().asDiagonal();
    sp.points.resize(prior.dim(), 2*d + 1);
    sp.points.col(0) = mean;
    sp.points.middleCols(1, d) = offsets.colwise() + mean;
    sp.points.middleCols(1 + d, d) = (-offsets).colwise() + mean;

    sp.meanWeights = Vector::Constant(2*d + 1, 1.0/(2.0*(dd + lambdaU)));
    sp.covWeights = sp.meanWeights;
    sp.meanWeights(0) = lambdaU/(dd + lambdaU);
    sp.covWeights(0) = sp.meanWeights(0) + (1.0 - params.alpha*params.alpha + params.beta);
    return sp;
}

EquivalentTransform equivalentTransformation(const DegenerateFactor & prior, const std::vector<std::string> & xVars,
                                             const JointMap & f, const Scope & noiseScope,
                                             const UnscentedParams & params, const OpOptions & opts)
{
    if (prior.isZero())
        throw NotNormalisable("zero factor cannot be linearised");
    const Scope wScope = prior.scope().without(xVars);
    const Scope order = prior.scope().subset(xVars).unionWith(wScope);
    const DegenerateFactor joint = rearrangeScope(prior, order);
    const SigmaPoints sp = sigmaPoints(joint, params);
    const Index nx = order.dim() - wScope.dim();
    const Index np = sp.points.cols();

    Matrix Y;
    for (Index i = 0; i < np; ++i)
    {
        const Vector x = sp.points.col(i).head(nx);
        const Vector w = sp.points.col(i).tail(wScope.dim());
        const Vector y = f(x, w);
        if (i == 0)
            Y.resize(y.size(), np);
        if (y.size() != Y.rows())
            throw PropagationError("map output dimension varies between sigma points");
        if (!allFinite(y))
            throw PropagationError("map returned non-finite values");
        Y.col(i) = y;
    }
    const Index ny = Y.rows();
    Matrix Xi(nx + ny, np);
    Xi << sp.points.topRows(nx), Y;

    const Vector mu = Xi*sp.meanWeights;
    const Matrix D = Xi.colwise() - mu;
    const Matrix Sigma = symmetrise(D*sp.covWeights.asDiagonal()*D.transpose());
    const Matrix Sxx = Sigma.topLeftCorner(nx, nx);
    const Matrix Sxy = Sigma.topRightCorner(nx, ny);
    const Matrix Syy = Sigma.bottomRightCorner(ny, ny);

    EquivalentTransform out;
    const Matrix Dp = sp.points.colwise() - sp.points*sp.meanWeights;
    const double inputScale = (Dp*sp.covWeights.asDiagonal()*Dp.transpose()).norm();
    out.A = Sxy.transpose()*pseudoInverse(Sxx, opts.rank.anchored(inputScale));
    out.b = mu.tail(ny) - out.A*mu.head(nx);
    out.mean = mu;
    out.covariance = Sigma;

    const Scope wt = noiseScope.empty() ? Scope{{"noise", ny}} : noiseScope;
    if (wt.dim() != ny)
        throw InvalidInput("noise scope dimension does not match map output");
    const SymmetricEigen eig = symmetricEigen(symmetrise(Syy - out.A*Sxy));
    Index r = 0;
    if (ny > 0)
    {
        const double cut = opts.rank.cutoff(ny, ny, std::max({0.0, eig.values(0), Syy.norm()}));
        while (r < ny && eig.values(r) > cut)
            ++r;
    }
    out.noise = fromCovariance(wt, Vector::Zero(ny), eig, r, opts.trackNormaliser);
    return out;
}

// ---------------------------------------------------------------------------
// Kullback-Leibler divergence

KLResult klDivergence(const DegenerateFactor & p, const DegenerateFactor & q, const RankTolerance & tol)
{
    if (p.isZero() || q.isZero())
        throw ContractViolation("KL divergence of the zero factor");
    if (!p.scope().isPermutationOf(q.scope()))
        throw ContractViolation("KL divergence needs equal scopes");
    const DegenerateFactor q2 = rearrangeScope(q, p.scope());
    for (const DegenerateFactor * f : {&p, &q2})
    {
        if (!f->isNormalisable())
            throw ContractViolation("KL divergence needs normalised factors");
        const double gn = normalisingG(*f);
        if (std::abs(f->g() - gn) > 1e-8*(1.0 + std::abs(gn)))
            throw ContractViolation("KL divergence needs normalised factors");
    }
    const Index n = p.dim(), k = p.degeneracy();
    const double rel = tol.threshold(n, n);
    if (q2.degeneracy() != k || subspaceDistance(p.R(), q2.R()) > static_cast<double>(n)*rel
        || (p.R()*p.c() - q2.R()*q2.c()).norm() > rel*(1.0 + p.c().norm()))
        return {std::numeric_limits<double>::infinity(), true};

    const Vector inv1 = p.lambda().cwiseInverse();
    const Matrix Q12 = p.Q().transpose()*q2.Q();
    const Matrix K2in1 = Q12*q2.lambda().asDiagonal()*Q12.transpose();
    const Vector m1 = inv1.cwiseProduct(p.h());
    const double tr = (K2in1*inv1.asDiagonal()).trace();
    const double value = 0.5*(tr + m1.dot(K2in1*m1) + p.h().dot(m1) - static_cast<double>(n - k))
                         - m1.dot(Q12*q2.h()) + p.g() - q2.g();
    return {value, false};
}

} // namespace degen
