#include "degen/verify/random_factors.hpp"
#include "degen/errors.hpp"

#include <Eigen/QR>

namespace degen::verify
{

Vector gaussianVector(Rng & rng, Index n)
{
    std::normal_distribution<double> normal;
    Vector v(n);
    for (Index i = 0; i < n; ++i)
        v(i) = normal(rng);
    return v;
}

Matrix gaussianMatrix(Rng & rng, Index rows, Index cols)
{
    std::normal_distribution<double> normal;
    Matrix M(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            M(i, j) = normal(rng);
    return M;
}

Matrix randomOrthogonal(Rng & rng, Index n)
{
    if (n == 0)
        return Matrix(0, 0);
    const Eigen::HouseholderQR<Matrix> qr(gaussianMatrix(rng, n, n));
    Matrix Q = qr.householderQ()*Matrix::Identity(n, n);
    const Matrix Rr = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < n; ++j)
        if (Rr(j, j) < 0.0)
            Q.col(j) *= -1.0;
    return Q;
}

Scope randomScope(Rng & rng, Index n, int parts, const std::string & prefix)
{
    if (n < 1 || parts < 1)
        throw InvalidInput("random scope needs positive size and part count");
    const int p = static_cast<int>(std::min<Index>(parts, n));
    // Choose p-1 distinct cut points in 1..n-1
    std::vector<Index> cuts;
    for (Index i = 1; i < n; ++i)
        cuts.push_back(i);
    std::shuffle(cuts.begin(), cuts.end(), rng);
    cuts.resize(static_cast<std::size_t>(p - 1));
    std::sort(cuts.begin(), cuts.end());
    cuts.push_back(n);
    std::vector<Variable> vars;
    Index prev = 0;
    for (std::size_t i = 0; i < cuts.size(); ++i)
    {
        vars.push_back({prefix + std::to_string(i), cuts[i] - prev});
        prev = cuts[i];
    }
    return Scope(vars);
}

DegenerateFactor randomFactor(Rng & rng, const Scope & scope, Index degeneracy, double lambdaMin, double lambdaMax)
{
    const Index n = scope.dim();
    if (degeneracy < 0 || degeneracy > n)
        throw InvalidInput("degeneracy out of range");
    const Matrix O = randomOrthogonal(rng, n);
    std::uniform_real_distribution<double> uni(lambdaMin, lambdaMax);
    Vector lambda(n - degeneracy);
    for (Index i = 0; i < lambda.size(); ++i)
        lambda(i) = uni(rng);
    const Vector h = gaussianVector(rng, n - degeneracy);
    const Vector c = gaussianVector(rng, degeneracy);
    const double g = gaussianVector(rng, 1)(0);
    return DegenerateFactor(scope, O.leftCols(n - degeneracy), O.rightCols(degeneracy), lambda, h, c, g);
}

CanonicalFactor randomCanonical(Rng & rng, const Scope & scope, double eigMin, double eigMax)
{
    const Index n = scope.dim();
    const Matrix O = randomOrthogonal(rng, n);
    std::uniform_real_distribution<double> uni(eigMin, eigMax);
    Vector d(n);
    for (Index i = 0; i < n; ++i)
        d(i) = uni(rng);
    return {scope, symmetrise(O*d.asDiagonal()*O.transpose()), gaussianVector(rng, n), gaussianVector(rng, 1)(0)};
}

Matrix sampleFactor(Rng & rng, const DegenerateFactor & phi, Index count)
{
    if (!phi.isNormalisable())
        throw NotNormalisable("cannot sample a factor without a density");
    const Vector & l = phi.lambda();
    const Vector centre = phi.Q()*(phi.h().array()/l.array()).matrix() + phi.R()*phi.c();
    const Matrix scale = phi.Q()*l.cwiseSqrt().cwiseInverse().asDiagonal();
    Matrix X(phi.dim(), count);
    for (Index s = 0; s < count; ++s)
        X.col(s) = centre + scale*gaussianVector(rng, l.size());
    return X;
}

} // namespace degen::verify
