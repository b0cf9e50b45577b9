#include "degen/subspace.hpp"
#include "degen/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace degen
{

double RankTolerance::threshold(Index rows, Index cols) const
{
    if (relative > 0.0)
        return relative;
    return static_cast<double>(std::max<Index>({rows, cols, 1}))*std::numeric_limits<double>::epsilon();
}

double RankTolerance::cutoff(Index rows, Index cols, double sigmaMax) const
{
    return threshold(rows, cols)*std::max(sigmaMax, reference);
}

OrthonormalBasis::OrthonormalBasis(Index ambientDim)
    : columns_(ambientDim, 0)
{}

OrthonormalBasis::OrthonormalBasis(Matrix columns)
    : columns_(std::move(columns))
{}

bool OrthonormalBasis::isValid(double tol) const
{
    if (rank() > ambientDim())
        return false;
    const Matrix G = columns_.transpose()*columns_;
    return (G - Matrix::Identity(rank(), rank())).cwiseAbs().maxCoeff() <= tol || rank() == 0;
}

bool allFinite(const Matrix & M)
{
    return M.size() == 0 || M.allFinite();
}

void requireFinite(const Matrix & M, const char * what)
{
    if (!allFinite(M))
        throw InvalidInput(std::string("non-finite entries in ") + what);
}

Matrix symmetrise(const Matrix & M)
{
    return 0.5*(M + M.transpose());
}

Vector canonicaliseSigns(Matrix & M)
{
    Vector signs = Vector::Ones(M.cols());
    for (Index j = 0; j < M.cols(); ++j)
    {
        if (M.rows() == 0)
            break;
        const double peak = M.col(j).cwiseAbs().maxCoeff();
        // First entry within a hair of the peak, so near-ties resolve the same way every time
        Index i = 0;
        while (std::abs(M(i, j)) < (1.0 - 1e-9)*peak)
            ++i;
        if (M(i, j) < 0.0)
        {
            M.col(j) *= -1.0;
            signs(j) = -1.0;
        }
    }
    return signs;
}

CompactSVD compactSVD(const Matrix & M, const RankTolerance & tol)
{
    requireFinite(M, "compactSVD input");
    const Index m = M.rows(), n = M.cols();
    if (m == 0 || n == 0)
        return {OrthonormalBasis(m), Vector(0), OrthonormalBasis(n)};

    Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector & s = svd.singularValues();
    const double cut = tol.cutoff(m, n, s(0));
    Index r = 0;
    while (r < s.size() && s(r) > cut)
        ++r;

    Matrix U = svd.matrixU().leftCols(r);
    Matrix V = svd.matrixV().leftCols(r);
    const Vector signs = canonicaliseSigns(U);
    V = V*signs.asDiagonal();
    return {OrthonormalBasis(std::move(U)), s.head(r), OrthonormalBasis(std::move(V))};
}

OrthonormalBasis columnSpace(const Matrix & M, const RankTolerance & tol)
{
    return compactSVD(M, tol).U;
}

Index numericalRank(const Matrix & M, const RankTolerance & tol)
{
    return compactSVD(M, tol).s.size();
}

OrthonormalBasis nullSpace(const Matrix & M, const RankTolerance & tol)
{
    requireFinite(M, "nullSpace input");
    const Index m = M.rows(), n = M.cols();
    if (n == 0)
        return OrthonormalBasis(Index(0));
    if (m == 0)
        return OrthonormalBasis(Matrix(Matrix::Identity(n, n)));

    Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeFullV);
    const Vector & s = svd.singularValues();
    const double cut = tol.cutoff(m, n, s(0));
    Index r = 0;
    while (r < s.size() && s(r) > cut)
        ++r;
    Matrix N = svd.matrixV().rightCols(n - r);
    canonicaliseSigns(N);
    return OrthonormalBasis(std::move(N));
}

OrthonormalBasis leftNullSpace(const Matrix & M, const RankTolerance & tol)
{
    return nullSpace(M.transpose(), tol);
}

OrthonormalBasis complement(const OrthonormalBasis & B)
{
    // Columns are unit length, so anchor the cutoff at 1
    return leftNullSpace(B.matrix(), RankTolerance{}.anchored(1.0));
}

Matrix pseudoInverse(const Matrix & M, const RankTolerance & tol)
{
    const CompactSVD svd = compactSVD(M, tol);
    return svd.V.matrix()*svd.s.cwiseInverse().asDiagonal()*svd.U.matrix().transpose();
}

SymmetricEigen symmetricEigen(const Matrix & S)
{
    requireFinite(S, "symmetric eigendecomposition input");
    const Index n = S.rows();
    if (n == 0)
        return {Matrix(0, 0), Vector(0)};
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrise(S));
    if (eig.info() != Eigen::Success)
        throw InvalidInput("symmetric eigendecomposition failed");
    // Solver returns ascending order
    Matrix Z = eig.eigenvectors().rowwise().reverse();
    Vector d = eig.eigenvalues().reverse();
    canonicaliseSigns(Z);
    return {std::move(Z), std::move(d)};
}

SymmetricEigen compactSymmetric(const Matrix & S, const RankTolerance & tol)
{
    SymmetricEigen e = symmetricEigen(S);
    if (e.values.size() == 0)
        return e;
    const double scale = e.values.cwiseAbs().maxCoeff();
    const double cut = tol.cutoff(S.rows(), S.cols(), scale);
    Index r = 0;
    while (r < e.values.size() && e.values(r) > cut)
        ++r;
    return {e.vectors.leftCols(r), e.values.head(r)};
}

double subspaceDistance(const Matrix & A, const Matrix & B)
{
    return (A*A.transpose() - B*B.transpose()).norm();
}

double logDetSPD(const Matrix & M)
{
    if (M.rows() == 0)
        return 0.0;
    Eigen::LLT<Matrix> llt(symmetrise(M));
    if (llt.info() != Eigen::Success)
        throw NotNormalisable("matrix is not positive definite");
    return 2.0*llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

} // namespace degen
