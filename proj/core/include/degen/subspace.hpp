#ifndef DEGEN_SUBSPACE_HPP
#define DEGEN_SUBSPACE_HPP

#include <Eigen/Core>

namespace degen
{

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Singular value s is kept iff s > relative * max(s_max, reference).
// relative <= 0 selects max(rows, cols) * machine epsilon.
// reference lets callers anchor the cutoff to a known scale, e.g. 1 for
// products of orthonormal bases where the whole product may be round-off.
struct RankTolerance
{
    double relative = 0.0;
    double reference = 0.0;

    double threshold(Index rows, Index cols) const;
    double cutoff(Index rows, Index cols, double sigmaMax) const;
    RankTolerance anchored(double scale) const { return {relative, scale}; }
};

class OrthonormalBasis
{
public:
    explicit OrthonormalBasis(Index ambientDim = 0);
    // Columns are taken as given; use isValid() to check orthonormality.
    explicit OrthonormalBasis(Matrix columns);

    Index ambientDim() const { return columns_.rows(); }
    Index rank() const { return columns_.cols(); }
    bool empty() const { return columns_.cols() == 0; }
    const Matrix & matrix() const { return columns_; }
    Matrix projector() const { return columns_*columns_.transpose(); }
    bool isValid(double tol = 1e-10) const;

private:
    Matrix columns_;
};

struct CompactSVD
{
    OrthonormalBasis U;
    Vector s;
    OrthonormalBasis V;
};

// Eigendecomposition of a symmetric matrix, eigenvalues descending
struct SymmetricEigen
{
    Matrix vectors;
    Vector values;
};

CompactSVD compactSVD(const Matrix & M, const RankTolerance & tol = {});
OrthonormalBasis columnSpace(const Matrix & M, const RankTolerance & tol = {});
OrthonormalBasis nullSpace(const Matrix & M, const RankTolerance & tol = {});
OrthonormalBasis complement(const OrthonormalBasis & B);
// Complement of the column space of an arbitrary matrix
OrthonormalBasis leftNullSpace(const Matrix & M, const RankTolerance & tol = {});
Matrix pseudoInverse(const Matrix & M, const RankTolerance & tol = {});
Index numericalRank(const Matrix & M, const RankTolerance & tol = {});

SymmetricEigen symmetricEigen(const Matrix & S);
// Compact eigendecomposition of a symmetric PSD matrix; drops eigenvalues at or
// below the rank cutoff (equivalent to the compact SVD for PSD input)
SymmetricEigen compactSymmetric(const Matrix & S, const RankTolerance & tol = {});

// Projector Frobenius distance between C(A) and C(B), both orthonormal
double subspaceDistance(const Matrix & A, const Matrix & B);

bool allFinite(const Matrix & M);
void requireFinite(const Matrix & M, const char * what);
Matrix symmetrise(const Matrix & M);

// Flip columns so each one's largest-magnitude entry is positive.
// Returns the sign applied to each column.
Vector canonicaliseSigns(Matrix & M);

// log|M| for symmetric positive definite M; empty matrix gives 0
double logDetSPD(const Matrix & M);

} // namespace degen

#endif
