#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "degen/canonical.hpp"
#include "degen/errors.hpp"
#include "degen/verify/random_factors.hpp"

using namespace degen;

namespace
{

const double kLog2Pi = std::log(2.0*std::numbers::pi);

CanonicalFactor scalar(const std::string & name, double K, double h, double g)
{
    return {Scope{{name, 1}}, Matrix::Constant(1, 1, K), Vector::Constant(1, h), g};
}

CanonicalFactor pair(const Matrix & K, const Vector & h, double g)
{
    return {Scope{{"x", 1}, {"y", 1}}, K, h, g};
}

} // namespace

TEST(NormalisingG, Examples)
{
    EXPECT_NEAR(normalisingG(Matrix::Ones(1, 1), Vector::Zero(1)), -0.5*kLog2Pi, 1e-15);
    EXPECT_NEAR(normalisingG(Matrix::Identity(2, 2), Vector::Zero(2)), -kLog2Pi, 1e-15);
    // Scalar oracle: -h^2/(2K) - 0.5 log(2 pi / K)
    EXPECT_NEAR(normalisingG(Matrix::Constant(1, 1, 4.0), Vector::Constant(1, 2.0)),
                -0.5 - 0.5*std::log(std::numbers::pi/2.0), 1e-14);
    EXPECT_THROW(normalisingG(Matrix::Zero(1, 1), Vector::Zero(1)), NotNormalisable);
    EXPECT_THROW(normalisingG(-Matrix::Identity(2, 2), Vector::Zero(2)), NotNormalisable);
}

TEST(CMarginalise, IndependentStandardNormal)
{
    const CanonicalFactor phi = normalise(pair(Matrix::Identity(2, 2), Vector::Zero(2), 0.0));
    const CanonicalFactor m = cMarginalise(phi, {"y"});
    EXPECT_EQ(m.scope.names(), std::vector<std::string>{"x"});
    EXPECT_NEAR(m.K(0, 0), 1.0, 1e-15);
    EXPECT_NEAR(m.g, -0.5*kLog2Pi, 1e-14);
}

TEST(CMarginalise, SchurComplement)
{
    Matrix K(2, 2);
    K << 2, 1, 1, 2;
    const CanonicalFactor phi = normalise(pair(K, Vector::Zero(2), 0.0));
    const CanonicalFactor m = cMarginalise(phi, {"y"});
    EXPECT_NEAR(m.K(0, 0), 1.5, 1e-15);
    EXPECT_NEAR(m.h(0), 0.0, 1e-15);
    EXPECT_NEAR(m.g, normalisingG(m.K, m.h), 1e-12);
}

TEST(CMarginalise, EmptySetIsIdentityAndSingularThrows)
{
    const CanonicalFactor phi = pair(Matrix::Identity(2, 2), Vector::Ones(2), 0.3);
    const CanonicalFactor same = cMarginalise(phi, {});
    EXPECT_EQ(same.K, phi.K);
    EXPECT_EQ(same.g, phi.g);
    Matrix K = Matrix::Zero(2, 2);
    K(0, 0) = 1.0;
    EXPECT_THROW(cMarginalise(pair(K, Vector::Zero(2), 0.0), {"y"}), DegeneracyDetected);
}

TEST(CMultiply, Examples)
{
    const CanonicalFactor a = scalar("x", 1, 1, 0);
    const CanonicalFactor v = CanonicalFactor::vacuous(a.scope);
    const CanonicalFactor av = cMultiply(a, v);
    EXPECT_EQ(av.K, a.K);
    EXPECT_EQ(av.h, a.h);
    EXPECT_EQ(av.g, a.g);

    const CanonicalFactor s = normalise(scalar("x", 1, 0, 0));
    const CanonicalFactor ss = cMultiply(s, s);
    EXPECT_NEAR(ss.K(0, 0), 2.0, 1e-15);
    EXPECT_NEAR(ss.g, -kLog2Pi, 1e-15);

    const CanonicalFactor p = cMultiply(scalar("x", 1, 1, 0), scalar("x", 3, -1, 0));
    EXPECT_EQ(p.K(0, 0), 4.0);
    EXPECT_EQ(p.h(0), 0.0);

    EXPECT_THROW(cMultiply(scalar("x", 1, 0, 0), scalar("y", 1, 0, 0)), ContractViolation);
}

TEST(CDivide, Examples)
{
    const CanonicalFactor a = scalar("x", 4, 1, 0.5);
    const CanonicalFactor self = cDivide(a, a);
    EXPECT_EQ(self.K(0, 0), 0.0);
    EXPECT_EQ(self.h(0), 0.0);
    EXPECT_EQ(self.g, 0.0);
    const CanonicalFactor byVac = cDivide(a, CanonicalFactor::vacuous(a.scope));
    EXPECT_EQ(byVac.K, a.K);
    EXPECT_EQ(cDivide(a, scalar("x", 1, 0, 0)).K(0, 0), 3.0);
    EXPECT_THROW(cDivide(a, scalar("y", 1, 0, 0)), ContractViolation);
}

TEST(CDivide, InvertsMultiply)
{
    verify::Rng rng(2);
    for (int t = 0; t < 20; ++t)
    {
        const Scope s = verify::randomScope(rng, 1 + t % 5, 2);
        const CanonicalFactor a = verify::randomCanonical(rng, s);
        const CanonicalFactor b = verify::randomCanonical(rng, s);
        const CanonicalFactor back = cDivide(cMultiply(a, b), b);
        EXPECT_LT((back.K - a.K).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((back.h - a.h).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(back.g, a.g, 1e-12);
    }
}

TEST(CReduce, Examples)
{
    Matrix K(2, 2);
    K << 2, 1, 1, 2;
    const CanonicalFactor phi = pair(K, Vector::Zero(2), 0.25);
    const CanonicalFactor r = cReduce(phi, {{"y", Vector::Constant(1, 1.0)}});
    EXPECT_EQ(r.K(0, 0), 2.0);
    EXPECT_EQ(r.h(0), -1.0);
    EXPECT_DOUBLE_EQ(r.g, 0.25 - 1.0);

    const CanonicalFactor z = cReduce(phi, {{"y", Vector::Zero(1)}});
    EXPECT_EQ(z.h(0), 0.0);
    EXPECT_EQ(z.g, 0.25);

    const CanonicalFactor indep = pair(Matrix::Identity(2, 2), Eigen::Vector2d(0.5, 0.7), 0.0);
    const CanonicalFactor ri = cReduce(indep, {{"y", Vector::Constant(1, 3.0)}});
    EXPECT_EQ(ri.K(0, 0), 1.0);
    EXPECT_EQ(ri.h(0), 0.5);
    EXPECT_THROW(cReduce(phi, {{"q", Vector::Zero(1)}}), ContractViolation);
}

TEST(CReduce, MatchesMarginalOnIndependentBlocks)
{
    verify::Rng rng(4);
    const CanonicalFactor a = verify::randomCanonical(rng, Scope{{"x", 2}});
    const CanonicalFactor b = verify::randomCanonical(rng, Scope{{"y", 2}});
    const Scope u{{"x", 2}, {"y", 2}};
    const CanonicalFactor joint = cMultiply(cAlign(a, u), cAlign(b, u));
    const CanonicalFactor r = cReduce(joint, {{"y", verify::gaussianVector(rng, 2)}});
    const CanonicalFactor m = cMarginalise(joint, {"y"});
    EXPECT_LT((r.K - m.K).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((r.h - m.h).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CRescopeAffine, Examples)
{
    const CanonicalFactor phi = scalar("y", 1, 0, 0);
    const CanonicalFactor id = cRescopeAffine(phi, Matrix::Identity(1, 1), Vector::Zero(1), Scope{{"x", 1}});
    EXPECT_EQ(id.K(0, 0), 1.0);
    EXPECT_EQ(id.g, 0.0);

    const CanonicalFactor r = cRescopeAffine(phi, Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 1.0), Scope{{"x", 1}});
    EXPECT_EQ(r.K(0, 0), 4.0);
    EXPECT_EQ(r.h(0), -2.0);
    EXPECT_EQ(r.g, -0.5);

    verify::Rng rng(6);
    const Matrix O = verify::randomOrthogonal(rng, 3);
    const CanonicalFactor iso = cRescopeAffine(CanonicalFactor{Scope{{"y", 3}}, Matrix::Identity(3, 3), Vector::Zero(3), 0.0},
                                               O, Vector::Zero(3), Scope{{"x", 3}});
    EXPECT_LT((iso.K - Matrix::Identity(3, 3)).norm(), 1e-14);
}

TEST(CRescopeAffine, OrthogonalRoundTrip)
{
    verify::Rng rng(8);
    const CanonicalFactor phi = verify::randomCanonical(rng, Scope{{"y", 3}});
    const Matrix O = verify::randomOrthogonal(rng, 3);
    const CanonicalFactor there = cRescopeAffine(phi, O, Vector::Zero(3), Scope{{"x", 3}});
    const CanonicalFactor back = cRescopeAffine(there, O.transpose(), Vector::Zero(3), Scope{{"y", 3}});
    EXPECT_LT((back.K - phi.K).norm(), 1e-10);
    EXPECT_LT((back.h - phi.h).norm(), 1e-10);
}

TEST(CMarginalise, NormalisedStaysNormalised)
{
    verify::Rng rng(10);
    for (int t = 0; t < 30; ++t)
    {
        const Scope s = verify::randomScope(rng, 2 + t % 5, 3);
        const CanonicalFactor phi = normalise(verify::randomCanonical(rng, s));
        const CanonicalFactor m = cMarginalise(phi, {s.names().back()});
        EXPECT_NEAR(m.g, normalisingG(m.K, m.h), 1e-9);
    }
}

TEST(CMoments, StandardNormal)
{
    const CanonicalMoments m = cMoments(scalar("x", 4, 2, 0));
    EXPECT_NEAR(m.mean(0), 0.5, 1e-15);
    EXPECT_NEAR(m.covariance(0, 0), 0.25, 1e-15);
}
