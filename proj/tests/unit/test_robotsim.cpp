#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "degen/errors.hpp"
#include "degen/robotsim.hpp"
#include "degen/verify/random_factors.hpp"

using namespace degen;

namespace
{

constexpr double kPi = std::numbers::pi;

Vector vec3(double a, double b, double c) { return Eigen::Vector3d(a, b, c); }

std::string slurp(const std::filesystem::path & p)
{
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST(WrapAngle, HalfOpenInterval)
{
    EXPECT_DOUBLE_EQ(wrapAngle(kPi), kPi);
    EXPECT_DOUBLE_EQ(wrapAngle(-kPi), kPi);
    EXPECT_NEAR(wrapAngle(3.0*kPi/2.0), -kPi/2.0, 1e-15);
    EXPECT_NEAR(wrapAngle(0.25), 0.25, 0.0);
}

TEST(MotionStep, Examples)
{
    const Pose a = motionStep({2.0, 3.0, 0.0}, {0.0, 1.0, 0.0}, Vector::Zero(3));
    EXPECT_DOUBLE_EQ(a.x, 3.0);
    EXPECT_DOUBLE_EQ(a.y, 3.0);
    EXPECT_DOUBLE_EQ(a.theta, 0.0);

    const Pose b = motionStep({0.0, 0.0, 0.0}, {kPi/2.0, 1.0, 0.0}, Vector::Zero(3));
    EXPECT_NEAR(b.x, 0.0, 1e-15);
    EXPECT_NEAR(b.y, 1.0, 1e-15);
    EXPECT_NEAR(b.theta, kPi/2.0, 1e-15);
}

TEST(MotionStep, MatchesScalarRecomputation)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    for (int t = 0; t < 200; ++t)
    {
        const Pose p{U(rng), U(rng), U(rng)};
        const ControlInput u{U(rng), U(rng), U(rng)};
        const double w1 = 0.1*U(rng), w2 = 0.1*U(rng), w3 = 0.1*U(rng);
        const Pose q = motionStep(p, u, vec3(w1, w2, w3));
        const double x = p.x + u.r*std::cos(p.theta + u.alpha) + w1;
        const double y = p.y + u.r*std::sin(p.theta + u.alpha) + w2;
        double th = std::remainder(p.theta + u.alpha + u.beta + w3, 2.0*kPi);
        if (th <= -kPi)
            th += 2.0*kPi;
        EXPECT_NEAR(q.x, x, 1e-12);
        EXPECT_NEAR(q.y, y, 1e-12);
        EXPECT_NEAR(q.theta, th, 1e-12);
    }
}

TEST(Steer, ReachesTarget)
{
    const Pose from{1.0, -1.0, 0.3}, to{2.5, 0.4, -2.9};
    const Pose got = motionStep(from, steer(from, to), Vector::Zero(3));
    EXPECT_NEAR(got.x, to.x, 1e-12);
    EXPECT_NEAR(got.y, to.y, 1e-12);
    EXPECT_NEAR(got.theta, to.theta, 1e-12);
}

TEST(PositionMeasurement, Examples)
{
    const Vector a = positionMeasurement({1.0, 2.0, 0.7}, Vector::Zero(2));
    EXPECT_EQ(a, Eigen::Vector2d(1.0, 2.0));
    const Vector b = positionMeasurement({1.0, 2.0, 0.0}, Eigen::Vector2d(0.1, -0.1));
    EXPECT_NEAR(b(0), 1.1, 1e-15);
    EXPECT_NEAR(b(1), 1.9, 1e-15);
}

TEST(PositionMeasurement, SimulatedNoiseCovariance)
{
    WorldConfig w;
    w.robots = 2;
    w.cooperating = {0, 1};
    w.formation = {{0.0, 0.0, 0.0}, {-2.0, 0.0, 0.0}};
    w.steps = 25000;
    w.windowStart = 1;
    w.windowEnd = 1;
    Matrix Sv(2, 2);
    Sv << 0.04, 0.01, 0.01, 0.02;
    w.measurementNoise = Sv;
    const SimulationRecord rec = simulate(w);
    Matrix acc = Matrix::Zero(2, 2);
    Vector mean = Vector::Zero(2);
    double n = 0.0;
    for (int k = 1; k <= w.steps; ++k)
        for (int i = 0; i < w.robots; ++i)
        {
            const Pose & p = rec.truth[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
            const Vector v = rec.positions[static_cast<std::size_t>(k)].segment(2*i, 2) - Eigen::Vector2d(p.x, p.y);
            acc += v*v.transpose();
            mean += v;
            n += 1.0;
        }
    ASSERT_EQ(n, 50000.0);
    const Matrix S = acc/n;
    mean /= n;
    for (int a = 0; a < 2; ++a)
    {
        EXPECT_LT(std::abs(mean(a)), 3.0*std::sqrt(Sv(a, a)/n));
        for (int b = 0; b < 2; ++b)
        {
            const double se = std::sqrt((Sv(a, a)*Sv(b, b) + Sv(a, b)*Sv(a, b))/n);
            EXPECT_LT(std::abs(S(a, b) - Sv(a, b)), 3.0*se) << a << "," << b;
        }
    }
}

TEST(AuxiliaryMeasurement, Examples)
{
    const Vector a = auxiliaryMeasurement({{0.0, 0.0, 0.0}, {3.0, 4.0, kPi/2.0}});
    ASSERT_EQ(a.size(), 2);
    EXPECT_NEAR(a(0), 5.0, 1e-15);
    EXPECT_NEAR(a(1), kPi/2.0, 1e-15);

    const Vector same = auxiliaryMeasurement({{1.0, 1.0, 0.2}, {1.0, 1.0, 0.2}});
    EXPECT_EQ(same, Eigen::Vector2d(0.0, 0.0));

    const std::vector<Pose> three{{0.0, 0.0, 0.1}, {1.0, 2.0, -0.4}, {-2.0, 3.0, 0.9}};
    const Vector c = auxiliaryMeasurement(three);
    ASSERT_EQ(c.size(), 4);
    EXPECT_NEAR(c(0), std::sqrt(1.0 + 4.0), 1e-15);
    EXPECT_NEAR(c(1), -0.5, 1e-15);
    EXPECT_NEAR(c(2), std::sqrt(9.0 + 1.0), 1e-15);
    EXPECT_NEAR(c(3), 1.3, 1e-15);

    EXPECT_THROW(auxiliaryMeasurement({{0.0, 0.0, 0.0}}), InvalidInput);
}

TEST(Simulate, DeterministicForSeed)
{
    const WorldConfig w;
    const SimulationRecord a = simulate(w), b = simulate(w);
    for (std::size_t k = 0; k < a.truth.size(); ++k)
        for (std::size_t i = 0; i < a.truth[k].size(); ++i)
        {
            EXPECT_EQ(a.truth[k][i].x, b.truth[k][i].x);
            EXPECT_EQ(a.truth[k][i].theta, b.truth[k][i].theta);
        }
    for (std::size_t k = 1; k < a.positions.size(); ++k)
        EXPECT_TRUE((a.positions[k].array() == b.positions[k].array()).all());
    WorldConfig other = w;
    other.seed = 2;
    EXPECT_NE(simulate(other).positions[5](0), a.positions[5](0));
}

TEST(Simulate, NoiseFreeTrajectoriesFollowControls)
{
    WorldConfig w;
    w.motionNoise = Matrix::Zero(3, 3);
    w.measurementNoise = Matrix::Zero(2, 2);
    const SimulationRecord rec = simulate(w);
    for (int k = 1; k <= w.steps; ++k)
        for (int i = 0; i < w.robots; ++i)
        {
            const auto ku = static_cast<std::size_t>(k), iu = static_cast<std::size_t>(i);
            const Pose p = motionStep(rec.truth[ku - 1][iu], rec.controls[ku][iu], Vector::Zero(3));
            EXPECT_NEAR(p.x, rec.truth[ku][iu].x, 1e-12);
            EXPECT_NEAR(p.y, rec.truth[ku][iu].y, 1e-12);
            EXPECT_NEAR(wrapAngle(p.theta - rec.truth[ku][iu].theta), 0.0, 1e-12);
            EXPECT_NEAR(rec.positions[ku](2*i), rec.truth[ku][iu].x, 1e-15);
        }
}

TEST(Simulate, AuxiliaryRowsOnlyInWindowAndConstant)
{
    const WorldConfig w;
    const SimulationRecord rec = simulate(w);
    int withAux = 0;
    const Vector target = w.auxiliaryTargets();
    for (int k = 1; k <= w.steps; ++k)
    {
        const Vector & a = rec.auxiliary[static_cast<std::size_t>(k)];
        const bool inWindow = k >= w.windowStart && k <= w.windowEnd;
        EXPECT_EQ(a.size() > 0, inWindow) << k;
        if (a.size() == 0)
            continue;
        ++withAux;
        EXPECT_LT((a - target).cwiseAbs().maxCoeff(), 1e-12);
        std::vector<Pose> poses;
        for (int j : w.cooperating)
            poses.push_back(rec.truth[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]);
        EXPECT_LT((auxiliaryMeasurement(poses) - target).cwiseAbs().maxCoeff(), 1e-12);
    }
    EXPECT_EQ(withAux, 20);
}

TEST(Simulate, CsvOutput)
{
    const WorldConfig w;
    const SimulationRecord rec = simulate(w);
    const auto dir = std::filesystem::temp_directory_path() / "degen_sim_csv";
    std::filesystem::create_directories(dir);
    writeTrajectoryCsv(rec, (dir / "t.csv").string());
    writeAuxiliaryCsv(rec, (dir / "a.csv").string());
    const std::string t = slurp(dir / "t.csv"), a = slurp(dir / "a.csv");
    EXPECT_EQ(t.substr(0, t.find('\n')), "k,robot,x,y,theta,u_alpha,u_r,u_beta,z_x,z_y");
    EXPECT_EQ(a.substr(0, a.find('\n')), "k,pair,robot_a,robot_b,range,relative_theta");
    EXPECT_EQ(std::count(t.begin(), t.end(), '\n'), 1 + (w.steps + 1)*w.robots);
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 1 + 20*2);
    std::filesystem::remove_all(dir);
}

TEST(WorldConfig, Validation)
{
    EXPECT_NO_THROW(WorldConfig{}.validate());
    WorldConfig w;
    w.windowEnd = 41;
    EXPECT_THROW(w.validate(), InvalidInput);
    w = {};
    w.formation[1] = {0.05, 0.0, 0.0};
    EXPECT_THROW(w.validate(), InvalidInput);
    w = {};
    w.cooperating = {0};
    w.formation = {{0.0, 0.0, 0.0}};
    EXPECT_THROW(w.validate(), InvalidInput);
    w = {};
    w.measurementNoise(0, 0) = -1.0;
    EXPECT_THROW(w.validate(), InvalidInput);
}

TEST(Hypothesis, PickupShiftsWindow)
{
    const WorldConfig w;
    const Hypothesis t = Hypothesis::truthOf(w);
    EXPECT_EQ(t.windowStart, 11);
    EXPECT_EQ(t.windowEnd, 30);
    const Hypothesis p = Hypothesis::pickupAt(w, 7);
    EXPECT_EQ(p.windowStart, 8);
    EXPECT_EQ(p.windowEnd, 27);
    EXPECT_EQ(Hypothesis::scaled(w, 1.2).scale, 1.2);
}

TEST(BuildProblem, DegeneracyPlacement)
{
    const WorldConfig w;
    const SimulationRecord rec = simulate(w);
    const EstimationProblem p = buildProblem(rec, Hypothesis::truthOf(w), {});
    EXPECT_EQ(p.graph.clusterCount(), 80);
    for (int k = 1; k <= w.steps; ++k)
    {
        const bool inWindow = k >= w.windowStart && k <= w.windowEnd;
        EXPECT_EQ(p.noiseDegeneracy[static_cast<std::size_t>(k)], inWindow ? 4 : 0) << k;
    }
    const EstimationProblem none = buildProblem(rec, Hypothesis::truthOf(w), {Method::noAuxiliary, 0.0});
    for (int k = 1; k <= w.steps; ++k)
        EXPECT_EQ(none.noiseDegeneracy[static_cast<std::size_t>(k)], 0);
    const EstimationProblem ridge = buildProblem(rec, Hypothesis::truthOf(w), {Method::ridge, 1e-4});
    for (int k = 1; k <= w.steps; ++k)
        EXPECT_EQ(ridge.noiseDegeneracy[static_cast<std::size_t>(k)], 0);
    EXPECT_GT(ridge.kappa, 1e2);
}

TEST(BuildProblem, LinearMeasurementRowsRecoverSelection)
{
    verify::Rng rng(7);
    const Index R = 3;
    Scope s{{"x", 3*R}};
    const DegenerateFactor prior = normalise(verify::randomFactor(rng, s, 2));
    const auto f = [&](const Vector & x, const Vector &) {
        Vector z(2*R);
        for (Index i = 0; i < R; ++i)
            z.segment(2*i, 2) = positionMeasurement({x(3*i), x(3*i + 1), x(3*i + 2)}, Vector::Zero(2));
        return z;
    };
    const EquivalentTransform et = equivalentTransformation(prior, {"x"}, f, Scope{});
    Matrix sel = Matrix::Zero(2*R, 3*R);
    for (Index i = 0; i < R; ++i)
    {
        sel(2*i, 3*i) = 1.0;
        sel(2*i + 1, 3*i + 1) = 1.0;
    }
    // Only the directions the prior can move in are identified
    const Matrix Qp = prior.Q();
    EXPECT_LT(((et.A - sel)*Qp).cwiseAbs().maxCoeff(), 1e-8);
    const Vector mu = moments(prior).mean;
    EXPECT_LT((et.A*mu + et.b - sel*mu).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(RidgeBaseline, Examples)
{
    EXPECT_EQ(ridgeBaseline(Matrix::Zero(2, 2), 1.0), Matrix::Identity(2, 2));
    const Matrix d = Eigen::Vector2d(1.0, 0.0).asDiagonal();
    EXPECT_NEAR(conditionNumber(ridgeBaseline(d, 1e-6))/1e6, 1.0, 1e-5);
    EXPECT_THROW(ridgeBaseline(d, 0.0), InvalidInput);
    EXPECT_THROW(ridgeBaseline(d, -1.0), InvalidInput);
}

TEST(RidgeBaseline, ConditionNumberMonotone)
{
    verify::Rng rng(9);
    const Matrix G = verify::gaussianMatrix(rng, 6, 3);
    const Matrix S = G*G.transpose();
    double prev = std::numeric_limits<double>::infinity();
    for (int e = -12; e <= 0; ++e)
    {
        const double kappa = conditionNumber(ridgeBaseline(S, std::pow(10.0, e)));
        EXPECT_LE(kappa, prev*(1.0 + 1e-12));
        prev = kappa;
    }
    const SimulationRecord rec = simulate(WorldConfig{});
    const double k2 = buildProblem(rec, Hypothesis::truthOf(rec.world), {Method::ridge, 1e-2}).kappa;
    const double k6 = buildProblem(rec, Hypothesis::truthOf(rec.world), {Method::ridge, 1e-6}).kappa;
    EXPECT_LE(k2, k6);
}

TEST(RidgeBaseline, ConditionNumberFromConfiguration)
{
    const WorldConfig w;
    const Hypothesis h = Hypothesis::truthOf(w);
    // Window steps carry zero-variance auxiliary rows, so the ridge sets the smallest eigenvalue
    for (double lambda : {1e-12, 1e-6, 1.0})
        EXPECT_NEAR(measurementConditionNumber(w, h, {Method::ridge, lambda})*lambda/(0.04 + lambda), 1.0, 1e-9);
    EXPECT_NEAR(measurementConditionNumber(w, h, {}), 1.0, 1e-12);
    EXPECT_EQ(measurementNoiseCovariance(w, {}, true).rows(), 2*w.robots + 2*(static_cast<Index>(w.cooperating.size()) - 1));
    EXPECT_EQ(measurementNoiseCovariance(w, {}, false).rows(), 2*w.robots);
    const SimulationRecord rec = simulate(w);
    EXPECT_DOUBLE_EQ(buildProblem(rec, h, {Method::ridge, 1e-3}).kappa, measurementConditionNumber(w, h, {Method::ridge, 1e-3}));
}

TEST(MethodNames, RoundTrip)
{
    for (Method m : {Method::degenerate, Method::ridge, Method::noAuxiliary})
        EXPECT_EQ(parseMethod(methodName(m)), m);
    EXPECT_EQ(methodName(Method::noAuxiliary), "no-auxiliary");
    EXPECT_THROW(parseMethod("lasso"), InvalidInput);
}
