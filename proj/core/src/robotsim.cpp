#include "degen/robotsim.hpp"
#include "degen/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

namespace degen
{

namespace
{

constexpr double kPi = std::numbers::pi;

Pose offsetPose(const Pose & base, const Pose & offset)
{
    return {base.x + offset.x, base.y + offset.y, wrapAngle(base.theta + offset.theta)};
}

Pose leaderPlan(const WorldConfig & w, int k)
{
    const double s = w.speed*k;
    const double bend = 0.08;
    return {s, 0.5*std::sin(bend*k), std::atan2(0.5*bend*std::cos(bend*k), w.speed)};
}

int cooperatingIndex(const WorldConfig & w, int robot)
{
    const auto it = std::find(w.cooperating.begin(), w.cooperating.end(), robot);
    return it == w.cooperating.end() ? -1 : static_cast<int>(it - w.cooperating.begin());
}

// Formation slot of a robot relative to the leader path; robots outside the
// cooperating set travel in parallel lanes
Pose slotOffset(const WorldConfig & w, int robot)
{
    const int m = cooperatingIndex(w, robot);
    if (m >= 0)
        return w.formation[static_cast<std::size_t>(m)];
    return {0.0, 4.0 + 2.0*robot, 0.0};
}

// Displacement from the formation slot while approaching and after release
Pose slotGap(const WorldConfig & w, int robot, int k)
{
    const int m = cooperatingIndex(w, robot);
    if (m <= 0)
        return {};
    const Pose & off = w.formation[static_cast<std::size_t>(m)];
    const double len = std::hypot(off.x, off.y);
    const double ux = off.x/len, uy = off.y/len;
    const double side = m % 2 == 1 ? 1.0 : -1.0;
    if (k < w.windowStart)
    {
        const double t = w.windowStart > 1 ? static_cast<double>(k)/(w.windowStart - 1) : 1.0;
        const double dist = 3.0 + (1.0 - 3.0)*t;
        const double turn = 0.8 + (0.5 - 0.8)*t;
        return {dist*ux, dist*uy, side*turn};
    }
    if (k > w.windowEnd)
    {
        const double j = k - w.windowEnd;
        return {0.4*j*ux, 0.4*j*uy, 0.15*j*side};
    }
    return {};
}

Pose plannedPose(const WorldConfig & w, int robot, int k)
{
    const Pose slot = offsetPose(leaderPlan(w, k), slotOffset(w, robot));
    const Pose gap = slotGap(w, robot, k);
    return {slot.x + gap.x, slot.y + gap.y, wrapAngle(slot.theta + gap.theta)};
}

bool inWindow(int k, int start, int end) { return k >= start && k <= end; }

Matrix blockDiagonal(const Matrix & block, int count)
{
    const Index b = block.rows();
    Matrix out = Matrix::Zero(b*count, b*count);
    for (int i = 0; i < count; ++i)
        out.block(i*b, i*b, b, b) = block;
    return out;
}

Matrix sqrtPSD(const Matrix & S)
{
    const SymmetricEigen eig = symmetricEigen(symmetrise(S));
    return eig.vectors*eig.values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Vector sample(std::mt19937_64 & rng, const Matrix & root)
{
    std::normal_distribution<double> normal;
    Vector e(root.cols());
    for (Index i = 0; i < e.size(); ++i)
        e(i) = normal(rng);
    return root*e;
}

Vector stackPoses(const std::vector<Pose> & poses)
{
    Vector x(3*static_cast<Index>(poses.size()));
    for (std::size_t i = 0; i < poses.size(); ++i)
        x.segment(3*static_cast<Index>(i), 3) << poses[i].x, poses[i].y, poses[i].theta;
    return x;
}

// Odometry over the stacked state without heading wrap, so sigma points see a smooth map
Vector stackedMotion(const Vector & x, const std::vector<ControlInput> & u, const Vector & w)
{
    Vector y(x.size());
    for (std::size_t i = 0; i < u.size(); ++i)
    {
        const Index o = 3*static_cast<Index>(i);
        const double heading = x(o + 2) + u[i].alpha;
        y(o) = x(o) + u[i].r*std::cos(heading) + w(o);
        y(o + 1) = x(o + 1) + u[i].r*std::sin(heading) + w(o + 1);
        y(o + 2) = x(o + 2) + u[i].alpha + u[i].beta + w(o + 2);
    }
    return y;
}

Vector stackedMeasurement(const Vector & x, const Vector & v, const std::vector<int> & pairsFrom, int robots)
{
    Vector z(2*robots + 2*static_cast<Index>(pairsFrom.size()) - (pairsFrom.empty() ? 0 : 2));
    for (int i = 0; i < robots; ++i)
    {
        z(2*i) = x(3*i) + v(2*i);
        z(2*i + 1) = x(3*i + 1) + v(2*i + 1);
    }
    for (std::size_t n = 1; n < pairsFrom.size(); ++n)
    {
        const Index a = 3*pairsFrom[n - 1], b = 3*pairsFrom[n];
        const Index o = 2*robots + 2*static_cast<Index>(n - 1);
        z(o) = std::hypot(x(b) - x(a), x(b + 1) - x(a + 1));
        z(o + 1) = wrapAngle(x(b + 2) - x(a + 2));
    }
    return z;
}

DegenerateFactor requireNonZero(DegenerateFactor phi, const std::string & cluster)
{
    if (phi.isZero())
        throw InconsistentEvidence(cluster);
    return phi;
}

DegenerateFactor normaliseIfTracked(DegenerateFactor phi, const OpOptions & opts)
{
    return opts.trackNormaliser ? normalise(phi) : phi;
}

} // namespace

double wrapAngle(double a)
{
    a = std::remainder(a, 2.0*kPi);
    return a <= -kPi ? a + 2.0*kPi : a;
}

Pose motionStep(const Pose & prev, const ControlInput & u, const Vector & w)
{
    const double heading = prev.theta + u.alpha;
    return {prev.x + u.r*std::cos(heading) + w(0), prev.y + u.r*std::sin(heading) + w(1),
            wrapAngle(prev.theta + u.alpha + u.beta + w(2))};
}

Vector positionMeasurement(const Pose & pose, const Vector & v)
{
    return Eigen::Vector2d(pose.x + v(0), pose.y + v(1));
}

Vector auxiliaryMeasurement(const std::vector<Pose> & poses)
{
    if (poses.size() < 2)
        throw InvalidInput("auxiliary measurement needs at least two robots");
    Vector z(2*static_cast<Index>(poses.size() - 1));
    for (std::size_t n = 1; n < poses.size(); ++n)
    {
        const Pose & a = poses[n - 1];
        const Pose & b = poses[n];
        z(2*static_cast<Index>(n - 1)) = std::hypot(b.x - a.x, b.y - a.y);
        z(2*static_cast<Index>(n - 1) + 1) = wrapAngle(b.theta - a.theta);
    }
    return z;
}

ControlInput steer(const Pose & prev, const Pose & target)
{
    const double dx = target.x - prev.x, dy = target.y - prev.y;
    ControlInput u;
    u.r = std::hypot(dx, dy);
    u.alpha = u.r > 0.0 ? wrapAngle(std::atan2(dy, dx) - prev.theta) : 0.0;
    u.beta = wrapAngle(target.theta - prev.theta - u.alpha);
    return u;
}

void WorldConfig::validate() const
{
    if (robots < 1)
        throw InvalidInput("robot count must be positive");
    if (steps < 1)
        throw InvalidInput("step count must be positive");
    if (windowStart < 1 || windowStart > windowEnd || windowEnd > steps)
        throw InvalidInput("cooperation window must satisfy 1 <= start <= end <= steps");
    if (cooperating.size() < 2)
        throw InvalidInput("at least two robots must cooperate");
    if (formation.size() != cooperating.size())
        throw InvalidInput("formation needs one offset per cooperating robot");
    for (std::size_t i = 0; i < cooperating.size(); ++i)
    {
        if (cooperating[i] < 0 || cooperating[i] >= robots)
            throw InvalidInput("cooperating robot index out of range");
        for (std::size_t j = 0; j < i; ++j)
        {
            if (cooperating[i] == cooperating[j])
                throw InvalidInput("cooperating robots must be distinct");
            if (std::hypot(formation[i].x - formation[j].x, formation[i].y - formation[j].y) < 0.1)
                throw InvalidInput("formation places robots closer than 0.1 m");
        }
    }
    if (formation[0].x != 0.0 || formation[0].y != 0.0 || formation[0].theta != 0.0)
        throw InvalidInput("the first formation offset must be zero");
    auto checkCov = [](const Matrix & S, Index n, const char * what) {
        if (S.rows() != n || S.cols() != n || !allFinite(S))
            throw InvalidInput(std::string(what) + " must be a finite " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
        if ((S - S.transpose()).norm() > 1e-12*(1.0 + S.norm()))
            throw InvalidInput(std::string(what) + " must be symmetric");
        if (symmetricEigen(S).values.minCoeff() < -1e-12*(1.0 + S.norm()))
            throw InvalidInput(std::string(what) + " must be positive semi-definite");
    };
    checkCov(motionNoise, 3, "motion noise");
    checkCov(measurementNoise, 2, "measurement noise");
    if (!(priorVariance > 0.0) || !std::isfinite(priorVariance))
        throw InvalidInput("prior variance must be positive");
    if (!std::isfinite(speed))
        throw InvalidInput("speed must be finite");
}

Vector WorldConfig::auxiliaryTargets(double scale) const
{
    Vector z = auxiliaryMeasurement(formation);
    for (Index i = 0; i < z.size(); i += 2)
        z(i) *= scale;
    return z;
}

SimulationRecord simulate(const WorldConfig & world)
{
    world.validate();
    std::mt19937_64 rng(world.seed);
    const Matrix motionRoot = sqrtPSD(world.motionNoise);
    const Matrix measRoot = sqrtPSD(world.measurementNoise);
    const Matrix priorRoot = std::sqrt(world.priorVariance)*Matrix::Identity(3, 3);
    const int R = world.robots;
    const int leader = world.cooperating[0];

    SimulationRecord rec;
    rec.world = world;
    rec.truth.resize(static_cast<std::size_t>(world.steps + 1));
    rec.controls.resize(static_cast<std::size_t>(world.steps + 1));
    rec.positions.resize(static_cast<std::size_t>(world.steps + 1));
    rec.auxiliary.resize(static_cast<std::size_t>(world.steps + 1));

    for (int i = 0; i < R; ++i)
    {
        const Pose mean = plannedPose(world, i, 0);
        const Vector e = sample(rng, priorRoot);
        rec.truth[0].push_back({mean.x + e(0), mean.y + e(1), wrapAngle(mean.theta + e(2))});
    }

    for (int k = 1; k <= world.steps; ++k)
    {
        const auto & prev = rec.truth[static_cast<std::size_t>(k - 1)];
        std::vector<Pose> now(static_cast<std::size_t>(R));
        std::vector<ControlInput> u(static_cast<std::size_t>(R));
        std::vector<Vector> noise;
        for (int i = 0; i < R; ++i)
            noise.push_back(sample(rng, motionRoot));

        const bool carrying = inWindow(k, world.windowStart, world.windowEnd);
        std::vector<int> order{leader};
        for (int i = 0; i < R; ++i)
            if (i != leader)
                order.push_back(i);
        for (int i : order)
        {
            const std::size_t si = static_cast<std::size_t>(i);
            const int m = cooperatingIndex(world, i);
            if (carrying && m > 0)
            {
                // Hold the formation exactly; the command absorbs this robot's noise draw
                now[si] = offsetPose(now[static_cast<std::size_t>(leader)], world.formation[static_cast<std::size_t>(m)]);
                const Vector & w = noise[si];
                u[si] = steer(prev[si], {now[si].x - w(0), now[si].y - w(1), wrapAngle(now[si].theta - w(2))});
            }
            else
            {
                u[si] = steer(prev[si], plannedPose(world, i, k));
                now[si] = motionStep(prev[si], u[si], noise[si]);
            }
        }

        Vector z(2*R);
        for (int i = 0; i < R; ++i)
            z.segment(2*i, 2) = positionMeasurement(now[static_cast<std::size_t>(i)], sample(rng, measRoot));
        rec.positions[static_cast<std::size_t>(k)] = z;
        if (carrying)
        {
            std::vector<Pose> group;
            for (int j : world.cooperating)
                group.push_back(now[static_cast<std::size_t>(j)]);
            rec.auxiliary[static_cast<std::size_t>(k)] = auxiliaryMeasurement(group);
        }
        rec.truth[static_cast<std::size_t>(k)] = std::move(now);
        rec.controls[static_cast<std::size_t>(k)] = std::move(u);
    }
    return rec;
}

Hypothesis Hypothesis::truthOf(const WorldConfig & world)
{
    return {world.windowStart, world.windowEnd, 1.0};
}

Hypothesis Hypothesis::pickupAt(const WorldConfig & world, int pickup)
{
    return {pickup + 1, pickup + 1 + (world.windowEnd - world.windowStart), 1.0};
}

Hypothesis Hypothesis::scaled(const WorldConfig & world, double scale)
{
    return {world.windowStart, world.windowEnd, scale};
}

std::string methodName(Method m)
{
    switch (m)
    {
    case Method::degenerate: return "degenerate";
    case Method::ridge: return "ridge";
    case Method::noAuxiliary: return "no-auxiliary";
    }
    return "unknown";
}

Method parseMethod(const std::string & name)
{
    if (name == "degenerate")
        return Method::degenerate;
    if (name == "ridge")
        return Method::ridge;
    if (name == "no-auxiliary")
        return Method::noAuxiliary;
    throw InvalidInput("unknown method '" + name + "' (expected degenerate, ridge or no-auxiliary)");
}

Matrix ridgeBaseline(const Matrix & singularCov, double lambda)
{
    if (!(lambda > 0.0))
        throw InvalidInput("ridge parameter must be positive");
    return symmetrise(singularCov) + lambda*Matrix::Identity(singularCov.rows(), singularCov.cols());
}

double conditionNumber(const Matrix & cov)
{
    const SymmetricEigen eig = compactSymmetric(symmetrise(cov));
    if (eig.values.size() == 0)
        return 1.0;
    return eig.values(0)/eig.values(eig.values.size() - 1);
}

Matrix measurementNoiseCovariance(const WorldConfig & world, const MethodSpec & method, bool auxiliary)
{
    const Index R = world.robots;
    const Index pairs = auxiliary && !world.cooperating.empty() ? static_cast<Index>(world.cooperating.size()) - 1 : 0;
    Matrix cov = Matrix::Zero(2*R + 2*pairs, 2*R + 2*pairs);
    cov.topLeftCorner(2*R, 2*R) = blockDiagonal(world.measurementNoise, static_cast<int>(R));
    if (method.method == Method::ridge)
        cov = ridgeBaseline(cov, method.lambda);
    return cov;
}

double measurementConditionNumber(const WorldConfig & world, const Hypothesis & hypothesis, const MethodSpec & method)
{
    double kappa = 1.0;
    for (int k = 1; k <= world.steps; ++k)
    {
        const bool aux = method.method != Method::noAuxiliary && inWindow(k, hypothesis.windowStart, hypothesis.windowEnd);
        kappa = std::max(kappa, conditionNumber(measurementNoiseCovariance(world, method, aux)));
    }
    return kappa;
}

std::string stateName(int k) { return "x" + std::to_string(k); }
std::string measurementName(int k) { return "z" + std::to_string(k); }

EstimationProblem buildProblem(const SimulationRecord & record, const Hypothesis & hypothesis, const MethodSpec & method,
                               const OpOptions & opts)
{
    const WorldConfig & world = record.world;
    world.validate();
    if (hypothesis.windowStart < 1 || hypothesis.windowStart > hypothesis.windowEnd)
        throw InvalidInput("hypothesis window is empty");
    if (!(hypothesis.scale > 0.0))
        throw InvalidInput("hypothesis scale must be positive");
    if (method.method == Method::ridge && !(method.lambda > 0.0))
        throw InvalidInput("ridge parameter must be positive");
    const int K = world.steps;
    const int R = world.robots;
    const Index n = 3*R;
    if (static_cast<int>(record.truth.size()) != K + 1 || static_cast<int>(record.positions.size()) != K + 1)
        throw InvalidInput("simulation record does not match its world");

    std::vector<Pose> start;
    for (int i = 0; i < R; ++i)
        start.push_back(plannedPose(world, i, 0));
    const DegenerateFactor prior =
        fromGaussian(Scope{{stateName(0), n}}, stackPoses(start), world.priorVariance*Matrix::Identity(n, n));
    const DegenerateFactor motionNoise =
        fromGaussian(Scope{{"w", n}}, Vector::Zero(n), blockDiagonal(world.motionNoise, R));
    const Matrix positionCov = blockDiagonal(world.measurementNoise, R);
    const DegenerateFactor positionNoise = fromGaussian(Scope{{"v", 2*R}}, Vector::Zero(2*R), positionCov);
    const Vector auxTargets = world.auxiliaryTargets(hypothesis.scale);

    EstimationProblem prob;
    prob.kappa = measurementConditionNumber(world, hypothesis, method);
    prob.filtered.push_back(prior);
    prob.noiseDegeneracy.push_back(0);
    std::vector<DegenerateFactor> motion, measurement;
    Evidence evidence;

    for (int k = 1; k <= K; ++k)
    {
        const Scope prevScope{{stateName(k - 1), n}};
        const Scope curScope{{stateName(k), n}};
        const DegenerateFactor & belief = prob.filtered.back();
        const auto & u = record.controls[static_cast<std::size_t>(k)];

        const EquivalentTransform mt = equivalentTransformation(
            multiply(belief, motionNoise, opts), {stateName(k - 1)},
            [&u](const Vector & x, const Vector & w) { return stackedMotion(x, u, w); },
            Scope{{"w", n}}, {}, opts);
        DegenerateFactor psi = representConditional(mt.noise, mt.A, mt.b, prevScope, curScope, opts);
        const DegenerateFactor predicted = normaliseIfTracked(
            marginalise(requireNonZero(multiply(belief, psi, opts), "psi_" + std::to_string(k)), {stateName(k - 1)}, opts),
            opts);

        const bool aux = method.method != Method::noAuxiliary && inWindow(k, hypothesis.windowStart, hypothesis.windowEnd);
        const std::vector<int> pairs = aux ? world.cooperating : std::vector<int>{};
        const EquivalentTransform et = equivalentTransformation(
            multiply(predicted, positionNoise, opts), {stateName(k)},
            [&pairs, R](const Vector & x, const Vector & v) { return stackedMeasurement(x, v, pairs, R); },
            Scope{}, {}, opts);
        const Index m = et.b.size();
        const Matrix noiseCov = measurementNoiseCovariance(world, method, aux);
        if (noiseCov.rows() != m)
            throw ContractViolation("measurement noise does not match the measurement map");
        const DegenerateFactor noise = fromGaussian(Scope{{"v", m}}, Vector::Zero(m), noiseCov);
        prob.noiseDegeneracy.push_back(noise.degeneracy());

        const Scope zScope{{measurementName(k), m}};
        DegenerateFactor rho = representConditional(noise, et.A, et.b, curScope, zScope, opts);
        Vector z(m);
        z.head(2*R) = record.positions[static_cast<std::size_t>(k)];
        if (aux)
            z.tail(m - 2*R) = auxTargets;
        const Evidence ez{{measurementName(k), z}};
        const DegenerateFactor likelihood = reduce(rho, ez, opts);
        const std::string rhoName = "rho_" + std::to_string(k);
        prob.filtered.push_back(
            normaliseIfTracked(requireNonZero(multiply(predicted, requireNonZero(likelihood, rhoName), opts), rhoName), opts));

        motion.push_back(std::move(psi));
        measurement.push_back(std::move(rho));
        evidence.push_back(ez[0]);
    }
    prob.graph = buildChain(prior, std::move(motion), std::move(measurement), std::move(evidence));
    return prob;
}

void writeTrajectoryCsv(const SimulationRecord & record, const std::string & path)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write " + path);
    out << std::setprecision(17);
    out << "k,robot,x,y,theta,u_alpha,u_r,u_beta,z_x,z_y\n";
    for (std::size_t k = 0; k < record.truth.size(); ++k)
        for (std::size_t i = 0; i < record.truth[k].size(); ++i)
        {
            const Pose & p = record.truth[k][i];
            out << k << ',' << i << ',' << p.x << ',' << p.y << ',' << p.theta;
            if (k == 0)
                out << ",,,,,";
            else
            {
                const ControlInput & u = record.controls[k][i];
                const Vector & z = record.positions[k];
                out << ',' << u.alpha << ',' << u.r << ',' << u.beta << ',' << z(2*static_cast<Index>(i)) << ','
                    << z(2*static_cast<Index>(i) + 1);
            }
            out << '\n';
        }
}

void writeAuxiliaryCsv(const SimulationRecord & record, const std::string & path)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write " + path);
    out << std::setprecision(17);
    out << "k,pair,robot_a,robot_b,range,relative_theta\n";
    const auto & coop = record.world.cooperating;
    for (std::size_t k = 0; k < record.auxiliary.size(); ++k)
    {
        const Vector & a = record.auxiliary[k];
        for (Index p = 0; 2*p < a.size(); ++p)
            out << k << ',' << p << ',' << coop[static_cast<std::size_t>(p)] << ',' << coop[static_cast<std::size_t>(p + 1)]
                << ',' << a(2*p) << ',' << a(2*p + 1) << '\n';
    }
}

} // namespace degen
