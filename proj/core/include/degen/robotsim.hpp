#ifndef DEGEN_ROBOTSIM_HPP
#define DEGEN_ROBOTSIM_HPP

#include <cstdint>
#include <string>
#include <vector>
#include "degen/degenerate.hpp"
#include "degen/graph.hpp"

namespace degen
{

struct Pose
{
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
};

// Odometry command: rotate by alpha, drive r, rotate by beta
struct ControlInput
{
    double alpha = 0.0;
    double r = 0.0;
    double beta = 0.0;
};

double wrapAngle(double a);

Pose motionStep(const Pose & prev, const ControlInput & u, const Vector & w);
Vector positionMeasurement(const Pose & pose, const Vector & v);
// Range and relative heading between consecutive robots of the list
Vector auxiliaryMeasurement(const std::vector<Pose> & poses);
// Command that takes prev to target when no noise is applied
ControlInput steer(const Pose & prev, const Pose & target);

struct WorldConfig
{
    int robots = 3;
    int steps = 40;
    // Cooperative transport happens on steps windowStart..windowEnd inclusive
    int windowStart = 11;
    int windowEnd = 30;
    std::vector<int> cooperating{0, 1, 2};
    // Rigid offsets (world frame position, heading) of each cooperating robot
    // from the first one while carrying the object
    std::vector<Pose> formation{{0.0, 0.0, 0.0}, {-2.0, 1.2, 0.4}, {-2.0, -1.2, -0.4}};
    Matrix motionNoise = Eigen::Vector3d(0.01, 0.01, 0.02*0.02).asDiagonal();
    Matrix measurementNoise = Eigen::Vector2d(0.04, 0.04).asDiagonal();
    double priorVariance = 0.1;
    // Distance covered by the object per step
    double speed = 0.3;
    std::uint64_t seed = 1;

    // Throws InvalidInput describing the first problem found
    void validate() const;
    // Measured auxiliary values while the formation holds
    Vector auxiliaryTargets(double scale = 1.0) const;
};

struct SimulationRecord
{
    WorldConfig world;
    // truth[k][i] for k = 0..K
    std::vector<std::vector<Pose>> truth;
    // controls[k][i] and positions[k] for k = 1..K; index 0 is unused
    std::vector<std::vector<ControlInput>> controls;
    std::vector<Vector> positions;
    // Noiseless auxiliary values, empty outside the cooperation window
    std::vector<Vector> auxiliary;
};

SimulationRecord simulate(const WorldConfig & world);

// Candidate explanation of the data used when building the estimation problem
struct Hypothesis
{
    int windowStart = 11;
    int windowEnd = 30;
    double scale = 1.0;

    static Hypothesis truthOf(const WorldConfig & world);
    // Window of the true length starting right after pickup step k'
    static Hypothesis pickupAt(const WorldConfig & world, int pickup);
    static Hypothesis scaled(const WorldConfig & world, double scale);
};

enum class Method { degenerate, ridge, noAuxiliary };

std::string methodName(Method m);
Method parseMethod(const std::string & name);

struct MethodSpec
{
    Method method = Method::degenerate;
    // Only used by ridge
    double lambda = 1e-4;
};

Matrix ridgeBaseline(const Matrix & singularCov, double lambda);
double conditionNumber(const Matrix & cov);
// Measurement noise covariance of one step, with auxiliary rows when requested
Matrix measurementNoiseCovariance(const WorldConfig & world, const MethodSpec & method, bool auxiliary);
// Largest condition number over all steps, independent of whether estimation succeeds
double measurementConditionNumber(const WorldConfig & world, const Hypothesis & hypothesis, const MethodSpec & method);

struct EstimationProblem
{
    ClusterGraph graph;
    // Forward filtering beliefs used as linearisation points, k = 0..K
    std::vector<DegenerateFactor> filtered;
    // Degeneracy of each measurement noise factor, index 0 unused
    std::vector<Index> noiseDegeneracy;
    // Largest condition number among measurement noise covariances (nonzero part)
    double kappa = 1.0;
};

std::string stateName(int k);
std::string measurementName(int k);

EstimationProblem buildProblem(const SimulationRecord & record, const Hypothesis & hypothesis, const MethodSpec & method,
                               const OpOptions & opts = {});

void writeTrajectoryCsv(const SimulationRecord & record, const std::string & path);
void writeAuxiliaryCsv(const SimulationRecord & record, const std::string & path);

} // namespace degen

#endif
