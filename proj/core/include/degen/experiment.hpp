#ifndef DEGEN_EXPERIMENT_HPP
#define DEGEN_EXPERIMENT_HPP

#include <cstdint>
#include <limits>
#include <string>
#include <vector>
#include "degen/robotsim.hpp"

namespace degen
{

struct ExperimentConfig
{
    WorldConfig world;
    MethodSpec method;
    std::vector<double> lambdaGrid = defaultLambdaGrid();
    std::vector<int> pickupGrid{6, 7, 8, 9, 10, 11, 12, 13, 14};
    std::vector<double> scaleGrid{0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4};
    std::vector<std::uint64_t> seeds = defaultSeeds();
    std::string outDir = "out";
    bool plots = true;
    bool momentsOnly = false;
    // 0 uses the hardware concurrency
    int threads = 0;

    static std::vector<double> defaultLambdaGrid();
    static std::vector<std::uint64_t> defaultSeeds();
    OpOptions opOptions() const;
};

// JSON object whose keys are the field names above; world fields sit under "world"
ExperimentConfig parseConfig(const std::string & jsonText);
ExperimentConfig loadConfig(const std::string & path);

struct BeliefRow
{
    int k = 0;
    int robot = 0;
    Eigen::Vector3d mean;
    Eigen::Matrix3d covariance;
    // Rank of the joint posterior covariance at step k
    Index rank = 0;
};

struct RunReport
{
    std::vector<BeliefRow> beliefs;
    // Joint posterior moments per step, k = 0..K
    std::vector<Moments> posteriors;
    double logEvidence = std::numeric_limits<double>::quiet_NaN();
    double kappa = 1.0;
    double seconds = 0.0;
    int sweeps = 0;
    bool converged = false;
};

RunReport runEstimation(const SimulationRecord & record, const Hypothesis & hypothesis, const MethodSpec & method,
                        const OpOptions & opts = {});

// Mean over steps first..last of the summed (x, y) posterior variances of all robots
double windowPositionTrace(const RunReport & report, int first, int last);

// Squared Mahalanobis radius of the 67% confidence ellipse in two dimensions
double confidenceRadiusSquared(double level = 0.67);

void writeBeliefsCsv(const RunReport & report, const std::string & path);
void writeSvg(const SimulationRecord & record, const RunReport & report, const std::string & path);

struct RidgeRow
{
    double lambda = 0.0;
    double kappa = 0.0;
    double logZMean = std::numeric_limits<double>::quiet_NaN();
    double logZStd = std::numeric_limits<double>::quiet_NaN();
    int failures = 0;
};

struct RidgeSweep
{
    std::vector<RidgeRow> rows;
    // The same seeds estimated with the degenerate auxiliary factors
    RidgeRow reference;
};

RidgeSweep sweepRidge(const ExperimentConfig & config);

enum class HypothesisKind { pickup, scale };

struct ComparisonRow
{
    double value = 0.0;
    double logZMean = std::numeric_limits<double>::quiet_NaN();
    double logZStd = std::numeric_limits<double>::quiet_NaN();
    int failures = 0;
    // Number of seeds for which this hypothesis had the highest evidence
    int argmaxCount = 0;
    bool argmax = false;
};

struct ComparisonTable
{
    HypothesisKind kind = HypothesisKind::pickup;
    std::vector<ComparisonRow> rows;
};

ComparisonTable compareModels(const ExperimentConfig & config, HypothesisKind kind);

void writeRidgeCsv(const RidgeSweep & sweep, const std::string & path);
void writeComparisonCsv(const ComparisonTable & table, const std::string & path);

} // namespace degen

#endif
