#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "degen/errors.hpp"
#include "degen/experiment.hpp"
#include "degen/serialize.hpp"
#include "degen/verify/random_factors.hpp"

using namespace degen;

namespace
{

std::string slurp(const std::filesystem::path & p)
{
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST(RunEstimation, RowCountAndPsdCovariances)
{
    const WorldConfig w;
    const RunReport rep = runEstimation(simulate(w), Hypothesis::truthOf(w), {});
    EXPECT_TRUE(rep.converged);
    // One row per robot for every state x_0..x_K
    EXPECT_EQ(rep.beliefs.size(), static_cast<std::size_t>((w.steps + 1)*w.robots));
    EXPECT_EQ(rep.posteriors.size(), static_cast<std::size_t>(w.steps + 1));
    EXPECT_TRUE(std::isfinite(rep.logEvidence));
    for (const BeliefRow & r : rep.beliefs)
    {
        EXPECT_TRUE(r.mean.allFinite());
        EXPECT_LT((r.covariance - r.covariance.transpose()).norm(), 1e-12);
        EXPECT_GE(symmetricEigen(r.covariance).values.minCoeff(), -1e-10);
    }
}

TEST(RunEstimation, JointRankDropsInWindow)
{
    const WorldConfig w;
    const RunReport rep = runEstimation(simulate(w), Hypothesis::truthOf(w), {});
    for (const BeliefRow & r : rep.beliefs)
    {
        const bool inWindow = r.k >= w.windowStart && r.k <= w.windowEnd;
        EXPECT_EQ(r.rank, inWindow ? 9 - 4 : 9) << r.k;
    }
}

TEST(RunEstimation, AuxiliaryShrinksWindowUncertainty)
{
    const WorldConfig w;
    const SimulationRecord rec = simulate(w);
    const RunReport with = runEstimation(rec, Hypothesis::truthOf(w), {});
    const RunReport without = runEstimation(rec, Hypothesis::truthOf(w), {Method::noAuxiliary, 0.0});
    for (int k = w.windowStart; k <= w.windowEnd; ++k)
        EXPECT_LE(windowPositionTrace(with, k, k), windowPositionTrace(without, k, k) + 1e-12) << k;
    EXPECT_LT(windowPositionTrace(with, w.windowStart, w.windowEnd),
              windowPositionTrace(without, w.windowStart, w.windowEnd));
}

TEST(RunEstimation, SmallRidgeAgreesWithDegenerate)
{
    const WorldConfig w;
    const SimulationRecord rec = simulate(w);
    const RunReport deg = runEstimation(rec, Hypothesis::truthOf(w), {});
    const RunReport ridge = runEstimation(rec, Hypothesis::truthOf(w), {Method::ridge, 1e-9});
    double worst = 0.0;
    for (std::size_t i = 0; i < deg.beliefs.size(); ++i)
    {
        const BeliefRow & a = deg.beliefs[i];
        if (a.k < w.windowStart || a.k > w.windowEnd)
            continue;
        worst = std::max(worst, (a.mean.head<2>() - ridge.beliefs[i].mean.head<2>()).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 1e-3);
}

TEST(RunEstimation, MomentsOnlyMatchesFull)
{
    const WorldConfig w;
    const SimulationRecord rec = simulate(w);
    OpOptions fast;
    fast.trackNormaliser = false;
    const RunReport full = runEstimation(rec, Hypothesis::truthOf(w), {});
    const RunReport quick = runEstimation(rec, Hypothesis::truthOf(w), {}, fast);
    EXPECT_TRUE(std::isnan(quick.logEvidence));
    for (std::size_t i = 0; i < full.beliefs.size(); ++i)
    {
        EXPECT_LT((full.beliefs[i].mean - quick.beliefs[i].mean).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((full.beliefs[i].covariance - quick.beliefs[i].covariance).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(ConfidenceRadius, TwoDimensionalChiSquare)
{
    // P(chi2_2 <= r2) = 1 - exp(-r2/2)
    EXPECT_NEAR(1.0 - std::exp(-confidenceRadiusSquared(0.67)/2.0), 0.67, 1e-14);
    EXPECT_NEAR(confidenceRadiusSquared(0.5), 2.0*std::log(2.0), 1e-14);
}

TEST(ParseConfig, FieldsAndDefaults)
{
    const ExperimentConfig d = parseConfig("{}");
    EXPECT_EQ(d.world.steps, 40);
    EXPECT_EQ(d.seeds.size(), 20u);
    EXPECT_EQ(d.lambdaGrid.size(), 13u);
    EXPECT_DOUBLE_EQ(d.lambdaGrid.front(), 1e-12);
    EXPECT_DOUBLE_EQ(d.lambdaGrid.back(), 1.0);

    const ExperimentConfig c = parseConfig(R"({
        "world": {"robots": 4, "steps": 30, "windowStart": 5, "windowEnd": 20, "cooperating": [1, 3],
                  "formation": [[0, 0, 0], [-1.5, 0.5, 0.2]], "measurementNoise": [[0.09, 0], [0, 0.09]],
                  "seed": 9},
        "method": "ridge",
        "lambda": 0.001,
        "pickupGrid": [4, 5],
        "seeds": [3, 4, 5],
        "outDir": "elsewhere",
        "momentsOnly": true
    })");
    EXPECT_EQ(c.world.robots, 4);
    EXPECT_EQ(c.world.cooperating, (std::vector<int>{1, 3}));
    EXPECT_DOUBLE_EQ(c.world.formation[1].x, -1.5);
    EXPECT_DOUBLE_EQ(c.world.measurementNoise(1, 1), 0.09);
    EXPECT_EQ(c.world.seed, 9u);
    EXPECT_EQ(c.method.method, Method::ridge);
    EXPECT_DOUBLE_EQ(c.method.lambda, 1e-3);
    EXPECT_EQ(c.pickupGrid, (std::vector<int>{4, 5}));
    EXPECT_EQ(c.seeds.size(), 3u);
    EXPECT_EQ(c.outDir, "elsewhere");
    EXPECT_TRUE(c.momentsOnly);
    EXPECT_FALSE(c.opOptions().trackNormaliser);
}

TEST(ParseConfig, Rejections)
{
    EXPECT_THROW(parseConfig("{\"wrld\": {}}"), InvalidInput);
    EXPECT_THROW(parseConfig("{\"world\": {\"steps\": \"many\"}}"), InvalidInput);
    EXPECT_THROW(parseConfig("not json"), InvalidInput);
    EXPECT_THROW(parseConfig("{\"lambdaGrid\": [1e-3, -1]}"), InvalidInput);
    EXPECT_THROW(loadConfig("/nonexistent/config.json"), InvalidInput);
}

TEST(Outputs, BeliefsCsvDeterministic)
{
    const WorldConfig w;
    const SimulationRecord rec = simulate(w);
    const auto dir = std::filesystem::temp_directory_path() / "degen_experiment_out";
    std::filesystem::create_directories(dir);
    writeBeliefsCsv(runEstimation(rec, Hypothesis::truthOf(w), {}), (dir / "a.csv").string());
    writeBeliefsCsv(runEstimation(rec, Hypothesis::truthOf(w), {}), (dir / "b.csv").string());
    const std::string a = slurp(dir / "a.csv");
    EXPECT_EQ(a, slurp(dir / "b.csv"));
    EXPECT_EQ(a.substr(0, a.find('\n')), "k,robot,mean_x,mean_y,mean_theta,cov_xx,cov_xy,cov_yy,cov_tt,rank");
    writeSvg(rec, runEstimation(rec, Hypothesis::truthOf(w), {}), (dir / "e.svg").string());
    const std::string svg = slurp(dir / "e.svg");
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_NE(svg.find("<ellipse"), std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST(Sweeps, SingleValueGridsAndTruthOnlyComparison)
{
    ExperimentConfig cfg;
    cfg.seeds = {1, 2};
    cfg.lambdaGrid = {1e-3};
    cfg.threads = 2;
    const RidgeSweep s = sweepRidge(cfg);
    ASSERT_EQ(s.rows.size(), 1u);
    EXPECT_EQ(s.rows[0].failures, 0);
    EXPECT_TRUE(std::isfinite(s.rows[0].logZMean));
    EXPECT_TRUE(std::isfinite(s.reference.logZMean));
    EXPECT_GT(s.reference.logZMean, s.rows[0].logZMean);

    cfg.pickupGrid = {10};
    const ComparisonTable t = compareModels(cfg, HypothesisKind::pickup);
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_TRUE(t.rows[0].argmax);
    EXPECT_EQ(t.rows[0].argmaxCount, 2);
}

TEST(Serialize, RoundTripIsBitIdentical)
{
    verify::Rng rng(3);
    for (int t = 0; t < 10; ++t)
    {
        const Scope s = verify::randomScope(rng, 1 + t % 5, 2);
        const DegenerateFactor phi = verify::randomFactor(rng, s, t % (s.dim() + 1));
        const DegenerateFactor back = factorFromJson(factorToJson(phi));
        EXPECT_EQ(back.scope(), phi.scope());
        EXPECT_TRUE((back.Q().array() == phi.Q().array()).all());
        EXPECT_TRUE((back.R().array() == phi.R().array()).all());
        EXPECT_TRUE((back.lambda().array() == phi.lambda().array()).all());
        EXPECT_TRUE((back.h().array() == phi.h().array()).all());
        EXPECT_TRUE((back.c().array() == phi.c().array()).all());
        EXPECT_EQ(back.g(), phi.g());
    }
    const DegenerateFactor z = factorFromJson(factorToJson(DegenerateFactor::zero(Scope{{"x", 2}})));
    EXPECT_TRUE(z.isZero());
    EXPECT_THROW(factorFromJson("{\"scope\": []"), InvalidInput);
}
