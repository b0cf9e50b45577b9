#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>

#include "degen/errors.hpp"
#include "degen/experiment.hpp"
#include "degen/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace degen;

namespace
{

enum Exit { ok = 0, suiteFailure = 1, configError = 2, inconsistency = 3, numericalFailure = 4 };

struct Common
{
    std::string configPath;
    std::optional<std::uint64_t> seed;
    std::optional<int> seedCount;
    std::string outDir;
    std::string method;
    std::optional<double> lambda;
    bool noPlots = false;
    bool momentsOnly = false;
    int threads = 0;
};

ExperimentConfig resolve(const Common & c)
{
    ExperimentConfig cfg = c.configPath.empty() ? ExperimentConfig{} : loadConfig(c.configPath);
    if (c.seed)
    {
        cfg.world.seed = *c.seed;
        if (!c.seedCount)
            cfg.seeds.assign(1, *c.seed);
    }
    if (c.seedCount)
    {
        if (*c.seedCount < 1)
            throw InvalidInput("--seeds must be positive");
        const std::uint64_t first = c.seed.value_or(1);
        cfg.seeds.clear();
        for (int i = 0; i < *c.seedCount; ++i)
            cfg.seeds.push_back(first + static_cast<std::uint64_t>(i));
    }
    if (!c.outDir.empty())
        cfg.outDir = c.outDir;
    if (!c.method.empty())
        cfg.method.method = parseMethod(c.method);
    if (c.lambda)
        cfg.method.lambda = *c.lambda;
    if (c.noPlots)
        cfg.plots = false;
    if (c.momentsOnly)
        cfg.momentsOnly = true;
    if (c.threads > 0)
        cfg.threads = c.threads;
    cfg.world.validate();
    fs::create_directories(cfg.outDir);
    return cfg;
}

std::string outPath(const ExperimentConfig & cfg, const std::string & name)
{
    return (fs::path(cfg.outDir) / name).string();
}

void requireEvidence(const ExperimentConfig & cfg, const char * command)
{
    if (cfg.momentsOnly)
        throw InvalidInput(std::string(command) + " needs the log normaliser; drop --moments-only");
}

int runSimulate(const Common & c)
{
    const ExperimentConfig cfg = resolve(c);
    const SimulationRecord rec = simulate(cfg.world);
    writeTrajectoryCsv(rec, outPath(cfg, "trajectory.csv"));
    writeAuxiliaryCsv(rec, outPath(cfg, "auxiliary.csv"));
    std::cout << "wrote trajectory.csv and auxiliary.csv to " << cfg.outDir << '\n';
    return ok;
}

int runEstimate(const Common & c)
{
    const ExperimentConfig cfg = resolve(c);
    const SimulationRecord rec = simulate(cfg.world);
    const RunReport rep = runEstimation(rec, Hypothesis::truthOf(cfg.world), cfg.method, cfg.opOptions());
    writeTrajectoryCsv(rec, outPath(cfg, "trajectory.csv"));
    writeAuxiliaryCsv(rec, outPath(cfg, "auxiliary.csv"));
    writeBeliefsCsv(rep, outPath(cfg, "beliefs.csv"));
    if (cfg.plots)
        writeSvg(rec, rep, outPath(cfg, "estimate.svg"));
    std::cout << std::setprecision(10) << "method " << methodName(cfg.method.method);
    if (cfg.method.method == Method::ridge)
        std::cout << " lambda " << cfg.method.lambda;
    std::cout << "\nsweeps " << rep.sweeps << (rep.converged ? " (converged)" : " (not converged)") << '\n'
              << "window position trace " << windowPositionTrace(rep, cfg.world.windowStart, cfg.world.windowEnd) << '\n'
              << "kappa " << rep.kappa << '\n';
    if (cfg.momentsOnly)
        std::cout << "log evidence unavailable (moments only)\n";
    else
        std::cout << "log evidence " << rep.logEvidence << '\n';
    std::cout << "seconds " << rep.seconds << '\n';
    return ok;
}

int runSweep(const Common & c)
{
    const ExperimentConfig cfg = resolve(c);
    requireEvidence(cfg, "sweep-ridge");
    const RidgeSweep sweep = sweepRidge(cfg);
    writeRidgeCsv(sweep, outPath(cfg, "ridge_sweep.csv"));
    std::cout << std::setprecision(6) << "lambda,kappa,log_z_mean,log_z_std,failures\n";
    for (const auto & r : sweep.rows)
        std::cout << r.lambda << ',' << r.kappa << ',' << r.logZMean << ',' << r.logZStd << ',' << r.failures << '\n';
    std::cout << "degenerate reference: log_z_mean " << sweep.reference.logZMean << " log_z_std " << sweep.reference.logZStd
              << '\n';
    return ok;
}

int runCompare(const Common & c, const std::string & grid)
{
    const ExperimentConfig cfg = resolve(c);
    requireEvidence(cfg, "compare-models");
    std::vector<HypothesisKind> kinds;
    if (grid == "pickup" || grid == "both")
        kinds.push_back(HypothesisKind::pickup);
    if (grid == "scale" || grid == "both")
        kinds.push_back(HypothesisKind::scale);
    for (HypothesisKind kind : kinds)
    {
        const ComparisonTable t = compareModels(cfg, kind);
        const std::string name = kind == HypothesisKind::pickup ? "pickup" : "scale";
        writeComparisonCsv(t, outPath(cfg, "model_comparison_" + name + ".csv"));
        std::cout << std::setprecision(6) << name << ",log_z_mean,log_z_std,failures,argmax_count,argmax\n";
        for (const auto & r : t.rows)
            std::cout << r.value << ',' << r.logZMean << ',' << r.logZStd << ',' << r.failures << ',' << r.argmaxCount
                      << ',' << (r.argmax ? 1 : 0) << '\n';
    }
    return ok;
}

int runSelftest(std::uint64_t seed, const std::string & fault)
{
    const auto results = verify::selftest(seed, verify::parseFault(fault));
    bool all = true;
    for (const auto & r : results)
    {
        std::cout << verify::formatResult(r) << '\n';
        all = all && r.passed();
    }
    std::cout << (all ? "selftest passed" : "selftest FAILED") << '\n';
    return all ? ok : suiteFailure;
}

} // namespace

int main(int argc, char ** argv)
{
    CLI::App app{"Inference with degenerate Gaussian factors: robot transport experiments"};
    app.require_subcommand(1);
    Common common;
    auto addCommon = [&](CLI::App * sub) {
        sub->add_option("--config", common.configPath, "JSON experiment configuration")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "World seed (first seed for sweeps)");
        sub->add_option("--seeds", common.seedCount, "Number of consecutive seeds for sweeps");
        sub->add_option("--out-dir", common.outDir, "Directory for CSV and SVG output");
        sub->add_option("--method", common.method, "degenerate, ridge or no-auxiliary")
            ->check(CLI::IsMember({"degenerate", "ridge", "no-auxiliary"}));
        sub->add_option("--lambda", common.lambda, "Ridge parameter for --method ridge")->check(CLI::PositiveNumber);
        sub->add_flag("--no-plots", common.noPlots, "Skip SVG output");
        sub->add_flag("--moments-only", common.momentsOnly, "Do not track log normalisers");
        sub->add_option("--threads", common.threads, "Worker threads for sweeps (0 = all cores)");
    };

    auto * sim = app.add_subcommand("simulate", "Simulate the transport scenario and write trajectory.csv");
    addCommon(sim);
    auto * est = app.add_subcommand("estimate", "Simulate, run smoothing and write beliefs.csv");
    addCommon(est);
    auto * sweep = app.add_subcommand("sweep-ridge", "Ridge regularisation sweep over the lambda grid");
    addCommon(sweep);
    auto * cmp = app.add_subcommand("compare-models", "Evidence-based comparison of pickup time or object size");
    addCommon(cmp);
    std::string grid = "both";
    cmp->add_option("--grid", grid, "pickup, scale or both")->check(CLI::IsMember({"pickup", "scale", "both"}));
    auto * self = app.add_subcommand("selftest", "Run the oracle suites");
    std::uint64_t selfSeed = 7;
    std::string fault = "none";
    self->add_option("--seed", selfSeed, "Seed for the randomised suites");
    self->add_option("--inject-fault", fault, "Deliberate defect for negative controls")
        ->check(CLI::IsMember({"none", "lambda-sign"}));

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError & e)
    {
        const int code = app.exit(e);
        return code == 0 ? ok : configError;
    }

    try
    {
        if (*sim)
            return runSimulate(common);
        if (*est)
            return runEstimate(common);
        if (*sweep)
            return runSweep(common);
        if (*cmp)
            return runCompare(common, grid);
        return runSelftest(selfSeed, fault);
    }
    catch (const InvalidInput & e)
    {
        std::cerr << "configuration error: " << e.what() << '\n';
        return configError;
    }
    catch (const InconsistentEvidence & e)
    {
        std::cerr << "inconsistent evidence in cluster " << e.cluster() << ": " << e.what() << '\n';
        return inconsistency;
    }
    catch (const fs::filesystem_error & e)
    {
        std::cerr << "configuration error: " << e.what() << '\n';
        return configError;
    }
    catch (const std::exception & e)
    {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return numericalFailure;
    }
}
