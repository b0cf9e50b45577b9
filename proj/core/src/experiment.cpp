#include "degen/experiment.hpp"
#include "degen/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace degen
{

namespace
{

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename Fn>
void parallelFor(std::size_t count, int threads, Fn && fn)
{
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, count);
    if (workers <= 1)
    {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++)
                fn(i);
        });
}

struct Stats
{
    double mean = kNaN;
    double std = kNaN;
    int failures = 0;
};

Stats summarise(const std::vector<double> & values)
{
    Stats s;
    std::vector<double> ok;
    for (double v : values)
        if (std::isfinite(v))
            ok.push_back(v);
        else
            ++s.failures;
    if (ok.empty())
        return s;
    double sum = 0.0;
    for (double v : ok)
        sum += v;
    s.mean = sum/static_cast<double>(ok.size());
    double sq = 0.0;
    for (double v : ok)
        sq += (v - s.mean)*(v - s.mean);
    s.std = ok.size() > 1 ? std::sqrt(sq/static_cast<double>(ok.size() - 1)) : 0.0;
    return s;
}

// Log evidence of one run, NaN when the run fails numerically or logically
double evidenceOrNaN(const SimulationRecord & record, const Hypothesis & h, const MethodSpec & m, const OpOptions & opts)
{
    try
    {
        const EstimationProblem prob = buildProblem(record, h, m, opts);
        const MessageSet ms = passMessages(prob.graph, {}, opts);
        const double z = logEvidence(ms, -1, opts);
        return std::isfinite(z) ? z : kNaN;
    }
    catch (const InvalidInput &)
    {
        throw;
    }
    catch (const std::exception &)
    {
        return kNaN;
    }
}

template <typename T>
void readIf(const json & j, const char * key, T & out)
{
    if (j.contains(key))
        out = j.at(key).get<T>();
}

Matrix readMatrix(const json & j)
{
    const auto rows = j.get<std::vector<std::vector<double>>>();
    Matrix M(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
    {
        if (static_cast<Index>(rows[r].size()) != M.cols())
            throw InvalidInput("matrix rows have different lengths");
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            M(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
    return M;
}

void rejectUnknown(const json & j, const std::vector<std::string> & known, const std::string & where)
{
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw InvalidInput("unknown key '" + it.key() + "' in " + where);
}

WorldConfig parseWorld(const json & j)
{
    rejectUnknown(j, {"robots", "steps", "windowStart", "windowEnd", "cooperating", "formation", "motionNoise",
                      "measurementNoise", "priorVariance", "speed", "seed"}, "world");
    WorldConfig w;
    readIf(j, "robots", w.robots);
    readIf(j, "steps", w.steps);
    readIf(j, "windowStart", w.windowStart);
    readIf(j, "windowEnd", w.windowEnd);
    readIf(j, "cooperating", w.cooperating);
    readIf(j, "priorVariance", w.priorVariance);
    readIf(j, "speed", w.speed);
    readIf(j, "seed", w.seed);
    if (j.contains("formation"))
    {
        w.formation.clear();
        for (const auto & p : j.at("formation").get<std::vector<std::vector<double>>>())
        {
            if (p.size() != 3)
                throw InvalidInput("formation entries are [x, y, theta]");
            w.formation.push_back({p[0], p[1], p[2]});
        }
    }
    if (j.contains("motionNoise"))
        w.motionNoise = readMatrix(j.at("motionNoise"));
    if (j.contains("measurementNoise"))
        w.measurementNoise = readMatrix(j.at("measurementNoise"));
    return w;
}

void ellipse(std::ostream & out, double cx, double cy, const Matrix & cov, double r2, double scale, const char * colour)
{
    const SymmetricEigen eig = symmetricEigen(symmetrise(cov));
    const double a = std::sqrt(std::max(0.0, eig.values(0))*r2)*scale;
    const double b = std::sqrt(std::max(0.0, eig.values(1))*r2)*scale;
    // SVG y grows downwards, so the rotation flips sign
    const double angle = -std::atan2(eig.vectors(1, 0), eig.vectors(0, 0))*180.0/std::numbers::pi;
    out << "<ellipse cx=\"" << cx << "\" cy=\"" << cy << "\" rx=\"" << a << "\" ry=\"" << b << "\" transform=\"rotate("
        << angle << ' ' << cx << ' ' << cy << ")\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1\"/>\n";
}

} // namespace

std::vector<double> ExperimentConfig::defaultLambdaGrid()
{
    std::vector<double> grid;
    for (int e = -12; e <= 0; ++e)
        grid.push_back(std::pow(10.0, e));
    return grid;
}

std::vector<std::uint64_t> ExperimentConfig::defaultSeeds()
{
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 1; s <= 20; ++s)
        seeds.push_back(s);
    return seeds;
}

OpOptions ExperimentConfig::opOptions() const
{
    OpOptions o;
    o.trackNormaliser = !momentsOnly;
    return o;
}

ExperimentConfig parseConfig(const std::string & jsonText)
{
    try
    {
        const json j = json::parse(jsonText);
        if (!j.is_object())
            throw InvalidInput("config must be a JSON object");
        rejectUnknown(j, {"world", "method", "lambda", "lambdaGrid", "pickupGrid", "scaleGrid", "seeds", "outDir", "plots",
                          "momentsOnly", "threads"}, "config");
        ExperimentConfig c;
        if (j.contains("world"))
            c.world = parseWorld(j.at("world"));
        if (j.contains("method"))
            c.method.method = parseMethod(j.at("method").get<std::string>());
        readIf(j, "lambda", c.method.lambda);
        readIf(j, "lambdaGrid", c.lambdaGrid);
        readIf(j, "pickupGrid", c.pickupGrid);
        readIf(j, "scaleGrid", c.scaleGrid);
        readIf(j, "seeds", c.seeds);
        readIf(j, "outDir", c.outDir);
        readIf(j, "plots", c.plots);
        readIf(j, "momentsOnly", c.momentsOnly);
        readIf(j, "threads", c.threads);
        for (double l : c.lambdaGrid)
            if (!(l > 0.0) || !std::isfinite(l))
                throw InvalidInput("lambdaGrid entries must be positive");
        for (double a : c.scaleGrid)
            if (!(a > 0.0) || !std::isfinite(a))
                throw InvalidInput("scaleGrid entries must be positive");
        if (!(c.method.lambda > 0.0))
            throw InvalidInput("lambda must be positive");
        if (c.threads < 0)
            throw InvalidInput("threads must not be negative");
        c.world.validate();
        return c;
    }
    catch (const json::exception & e)
    {
        throw InvalidInput(std::string("config: ") + e.what());
    }
}

ExperimentConfig loadConfig(const std::string & path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parseConfig(ss.str());
}

RunReport runEstimation(const SimulationRecord & record, const Hypothesis & hypothesis, const MethodSpec & method,
                        const OpOptions & opts)
{
    const auto t0 = std::chrono::steady_clock::now();
    const EstimationProblem prob = buildProblem(record, hypothesis, method, opts);
    const MessageSet ms = passMessages(prob.graph, {}, opts);

    RunReport rep;
    rep.kappa = prob.kappa;
    rep.sweeps = ms.sweeps;
    rep.converged = ms.converged;
    const int R = record.world.robots;
    for (int k = 0; k <= ms.steps(); ++k)
    {
        const Moments m = moments(posterior(ms, k, opts));
        for (int i = 0; i < R; ++i)
        {
            BeliefRow row;
            row.k = k;
            row.robot = i;
            row.mean = m.mean.segment<3>(3*i);
            row.covariance = m.covariance.block<3, 3>(3*i, 3*i);
            row.rank = m.rank;
            rep.beliefs.push_back(row);
        }
        rep.posteriors.push_back(m);
    }
    if (opts.trackNormaliser && ms.converged)
        rep.logEvidence = logEvidence(ms, -1, opts);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

double windowPositionTrace(const RunReport & report, int first, int last)
{
    double total = 0.0;
    int steps = 0;
    for (int k = first; k <= last; ++k)
    {
        const Matrix & C = report.posteriors.at(static_cast<std::size_t>(k)).covariance;
        for (Index i = 0; i < C.rows(); i += 3)
            total += C(i, i) + C(i + 1, i + 1);
        ++steps;
    }
    return steps > 0 ? total/steps : 0.0;
}

double confidenceRadiusSquared(double level)
{
    if (!(level > 0.0 && level < 1.0))
        throw InvalidInput("confidence level must lie in (0, 1)");
    return -2.0*std::log(1.0 - level);
}

void writeBeliefsCsv(const RunReport & report, const std::string & path)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write " + path);
    out << std::setprecision(17);
    out << "k,robot,mean_x,mean_y,mean_theta,cov_xx,cov_xy,cov_yy,cov_tt,rank\n";
    for (const auto & b : report.beliefs)
        out << b.k << ',' << b.robot << ',' << b.mean(0) << ',' << b.mean(1) << ',' << b.mean(2) << ','
            << b.covariance(0, 0) << ',' << b.covariance(0, 1) << ',' << b.covariance(1, 1) << ','
            << b.covariance(2, 2) << ',' << b.rank << '\n';
}

void writeSvg(const SimulationRecord & record, const RunReport & report, const std::string & path)
{
    double minX = 1e300, maxX = -1e300, minY = 1e300, maxY = -1e300;
    for (const auto & step : record.truth)
        for (const auto & p : step)
        {
            minX = std::min(minX, p.x);
            maxX = std::max(maxX, p.x);
            minY = std::min(minY, p.y);
            maxY = std::max(maxY, p.y);
        }
    const double margin = 1.0, scale = 60.0;
    const double width = (maxX - minX + 2*margin)*scale, height = (maxY - minY + 2*margin)*scale;
    auto px = [&](double x) { return (x - minX + margin)*scale; };
    auto py = [&](double y) { return (maxY + margin - y)*scale; };
    const char * colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write " + path);
    out << std::setprecision(6);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
        << width << ' ' << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const double r2 = confidenceRadiusSquared();
    for (int i = 0; i < record.world.robots; ++i)
    {
        const char * colour = colours[i % 6];
        out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-opacity=\"0.5\" stroke-dasharray=\"4 3\" points=\"";
        for (const auto & step : record.truth)
            out << px(step[static_cast<std::size_t>(i)].x) << ',' << py(step[static_cast<std::size_t>(i)].y) << ' ';
        out << "\"/>\n";
        out << "<polyline fill=\"none\" stroke=\"" << colour << "\" points=\"";
        for (const auto & b : report.beliefs)
            if (b.robot == i)
                out << px(b.mean(0)) << ',' << py(b.mean(1)) << ' ';
        out << "\"/>\n";
        for (const auto & b : report.beliefs)
            if (b.robot == i)
                ellipse(out, px(b.mean(0)), py(b.mean(1)), b.covariance.topLeftCorner<2, 2>(), r2, scale, colour);
    }
    out << "</svg>\n";
}

RidgeSweep sweepRidge(const ExperimentConfig & config)
{
    if (config.lambdaGrid.empty())
        throw InvalidInput("lambda grid is empty");
    if (config.seeds.empty())
        throw InvalidInput("seed list is empty");
    for (double l : config.lambdaGrid)
        if (!(l > 0.0))
            throw InvalidInput("lambda grid values must be positive");
    const OpOptions opts = config.opOptions();
    const std::size_t S = config.seeds.size(), L = config.lambdaGrid.size();

    std::vector<SimulationRecord> records(S);
    parallelFor(S, config.threads, [&](std::size_t s) {
        WorldConfig w = config.world;
        w.seed = config.seeds[s];
        records[s] = simulate(w);
    });

    // Column L holds the degenerate reference
    std::vector<std::vector<double>> logZ(L + 1, std::vector<double>(S, kNaN));
    parallelFor((L + 1)*S, config.threads, [&](std::size_t job) {
        const std::size_t l = job/S, s = job % S;
        const MethodSpec m = l < L ? MethodSpec{Method::ridge, config.lambdaGrid[l]} : MethodSpec{Method::degenerate, 0.0};
        logZ[l][s] = evidenceOrNaN(records[s], Hypothesis::truthOf(config.world), m, opts);
    });

    RidgeSweep out;
    for (std::size_t l = 0; l <= L; ++l)
    {
        const Stats st = summarise(logZ[l]);
        RidgeRow row;
        row.lambda = l < L ? config.lambdaGrid[l] : 0.0;
        const MethodSpec m = l < L ? MethodSpec{Method::ridge, config.lambdaGrid[l]} : MethodSpec{Method::degenerate, 0.0};
        row.kappa = measurementConditionNumber(config.world, Hypothesis::truthOf(config.world), m);
        row.logZMean = st.mean;
        row.logZStd = st.std;
        row.failures = st.failures;
        if (l < L)
            out.rows.push_back(row);
        else
            out.reference = row;
    }
    return out;
}

ComparisonTable compareModels(const ExperimentConfig & config, HypothesisKind kind)
{
    const std::size_t H = kind == HypothesisKind::pickup ? config.pickupGrid.size() : config.scaleGrid.size();
    if (H == 0)
        throw InvalidInput("hypothesis grid is empty");
    if (config.seeds.empty())
        throw InvalidInput("seed list is empty");
    const OpOptions opts = config.opOptions();
    const std::size_t S = config.seeds.size();

    std::vector<SimulationRecord> records(S);
    parallelFor(S, config.threads, [&](std::size_t s) {
        WorldConfig w = config.world;
        w.seed = config.seeds[s];
        records[s] = simulate(w);
    });

    auto hypothesis = [&](std::size_t h) {
        return kind == HypothesisKind::pickup ? Hypothesis::pickupAt(config.world, config.pickupGrid[h])
                                              : Hypothesis::scaled(config.world, config.scaleGrid[h]);
    };
    std::vector<std::vector<double>> logZ(H, std::vector<double>(S, kNaN));
    parallelFor(H*S, config.threads, [&](std::size_t job) {
        const std::size_t h = job/S, s = job % S;
        logZ[h][s] = evidenceOrNaN(records[s], hypothesis(h), config.method, opts);
    });

    ComparisonTable table;
    table.kind = kind;
    for (std::size_t h = 0; h < H; ++h)
    {
        const Stats st = summarise(logZ[h]);
        ComparisonRow row;
        row.value = kind == HypothesisKind::pickup ? config.pickupGrid[h] : config.scaleGrid[h];
        row.logZMean = st.mean;
        row.logZStd = st.std;
        row.failures = st.failures;
        table.rows.push_back(row);
    }
    for (std::size_t s = 0; s < S; ++s)
    {
        std::size_t best = H;
        for (std::size_t h = 0; h < H; ++h)
            if (std::isfinite(logZ[h][s]) && (best == H || logZ[h][s] > logZ[best][s]))
                best = h;
        if (best < H)
            ++table.rows[best].argmaxCount;
    }
    std::size_t best = H;
    for (std::size_t h = 0; h < H; ++h)
        if (std::isfinite(table.rows[h].logZMean) && (best == H || table.rows[h].logZMean > table.rows[best].logZMean))
            best = h;
    if (best < H)
        table.rows[best].argmax = true;
    return table;
}

void writeRidgeCsv(const RidgeSweep & sweep, const std::string & path)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write " + path);
    out << std::setprecision(17);
    out << "lambda,kappa,log_z_mean,log_z_std,failures\n";
    for (const auto & r : sweep.rows)
        out << r.lambda << ',' << r.kappa << ',' << r.logZMean << ',' << r.logZStd << ',' << r.failures << '\n';
}

void writeComparisonCsv(const ComparisonTable & table, const std::string & path)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write " + path);
    out << std::setprecision(17);
    out << (table.kind == HypothesisKind::pickup ? "pickup" : "scale") << ",log_z_mean,log_z_std,failures,argmax_count,argmax\n";
    for (const auto & r : table.rows)
        out << r.value << ',' << r.logZMean << ',' << r.logZStd << ',' << r.failures << ',' << r.argmaxCount << ','
            << (r.argmax ? 1 : 0) << '\n';
}

} // namespace degen
