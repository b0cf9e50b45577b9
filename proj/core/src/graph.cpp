#include "degen/graph.hpp"
#include "degen/errors.hpp"
#include "degen/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

namespace degen
{

namespace
{

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string clusterName(const char * prefix, int k)
{
    return std::string(prefix) + "_" + std::to_string(k);
}

Evidence evidenceFor(const DegenerateFactor & phi, const Evidence & evidence)
{
    Evidence out;
    for (const auto & a : evidence)
        if (phi.scope().contains(a.name))
            out.push_back(a);
    return out;
}

// Absorb evidence, integrate out anything that is not a listed state, order as keep
DegenerateFactor restrictTo(const DegenerateFactor & phi, const std::vector<std::string> & keep,
                            const Evidence & evidence, const std::string & cluster, const OpOptions & opts)
{
    DegenerateFactor out = reduce(phi, evidenceFor(phi, evidence), opts);
    if (out.isZero())
        throw InconsistentEvidence(cluster);
    std::vector<std::string> extra;
    for (const auto & name : out.scope().names())
        if (std::find(keep.begin(), keep.end(), name) == keep.end())
            extra.push_back(name);
    out = marginalise(out, extra, opts);
    return rearrangeScope(out, out.scope().subset(keep));
}

DegenerateFactor checked(DegenerateFactor phi, const std::string & cluster)
{
    if (phi.isZero())
        throw InconsistentEvidence(cluster);
    return phi;
}

struct Chain
{
    std::vector<DegenerateFactor> psi;  // index k, psi[0] unused
    std::vector<DegenerateFactor> up;   // index k, up[0] unused
};

Chain prepare(const ClusterGraph & graph, const OpOptions & opts)
{
    const int K = graph.steps();
    Chain ch;
    ch.psi.resize(static_cast<std::size_t>(K + 1));
    ch.up.resize(static_cast<std::size_t>(K + 1));
    for (int k = 1; k <= K; ++k)
    {
        const auto & prev = graph.states[static_cast<std::size_t>(k - 1)];
        const auto & cur = graph.states[static_cast<std::size_t>(k)];
        ch.psi[static_cast<std::size_t>(k)] =
            restrictTo(graph.motion[static_cast<std::size_t>(k - 1)], {prev, cur}, graph.evidence, clusterName("psi", k), opts);
        ch.up[static_cast<std::size_t>(k)] =
            restrictTo(graph.measurement[static_cast<std::size_t>(k - 1)], {cur}, graph.evidence, clusterName("rho", k), opts);
    }
    return ch;
}

double klOrInf(const DegenerateFactor & p, const DegenerateFactor & q)
{
    const KLResult r = klDivergence(p, q);
    return r.infinite ? kInf : std::max(0.0, r.value);
}

DegenerateFactor & mutableSlot(MessageSet & ms, const MessageId & id)
{
    switch (id.direction)
    {
    case Direction::rightward: return ms.rightward[static_cast<std::size_t>(id.k)];
    case Direction::leftward: return ms.leftward[static_cast<std::size_t>(id.k)];
    case Direction::downward: return ms.downward[static_cast<std::size_t>(id.k)];
    case Direction::upward: break;
    }
    return ms.upward[static_cast<std::size_t>(id.k)];
}

} // namespace

std::string messageLabel(const MessageId & id)
{
    const char * names[] = {"rightward", "leftward", "downward", "upward"};
    return std::string(names[static_cast<int>(id.direction)]) + "_" + std::to_string(id.k);
}

Scope ClusterGraph::stateScope(int k) const
{
    if (k == 0)
        return prior.scope();
    return motion[static_cast<std::size_t>(k - 1)].scope().subset({states[static_cast<std::size_t>(k)]});
}

ClusterGraph buildChain(const DegenerateFactor & prior, std::vector<DegenerateFactor> motion,
                        std::vector<DegenerateFactor> measurement, Evidence evidence)
{
    const std::size_t K = motion.size();
    if (K == 0)
        throw ContractViolation("a chain needs at least one time step");
    if (measurement.size() != K)
        throw ContractViolation("need one measurement factor per motion factor");
    if (prior.scope().size() != 1)
        throw ContractViolation("prior must be over a single state variable");

    ClusterGraph graph;
    graph.states.push_back(prior.scope().variables()[0].name);
    for (std::size_t k = 0; k < K; ++k)
    {
        const auto & vars = motion[k].scope().variables();
        if (vars.size() < 2 || vars[0].name != graph.states.back())
            throw ContractViolation("motion factor " + std::to_string(k + 1) + " does not start at the previous state");
        if (vars[0].dim != motion[k == 0 ? 0 : k - 1].scope().variable(vars[0].name).dim)
            throw ContractViolation("state dimensions disagree along the chain");
        graph.states.push_back(vars[1].name);
        if (!measurement[k].scope().contains(vars[1].name)
            || measurement[k].scope().variable(vars[1].name).dim != vars[1].dim)
            throw ContractViolation("measurement factor " + std::to_string(k + 1) + " does not cover its state");
    }
    if (prior.scope().variables()[0].dim != motion[0].scope().variables()[0].dim)
        throw ContractViolation("prior dimension disagrees with the first motion factor");
    for (const auto & a : evidence)
        if (std::find(graph.states.begin(), graph.states.end(), a.name) != graph.states.end())
            throw ContractViolation("evidence on state variable " + a.name);

    graph.prior = prior;
    graph.motion = std::move(motion);
    graph.measurement = std::move(measurement);
    graph.evidence = std::move(evidence);
    return graph;
}

Schedule Schedule::forwardBackward(int steps)
{
    Schedule s;
    for (int k = 1; k <= steps; ++k)
    {
        s.order.push_back({Direction::upward, k});
        s.order.push_back({Direction::rightward, k});
    }
    for (int k = steps; k >= 1; --k)
    {
        s.order.push_back({Direction::downward, k});
        s.order.push_back({Direction::leftward, k - 1});
    }
    return s;
}

Schedule Schedule::forwardOnly(int steps)
{
    Schedule s;
    for (int k = 1; k <= steps; ++k)
    {
        s.order.push_back({Direction::upward, k});
        s.order.push_back({Direction::rightward, k});
    }
    return s;
}

const DegenerateFactor & MessageSet::get(const MessageId & id) const
{
    const std::vector<DegenerateFactor> * v = nullptr;
    switch (id.direction)
    {
    case Direction::rightward: v = &rightward; break;
    case Direction::leftward: v = &leftward; break;
    case Direction::downward: v = &downward; break;
    case Direction::upward: v = &upward; break;
    }
    if (id.k < 0 || id.k >= static_cast<int>(v->size()))
        throw ContractViolation("no message " + messageLabel(id));
    return (*v)[static_cast<std::size_t>(id.k)];
}

double messageChange(const DegenerateFactor & a, const DegenerateFactor & b)
{
    if (a.isZero() || b.isZero())
        return a.isZero() && b.isZero() ? 0.0 : kInf;
    const DegenerateFactor bb = rearrangeScope(b, a.scope());
    if (a.isNormalisable() && bb.isNormalisable())
    {
        const DegenerateFactor na = normalise(a), nb = normalise(bb);
        return std::max(klOrInf(na, nb), klOrInf(nb, na));
    }
    if (a.degeneracy() != bb.degeneracy() || subspaceDistance(a.R(), bb.R()) > 1e-8)
        return kInf;
    const Vector oa = a.R()*a.c(), ob = bb.R()*bb.c();
    const double offset = (oa - ob).norm()/(1.0 + oa.norm());
    const Matrix Ka = a.Q()*a.lambda().asDiagonal()*a.Q().transpose();
    const Matrix Kb = bb.Q()*bb.lambda().asDiagonal()*bb.Q().transpose();
    const Vector ha = a.Q()*a.h(), hb = bb.Q()*bb.h();
    return offset + (Ka - Kb).norm()/(1.0 + Ka.norm()) + (ha - hb).norm()/(1.0 + ha.norm());
}

MessageSet passMessages(const ClusterGraph & graph, const Schedule & schedule, const OpOptions & opts)
{
    if (schedule.maxSweeps < 1)
        throw ContractViolation("schedule needs at least one sweep");
    const int K = graph.steps();
    const Chain ch = prepare(graph, opts);

    MessageSet ms;
    ms.states = graph.states;
    ms.momentsOnly = !opts.trackNormaliser;
    for (int k = 0; k <= K; ++k)
    {
        const Scope s = graph.stateScope(k);
        ms.rightward.push_back(k == 0 ? graph.prior : DegenerateFactor::vacuous(s));
        ms.leftward.push_back(DegenerateFactor::vacuous(s));
        ms.downward.push_back(DegenerateFactor::vacuous(s));
        ms.upward.push_back(DegenerateFactor::vacuous(s));
    }

    const std::vector<MessageId> order = schedule.order.empty() ? Schedule::forwardBackward(K).order : schedule.order;
    for (const auto & id : order)
    {
        const bool ok = id.direction == Direction::leftward ? (id.k >= 0 && id.k < K) : (id.k >= 1 && id.k <= K);
        if (!ok)
            throw ContractViolation("schedule refers to nonexistent message " + messageLabel(id));
    }

    auto state = [&](int k) { return graph.states[static_cast<std::size_t>(k)]; };
    auto compute = [&](const MessageId & id) -> DegenerateFactor {
        const int k = id.k;
        const std::size_t uk = static_cast<std::size_t>(k);
        switch (id.direction)
        {
        case Direction::upward:
            return ch.up[uk];
        case Direction::rightward:
        {
            const std::string name = clusterName("psi", k);
            DegenerateFactor f = checked(multiply(ch.psi[uk], ms.rightward[uk - 1], opts), name);
            f = checked(multiply(f, ms.upward[uk], opts), name);
            return marginalise(f, {state(k - 1)}, opts);
        }
        case Direction::leftward:
        {
            const std::string name = clusterName("psi", k + 1);
            DegenerateFactor f = checked(multiply(ch.psi[uk + 1], ms.leftward[uk + 1], opts), name);
            f = checked(multiply(f, ms.upward[uk + 1], opts), name);
            return marginalise(f, {state(k + 1)}, opts);
        }
        case Direction::downward:
        {
            const std::string name = clusterName("psi", k);
            DegenerateFactor f = checked(multiply(ch.psi[uk], ms.rightward[uk - 1], opts), name);
            f = checked(multiply(f, ms.leftward[uk], opts), name);
            return marginalise(f, {state(k - 1)}, opts);
        }
        }
        throw ContractViolation("unknown message direction");
    };

    for (int sweep = 1; sweep <= schedule.maxSweeps; ++sweep)
    {
        double change = 0.0;
        for (const auto & id : order)
        {
            DegenerateFactor next = compute(id);
            DegenerateFactor & slot = mutableSlot(ms, id);
            change = std::max(change, messageChange(slot, next));
            slot = std::move(next);
        }
        ms.sweeps = sweep;
        ms.lastChange = change;

        if (!schedule.traceDir.empty())
        {
            std::vector<std::pair<std::string, DegenerateFactor>> dump;
            for (const auto & id : order)
                dump.emplace_back(messageLabel(id), ms.get(id));
            std::filesystem::create_directories(schedule.traceDir);
            std::ofstream out(std::filesystem::path(schedule.traceDir) / ("sweep_" + std::to_string(sweep) + ".json"));
            out << factorsToJson(dump, 1) << '\n';
        }

        if (change <= schedule.convergenceTol)
        {
            ms.converged = true;
            break;
        }
    }
    return ms;
}

DegenerateFactor unnormalisedPosterior(const MessageSet & messages, int k, const OpOptions & opts)
{
    if (k < 0 || k > messages.steps())
        throw ContractViolation("no messages for step " + std::to_string(k));
    return checked(multiply(messages.rightward[static_cast<std::size_t>(k)], messages.leftward[static_cast<std::size_t>(k)], opts),
                   "posterior_" + std::to_string(k));
}

DegenerateFactor posterior(const MessageSet & messages, int k, const OpOptions & opts)
{
    return normalise(unnormalisedPosterior(messages, k, opts));
}

double logEvidence(const MessageSet & messages, int k, const OpOptions & opts)
{
    if (messages.momentsOnly || !opts.trackNormaliser)
        throw ContractViolation("log evidence is unavailable without normaliser tracking");
    if (!messages.converged)
        throw ContractViolation("log evidence needs converged messages");
    if (k < 0)
        k = messages.steps();
    const DegenerateFactor post = unnormalisedPosterior(messages, k, opts);
    return marginalise(post, post.scope().names(), opts).g();
}

BeliefUpdateResult passBeliefUpdate(const ClusterGraph & graph, int maxSweeps, double convergenceTol, const OpOptions & opts)
{
    const int K = graph.steps();
    const Chain ch = prepare(graph, opts);
    auto uk = [](int k) { return static_cast<std::size_t>(k); };

    BeliefUpdateResult res;
    for (int k = 1; k <= K; ++k)
    {
        DegenerateFactor b = ch.psi[uk(k)];
        if (k == 1)
            b = checked(multiply(b, graph.prior, opts), "psi_1");
        res.motionBeliefs.push_back(b);
        res.measurementBeliefs.push_back(ch.up[uk(k)]);
    }
    // Sepset beliefs: between psi_k and rho_k, and between psi_k and psi_{k+1}
    std::vector<DegenerateFactor> muRho, muChain;
    for (int k = 1; k <= K; ++k)
    {
        muRho.push_back(DegenerateFactor::vacuous(graph.stateScope(k)));
        muChain.push_back(DegenerateFactor::vacuous(graph.stateScope(k)));
    }

    auto pass = [&](const DegenerateFactor & from, DegenerateFactor & to, DegenerateFactor & mu,
                    const std::string & target) -> double {
        std::vector<std::string> out;
        for (const auto & name : from.scope().names())
            if (!mu.scope().contains(name))
                out.push_back(name);
        DegenerateFactor sigma = marginalise(from, out, opts);
        to = checked(multiply(to, divide(sigma, mu, opts), opts), target);
        const double change = messageChange(mu, sigma);
        mu = std::move(sigma);
        return change;
    };

    for (int sweep = 1; sweep <= maxSweeps; ++sweep)
    {
        double change = 0.0;
        for (int k = 1; k <= K; ++k)
        {
            change = std::max(change, pass(res.measurementBeliefs[uk(k - 1)], res.motionBeliefs[uk(k - 1)],
                                           muRho[uk(k - 1)], clusterName("psi", k)));
            if (k < K)
                change = std::max(change, pass(res.motionBeliefs[uk(k - 1)], res.motionBeliefs[uk(k)],
                                               muChain[uk(k - 1)], clusterName("psi", k + 1)));
        }
        for (int k = K; k >= 1; --k)
        {
            change = std::max(change, pass(res.motionBeliefs[uk(k - 1)], res.measurementBeliefs[uk(k - 1)],
                                           muRho[uk(k - 1)], clusterName("rho", k)));
            if (k > 1)
                change = std::max(change, pass(res.motionBeliefs[uk(k - 1)], res.motionBeliefs[uk(k - 2)],
                                               muChain[uk(k - 2)], clusterName("psi", k - 1)));
        }
        res.sweeps = sweep;
        if (change <= convergenceTol)
        {
            res.converged = true;
            break;
        }
    }

    res.posteriors.push_back(normalise(marginalise(res.motionBeliefs[0], {graph.states[1]}, opts)));
    for (int k = 1; k <= K; ++k)
        res.posteriors.push_back(normalise(res.measurementBeliefs[uk(k - 1)]));
    return res;
}

} // namespace degen
