#ifndef DEGEN_GRAPH_HPP
#define DEGEN_GRAPH_HPP

#include <string>
#include <vector>
#include "degen/degenerate.hpp"

namespace degen
{

enum class Direction { rightward, leftward, downward, upward };

struct MessageId
{
    Direction direction;
    int k;
    bool operator==(const MessageId &) const = default;
};

std::string messageLabel(const MessageId & id);

// Chain cluster graph: motion clusters psi_k over (x_{k-1}, x_k) and
// measurement clusters rho_k over (x_k, z_k), k = 1..K, joined by sepsets
// over single state blocks. The prior over x_0 enters as the initial
// rightward message.
struct ClusterGraph
{
    DegenerateFactor prior;
    std::vector<DegenerateFactor> motion;
    std::vector<DegenerateFactor> measurement;
    Evidence evidence;
    std::vector<std::string> states;

    int steps() const { return static_cast<int>(motion.size()); }
    int clusterCount() const { return 2*steps(); }
    int sepsetCount() const { return 2*steps() - 1; }
    Scope stateScope(int k) const;
};

ClusterGraph buildChain(const DegenerateFactor & prior, std::vector<DegenerateFactor> motion,
                        std::vector<DegenerateFactor> measurement, Evidence evidence);

struct Schedule
{
    // Messages computed in each sweep, in order; empty selects forwardBackward
    std::vector<MessageId> order;
    int maxSweeps = 50;
    double convergenceTol = 1e-6;
    // When set, every sweep's messages are written to <traceDir>/sweep_<n>.json
    std::string traceDir;

    static Schedule forwardBackward(int steps);
    // Rightward and upward messages only, which yields filtering estimates
    static Schedule forwardOnly(int steps);
};

struct MessageSet
{
    std::vector<std::string> states;
    // Indexed by k = 0..K; rightward[0] is the prior and leftward[K] is vacuous.
    // downward[0] and upward[0] are unused placeholders.
    std::vector<DegenerateFactor> rightward, leftward, downward, upward;
    bool converged = false;
    int sweeps = 0;
    double lastChange = 0.0;
    bool momentsOnly = false;

    int steps() const { return static_cast<int>(rightward.size()) - 1; }
    const DegenerateFactor & get(const MessageId & id) const;
};

MessageSet passMessages(const ClusterGraph & graph, const Schedule & schedule = {}, const OpOptions & opts = {});

// Unnormalised product of the rightward and leftward messages at x_k
DegenerateFactor unnormalisedPosterior(const MessageSet & messages, int k, const OpOptions & opts = {});
DegenerateFactor posterior(const MessageSet & messages, int k, const OpOptions & opts = {});
double logEvidence(const MessageSet & messages, int k = -1, const OpOptions & opts = {});

// Largest change between two versions of a message: symmetric KL when both
// are normalisable, otherwise a relative distance between their parameters
double messageChange(const DegenerateFactor & a, const DegenerateFactor & b);

// Lauritzen-Spiegelhalter style belief update with sepset division
struct BeliefUpdateResult
{
    std::vector<DegenerateFactor> motionBeliefs;       // k = 1..K at index k-1
    std::vector<DegenerateFactor> measurementBeliefs;  // k = 1..K at index k-1
    std::vector<DegenerateFactor> posteriors;          // k = 0..K, normalised
    bool converged = false;
    int sweeps = 0;
};

BeliefUpdateResult passBeliefUpdate(const ClusterGraph & graph, int maxSweeps = 50, double convergenceTol = 1e-6,
                                    const OpOptions & opts = {});

} // namespace degen

#endif
