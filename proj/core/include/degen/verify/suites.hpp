#ifndef DEGEN_VERIFY_SUITES_HPP
#define DEGEN_VERIFY_SUITES_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace degen::verify
{

struct SuiteResult
{
    std::string name;
    int cases = 0;
    int failures = 0;
    // Largest error seen, in the suite's own metric
    double worst = 0.0;
    double tolerance = 0.0;
    double seconds = 0.0;
    std::string firstFailure;

    bool passed() const { return cases > 0 && failures == 0; }
};

// Deliberate defects used to check that the suites can fail
enum class Fault { none, lambdaSign };

Fault parseFault(const std::string & name);

// Degenerate operations on k = 0 inputs against the canonical formulas, in (K, h, g)
SuiteResult canonicalEquivalenceSuite(std::uint64_t seed, int cases = 500, double tol = 1e-9);

// Moments of degenerate operation outputs against the a -> 0 limit of the
// a-regularised dense computation, extrapolated from a = 1e-6 and 1e-8
SuiteResult denseLimitSuite(std::uint64_t seed, int cases = 200, double tol = 1e-5);

// Structural invariants of every operation's output on random inputs
SuiteResult closureSuite(std::uint64_t seed, int cases = 2000, double tol = 1e-10, Fault fault = Fault::none);

// Sample moments through the Q/R parametrisation against the closed-form moments
SuiteResult momentSamplingSuite(std::uint64_t seed, int factors = 20, int samples = 100000);

// Graph posteriors on a linear-Gaussian chain against Kalman filter and RTS smoother recursions
SuiteResult kalmanSuite(std::uint64_t seed, int steps = 5, int chains = 20, double tol = 1e-8);

std::vector<SuiteResult> selftest(std::uint64_t seed, Fault fault = Fault::none);

std::string formatResult(const SuiteResult & r);

} // namespace degen::verify

#endif
