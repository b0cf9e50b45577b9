#ifndef DEGEN_ERRORS_HPP
#define DEGEN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace degen
{

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Non-finite entries, asymmetric or indefinite covariance, bad dimensions
class InvalidInput : public Error
{
public:
    using Error::Error;
};

// Caller broke a documented precondition (scope mismatch, bad permutation, ...)
class ContractViolation : public Error
{
public:
    using Error::Error;
};

class NotNormalisable : public Error
{
public:
    using Error::Error;
};

class InfiniteVariance : public Error
{
public:
    using Error::Error;
};

// Canonical marginal hit a singular block; use the degenerate path instead
class DegeneracyDetected : public Error
{
public:
    using Error::Error;
};

class DivergentIntegral : public Error
{
public:
    using Error::Error;
};

class IndefiniteQuotient : public Error
{
public:
    using Error::Error;
};

// Black-box map returned non-finite values
class PropagationError : public Error
{
public:
    using Error::Error;
};

// Message passing produced a zero factor
class InconsistentEvidence : public Error
{
public:
    explicit InconsistentEvidence(std::string cluster)
        : Error("inconsistent evidence in cluster " + cluster)
        , cluster_(std::move(cluster))
    {}
    const std::string & cluster() const { return cluster_; }
private:
    std::string cluster_;
};

} // namespace degen

#endif
