#ifndef DEGEN_SCOPE_HPP
#define DEGEN_SCOPE_HPP

#include <initializer_list>
#include <string>
#include <vector>
#include "degen/subspace.hpp"

namespace degen
{

struct Variable
{
    std::string name;
    Index dim;
    bool operator==(const Variable &) const = default;
};

// Ordered named partition of an n-vector
class Scope
{
public:
    Scope() = default;
    Scope(std::initializer_list<Variable> vars);
    explicit Scope(std::vector<Variable> vars);

    const std::vector<Variable> & variables() const { return vars_; }
    std::size_t size() const { return vars_.size(); }
    bool empty() const { return vars_.empty(); }
    Index dim() const { return dim_; }

    bool contains(const std::string & name) const;
    const Variable & variable(const std::string & name) const;
    Index offset(const std::string & name) const;
    std::vector<std::string> names() const;

    // Flat coordinate indices of the named variables, in the order given
    std::vector<Index> indices(const std::vector<std::string> & names) const;

    Scope subset(const std::vector<std::string> & names) const;
    Scope without(const std::vector<std::string> & names) const;
    // This scope followed by the variables of other not already present
    Scope unionWith(const Scope & other) const;
    bool disjointFrom(const Scope & other) const;
    // Same variables, possibly in a different order
    bool isPermutationOf(const Scope & other) const;

    bool operator==(const Scope & other) const { return vars_ == other.vars_; }

private:
    std::vector<Variable> vars_;
    Index dim_ = 0;
};

struct Assignment
{
    std::string name;
    Vector value;
};

using Evidence = std::vector<Assignment>;

std::vector<std::string> evidenceNames(const Evidence & evidence);
Vector stackEvidence(const Evidence & evidence);

// Permutation matrix P with (P x)_i = x_{idx[i]}
Matrix selectionMatrix(const std::vector<Index> & idx, Index n);

} // namespace degen

#endif
