#include "degen/scope.hpp"
#include "degen/errors.hpp"

#include <algorithm>
#include <set>

namespace degen
{

Scope::Scope(std::initializer_list<Variable> vars)
    : Scope(std::vector<Variable>(vars))
{}

Scope::Scope(std::vector<Variable> vars)
    : vars_(std::move(vars))
{
    std::set<std::string> seen;
    for (const auto & v : vars_)
    {
        if (v.dim < 0)
            throw ContractViolation("negative dimension for variable " + v.name);
        if (!seen.insert(v.name).second)
            throw ContractViolation("duplicate variable " + v.name);
        dim_ += v.dim;
    }
}

bool Scope::contains(const std::string & name) const
{
    return std::any_of(vars_.begin(), vars_.end(), [&](const Variable & v) { return v.name == name; });
}

const Variable & Scope::variable(const std::string & name) const
{
    for (const auto & v : vars_)
        if (v.name == name)
            return v;
    throw ContractViolation("unknown variable " + name);
}

Index Scope::offset(const std::string & name) const
{
    Index off = 0;
    for (const auto & v : vars_)
    {
        if (v.name == name)
            return off;
        off += v.dim;
    }
    throw ContractViolation("unknown variable " + name);
}

std::vector<std::string> Scope::names() const
{
    std::vector<std::string> out;
    for (const auto & v : vars_)
        out.push_back(v.name);
    return out;
}

std::vector<Index> Scope::indices(const std::vector<std::string> & names) const
{
    std::vector<Index> idx;
    for (const auto & name : names)
    {
        const Index off = offset(name);
        const Index d = variable(name).dim;
        for (Index i = 0; i < d; ++i)
            idx.push_back(off + i);
    }
    return idx;
}

Scope Scope::subset(const std::vector<std::string> & names) const
{
    std::vector<Variable> out;
    for (const auto & name : names)
        out.push_back(variable(name));
    return Scope(std::move(out));
}

Scope Scope::without(const std::vector<std::string> & names) const
{
    for (const auto & name : names)
        variable(name);
    std::vector<Variable> out;
    for (const auto & v : vars_)
        if (std::find(names.begin(), names.end(), v.name) == names.end())
            out.push_back(v);
    return Scope(std::move(out));
}

Scope Scope::unionWith(const Scope & other) const
{
    std::vector<Variable> out = vars_;
    for (const auto & v : other.vars_)
    {
        if (contains(v.name))
        {
            if (variable(v.name).dim != v.dim)
                throw ContractViolation("variable " + v.name + " has inconsistent dimensions");
            continue;
        }
        out.push_back(v);
    }
    return Scope(std::move(out));
}

bool Scope::disjointFrom(const Scope & other) const
{
    return std::none_of(other.vars_.begin(), other.vars_.end(), [&](const Variable & v) { return contains(v.name); });
}

bool Scope::isPermutationOf(const Scope & other) const
{
    if (size() != other.size())
        return false;
    for (const auto & v : other.vars_)
        if (!contains(v.name) || variable(v.name).dim != v.dim)
            return false;
    return true;
}

std::vector<std::string> evidenceNames(const Evidence & evidence)
{
    std::vector<std::string> out;
    for (const auto & a : evidence)
        out.push_back(a.name);
    return out;
}

Vector stackEvidence(const Evidence & evidence)
{
    Index n = 0;
    for (const auto & a : evidence)
        n += a.value.size();
    Vector out(n);
    Index off = 0;
    for (const auto & a : evidence)
    {
        out.segment(off, a.value.size()) = a.value;
        off += a.value.size();
    }
    return out;
}

Matrix selectionMatrix(const std::vector<Index> & idx, Index n)
{
    Matrix P = Matrix::Zero(static_cast<Index>(idx.size()), n);
    for (std::size_t i = 0; i < idx.size(); ++i)
        P(static_cast<Index>(i), idx[i]) = 1.0;
    return P;
}

} // namespace degen
