#include "degen/serialize.hpp"
#include "degen/errors.hpp"

#include <json.hpp>

namespace degen
{

namespace
{

using nlohmann::json;

json matrixToJson(const Matrix & M)
{
    json rows = json::array();
    for (Index i = 0; i < M.rows(); ++i)
    {
        json row = json::array();
        for (Index j = 0; j < M.cols(); ++j)
            row.push_back(M(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vectorToJson(const Vector & v)
{
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i)
        out.push_back(v(i));
    return out;
}

Matrix matrixFromJson(const json & j, Index rows, Index cols)
{
    if (!j.is_array() || static_cast<Index>(j.size()) != rows)
        throw InvalidInput("matrix has the wrong number of rows");
    Matrix M(rows, cols);
    for (Index i = 0; i < rows; ++i)
    {
        const json & row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != cols)
            throw InvalidInput("matrix row has the wrong length");
        for (Index k = 0; k < cols; ++k)
            M(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return M;
}

Vector vectorFromJson(const json & j)
{
    if (!j.is_array())
        throw InvalidInput("expected an array");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Index>(i)) = j[i].get<double>();
    return v;
}

json factorJson(const DegenerateFactor & phi)
{
    json scope = json::array();
    for (const auto & v : phi.scope().variables())
        scope.push_back({{"name", v.name}, {"dim", v.dim}});
    json out = {
        {"scope", scope},
        {"Q", matrixToJson(phi.Q())},
        {"R", matrixToJson(phi.R())},
        {"lambda", vectorToJson(phi.lambda())},
        {"h", vectorToJson(phi.h())},
        {"c", vectorToJson(phi.c())},
        {"g", phi.g()},
    };
    if (phi.isZero())
        out["zero"] = true;
    return out;
}

} // namespace

std::string factorToJson(const DegenerateFactor & phi, int indent)
{
    return factorJson(phi).dump(indent);
}

DegenerateFactor factorFromJson(const std::string & text)
{
    json j;
    try
    {
        j = json::parse(text);
        std::vector<Variable> vars;
        for (const auto & v : j.at("scope"))
            vars.push_back({v.at("name").get<std::string>(), v.at("dim").get<Index>()});
        const Scope scope(std::move(vars));
        const Vector lambda = vectorFromJson(j.at("lambda"));
        const Vector c = vectorFromJson(j.at("c"));
        if (j.value("zero", false))
            return DegenerateFactor::zero(scope);
        const Index n = scope.dim();
        return DegenerateFactor(scope, matrixFromJson(j.at("Q"), n, lambda.size()), matrixFromJson(j.at("R"), n, c.size()),
                                lambda, vectorFromJson(j.at("h")), c, j.at("g").get<double>());
    }
    catch (const json::exception & e)
    {
        throw InvalidInput(std::string("malformed factor document: ") + e.what());
    }
}

std::string factorsToJson(const std::vector<std::pair<std::string, DegenerateFactor>> & factors, int indent)
{
    json out = json::array();
    for (const auto & [label, phi] : factors)
        out.push_back({{"label", label}, {"factor", factorJson(phi)}});
    return out.dump(indent);
}

} // namespace degen
