#include "degen/verify/suites.hpp"
#include "degen/verify/random_factors.hpp"
#include "degen/errors.hpp"
#include "degen/graph.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace degen::verify
{

namespace
{

using Clock = std::chrono::steady_clock;

class Recorder
{
public:
    Recorder(std::string name, double tol) : start_(Clock::now())
    {
        r_.name = std::move(name);
        r_.tolerance = tol;
    }

    void error(double e, const std::string & where)
    {
        r_.worst = std::max(r_.worst, std::isfinite(e) ? e : std::numeric_limits<double>::infinity());
        if (!(e <= r_.tolerance))
            fail(where + ": error " + std::to_string(e));
    }

    void fail(const std::string & what)
    {
        if (r_.failures++ == 0)
            r_.firstFailure = what;
    }

    void nextCase() { ++r_.cases; }

    SuiteResult finish()
    {
        r_.seconds = std::chrono::duration<double>(Clock::now() - start_).count();
        return r_;
    }

private:
    SuiteResult r_;
    Clock::time_point start_;
};

double maxAbs(const Matrix & M) { return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff(); }

int uniformInt(Rng & rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Random nonempty subset of names; proper when the list has more than one entry and proper is set
std::vector<std::string> randomSubset(Rng & rng, std::vector<std::string> names, bool proper)
{
    std::shuffle(names.begin(), names.end(), rng);
    const int n = static_cast<int>(names.size());
    const int count = uniformInt(rng, 1, proper && n > 1 ? n - 1 : n);
    names.resize(static_cast<std::size_t>(count));
    return names;
}

Evidence evidenceFrom(const Scope & scope, const std::vector<std::string> & names, const Vector & x)
{
    Evidence ev;
    for (const auto & name : names)
        ev.push_back({name, x.segment(scope.offset(name), scope.variable(name).dim)});
    return ev;
}

double canonicalDistance(const CanonicalFactor & a, const CanonicalFactor & b)
{
    const CanonicalFactor bb = cAlign(b, a.scope);
    return std::max({maxAbs(a.K - bb.K), maxAbs(a.h - bb.h), std::abs(a.g - b.g)});
}

struct PlainMoments
{
    Vector mean;
    Matrix cov;
};

// Polynomial extrapolation to a = 0 through the given samples
PlainMoments extrapolate(const std::vector<double> & a, const std::vector<PlainMoments> & m)
{
    PlainMoments out{Vector::Zero(m[0].mean.size()), Matrix::Zero(m[0].cov.rows(), m[0].cov.cols())};
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        double w = 1.0;
        for (std::size_t j = 0; j < a.size(); ++j)
            if (j != i)
                w *= a[j]/(a[j] - a[i]);
        out.mean += w*m[i].mean;
        out.cov += w*m[i].cov;
    }
    return out;
}

double momentDistance(const Moments & d, const PlainMoments & p)
{
    return std::max(maxAbs(d.mean - p.mean), maxAbs(d.covariance - p.cov));
}

// Constraint normals whose singular values stay clear of zero
bool wellPosed(const Matrix & normals)
{
    return normals.size() == 0 || Eigen::JacobiSVD<Matrix>(normals).singularValues().minCoeff() >= 1e-2;
}

Matrix rows(const Matrix & M, const std::vector<Index> & idx)
{
    Matrix out(static_cast<Index>(idx.size()), M.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        out.row(static_cast<Index>(i)) = M.row(idx[i]);
    return out;
}

DegenerateFactor withZeroTail(const DegenerateFactor & phi, Rng & rng)
{
    if (phi.lambda().size() == 0 || uniformInt(rng, 0, 3) != 0)
        return phi;
    Vector l = phi.lambda();
    l(l.size() - 1) = 0.0;
    return phi.withLambda(l);
}

} // namespace

Fault parseFault(const std::string & name)
{
    if (name.empty() || name == "none")
        return Fault::none;
    if (name == "lambda-sign")
        return Fault::lambdaSign;
    throw InvalidInput("unknown fault '" + name + "' (expected none or lambda-sign)");
}

SuiteResult canonicalEquivalenceSuite(std::uint64_t seed, int cases, double tol)
{
    Rng rng(seed);
    Recorder rec("canonical-equivalence", tol);
    for (int i = 0; i < cases; ++i)
    {
        rec.nextCase();
        const std::string tag = "case " + std::to_string(i);
        try
        {
            const Index n = uniformInt(rng, 1, 6);
            const Scope scope = randomScope(rng, n, uniformInt(rng, 1, 3));
            const CanonicalFactor A = randomCanonical(rng, scope);
            const DegenerateFactor dA = fromCanonical(A);
            const auto names = scope.names();

            const auto out = randomSubset(rng, names, true);
            const std::vector<std::string> marg = names.size() > 1 ? out : names;
            rec.error(canonicalDistance(cMarginalise(A, marg), toCanonical(marginalise(dA, marg))), tag + " marginalise");

            // Second operand over part of the scope, possibly with a new variable
            std::vector<Variable> bv;
            for (const auto & name : randomSubset(rng, names, false))
                bv.push_back(scope.variable(name));
            const bool extra = uniformInt(rng, 0, 2) == 0;
            if (extra)
                bv.push_back({"extra", uniformInt(rng, 1, 2)});
            const Scope bScope(bv);
            const Scope uScope = scope.unionWith(bScope);
            const CanonicalFactor B = randomCanonical(rng, bScope);
            rec.error(canonicalDistance(cMultiply(cAlign(A, uScope), cAlign(B, uScope)),
                                        toCanonical(multiply(dA, fromCanonical(B)))),
                      tag + " multiply");

            std::vector<Variable> dv;
            for (const auto & name : randomSubset(rng, names, false))
                dv.push_back(scope.variable(name));
            const CanonicalFactor D = randomCanonical(rng, Scope(dv), 0.05, 0.3);
            rec.error(canonicalDistance(cDivide(A, cAlign(D, scope)), toCanonical(divide(dA, fromCanonical(D)))),
                      tag + " divide");

            const auto obs = randomSubset(rng, names, false);
            const Evidence ev = evidenceFrom(scope, obs, gaussianVector(rng, n));
            rec.error(canonicalDistance(cReduce(A, ev), toCanonical(reduce(dA, ev))), tag + " reduce");
        }
        catch (const std::exception & e)
        {
            rec.fail(tag + ": " + e.what());
        }
    }
    return rec.finish();
}

SuiteResult denseLimitSuite(std::uint64_t seed, int cases, double tol)
{
    Rng rng(seed);
    Recorder rec("dense-limit", tol);
    // Extrapolate over a sliding window of proxy widths and keep the window where successive results agree best
    auto limit = [&](const std::function<CanonicalFactor(double)> & proxy) {
        auto at = [&](double top) {
            const std::vector<double> as{top, top*1e-2, top*1e-4};
            std::vector<PlainMoments> ms;
            for (double a : as)
            {
                const CanonicalMoments cm = cMoments(proxy(a));
                ms.push_back({cm.mean, cm.covariance});
            }
            return extrapolate(as, ms);
        };
        std::vector<PlainMoments> ex;
        for (double top = 1e-2; top >= 1e-8*0.999; top *= 0.1)
            ex.push_back(at(top));
        std::size_t best = 0;
        double bestChange = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j + 1 < ex.size(); ++j)
        {
            const double change = std::max(maxAbs(ex[j + 1].mean - ex[j].mean), maxAbs(ex[j + 1].cov - ex[j].cov));
            if (change < bestChange)
            {
                bestChange = change;
                best = j;
            }
        }
        return ex[best];
    };

    for (int i = 0; i < cases; ++i)
    {
        rec.nextCase();
        const std::string tag = "case " + std::to_string(i);
        try
        {
            const Index n = uniformInt(rng, 2, 6);
            const Index k = uniformInt(rng, 1, static_cast<int>(n) - 1);
            const Scope scope = randomScope(rng, n, uniformInt(rng, 2, 3));
            const DegenerateFactor phi = randomFactor(rng, scope, k);
            const auto names = scope.names();

            const auto out = randomSubset(rng, names, true);
            rec.error(momentDistance(moments(marginalise(phi, out)),
                                     limit([&](double a) { return cMarginalise(denseLimitOracle(phi, a), out); })),
                      tag + " marginalise");

            std::vector<Variable> bv;
            for (const auto & name : randomSubset(rng, names, false))
                bv.push_back(scope.variable(name));
            const Scope bScope(bv);
            const Index k2max = std::min(bScope.dim() - 1, n - k);
            const DegenerateFactor psi = randomFactor(rng, bScope, uniformInt(rng, 0, static_cast<int>(k2max)));
            // Nearly dependent constraints put the answer where no proxy width resolves it
            std::vector<Variable> rest;
            for (const auto & v : scope.variables())
                if (!bScope.contains(v.name))
                    rest.push_back(v);
            const DegenerateFactor psiFull = rearrangeScope(rest.empty() ? psi : extendScope(psi, Scope(rest)), scope);
            Matrix normals(n, phi.R().cols() + psiFull.R().cols());
            normals << phi.R(), psiFull.R();
            if (wellPosed(normals))
                rec.error(momentDistance(moments(multiply(phi, psi)), limit([&](double a) {
                              return cMultiply(denseLimitOracle(phi, a), cAlign(denseLimitOracle(psi, a), scope));
                          })),
                          tag + " multiply");

            const Vector x = sampleFactor(rng, phi, 1).col(0);
            const Evidence ev = evidenceFrom(scope, randomSubset(rng, names, true), x);
            std::vector<std::string> hidden;
            for (const auto & name : names)
                if (std::none_of(ev.begin(), ev.end(), [&](const auto & e) { return e.name == name; }))
                    hidden.push_back(name);
            if (wellPosed(rows(phi.R(), scope.indices(hidden))))
                rec.error(momentDistance(moments(reduce(phi, ev)),
                                         limit([&](double a) { return cReduce(denseLimitOracle(phi, a), ev); })),
                          tag + " reduce");
        }
        catch (const std::exception & e)
        {
            rec.fail(tag + ": " + e.what());
        }
    }
    return rec.finish();
}

SuiteResult closureSuite(std::uint64_t seed, int cases, double tol, Fault fault)
{
    Rng rng(seed);
    Recorder rec("closure", tol);
    auto check = [&](const DegenerateFactor & out, const std::string & tag) {
        if (out.isZero())
            return;
        const DegenerateFactor probe = fault == Fault::lambdaSign ? out.withLambda(-out.lambda()) : out;
        if (const auto bad = probe.invariantViolation(tol))
            rec.fail(tag + ": " + *bad);
    };
    auto normalisable = [&](const Scope & s) {
        return randomFactor(rng, s, uniformInt(rng, 0, static_cast<int>(s.dim())));
    };
    auto anyFactor = [&](const Scope & s) { return withZeroTail(normalisable(s), rng); };

    for (int i = 0; i < cases; ++i)
    {
        rec.nextCase();
        const int op = i % 9;
        const std::string tag = "case " + std::to_string(i) + " op " + std::to_string(op);
        try
        {
            const Index n = uniformInt(rng, 1, 6);
            const Scope scope = randomScope(rng, n, uniformInt(rng, 1, 3));
            const auto names = scope.names();
            switch (op)
            {
            case 0:
            {
                const Index m = uniformInt(rng, 1, 6);
                check(affineTransform(normalisable(scope), gaussianMatrix(rng, m, n), gaussianVector(rng, m),
                                      Scope{{"y", m}}),
                      tag + " affine");
                break;
            }
            case 1:
                check(marginalise(normalisable(scope), randomSubset(rng, names, false)), tag + " marginalise");
                break;
            case 2:
            {
                std::vector<Variable> bv;
                for (const auto & name : randomSubset(rng, names, false))
                    bv.push_back(scope.variable(name));
                if (uniformInt(rng, 0, 1))
                    bv.push_back({"extra", uniformInt(rng, 1, 3)});
                check(multiply(anyFactor(scope), anyFactor(Scope(bv))), tag + " multiply");
                break;
            }
            case 3:
            {
                const DegenerateFactor a = normalisable(scope);
                const DegenerateFactor b = marginalise(a, randomSubset(rng, names, true));
                check(divide(a, b), tag + " divide by marginal");
                break;
            }
            case 4:
            {
                const DegenerateFactor a = anyFactor(scope);
                const Vector x = uniformInt(rng, 0, 1) && a.isNormalisable() ? sampleFactor(rng, a, 1).col(0)
                                                                             : gaussianVector(rng, n);
                check(reduce(a, evidenceFrom(scope, randomSubset(rng, names, false), x)), tag + " reduce");
                break;
            }
            case 5:
            {
                const Index m = uniformInt(rng, 1, 4);
                const DegenerateFactor noise = anyFactor(Scope{{"w", m}});
                check(representConditional(noise, gaussianMatrix(rng, m, n), gaussianVector(rng, m), scope,
                                           Scope{{"y", m}}),
                      tag + " conditional");
                break;
            }
            case 6:
            {
                const Index nw = uniformInt(rng, 0, 2);
                DegenerateFactor prior = normalisable(scope);
                if (nw > 0)
                    prior = multiply(prior, normalisable(Scope{{"w", nw}}));
                const Index m = uniformInt(rng, 1, 4);
                const Matrix M = gaussianMatrix(rng, m, n + nw);
                const EquivalentTransform et = equivalentTransformation(
                    prior, names,
                    [&M, n, nw](const Vector & x, const Vector & w) {
                        Vector xw(n + nw);
                        xw << x, w;
                        return Vector((M*xw).array().sin().matrix() + M*xw);
                    },
                    Scope{{"y", m}});
                check(et.noise, tag + " equivalent transformation");
                check(representConditional(et.noise, et.A, et.b, scope, Scope{{"y", m}}), tag + " linearised conditional");
                break;
            }
            case 7:
            {
                std::vector<std::string> order = names;
                std::shuffle(order.begin(), order.end(), rng);
                const DegenerateFactor a = anyFactor(scope);
                check(rearrangeScope(a, scope.subset(order)), tag + " rearrange");
                check(extendScope(a, Scope{{"extra", uniformInt(rng, 1, 3)}}), tag + " extend");
                break;
            }
            default:
            {
                // Chain of operations feeding each other
                DegenerateFactor a = normalisable(scope);
                const DegenerateFactor b = normalisable(Scope{{"extra", uniformInt(rng, 1, 3)}});
                DegenerateFactor p = multiply(a, b);
                check(p, tag + " chain multiply");
                p = divide(p, b);
                check(p, tag + " chain divide");
                if (p.isNormalisable())
                {
                    p = marginalise(p, {"extra"});
                    check(p, tag + " chain marginalise");
                    check(normalise(p), tag + " chain normalise");
                }
                break;
            }
            }
        }
        catch (const std::exception & e)
        {
            rec.fail(tag + ": " + e.what());
        }
    }
    return rec.finish();
}

SuiteResult momentSamplingSuite(std::uint64_t seed, int factors, int samples)
{
    Rng rng(seed);
    Recorder rec("moment-sampling", 1.0);
    const double N = samples;
    for (int i = 0; i < factors; ++i)
    {
        rec.nextCase();
        const std::string tag = "factor " + std::to_string(i);
        try
        {
            const Index n = uniformInt(rng, 2, 6);
            const Index k = uniformInt(rng, 1, static_cast<int>(n) - 1);
            const DegenerateFactor phi = randomFactor(rng, randomScope(rng, n, 1), k, 0.2, 5.0);
            const Moments m = moments(phi);
            const Matrix X = sampleFactor(rng, phi, samples);
            const Vector mean = X.rowwise().mean();
            const Matrix D = X.colwise() - mean;
            const Matrix C = D*D.transpose()/(N - 1.0);

            const double d = static_cast<double>(n - k);
            const Matrix W = phi.lambda().cwiseSqrt().asDiagonal()*phi.Q().transpose();
            // Ratios to three standard errors of the whitened statistics
            rec.error((W*(mean - m.mean)).norm()/(3.0*std::sqrt(d/N)), tag + " mean");
            rec.error((W*C*W.transpose() - Matrix::Identity(n - k, n - k)).norm()/(3.0*std::sqrt((d*d + d)/N)),
                      tag + " covariance");
            const double onSupport = maxAbs((phi.R().transpose()*X).colwise() - phi.c());
            rec.error(onSupport/1e-10, tag + " constraint");
            rec.error(maxAbs(phi.R().transpose()*m.covariance)/1e-12, tag + " constrained variance");
        }
        catch (const std::exception & e)
        {
            rec.fail(tag + ": " + e.what());
        }
    }
    return rec.finish();
}

SuiteResult kalmanSuite(std::uint64_t seed, int steps, int chains, double tol)
{
    Rng rng(seed);
    Recorder rec("kalman-rts", tol);
    auto spd = [&](Index n, double lo) {
        const Matrix G = gaussianMatrix(rng, n, n);
        return Matrix(G*G.transpose()/static_cast<double>(n) + lo*Matrix::Identity(n, n));
    };
    for (int c = 0; c < chains; ++c)
    {
        rec.nextCase();
        const std::string tag = "chain " + std::to_string(c);
        try
        {
            const Index n = uniformInt(rng, 1, 3), m = uniformInt(rng, 1, 2);
            const Matrix F = 0.9*randomOrthogonal(rng, n) + 0.1*gaussianMatrix(rng, n, n);
            const Vector u = 0.3*gaussianVector(rng, n);
            const Matrix Qn = spd(n, 0.1), H = gaussianMatrix(rng, m, n), Rn = spd(m, 0.2);
            const Vector d = 0.3*gaussianVector(rng, m);
            const Vector m0 = gaussianVector(rng, n);
            const Matrix P0 = spd(n, 0.5);

            std::vector<Vector> z(static_cast<std::size_t>(steps + 1));
            Vector x = m0 + P0.llt().matrixL()*gaussianVector(rng, n);
            for (int k = 1; k <= steps; ++k)
            {
                x = F*x + u + Qn.llt().matrixL()*gaussianVector(rng, n);
                z[static_cast<std::size_t>(k)] = H*x + d + Rn.llt().matrixL()*gaussianVector(rng, m);
            }

            // Classical recursions
            std::vector<Vector> mf(static_cast<std::size_t>(steps + 1)), mp(mf.size());
            std::vector<Matrix> Pf(mf.size()), Pp(mf.size());
            mf[0] = m0;
            Pf[0] = P0;
            double logZ = 0.0;
            for (int k = 1; k <= steps; ++k)
            {
                const std::size_t s = static_cast<std::size_t>(k);
                mp[s] = F*mf[s - 1] + u;
                Pp[s] = F*Pf[s - 1]*F.transpose() + Qn;
                const Matrix S = H*Pp[s]*H.transpose() + Rn;
                const Vector r = z[s] - H*mp[s] - d;
                const Eigen::LLT<Matrix> llt(S);
                const Matrix Kg = Pp[s]*H.transpose()*llt.solve(Matrix::Identity(m, m));
                mf[s] = mp[s] + Kg*r;
                Pf[s] = (Matrix::Identity(n, n) - Kg*H)*Pp[s];
                logZ += -0.5*r.dot(llt.solve(r)) - 0.5*std::log(S.determinant())
                        - 0.5*static_cast<double>(m)*std::log(2.0*std::numbers::pi);
            }
            std::vector<Vector> ms = mf;
            std::vector<Matrix> Ps = Pf;
            for (int k = steps - 1; k >= 0; --k)
            {
                const std::size_t s = static_cast<std::size_t>(k);
                const Matrix G = Pf[s]*F.transpose()*Pp[s + 1].inverse();
                ms[s] = mf[s] + G*(ms[s + 1] - mp[s + 1]);
                Ps[s] = Pf[s] + G*(Ps[s + 1] - Pp[s + 1])*G.transpose();
            }

            std::vector<DegenerateFactor> motion, measurement;
            Evidence evidence;
            const DegenerateFactor wNoise = fromGaussian(Scope{{"w", n}}, Vector::Zero(n), Qn);
            const DegenerateFactor vNoise = fromGaussian(Scope{{"v", m}}, Vector::Zero(m), Rn);
            for (int k = 1; k <= steps; ++k)
            {
                const Scope prev{{"x" + std::to_string(k - 1), n}}, cur{{"x" + std::to_string(k), n}};
                const Scope zs{{"z" + std::to_string(k), m}};
                motion.push_back(representConditional(wNoise, F, u, prev, cur));
                measurement.push_back(representConditional(vNoise, H, d, cur, zs));
                evidence.push_back({"z" + std::to_string(k), z[static_cast<std::size_t>(k)]});
            }
            const ClusterGraph graph = buildChain(fromGaussian(Scope{{"x0", n}}, m0, P0), motion, measurement, evidence);

            const MessageSet fwd = passMessages(graph, Schedule::forwardOnly(steps));
            const MessageSet both = passMessages(graph);
            if (!both.converged || both.sweeps != 2)
                rec.fail(tag + ": chain did not converge after the second sweep");
            for (int k = 0; k <= steps; ++k)
            {
                const std::size_t s = static_cast<std::size_t>(k);
                const Moments f = moments(posterior(fwd, k));
                const Moments sm = moments(posterior(both, k));
                rec.error(std::max(maxAbs(f.mean - mf[s]), maxAbs(f.covariance - Pf[s])), tag + " filter k=" + std::to_string(k));
                rec.error(std::max(maxAbs(sm.mean - ms[s]), maxAbs(sm.covariance - Ps[s])),
                          tag + " smoother k=" + std::to_string(k));
            }
            rec.error(std::abs(logEvidence(both) - logZ)/(1.0 + std::abs(logZ)), tag + " log evidence");
        }
        catch (const std::exception & e)
        {
            rec.fail(tag + ": " + e.what());
        }
    }
    return rec.finish();
}

std::vector<SuiteResult> selftest(std::uint64_t seed, Fault fault)
{
    return {denseLimitSuite(seed), canonicalEquivalenceSuite(seed + 1), kalmanSuite(seed + 2),
            closureSuite(seed + 3, 2000, 1e-10, fault)};
}

std::string formatResult(const SuiteResult & r)
{
    std::ostringstream os;
    os << (r.passed() ? "PASS " : "FAIL ") << r.name << ": cases=" << r.cases << " failures=" << r.failures
       << " worst=" << r.worst << " tol=" << r.tolerance << " time=" << r.seconds << "s";
    if (!r.firstFailure.empty())
        os << " first failure: " << r.firstFailure;
    return os.str();
}

} // namespace degen::verify
