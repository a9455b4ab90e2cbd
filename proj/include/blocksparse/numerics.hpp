#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "blocksparse/errors.hpp"

namespace blocksparse::numerics {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct QuadratureSpec {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    int max_subdivisions = 200;

    void validate() const
    {
        if (!(rel_tol > 0.0) || !(abs_tol > 0.0) || max_subdivisions < 1) {
            throw DomainError("QuadratureSpec: tolerances must be positive and max_subdivisions >= 1");
        }
    }
};

// Degrees of freedom of the chi-square law Gamma(B/2, 1/2); B is the block size.
class ChiSquareDof {
public:
    explicit ChiSquareDof(int dof) : dof_(dof)
    {
        if (dof < 1) throw DomainError("ChiSquareDof: block size must be >= 1");
    }

    int value() const noexcept { return dof_; }
    double half() const noexcept { return 0.5 * dof_; }

    // log(2^(B/2) Gamma(B/2)), the normalizer of the chi-square density.
    double log_normalizer() const noexcept
    {
        return half() * std::log(2.0) + std::lgamma(half());
    }

private:
    int dof_;
};

struct Integral {
    double value;
    double error_bound;
};

/// Adaptive Gauss-Kronrod (61 point) integration of f over [lower, upper].
/// Either limit may be infinite; semi-infinite ranges are mapped onto a finite
/// interval. Throws QuadratureError when the error estimate exceeds
/// max(abs_tol, rel_tol * |result|) after max_subdivisions bisections.
template <class F>
Integral integrate_with_error(F&& f, double lower, double upper, const QuadratureSpec& spec = {})
{
    spec.validate();
    if (std::isnan(lower) || std::isnan(upper)) throw DomainError("integrate: NaN limit");
    if (lower == upper) return {0.0, 0.0};
    if (upper < lower) {
        const auto flipped = integrate_with_error(std::forward<F>(f), upper, lower, spec);
        return {-flipped.value, flipped.error_bound};
    }

    const auto depth = static_cast<unsigned>(
        std::ceil(std::log2(static_cast<double>(std::max(spec.max_subdivisions, 1)))));
    double error = 0.0;
    double l1 = 0.0;
    auto wrapped = [&f](double x) { return static_cast<double>(f(x)); };
    const double result = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        wrapped, lower, upper, depth, spec.rel_tol, &error, &l1);
    if (!std::isfinite(result) || error > std::max(spec.abs_tol, spec.rel_tol * std::abs(result))) {
        throw QuadratureError(result, error);
    }
    return {result, error};
}

template <class F>
double integrate(F&& f, double lower, double upper, const QuadratureSpec& spec = {})
{
    return integrate_with_error(std::forward<F>(f), lower, upper, spec).value;
}

/// Root of g in [lo, hi] by TOMS 748 (bracketed inverse-cubic / secant /
/// bisection hybrid). The returned point is the midpoint of a final bracket of
/// width <= tol.
template <class G>
double find_root(G&& g, double lo, double hi, double tol)
{
    if (!(lo < hi)) throw BracketError("find_root: empty bracket");
    if (!(tol > 0.0)) throw DomainError("find_root: tol must be positive");
    const double glo = g(lo);
    const double ghi = g(hi);
    if (glo == 0.0) return lo;
    if (ghi == 0.0) return hi;
    if (std::isnan(glo) || std::isnan(ghi) || std::signbit(glo) == std::signbit(ghi)) {
        throw BracketError("find_root: no sign change on bracket");
    }
    const double floor_tol = 4.0 * std::numeric_limits<double>::epsilon()
                             * std::max(std::abs(lo), std::abs(hi));
    const double width = std::max(tol, floor_tol);
    std::uintmax_t max_iter = 400;
    auto done = [width](double a, double b) { return std::abs(b - a) <= width; };
    const auto bracket = boost::math::tools::toms748_solve(
        [&g](double x) { return static_cast<double>(g(x)); }, lo, hi, glo, ghi, done, max_iter);
    return 0.5 * (bracket.first + bracket.second);
}

struct Minimum {
    double argmin;
    double value;
};

/// Brent's golden-section / parabolic search on [lo, hi]. g is assumed
/// unimodal on the bracket; this is not checked.
template <class G>
Minimum minimize_scalar(G&& g, double lo, double hi, double tol)
{
    if (!(lo < hi)) throw BracketError("minimize_scalar: lo must be < hi");
    if (!(tol > 0.0)) throw DomainError("minimize_scalar: tol must be positive");
    // Brent terminates on a relative width 2^(1-bits); half the mantissa is the useful limit.
    const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
    const int bits = std::clamp(static_cast<int>(std::ceil(-std::log2(tol / scale))) + 1, 4,
                                std::numeric_limits<double>::digits / 2);
    std::uintmax_t max_iter = 500;
    const auto [x, fx] = boost::math::tools::brent_find_minima(
        [&g](double t) { return static_cast<double>(g(t)); }, lo, hi, bits, max_iter);
    return {x, fx};
}

inline double chi_sq_pdf(double x, ChiSquareDof dof)
{
    if (!(x >= 0.0)) throw DomainError("chi_sq_pdf: x must be nonnegative");
    const int b = dof.value();
    if (x == 0.0) {
        if (b == 1) return kInf;
        if (b == 2) return 0.5;
        return 0.0;
    }
    return std::exp((dof.half() - 1.0) * std::log(x) - 0.5 * x - dof.log_normalizer());
}

namespace detail {

// log of y^p (y + tau)^(B-1) exp(-y^2/2 - tau y), the J_p integrand after the
// substitution x = (y + tau)^2 with the e^(-tau^2/2) factor pulled out.
inline double log_j_integrand(double y, int p, double tau, int b)
{
    double v = -0.5 * y * y - tau * y + p * std::log(y);
    if (b > 1) v += (b - 1) * std::log(y + tau);
    return v;
}

} // namespace detail

/// J_p(tau, B) = int_{tau^2}^inf (sqrt(x) - tau)^p f(x) dx for p in {1, 2},
/// with f the chi-square density with B degrees of freedom.
inline double j_moment(int p, double tau, ChiSquareDof dof, const QuadratureSpec& spec = {})
{
    if (p != 1 && p != 2) throw DomainError("j_moment: unsupported exponent (p must be 1 or 2)");
    if (!(tau >= 0.0)) throw DomainError("j_moment: tau must be nonnegative");
    const int b = dof.value();

    // The log-integrand is strictly concave with curvature <= -1, so it has a
    // single peak y* and lies below peak - (y - y*)^2 / 2 to its right.
    auto slope = [&](double y) { return p / y + (b - 1) / (y + tau) - y - tau; };
    const double upper_guess = std::sqrt(static_cast<double>(p + b)) + 1.0;
    const double lower_guess = p / (2.0 * (tau + upper_guess));
    const double peak = find_root(slope, lower_guess, upper_guess, 1e-14 * upper_guess);
    const double log_peak = detail::log_j_integrand(peak, p, tau, b);

    // Truncate where the envelope has fallen below abs_tol * 1e-3 of its peak.
    const double cut = -std::log(spec.abs_tol * 1e-3) + 5.0;
    const double upper = peak + std::sqrt(2.0 * cut);

    auto scaled = [&](double y) {
        if (y <= 0.0) return 0.0;
        return std::exp(detail::log_j_integrand(y, p, tau, b) - log_peak);
    };

    // Break points resolve the e^(-tau y) boundary layer for large tau.
    std::vector<double> breaks{0.0, peak};
    const double layer = 1.0 / (tau + 1.0);
    for (double w = layer; peak + w < upper; w *= 2.0) breaks.push_back(peak + w);
    breaks.push_back(upper);

    double total = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        total += integrate(scaled, breaks[i], breaks[i + 1], spec);
    }
    const double log_j = std::log(2.0) - dof.log_normalizer() - 0.5 * tau * tau + log_peak
                         + std::log(total);
    return std::exp(log_j);
}

/// Laplace asymptote of I_1 = int_{tau^2}^inf (tau - sqrt(x)) x^(B/2-1) e^(-x/2) dx.
inline double laplace_i1(double tau, ChiSquareDof dof)
{
    if (!(tau > 0.0)) throw DomainError("laplace_i1: tau must be positive");
    return -2.0 * std::exp(-0.5 * tau * tau + (dof.value() - 3) * std::log(tau));
}

/// Laplace asymptote of I_2 = int_{tau^2}^inf (sqrt(x) - tau)^2 x^(B/2-1) e^(-x/2) dx.
inline double laplace_i2(double tau, ChiSquareDof dof)
{
    if (!(tau > 0.0)) throw DomainError("laplace_i2: tau must be positive");
    return 4.0 * std::exp(-0.5 * tau * tau + (dof.value() - 4) * std::log(tau));
}

/// Exact unnormalized I_1, I_2 via j_moment: I_1 = -h(B) J_1, I_2 = h(B) J_2
/// with h(B) = 2^(B/2) Gamma(B/2).
inline double exact_i1(double tau, ChiSquareDof dof, const QuadratureSpec& spec = {})
{
    return -std::exp(dof.log_normalizer()) * j_moment(1, tau, dof, spec);
}

inline double exact_i2(double tau, ChiSquareDof dof, const QuadratureSpec& spec = {})
{
    return std::exp(dof.log_normalizer()) * j_moment(2, tau, dof, spec);
}

} // namespace blocksparse::numerics
