#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "blocksparse/errors.hpp"
#include "blocksparse/numerics.hpp"
#include "blocksparse/rng.hpp"
#include "blocksparse/shrinkage.hpp"

namespace blocksparse::pt {

struct PTPoint {
    double delta = 0.0;
    double rho = 0.0;
    double tau_star = 0.0;
    int block_size = 1;
};

struct PTCurve {
    int block_size = 1;
    std::vector<PTPoint> points;
};

inline double j1(double tau, int b) { return numerics::j_moment(1, tau, numerics::ChiSquareDof(b)); }
inline double j2(double tau, int b) { return numerics::j_moment(2, tau, numerics::ChiSquareDof(b)); }

/// M(eps, tau) = (eps (B + tau^2) + (1 - eps) J_2(tau, B)) / B, the worst-case
/// risk of the block soft threshold over priors with activity eps.
inline double minimax_mse(double epsilon, double tau, int block_size)
{
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("minimax_mse: epsilon must lie in [0, 1]");
    if (!(tau >= 0.0)) throw DomainError("minimax_mse: tau must be nonnegative");
    const double b = block_size;
    return (epsilon * (b + tau * tau) + (1.0 - epsilon) * j2(tau, block_size)) / b;
}

namespace detail {

// Grow hi geometrically from start until f changes sign against f(lo).
template <class F>
double grow_bracket(F&& f, double lo, double start, double limit, const char* who)
{
    const bool neg = std::signbit(f(lo));
    for (double hi = start; hi <= limit; hi *= 2.0) {
        if (std::signbit(f(hi)) != neg) return hi;
    }
    throw BracketError(std::string(who) + ": no sign change up to tau = " + std::to_string(limit));
}

} // namespace detail

/// argmin over tau of minimax_mse, from the stationarity condition
/// eps tau = (1 - eps) J_1(tau, B).
inline double optimal_tau(double epsilon, int block_size)
{
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw DomainError("optimal_tau: degenerate prior (epsilon must lie strictly inside (0, 1))");
    }
    auto s = [&](double tau) { return epsilon * tau - (1.0 - epsilon) * j1(tau, block_size); };
    const double hi = detail::grow_bracket(s, 0.0, 1.0, 256.0, "optimal_tau");
    return numerics::find_root(s, 0.0, hi, 1e-14 * hi);
}

inline double minimized_mse(double epsilon, int block_size)
{
    return minimax_mse(epsilon, optimal_tau(epsilon, block_size), block_size);
}

/// Right-hand side of the implicit threshold equation,
///   [(B + tau^2) J_1 + tau J_2] / [B (tau + J_1)],
/// which falls from 1 at tau = 0 towards 0.
inline double lemma_delta_of_tau(double tau, int block_size)
{
    const double a = j1(tau, block_size);
    const double c = j2(tau, block_size);
    const double b = block_size;
    return ((b + tau * tau) * a + tau * c) / (b * (tau + a));
}

/// rho(delta, tau) = (B delta - J_2) / (delta (B + tau^2 - J_2)).
inline double lemma_rho(double delta, double tau, int block_size)
{
    const double c = j2(tau, block_size);
    const double b = block_size;
    return (b * delta - c) / (delta * (b + tau * tau - c));
}

struct LemmaDiagnostics {
    double residual = 0.0;             // lemma_delta_of_tau(tau*) - delta
    double stationarity_residual = 0.0; // eps* tau* - (1 - eps*) J_1(tau*)
    int sign_changes = 0;              // over the scanned bracket; 1 means unique
    double bracket_hi = 0.0;
};

/// Group-LASSO phase transition from the implicit threshold equation: solve
/// lemma_delta_of_tau(tau) = delta for tau*, then rho from lemma_rho.
/// With diag, the bracket is also scanned (step 0.01) to count roots.
inline PTPoint lasso_pt_lemma(double delta, int block_size, LemmaDiagnostics* diag = nullptr)
{
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("lasso_pt_lemma: delta must lie in (0, 1)");
    if (block_size < 1) throw DomainError("lasso_pt_lemma: block size must be >= 1");
    auto residual = [&](double tau) { return lemma_delta_of_tau(tau, block_size) - delta; };
    const double lo = 1e-4;

    double hi = 0.0;
    try {
        hi = detail::grow_bracket(residual, lo, 1.0, 64.0, "lasso_pt_lemma");
    } catch (const BracketError&) {
        // Scan fallback.
        const bool neg = std::signbit(residual(lo));
        for (double t = lo + 0.01; t <= 64.0; t += 0.01) {
            if (std::signbit(residual(t)) != neg) {
                hi = t;
                break;
            }
        }
        if (hi == 0.0) {
            throw BracketError("lasso_pt_lemma: no root of the threshold equation for delta = "
                               + std::to_string(delta) + " (outside floating-point range)");
        }
    }
    const double tau = numerics::find_root(residual, lo, hi, 1e-14);
    const PTPoint point{delta, lemma_rho(delta, tau, block_size), tau, block_size};

    if (diag != nullptr) {
        diag->residual = residual(tau);
        const double eps = point.rho * delta;
        diag->stationarity_residual = eps * tau - (1.0 - eps) * j1(tau, block_size);
        diag->bracket_hi = hi;
        int changes = 0;
        bool prev = std::signbit(residual(lo));
        for (double t = lo + 0.01; t <= hi + 0.01; t += 0.01) {
            const bool cur = std::signbit(residual(t));
            if (cur != prev) ++changes;
            prev = cur;
        }
        diag->sign_changes = changes;
    }
    return point;
}

/// Group-LASSO phase transition from the minimax fixed point: the eps with
/// minimized_mse(eps) = delta, reported as rho = eps / delta.
inline PTPoint lasso_pt_fixedpoint(double delta, int block_size)
{
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("lasso_pt_fixedpoint: delta must lie in (0, 1)");
    if (block_size < 1) throw DomainError("lasso_pt_fixedpoint: block size must be >= 1");
    // minimized_mse(eps) > eps, so the root lies below delta.
    auto g = [&](double eps) { return minimized_mse(eps, block_size) - delta; };
    const double lo = delta * 1e-9;
    const double eps = numerics::find_root(g, lo, delta, 1e-13 * delta);
    return {delta, eps / delta, optimal_tau(eps, block_size), block_size};
}

enum class PTMode { Lemma, FixedPoint, Asymptotic };

/// B / (2 log(1/delta)).
inline double asymptotic_rho(double delta, int block_size)
{
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("asymptotic_rho: delta must lie in (0, 1)");
    return block_size / (2.0 * std::log(1.0 / delta));
}

/// Large-tau form of the threshold equation:
///   delta ~ tau^(B-2) e^(-tau^2/2) / (2^(B/2-1) B Gamma(B/2)).
inline double asymptotic_delta_of_tau(double tau, int block_size)
{
    if (!(tau > 0.0)) throw DomainError("asymptotic_delta_of_tau: tau must be positive");
    const double b = block_size;
    return std::exp((b - 2.0) * std::log(tau) - 0.5 * tau * tau - (0.5 * b - 1.0) * std::log(2.0) - std::log(b)
                    - std::lgamma(0.5 * b));
}

inline double asymptotic_rho_of_tau(double tau, int block_size)
{
    if (!(tau > 0.0)) throw DomainError("asymptotic_rho_of_tau: tau must be positive");
    return block_size / (tau * tau);
}

inline PTPoint pt_point(double delta, int block_size, PTMode mode)
{
    switch (mode) {
    case PTMode::Lemma: return lasso_pt_lemma(delta, block_size);
    case PTMode::FixedPoint: return lasso_pt_fixedpoint(delta, block_size);
    default: return {delta, asymptotic_rho(delta, block_size), std::nan(""), block_size};
    }
}

inline PTCurve pt_curve(int block_size, std::vector<double> deltas, PTMode mode = PTMode::Lemma)
{
    std::sort(deltas.begin(), deltas.end());
    PTCurve curve{block_size, {}};
    curve.points.reserve(deltas.size());
    for (double d : deltas) curve.points.push_back(pt_point(d, block_size, mode));
    return curve;
}

// Least-favorable prior parameters. log_odds = log((1 - eps) / eps) is kept
// separately so eps far below the double range still has exact couplings.
struct GStarParams {
    double epsilon = 0.0;
    double gamma = 0.0;
    double mu = 0.0;
    double a = 0.0;
    int block_size = 1;
    double log_odds = 0.0;

    shrink::GStarPrior prior() const { return {epsilon, mu, block_size}; }
};

/// Default gamma policy, gamma = log((1 - eps) / eps)^(-1/4).
inline double default_gamma_from_log_odds(double log_odds)
{
    if (!(log_odds > 0.0)) throw DomainError("default_gamma: epsilon must lie in (0, 1/2)");
    return std::pow(log_odds, -0.25);
}

inline double default_gamma(double epsilon)
{
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw DomainError("default_gamma: epsilon must lie in (0, 1/2)");
    return default_gamma_from_log_odds(std::log1p(-epsilon) - std::log(epsilon));
}

inline GStarParams gstar_params_from_log_odds(double log_odds, double gamma, int block_size = 1)
{
    if (!(log_odds > 0.0)) throw DomainError("gstar_params: epsilon must lie in (0, 1/2)");
    if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gstar_params: gamma must lie in (0, 1)");
    if (block_size < 1) throw DomainError("gstar_params: block size must be >= 1");
    GStarParams p;
    p.epsilon = 1.0 / (1.0 + std::exp(log_odds));
    p.gamma = gamma;
    p.mu = std::sqrt(2.0 * (1.0 - gamma) * log_odds);
    p.a = gamma * log_odds / p.mu;
    p.block_size = block_size;
    p.log_odds = log_odds;
    return p;
}

/// mu = sqrt(2 (1 - gamma) L), a = gamma L / mu with L = log((1 - eps) / eps).
inline GStarParams gstar_params(double epsilon, double gamma, int block_size = 1)
{
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw DomainError("gstar_params: epsilon must lie in (0, 1/2)");
    auto p = gstar_params_from_log_odds(std::log1p(-epsilon) - std::log(epsilon), gamma, block_size);
    p.epsilon = epsilon;
    return p;
}

/// Parameters with a prescribed radius mu under the default gamma policy:
/// solves 2 (1 - L^(-1/4)) L = mu^2 for L.
inline GStarParams gstar_params_for_mu(double mu, int block_size = 1)
{
    if (!(mu > 0.0)) throw DomainError("gstar_params_for_mu: mu must be positive");
    auto f = [&](double l) { return 2.0 * (1.0 - std::pow(l, -0.25)) * l - mu * mu; };
    const double hi = detail::grow_bracket(f, 1.0, 2.0 + mu * mu, 1e12, "gstar_params_for_mu");
    const double l = numerics::find_root(f, 1.0, hi, 1e-15 * hi);
    return gstar_params_from_log_odds(l, default_gamma_from_log_odds(l), block_size);
}

struct MonteCarloRisk {
    std::size_t samples = 1000000;
    std::uint64_t seed = 0;
};

struct Quadrature2D {};

using RiskEstimator = std::variant<MonteCarloRisk, Quadrature2D>;

struct RiskEstimate {
    double value;
    double std_error; // Monte Carlo standard error, or the quadrature error bound
};

namespace detail {

inline double chi_pdf(double r, int k)
{
    if (r <= 0.0) return k == 1 ? std::sqrt(2.0 / M_PI) : 0.0;
    return std::exp((k - 1) * std::log(r) - 0.5 * r * r - (0.5 * k - 1.0) * std::log(2.0) - std::lgamma(0.5 * k));
}

inline RiskEstimate gstar_risk_mc(const GStarParams& p, const MonteCarloRisk& mc)
{
    if (mc.samples == 0) throw DomainError("gstar_risk: samples must be positive");
    const auto prior = p.prior();
    const int b = p.block_size;
    const double mu = p.mu;
    RngStream rng(mc.seed, 0);
    double mean_act = 0.0, m2_act = 0.0, mean_in = 0.0, m2_in = 0.0;
    for (std::size_t i = 0; i < mc.samples; ++i) {
        // active: theta = e1 by rotational symmetry
        double y1 = mu + rng.normal();
        double yy = y1 * y1;
        for (int j = 1; j < b; ++j) {
            const double z = rng.normal();
            yy += z * z;
        }
        double act = mu * mu;
        if (yy > 0.0) {
            const double ny = std::sqrt(yy);
            const double g = shrink::bayes_gstar_magnitude(ny, prior);
            act = std::max(0.0, mu * mu - 2.0 * mu * g * y1 / ny + g * g);
        }
        double zz = 0.0;
        for (int j = 0; j < b; ++j) {
            const double z = rng.normal();
            zz += z * z;
        }
        const double g0 = shrink::bayes_gstar_magnitude(std::sqrt(zz), prior);
        const double in = g0 * g0;

        const double n = static_cast<double>(i + 1);
        const double da = act - mean_act;
        mean_act += da / n;
        m2_act += da * (act - mean_act);
        const double di = in - mean_in;
        mean_in += di / n;
        m2_in += di * (in - mean_in);
    }
    const double n = static_cast<double>(mc.samples);
    const double var_act = mc.samples > 1 ? m2_act / (n - 1.0) : 0.0;
    const double var_in = mc.samples > 1 ? m2_in / (n - 1.0) : 0.0;
    const double wa = p.epsilon / b;
    const double wi = (1.0 - p.epsilon) / b;
    return {wa * mean_act + wi * mean_in, std::sqrt(wa * wa * var_act / n + wi * wi * var_in / n)};
}

inline RiskEstimate gstar_risk_quadrature(const GStarParams& p)
{
    const auto prior = p.prior();
    const int b = p.block_size;
    const double mu = p.mu;
    const numerics::QuadratureSpec outer{1e-9, 1e-14, 200};
    const numerics::QuadratureSpec inner{1e-10, 1e-15, 200};
    auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); };
    const double zmax = 12.0;
    // The estimator switches on near |y| = mu + a; split there.
    const double knee = mu + p.a;

    numerics::Integral active{0.0, 0.0};
    if (b == 1) {
        auto loss = [&](double z) {
            const double y = mu + z;
            const double g = std::copysign(shrink::bayes_gstar_magnitude(std::abs(y), prior), y);
            return (mu - g) * (mu - g) * phi(z);
        };
        std::vector<double> cuts{-zmax, zmax};
        for (double c : {knee - mu, -knee - mu}) {
            if (c > -zmax && c < zmax) cuts.push_back(c);
        }
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            const auto r = numerics::integrate_with_error(loss, cuts[i], cuts[i + 1], outer);
            active.value += r.value;
            active.error_bound += r.error_bound;
        }
    } else {
        const int k = b - 1;
        const double rmax = std::sqrt(static_cast<double>(k)) + 12.0;
        auto slice = [&](double z1) {
            const double y1 = mu + z1;
            auto loss = [&](double r) {
                const double ny = std::sqrt(y1 * y1 + r * r);
                if (ny == 0.0) return mu * mu * chi_pdf(r, k);
                const double g = shrink::bayes_gstar_magnitude(ny, prior);
                return std::max(0.0, mu * mu - 2.0 * mu * g * y1 / ny + g * g) * chi_pdf(r, k);
            };
            double v = 0.0;
            double start = 0.0;
            if (knee > std::abs(y1)) {
                const double rc = std::min(std::sqrt(knee * knee - y1 * y1), rmax);
                v += numerics::integrate(loss, 0.0, rc, inner);
                start = rc;
            }
            if (start < rmax) v += numerics::integrate(loss, start, rmax, inner);
            return v * phi(z1);
        };
        std::vector<double> cuts{-zmax, zmax};
        for (double c : {knee - mu, -knee - mu}) {
            if (c > -zmax && c < zmax) cuts.push_back(c);
        }
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            const auto r = numerics::integrate_with_error(slice, cuts[i], cuts[i + 1], outer);
            active.value += r.value;
            active.error_bound += r.error_bound;
        }
    }

    const double rmax_b = std::sqrt(static_cast<double>(b)) + 12.0;
    auto spike = [&](double r) {
        const double g = shrink::bayes_gstar_magnitude(r, prior);
        return g * g * chi_pdf(r, b);
    };
    numerics::Integral inactive{0.0, 0.0};
    const double split = std::min(knee, rmax_b);
    for (auto [lo, hi] : {std::pair{0.0, split}, std::pair{split, rmax_b}}) {
        if (hi <= lo) continue;
        const auto r = numerics::integrate_with_error(spike, lo, hi, outer);
        inactive.value += r.value;
        inactive.error_bound += r.error_bound;
    }

    const double wa = p.epsilon / b;
    const double wi = (1.0 - p.epsilon) / b;
    return {wa * active.value + wi * inactive.value, wa * active.error_bound + wi * inactive.error_bound};
}

} // namespace detail

/// Bayes risk of the G* posterior mean, per coordinate:
///   (eps / B) E|mu theta - xhat(mu theta + z)|^2 + ((1 - eps) / B) E|xhat(z)|^2.
inline RiskEstimate gstar_risk(const GStarParams& params, const RiskEstimator& estimator = MonteCarloRisk{})
{
    params.prior().validate();
    if (const auto* mc = std::get_if<MonteCarloRisk>(&estimator)) return detail::gstar_risk_mc(params, *mc);
    return detail::gstar_risk_quadrature(params);
}

/// eps mu^2 / B = 2 eps (1 - gamma) log((1 - eps) / eps) / B.
inline double gstar_risk_asymptote(const GStarParams& params)
{
    return params.epsilon * params.mu * params.mu / params.block_size;
}

inline double gstar_risk_asymptote(double epsilon, double gamma, int block_size)
{
    return gstar_risk_asymptote(gstar_params(epsilon, gamma, block_size));
}

/// Bound on P{|mu theta + z| > mu + a}:
///   2 e^(-a^2/2) + e^(-(1/2 - B/(2a^2)) a^2) (B/a^2)^(-B/2),
/// clamped to 1 and equal to 1 when a^2 <= B.
inline double tail_bound(int block_size, double a)
{
    if (block_size < 1) throw DomainError("tail_bound: block size must be >= 1");
    if (!(a > 0.0)) throw DomainError("tail_bound: a must be positive");
    const double b = block_size;
    const double a2 = a * a;
    if (a2 <= b) return 1.0;
    const double gauss = 2.0 * std::exp(-0.5 * a2);
    const double chi = std::exp(-(0.5 - b / (2.0 * a2)) * a2 - 0.5 * b * std::log(b / a2));
    return std::min(1.0, gauss + chi);
}

struct TailEstimate {
    double estimate;
    double std_error;
};

/// Monte Carlo P{|mu theta + z| > mu + a}; theta = e1 unless random_direction.
inline TailEstimate tail_prob_mc(int block_size, double mu, double a, std::size_t samples, RngStream& rng,
                                 bool random_direction = false)
{
    if (block_size < 1) throw DomainError("tail_prob_mc: block size must be >= 1");
    if (!(mu > 0.0) || !(a > 0.0)) throw DomainError("tail_prob_mc: mu and a must be positive");
    if (samples == 0) throw DomainError("tail_prob_mc: samples must be positive");
    const double cut = (mu + a) * (mu + a);
    std::vector<double> theta(static_cast<std::size_t>(block_size), 0.0);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        if (random_direction) {
            double sq = 0.0;
            do {
                sq = 0.0;
                for (auto& t : theta) {
                    t = rng.normal();
                    sq += t * t;
                }
            } while (sq == 0.0);
            const double f = 1.0 / std::sqrt(sq);
            for (auto& t : theta) t *= f;
        } else {
            std::fill(theta.begin(), theta.end(), 0.0);
            theta[0] = 1.0;
        }
        double yy = 0.0;
        for (const double t : theta) {
            const double y = mu * t + rng.normal();
            yy += y * y;
        }
        if (yy > cut) ++hits;
    }
    const double n = static_cast<double>(samples);
    const double p = static_cast<double>(hits) / n;
    return {p, std::sqrt(p * (1.0 - p) / n)};
}

} // namespace blocksparse::pt
