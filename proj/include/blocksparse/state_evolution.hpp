#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <variant>
#include <vector>

#include "blocksparse/errors.hpp"
#include "blocksparse/model.hpp"
#include "blocksparse/numerics.hpp"
#include "blocksparse/rng.hpp"
#include "blocksparse/shrinkage.hpp"

namespace blocksparse::se {

// Common random numbers: every call with the same seed replays the same draws,
// so maps evaluated at different mse values share their noise.
struct MonteCarloSe {
    std::size_t samples = 200000;
    std::uint64_t seed = 0;
};

// Soft rule only: J_2 closed form for the spike, quadrature for the slab.
struct SemiAnalyticSe {};

using SeEstimator = std::variant<MonteCarloSe, SemiAnalyticSe>;

struct SEConfig {
    double delta = 0.5;
    model::BlockPrior prior{};
    shrink::ShrinkageRule rule{};
    double threshold_multiplier = 1.0;
    double mse0 = 1.0;
    std::size_t max_iter = 500;
    double tol = 1e-12;
    SeEstimator estimator = MonteCarloSe{};

    void validate() const
    {
        if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("SEConfig: delta must lie in (0, 1]");
        prior.validate();
        if (!(threshold_multiplier >= 0.0)) throw DomainError("SEConfig: threshold multiplier must be nonnegative");
        if (!(mse0 > 0.0)) throw DomainError("SEConfig: mse0 must be positive");
        if (!(tol > 0.0)) throw DomainError("SEConfig: tol must be positive");
        if (const auto* mc = std::get_if<MonteCarloSe>(&estimator); mc && mc->samples == 0) {
            throw DomainError("SEConfig: Monte Carlo estimator needs samples > 0");
        }
        if (std::holds_alternative<SemiAnalyticSe>(estimator) && !rule.is_soft()) {
            throw DomainError("SEConfig: the semi-analytic estimator supports only the soft rule");
        }
    }
};

struct SETrajectory {
    std::vector<double> mse_sequence;
    bool converged = false;
    bool diverged = false;
    double fixed_point = 0.0;
};

struct SeEstimate {
    double value;
    double std_error;
};

inline constexpr double kDivergenceCap = 1e12;

/// Scale handed to the rule at noise level sigma: the threshold tau sigma for
/// the soft rule, sigma itself for the others.
inline double rule_scale(const shrink::ShrinkageRule& rule, double tau, double sigma)
{
    return rule.is_soft() ? tau * sigma : sigma;
}

/// epsilon E|x_B|^2 / (delta B): the mse of the all-zero estimate, which is
/// where AMP started from x = 0 sits after its first step.
inline double initial_mse(const model::BlockPrior& prior, double delta)
{
    prior.validate();
    const double energy = std::visit(
        [&](const auto& s) {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, model::SphereUniform>) return s.radius * s.radius;
            else return prior.block_size * s.std * s.std;
        },
        prior.slab);
    return prior.epsilon * energy / (delta * prior.block_size);
}

namespace detail {

inline void draw_slab(const model::Slab& slab, std::vector<double>& x, RngStream& rng)
{
    if (const auto* sphere = std::get_if<model::SphereUniform>(&slab)) {
        double sq = 0.0;
        do {
            sq = 0.0;
            for (auto& v : x) {
                v = rng.normal();
                sq += v * v;
            }
        } while (sq == 0.0);
        const double f = sphere->radius / std::sqrt(sq);
        for (auto& v : x) v *= f;
        return;
    }
    const double sd = std::get<model::GaussianIso>(slab).std;
    for (auto& v : x) v = sd * rng.normal();
}

inline SeEstimate monte_carlo_map(double mse, const SEConfig& cfg, const MonteCarloSe& mc)
{
    const int b = cfg.prior.block_size;
    const double eps = cfg.prior.epsilon;
    const double sigma = std::sqrt(mse);
    const double scale = rule_scale(cfg.rule, cfg.threshold_multiplier, sigma);
    RngStream rng(mc.seed, 0);
    std::vector<double> x(static_cast<std::size_t>(b));

    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 0; i < mc.samples; ++i) {
        // spike: |eta(sigma z)|^2
        double sq = 0.0;
        for (int j = 0; j < b; ++j) {
            const double z = sigma * rng.normal();
            sq += z * z;
        }
        const double g0 = cfg.rule.profile(std::sqrt(sq), b, scale);
        const double inactive = g0 * g0;

        // slab: |x - eta(x + sigma z)|^2 = |x|^2 - 2 g <x, y> / |y| + g^2
        draw_slab(cfg.prior.slab, x, rng);
        double xx = 0.0;
        double xy = 0.0;
        double yy = 0.0;
        for (int j = 0; j < b; ++j) {
            const double xj = x[static_cast<std::size_t>(j)];
            const double yj = xj + sigma * rng.normal();
            xx += xj * xj;
            xy += xj * yj;
            yy += yj * yj;
        }
        double active = xx;
        if (yy > 0.0) {
            const double ny = std::sqrt(yy);
            const double g = cfg.rule.profile(ny, b, scale);
            active = std::max(0.0, xx - 2.0 * g * xy / ny + g * g);
        }

        const double v = (1.0 - eps) * inactive + eps * active;
        const double d = v - mean;
        mean += d / static_cast<double>(i + 1);
        m2 += d * (v - mean);
    }
    const double n = static_cast<double>(mc.samples);
    const double var = mc.samples > 1 ? m2 / (n - 1.0) : 0.0;
    const double norm = 1.0 / (cfg.delta * b);
    return {norm * mean, norm * std::sqrt(var / n)};
}

inline double chi_pdf(double r, int k)
{
    if (r <= 0.0) return k == 1 ? std::sqrt(2.0 / M_PI) : 0.0;
    return std::exp((k - 1) * std::log(r) - 0.5 * r * r - (0.5 * k - 1.0) * std::log(2.0) - std::lgamma(0.5 * k));
}

// E|mu e1 - eta_soft(mu e1 + sigma z; t)|^2 over z ~ N(0, I_B).
inline double sphere_active_loss(double mu, double sigma, double t, int b)
{
    numerics::QuadratureSpec spec{1e-10, 1e-13, 200};
    const double zmax = 12.0;

    std::vector<double> cuts{-zmax, zmax};
    for (double edge : {(t - mu) / sigma, (-t - mu) / sigma}) {
        if (edge > -zmax && edge < zmax) cuts.push_back(edge);
    }
    std::sort(cuts.begin(), cuts.end());

    auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); };

    if (b == 1) {
        auto loss = [&](double z1) {
            const double y = mu + sigma * z1;
            if (std::abs(y) <= t) return mu * mu * phi(z1);
            const double e = sigma * z1 - std::copysign(t, y);
            return e * e * phi(z1);
        };
        double total = 0.0;
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += numerics::integrate(loss, cuts[i], cuts[i + 1], spec);
        return total;
    }

    const int k = b - 1;
    const double rmax = std::sqrt(static_cast<double>(k)) + 12.0;
    auto inner = [&](double z1) {
        const double a = mu + sigma * z1;
        // Orthogonal radius at which |y| = t.
        double rc = 0.0;
        if (t > std::abs(a)) rc = std::sqrt(t * t - a * a) / sigma;
        auto loss = [&](double r) {
            const double ny = std::sqrt(a * a + sigma * sigma * r * r);
            if (ny <= t) return mu * mu * chi_pdf(r, k);
            const double shrink = t / ny;
            const double e1 = sigma * z1 - shrink * a;
            const double e2 = (1.0 - shrink) * sigma * r;
            return (e1 * e1 + e2 * e2) * chi_pdf(r, k);
        };
        double v = 0.0;
        if (rc > 0.0) v += numerics::integrate(loss, 0.0, std::min(rc, rmax), spec);
        if (rc < rmax) v += numerics::integrate(loss, rc, rmax, spec);
        return v * phi(z1);
    };
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += numerics::integrate(inner, cuts[i], cuts[i + 1], spec);
    return total;
}

// E|x - eta_soft(x + sigma z; t)|^2 for x ~ N(0, s^2 I_B).
inline double gauss_active_loss(double s, double sigma, double t, int b)
{
    numerics::QuadratureSpec spec{1e-10, 1e-13, 200};
    const double v2 = s * s + sigma * sigma;
    const double v = std::sqrt(v2);
    const double c = s * s / v2;
    const double bayes = b * s * s * sigma * sigma / v2;
    const double rmax = std::sqrt(static_cast<double>(b)) + 12.0;
    const double rc = std::min(t / v, rmax);
    auto excess = [&](double r) {
        const double ny = v * r;
        const double g = ny > t ? ny - t : 0.0;
        const double e = c * ny - g;
        return e * e * chi_pdf(r, b);
    };
    double total = 0.0;
    if (rc > 0.0) total += numerics::integrate(excess, 0.0, rc, spec);
    if (rc < rmax) total += numerics::integrate(excess, rc, rmax, spec);
    return bayes + total;
}

inline SeEstimate semi_analytic_map(double mse, const SEConfig& cfg)
{
    const int b = cfg.prior.block_size;
    const double eps = cfg.prior.epsilon;
    const double sigma = std::sqrt(mse);
    const double tau = cfg.threshold_multiplier;
    const double t = tau * sigma;

    const double inactive = mse * numerics::j_moment(2, tau, numerics::ChiSquareDof(b));
    double active = 0.0;
    if (eps > 0.0) {
        if (const auto* sphere = std::get_if<model::SphereUniform>(&cfg.prior.slab)) {
            active = sphere_active_loss(sphere->radius, sigma, t, b);
        } else {
            active = gauss_active_loss(std::get<model::GaussianIso>(cfg.prior.slab).std, sigma, t, b);
        }
    }
    return {((1.0 - eps) * inactive + eps * active) / (cfg.delta * b), 0.0};
}

} // namespace detail

/// One step of the state-evolution recursion,
///   (1 / (delta B)) E|x_B - eta(x_B + sqrt(mse) z_B)|^2,
/// with the rule evaluated at threshold tau sqrt(mse) (soft) or scale sqrt(mse).
inline SeEstimate se_map_estimate(double mse, const SEConfig& cfg)
{
    cfg.validate();
    if (!(mse > 0.0)) throw DomainError("se_map: mse must be positive");
    if (const auto* mc = std::get_if<MonteCarloSe>(&cfg.estimator)) return detail::monte_carlo_map(mse, cfg, *mc);
    return detail::semi_analytic_map(mse, cfg);
}

inline double se_map(double mse, const SEConfig& cfg) { return se_map_estimate(mse, cfg).value; }

/// Iterate se_map from mse0 until |delta mse| < tol max(1, mse), max_iter, or
/// the mse exceeds 1e12.
inline SETrajectory se_iterate(const SEConfig& cfg)
{
    cfg.validate();
    SETrajectory traj;
    traj.mse_sequence.push_back(cfg.mse0);
    double mse = cfg.mse0;
    for (std::size_t it = 0; it < cfg.max_iter; ++it) {
        const double next = se_map(mse, cfg);
        traj.mse_sequence.push_back(next);
        if (!std::isfinite(next) || next > kDivergenceCap) {
            traj.diverged = true;
            break;
        }
        if (next == 0.0 || std::abs(next - mse) < cfg.tol * std::max(1.0, mse)) {
            traj.converged = true;
            mse = next;
            break;
        }
        mse = next;
    }
    traj.fixed_point = traj.mse_sequence.back();
    return traj;
}

inline bool se_success(const SETrajectory& traj, double mse0)
{
    return traj.converged && traj.fixed_point <= 1e-8 * mse0;
}

inline bool se_success(const SEConfig& cfg) { return se_success(se_iterate(cfg), cfg.mse0); }

} // namespace blocksparse::se
