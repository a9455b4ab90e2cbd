#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include "blocksparse/errors.hpp"
#include "blocksparse/model.hpp"

namespace blocksparse::shrink {

using ConstBlock = Eigen::Ref<const Vector>;
using BlockOut = Eigen::Ref<Vector>;

/// Block soft threshold: (y / |y|) (|y| - tau)_+.
inline void block_soft(ConstBlock y, double tau, BlockOut out)
{
    const double norm = y.norm();
    if (norm <= tau || norm == 0.0) {
        out.setZero();
        return;
    }
    out = y * ((norm - tau) / norm);
}

inline Vector block_soft(ConstBlock y, double tau)
{
    if (!(tau >= 0.0)) throw DomainError("block_soft: tau must be nonnegative");
    Vector out(y.size());
    block_soft(y, tau, out);
    return out;
}

/// Trace of the Jacobian of block_soft: B - (B - 1) tau / |y| outside the dead
/// zone, 0 inside it and on its boundary.
inline double block_soft_divergence(ConstBlock y, double tau)
{
    if (!(tau >= 0.0)) throw DomainError("block_soft_divergence: tau must be nonnegative");
    const double norm = y.norm();
    if (norm <= tau || norm == 0.0) return 0.0;
    const auto b = static_cast<double>(y.size());
    return b - (b - 1.0) * tau / norm;
}

// Spike at zero with probability 1 - epsilon, otherwise uniform on the sphere
// of radius mu in R^B.
struct GStarPrior {
    double epsilon = 0.5;
    double mu = 1.0;
    int block_size = 1;

    void validate() const
    {
        if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("GStarPrior: epsilon must lie in (0, 1)");
        if (!(mu > 0.0)) throw DomainError("GStarPrior: mu must be positive");
        if (block_size < 1) throw DomainError("GStarPrior: block size must be >= 1");
    }

    double log_odds() const { return std::log(epsilon) - std::log1p(-epsilon); }
};

// For theta uniform on the unit sphere of R^B and r >= 0:
//   log_mean_exp = log E[exp(r <e1, theta>)]
//   mean_cos     = E[<e1, theta> exp(r <e1, theta>)] / E[exp(r <e1, theta>)]
struct AngularMoments {
    double log_mean_exp;
    double mean_cos;
};

inline AngularMoments angular_moments(double r, int block_size)
{
    if (block_size < 1) throw DomainError("angular_moments: block size must be >= 1");
    if (r == 0.0) return {0.0, 0.0};
    if (block_size == 1) {
        return {r + std::log1p(std::exp(-2.0 * r)) - std::log(2.0), std::tanh(r)};
    }

    // With u = r (1 - cos phi) the integrands are e^r e^(-u) sin^(B-2) phi on
    // [0, pi]; beyond u = cut the contribution is below e^(-cut).
    const double cut = 50.0 + block_size;
    const double s = std::sqrt(0.5 * cut / r);
    const double phi_max = s >= 1.0 ? M_PI : 2.0 * std::asin(s);

    using rule = boost::math::quadrature::gauss<double, 30>;
    const auto& nodes = rule::abscissa();
    const auto& weights = rule::weights();
    constexpr int panels = 4;
    const double width = phi_max / panels;
    double s0 = 0.0;
    double s1 = 0.0;
    auto accumulate = [&](double phi, double w) {
        const double half = std::sin(0.5 * phi);
        const double decay = std::exp(-2.0 * r * half * half);
        const double jac = block_size == 2 ? 1.0 : std::pow(std::sin(phi), block_size - 2);
        s0 += w * decay * jac;
        s1 += w * std::cos(phi) * decay * jac;
    };
    for (int p = 0; p < panels; ++p) {
        const double mid = (p + 0.5) * width;
        const double half_width = 0.5 * width;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            accumulate(mid + half_width * nodes[i], half_width * weights[i]);
            if (nodes[i] != 0.0) accumulate(mid - half_width * nodes[i], half_width * weights[i]);
        }
    }
    // int_0^pi sin^(B-2) = sqrt(pi) Gamma((B-1)/2) / Gamma(B/2)
    const double log_norm = 0.5 * std::log(M_PI) + std::lgamma(0.5 * (block_size - 1))
                            - std::lgamma(0.5 * block_size);
    return {r + std::log(s0) - log_norm, s1 / s0};
}

namespace detail {

inline double logistic(double x)
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace detail

/// |E[x | y]| for the G* prior under unit Gaussian noise, as a function of |y|.
/// The posterior mean is collinear with y.
inline double bayes_gstar_magnitude(double norm_y, const GStarPrior& prior)
{
    if (norm_y == 0.0) return 0.0;
    const auto m = angular_moments(prior.mu * norm_y, prior.block_size);
    // log-odds that the block is active: log(eps/(1-eps)) - mu^2/2 + log E e^(mu <y, theta>)
    const double logit = prior.log_odds() - 0.5 * prior.mu * prior.mu + m.log_mean_exp;
    return prior.mu * m.mean_cos * detail::logistic(logit);
}

inline Vector bayes_gstar(ConstBlock y, const GStarPrior& prior)
{
    prior.validate();
    if (y.size() != prior.block_size) throw DomainError("bayes_gstar: block length does not match prior");
    const double norm = y.norm();
    if (norm == 0.0) return Vector::Zero(y.size());
    return y * (bayes_gstar_magnitude(norm, prior) / norm);
}

/// Hard-threshold limit of the G* posterior mean: 0 below |y| = mu + a,
/// the radial projection mu y / |y| at or above it.
inline Vector hard_approx(ConstBlock y, double mu, double a)
{
    if (!(mu > 0.0) || !(a > 0.0)) throw DomainError("hard_approx: mu and a must be positive");
    const double norm = y.norm();
    if (norm < mu + a) return Vector::Zero(y.size());
    return y * (mu / norm);
}

/// Positive-part block James-Stein rule (1 - (B - 2) scale^2 / |y|^2)_+ y.
inline Vector block_james_stein(ConstBlock y, double scale)
{
    if (y.size() < 3) throw DomainError("block_james_stein: unsupported block size (need B >= 3)");
    if (!(scale >= 0.0)) throw DomainError("block_james_stein: scale must be nonnegative");
    const double sq = y.squaredNorm();
    if (sq == 0.0) return Vector::Zero(y.size());
    const double factor = 1.0 - static_cast<double>(y.size() - 2) * scale * scale / sq;
    return factor > 0.0 ? Vector(y * factor) : Vector(Vector::Zero(y.size()));
}

struct SoftRule {};
struct BayesGStarRule {
    GStarPrior prior;
};
struct HardApproxRule {
    double mu = 1.0;
    double a = 1.0;
};
struct JamesSteinRule {};

/// A radial per-block denoiser with its divergence, evaluated at a scale.
/// For "soft" the scale is the threshold itself; the other rules read it as
/// the noise standard deviation sigma:
///   bayes-gstar  sigma * E[x | y / sigma] under G*(eps, mu / sigma)
///   hard-approx  0 below |y| = mu + a sigma, else mu y / |y|
///   james-stein  (1 - (B - 2) sigma^2 / |y|^2)_+ y
class ShrinkageRule {
public:
    using Kind = std::variant<SoftRule, BayesGStarRule, HardApproxRule, JamesSteinRule>;

    ShrinkageRule() : kind_(SoftRule{}) {}
    explicit ShrinkageRule(Kind kind) : kind_(std::move(kind)) {}

    static ShrinkageRule soft() { return ShrinkageRule(SoftRule{}); }
    static ShrinkageRule bayes_gstar(const GStarPrior& prior)
    {
        prior.validate();
        return ShrinkageRule(BayesGStarRule{prior});
    }
    static ShrinkageRule hard_approx(double mu, double a)
    {
        if (!(mu > 0.0) || !(a > 0.0)) throw DomainError("hard-approx rule: mu and a must be positive");
        return ShrinkageRule(HardApproxRule{mu, a});
    }
    static ShrinkageRule james_stein() { return ShrinkageRule(JamesSteinRule{}); }

    const Kind& kind() const noexcept { return kind_; }
    bool is_soft() const noexcept { return std::holds_alternative<SoftRule>(kind_); }

    std::string name() const
    {
        switch (kind_.index()) {
        case 0: return "soft";
        case 1: return "bayes-gstar";
        case 2: return "hard-approx";
        default: return "james-stein";
        }
    }

    // Radial profile g with apply(y) = g(|y|) y / |y|.
    double profile(double norm, int block_size, double scale) const
    {
        return std::visit(
            [&](const auto& rule) -> double {
                using R = std::decay_t<decltype(rule)>;
                if constexpr (std::is_same_v<R, SoftRule>) {
                    return norm > scale ? norm - scale : 0.0;
                } else if constexpr (std::is_same_v<R, BayesGStarRule>) {
                    if (scale == 0.0) return norm;
                    GStarPrior p = rule.prior;
                    p.mu /= scale;
                    p.block_size = block_size;
                    return scale * bayes_gstar_magnitude(norm / scale, p);
                } else if constexpr (std::is_same_v<R, HardApproxRule>) {
                    return norm >= rule.mu + rule.a * scale ? rule.mu : 0.0;
                } else {
                    if (block_size < 3) throw DomainError("james-stein rule: unsupported block size (need B >= 3)");
                    if (norm == 0.0) return 0.0;
                    const double f = 1.0 - (block_size - 2) * scale * scale / (norm * norm);
                    return f > 0.0 ? f * norm : 0.0;
                }
            },
            kind_);
    }

    void apply(ConstBlock y, double scale, BlockOut out) const
    {
        if (is_soft()) {
            block_soft(y, scale, out);
            return;
        }
        const double norm = y.norm();
        if (norm == 0.0) {
            out.setZero();
            return;
        }
        out = y * (profile(norm, static_cast<int>(y.size()), scale) / norm);
    }

    Vector apply(ConstBlock y, double scale) const
    {
        if (!(scale >= 0.0)) throw DomainError("shrinkage scale must be nonnegative");
        Vector out(y.size());
        apply(y, scale, out);
        return out;
    }

    // div g(|y|) y/|y| = g'(|y|) + (B - 1) g(|y|) / |y|
    double divergence(ConstBlock y, double scale) const
    {
        const int b = static_cast<int>(y.size());
        const double norm = y.norm();
        return std::visit(
            [&](const auto& rule) -> double {
                using R = std::decay_t<decltype(rule)>;
                if constexpr (std::is_same_v<R, SoftRule>) {
                    return block_soft_divergence(y, scale);
                } else if constexpr (std::is_same_v<R, HardApproxRule>) {
                    if (norm < rule.mu + rule.a * scale || norm == 0.0) return 0.0;
                    return (b - 1) * rule.mu / norm;
                } else if constexpr (std::is_same_v<R, JamesSteinRule>) {
                    if (b < 3) throw DomainError("james-stein rule: unsupported block size (need B >= 3)");
                    if (norm == 0.0) return 0.0;
                    const double c = (b - 2) * scale * scale / (norm * norm);
                    if (c >= 1.0) return 0.0;
                    return b - (b - 2) * c;
                } else {
                    const double h = 1e-5 * std::max(1.0, norm);
                    if (norm < h) {
                        const double slope = profile(h, b, scale) / h;
                        return b * slope;
                    }
                    const double derivative = (profile(norm + h, b, scale) - profile(norm - h, b, scale)) / (2.0 * h);
                    return derivative + (b - 1) * profile(norm, b, scale) / norm;
                }
            },
            kind_);
    }

private:
    Kind kind_;
};

// Parameters used when a rule is selected by name.
struct RuleParams {
    GStarPrior gstar{};
    double hard_mu = 1.0;
    double hard_a = 1.0;
};

inline ShrinkageRule rule_from_name(std::string_view name, const RuleParams& params = {})
{
    if (name == "soft") return ShrinkageRule::soft();
    if (name == "bayes-gstar") return ShrinkageRule::bayes_gstar(params.gstar);
    if (name == "hard-approx") return ShrinkageRule::hard_approx(params.hard_mu, params.hard_a);
    if (name == "james-stein") return ShrinkageRule::james_stein();
    throw DomainError("unknown shrinkage rule '" + std::string(name)
                      + "' (expected soft, bayes-gstar, hard-approx or james-stein)");
}

} // namespace blocksparse::shrink
