#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "blocksparse/errors.hpp"
#include "blocksparse/model.hpp"
#include "blocksparse/phase_transition.hpp"
#include "blocksparse/shrinkage.hpp"
#include "blocksparse/state_evolution.hpp"

namespace blocksparse::amp {

struct AmpConfig {
    shrink::ShrinkageRule rule{};
    // Threshold multiplier tau; unset means the minimax tau*(delta).
    std::optional<double> threshold_multiplier{};
    std::size_t max_iter = 500;
    double rtol = 1e-10;
    bool onsager = true;
    double success_tol = 1e-4;

    void validate() const
    {
        if (max_iter < 1) throw DomainError("AmpConfig: max_iter must be >= 1");
        if (!(rtol > 0.0) || !(success_tol > 0.0)) throw DomainError("AmpConfig: tolerances must be positive");
        if (threshold_multiplier && !(*threshold_multiplier >= 0.0)) {
            throw DomainError("AmpConfig: threshold multiplier must be nonnegative");
        }
    }
};

struct AmpState {
    Vector x;
    Vector z;
    double sigma_hat = 0.0;
    std::size_t iter = 0;
};

struct AmpResult {
    Vector estimate;
    std::size_t iterations = 0;
    std::vector<double> sigma_history;
    bool converged = false;
};

inline double estimate_noise(const Vector& z)
{
    if (z.size() == 0) return 0.0;
    return z.norm() / std::sqrt(static_cast<double>(z.size()));
}

/// tau used for an instance: the configured one, else tau*(delta) of the
/// group-LASSO phase transition.
inline double resolve_tau(const AmpConfig& cfg, double delta, int block_size)
{
    if (cfg.threshold_multiplier) return *cfg.threshold_multiplier;
    return pt::lasso_pt_lemma(delta, block_size).tau_star;
}

inline AmpState initial_state(const model::ProblemInstance& inst)
{
    return {Vector::Zero(inst.N), Vector::Zero(inst.n), 0.0, 0};
}

/// One iteration with an explicit tau:
///   u = x + A^T z,  x' = eta(u; tau sigma_hat) blockwise,
///   z' = y - A x' + z (1/n) sum_b div eta(u_b; tau sigma_hat).
inline AmpState amp_step(const AmpState& state, const model::ProblemInstance& inst, const AmpConfig& cfg,
                         double tau)
{
    const Matrix& a = inst.matrix;
    const int b = inst.truth.block_size();
    if (state.x.size() != inst.N || state.z.size() != inst.n) {
        throw DomainError("amp_step: state dimensions do not match the instance");
    }
    const double scale = se::rule_scale(cfg.rule, tau, state.sigma_hat);

    const Vector u = state.x + a.transpose() * state.z;
    AmpState next;
    next.x.resize(inst.N);
    double div = 0.0;
    const Index blocks = inst.N / b;
    for (Index m = 0; m < blocks; ++m) {
        const auto ub = u.segment(m * b, b);
        cfg.rule.apply(ub, scale, next.x.segment(m * b, b));
        if (cfg.onsager) div += cfg.rule.divergence(ub, scale);
    }
    next.z = inst.observations - a * next.x;
    if (cfg.onsager) next.z += state.z * (div / static_cast<double>(inst.n));
    next.sigma_hat = estimate_noise(next.z);
    next.iter = state.iter + 1;
    if (!next.x.allFinite() || !next.z.allFinite() || !std::isfinite(next.sigma_hat)) {
        throw DivergenceError(next.iter, "amp_step: non-finite iterate");
    }
    return next;
}

inline AmpState amp_step(const AmpState& state, const model::ProblemInstance& inst, const AmpConfig& cfg)
{
    return amp_step(state, inst, cfg, resolve_tau(cfg, inst.delta, inst.truth.block_size()));
}

using AmpObserver = std::function<void(const AmpState&)>;

/// Runs AMP from x = 0, z = 0 until |x' - x| <= rtol |x| (or x stays 0 and
/// sigma_hat stops changing) or max_iter. The observer sees every new state.
inline AmpResult amp_solve(const model::ProblemInstance& inst, const AmpConfig& cfg,
                           const AmpObserver& observer = {})
{
    cfg.validate();
    const double tau = resolve_tau(cfg, inst.delta, inst.truth.block_size());
    AmpState state = initial_state(inst);
    AmpResult result;
    for (std::size_t it = 0; it < cfg.max_iter; ++it) {
        AmpState next = amp_step(state, inst, cfg, tau);
        result.sigma_history.push_back(next.sigma_hat);
        if (observer) observer(next);
        const double old_norm = state.x.norm();
        const double change = (next.x - state.x).norm();
        bool done = false;
        if (old_norm > 0.0) done = change <= cfg.rtol * old_norm;
        else if (next.x.isZero(0.0)) done = next.sigma_hat == state.sigma_hat;
        state = std::move(next);
        if (done) {
            result.converged = true;
            break;
        }
    }
    result.iterations = state.iter;
    result.estimate = std::move(state.x);
    return result;
}

inline double relative_error(const Vector& estimate, const model::BlockSignal& truth)
{
    return (estimate - truth.entries()).norm() / std::max(truth.entries().norm(), 1.0);
}

/// |xhat - x| / max(|x|, 1) <= success_tol.
inline bool recovery_success(const AmpResult& result, const model::BlockSignal& truth, double success_tol)
{
    return relative_error(result.estimate, truth) <= success_tol;
}

} // namespace blocksparse::amp
