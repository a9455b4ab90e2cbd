#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "blocksparse/amp.hpp"
#include "blocksparse/csv.hpp"
#include "blocksparse/errors.hpp"
#include "blocksparse/model.hpp"
#include "blocksparse/numerics.hpp"
#include "blocksparse/phase_transition.hpp"
#include "blocksparse/rng.hpp"

namespace blocksparse::experiments {

enum class RhoGrid {
    Multiplier, // rho = value * rho^L(delta)
    Absolute,
};

struct SweepConfig {
    std::vector<int> block_sizes{2};
    std::vector<double> delta_grid{0.25};
    std::vector<double> rho_grid{0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5};
    RhoGrid rho_kind = RhoGrid::Multiplier;
    std::size_t trials_per_cell = 50;
    Index signal_dim = 2000;
    model::Slab slab = model::SphereUniform{10.0};
    std::uint64_t master_seed = 0;
    amp::AmpConfig amp{};
    // 0: BLOCKSPARSE_THREADS if set, else hardware concurrency.
    unsigned threads = 0;

    void validate() const
    {
        if (block_sizes.empty() || delta_grid.empty() || rho_grid.empty()) {
            throw DomainError("SweepConfig: grids must be nonempty");
        }
        if (trials_per_cell < 1) throw DomainError("SweepConfig: trials must be >= 1");
        if (signal_dim < 1) throw DomainError("SweepConfig: signal dimension must be positive");
        for (int b : block_sizes) {
            if (b < 1 || signal_dim % b != 0) {
                throw DomainError("SweepConfig: block size " + std::to_string(b) + " must divide N = "
                                  + std::to_string(signal_dim));
            }
        }
        for (double d : delta_grid) {
            if (!(d > 0.0 && d < 1.0)) throw DomainError("SweepConfig: delta values must lie in (0, 1)");
        }
        for (double r : rho_grid) {
            if (!(r >= 0.0)) throw DomainError("SweepConfig: rho values must be nonnegative");
        }
        model::validate_slab(slab);
        amp.validate();
    }
};

struct SweepRow {
    int block_size = 1;
    double delta = 0.0;
    double rho = 0.0;
    std::size_t trials = 0;
    std::size_t successes = 0;
    double mean_rel_error = 0.0;
    double mean_iterations = 0.0;
    std::string reason; // nonempty when the cell was skipped
};

struct EmpiricalPT {
    int block_size = 1;
    double delta = 0.0;
    double rho50 = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    bool boundary = false; // all-success or all-failure: rho50 is a grid edge, CI is open
};

inline unsigned sweep_threads(unsigned requested)
{
    if (requested > 0) return requested;
    if (const char* env = std::getenv("BLOCKSPARSE_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

struct Cell {
    int block_size;
    double delta;
    double rho;
    double tau;
    std::string reason;
};

struct TrialOutcome {
    bool success = false;
    double rel_error = 0.0;
    std::size_t iterations = 0;
};

inline TrialOutcome run_trial(const SweepConfig& cfg, const Cell& cell, std::size_t c, std::size_t t)
{
    RngStream rng = RngStream::for_task(cfg.master_seed, c, t);
    const auto inst = model::make_instance(cell.delta, cell.rho, cfg.signal_dim, cell.block_size, cfg.slab, rng);
    amp::AmpConfig ac = cfg.amp;
    ac.threshold_multiplier = cell.tau;
    try {
        const auto res = amp::amp_solve(inst, ac);
        const double err = amp::relative_error(res.estimate, inst.truth);
        return {err <= ac.success_tol, err, res.iterations};
    } catch (const DivergenceError& e) {
        return {false, std::numeric_limits<double>::infinity(), e.iteration()};
    }
}

} // namespace detail

/// One row per (B, delta, rho) cell in that nesting order. Trial t of cell c
/// draws from RngStream::for_task(master_seed, c, t), so rows do not depend on
/// the thread count or schedule.
inline std::vector<SweepRow> run_sweep(const SweepConfig& cfg)
{
    cfg.validate();

    std::vector<detail::Cell> cells;
    for (int b : cfg.block_sizes) {
        for (double d : cfg.delta_grid) {
            const auto point = pt::lasso_pt_lemma(d, b);
            const double tau = cfg.amp.threshold_multiplier.value_or(point.tau_star);
            for (double r : cfg.rho_grid) {
                const double rho = cfg.rho_kind == RhoGrid::Multiplier ? r * point.rho : r;
                std::string reason;
                try {
                    (void)model::instance_geometry(d, rho, cfg.signal_dim, b);
                } catch (const DomainError& e) {
                    reason = e.what();
                }
                cells.push_back({b, d, rho, tau, std::move(reason)});
            }
        }
    }

    const std::size_t trials = cfg.trials_per_cell;
    std::vector<std::size_t> tasks;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        if (cells[c].reason.empty()) tasks.push_back(c);
    }
    std::vector<detail::TrialOutcome> outcomes(cells.size() * trials);

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= tasks.size() * trials) return;
            const std::size_t c = tasks[k / trials];
            const std::size_t t = k % trials;
            try {
                outcomes[c * trials + t] = detail::run_trial(cfg, cells[c], c, t);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(tasks.size() * trials);
                return;
            }
        }
    };
    const unsigned n_threads = std::min<std::size_t>(sweep_threads(cfg.threads), std::max<std::size_t>(1, tasks.size() * trials));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<SweepRow> rows;
    rows.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto& cell = cells[c];
        SweepRow row{cell.block_size, cell.delta, cell.rho, 0, 0, std::nan(""), std::nan(""), cell.reason};
        if (cell.reason.empty()) {
            row.trials = trials;
            double err = 0.0;
            double iters = 0.0;
            for (std::size_t t = 0; t < trials; ++t) {
                const auto& o = outcomes[c * trials + t];
                row.successes += o.success ? 1 : 0;
                err += o.rel_error;
                iters += static_cast<double>(o.iterations);
            }
            row.mean_rel_error = err / static_cast<double>(trials);
            row.mean_iterations = iters / static_cast<double>(trials);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace detail {

inline double log_norm_cdf(double x)
{
    if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::sqrt(2.0)));
    const double x2 = x * x;
    return -0.5 * x2 - 0.5 * std::log(2.0 * M_PI) - std::log(-x) + std::log(1.0 - 1.0 / x2 + 3.0 / (x2 * x2));
}

// phi(x) / Phi(x)
inline double mills(double x)
{
    if (x > -30.0) {
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        return pdf / (0.5 * std::erfc(-x / std::sqrt(2.0)));
    }
    const double x2 = x * x;
    return -x / (1.0 - 1.0 / x2 + 3.0 / (x2 * x2));
}

struct Binomial {
    double x;
    double n;
    double s;
};

// Probit log-likelihood of eta_i with its first and second derivatives in eta_i.
struct EtaTerms {
    double loglik;
    double d1;
    double d2;
};

inline EtaTerms eta_terms(double eta, const Binomial& c)
{
    const double f = c.n - c.s;
    const double lp = mills(eta);
    const double lm = mills(-eta);
    EtaTerms t{0.0, 0.0, 0.0};
    if (c.s > 0) {
        t.loglik += c.s * log_norm_cdf(eta);
        t.d1 += c.s * lp;
        t.d2 -= c.s * lp * (eta + lp);
    }
    if (f > 0) {
        t.loglik += f * log_norm_cdf(-eta);
        t.d1 -= f * lm;
        t.d2 -= f * lm * (lm - eta);
    }
    return t;
}

inline double loglik(const std::vector<Binomial>& data, double alpha, double beta)
{
    double l = 0.0;
    for (const auto& c : data) l += eta_terms(alpha + beta * c.x, c).loglik;
    return l;
}

// max over beta of the log-likelihood with eta_i = beta (x_i - x0).
inline double profile_loglik(const std::vector<Binomial>& data, double x0, double beta)
{
    double cur = 0.0;
    for (const auto& c : data) cur += eta_terms(beta * (c.x - x0), c).loglik;
    for (int it = 0; it < 200; ++it) {
        double g = 0.0;
        double h = 0.0;
        for (const auto& c : data) {
            const auto t = eta_terms(beta * (c.x - x0), c);
            g += t.d1 * (c.x - x0);
            h += t.d2 * (c.x - x0) * (c.x - x0);
        }
        if (!(h < 0.0)) break;
        double step = -g / h;
        double cand = cur;
        for (int half = 0; half < 60; ++half) {
            cand = 0.0;
            for (const auto& c : data) cand += eta_terms((beta + step) * (c.x - x0), c).loglik;
            if (cand >= cur) break;
            step *= 0.5;
        }
        if (cand < cur) break;
        beta += step;
        const double gain = cand - cur;
        cur = cand;
        if (std::abs(step) <= 1e-12 * std::max(1.0, std::abs(beta)) || gain < 1e-13) break;
    }
    return cur;
}

} // namespace detail

/// Probit fit P(success) = Phi(alpha + beta rho) by maximum likelihood over
/// rows at one (B, delta); rho50 = -alpha / beta with a 95% profile-likelihood
/// interval. Separated data report the gap between the last all-success and
/// first all-failure rho.
inline EmpiricalPT fit_transition(const std::vector<SweepRow>& rows)
{
    std::map<double, std::pair<double, double>> by_rho; // rho -> (trials, successes)
    int block_size = 0;
    double delta = 0.0;
    for (const auto& r : rows) {
        if (r.trials == 0) continue;
        auto& cell = by_rho[r.rho];
        cell.first += static_cast<double>(r.trials);
        cell.second += static_cast<double>(r.successes);
        block_size = r.block_size;
        delta = r.delta;
    }
    if (by_rho.size() < 3) throw DomainError("fit_transition: need at least 3 distinct rho values with trials");

    EmpiricalPT out{block_size, delta, 0.0, 0.0, 0.0, false};
    const double rho_min = by_rho.begin()->first;
    const double rho_max = by_rho.rbegin()->first;
    double total_s = 0.0;
    double total_n = 0.0;
    double last_success = -std::numeric_limits<double>::infinity();
    double first_failure = std::numeric_limits<double>::infinity();
    for (const auto& [rho, c] : by_rho) {
        total_n += c.first;
        total_s += c.second;
        if (c.second > 0) last_success = std::max(last_success, rho);
        if (c.second < c.first) first_failure = std::min(first_failure, rho);
    }
    if (total_s == total_n) {
        out.rho50 = rho_max;
        out.ci_lo = rho_max;
        out.ci_hi = std::numeric_limits<double>::infinity();
        out.boundary = true;
        return out;
    }
    if (total_s == 0) {
        out.rho50 = rho_min;
        out.ci_lo = 0.0;
        out.ci_hi = rho_min;
        out.boundary = true;
        return out;
    }
    if (last_success <= first_failure) {
        // No finite maximum likelihood estimate.
        if (last_success < first_failure) {
            out.rho50 = 0.5 * (last_success + first_failure);
            out.ci_lo = last_success;
            out.ci_hi = first_failure;
        } else {
            auto it = by_rho.find(last_success);
            out.rho50 = last_success;
            out.ci_lo = it == by_rho.begin() ? last_success : std::prev(it)->first;
            out.ci_hi = std::next(it) == by_rho.end() ? last_success : std::next(it)->first;
        }
        return out;
    }

    // Standardize rho so the Newton iteration is well scaled.
    double mean = 0.0;
    for (const auto& kv : by_rho) mean += kv.first;
    mean /= static_cast<double>(by_rho.size());
    const double span = rho_max - rho_min;
    std::vector<detail::Binomial> data;
    for (const auto& [rho, c] : by_rho) data.push_back({(rho - mean) / span, c.first, c.second});

    double alpha = 0.0;
    double beta = 0.0;
    double cur = detail::loglik(data, alpha, beta);
    for (int it = 0; it < 200; ++it) {
        double g0 = 0.0, g1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
        for (const auto& c : data) {
            const auto t = detail::eta_terms(alpha + beta * c.x, c);
            g0 += t.d1;
            g1 += t.d1 * c.x;
            h00 += t.d2;
            h01 += t.d2 * c.x;
            h11 += t.d2 * c.x * c.x;
        }
        const double det = h00 * h11 - h01 * h01;
        if (!(det > 0.0)) break;
        double s0 = -(h11 * g0 - h01 * g1) / det;
        double s1 = -(h00 * g1 - h01 * g0) / det;
        double cand = cur;
        bool improved = false;
        for (int half = 0; half < 60; ++half) {
            cand = detail::loglik(data, alpha + s0, beta + s1);
            if (cand >= cur) {
                improved = true;
                break;
            }
            s0 *= 0.5;
            s1 *= 0.5;
        }
        if (!improved) break;
        alpha += s0;
        beta += s1;
        const double gain = cand - cur;
        cur = cand;
        if (std::hypot(s0, s1) <= 1e-12 * std::max(1.0, std::hypot(alpha, beta)) || gain < 1e-14) break;
    }
    if (!(beta != 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
        throw NumericalError("fit_transition: probit fit did not produce a finite slope");
    }

    const double x50 = -alpha / beta;
    const double crit = 3.841458820694124; // chi-square(1) 95% quantile
    auto deviance_gap = [&](double x0) { return 2.0 * (cur - detail::profile_loglik(data, x0, beta)) - crit; };
    auto endpoint = [&](double direction) {
        const double step = 0.05;
        double inside = x50;
        for (double w = step; w <= 64.0; w *= 2.0) {
            const double probe = x50 + direction * w;
            if (deviance_gap(probe) > 0.0) {
                return direction < 0 ? numerics::find_root(deviance_gap, probe, inside, 1e-10)
                                     : numerics::find_root(deviance_gap, inside, probe, 1e-10);
            }
            inside = probe;
        }
        return direction * std::numeric_limits<double>::infinity();
    };
    out.rho50 = mean + span * x50;
    out.ci_lo = mean + span * endpoint(-1.0);
    out.ci_hi = mean + span * endpoint(1.0);
    if (!std::isfinite(out.ci_lo)) out.ci_lo = 0.0;
    out.ci_lo = std::max(out.ci_lo, 0.0);
    return out;
}

/// Fits every (B, delta) group of a sweep in row order; groups with fewer than
/// three usable rho values are skipped.
inline std::vector<EmpiricalPT> fit_all(const std::vector<SweepRow>& rows)
{
    std::vector<std::pair<int, double>> keys;
    for (const auto& r : rows) {
        const std::pair<int, double> k{r.block_size, r.delta};
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    std::vector<EmpiricalPT> fits;
    for (const auto& [b, d] : keys) {
        std::vector<SweepRow> group;
        for (const auto& r : rows) {
            if (r.block_size == b && r.delta == d) group.push_back(r);
        }
        try {
            fits.push_back(fit_transition(group));
        } catch (const DomainError&) {
        }
    }
    return fits;
}

struct PTTableRow {
    int block_size;
    double delta;
    double rho_lemma;
    double tau_star;
    double rho_asymptotic;
    double rho50;
    double ci_lo;
    double ci_hi;
};

/// Analytic group-LASSO and asymptotic transitions per (B, delta), joined with
/// empirical fits where one exists for the same cell.
inline std::vector<PTTableRow> pt_table(const std::vector<int>& block_sizes, const std::vector<double>& deltas,
                                        const std::optional<std::vector<EmpiricalPT>>& empirical = std::nullopt)
{
    std::vector<PTTableRow> table;
    const double nan = std::nan("");
    for (int b : block_sizes) {
        for (double d : deltas) {
            const auto p = pt::lasso_pt_lemma(d, b);
            PTTableRow row{b, d, p.rho, p.tau_star, pt::asymptotic_rho(d, b), nan, nan, nan};
            if (empirical) {
                for (const auto& e : *empirical) {
                    if (e.block_size == b && e.delta == d) {
                        row.rho50 = e.rho50;
                        row.ci_lo = e.ci_lo;
                        row.ci_hi = e.ci_hi;
                    }
                }
            }
            table.push_back(row);
        }
    }
    return table;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows)
{
    csv::write_row(os, {"B", "delta", "rho", "trials", "successes", "mean_rel_error", "mean_iters"});
    for (const auto& r : rows) {
        csv::write_row(os, {r.block_size, r.delta, r.rho, static_cast<unsigned long long>(r.trials),
                            static_cast<unsigned long long>(r.successes), r.mean_rel_error, r.mean_iterations});
    }
}

inline void write_fit_csv(std::ostream& os, const std::vector<EmpiricalPT>& fits)
{
    csv::write_row(os, {"B", "delta", "rho50", "ci_lo", "ci_hi"});
    for (const auto& f : fits) csv::write_row(os, {f.block_size, f.delta, f.rho50, f.ci_lo, f.ci_hi});
}

inline void write_pt_table_csv(std::ostream& os, const std::vector<PTTableRow>& table)
{
    csv::write_row(os, {"B", "delta", "rho_lemma", "tau_star", "rho_asymptotic", "rho50", "ci_lo", "ci_hi"});
    for (const auto& r : table) {
        csv::write_row(os, {r.block_size, r.delta, r.rho_lemma, r.tau_star, r.rho_asymptotic, r.rho50, r.ci_lo,
                            r.ci_hi});
    }
}

} // namespace blocksparse::experiments
