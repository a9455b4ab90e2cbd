#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "blocksparse/experiments.hpp"

using namespace blocksparse;
using experiments::SweepRow;

namespace {

experiments::SweepConfig small_sweep()
{
    experiments::SweepConfig cfg;
    cfg.block_sizes = {2};
    cfg.delta_grid = {0.25};
    cfg.rho_grid = {0.5, 1.0, 1.5};
    cfg.trials_per_cell = 8;
    cfg.signal_dim = 600;
    cfg.master_seed = 11;
    cfg.threads = 1;
    return cfg;
}

std::vector<SweepRow> rows_from(const std::vector<double>& rho, const std::vector<int>& trials,
                                const std::vector<int>& successes)
{
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < rho.size(); ++i)
        rows.push_back({2, 0.25, rho[i], std::size_t(trials[i]), std::size_t(successes[i]), 0.0, 0.0, ""});
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows)
{
    std::ostringstream os;
    experiments::write_sweep_csv(os, rows);
    return os.str();
}

// Largest gap between observed fractions and their antitonic (non-increasing)
// least-squares fit, in binomial standard deviations.
double antitonic_deviation(const std::vector<SweepRow>& rows)
{
    struct Pool {
        double sum, weight;
        std::size_t count;
    };
    std::vector<Pool> pools;
    for (const auto& r : rows) {
        pools.push_back({double(r.successes), double(r.trials), 1});
        while (pools.size() > 1) {
            auto& b = pools.back();
            auto& a = pools[pools.size() - 2];
            if (a.sum / a.weight >= b.sum / b.weight) break;
            a = {a.sum + b.sum, a.weight + b.weight, a.count + b.count};
            pools.pop_back();
        }
    }
    double worst = 0.0;
    std::size_t i = 0;
    for (const auto& p : pools) {
        const double fit = p.sum / p.weight;
        for (std::size_t k = 0; k < p.count; ++k, ++i) {
            const double n = double(rows[i].trials);
            const double sd = std::sqrt(std::max(fit * (1 - fit), 0.25 / n) / n);
            worst = std::max(worst, std::abs(double(rows[i].successes) / n - fit) / sd);
        }
    }
    return worst;
}

} // namespace

TEST(RunSweep, ZeroSparsityAlwaysSucceeds)
{
    auto cfg = small_sweep();
    cfg.rho_kind = experiments::RhoGrid::Absolute;
    cfg.rho_grid = {0.0};
    cfg.delta_grid = {0.1, 0.3, 0.6};
    const auto rows = experiments::run_sweep(cfg);
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.successes, r.trials);
        EXPECT_EQ(r.trials, 8u);
        EXPECT_EQ(r.mean_rel_error, 0.0);
    }
}

TEST(RunSweep, FarAboveTransitionAlwaysFails)
{
    auto cfg = small_sweep();
    cfg.rho_kind = experiments::RhoGrid::Absolute;
    cfg.rho_grid = {0.9};
    cfg.delta_grid = {0.05};
    cfg.trials_per_cell = 4;
    const auto rows = experiments::run_sweep(cfg);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].successes, 0u);
}

TEST(RunSweep, InfeasibleCellsKeptWithReason)
{
    auto cfg = small_sweep();
    cfg.rho_kind = experiments::RhoGrid::Absolute;
    cfg.rho_grid = {0.1, 5.0};
    cfg.delta_grid = {0.5};
    cfg.trials_per_cell = 2;
    const auto rows = experiments::run_sweep(cfg);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_TRUE(rows[0].reason.empty());
    EXPECT_EQ(rows[1].trials, 0u);
    EXPECT_EQ(rows[1].successes, 0u);
    EXPECT_NE(rows[1].reason.find("infeasible"), std::string::npos);
    const std::string text = sweep_csv(rows);
    EXPECT_NE(text.find("\n2,0.5,5,0,0,,\n"), std::string::npos) << text;
}

TEST(RunSweep, RowsOrderedByBlockDeltaRho)
{
    auto cfg = small_sweep();
    cfg.block_sizes = {1, 2};
    cfg.delta_grid = {0.2, 0.4};
    cfg.rho_grid = {0.5, 0.8};
    cfg.trials_per_cell = 1;
    const auto rows = experiments::run_sweep(cfg);
    ASSERT_EQ(rows.size(), 8u);
    EXPECT_EQ(rows[0].block_size, 1);
    EXPECT_EQ(rows[4].block_size, 2);
    EXPECT_DOUBLE_EQ(rows[2].delta, 0.4);
    EXPECT_NEAR(rows[1].rho, 0.8 * pt::lasso_pt_lemma(0.2, 1).rho, 1e-15);
    for (const auto& r : rows) EXPECT_LE(r.successes, r.trials);
}

TEST(RunSweep, DeterministicAcrossThreadCounts)
{
    auto cfg = small_sweep();
    cfg.block_sizes = {1, 2};
    cfg.rho_grid = {0.6, 0.9, 1.2};
    cfg.trials_per_cell = 4;
    const auto serial = sweep_csv(experiments::run_sweep(cfg));
    cfg.threads = 3;
    const auto parallel = sweep_csv(experiments::run_sweep(cfg));
    EXPECT_EQ(serial, parallel);
    EXPECT_EQ(serial, sweep_csv(experiments::run_sweep(cfg)));
    cfg.master_seed = 12;
    EXPECT_NE(serial, sweep_csv(experiments::run_sweep(cfg)));
}

TEST(RunSweep, SuccessNonIncreasingInRho)
{
    auto cfg = small_sweep();
    cfg.rho_grid = {0.5, 0.7, 0.9, 1.1, 1.3, 1.5};
    cfg.trials_per_cell = 12;
    cfg.signal_dim = 800;
    const auto rows = experiments::run_sweep(cfg);
    EXPECT_EQ(rows.front().successes, rows.front().trials);
    EXPECT_EQ(rows.back().successes, 0u);
    EXPECT_LT(antitonic_deviation(rows), 3.0);
}

TEST(RunSweep, RejectsInvalidConfig)
{
    auto cfg = small_sweep();
    cfg.signal_dim = 601;
    EXPECT_THROW(experiments::run_sweep(cfg), DomainError);
    cfg = small_sweep();
    cfg.rho_grid.clear();
    EXPECT_THROW(experiments::run_sweep(cfg), DomainError);
    cfg = small_sweep();
    cfg.trials_per_cell = 0;
    EXPECT_THROW(experiments::run_sweep(cfg), DomainError);
    cfg = small_sweep();
    cfg.delta_grid = {1.0};
    EXPECT_THROW(experiments::run_sweep(cfg), DomainError);
}

TEST(FitTransition, AllSuccessIsBoundary)
{
    const auto fit = experiments::fit_transition(rows_from({0.1, 0.2, 0.3}, {10, 10, 10}, {10, 10, 10}));
    EXPECT_TRUE(fit.boundary);
    EXPECT_DOUBLE_EQ(fit.rho50, 0.3);
    EXPECT_LE(fit.ci_lo, fit.rho50);
    EXPECT_TRUE(std::isinf(fit.ci_hi));
}

TEST(FitTransition, AllFailureIsBoundary)
{
    const auto fit = experiments::fit_transition(rows_from({0.1, 0.2, 0.3}, {10, 10, 10}, {0, 0, 0}));
    EXPECT_TRUE(fit.boundary);
    EXPECT_DOUBLE_EQ(fit.rho50, 0.1);
    EXPECT_LE(fit.ci_lo, fit.rho50);
    EXPECT_LE(fit.rho50, fit.ci_hi);
}

TEST(FitTransition, SharpDataBracketed)
{
    const auto fit =
        experiments::fit_transition(rows_from({0.1, 0.2, 0.3, 0.4, 0.5}, {10, 10, 10, 10, 10}, {10, 10, 0, 0, 0}));
    EXPECT_GT(fit.rho50, 0.2);
    EXPECT_LT(fit.rho50, 0.3);
    EXPECT_LE(fit.ci_lo, fit.rho50);
    EXPECT_GE(fit.ci_hi, fit.rho50);
    EXPECT_FALSE(fit.boundary);
}

TEST(FitTransition, NeedsThreeDistinctRho)
{
    EXPECT_THROW(experiments::fit_transition(rows_from({0.1, 0.2}, {10, 10}, {10, 0})), DomainError);
    EXPECT_THROW(experiments::fit_transition(rows_from({0.1, 0.2, 0.3}, {10, 10, 0}, {10, 0, 0})), DomainError);
}

TEST(FitTransition, CiCoversTruthOnSyntheticProbitData)
{
    const double rho0 = 1.0, width = 0.15;
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(0.5 + 0.1 * i);
    std::mt19937_64 gen(2024);
    int covered = 0;
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<int> trials(grid.size(), 50), succ;
        for (double r : grid) {
            const double p = 0.5 * std::erfc((r - rho0) / width / std::sqrt(2.0));
            succ.push_back(int(std::binomial_distribution<int>(50, p)(gen)));
        }
        const auto fit = experiments::fit_transition(rows_from(grid, trials, succ));
        EXPECT_LE(fit.ci_lo, fit.rho50);
        EXPECT_GE(fit.ci_hi, fit.rho50);
        if (fit.ci_lo <= rho0 && rho0 <= fit.ci_hi) ++covered;
    }
    EXPECT_GE(covered, 90);
}

TEST(FitTransition, RowOrderDoesNotMatter)
{
    auto rows = rows_from({0.5, 0.6, 0.7, 0.8, 0.9, 1.0}, {20, 20, 20, 20, 20, 20}, {20, 18, 15, 7, 2, 0});
    const auto a = experiments::fit_transition(rows);
    std::mt19937_64 gen(1);
    for (int k = 0; k < 5; ++k) {
        std::shuffle(rows.begin(), rows.end(), gen);
        const auto b = experiments::fit_transition(rows);
        EXPECT_EQ(a.rho50, b.rho50);
        EXPECT_EQ(a.ci_lo, b.ci_lo);
        EXPECT_EQ(a.ci_hi, b.ci_hi);
    }
}

TEST(FitAll, GroupsByBlockAndDelta)
{
    auto rows = rows_from({0.5, 0.6, 0.7, 0.8}, {20, 20, 20, 20}, {20, 15, 6, 0});
    auto other = rows;
    for (auto& r : other) r.delta = 0.5;
    rows.insert(rows.end(), other.begin(), other.end());
    rows.push_back({4, 0.25, 0.1, 5, 5, 0.0, 0.0, ""});
    const auto fits = experiments::fit_all(rows);
    ASSERT_EQ(fits.size(), 2u);
    EXPECT_DOUBLE_EQ(fits[0].delta, 0.25);
    EXPECT_DOUBLE_EQ(fits[1].delta, 0.5);
    EXPECT_EQ(fits[0].rho50, fits[1].rho50);
}

TEST(PtTable, LemmaColumnIncreasesWithBlockSize)
{
    const auto table = experiments::pt_table({1, 2, 4, 8}, {0.1, 0.25, 0.5});
    ASSERT_EQ(table.size(), 12u);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 1; k < 4; ++k) EXPECT_GT(table[k * 3 + i].rho_lemma, table[(k - 1) * 3 + i].rho_lemma);
    for (const auto& r : table) EXPECT_TRUE(std::isnan(r.rho50));
}

TEST(PtTable, AsymptoticGapShrinksWithDelta)
{
    const std::vector<double> deltas{1e-2, 1e-4, 1e-6, 1e-8};
    for (int b : {2, 4, 8}) {
        const auto table = experiments::pt_table({b}, deltas);
        double prev = 1e9;
        for (const auto& r : table) {
            const double gap = std::abs(r.rho_asymptotic / r.rho_lemma - 1.0);
            EXPECT_LT(gap, prev) << "B=" << b << " delta=" << r.delta;
            prev = gap;
        }
    }
}

TEST(PtTable, JoinsEmpiricalFits)
{
    const std::vector<experiments::EmpiricalPT> fits{{2, 0.25, 0.33, 0.3, 0.36, false}};
    const auto table = experiments::pt_table({1, 2}, {0.25}, fits);
    EXPECT_TRUE(std::isnan(table[0].rho50));
    EXPECT_DOUBLE_EQ(table[1].rho50, 0.33);
    EXPECT_DOUBLE_EQ(table[1].ci_hi, 0.36);
    std::ostringstream os;
    experiments::write_pt_table_csv(os, table);
    std::string header;
    std::istringstream in(os.str());
    std::getline(in, header);
    EXPECT_EQ(header, "B,delta,rho_lemma,tau_star,rho_asymptotic,rho50,ci_lo,ci_hi");
    std::string first;
    std::getline(in, first);
    EXPECT_EQ(first.substr(first.size() - 3), ",,,");
}

TEST(Csv, RoundTripAndEncoding)
{
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int k = 0; k < 1000; ++k) {
        const double v = u(gen) * std::pow(10.0, k % 20 - 10);
        EXPECT_EQ(std::stod(csv::format_double(v)), v);
    }
    EXPECT_EQ(csv::format_double(std::nan("")), "");
    EXPECT_EQ(csv::format_double(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(csv::format_double(0.7), "0.7");
    std::ostringstream os;
    experiments::write_fit_csv(os, {{2, 0.25, 0.3, 0.25, 0.35, false}});
    EXPECT_EQ(os.str(), "B,delta,rho50,ci_lo,ci_hi\n2,0.25,0.3,0.25,0.35\n");
}

TEST(Slabs, TransitionLocationDoesNotDependOnSlab)
{
    auto cfg = small_sweep();
    cfg.rho_grid = {0.6, 0.8, 0.9, 1.0, 1.1, 1.2, 1.4};
    cfg.trials_per_cell = 16;
    cfg.signal_dim = 1000;
    cfg.threads = 0;
    cfg.slab = model::SphereUniform{10.0};
    const auto sphere = experiments::fit_transition(experiments::run_sweep(cfg));
    cfg.slab = model::GaussianIso{5.0};
    const auto gauss = experiments::fit_transition(experiments::run_sweep(cfg));
    EXPECT_LE(sphere.ci_lo, gauss.ci_hi) << sphere.rho50 << " vs " << gauss.rho50;
    EXPECT_LE(gauss.ci_lo, sphere.ci_hi) << sphere.rho50 << " vs " << gauss.rho50;
}
