// blocksparse: phase transitions for block-sparse recovery from the command line.

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "blocksparse/blocksparse.hpp"
#include "cli_args.hpp"

namespace bs = blocksparse;
using bs::csv::format_double;

namespace {

class Output {
public:
    explicit Output(const std::string& path)
    {
        if (path != "-") {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) throw bs::DomainError("cannot open output file '" + path + "'");
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

std::vector<double> delta_values(const std::optional<std::string>& grid, const std::optional<std::string>& list,
                                 const std::vector<double>& fallback)
{
    if (grid && list) throw bs::DomainError("give either --delta-grid or --delta-list, not both");
    if (grid) return bs::cli::parse_range(*grid, "--delta-grid");
    if (list) return bs::cli::parse_list(*list, "--delta-list");
    return fallback;
}

double slab_radius(const bs::model::Slab& slab, int block_size)
{
    if (const auto* s = std::get_if<bs::model::SphereUniform>(&slab)) return s->radius;
    return std::get<bs::model::GaussianIso>(slab).std * std::sqrt(static_cast<double>(block_size));
}

// Rules other than soft take their G* radius from the slab and the activity
// from epsilon = rho delta.
bs::shrink::ShrinkageRule make_rule(const std::string& name, double epsilon, const bs::model::Slab& slab,
                                    int block_size, double hard_a)
{
    bs::shrink::RuleParams params;
    const double mu = slab_radius(slab, block_size);
    params.gstar = {std::clamp(epsilon, 1e-12, 1.0 - 1e-12), mu, block_size};
    params.hard_mu = mu;
    params.hard_a = hard_a;
    return bs::shrink::rule_from_name(name, params);
}

double resolve_tau(const std::string& tau, double delta, int block_size)
{
    if (tau == "auto") return bs::pt::lasso_pt_lemma(delta, block_size).tau_star;
    return bs::cli::parse_double(tau, "--tau");
}

const std::vector<double> kDefaultDeltas{0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5,
                                         0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95};

struct PtArgs {
    std::string mode = "lemma";
    std::vector<int> block_sizes{1, 2, 4, 8};
    std::optional<std::string> delta_grid;
    std::optional<std::string> delta_list;
    std::string out = "-";
};

void run_pt(const PtArgs& a)
{
    const auto deltas = delta_values(a.delta_grid, a.delta_list, kDefaultDeltas);
    Output out(a.out);
    auto& os = out.stream();
    bs::csv::write_row(os, {"B", "delta", "rho", "tau_star", "mode"});
    for (int b : a.block_sizes) {
        for (double d : deltas) {
            bs::pt::PTPoint p;
            if (a.mode == "lemma") {
                bs::pt::LemmaDiagnostics diag;
                p = bs::pt::lasso_pt_lemma(d, b, &diag);
                if (diag.sign_changes != 1 || std::abs(diag.stationarity_residual) > 1e-6) {
                    std::cerr << "warning: B=" << b << " delta=" << format_double(d) << ": threshold equation has "
                              << diag.sign_changes << " sign changes, stationarity residual "
                              << format_double(diag.stationarity_residual)
                              << "; the fixed-point route is authoritative\n";
                }
            } else if (a.mode == "fixedpoint") {
                p = bs::pt::lasso_pt_fixedpoint(d, b);
            } else {
                p = bs::pt::pt_point(d, b, bs::pt::PTMode::Asymptotic);
            }
            bs::csv::write_row(os, {b, p.delta, p.rho, p.tau_star, a.mode});
        }
    }
}

struct SeArgs {
    double delta = 0.25;
    double rho = 0.1;
    int block_size = 2;
    std::string rule = "soft";
    std::string tau = "auto";
    std::string mse0 = "auto";
    std::string slab = "sphere:10";
    std::string estimator = "mc";
    std::size_t samples = 200000;
    std::uint64_t seed = 0;
    std::size_t max_iter = 500;
    double tol = 1e-12;
    double hard_a = 1.0;
    std::string out = "-";
};

void run_se(const SeArgs& a)
{
    bs::se::SEConfig cfg;
    cfg.delta = a.delta;
    cfg.prior = {a.rho * a.delta, a.block_size, bs::cli::parse_slab(a.slab)};
    cfg.prior.validate();
    cfg.rule = make_rule(a.rule, cfg.prior.epsilon, cfg.prior.slab, a.block_size, a.hard_a);
    cfg.threshold_multiplier = resolve_tau(a.tau, a.delta, a.block_size);
    cfg.mse0 = a.mse0 == "auto" ? bs::se::initial_mse(cfg.prior, a.delta) : bs::cli::parse_double(a.mse0, "--mse0");
    if (cfg.mse0 == 0.0) cfg.mse0 = 1.0; // zero signal: any positive start decays
    cfg.max_iter = a.max_iter;
    cfg.tol = a.tol;
    if (a.estimator == "mc") cfg.estimator = bs::se::MonteCarloSe{a.samples, a.seed};
    else cfg.estimator = bs::se::SemiAnalyticSe{};

    const auto traj = bs::se::se_iterate(cfg);
    Output out(a.out);
    auto& os = out.stream();
    bs::csv::write_row(os, {"iter", "mse"});
    for (std::size_t i = 0; i < traj.mse_sequence.size(); ++i) {
        bs::csv::write_row(os, {static_cast<unsigned long long>(i), traj.mse_sequence[i]});
    }
    os << '\n';
    bs::csv::write_row(os, {"converged", "fixed_point"});
    bs::csv::write_row(os, {traj.converged ? "true" : "false", traj.fixed_point});
}

struct SolveArgs {
    double delta = 0.5;
    double rho = 0.1;
    long long signal_dim = 1000;
    int block_size = 2;
    std::string slab = "sphere:10";
    std::uint64_t seed = 0;
    std::string rule = "soft";
    std::string tau = "auto";
    bool no_onsager = false;
    std::size_t max_iter = 500;
    double rtol = 1e-10;
    double success_tol = 1e-4;
    double hard_a = 1.0;
    std::string trace;
    std::string out = "-";
};

void run_solve(const SolveArgs& a)
{
    const auto slab = bs::cli::parse_slab(a.slab);
    const auto inst = bs::model::make_instance(a.delta, a.rho, a.signal_dim, a.block_size, slab, a.seed);
    bs::amp::AmpConfig cfg;
    cfg.rule = make_rule(a.rule, a.rho * a.delta, slab, a.block_size, a.hard_a);
    cfg.threshold_multiplier = resolve_tau(a.tau, inst.delta, a.block_size);
    cfg.onsager = !a.no_onsager;
    cfg.max_iter = a.max_iter;
    cfg.rtol = a.rtol;
    cfg.success_tol = a.success_tol;

    std::unique_ptr<Output> trace;
    if (!a.trace.empty()) {
        trace = std::make_unique<Output>(a.trace);
        bs::csv::write_row(trace->stream(), {"iter", "sigma_hat", "rel_error"});
    }
    auto observer = [&](const bs::amp::AmpState& s) {
        if (!trace) return;
        bs::csv::write_row(trace->stream(), {static_cast<unsigned long long>(s.iter), s.sigma_hat,
                                             bs::amp::relative_error(s.x, inst.truth)});
    };
    const auto res = bs::amp::amp_solve(inst, cfg, observer);
    const double err = bs::amp::relative_error(res.estimate, inst.truth);

    Output out(a.out);
    auto& os = out.stream();
    os << "rel_error: " << format_double(err) << '\n';
    os << "iterations: " << res.iterations << '\n';
    os << "converged: " << (res.converged ? "true" : "false") << '\n';
    os << "success: " << (bs::amp::recovery_success(res, inst.truth, cfg.success_tol) ? "true" : "false") << '\n';
}

struct SweepArgs {
    std::vector<int> block_sizes{2};
    std::optional<std::string> delta_grid;
    std::optional<std::string> delta_list;
    std::string rho_multipliers;
    std::string rho_list;
    std::size_t trials = 50;
    long long signal_dim = 2000;
    std::string slab = "sphere:10";
    std::uint64_t seed = 0;
    std::string rule = "soft";
    bool no_onsager = false;
    double success_tol = 1e-4;
    std::size_t max_iter = 500;
    unsigned threads = 0;
    bool fit = false;
    std::string out = "-";
};

void run_sweep(const SweepArgs& a)
{
    bs::experiments::SweepConfig cfg;
    cfg.block_sizes = a.block_sizes;
    cfg.delta_grid = delta_values(a.delta_grid, a.delta_list, {0.25});
    if (!a.rho_multipliers.empty() && !a.rho_list.empty()) {
        throw bs::DomainError("give either --rho-multipliers or --rho-list, not both");
    }
    if (!a.rho_list.empty()) {
        cfg.rho_grid = bs::cli::parse_list(a.rho_list, "--rho-list");
        cfg.rho_kind = bs::experiments::RhoGrid::Absolute;
    } else {
        cfg.rho_grid = bs::cli::parse_range(a.rho_multipliers.empty() ? "0.5:1.5:0.1" : a.rho_multipliers,
                                            "--rho-multipliers");
    }
    cfg.trials_per_cell = a.trials;
    cfg.signal_dim = a.signal_dim;
    cfg.slab = bs::cli::parse_slab(a.slab);
    cfg.master_seed = a.seed;
    cfg.amp.rule = bs::shrink::rule_from_name(a.rule);
    if (!cfg.amp.rule.is_soft()) throw bs::DomainError("sweep supports only the soft rule");
    cfg.amp.onsager = !a.no_onsager;
    cfg.amp.success_tol = a.success_tol;
    cfg.amp.max_iter = a.max_iter;
    cfg.threads = a.threads;

    const auto rows = bs::experiments::run_sweep(cfg);
    Output out(a.out);
    auto& os = out.stream();
    bs::experiments::write_sweep_csv(os, rows);
    if (a.fit) {
        os << '\n';
        bs::experiments::write_fit_csv(os, bs::experiments::fit_all(rows));
    }
}

struct RiskArgs {
    double epsilon = 1e-3;
    std::string gamma = "auto";
    int block_size = 2;
    std::string estimator = "mc";
    std::size_t samples = 1000000;
    std::uint64_t seed = 0;
    std::string out = "-";
};

void run_risk(const RiskArgs& a)
{
    const double gamma = a.gamma == "auto" ? bs::pt::default_gamma(a.epsilon) : bs::cli::parse_double(a.gamma, "--gamma");
    const auto params = bs::pt::gstar_params(a.epsilon, gamma, a.block_size);
    bs::pt::RiskEstimator est = bs::pt::MonteCarloRisk{a.samples, a.seed};
    if (a.estimator == "quadrature") est = bs::pt::Quadrature2D{};
    const auto risk = bs::pt::gstar_risk(params, est);
    const double asym = bs::pt::gstar_risk_asymptote(params);

    Output out(a.out);
    auto& os = out.stream();
    os << "epsilon: " << format_double(params.epsilon) << '\n';
    os << "gamma: " << format_double(params.gamma) << '\n';
    os << "mu: " << format_double(params.mu) << '\n';
    os << "a: " << format_double(params.a) << '\n';
    os << "risk: " << format_double(risk.value) << " +- " << format_double(risk.std_error) << '\n';
    os << "asymptote: " << format_double(asym) << '\n';
    os << "ratio: " << format_double(risk.value / asym) << '\n';
}

struct BoundArgs {
    int block_size = 2;
    double mu = 10.0;
    double a = 4.0;
    std::size_t samples = 1000000;
    std::uint64_t seed = 0;
    std::string out = "-";
};

void run_bound(const BoundArgs& a)
{
    const double bound = bs::pt::tail_bound(a.block_size, a.a);
    bs::RngStream rng(a.seed, 0);
    const auto mc = bs::pt::tail_prob_mc(a.block_size, a.mu, a.a, a.samples, rng);
    Output out(a.out);
    auto& os = out.stream();
    os << "bound: " << format_double(bound) << '\n';
    os << "mc_estimate: " << format_double(mc.estimate) << " +- " << format_double(mc.std_error) << '\n';
    os << "verdict: " << (mc.estimate <= bound ? "HOLDS" : "VIOLATED") << '\n';
}

struct TableArgs {
    std::vector<int> block_sizes{1, 2, 4, 8};
    std::optional<std::string> delta_grid;
    std::optional<std::string> delta_list;
    std::string fit_csv;
    std::string out = "-";
};

// Reads the B,delta,rho50,ci_lo,ci_hi block written by `sweep --fit`.
std::vector<bs::experiments::EmpiricalPT> read_fits(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw bs::DomainError("cannot open fit file '" + path + "'");
    std::vector<bs::experiments::EmpiricalPT> fits;
    std::string line;
    bool in_block = false;
    while (std::getline(in, line)) {
        if (line.rfind("B,delta,rho50", 0) == 0) {
            in_block = true;
            continue;
        }
        if (!in_block || bs::cli::trim(line).empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string item; std::getline(ss, item, ',');) f.push_back(item);
        if (f.size() != 5) throw bs::DomainError("fit file '" + path + "': malformed row '" + line + "'");
        auto num = [](const std::string& s) {
            if (s == "inf") return std::numeric_limits<double>::infinity();
            return bs::cli::parse_double(s, "fit file");
        };
        fits.push_back({static_cast<int>(num(f[0])), num(f[1]), num(f[2]), num(f[3]), num(f[4]), false});
    }
    return fits;
}

void run_table(const TableArgs& a)
{
    const auto deltas = delta_values(a.delta_grid, a.delta_list, kDefaultDeltas);
    std::optional<std::vector<bs::experiments::EmpiricalPT>> fits;
    if (!a.fit_csv.empty()) fits = read_fits(a.fit_csv);
    const auto table = bs::experiments::pt_table(a.block_sizes, deltas, fits);
    Output out(a.out);
    bs::experiments::write_pt_table_csv(out.stream(), table);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Phase transitions for block-sparse recovery: AMP, state evolution and group-LASSO formulas"};
    app.require_subcommand(1);

    PtArgs pt;
    auto* pt_cmd = app.add_subcommand("pt", "Analytic phase-transition curve rho(delta)");
    pt_cmd->add_option("--mode", pt.mode, "lemma, fixedpoint or asymptotic")
        ->check(CLI::IsMember({"lemma", "fixedpoint", "asymptotic"}));
    pt_cmd->add_option("--block-size", pt.block_sizes, "Block size (repeatable)")->delimiter(',')->check(CLI::PositiveNumber);
    pt_cmd->add_option("--delta-grid", pt.delta_grid, "lo:hi:step");
    pt_cmd->add_option("--delta-list", pt.delta_list, "v1,v2,...");
    pt_cmd->add_option("--out", pt.out, "Output path, - for stdout");

    SeArgs se;
    auto* se_cmd = app.add_subcommand("se", "State-evolution trajectory");
    se_cmd->add_option("--delta", se.delta);
    se_cmd->add_option("--rho", se.rho);
    se_cmd->add_option("--block-size", se.block_size)->check(CLI::PositiveNumber);
    se_cmd->add_option("--rule", se.rule, "soft, bayes-gstar, hard-approx or james-stein");
    se_cmd->add_option("--tau", se.tau, "Threshold multiplier or auto (tau*(delta))");
    se_cmd->add_option("--mse0", se.mse0, "Initial mse or auto (energy of the signal)");
    se_cmd->add_option("--slab", se.slab, "sphere:MU or gauss:SIGMA");
    se_cmd->add_option("--estimator", se.estimator, "mc or semi")->check(CLI::IsMember({"mc", "semi"}));
    se_cmd->add_option("--samples", se.samples);
    se_cmd->add_option("--seed", se.seed);
    se_cmd->add_option("--max-iter", se.max_iter);
    se_cmd->add_option("--tol", se.tol);
    se_cmd->add_option("--hard-a", se.hard_a, "Offset a of the hard-approx rule");
    se_cmd->add_option("--out", se.out);

    SolveArgs sv;
    auto* solve_cmd = app.add_subcommand("solve", "Run AMP on one random instance");
    solve_cmd->add_option("--delta", sv.delta);
    solve_cmd->add_option("--rho", sv.rho);
    solve_cmd->add_option("--signal-dim", sv.signal_dim)->check(CLI::PositiveNumber);
    solve_cmd->add_option("--block-size", sv.block_size)->check(CLI::PositiveNumber);
    solve_cmd->add_option("--slab", sv.slab);
    solve_cmd->add_option("--seed", sv.seed);
    solve_cmd->add_option("--rule", sv.rule);
    solve_cmd->add_option("--tau", sv.tau);
    solve_cmd->add_flag("--no-onsager", sv.no_onsager, "Plain iterative thresholding");
    solve_cmd->add_option("--max-iter", sv.max_iter);
    solve_cmd->add_option("--rtol", sv.rtol);
    solve_cmd->add_option("--success-tol", sv.success_tol);
    solve_cmd->add_option("--hard-a", sv.hard_a);
    solve_cmd->add_option("--trace", sv.trace, "Write iter,sigma_hat,rel_error to this CSV");
    solve_cmd->add_option("--out", sv.out);

    SweepArgs sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "Monte Carlo success rates over a (delta, rho) grid");
    sweep_cmd->add_option("--block-sizes", sw.block_sizes)->delimiter(',')->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--delta-grid", sw.delta_grid);
    sweep_cmd->add_option("--delta-list", sw.delta_list);
    sweep_cmd->add_option("--rho-multipliers", sw.rho_multipliers, "lo:hi:step, multiples of rho^L(delta)");
    sweep_cmd->add_option("--rho-list", sw.rho_list, "Absolute rho values");
    sweep_cmd->add_option("--trials", sw.trials)->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--signal-dim", sw.signal_dim)->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--slab", sw.slab);
    sweep_cmd->add_option("--seed", sw.seed);
    sweep_cmd->add_option("--rule", sw.rule);
    sweep_cmd->add_flag("--no-onsager", sw.no_onsager);
    sweep_cmd->add_option("--success-tol", sw.success_tol);
    sweep_cmd->add_option("--max-iter", sw.max_iter, "AMP iteration cap per trial")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--threads", sw.threads, "Worker threads (default BLOCKSPARSE_THREADS or all cores)");
    sweep_cmd->add_flag("--fit", sw.fit, "Append probit fits B,delta,rho50,ci_lo,ci_hi");
    sweep_cmd->add_option("--out", sw.out);

    RiskArgs rk;
    auto* risk_cmd = app.add_subcommand("risk", "Bayes risk of the least-favorable prior against its asymptote");
    risk_cmd->add_option("--epsilon", rk.epsilon);
    risk_cmd->add_option("--gamma", rk.gamma, "Value in (0, 1) or auto");
    risk_cmd->add_option("--block-size", rk.block_size)->check(CLI::PositiveNumber);
    risk_cmd->add_option("--estimator", rk.estimator, "mc or quadrature")->check(CLI::IsMember({"mc", "quadrature"}));
    risk_cmd->add_option("--samples", rk.samples);
    risk_cmd->add_option("--seed", rk.seed);
    risk_cmd->add_option("--out", rk.out);

    BoundArgs bd;
    auto* bound_cmd = app.add_subcommand("bound", "Tail bound P{|mu theta + z| > mu + a} against Monte Carlo");
    bound_cmd->add_option("--block-size", bd.block_size)->check(CLI::PositiveNumber);
    bound_cmd->add_option("--mu", bd.mu);
    bound_cmd->add_option("--a", bd.a);
    bound_cmd->add_option("--samples", bd.samples)->check(CLI::PositiveNumber);
    bound_cmd->add_option("--seed", bd.seed);
    bound_cmd->add_option("--out", bd.out);

    TableArgs tb;
    auto* table_cmd = app.add_subcommand("table", "Analytic, asymptotic and empirical transitions side by side");
    table_cmd->add_option("--block-sizes", tb.block_sizes)->delimiter(',')->check(CLI::PositiveNumber);
    table_cmd->add_option("--delta-grid", tb.delta_grid);
    table_cmd->add_option("--delta-list", tb.delta_list);
    table_cmd->add_option("--fit-csv", tb.fit_csv, "Output of sweep --fit");
    table_cmd->add_option("--out", tb.out);

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = bs::cli::merge_config(std::move(args), {"no-onsager", "fit"});
        std::vector<char*> raw{argv[0]};
        for (auto& s : args) raw.push_back(s.data());
        app.parse(static_cast<int>(raw.size()), raw.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const bs::DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*pt_cmd) run_pt(pt);
        else if (*se_cmd) run_se(se);
        else if (*solve_cmd) run_solve(sv);
        else if (*sweep_cmd) run_sweep(sw);
        else if (*risk_cmd) run_risk(rk);
        else if (*bound_cmd) run_bound(bd);
        else if (*table_cmd) run_table(tb);
    } catch (const bs::DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const bs::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
