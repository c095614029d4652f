#pragma once

#include "sprl/sprl.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace sprl::cli {

// Feature and state numbers are printed 1-based.
inline std::string one_based(const std::vector<Index>& idx)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < idx.size(); ++i) os << (i ? ", " : "") << idx[i] + 1;
    os << ']';
    return os.str();
}

inline std::string one_based_set(const std::vector<Index>& idx)
{
    std::string s = one_based(idx);
    s.front() = '{';
    s.back() = '}';
    return s;
}

inline std::vector<Index> support_of(const Vector& v, double tol = 1e-12)
{
    std::vector<Index> s;
    for (Index i = 0; i < v.size(); ++i)
        if (std::abs(v(i)) > tol * std::max(1.0, v.cwiseAbs().maxCoeff())) s.push_back(i);
    return s;
}

struct SweepArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

struct RecoverArgs {
    std::string env = "chain50";
    std::string mode = "exact";
    std::string solver = "brm";
    std::uint64_t seed = 1;
    std::size_t samples = 200;
    double beta = 0.0;
    double eta = 0.0;
    Index k_total = 1000;
    Index k_candidates = 3000;
    std::size_t max_iterations = 0;
    std::string basis_in;
    std::string basis_out;
};

struct ExactArgs {
    std::string env = "chain50";
    std::uint64_t seed = 1;
    std::size_t states = 10;
    std::size_t rollouts = 100;
};

inline int run_sweep_command(const SweepArgs& a, std::ostream& out, std::ostream& err)
{
    ExperimentConfig config = ExperimentConfig::load(a.config);
    if (a.seed) config.seed = *a.seed;
    if (!a.out.empty()) config.output = a.out;
    const SweepResult result = run_sweep(config);

    std::ostream& summary = config.output.empty() ? err : out;
    if (config.output.empty())
        write_csv(out, result);
    else
        write_csv(result, config.output);

    std::map<double, std::vector<const SweepRow*>, std::greater<>> by_beta;
    for (const auto& r : result.rows) by_beta[r.beta].push_back(&r);
    summary << "solver " << config.solver << ", env " << config.env << ", " << config.n_trials << " trials\n";
    summary << std::setw(14) << "beta" << std::setw(14) << "mean rmse" << std::setw(14) << "mean k" << std::setw(10)
            << "unstable\n";
    for (const auto& [beta, rows] : by_beta) {
        double rm = 0.0, nf = 0.0;
        std::size_t ok = 0, bad = 0;
        for (const SweepRow* r : rows) {
            nf += static_cast<double>(r->n_features);
            if (r->unstable()) {
                ++bad;
            } else {
                rm += r->rmse;
                ++ok;
            }
        }
        summary << std::setw(14) << std::setprecision(6) << beta << std::setw(14)
                << (ok ? rm / static_cast<double>(ok) : std::numeric_limits<double>::quiet_NaN()) << std::setw(14)
                << nf / static_cast<double>(rows.size()) << std::setw(9) << bad << '\n';
    }
    if (!config.output.empty()) summary << "wrote " << result.rows.size() << " rows to " << config.output << '\n';
    for (const auto& v : result.violations) err << "warning: " << v << '\n';
    return 0;
}

inline int run_recover_command(const RecoverArgs& a, std::ostream& out, std::ostream& err)
{
    const EnvPtr env = make_env(a.env);
    const DiscreteMrp* mrp = env->exact_model();
    if (!mrp) {
        err << "error: recover needs a discrete environment, '" << a.env << "' is continuous\n";
        return 2;
    }
    const RecoveryBasis basis =
        a.basis_in.empty() ? generate_recovery_basis(*mrp, a.k_total, a.k_candidates, a.seed) : load_recovery_basis(a.basis_in);
    require(basis.Phi.rows() == mrp->n_states(), "recover: basis does not match the environment");
    if (!a.basis_out.empty()) save_recovery_basis(a.basis_out, basis);

    RegularizedSolveConfig cfg;
    cfg.eta = a.eta;
    if (a.max_iterations > 0) cfg.max_iterations = a.max_iterations;
    const RecoveryMode mode = a.mode == "exact" ? RecoveryMode::exact() : RecoveryMode::sampled_from(a.samples, derive_seed(a.seed, 1));
    const RecoverySolver solver = a.solver == "brm" ? RecoverySolver::brm : RecoverySolver::td;
    const RecoveryReport rep = verify_sparse_recovery(*mrp, basis, mode, solver, a.beta, cfg);

    std::vector<Index> shown(rep.selection.begin(), rep.selection.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(rep.selection.size(), 12)));
    out << "basis: " << basis.Phi.rows() << " x " << basis.k() << ", designed features " << one_based_set(basis.opt)
        << ", recovery coefficient " << std::setprecision(6) << basis.erc << '\n';
    out << "selection order: " << one_based(shown);
    if (shown.size() < rep.selection.size()) out << " ... (" << rep.selection.size() << " total)";
    out << '\n';
    out << "designed features selected first: " << (rep.opt_first ? "true" : "false") << '\n';
    out << "opt recovered: " << (rep.opt_recovered ? "true" : "false") << '\n';
    if (rep.iterations_to_cover_opt) out << "iterations to cover opt: " << *rep.iterations_to_cover_opt << '\n';
    out << "value error ||Phi w - V*||: " << std::setprecision(6) << rep.value_error << '\n';
    out << "stop: " << to_string(rep.stop) << '\n';
    return 0;
}

inline int run_counterexample_command(double gamma, std::ostream& out)
{
    const DiscreteMrp mrp = make_counterexample_chain(gamma);
    const Matrix Phi = Matrix::Identity(mrp.n_states(), mrp.n_states());
    const FeatureData data = exact_feature_data(mrp, Phi);
    const std::vector<Index> opt = support_of(exact_values(mrp).values);

    RegularizedSolveConfig cfg;
    cfg.eta = 0.0;
    auto order = [](const GreedyPath& p) {
        std::vector<Index> s;
        for (const auto& step : p.steps) s.push_back(step.feature);
        return s;
    };
    const auto td = order(omp_td_path(data, 0.0, cfg));
    const auto brm = order(omp_brm_path(data, 0.0, false, cfg));

    out << "chain with gamma " << gamma << ", indicator basis, one exact sample per state\n";
    out << "V* support opt = " << one_based_set(opt) << '\n';
    out << "OMP-TD selection order: " << one_based(td) << '\n';
    out << "OMP-BRM selection order: " << one_based(brm) << '\n';
    if (td.empty()) {
        out << "OMP-TD selected nothing\n";
        return 0;
    }
    const bool outside = std::find(opt.begin(), opt.end(), td.front()) == opt.end();
    out << "first OMP-TD selection: feature " << td.front() + 1 << (outside ? ", outside opt = " : ", inside opt = ")
        << one_based_set(opt) << '\n';
    out << "OMP-TD misses opt on its first step: " << (outside ? "yes" : "no") << '\n';
    return 0;
}

inline int run_exact_command(const ExactArgs& a, std::ostream& out)
{
    const EnvPtr env = make_env(a.env);
    out << std::setprecision(10);
    if (const DiscreteMrp* mrp = env->exact_model()) {
        const ValueVector v = exact_values(*mrp);
        out << "state,value\n";
        for (Index i = 0; i < v.values.size(); ++i) out << i + 1 << ',' << v.values(i) << '\n';
        return 0;
    }
    Rng rng(derive_seed(a.seed, 0x5eed0001));
    std::vector<State> states;
    for (std::size_t i = 0; i < a.states; ++i) states.push_back(env->draw_start(rng));
    RolloutConfig rc;
    rc.n_rollouts = a.rollouts;
    const RolloutEstimate est = rollout_values(*env, states, rc, env->discount(), derive_seed(a.seed, 0x5eed0002));
    out << "# rollout estimates, " << a.rollouts << " rollouts, horizon " << est.horizon << '\n';
    for (Index d = 0; d < env->state_dim(); ++d) out << 'x' << d << ',';
    out << "value,std_error\n";
    for (std::size_t i = 0; i < states.size(); ++i) {
        for (Index d = 0; d < states[i].size(); ++d) out << states[i](d) << ',';
        out << est.values.values(static_cast<Index>(i)) << ',' << est.std_errors(static_cast<Index>(i)) << '\n';
    }
    return 0;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Sparse policy evaluation toolkit"};
    app.require_subcommand(1);

    SweepArgs sweep;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run a beta sweep from a config file and write CSV");
    sweep_cmd->add_option("--config", sweep.config, "Experiment config file")->required();
    sweep_cmd->add_option("--out", sweep.out, "CSV output path (default: config 'out', else stdout)");
    sweep_cmd->add_option("--seed", sweep.seed, "Override the config seed");

    RecoverArgs rec;
    auto* rec_cmd = app.add_subcommand("recover", "Sparse-recovery experiment on a designed basis");
    rec_cmd->add_option("--env", rec.env, "Discrete environment")->capture_default_str();
    rec_cmd->add_option("--mode", rec.mode, "exact or sampled")->check(CLI::IsMember({"exact", "sampled"}))->capture_default_str();
    rec_cmd->add_option("--solver", rec.solver, "brm or td")->check(CLI::IsMember({"brm", "td"}))->capture_default_str();
    rec_cmd->add_option("--seed", rec.seed, "Seed for basis generation and sampling")->capture_default_str();
    rec_cmd->add_option("--samples", rec.samples, "Transitions in sampled mode")->check(CLI::PositiveNumber)->capture_default_str();
    rec_cmd->add_option("--beta", rec.beta, "Stopping threshold")->check(CLI::NonNegativeNumber)->capture_default_str();
    rec_cmd->add_option("--eta", rec.eta, "L2 regularization")->check(CLI::NonNegativeNumber)->capture_default_str();
    rec_cmd->add_option("--k-total", rec.k_total, "Basis size")->capture_default_str();
    rec_cmd->add_option("--k-candidates", rec.k_candidates, "Candidate pool size")->capture_default_str();
    rec_cmd->add_option("--max-iterations", rec.max_iterations, "Iteration cap (0: solver default)")->capture_default_str();
    rec_cmd->add_option("--basis", rec.basis_in, "Load the basis from a file instead of generating it");
    rec_cmd->add_option("--save-basis", rec.basis_out, "Write the basis to a file");

    double gamma = 0.9;
    auto* ce_cmd = app.add_subcommand("counterexample", "OMP-TD on the five-state chain with an indicator basis");
    ce_cmd->add_option("--gamma", gamma, "Discount factor")->check(CLI::Range(0.0, 0.999999))->capture_default_str();

    ExactArgs ex;
    auto* ex_cmd = app.add_subcommand("exact", "Print V* (discrete) or rollout estimates (continuous)");
    ex_cmd->add_option("--env", ex.env, "chain50, counterexample, mountain_car, puddleworld")->required();
    ex_cmd->add_option("--seed", ex.seed, "Seed for evaluation states and rollouts")->capture_default_str();
    ex_cmd->add_option("--states", ex.states, "Evaluation states (continuous)")->check(CLI::PositiveNumber)->capture_default_str();
    ex_cmd->add_option("--rollouts", ex.rollouts, "Rollouts per state (continuous)")->check(CLI::PositiveNumber)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        err << app.help();
        return code == 0 ? 2 : code;
    }

    try {
        if (*sweep_cmd) return run_sweep_command(sweep, out, err);
        if (*rec_cmd) return run_recover_command(rec, out, err);
        if (*ce_cmd) return run_counterexample_command(gamma, out);
        if (*ex_cmd) return run_exact_command(ex, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace sprl::cli
