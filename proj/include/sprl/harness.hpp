#pragma once

#include "sprl/core.hpp"
#include "sprl/env.hpp"
#include "sprl/features.hpp"
#include "sprl/mrp.hpp"
#include "sprl/solvers.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace sprl {

// ---------------------------------------------------------------------------
// Metrics

inline double rmse(const Vector& estimate, const Vector& truth)
{
    if (estimate.size() != truth.size()) throw std::invalid_argument("rmse: length mismatch");
    require(truth.size() > 0, "rmse: empty vectors");
    return std::sqrt((estimate - truth).squaredNorm() / static_cast<double>(truth.size()));
}

inline double rmse(const ValueVector& estimate, const ValueVector& truth) { return rmse(estimate.values, truth.values); }

// ---------------------------------------------------------------------------
// Experiment configuration

/// Everything a sweep needs; loaded from a flat "key = value" file where
/// '#' starts a comment.
///
///   env            chain50 | counterexample | mountain_car | puddleworld
///   solver         omp-brm | omp-td | lasso-brm | lstd-full
///   beta_grid      auto | log:<lo>:<hi>:<count> | comma-separated list (descending)
///   n_samples, n_trials, doubled, eta, seed, normalize
///   ground_truth   exact | rollouts
///   rollout.horizon (0 = auto), rollout.n, rollout.tail_tolerance, eval_states
///   record_timing  false writes zero timings (byte-reproducible output)
///   out            CSV path
///   dict.*         see DictionaryConfig
struct ExperimentConfig {
    std::string env = "chain50";
    DictionaryConfig dict = DictionaryConfig::default_for("chain50");
    std::string solver = "omp-td";
    std::vector<double> beta_grid; // empty: auto
    double auto_beta_min = 1e-4;
    std::size_t auto_beta_count = 20;
    std::size_t n_samples = 500;
    std::size_t n_trials = 50;
    bool doubled = false;
    double eta = 0.01;
    std::uint64_t seed = 1;
    bool normalize = true;
    std::string ground_truth = "exact";
    RolloutConfig rollouts{};
    std::size_t eval_states = 500;
    bool record_timing = true;
    std::string output;

    void validate() const
    {
        require(solver == "omp-brm" || solver == "omp-td" || solver == "lasso-brm" || solver == "lstd-full",
                "config: unknown solver '" + solver + "'");
        require(n_trials >= 1, "config: n_trials must be at least 1");
        require(n_samples >= 1, "config: n_samples must be at least 1");
        require(eta >= 0.0, "config: eta must be non-negative");
        require(ground_truth == "exact" || ground_truth == "rollouts", "config: ground_truth must be exact or rollouts");
        require(eval_states >= 1, "config: eval_states must be at least 1");
        for (std::size_t i = 0; i < beta_grid.size(); ++i) {
            require(beta_grid[i] > 0.0 && std::isfinite(beta_grid[i]), "config: beta_grid entries must be positive");
            require(i == 0 || beta_grid[i] < beta_grid[i - 1], "config: beta_grid must be strictly descending");
        }
        require(auto_beta_min > 0.0 && auto_beta_count >= 1, "config: bad auto beta grid");
    }

    static std::vector<double> log_grid(double lo, double hi, std::size_t count)
    {
        require(lo > 0.0 && hi >= lo && count >= 1, "log grid: need 0 < lo <= hi and count >= 1");
        if (count == 1 || hi == lo) return {hi};
        std::vector<double> g(count);
        const double a = std::log(hi), b = std::log(lo);
        for (std::size_t i = 0; i < count; ++i)
            g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
        g.front() = hi;
        g.back() = lo;
        return g;
    }

    void set(const std::string& key, const std::string& value)
    {
        auto as_bool = [&](const std::string& v) {
            if (v == "true" || v == "1" || v == "yes") return true;
            if (v == "false" || v == "0" || v == "no") return false;
            throw std::invalid_argument("config: '" + key + "' expects true/false, got '" + v + "'");
        };
        auto as_size = [&](const std::string& v) {
            std::size_t x = 0;
            auto r = std::from_chars(v.data(), v.data() + v.size(), x);
            if (r.ec != std::errc() || r.ptr != v.data() + v.size())
                throw std::invalid_argument("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
            return x;
        };
        auto as_double = [&](const std::string& v) {
            std::size_t pos = 0;
            double x = 0.0;
            try {
                x = std::stod(v, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos == 0 || pos != v.size()) throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
            return x;
        };

        if (dict.parse_entry(key, value)) {
        } else if (key == "env") {
            env = value;
        } else if (key == "solver") {
            solver = value;
        } else if (key == "beta_grid") {
            beta_grid.clear();
            if (value == "auto") return;
            if (value.rfind("log:", 0) == 0) {
                const auto parts = DictionaryConfig::split(value.substr(4), ':');
                require(parts.size() == 3, "config: beta_grid log form is log:<lo>:<hi>:<count>");
                beta_grid = log_grid(as_double(parts[0]), as_double(parts[1]), as_size(parts[2]));
            } else {
                for (const auto& tok : DictionaryConfig::split(value, ',')) beta_grid.push_back(as_double(tok));
            }
        } else if (key == "beta_min") {
            auto_beta_min = as_double(value);
        } else if (key == "beta_count") {
            auto_beta_count = as_size(value);
        } else if (key == "n_samples") {
            n_samples = as_size(value);
        } else if (key == "n_trials") {
            n_trials = as_size(value);
        } else if (key == "doubled") {
            doubled = as_bool(value);
        } else if (key == "eta") {
            eta = as_double(value);
        } else if (key == "seed") {
            seed = as_size(value);
        } else if (key == "normalize") {
            normalize = as_bool(value);
        } else if (key == "ground_truth") {
            ground_truth = value;
        } else if (key == "rollout.horizon") {
            rollouts.horizon = as_size(value);
        } else if (key == "rollout.n") {
            rollouts.n_rollouts = as_size(value);
        } else if (key == "rollout.tail_tolerance") {
            rollouts.tail_tolerance = as_double(value);
        } else if (key == "eval_states") {
            eval_states = as_size(value);
        } else if (key == "record_timing") {
            record_timing = as_bool(value);
        } else if (key == "out") {
            output = value;
        } else {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }

    /// dict.* keys override the defaults of the configured env, wherever
    /// they appear in the file.
    static ExperimentConfig parse(std::istream& is)
    {
        auto trim = [](const std::string& s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::vector<std::pair<std::string, std::string>> entries;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            if (trim(line).empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
            entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
            require(!entries.back().first.empty(), "config line " + std::to_string(lineno) + ": empty key");
        }
        ExperimentConfig c;
        for (const auto& [k, v] : entries)
            if (k == "env") c.env = v;
        c.dict = DictionaryConfig::default_for(c.env);
        for (const auto& [k, v] : entries) c.set(k, v);
        c.validate();
        return c;
    }

    static ExperimentConfig parse(const std::string& text)
    {
        std::istringstream is(text);
        return parse(is);
    }

    static ExperimentConfig load(const std::string& path)
    {
        std::ifstream is(path);
        if (!is) throw Error("cannot open config file '" + path + "'");
        return parse(is);
    }

    std::string to_text() const
    {
        std::ostringstream os;
        os.precision(17);
        os << "env = " << env << "\nsolver = " << solver << "\nbeta_grid = ";
        if (beta_grid.empty()) os << "auto";
        for (std::size_t i = 0; i < beta_grid.size(); ++i) os << (i ? "," : "") << beta_grid[i];
        os << "\nbeta_min = " << auto_beta_min << "\nbeta_count = " << auto_beta_count << "\nn_samples = " << n_samples
           << "\nn_trials = " << n_trials << "\ndoubled = " << (doubled ? "true" : "false") << "\neta = " << eta
           << "\nseed = " << seed << "\nnormalize = " << (normalize ? "true" : "false") << "\nground_truth = " << ground_truth
           << "\nrollout.horizon = " << rollouts.horizon << "\nrollout.n = " << rollouts.n_rollouts
           << "\nrollout.tail_tolerance = " << rollouts.tail_tolerance << "\neval_states = " << eval_states
           << "\nrecord_timing = " << (record_timing ? "true" : "false") << "\n";
        if (!output.empty()) os << "out = " << output << "\n";
        os << dict.to_text();
        return os.str();
    }
};

// ---------------------------------------------------------------------------
// Sweep results

struct SweepRow {
    std::string solver;
    double beta = 0.0;
    std::size_t trial = 0;
    double rmse = 0.0; // NaN marks an unstable (degenerate) solve
    std::size_t n_features = 0;
    double wall_time_ms = 0.0;
    std::uint64_t seed = 0;

    bool unstable() const { return std::isnan(rmse); }
};

inline bool operator==(const SweepRow& a, const SweepRow& b)
{
    auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
    return a.solver == b.solver && a.beta == b.beta && a.trial == b.trial && same(a.rmse, b.rmse) &&
           a.n_features == b.n_features && a.wall_time_ms == b.wall_time_ms && a.seed == b.seed;
}

struct SweepResult {
    std::vector<SweepRow> rows; // beta descending, then trial ascending
    /// Invariant checks that failed during the sweep (empty when all held).
    std::vector<std::string> violations;
};

/// Greatest correlation among inactive, non-zero features for the solver's
/// own residual. Used to audit the stopping contract of every row.
inline double max_inactive_correlation(const std::string& solver, const FeatureData& data, const Vector& w, bool doubled)
{
    const Vector c = solver == "omp-td" ? td_correlations(data, w) : brm_correlations(data, w, solver == "omp-brm" && doubled);
    double worst = 0.0;
    for (Index i = 0; i < data.k(); ++i)
        if (w(i) == 0.0 && !data.zero_column[static_cast<std::size_t>(i)]) worst = std::max(worst, c(i));
    return worst;
}

struct GroundTruth {
    std::vector<State> states;
    Vector values;
};

inline GroundTruth ground_truth_for(const ExperimentConfig& config, const GenerativeEnv& env)
{
    GroundTruth gt;
    if (env.discrete() && config.ground_truth == "exact") {
        const ValueVector v = exact_values(*env.exact_model());
        gt.states = v.states;
        gt.values = v.values;
        return gt;
    }
    Rng rng(derive_seed(config.seed, 0x5eed0001));
    for (std::size_t i = 0; i < config.eval_states; ++i) gt.states.push_back(env.draw_start(rng));
    gt.values = rollout_values(env, gt.states, config.rollouts, env.discount(), derive_seed(config.seed, 0x5eed0002)).values.values;
    return gt;
}

/// Runs the configured solver across beta_grid for n_trials independent
/// sample sets. Greedy solvers are run once per trial down to the smallest
/// beta and truncated for the larger ones; lasso warm-starts down the grid.
/// Degenerate solves become NaN rows instead of aborting the sweep.
inline SweepResult run_sweep(const ExperimentConfig& config)
{
    config.validate();
    const EnvPtr env = make_env(config.env);
    const DictionaryPtr dict = config.dict.build(*env);
    const GroundTruth truth = ground_truth_for(config, *env);
    Matrix eval_features(static_cast<Index>(truth.states.size()), dict->k());
    for (std::size_t i = 0; i < truth.states.size(); ++i)
        eval_features.row(static_cast<Index>(i)) = dict->evaluate(truth.states[i]).transpose();

    const bool greedy = config.solver == "omp-td" || config.solver == "omp-brm";
    RegularizedSolveConfig solve_cfg;
    solve_cfg.eta = config.eta;

    auto trial_data = [&](std::size_t t) {
        const std::uint64_t s = derive_seed(config.seed, t + 1);
        return std::make_pair(assemble(*dict, sample_transitions(*env, config.n_samples, s, config.doubled), env->discount(),
                                       config.normalize),
                              s);
    };

    std::vector<double> grid = config.beta_grid;
    std::vector<std::vector<SweepRow>> by_beta;
    SweepResult result;

    for (std::size_t t = 0; t < config.n_trials; ++t) {
        auto [data, trial_seed] = trial_data(t);
        if (config.doubled) require(data.doubled(), "sweep: doubled samples missing");
        if (grid.empty()) {
            const Vector c0 = config.solver == "omp-td" ? td_correlations(data, Vector::Zero(data.k()))
                                                         : brm_correlations(data, Vector::Zero(data.k()),
                                                                            config.solver == "omp-brm" && config.doubled);
            double top = 0.0;
            for (Index i = 0; i < data.k(); ++i)
                if (!data.zero_column[static_cast<std::size_t>(i)]) top = std::max(top, c0(i));
            grid = ExperimentConfig::log_grid(config.auto_beta_min, std::max(top, config.auto_beta_min), config.auto_beta_count);
        }
        if (by_beta.empty()) by_beta.resize(grid.size());

        auto row = [&](std::size_t g, const Vector* w, std::size_t n_features, double ms) {
            SweepRow r;
            r.solver = config.solver;
            r.beta = grid[g];
            r.trial = t;
            r.seed = trial_seed;
            r.n_features = n_features;
            r.wall_time_ms = config.record_timing ? ms : 0.0;
            r.rmse = w ? rmse(eval_features * data.scales.cwiseProduct(*w), truth.values)
                       : std::numeric_limits<double>::quiet_NaN();
            by_beta[g].push_back(r);
        };
        auto audit = [&](std::size_t g, const SolverResult& res) {
            const double worst = max_inactive_correlation(config.solver, data, res.w, config.doubled);
            if (worst > grid[g] + 1e-9) {
                std::ostringstream os;
                os << "trial " << t << " beta " << grid[g] << ": inactive correlation " << worst << " exceeds beta";
                result.violations.push_back(os.str());
            }
        };

        if (greedy) {
            const GreedyPath path = config.solver == "omp-td" ? omp_td_path(data, grid.back(), solve_cfg)
                                                              : omp_brm_path(data, grid.back(), config.doubled, solve_cfg);
            for (std::size_t g = 0; g < grid.size(); ++g) {
                try {
                    const SolverResult res = truncate(path, grid[g]);
                    audit(g, res);
                    row(g, &res.w, res.active.size(), 1e3 * res.wall_time.count());
                } catch (const DegenerateSystemError&) {
                    row(g, nullptr, path.steps.size(), 1e3 * path.total.count());
                }
            }
        } else if (config.solver == "lasso-brm") {
            const auto results = lasso_brm(data, grid, config.eta);
            for (std::size_t g = 0; g < grid.size(); ++g) {
                const auto& res = results[g];
                audit(g, res);
                row(g, &res.w, res.active.size(), 1e3 * res.wall_time.count());
            }
        } else { // lstd-full
            std::vector<Index> cols;
            for (Index i = 0; i < data.k(); ++i)
                if (!data.zero_column[static_cast<std::size_t>(i)]) cols.push_back(i);
            const auto t0 = std::chrono::steady_clock::now();
            try {
                const Vector w = detail::scatter(cols, lstd_solve(data, cols, config.eta), data.k());
                const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                for (std::size_t g = 0; g < grid.size(); ++g) row(g, &w, cols.size(), ms);
            } catch (const DegenerateSystemError&) {
                for (std::size_t g = 0; g < grid.size(); ++g) row(g, nullptr, cols.size(), 0.0);
            }
        }
    }

    for (auto& rows : by_beta)
        for (auto& r : rows) result.rows.push_back(std::move(r));

    if (greedy) {
        // grid is descending, so the mean support size must not shrink along it
        double prev = 0.0;
        for (std::size_t g = 0; g < by_beta.size(); ++g) {
            double mean = 0.0;
            for (std::size_t t = 0; t < config.n_trials; ++t)
                mean += static_cast<double>(result.rows[g * config.n_trials + t].n_features);
            mean /= static_cast<double>(config.n_trials);
            if (mean < prev) result.violations.push_back("mean feature count shrinks at beta " + std::to_string(grid[g]));
            prev = std::max(prev, mean);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* csv_header = "solver,beta,trial,rmse,n_features,wall_time_ms,seed";

namespace detail {
inline std::string format_double(double x)
{
    if (std::isnan(x)) return "nan";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s)
{
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double x = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw Error("csv: bad number '" + s + "'");
    return x;
}

template <class T>
T parse_unsigned(const std::string& s)
{
    T x = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw Error("csv: bad integer '" + s + "'");
    return x;
}
} // namespace detail

inline void write_csv(std::ostream& os, const SweepResult& result)
{
    os << csv_header << '\n';
    for (const auto& r : result.rows)
        os << r.solver << ',' << detail::format_double(r.beta) << ',' << r.trial << ',' << detail::format_double(r.rmse) << ','
           << r.n_features << ',' << detail::format_double(r.wall_time_ms) << ',' << r.seed << '\n';
}

inline void write_csv(const SweepResult& result, const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_csv(os, result);
    os.flush();
    if (!os) throw Error("write to '" + path + "' failed");
}

inline SweepResult read_csv(std::istream& is)
{
    SweepResult result;
    std::string line;
    if (!std::getline(is, line) || line != csv_header) throw Error("csv: missing or unexpected header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = DictionaryConfig::split(line, ',');
        if (f.size() != 7) throw Error("csv: expected 7 fields in '" + line + "'");
        SweepRow r;
        r.solver = f[0];
        r.beta = detail::parse_double(f[1]);
        r.trial = detail::parse_unsigned<std::size_t>(f[2]);
        r.rmse = detail::parse_double(f[3]);
        r.n_features = detail::parse_unsigned<std::size_t>(f[4]);
        r.wall_time_ms = detail::parse_double(f[5]);
        r.seed = detail::parse_unsigned<std::uint64_t>(f[6]);
        result.rows.push_back(std::move(r));
    }
    return result;
}

inline SweepResult read_csv(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_csv(is);
}

} // namespace sprl
