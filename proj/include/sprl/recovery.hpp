#pragma once

#include "sprl/core.hpp"
#include "sprl/env.hpp"
#include "sprl/features.hpp"
#include "sprl/mrp.hpp"
#include "sprl/solvers.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace sprl {

/// Exact recovery coefficient max_{i not in opt} || X_opt^+ x_i ||_1.
/// OMP with beta = 0 recovers a target lying in span(X_opt) whenever this
/// is below 1.
inline double erc_value(const Matrix& X, const std::vector<Index>& opt)
{
    detail::check_columns(opt, X.cols(), "erc_value");
    const Matrix Xopt = detail::gather(X, opt);
    Eigen::ColPivHouseholderQR<Matrix> qr(Xopt);
    qr.setThreshold(1e-12);
    if (qr.rank() < Xopt.cols()) throw DegenerateSystemError("erc_value: X_opt is rank deficient");
    std::vector<bool> in_opt(static_cast<std::size_t>(X.cols()), false);
    for (Index i : opt) in_opt[static_cast<std::size_t>(i)] = true;
    double worst = 0.0;
    for (Index i = 0; i < X.cols(); ++i) {
        if (in_opt[static_cast<std::size_t>(i)]) continue;
        const Vector z = qr.solve(X.col(i));
        worst = std::max(worst, z.lpNorm<1>());
    }
    return worst;
}

/// Dictionary over the states of a discrete MRP whose first |opt| columns
/// reconstruct V* exactly.
struct RecoveryBasis {
    Matrix Phi; // n_states x k
    std::vector<Index> opt;
    double erc = 0.0; // erc_value of Phi - gamma P Phi at opt

    Index k() const { return Phi.cols(); }
};

inline Matrix bellman_design(const DiscreteMrp& mrp, const Matrix& Phi) { return Phi - mrp.gamma() * (mrp.P() * Phi); }

struct RecoveryBasisOptions {
    /// Minimum |cosine| between each of the two seed features and V*.
    double correlation_threshold = 0.5;
    std::size_t max_seed_draws = 10'000'000;
    /// Which survivors to keep when more than k_total - 3 pass the filter:
    /// the smallest recovery coefficients (widest margin) or the first drawn.
    enum class Trim { smallest_coefficient, first_drawn } trim = Trim::smallest_coefficient;
};

/// Builds a basis with opt = {0, 1, 2}: two random features well aligned with
/// V*, the normalized residual of V* on those two, then k_total - 3 random
/// Gaussian features kept only if each alone leaves the exact recovery
/// coefficient of X = Phi - gamma P Phi below 1. Every column has unit
/// root-mean-square over states.
inline RecoveryBasis generate_recovery_basis(const DiscreteMrp& mrp, Index k_total, Index k_candidates, std::uint64_t seed,
                                             const RecoveryBasisOptions& options = {})
{
    require(k_total >= 3 && k_candidates >= k_total, "recovery basis: need k_candidates >= k_total >= 3");
    const Index n = mrp.n_states();
    const Vector v_star = exact_values(mrp).values;
    require(v_star.norm() > 0.0, "recovery basis: V* is identically zero");
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double rms_norm = std::sqrt(static_cast<double>(n));
    auto draw = [&]() {
        Vector f(n);
        for (Index i = 0; i < n; ++i) f(i) = normal(rng);
        return Vector(f * (rms_norm / f.norm()));
    };
    auto draw_aligned = [&]() {
        for (std::size_t t = 0; t < options.max_seed_draws; ++t) {
            Vector f = draw();
            if (std::abs(f.dot(v_star)) / (f.norm() * v_star.norm()) >= options.correlation_threshold) return f;
        }
        throw Error("recovery basis: no feature reached the V* correlation threshold");
    };

    Matrix seedcols(n, 3);
    seedcols.col(0) = draw_aligned();
    seedcols.col(1) = draw_aligned();
    const Vector coef = seedcols.leftCols(2).colPivHouseholderQr().solve(v_star);
    Vector resid = v_star - seedcols.leftCols(2) * coef;
    require(resid.norm() > 1e-12 * v_star.norm(), "recovery basis: V* already spanned by two features");
    seedcols.col(2) = resid * (rms_norm / resid.norm());

    const Matrix Xopt = bellman_design(mrp, seedcols);
    Eigen::ColPivHouseholderQR<Matrix> qr(Xopt);
    qr.setThreshold(1e-12);
    if (qr.rank() < 3) throw DegenerateSystemError("recovery basis: designed features are degenerate");

    const Index wanted = k_total - 3;
    std::vector<std::pair<double, Vector>> survivors;
    for (Index c = 0; c < k_candidates - 3; ++c) {
        Vector f = draw();
        const Vector x = f - mrp.gamma() * (mrp.P() * f);
        const double coef = qr.solve(x).lpNorm<1>();
        if (coef < 1.0) survivors.emplace_back(coef, std::move(f));
    }
    if (static_cast<Index>(survivors.size()) < wanted)
        throw Error("recovery basis: only " + std::to_string(survivors.size()) + " of " + std::to_string(k_candidates - 3) +
                    " candidates satisfy the recovery condition; need " + std::to_string(wanted));
    if (options.trim == RecoveryBasisOptions::Trim::smallest_coefficient)
        std::stable_sort(survivors.begin(), survivors.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    RecoveryBasis basis;
    basis.Phi.resize(n, k_total);
    basis.Phi.leftCols(3) = seedcols;
    for (Index j = 0; j < wanted; ++j) basis.Phi.col(3 + j) = survivors[static_cast<std::size_t>(j)].second;
    basis.opt = {0, 1, 2};
    basis.erc = erc_value(bellman_design(mrp, basis.Phi), basis.opt);
    if (!(basis.erc < 1.0)) throw Error("recovery basis: final recovery coefficient " + std::to_string(basis.erc) + " >= 1");
    return basis;
}

// ---------------------------------------------------------------------------
// V* = Phi_opt w_opt implies R = (Phi - gamma P Phi)_opt w_opt

struct Lemma1Check {
    Vector w_opt;
    double span_residual = 0.0;   // || Phi_opt w_opt - V* ||
    double reward_residual = 0.0; // || R - (Phi - gamma P Phi)_opt w_opt ||
    bool holds = false;
};

inline Lemma1Check lemma1_check(const DiscreteMrp& mrp, const Matrix& Phi, const std::vector<Index>& opt, double tol = 1e-8)
{
    detail::check_columns(opt, Phi.cols(), "check_lemma1");
    require(Phi.rows() == mrp.n_states(), "check_lemma1: Phi must have one row per state");
    const Vector v_star = exact_values(mrp).values;
    const Matrix Popt = detail::gather(Phi, opt);
    Eigen::ColPivHouseholderQR<Matrix> qr(Popt);
    qr.setThreshold(1e-12);
    Lemma1Check out;
    out.w_opt = qr.solve(v_star);
    out.span_residual = (Popt * out.w_opt - v_star).norm();
    if (!(out.span_residual < tol)) throw std::invalid_argument("check_lemma1: V* is not in span(Phi_opt)");
    const Matrix Xopt = Popt - mrp.gamma() * (mrp.P() * Popt);
    out.reward_residual = (mrp.R() - Xopt * out.w_opt).norm();
    out.holds = out.reward_residual < tol;
    return out;
}

inline bool check_lemma1(const DiscreteMrp& mrp, const Matrix& Phi, const std::vector<Index>& opt)
{
    return lemma1_check(mrp, Phi, opt).holds;
}

// ---------------------------------------------------------------------------
// Recovery experiments

enum class RecoverySolver { brm, td };

struct RecoveryMode {
    bool sampled = false;
    std::size_t n_samples = 200;
    std::uint64_t seed = 0;

    static RecoveryMode exact() { return {}; }
    static RecoveryMode sampled_from(std::size_t n, std::uint64_t seed) { return {true, n, seed}; }
};

struct RecoveryReport {
    std::vector<Index> selection;      // full greedy order
    bool opt_first = false;            // opt occupies the first |opt| selections
    std::optional<Index> iterations_to_cover_opt;
    bool opt_recovered = false;        // final active set equals opt
    double value_error = 0.0;          // || Phi w - V* || over all states
    Vector w;
    StopReason stop = StopReason::threshold;
};

inline RecoveryReport verify_sparse_recovery(const DiscreteMrp& mrp, const RecoveryBasis& basis, const RecoveryMode& mode,
                                             RecoverySolver solver, double beta, const RegularizedSolveConfig& config)
{
    FeatureData data;
    if (mode.sampled) {
        const DiscreteEnv env(mrp, "recovery");
        const TableDictionary dict(basis.Phi);
        data = assemble(dict, sample_transitions(env, mode.n_samples, mode.seed, false), mrp.gamma(), false);
    } else {
        data = exact_feature_data(mrp, basis.Phi);
    }
    const GreedyPath path = solver == RecoverySolver::brm ? omp_brm_path(data, beta, false, config) : omp_td_path(data, beta, config);

    RecoveryReport rep;
    rep.stop = path.stop;
    std::vector<bool> in_opt(static_cast<std::size_t>(basis.k()), false);
    for (Index i : basis.opt) in_opt[static_cast<std::size_t>(i)] = true;
    std::size_t covered = 0;
    for (std::size_t t = 0; t < path.steps.size(); ++t) {
        const Index j = path.steps[t].feature;
        rep.selection.push_back(j);
        if (in_opt[static_cast<std::size_t>(j)] && ++covered == basis.opt.size())
            rep.iterations_to_cover_opt = static_cast<Index>(t + 1);
    }
    rep.opt_first = rep.selection.size() >= basis.opt.size();
    for (std::size_t t = 0; t < basis.opt.size() && rep.opt_first; ++t)
        rep.opt_first = in_opt[static_cast<std::size_t>(rep.selection[t])];
    rep.opt_recovered = rep.opt_first && rep.selection.size() == basis.opt.size();

    rep.w = Vector::Zero(basis.k());
    if (!path.steps.empty()) {
        const Vector& wa = path.steps.back().weights;
        for (std::size_t t = 0; t < path.steps.size(); ++t) rep.w(path.steps[t].feature) = wa(static_cast<Index>(t));
    }
    rep.value_error = (basis.Phi * rep.w - exact_values(mrp).values).norm();
    return rep;
}

// ---------------------------------------------------------------------------
// Flat text serialization:
//   sprl-recovery-basis 1
//   <n_states> <k> <|opt|>
//   <opt indices, 0-based>
//   <erc>
//   <n_states rows of k values>

namespace detail {
inline std::string shortest(double x)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}
} // namespace detail

inline void write_recovery_basis(std::ostream& os, const RecoveryBasis& b)
{
    os << "sprl-recovery-basis 1\n" << b.Phi.rows() << ' ' << b.Phi.cols() << ' ' << b.opt.size() << '\n';
    for (std::size_t i = 0; i < b.opt.size(); ++i) os << (i ? " " : "") << b.opt[i];
    os << '\n' << detail::shortest(b.erc) << '\n';
    for (Index r = 0; r < b.Phi.rows(); ++r) {
        for (Index c = 0; c < b.Phi.cols(); ++c) os << (c ? " " : "") << detail::shortest(b.Phi(r, c));
        os << '\n';
    }
}

inline RecoveryBasis read_recovery_basis(std::istream& is)
{
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "sprl-recovery-basis" || version != 1) throw Error("recovery basis file: bad header");
    Index rows = 0, cols = 0;
    std::size_t m = 0;
    is >> rows >> cols >> m;
    if (!is || rows < 1 || cols < 1) throw Error("recovery basis file: bad dimensions");
    RecoveryBasis b;
    b.opt.resize(m);
    for (auto& i : b.opt) is >> i;
    std::string tok;
    auto read_double = [&]() {
        if (!(is >> tok)) throw Error("recovery basis file: truncated");
        double x = 0.0;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) throw Error("recovery basis file: bad number '" + tok + "'");
        return x;
    };
    b.erc = read_double();
    b.Phi.resize(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) b.Phi(r, c) = read_double();
    detail::check_columns(b.opt, cols, "recovery basis file");
    return b;
}

inline void save_recovery_basis(const std::string& path, const RecoveryBasis& b)
{
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_recovery_basis(os, b);
    if (!os) throw Error("write to '" + path + "' failed");
}

inline RecoveryBasis load_recovery_basis(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_recovery_basis(is);
}

} // namespace sprl
