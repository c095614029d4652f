#pragma once

#include "sprl/core.hpp"
#include "sprl/features.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace sprl {

struct RegularizedSolveConfig {
    /// L2 term; normal equations get n * eta * I added.
    double eta = 0.01;
    /// Cap on greedy iterations; unset means min(n, k).
    std::optional<Index> max_iterations;
    /// Correlations at or below zero_tolerance times the initial maximum
    /// correlation count as zero (round-off after an exact fit).
    double zero_tolerance = 1e-11;
};

enum class StopReason {
    threshold,     // best remaining correlation <= beta
    exhausted,     // every feature is active
    iteration_cap, // max_iterations reached
    degenerate,    // the next active-set system was singular
    converged,     // lasso coordinate descent met its tolerance
    not_converged, // lasso hit its pass cap
    direct,        // closed-form solve on a fixed column set
};

inline std::string to_string(StopReason r)
{
    switch (r) {
    case StopReason::threshold: return "threshold";
    case StopReason::exhausted: return "exhausted";
    case StopReason::iteration_cap: return "iteration_cap";
    case StopReason::degenerate: return "degenerate";
    case StopReason::converged: return "converged";
    case StopReason::not_converged: return "not_converged";
    case StopReason::direct: return "direct";
    }
    return "unknown";
}

struct TraceRecord {
    Index feature;
    double correlation;
    double residual_norm; // after re-solving with the feature added
};

struct SolverResult {
    Vector w;                  // length k, zero outside `active`
    std::vector<Index> active; // selection order
    std::vector<TraceRecord> trace;
    std::chrono::duration<double> wall_time{0};
    double beta = 0.0;
    StopReason stop = StopReason::threshold;
    /// Largest correlation among inactive features when the solver stopped.
    double final_correlation = 0.0;
    /// Coordinate-descent passes (lasso only).
    std::size_t passes = 0;
};

// ---------------------------------------------------------------------------
// Dense helpers

namespace detail {

inline constexpr double min_rcond = 1e-14;

inline Matrix gather(const Matrix& X, const std::vector<Index>& cols)
{
    Matrix out(X.rows(), static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Index>(i)) = X.col(cols[i]);
    return out;
}

/// LU solve with a conditioning check and one refinement step.
inline Vector solve_checked(const Matrix& A, const Vector& b, const char* what)
{
    Eigen::PartialPivLU<Matrix> lu(A);
    if (!(lu.rcond() > min_rcond)) throw DegenerateSystemError(std::string(what) + ": singular system");
    Vector x = lu.solve(b);
    x += lu.solve(b - A * x);
    if (!x.allFinite()) throw DegenerateSystemError(std::string(what) + ": non-finite solution");
    return x;
}

inline void check_columns(const std::vector<Index>& cols, Index k, const char* what)
{
    require(!cols.empty(), std::string(what) + ": empty column set");
    std::vector<Index> sorted = cols;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), std::string(what) + ": duplicate columns");
    require(sorted.front() >= 0 && sorted.back() < k, std::string(what) + ": column out of range");
}

inline Vector scatter(const std::vector<Index>& cols, const Vector& w_active, Index k)
{
    Vector w = Vector::Zero(k);
    for (std::size_t i = 0; i < cols.size(); ++i) w(cols[i]) = w_active(static_cast<Index>(i));
    return w;
}

} // namespace detail

/// Ridge-stabilized least squares on a column subset:
/// (X_I^T X_I + n eta I) w = X_I^T y. With eta = 0 the solve goes through a
/// rank-revealing QR of X_I and rank deficiency raises DegenerateSystemError.
inline Vector least_squares(const Matrix& X, const Vector& y, const std::vector<Index>& columns, double eta)
{
    detail::check_columns(columns, X.cols(), "least_squares");
    require(y.size() == X.rows(), "least_squares: target length mismatch");
    require(eta >= 0.0, "least_squares: eta must be non-negative");
    const Matrix XI = detail::gather(X, columns);
    if (eta == 0.0) {
        Eigen::ColPivHouseholderQR<Matrix> qr(XI);
        qr.setThreshold(1e-12);
        if (qr.rank() < XI.cols()) throw DegenerateSystemError("least_squares: rank-deficient column set");
        return qr.solve(y);
    }
    const double n = static_cast<double>(X.rows());
    Matrix G = XI.transpose() * XI;
    G.diagonal().array() += n * eta;
    return detail::solve_checked(G, XI.transpose() * y, "least_squares");
}

/// BRM design matrix Phi - gamma * next.
inline Matrix brm_design(const Matrix& Phi, const Matrix& next, double gamma) { return Phi - gamma * next; }

/// Sampled LSTD fixed point on a column subset:
/// (Phi_I^T Phi_I - gamma Phi_I^T Phi'_I + n eta I) w = Phi_I^T R.
inline Vector lstd_solve(const FeatureData& data, const std::vector<Index>& columns, double eta)
{
    detail::check_columns(columns, data.k(), "lstd_solve");
    require(eta >= 0.0, "lstd_solve: eta must be non-negative");
    const Matrix P = detail::gather(data.Phi, columns);
    const Matrix Pn = detail::gather(data.PhiNext, columns);
    Matrix A = P.transpose() * (P - data.gamma * Pn);
    A.diagonal().array() += static_cast<double>(data.n()) * eta;
    return detail::solve_checked(A, P.transpose() * data.R, "lstd_solve");
}

/// Bellman residual minimization on a column subset. Single-sample mode is
/// least squares with design Phi - gamma Phi'. Doubled mode uses the
/// symmetrized cross moment of the two independent designs
/// X1 = Phi - gamma Phi'' and X2 = Phi - gamma Phi'.
inline Vector brm_solve(const FeatureData& data, const std::vector<Index>& columns, bool doubled, double eta)
{
    detail::check_columns(columns, data.k(), "brm_solve");
    if (!doubled) return least_squares(brm_design(data.Phi, data.PhiNext, data.gamma), data.R, columns, eta);
    if (!data.doubled()) throw std::invalid_argument("brm_solve: doubled mode needs second next-state samples");
    require(eta >= 0.0, "brm_solve: eta must be non-negative");
    const Matrix P = detail::gather(data.Phi, columns);
    const Matrix X1 = P - data.gamma * detail::gather(*data.PhiNext2, columns);
    const Matrix X2 = P - data.gamma * detail::gather(data.PhiNext, columns);
    const Matrix cross = X1.transpose() * X2;
    Matrix A = 0.5 * (cross + cross.transpose());
    A.diagonal().array() += static_cast<double>(data.n()) * eta;
    return detail::solve_checked(A, 0.5 * (X1 + X2).transpose() * data.R, "brm_solve");
}

// ---------------------------------------------------------------------------
// Correlation vectors (what each greedy solver maximizes)

/// |X1^T (R - X2 w)| / n with X2 = Phi - gamma Phi' and X1 = X2 unless doubled.
inline Vector brm_correlations(const FeatureData& data, const Vector& w, bool doubled)
{
    const Matrix X2 = brm_design(data.Phi, data.PhiNext, data.gamma);
    const Vector r = data.R - X2 * w;
    if (!doubled) return (X2.transpose() * r).cwiseAbs() / static_cast<double>(data.n());
    require(data.doubled(), "brm_correlations: doubled mode needs second next-state samples");
    const Matrix X1 = brm_design(data.Phi, *data.PhiNext2, data.gamma);
    return (X1.transpose() * r).cwiseAbs() / static_cast<double>(data.n());
}

/// |Phi^T (R + gamma Phi' w - Phi w)| / n
inline Vector td_correlations(const FeatureData& data, const Vector& w)
{
    const Vector r = data.R + data.gamma * (data.PhiNext * w) - data.Phi * w;
    return (data.Phi.transpose() * r).cwiseAbs() / static_cast<double>(data.n());
}

// ---------------------------------------------------------------------------
// Greedy engine

/// One greedy selection problem. Correlations are |select^T (target - design_I w)| / n;
/// the active-set system has entries A_ij = left_i . right_j (symmetrized when
/// `symmetrize`) plus n eta on the diagonal, right-hand side rhs_I.
struct GreedyProblem {
    const Matrix* select = nullptr;
    const Matrix* design = nullptr;
    const Vector* target = nullptr;
    const Matrix* left = nullptr;
    const Matrix* right = nullptr;
    bool symmetrize = false;
    Vector rhs;
    std::vector<bool> excluded;
};

struct PathStep {
    Index feature;
    double correlation;
    Vector weights; // active-set weights after adding `feature`
    double residual_norm;
    std::chrono::duration<double> checked_at; // when `correlation` was evaluated
};

/// Full greedy path run down to a minimum threshold; any larger threshold's
/// solution is a prefix of it.
struct GreedyPath {
    Index k = 0;
    double beta = 0.0;
    double floor = 0.0;
    double initial_residual_norm = 0.0;
    std::vector<PathStep> steps;
    StopReason stop = StopReason::threshold;
    double final_correlation = 0.0;
    std::chrono::duration<double> total{0};
};

namespace detail {

class BorderedInverse {
public:
    BorderedInverse(Index n, Index capacity) : n_(n), inv_(capacity, capacity), A_(capacity, capacity) {}

    Index size() const { return m_; }

    /// Extends A by column u, row v and corner d. Returns false if the Schur
    /// complement vanishes relative to `scale`.
    bool extend(const Vector& u, const Vector& v, double d, double scale)
    {
        const Index m = m_;
        if (m == 0) {
            if (!(std::abs(d) > 1e-13 * scale)) return false;
            inv_(0, 0) = 1.0 / d;
            A_(0, 0) = d;
            m_ = 1;
            return true;
        }
        const auto Ainv = inv_.topLeftCorner(m, m);
        const Vector Au = Ainv * u;
        const Vector vA = Ainv.transpose() * v;
        const double s = d - v.dot(Au);
        if (!(std::abs(s) > 1e-13 * scale) || !std::isfinite(s)) return false;
        inv_.topLeftCorner(m, m).noalias() += (Au * vA.transpose()) / s;
        inv_.block(0, m, m, 1) = -Au / s;
        inv_.block(m, 0, 1, m) = -vA.transpose() / s;
        inv_(m, m) = 1.0 / s;
        A_.block(0, m, m, 1) = u;
        A_.block(m, 0, 1, m) = v.transpose();
        A_(m, m) = d;
        m_ = m + 1;
        return true;
    }

    Vector solve(const Vector& b) const
    {
        const auto Ainv = inv_.topLeftCorner(m_, m_);
        Vector x = Ainv * b;
        x += Ainv * (b - A_.topLeftCorner(m_, m_) * x);
        return x;
    }

private:
    Index n_;
    Index m_ = 0;
    Matrix inv_;
    Matrix A_;
};

inline Index default_iterations(const RegularizedSolveConfig& c, Index n, Index k)
{
    const Index cap = c.max_iterations.value_or(std::min(n, k));
    require(cap >= 0, "max_iterations must be non-negative");
    return std::min(cap, k);
}

} // namespace detail

inline GreedyPath run_greedy_path(const GreedyProblem& p, double beta, const RegularizedSolveConfig& config)
{
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    require(beta >= 0.0 && std::isfinite(beta), "greedy: beta must be finite and non-negative");
    require(config.eta >= 0.0, "greedy: eta must be non-negative");
    const Matrix& C = *p.select;
    const Matrix& D = *p.design;
    const Matrix& L = *p.left;
    const Matrix& Rt = *p.right;
    const Vector& y = *p.target;
    const Index n = C.rows();
    const Index k = C.cols();
    const double nd = static_cast<double>(n);
    const Index cap = detail::default_iterations(config, n, k);

    GreedyPath path;
    path.k = k;
    path.beta = beta;
    path.initial_residual_norm = y.norm();

    std::vector<Index> active;
    std::vector<bool> is_active(static_cast<std::size_t>(k), false);
    Matrix D_act(n, cap), L_act(n, cap), R_act(n, cap);
    detail::BorderedInverse system(n, std::max<Index>(cap, 1));
    Vector rhs_act(0);
    Vector w_act(0);
    Vector r = y;

    bool first = true;
    for (;;) {
        Vector c = (C.transpose() * r).cwiseAbs() / nd;
        for (Index i = 0; i < k; ++i)
            if (p.excluded[static_cast<std::size_t>(i)]) c(i) = 0.0;
        Index j = -1;
        double cj = -1.0;
        for (Index i = 0; i < k; ++i) {
            if (is_active[static_cast<std::size_t>(i)]) continue;
            if (c(i) > cj) {
                cj = c(i);
                j = i;
            }
        }
        if (first) {
            path.floor = config.zero_tolerance * std::max(cj, 0.0);
            first = false;
        }
        const auto now = clock::now() - t0;
        if (j < 0) {
            path.stop = StopReason::exhausted;
            path.final_correlation = 0.0;
            break;
        }
        if (!(cj > std::max(beta, path.floor))) {
            path.stop = StopReason::threshold;
            path.final_correlation = cj;
            break;
        }
        const Index m = static_cast<Index>(active.size());
        if (m >= cap) {
            path.stop = StopReason::iteration_cap;
            path.final_correlation = cj;
            break;
        }

        // border the active-set system with feature j
        Vector u(m), v(m);
        if (m > 0) {
            u = L_act.leftCols(m).transpose() * Rt.col(j);
            v = R_act.leftCols(m).transpose() * L.col(j);
            if (p.symmetrize) {
                u = 0.5 * (u + v);
                v = u;
            }
        }
        const double d = L.col(j).dot(Rt.col(j)) + nd * config.eta;
        const double scale = L.col(j).norm() * Rt.col(j).norm() + nd * config.eta;
        if (!system.extend(u, v, d, scale)) {
            path.stop = StopReason::degenerate;
            path.final_correlation = cj;
            break;
        }
        active.push_back(j);
        is_active[static_cast<std::size_t>(j)] = true;
        D_act.col(m) = D.col(j);
        L_act.col(m) = L.col(j);
        R_act.col(m) = Rt.col(j);
        rhs_act.conservativeResize(m + 1);
        rhs_act(m) = p.rhs(j);
        w_act = system.solve(rhs_act);
        if (!w_act.allFinite()) {
            path.stop = StopReason::degenerate;
            path.final_correlation = cj;
            break;
        }
        r = y - D_act.leftCols(m + 1) * w_act;
        path.steps.push_back({j, cj, w_act, r.norm(), now});
    }
    path.total = clock::now() - t0;
    return path;
}

/// Solution of a greedy path at threshold beta (>= the path's own beta).
/// Throws DegenerateSystemError when reaching beta would have required the
/// singular step the path stopped at.
inline SolverResult truncate(const GreedyPath& path, double beta)
{
    require(beta >= path.beta, "truncate: beta below the path's minimum threshold");
    const double thr = std::max(beta, path.floor);
    SolverResult res;
    res.beta = beta;
    std::size_t m = path.steps.size();
    for (std::size_t t = 0; t < path.steps.size(); ++t) {
        if (!(path.steps[t].correlation > thr)) {
            m = t;
            break;
        }
    }
    if (m < path.steps.size()) {
        res.stop = StopReason::threshold;
        res.final_correlation = path.steps[m].correlation;
        res.wall_time = path.steps[m].checked_at;
    } else {
        if (path.stop == StopReason::degenerate && path.final_correlation > thr)
            throw DegenerateSystemError("greedy solver: active-set system became singular");
        res.stop = path.final_correlation <= thr && path.stop != StopReason::exhausted ? StopReason::threshold : path.stop;
        res.final_correlation = path.final_correlation;
        res.wall_time = path.total;
    }
    res.w = Vector::Zero(path.k);
    for (std::size_t t = 0; t < m; ++t) {
        res.active.push_back(path.steps[t].feature);
        res.trace.push_back({path.steps[t].feature, path.steps[t].correlation, path.steps[t].residual_norm});
    }
    if (m > 0) {
        const Vector& w = path.steps[m - 1].weights;
        for (std::size_t t = 0; t < m; ++t) res.w(path.steps[t].feature) = w(static_cast<Index>(t));
    }
    return res;
}

// ---------------------------------------------------------------------------
// OMP variants

namespace detail {

struct OwnedProblem {
    Matrix a, b; // storage for derived designs
    GreedyProblem problem;
};

inline std::vector<bool> no_exclusions(Index k) { return std::vector<bool>(static_cast<std::size_t>(k), false); }

inline void check_finite(const FeatureData& data)
{
    require(data.n() >= 1 && data.k() >= 1, "solver: empty feature data");
    require(data.Phi.allFinite() && data.PhiNext.allFinite() && data.R.allFinite(), "solver: non-finite inputs");
    require(data.PhiNext.rows() == data.n() && data.PhiNext.cols() == data.k() && data.R.size() == data.n(),
            "solver: feature data dimension mismatch");
}

} // namespace detail

/// Orthogonal matching pursuit on design X and target y with correlations
/// |X^T (y - X w)| / n.
inline GreedyPath omp_path(const Matrix& X, const Vector& y, double beta, const RegularizedSolveConfig& config = {})
{
    require(X.rows() >= 1 && X.cols() >= 1, "omp: empty design matrix");
    require(y.size() == X.rows(), "omp: target length mismatch");
    require(X.allFinite() && y.allFinite(), "omp: non-finite inputs");
    GreedyProblem p{&X, &X, &y, &X, &X, false, X.transpose() * y, detail::no_exclusions(X.cols())};
    return run_greedy_path(p, beta, config);
}

inline SolverResult omp(const Matrix& X, const Vector& y, double beta, const RegularizedSolveConfig& config = {})
{
    return truncate(omp_path(X, y, beta, config), beta);
}

inline GreedyPath omp_brm_path(const FeatureData& data, double beta, bool doubled, const RegularizedSolveConfig& config = {})
{
    detail::check_finite(data);
    if (doubled && !data.doubled()) throw std::invalid_argument("omp_brm: doubled mode needs second next-state samples");
    const Matrix X2 = brm_design(data.Phi, data.PhiNext, data.gamma);
    if (!doubled) {
        GreedyProblem p{&X2, &X2, &data.R, &X2, &X2, false, X2.transpose() * data.R, data.zero_column};
        return run_greedy_path(p, beta, config);
    }
    const Matrix X1 = brm_design(data.Phi, *data.PhiNext2, data.gamma);
    GreedyProblem p{&X1, &X2, &data.R, &X1, &X2, true, 0.5 * ((X1 + X2).transpose() * data.R), data.zero_column};
    return run_greedy_path(p, beta, config);
}

/// OMP-BRM: greedy selection on the Bellman residual regression
/// (design Phi - gamma Phi', target R).
inline SolverResult omp_brm(const FeatureData& data, double beta, bool doubled, const RegularizedSolveConfig& config = {})
{
    return truncate(omp_brm_path(data, beta, doubled, config), beta);
}

inline GreedyPath omp_td_path(const FeatureData& data, double beta, const RegularizedSolveConfig& config = {})
{
    detail::check_finite(data);
    const Matrix X = brm_design(data.Phi, data.PhiNext, data.gamma);
    GreedyProblem p{&data.Phi, &X, &data.R, &data.Phi, &X, false, data.Phi.transpose() * data.R, data.zero_column};
    return run_greedy_path(p, beta, config);
}

/// OMP-TD: greedy selection on TD fixed-point residual correlations, each
/// active set re-solved with the closed-form LSTD system.
inline SolverResult omp_td(const FeatureData& data, double beta, const RegularizedSolveConfig& config = {})
{
    return truncate(omp_td_path(data, beta, config), beta);
}

// ---------------------------------------------------------------------------
// Lasso baseline on the BRM regression

struct LassoConfig {
    double tolerance = 1e-8;       // max coordinate change in a full pass
    std::size_t max_passes = 200000;
};

/// For each beta (descending), minimizes
///   (1/n) ||R - X w||^2 + beta ||w||_1 + eta ||w||^2,   X = Phi - gamma Phi',
/// by cyclic coordinate descent using covariance updates, warm-started from
/// the previous grid point. Between full sweeps the solver cycles over the
/// current nonzero coordinates only; convergence is always confirmed by a
/// full sweep.
inline std::vector<SolverResult> lasso_brm(const FeatureData& data, const std::vector<double>& beta_grid, double eta,
                                           const LassoConfig& config = {})
{
    using clock = std::chrono::steady_clock;
    detail::check_finite(data);
    require(eta >= 0.0, "lasso_brm: eta must be non-negative");
    require(!beta_grid.empty(), "lasso_brm: empty beta grid");
    for (std::size_t i = 0; i < beta_grid.size(); ++i) {
        require(beta_grid[i] >= 0.0 && std::isfinite(beta_grid[i]), "lasso_brm: beta must be finite and non-negative");
        require(i == 0 || beta_grid[i] <= beta_grid[i - 1], "lasso_brm: beta grid must be descending");
    }

    auto t_setup = clock::now();
    const Index k = data.k();
    const double nd = static_cast<double>(data.n());
    const Matrix X = brm_design(data.Phi, data.PhiNext, data.gamma);
    Matrix G(k, k);
    G.setZero();
    G.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose(), 1.0 / nd);
    G.triangularView<Eigen::Upper>() = G.transpose();
    const Vector b = X.transpose() * data.R / nd;
    std::vector<bool> usable(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i)
        usable[static_cast<std::size_t>(i)] = !data.zero_column[static_cast<std::size_t>(i)] && G(i, i) > 0.0;
    auto setup_time = clock::now() - t_setup;

    Vector w = Vector::Zero(k);
    Vector grad = b; // X^T (R - X w) / n
    std::vector<SolverResult> out;
    out.reserve(beta_grid.size());

    for (std::size_t g = 0; g < beta_grid.size(); ++g) {
        const auto t0 = clock::now();
        const double half = 0.5 * beta_grid[g];
        auto update = [&](Index i) {
            const double z = grad(i) + G(i, i) * w(i);
            double next = 0.0;
            if (z > half) next = (z - half) / (G(i, i) + eta);
            else if (z < -half) next = (z + half) / (G(i, i) + eta);
            const double delta = next - w(i);
            if (delta != 0.0) {
                grad.noalias() -= G.col(i) * delta;
                w(i) = next;
            }
            return std::abs(delta);
        };

        SolverResult res;
        res.beta = beta_grid[g];
        res.stop = StopReason::not_converged;
        std::size_t passes = 0;
        while (passes < config.max_passes) {
            double change = 0.0;
            for (Index i = 0; i < k; ++i)
                if (usable[static_cast<std::size_t>(i)]) change = std::max(change, update(i));
            ++passes;
            if (change < config.tolerance) {
                res.stop = StopReason::converged;
                break;
            }
            std::vector<Index> support;
            for (Index i = 0; i < k; ++i)
                if (w(i) != 0.0) support.push_back(i);
            while (passes < config.max_passes) {
                double inner = 0.0;
                for (Index i : support) inner = std::max(inner, update(i));
                ++passes;
                if (inner < config.tolerance) break;
            }
        }
        // refresh the gradient to shed accumulated round-off
        grad = b - G * w;
        res.passes = passes;
        res.w = w;
        res.final_correlation = 0.0;
        for (Index i = 0; i < k; ++i) {
            if (w(i) != 0.0) res.active.push_back(i);
            else if (usable[static_cast<std::size_t>(i)]) res.final_correlation = std::max(res.final_correlation, std::abs(grad(i)));
        }
        res.wall_time = clock::now() - t0;
        if (g == 0) res.wall_time += setup_time;
        out.push_back(std::move(res));
    }
    return out;
}

} // namespace sprl
