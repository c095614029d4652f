#pragma once

#include "sprl/core.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace sprl {

/// A finite Markov reward process under a fixed policy: transition matrix,
/// expected reward per state and a discount factor in [0, 1).
class DiscreteMrp {
public:
    DiscreteMrp(Matrix transitions, Vector rewards, double gamma)
        : P_(std::move(transitions)), R_(std::move(rewards)), gamma_(gamma)
    {
        require(P_.rows() >= 1, "mrp: need at least one state");
        require(P_.rows() == P_.cols(), "mrp: transition matrix must be square");
        require(R_.size() == P_.rows(), "mrp: reward length must equal state count");
        require(gamma_ >= 0.0 && gamma_ < 1.0, "mrp: discount must lie in [0, 1)");
        require(R_.allFinite(), "mrp: rewards must be finite");
        for (Index s = 0; s < P_.rows(); ++s) {
            require((P_.row(s).array() >= 0.0).all() && (P_.row(s).array() <= 1.0).all(),
                    "mrp: transition probabilities must lie in [0, 1]");
            require(std::abs(P_.row(s).sum() - 1.0) <= 1e-12,
                    "mrp: transition row " + std::to_string(s) + " does not sum to 1");
        }
    }

    Index n_states() const { return P_.rows(); }
    const Matrix& P() const { return P_; }
    const Vector& R() const { return R_; }
    double gamma() const { return gamma_; }

    DiscreteMrp with_rewards(Vector rewards) const { return {P_, std::move(rewards), gamma_}; }

private:
    Matrix P_;
    Vector R_;
    double gamma_;
};

struct ValueVector {
    std::vector<State> states;
    Vector values;

    Index size() const { return values.size(); }
};

inline ValueVector over_all_states(const DiscreteMrp& mrp, Vector values)
{
    ValueVector v;
    v.states.reserve(static_cast<std::size_t>(mrp.n_states()));
    for (Index s = 0; s < mrp.n_states(); ++s) v.states.push_back(discrete_state(s));
    v.values = std::move(values);
    return v;
}

/// V* = (I - gamma P)^{-1} R by a pivoted LU solve.
inline ValueVector exact_values(const DiscreteMrp& mrp)
{
    const Index n = mrp.n_states();
    Matrix A = Matrix::Identity(n, n) - mrp.gamma() * mrp.P();
    Eigen::PartialPivLU<Matrix> lu(A);
    Vector v = lu.solve(mrp.R());
    // one refinement step keeps the Bellman residual at round-off level
    v += lu.solve(mrp.R() - A * v);
    if (!v.allFinite() || (mrp.R() + mrp.gamma() * mrp.P() * v - v).lpNorm<Eigen::Infinity>() > 1e-10 * std::max(1.0, v.lpNorm<Eigen::Infinity>()))
        throw Error("exact_values: linear solve failed");
    return over_all_states(mrp, std::move(v));
}

/// Bellman operator T v = R + gamma P v.
inline ValueVector bellman_apply(const DiscreteMrp& mrp, const ValueVector& v)
{
    if (v.size() != mrp.n_states()) throw std::invalid_argument("bellman_apply: dimension mismatch");
    return over_all_states(mrp, mrp.R() + mrp.gamma() * (mrp.P() * v.values));
}

/// Five-state deterministic chain S1 -> S2 -> S3 -> S4 -> S5 (absorbing) whose
/// value function is 3-sparse in the indicator basis yet OMP-TD picks the
/// indicator of S1 first.
inline DiscreteMrp make_counterexample_chain(double gamma = 0.9)
{
    require(gamma >= 0.0 && gamma < 1.0, "counterexample: gamma must lie in [0, 1)");
    Matrix P = Matrix::Zero(5, 5);
    for (Index s = 0; s < 4; ++s) P(s, s + 1) = 1.0;
    P(4, 4) = 1.0;
    Vector R(5);
    R << -(gamma + gamma * gamma + gamma * gamma * gamma), 1.0, 1.0, 1.0, 0.0;
    return {std::move(P), std::move(R), gamma};
}

namespace chain50 {
inline constexpr Index n_states = 50;
inline constexpr double gamma = 0.8;
inline constexpr double success = 0.9;

// Evaluated policy: head for the nearer rewarding state (1-based states
// 1-9 right, 10-25 left, 26-41 right, 42-50 left).
inline int policy_direction(Index s)
{
    const Index one_based = s + 1;
    if (one_based <= 9) return +1;
    if (one_based <= 25) return -1;
    if (one_based <= 41) return +1;
    return -1;
}
} // namespace chain50

/// The 50-state chain: intended move succeeds with 0.9, goes the other way
/// with 0.1, moves off either end leave the state unchanged. Reward 1 at
/// (1-based) states 10 and 41, discount 0.8.
inline DiscreteMrp make_chain50_mrp()
{
    const Index n = chain50::n_states;
    Matrix P = Matrix::Zero(n, n);
    auto clamp = [n](Index s) { return std::min(std::max<Index>(s, 0), n - 1); };
    for (Index s = 0; s < n; ++s) {
        const int dir = chain50::policy_direction(s);
        P(s, clamp(s + dir)) += chain50::success;
        P(s, clamp(s - dir)) += 1.0 - chain50::success;
    }
    Vector R = Vector::Zero(n);
    R(9) = 1.0;
    R(40) = 1.0;
    return {std::move(P), std::move(R), chain50::gamma};
}

} // namespace sprl
