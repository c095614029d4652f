#pragma once

#include "sprl/core.hpp"
#include "sprl/mrp.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sprl {

/// Axis-aligned box bounding a continuous (or embedded discrete) state space.
struct Box {
    Vector lo;
    Vector hi;

    Index dim() const { return lo.size(); }
    bool contains(const State& s) const
    {
        return s.size() == dim() && (s.array() >= lo.array()).all() && (s.array() <= hi.array()).all();
    }
};

/// Sampling-only view of a Markov reward process. draw_next may be called any
/// number of times on the same state; each call consumes fresh randomness
/// from the generator passed in, so repeated calls are independent draws.
class GenerativeEnv {
public:
    virtual ~GenerativeEnv() = default;

    virtual std::string name() const = 0;
    virtual State draw_start(Rng& rng) const = 0;
    virtual State draw_next(const State& s, Rng& rng) const = 0;
    virtual double reward(const State& s) const = 0;
    /// Absorbing zero-reward states; rollouts stop once one is reached.
    virtual bool terminal(const State&) const { return false; }
    virtual Index state_dim() const = 0;
    virtual bool discrete() const = 0;
    virtual const DiscreteMrp* exact_model() const { return nullptr; }
    virtual Box bounds() const = 0;
    /// Upper bound on |reward(s)| over the state space.
    virtual double reward_bound() const = 0;
    virtual double discount() const = 0;
};

using EnvPtr = std::shared_ptr<const GenerativeEnv>;

class DiscreteEnv final : public GenerativeEnv {
public:
    DiscreteEnv(DiscreteMrp mrp, std::string name) : mrp_(std::move(mrp)), name_(std::move(name))
    {
        const Index n = mrp_.n_states();
        support_.resize(static_cast<std::size_t>(n));
        cdf_.resize(static_cast<std::size_t>(n));
        for (Index s = 0; s < n; ++s) {
            double acc = 0.0;
            for (Index t = 0; t < n; ++t) {
                const double p = mrp_.P()(s, t);
                if (p <= 0.0) continue;
                acc += p;
                support_[s].push_back(t);
                cdf_[s].push_back(acc);
            }
            cdf_[s].back() = 1.0;
        }
    }

    std::string name() const override { return name_; }

    State draw_start(Rng& rng) const override
    {
        std::uniform_int_distribution<Index> pick(0, mrp_.n_states() - 1);
        return discrete_state(pick(rng));
    }

    State draw_next(const State& s, Rng& rng) const override
    {
        const auto i = static_cast<std::size_t>(state_index(s));
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const auto& cdf = cdf_[i];
        const auto pos = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
        return discrete_state(support_[i][std::min<std::size_t>(static_cast<std::size_t>(pos), cdf.size() - 1)]);
    }

    double reward(const State& s) const override { return mrp_.R()(state_index(s)); }
    Index state_dim() const override { return 1; }
    bool discrete() const override { return true; }
    const DiscreteMrp* exact_model() const override { return &mrp_; }

    Box bounds() const override
    {
        return {Vector::Zero(1), Vector::Constant(1, static_cast<double>(mrp_.n_states() - 1))};
    }

    double reward_bound() const override { return mrp_.R().cwiseAbs().maxCoeff(); }
    double discount() const override { return mrp_.gamma(); }

    const DiscreteMrp& mrp() const { return mrp_; }

private:
    DiscreteMrp mrp_;
    std::string name_;
    std::vector<std::vector<Index>> support_;
    std::vector<std::vector<double>> cdf_;
};

/// Mountain car under the energy-pumping policy (push in the direction of the
/// current velocity), with a uniformly random action taken with probability
/// `action_noise`. Reward -1 per step until the goal at position >= 0.5,
/// which is absorbing with reward 0.
class MountainCar final : public GenerativeEnv {
public:
    static constexpr double min_position = -1.2;
    static constexpr double max_position = 0.6;
    static constexpr double max_speed = 0.07;
    static constexpr double goal_position = 0.5;

    explicit MountainCar(double action_noise = 0.1, double gamma = 0.99)
        : action_noise_(action_noise), gamma_(gamma)
    {
    }

    std::string name() const override { return "mountain_car"; }

    State draw_start(Rng& rng) const override
    {
        State s(2);
        s(0) = std::uniform_real_distribution<double>(min_position, max_position)(rng);
        s(1) = std::uniform_real_distribution<double>(-max_speed, max_speed)(rng);
        return s;
    }

    State draw_next(const State& s, Rng& rng) const override
    {
        if (terminal(s)) return s;
        double action = s(1) >= 0.0 ? 1.0 : -1.0;
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < action_noise_)
            action = static_cast<double>(std::uniform_int_distribution<int>(-1, 1)(rng));
        State next(2);
        double v = s(1) + 0.001 * action - 0.0025 * std::cos(3.0 * s(0));
        v = std::clamp(v, -max_speed, max_speed);
        double x = std::clamp(s(0) + v, min_position, max_position);
        if (x == min_position && v < 0.0) v = 0.0;
        next << x, v;
        return next;
    }

    double reward(const State& s) const override { return terminal(s) ? 0.0 : -1.0; }
    bool terminal(const State& s) const override { return s(0) >= goal_position; }
    Index state_dim() const override { return 2; }
    bool discrete() const override { return false; }

    Box bounds() const override
    {
        Vector lo(2), hi(2);
        lo << min_position, -max_speed;
        hi << max_position, max_speed;
        return {lo, hi};
    }

    double reward_bound() const override { return 1.0; }
    double discount() const override { return gamma_; }

private:
    double action_noise_;
    double gamma_;
};

/// Puddle world on the unit square. The evaluated policy steps 0.05 right or
/// up (whichever axis is farther from the goal corner), replaced by a random
/// compass move with probability `action_noise`, plus N(0, 0.01^2) jitter per
/// coordinate. Reward -1 per step minus 400 times the penetration depth into
/// either puddle; the goal region x + y >= 1.9 is absorbing with reward 0.
class PuddleWorld final : public GenerativeEnv {
public:
    static constexpr double step = 0.05;
    static constexpr double step_noise = 0.01;
    static constexpr double puddle_radius = 0.1;
    static constexpr double puddle_penalty = 400.0;
    static constexpr double goal_sum = 1.9;

    explicit PuddleWorld(double action_noise = 0.2, double gamma = 0.99)
        : action_noise_(action_noise), gamma_(gamma)
    {
    }

    std::string name() const override { return "puddleworld"; }

    State draw_start(Rng& rng) const override
    {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        State s(2);
        s(0) = u(rng);
        s(1) = u(rng);
        return s;
    }

    State draw_next(const State& s, Rng& rng) const override
    {
        if (terminal(s)) return s;
        int action = (1.0 - s(0)) >= (1.0 - s(1)) ? 0 : 1; // 0 right, 1 up, 2 left, 3 down
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < action_noise_)
            action = std::uniform_int_distribution<int>(0, 3)(rng);
        static constexpr double dx[4] = {step, 0.0, -step, 0.0};
        static constexpr double dy[4] = {0.0, step, 0.0, -step};
        std::normal_distribution<double> jitter(0.0, step_noise);
        State next(2);
        next(0) = std::clamp(s(0) + dx[action] + jitter(rng), 0.0, 1.0);
        next(1) = std::clamp(s(1) + dy[action] + jitter(rng), 0.0, 1.0);
        return next;
    }

    double reward(const State& s) const override
    {
        if (terminal(s)) return 0.0;
        double r = -1.0;
        for (const auto& seg : puddles()) {
            const double d = segment_distance(s(0), s(1), seg);
            if (d < puddle_radius) r -= puddle_penalty * (puddle_radius - d);
        }
        return r;
    }

    bool terminal(const State& s) const override { return s(0) + s(1) >= goal_sum; }
    Index state_dim() const override { return 2; }
    bool discrete() const override { return false; }
    Box bounds() const override { return {Vector::Zero(2), Vector::Ones(2)}; }
    double reward_bound() const override { return 1.0 + 2.0 * puddle_penalty * puddle_radius; }
    double discount() const override { return gamma_; }

private:
    struct Segment {
        double x0, y0, x1, y1;
    };

    static const std::vector<Segment>& puddles()
    {
        static const std::vector<Segment> segs{{0.10, 0.75, 0.45, 0.75}, {0.45, 0.40, 0.45, 0.80}};
        return segs;
    }

    static double segment_distance(double px, double py, const Segment& g)
    {
        const double vx = g.x1 - g.x0, vy = g.y1 - g.y0;
        const double t = std::clamp(((px - g.x0) * vx + (py - g.y0) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
        const double cx = g.x0 + t * vx - px, cy = g.y0 + t * vy - py;
        return std::sqrt(cx * cx + cy * cy);
    }

    double action_noise_;
    double gamma_;
};

inline std::shared_ptr<const DiscreteEnv> make_discrete_env(DiscreteMrp mrp, std::string name)
{
    return std::make_shared<const DiscreteEnv>(std::move(mrp), std::move(name));
}

inline std::shared_ptr<const DiscreteEnv> make_chain50() { return make_discrete_env(make_chain50_mrp(), "chain50"); }
inline EnvPtr make_mountain_car() { return std::make_shared<const MountainCar>(); }
inline EnvPtr make_puddleworld() { return std::make_shared<const PuddleWorld>(); }

/// Looks up a benchmark by name: chain50, counterexample, mountain_car, puddleworld.
inline EnvPtr make_env(const std::string& name)
{
    if (name == "chain50") return make_chain50();
    if (name == "counterexample") return make_discrete_env(make_counterexample_chain(0.9), "counterexample");
    if (name == "mountain_car" || name == "mountaincar") return make_mountain_car();
    if (name == "puddleworld") return make_puddleworld();
    throw std::invalid_argument("unknown environment '" + name + "'");
}

// ---------------------------------------------------------------------------
// Transition samples

struct SampleSet {
    std::vector<State> states;
    std::vector<double> rewards;
    std::vector<State> next;
    std::optional<std::vector<State>> next2;
    std::uint64_t seed = 0;

    std::size_t size() const { return states.size(); }
    bool doubled() const { return next2.has_value(); }
};

inline bool operator==(const SampleSet& a, const SampleSet& b)
{
    auto same = [](const std::vector<State>& x, const std::vector<State>& y) {
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i].size() != y[i].size() || !(x[i].array() == y[i].array()).all()) return false;
        return true;
    };
    if (a.seed != b.seed || a.rewards != b.rewards || a.doubled() != b.doubled()) return false;
    if (!same(a.states, b.states) || !same(a.next, b.next)) return false;
    return !a.doubled() || same(*a.next2, *b.next2);
}

/// Draws n start states uniformly, each with its reward and one (or, when
/// doubled, two independent) next-state draws.
inline SampleSet sample_transitions(const GenerativeEnv& env, std::size_t n, std::uint64_t seed, bool doubled)
{
    if (n == 0) throw std::invalid_argument("sample_transitions: n must be at least 1");
    Rng rng(seed);
    SampleSet out;
    out.seed = seed;
    out.states.reserve(n);
    out.rewards.reserve(n);
    out.next.reserve(n);
    if (doubled) out.next2.emplace().reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        State s = env.draw_start(rng);
        out.rewards.push_back(env.reward(s));
        out.next.push_back(env.draw_next(s, rng));
        if (doubled) out.next2->push_back(env.draw_next(s, rng));
        out.states.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo ground truth

struct RolloutConfig {
    std::size_t horizon = 0; // 0 picks the smallest horizon meeting tail_tolerance
    std::size_t n_rollouts = 100;
    double tail_tolerance = 1e-3;
};

struct RolloutEstimate {
    ValueVector values;
    Vector std_errors;
    std::size_t horizon = 0;
};

/// Smallest H with gamma^H * reward_bound / (1 - gamma) <= tolerance.
inline std::size_t required_horizon(double gamma, double reward_bound, double tolerance)
{
    require(tolerance > 0.0, "rollout: tail tolerance must be positive");
    if (gamma == 0.0 || reward_bound == 0.0) return 1;
    const double bound = reward_bound / (1.0 - gamma);
    if (bound <= tolerance) return 1;
    return static_cast<std::size_t>(std::ceil(std::log(tolerance / bound) / std::log(gamma)));
}

inline RolloutEstimate rollout_values(const GenerativeEnv& env, const std::vector<State>& states,
                                      const RolloutConfig& config, double gamma, std::uint64_t seed)
{
    require(gamma >= 0.0 && gamma < 1.0, "rollout: gamma must lie in [0, 1)");
    require(config.n_rollouts >= 1, "rollout: need at least one rollout");
    const std::size_t needed = required_horizon(gamma, env.reward_bound(), config.tail_tolerance);
    const std::size_t horizon = config.horizon == 0 ? needed : config.horizon;
    if (horizon < needed)
        throw std::invalid_argument("rollout: horizon " + std::to_string(horizon) + " too small for tail tolerance (need " +
                                    std::to_string(needed) + ")");

    RolloutEstimate est;
    est.horizon = horizon;
    est.values.states = states;
    est.values.values.resize(static_cast<Index>(states.size()));
    est.std_errors.resize(static_cast<Index>(states.size()));
    for (std::size_t i = 0; i < states.size(); ++i) {
        Rng rng(derive_seed(seed, i));
        double mean = 0.0, m2 = 0.0;
        for (std::size_t r = 0; r < config.n_rollouts; ++r) {
            State s = states[i];
            double ret = 0.0, discount = 1.0;
            for (std::size_t t = 0; t < horizon; ++t) {
                if (env.terminal(s)) break;
                ret += discount * env.reward(s);
                discount *= gamma;
                if (t + 1 < horizon) s = env.draw_next(s, rng);
            }
            // Welford update
            const double delta = ret - mean;
            mean += delta / static_cast<double>(r + 1);
            m2 += delta * (ret - mean);
        }
        const double n = static_cast<double>(config.n_rollouts);
        const double var = n > 1 ? m2 / (n - 1.0) : 0.0;
        est.values.values(static_cast<Index>(i)) = mean;
        est.std_errors(static_cast<Index>(i)) = std::sqrt(var / n);
    }
    return est;
}

} // namespace sprl
