#include "sprl/env.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sprl;

TEST(Sampling, DeterministicGivenSeed)
{
    const auto env = make_chain50();
    const SampleSet a = sample_transitions(*env, 300, 42, true);
    const SampleSet b = sample_transitions(*env, 300, 42, true);
    EXPECT_TRUE(a == b);
    const SampleSet c = sample_transitions(*env, 300, 43, true);
    EXPECT_FALSE(a == c);

    const auto car = make_mountain_car();
    EXPECT_TRUE(sample_transitions(*car, 50, 7, false) == sample_transitions(*car, 50, 7, false));
}

TEST(Sampling, DoubledFlag)
{
    const auto env = make_chain50();
    const SampleSet single = sample_transitions(*env, 10, 1, false);
    EXPECT_FALSE(single.doubled());
    EXPECT_EQ(single.size(), 10u);
    const SampleSet dbl = sample_transitions(*env, 10, 1, true);
    ASSERT_TRUE(dbl.doubled());
    EXPECT_EQ(dbl.next2->size(), 10u);
}

TEST(Sampling, ZeroSamplesRejected)
{
    EXPECT_THROW(sample_transitions(*make_chain50(), 0, 1, false), std::invalid_argument);
}

TEST(Sampling, CounterexampleFollowsArcs)
{
    const auto env = make_discrete_env(make_counterexample_chain(), "counterexample");
    const SampleSet s = sample_transitions(*env, 500, 5, true);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const Index from = state_index(s.states[i]);
        const Index expected = from < 4 ? from + 1 : 4;
        EXPECT_EQ(state_index(s.next[i]), expected);
        EXPECT_EQ(state_index((*s.next2)[i]), expected);
        EXPECT_DOUBLE_EQ(s.rewards[i], env->mrp().R()(from));
    }
}

TEST(Sampling, Chain50TransitionFrequency)
{
    const auto env = make_chain50();
    const std::size_t n = 20000;
    const SampleSet s = sample_transitions(*env, n, 9, false);
    std::size_t intended = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Index from = state_index(s.states[i]);
        const Index to = state_index(s.next[i]);
        const Index target = std::clamp<Index>(from + chain50::policy_direction(from), 0, 49);
        intended += to == target && target != from;
        // every step is to a neighbour or stays at an end
        EXPECT_LE(std::abs(to - from), 1);
    }
    // target == from never happens on this chain, so the rate estimates 0.9
    const double p = static_cast<double>(intended) / static_cast<double>(n);
    EXPECT_NEAR(p, 0.9, 4.0 * std::sqrt(0.09 / static_cast<double>(n)));
}

TEST(Sampling, DoubleSampleIndependence)
{
    // every row equal: s' and s'' are fair coin flips regardless of s
    Matrix P = Matrix::Constant(2, 2, 0.5);
    const auto env = make_discrete_env(DiscreteMrp(P, Vector::Zero(2), 0.5), "coin");
    const std::size_t n = 10000;
    const SampleSet s = sample_transitions(*env, n, 2024, true);
    Vector a(static_cast<Index>(n)), b(static_cast<Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        a(static_cast<Index>(i)) = state_index(s.next[i]) == 0 ? 1.0 : 0.0;
        b(static_cast<Index>(i)) = state_index((*s.next2)[i]) == 0 ? 1.0 : 0.0;
    }
    const Vector ac = a.array() - a.mean();
    const Vector bc = b.array() - b.mean();
    const double corr = ac.dot(bc) / (ac.norm() * bc.norm());
    EXPECT_LT(std::abs(corr), 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(MountainCar, StaysInBounds)
{
    const auto env = make_mountain_car();
    const Box box = env->bounds();
    Rng rng(77);
    State s = env->draw_start(rng);
    std::size_t goals = 0;
    for (int t = 0; t < 100000; ++t) {
        ASSERT_TRUE(box.contains(s));
        if (env->terminal(s)) {
            EXPECT_EQ(env->reward(s), 0.0);
            EXPECT_TRUE(env->draw_next(s, rng) == s);
            ++goals;
            s = env->draw_start(rng);
        } else {
            EXPECT_EQ(env->reward(s), -1.0);
            s = env->draw_next(s, rng);
        }
    }
    // the energy-pumping policy reaches the goal repeatedly
    EXPECT_GT(goals, 10u);
}

TEST(MountainCar, GoalValueIsZero)
{
    const auto env = make_mountain_car();
    State goal(2);
    goal << 0.55, 0.01;
    RolloutConfig rc;
    rc.n_rollouts = 5;
    const RolloutEstimate e = rollout_values(*env, {goal}, rc, env->discount(), 1);
    EXPECT_EQ(e.values.values(0), 0.0);
    EXPECT_EQ(e.std_errors(0), 0.0);
}

TEST(PuddleWorld, RewardsAndBounds)
{
    const auto env = make_puddleworld();
    State far(2);
    far << 0.9, 0.1;
    EXPECT_EQ(env->reward(far), -1.0);
    State on_puddle(2);
    on_puddle << 0.3, 0.75; // on the horizontal puddle's axis
    EXPECT_NEAR(env->reward(on_puddle), -1.0 - 400.0 * 0.1, 1e-12);
    State goal(2);
    goal << 0.96, 0.96;
    EXPECT_TRUE(env->terminal(goal));
    EXPECT_EQ(env->reward(goal), 0.0);

    Rng rng(5);
    State s = env->draw_start(rng);
    for (int t = 0; t < 20000; ++t) {
        ASSERT_TRUE(env->bounds().contains(s));
        EXPECT_GE(env->reward(s), -env->reward_bound());
        s = env->terminal(s) ? env->draw_start(rng) : env->draw_next(s, rng);
    }
}

TEST(Rollouts, HorizonMeetsTolerance)
{
    for (double g : {0.5, 0.8, 0.99}) {
        for (double rmax : {1.0, 81.0}) {
            const std::size_t h = required_horizon(g, rmax, 1e-3);
            EXPECT_LE(std::pow(g, static_cast<double>(h)) * rmax / (1 - g), 1e-3 * (1 + 1e-12));
            EXPECT_GT(std::pow(g, static_cast<double>(h - 1)) * rmax / (1 - g), 1e-3);
        }
    }
}

TEST(Rollouts, DeterministicChainHasZeroVariance)
{
    const DiscreteMrp m = make_counterexample_chain();
    const auto env = make_discrete_env(m, "counterexample");
    std::vector<State> states;
    for (Index s = 0; s < 5; ++s) states.push_back(discrete_state(s));
    RolloutConfig rc;
    rc.n_rollouts = 20;
    const RolloutEstimate e = rollout_values(*env, states, rc, m.gamma(), 3);
    const Vector v = exact_values(m).values;
    for (Index s = 0; s < 5; ++s) {
        EXPECT_NEAR(e.values.values(s), v(s), 1e-12);
        EXPECT_EQ(e.std_errors(s), 0.0);
    }
}

TEST(Rollouts, ZeroDiscountIsImmediateReward)
{
    const DiscreteMrp base = make_chain50_mrp();
    const auto env = make_discrete_env(DiscreteMrp(base.P(), base.R(), 0.0), "myopic");
    std::vector<State> states{discrete_state(9), discrete_state(3)};
    const RolloutEstimate e = rollout_values(*env, states, {}, 0.0, 1);
    EXPECT_EQ(e.values.values(0), 1.0);
    EXPECT_EQ(e.values.values(1), 0.0);
}

TEST(Rollouts, ShortHorizonRejected)
{
    const auto env = make_chain50();
    RolloutConfig rc;
    rc.horizon = 5;
    EXPECT_THROW(rollout_values(*env, {discrete_state(0)}, rc, env->discount(), 1), std::invalid_argument);
}

TEST(Rollouts, Chain50AgreesWithExactValues)
{
    const auto env = make_chain50();
    const Vector v = exact_values(env->mrp()).values;
    std::vector<State> states;
    for (Index s = 0; s < 50; s += 7) states.push_back(discrete_state(s));
    RolloutConfig rc;
    rc.n_rollouts = 500;
    const RolloutEstimate e = rollout_values(*env, states, rc, env->discount(), 99);
    for (std::size_t i = 0; i < states.size(); ++i) {
        const Index s = state_index(states[i]);
        EXPECT_LT(std::abs(e.values.values(static_cast<Index>(i)) - v(s)), 4.0 * e.std_errors(static_cast<Index>(i)) + 1e-3);
    }
}

TEST(Envs, FactoryNames)
{
    EXPECT_EQ(make_env("chain50")->name(), "chain50");
    EXPECT_EQ(make_env("mountain_car")->name(), "mountain_car");
    EXPECT_EQ(make_env("puddleworld")->name(), "puddleworld");
    EXPECT_TRUE(make_env("counterexample")->discrete());
    EXPECT_THROW(make_env("blackjack"), std::invalid_argument);
}
