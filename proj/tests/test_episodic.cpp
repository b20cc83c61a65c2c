#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "marl/episodic.hpp"

using namespace marl;

namespace {

// Two states, two actions, horizon 3. Action 1 in state 0 pays 1 and moves to
// state 1; state 1 pays 2 under action 0 and stays put. Everything else pays 0
// and self-loops, so the optimal plan is hand-computable.
EpisodicMDP two_state() {
  EpisodicMDP m;
  m.n_states = 2;
  m.n_actions = 2;
  m.horizon = 3;
  m.rows.resize(4);
  m.rows[0] = {{0, 1.0}};          // s0, a0: stay
  m.rows[1] = {{1, 1.0}};          // s0, a1: move
  m.rows[2] = {{1, 1.0}};          // s1, a0: stay
  m.rows[3] = {{0, 0.5}, {1, 0.5}};  // s1, a1: coin flip
  m.time_factored = true;
  m.reward_base = {0.0, 1.0, 2.0, 0.0};  // (s, a)
  m.time_weight = {1.0, 1.0, 1.0};
  m.initial = {1.0, 0.0};
  return m;
}

}  // namespace

TEST_CASE("reward lookup honors the factored form") {
  EpisodicMDP m = two_state();
  m.time_weight = {1.0, 0.5, 0.25};
  CHECK(m.reward(0, 1, 0) == 2.0);
  CHECK(m.reward(1, 1, 0) == 1.0);
  CHECK(m.reward(2, 1, 0) == 0.5);
  CHECK(m.max_reward_at(2) == 0.5);

  EpisodicMDP full = two_state();
  full.time_factored = false;
  full.reward_full.assign(3 * 2 * 2, 0.0);
  full.reward_full[(2 * 2 + 1) * 2 + 0] = 7.0;  // t=2, s=1, a=0
  CHECK(full.reward(2, 1, 0) == 7.0);
  CHECK(full.reward(1, 1, 0) == 0.0);
  CHECK(full.max_reward_at(2) == 7.0);
  CHECK(full.max_reward_at(0) == 0.0);
}

TEST_CASE("exact dp solves the two-state instance by hand") {
  const EpisodicMDP m = two_state();
  const DpResult res = exact_finite_horizon_dp(m);
  // Last step: best rewards are (1, 2); middle: s0 -> 1 + 2, s1 -> 2 + 2;
  // first: s0 -> 1 + 4, s1 -> 2 + 3 (a0 keeps the 2-per-step stream).
  CHECK(res.v[2][0] == doctest::Approx(1.0));
  CHECK(res.v[2][1] == doctest::Approx(2.0));
  CHECK(res.v[1][0] == doctest::Approx(3.0));
  CHECK(res.v[1][1] == doctest::Approx(4.0));
  CHECK(res.v[0][0] == doctest::Approx(5.0));
  CHECK(res.v[0][1] == doctest::Approx(6.0));
  CHECK(res.value == doctest::Approx(5.0));
  CHECK(res.policy[0][0] == 1);
  CHECK(res.policy[1][1] == 0);
  CHECK(res.v[3][0] == 0.0);
}

TEST_CASE("dp value matches the optimal policy replayed through policy_value_dp") {
  const EpisodicMDP m = two_state();
  const DpResult res = exact_finite_horizon_dp(m);
  const double replay = policy_value_dp(
      m, [&res](int t, int s) { return res.policy[static_cast<std::size_t>(t)][s]; });
  CHECK(replay == doctest::Approx(res.value).epsilon(1e-12));
  // Any other deterministic policy does no better.
  for (int a00 = 0; a00 < 2; ++a00) {
    for (int a01 = 0; a01 < 2; ++a01) {
      const double v = policy_value_dp(m, [&](int t, int s) {
        if (t == 0) return s == 0 ? a00 : a01;
        return res.policy[static_cast<std::size_t>(t)][s];
      });
      CHECK(v <= res.value + 1e-12);
    }
  }
}

TEST_CASE("uniform initial distribution averages state values") {
  EpisodicMDP m = two_state();
  m.initial = {0.5, 0.5};
  const DpResult res = exact_finite_horizon_dp(m);
  CHECK(res.value == doctest::Approx(0.5 * res.v[0][0] + 0.5 * res.v[0][1]));
}

TEST_CASE("dense env mirrors the table and samples its rows") {
  const EpisodicMDP m = two_state();
  DenseEnv env(m);
  CHECK(env.n_actions() == 2);
  CHECK(env.horizon() == 3);
  CHECK(env.state_count() == 2);
  CHECK(env.fully_enumerated());
  CHECK(env.state_space_bound() == 2);
  CHECK(env.reward(0, 1, 0) == 2.0);
  CHECK(env.support(1, 1).size() == 2);
  CHECK(env.max_reward_at(1) == 2.0);

  Rng rng(3);
  for (int i = 0; i < 50; ++i) CHECK(env.sample_initial(rng) == 0);
  int zeros = 0, ones = 0;
  for (int i = 0; i < 4000; ++i) {
    const int s = env.sample_next(1, 1, rng);
    if (s == 0) ++zeros;
    if (s == 1) ++ones;
  }
  CHECK(zeros + ones == 4000);
  CHECK(std::abs(zeros - 2000) < 200);
  for (int i = 0; i < 50; ++i) CHECK(env.sample_next(0, 1, rng) == 1);
}
