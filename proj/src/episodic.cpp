#include "marl/episodic.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace marl {

double EpisodicMDP::max_reward_at(int t) const {
  if (time_factored) {
    double base = -std::numeric_limits<double>::infinity();
    for (double r : reward_base) base = std::max(base, r);
    double w = time_weight[t];
    // weight is nonnegative in every construction here
    return base * w;
  }
  double m = -std::numeric_limits<double>::infinity();
  std::size_t off = static_cast<std::size_t>(t) * n_states * n_actions;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n_states) * n_actions; ++i) {
    m = std::max(m, reward_full[off + i]);
  }
  return m;
}

DenseEnv::DenseEnv(const EpisodicMDP& mdp) : mdp_(mdp) {
  max_reward_cache_.resize(mdp.horizon);
  for (int t = 0; t < mdp.horizon; ++t) max_reward_cache_[t] = mdp.max_reward_at(t);
}

int DenseEnv::sample_initial(Rng& rng) {
  double u = rng.next_double();
  double acc = 0.0;
  int last = 0;
  for (int s = 0; s < mdp_.n_states; ++s) {
    if (mdp_.initial[s] > 0.0) last = s;
    acc += mdp_.initial[s];
    if (u < acc) return s;
  }
  return last;
}

int DenseEnv::sample_next(int s, int a, Rng& rng) {
  const auto& row = mdp_.row(s, a);
  double u = rng.next_double();
  double acc = 0.0;
  for (const auto& [succ, p] : row) {
    acc += p;
    if (u < acc) return succ;
  }
  return row.back().first;
}

double DenseEnv::max_reward_at(int t) { return max_reward_cache_[t]; }

namespace {

constexpr std::int64_t kDenseDpGuard = 200'000'000;

void check_dense(const EpisodicMDP& mdp) {
  if (mdp.n_states < 1 || mdp.n_actions < 1 || mdp.horizon < 1) {
    throw std::invalid_argument("episodic dp: empty MDP");
  }
  std::int64_t volume = static_cast<std::int64_t>(mdp.n_states) * mdp.n_actions * mdp.horizon;
  if (volume > kDenseDpGuard) {
    throw std::invalid_argument("episodic dp: table volume exceeds dense guard");
  }
}

}  // namespace

DpResult exact_finite_horizon_dp(const EpisodicMDP& mdp) {
  check_dense(mdp);
  DpResult out;
  out.v.assign(mdp.horizon + 1, std::vector<double>(mdp.n_states, 0.0));
  out.policy.assign(mdp.horizon, std::vector<int>(mdp.n_states, 0));
  for (int t = mdp.horizon - 1; t >= 0; --t) {
    for (int s = 0; s < mdp.n_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a < mdp.n_actions; ++a) {
        double q = mdp.reward(t, s, a);
        for (const auto& [succ, p] : mdp.row(s, a)) q += p * out.v[t + 1][succ];
        if (q > best) {
          best = q;
          best_a = a;
        }
      }
      out.v[t][s] = best;
      out.policy[t][s] = best_a;
    }
  }
  for (int s = 0; s < mdp.n_states; ++s) out.value += mdp.initial[s] * out.v[0][s];
  return out;
}

double policy_value_dp(const EpisodicMDP& mdp,
                       const std::function<int(int t, int s)>& policy) {
  check_dense(mdp);
  std::vector<double> next(mdp.n_states, 0.0), cur(mdp.n_states, 0.0);
  for (int t = mdp.horizon - 1; t >= 0; --t) {
    for (int s = 0; s < mdp.n_states; ++s) {
      int a = policy(t, s);
      if (a < 0 || a >= mdp.n_actions) {
        throw std::invalid_argument("policy_value_dp: action out of range");
      }
      double q = mdp.reward(t, s, a);
      for (const auto& [succ, p] : mdp.row(s, a)) q += p * next[succ];
      cur[s] = q;
    }
    std::swap(cur, next);
  }
  double value = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) value += mdp.initial[s] * next[s];
  return value;
}

}  // namespace marl
