#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "marl/rng.hpp"

namespace marl {

// Finite-horizon MDP with dense state ids. Rewards are either a full
// (t, s, a) table or time-factored base(s, a) * weight(t); the chained
// constructions use the factored form with weight(t) = gamma^(macro step).
struct EpisodicMDP {
  int n_states = 0;
  int n_actions = 0;
  int horizon = 0;
  // Sparse transition rows indexed s * n_actions + a, entries sorted by
  // successor id; probabilities sum to 1 per row.
  std::vector<std::vector<std::pair<int, double>>> rows;
  bool time_factored = true;
  std::vector<double> reward_base;    // (s, a) when time_factored
  std::vector<double> time_weight;    // (t) when time_factored
  std::vector<double> reward_full;    // (t, s, a) otherwise
  std::vector<double> initial;        // dense initial distribution

  double reward(int t, int s, int a) const {
    if (time_factored) {
      return reward_base[static_cast<std::size_t>(s) * n_actions + a] * time_weight[t];
    }
    return reward_full[(static_cast<std::size_t>(t) * n_states + s) * n_actions + a];
  }
  const std::vector<std::pair<int, double>>& row(int s, int a) const {
    return rows[static_cast<std::size_t>(s) * n_actions + a];
  }
  // Largest reward achievable at step t over all (s, a).
  double max_reward_at(int t) const;
};

// Sampling/planning surface the UCFH solver works against. Dense MDPs
// enumerate every state up front; large chained MDPs materialize states on
// demand, so ids grow as the solver explores.
class EpisodicEnv {
 public:
  virtual ~EpisodicEnv() = default;
  virtual int n_actions() const = 0;
  virtual int horizon() const = 0;
  // States materialized so far; ids below this are valid.
  virtual int state_count() = 0;
  virtual bool fully_enumerated() const = 0;
  // |S| entering the solver's sample-size formulas (true count when
  // enumerated, packed-space bound otherwise).
  virtual std::int64_t state_space_bound() const = 0;
  virtual int sample_initial(Rng& rng) = 0;
  virtual int sample_next(int s, int a, Rng& rng) = 0;
  virtual double reward(int t, int s, int a) = 0;
  // True successor support of (s, a) with exact probabilities, sorted by id.
  // Probabilities are used for sampling and oracles, never by the solver's
  // confidence-set planner.
  virtual const std::vector<std::pair<int, double>>& support(int s, int a) = 0;
  virtual double max_reward_at(int t) = 0;
};

// Adapter exposing a dense EpisodicMDP through the env interface.
class DenseEnv : public EpisodicEnv {
 public:
  explicit DenseEnv(const EpisodicMDP& mdp);

  int n_actions() const override { return mdp_.n_actions; }
  int horizon() const override { return mdp_.horizon; }
  int state_count() override { return mdp_.n_states; }
  bool fully_enumerated() const override { return true; }
  std::int64_t state_space_bound() const override { return mdp_.n_states; }
  int sample_initial(Rng& rng) override;
  int sample_next(int s, int a, Rng& rng) override;
  double reward(int t, int s, int a) override { return mdp_.reward(t, s, a); }
  const std::vector<std::pair<int, double>>& support(int s, int a) override {
    return mdp_.row(s, a);
  }
  double max_reward_at(int t) override;

 private:
  const EpisodicMDP& mdp_;
  std::vector<double> max_reward_cache_;
};

struct DpResult {
  double value = 0.0;                        // optimal value at the initial distribution
  std::vector<std::vector<int>> policy;      // (t, s) optimal actions
  std::vector<std::vector<double>> v;        // (t, s) optimal values; v[horizon] = 0
};

// Exact finite-horizon value iteration over dense tables. Oracle-grade:
// throws if the table volume exceeds the dense guard.
DpResult exact_finite_horizon_dp(const EpisodicMDP& mdp);

// Exact value of a fixed deterministic time-indexed policy.
double policy_value_dp(const EpisodicMDP& mdp,
                       const std::function<int(int t, int s)>& policy);

}  // namespace marl
