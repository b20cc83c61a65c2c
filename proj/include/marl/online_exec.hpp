#pragma once

#include <cstdint>
#include <vector>

#include "marl/model.hpp"
#include "marl/rng.hpp"

namespace marl {

// Joint initial state law for rollouts.
struct InitialDist {
  enum class Kind { kUniform, kFixed, kDirichlet };
  Kind kind = Kind::kUniform;
  int fixed_sg = 0;
  std::vector<int> fixed_locals;  // size n_agents when kFixed
  double dirichlet_alpha = 0.3;   // kDirichlet: one zone-weight draw, agents placed iid

  static InitialDist uniform() { return {}; }
  static InitialDist fixed(int sg, std::vector<int> locals);
  static InitialDist dirichlet(double alpha);
};

struct StepRecord {
  int sg = 0;
  std::vector<int> subset;  // sorted agent ids the dispatcher consulted
  std::int64_t key = 0;     // policy key of the subset's local states
  int ag = 0;
  double reward = 0.0;          // undiscounted team reward this step
  std::vector<int> zone_counts;  // full-population local-state histogram before the step
};

struct Trajectory {
  double discounted_return = 0.0;
  std::vector<StepRecord> steps;
};

// One horizon-step rollout: each step subsamples k agents, keys pi_g on their
// local states, then moves every agent under pi_l and the global state under
// the dispatcher action.
Trajectory execute(const ValidatedModel& model, const GlobalPolicy& pi_g,
                   const LocalPolicy& pi_l, int k, int horizon, const InitialDist& init,
                   Rng& rng);

// Fraction of steps whose dispatcher action lands on a most-occupied zone
// (any argmax of the population histogram counts; actions outside the zone
// range never count). Zero for empty trajectories.
double mode_tracking_rate(const Trajectory& traj);

struct EvalReport {
  double mean = 0.0;
  double std_err = 0.0;  // sample standard error (n - 1 denominator)
  double mode_rate = 0.0;
  int rollouts = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
};

// Monte-Carlo value of the policy pair at the initial distribution. Rollout r
// draws its own substream Rng(mix(seed, r)), so the estimate is independent
// of scheduling or rollout order.
EvalReport evaluate(const ValidatedModel& model, const GlobalPolicy& pi_g,
                    const LocalPolicy& pi_l, int k, int horizon, const InitialDist& init,
                    int rollouts, std::uint64_t seed);

}  // namespace marl
