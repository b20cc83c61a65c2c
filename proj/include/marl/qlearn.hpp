#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "marl/model.hpp"
#include "marl/rng.hpp"

namespace marl {

// Action-value table for the dispatcher over (s_g, key, a_g) where key encodes
// the subsampled k-tuple of local states (standard) or its histogram
// (mean-field). Synchronous sweeps from the zero table keep every entry in
// [0, r_max / (1 - gamma)] when rewards are nonnegative.
struct QTable {
  Parameterization param = Parameterization::kStandard;
  int k = 0;
  int n_sg = 0;
  int n_sl = 0;
  int n_ag = 0;
  std::int64_t n_keys = 0;

  std::vector<double> values;  // (s_g, key, a_g) row-major

  std::size_t cell_index(int sg, std::int64_t key, int ag) const {
    return (static_cast<std::size_t>(sg) * n_keys + key) * n_ag + ag;
  }
  double at(int sg, std::int64_t key, int ag) const { return values[cell_index(sg, key, ag)]; }
  double& at(int sg, std::int64_t key, int ag) { return values[cell_index(sg, key, ag)]; }
  std::span<const double> row(int sg, std::int64_t key) const {
    return {values.data() + cell_index(sg, key, 0), static_cast<std::size_t>(n_ag)};
  }
  // Max over actions at a key.
  double max_at(int sg, std::int64_t key) const;

  static QTable zeros(Parameterization param, int k, const ModelSpec& model);
};

// State-value table over (s_g, key).
struct ValueTable {
  Parameterization param = Parameterization::kStandard;
  int k = 0;
  int n_sg = 0;
  int n_sl = 0;
  std::int64_t n_keys = 0;
  std::vector<double> values;  // (s_g, key) row-major

  double at(int sg, std::int64_t key) const {
    return values[static_cast<std::size_t>(sg) * n_keys + key];
  }
};

// Standard (tuple-keyed) iff |S_l|^k <= |S_l| * k^|S_l|, compared in log space
// so neither side is materialized.
Parameterization choose_parameterization(int n_sl, int k);

// One synchronous sweep of the m-sample empirical adapted Bellman operator:
// for every cell, reward term plus (gamma/m) * sum of sampled successor maxes,
// successors drawn from pg and the policy-guided local kernel. Each cell uses
// an independent substream derived from (one draw off rng, cell index), so the
// result does not depend on evaluation order and two sweeps started from the
// same generator state share their randomness cell-for-cell.
QTable empirical_bellman_sweep(const QTable& q, const ModelSpec& model,
                               const PolicyGuidedKernel& kernel,
                               const SurrogateLocalReward& rbar, int m, Rng& rng);

// Greedy deterministic policy from a Q table, lowest action index on ties.
GlobalPolicy greedy_policy(const QTable& q);

// V(s_g, key) = sum_a pi(a | s_g, key) Q(s_g, key, a).
ValueTable approx_value(const GlobalPolicy& pi_g, const QTable& q);

struct GLearnConfig {
  int k = 1;
  int m = 30;       // successor samples per cell per sweep
  int t_iters = 1;  // synchronous sweeps
};

struct GLearnResult {
  GlobalPolicy policy;
  ValueTable value;
  QTable q;
};

// Subsampled-dispatcher Q-learning: picks the parameterization, runs
// cfg.t_iters empirical sweeps from the zero table against the pi_l-guided
// local kernel, returns the greedy policy, its value table and the Q table.
GLearnResult g_learn(const ValidatedModel& model, const LocalPolicy& pi_l,
                     const GLearnConfig& cfg, Rng& rng);

// Single asynchronous sample update
// q(cell) <- (1 - alpha) q(cell) + alpha (r + gamma max_a' q(successor cell)).
void off_policy_update(QTable& q, int sg, std::int64_t key, int ag, double reward,
                       int sg_next, std::int64_t key_next, double alpha, double gamma);

// Randomized reward draws with known support bounds; local draws are for the
// surrogate (policy-averaged) local reward at (s_l, s_g).
struct RewardSampler {
  std::function<double(int sg, int ag, Rng&)> global;
  std::function<double(int sl, int sg, Rng&)> local;
  double global_lo = 0.0;
  double global_hi = 0.0;
  double local_lo = 0.0;
  double local_hi = 0.0;

  double range() const { return (global_hi + local_hi) - (global_lo + local_lo); }
};

// Stochastic-reward sweep: every cell averages xi independent applications of
// the randomized empirical operator (fresh reward and successor draws per
// application). Same substream law as empirical_bellman_sweep.
QTable averaged_stochastic_sweep(const QTable& q, const ModelSpec& model,
                                 const PolicyGuidedKernel& kernel,
                                 const RewardSampler& sampler, int m, std::int64_t xi,
                                 Rng& rng);

// Q-table checkpoint round-trip (JSON: parameterization tag, k, dimensions,
// row-major values).
void save_qtable(const QTable& q, const std::string& path);
QTable load_qtable(const std::string& path);

}  // namespace marl
