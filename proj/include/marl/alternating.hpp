#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "marl/chained.hpp"
#include "marl/model.hpp"
#include "marl/online_exec.hpp"
#include "marl/qlearn.hpp"
#include "marl/ucfh.hpp"

namespace marl {

// Statistical tolerance of one best-response step at subsample size k:
// (2 r_max / (1 - gamma)^2) (sqrt(ln(2 |S_l| |A_g| sqrt(k)) / (2k)) + 5 / sqrt(k)).
double tolerance_eta(int k, double gamma, double r_max, int n_sl, int n_ag);

// Dispatcher sweep count: ceil((2 / (1 - gamma)) ln(r_max sqrt(k) / (1 - gamma))).
int sweep_count(int k, double gamma, double r_max);

enum class UpdateDecision { kAccept, kReject, kTerminate };

// Accept when every coordinate improves by more than 2 eta, reject when any
// coordinate drops by more than 2 eta, terminate otherwise (the proposal is
// within tolerance of a best response, so the certificate holds).
UpdateDecision update_rule(std::span<const double> v_old, std::span<const double> v_new,
                           double eta);
UpdateDecision update_rule(double v_old, double v_new, double eta);

struct LLearnConfig {
  std::uint64_t seed = 0;
  // Horizon accuracy; defaults to 1/sqrt(k).
  std::optional<double> eps;
  // Reachable chained spaces up to this size are enumerated and solved with
  // full-support confidence sets; larger ones learn on demand.
  int dense_max_states = 300000;
  UcfhConfig ucfh;
  int value_rollouts = 64;  // MC value rollouts in on-demand mode
};

struct LLearnResult {
  LocalPolicy policy;
  // Chained value of the extracted policy at the (1/n)-scaled reward
  // contract: exact in dense mode, MC in on-demand mode.
  double value = 0.0;
  int horizon = 0;  // macro horizon
  ChainedKind kind = ChainedKind::kReplicaChain;
  bool dense = false;
  std::int64_t states = 0;
  std::int64_t episodes = 0;
  std::int64_t updates = 0;
  UcfhTermination termination = UcfhTermination::kMaxEpisodes;
  std::vector<std::pair<int, int>> defaulted;
  std::vector<std::pair<int, int>> conflicted;
};

// Local best response to a fixed dispatcher policy: builds the chained MDP of
// pi_g's parameterization (internal rewards scaled up by n for conditioning,
// value scaled back), solves it episodically, and projects the solution onto
// the shared local policy class by visitation-weighted majority.
LLearnResult l_learn(const ValidatedModel& model, const GlobalPolicy& pi_g,
                     const LLearnConfig& cfg);

// Scalar joint value used by the update rule; injectable so tests can supply
// exact evaluation. Defaults to Monte-Carlo rollouts at the uniform initial
// distribution.
using JointEvaluator = std::function<double(const GlobalPolicy&, const LocalPolicy&)>;

enum class ProposerSide { kGlobal, kLocal };

struct DynamicsRow {
  int iteration = 0;
  ProposerSide proposer = ProposerSide::kGlobal;
  UpdateDecision decision = UpdateDecision::kReject;
  double v_old = 0.0;
  double v_new = 0.0;
  double eta = 0.0;
  double seconds = 0.0;
};

struct AlternatingConfig {
  int k = 1;
  int n_steps = 10;  // proposals examined (dispatcher and local sides alternate)
  double delta = 0.1;
  std::optional<double> eta_override;  // formula value is still logged
  std::uint64_t seed = 0;

  // Dispatcher proposer.
  int m = 30;  // successor samples per sweep cell

  // Local proposer budgets. The per-step failure budget delta/(4 n_steps)
  // overrides ucfh.delta.
  UcfhConfig ucfh;
  std::optional<double> l_eps;
  int dense_max_states = 300000;
  int value_rollouts = 64;

  // Default Monte-Carlo evaluator.
  int eval_horizon = 200;
  int eval_rollouts = 128;
};

struct AlternatingResult {
  GlobalPolicy pi_g;
  LocalPolicy pi_l;
  double value = 0.0;  // value of the returned pair under the evaluator
  double eta = 0.0;
  double eta_formula = 0.0;
  int sweeps = 0;      // dispatcher sweep count actually used
  int iterations = 0;  // proposals examined
  bool terminated = false;  // stopped by the certificate rather than the budget
  std::vector<DynamicsRow> trace;
};

// Alternating best-response dynamics from the uniform pair: even proposals
// re-learn the dispatcher against the current local policy, odd ones re-learn
// the local policy against the current dispatcher; each proposal passes
// through the 2-eta update rule. On terminate the pre-proposal pair is
// returned and its certificate holds.
AlternatingResult alternating_marl(const ValidatedModel& model, const AlternatingConfig& cfg,
                                   const JointEvaluator& evaluator = {});

// Tab-separated dynamics trace: iteration, proposer, decision, v_old, v_new,
// eta, seconds.
std::string dynamics_trace_text(const std::vector<DynamicsRow>& rows);

}  // namespace marl
