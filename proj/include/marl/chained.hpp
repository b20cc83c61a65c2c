#pragma once

#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

#include "marl/episodic.hpp"
#include "marl/model.hpp"

namespace marl {

// Micro steps needed so the truncated discounted tail is at most eps:
// ceil((1 / (1 - gamma)) ln(r_inf / (eps (1 - gamma)))), at least 1.
int effective_horizon(double gamma, double eps, double r_inf);

enum class ChainedKind { kReplicaChain, kMeanFieldChain };

// Micro state of the k-replica chain: stage in [1, k], current global state,
// pending next global state (sampled at stage 1, committed after stage k;
// n_sg encodes "not sampled yet"), and the k replica local states.
struct MicroStateK {
  int stage = 1;
  int sg = 0;
  int pending_sg = 0;
  std::vector<int> replicas;
};

// Micro state of the mean-field chain: stage in [0, n_sl] (0 = tagged-agent
// stage, u >= 1 sweeps coalition bin u-1), pending global/tagged states
// (n_sg / n_sl encode "not sampled"), coalition histogram over k-1 agents and
// the accumulator of agents already moved this macro step.
struct MicroStateMF {
  int stage = 0;
  int sg = 0;
  int pending_sg = 0;
  int sl = 0;
  int pending_sl = 0;
  std::vector<int> coalition;
  std::vector<int> moved;
};

// Mixed-radix packing for replica-chain micro states. Radix order, most
// significant first: stage-1 (k), sg (n_sg), pending (n_sg + 1), then the k
// replica digits (n_sl each). Construction throws if the packed space
// overflows 2^63.
class KChainCoder {
 public:
  KChainCoder(int k, int n_sg, int n_sl);
  std::uint64_t encode(const MicroStateK& s) const;
  MicroStateK decode(std::uint64_t code) const;
  std::uint64_t space_bound() const { return bound_; }

 private:
  int k_, n_sg_, n_sl_;
  std::uint64_t bound_;
};

// Mixed-radix packing for mean-field-chain micro states. Radix order, most
// significant first: stage (n_sl + 1), sg (n_sg), pending_sg (n_sg + 1),
// sl (n_sl), pending_sl (n_sl + 1), coalition histogram rank
// (C(k-1+n_sl-1, n_sl-1)), then the n_sl accumulator digits (radix k).
class MfChainCoder {
 public:
  MfChainCoder(int k, int n_sg, int n_sl);
  std::uint64_t encode(const MicroStateMF& s) const;
  MicroStateMF decode(std::uint64_t code) const;
  std::uint64_t space_bound() const { return bound_; }

 private:
  int k_, n_sg_, n_sl_;
  std::uint64_t bound_;
  HistogramCoder coalition_coder_;
  std::vector<Histogram> coalition_hists_;
};

// Transition law shared by the dense builder and the lazy environment; one
// implementation per chain kind keeps the two paths semantically identical.
class ChainLawBase {
 public:
  virtual ~ChainLawBase() = default;
  virtual int n_actions() const = 0;
  virtual int chain_len() const = 0;
  virtual ChainedKind kind() const = 0;
  virtual std::uint64_t space_bound() const = 0;
  virtual void successors(std::uint64_t code, int action,
                          std::vector<std::pair<std::uint64_t, double>>& out) const = 0;
  // One successor draw from the same law; never enumerates the row.
  virtual std::uint64_t sample_successor(std::uint64_t code, int action, Rng& rng) const = 0;
  // Reward before the gamma^(macro step) time weight.
  virtual double base_reward(std::uint64_t code, int action) const = 0;
  virtual double max_base_reward() const = 0;
  // (active local state, global state) the action at this micro state answers for.
  virtual std::pair<int, int> context(std::uint64_t code) const = 0;
  // Initial distribution: uniform global state, iid-uniform local states.
  virtual void initial_states(std::vector<std::pair<std::uint64_t, double>>& out) const = 0;
  virtual std::uint64_t sample_initial_code(Rng& rng) const = 0;
};

std::unique_ptr<ChainLawBase> make_k_chain_law(const ModelSpec& model,
                                               const GlobalPolicy& pi_g, int k,
                                               double reward_scale);
std::unique_ptr<ChainLawBase> make_meanfield_chain_law(const ModelSpec& model,
                                                       const GlobalPolicy& pi_g, int k,
                                                       double reward_scale);

// Fully enumerated chained MDP plus the metadata needed to interpret micro
// states (contexts for policy extraction, packed codes for debugging).
struct ChainedMdp {
  ChainedKind kind = ChainedKind::kReplicaChain;
  int chain_len = 1;
  int macro_horizon = 1;
  double reward_scale = 1.0;
  EpisodicMDP mdp;
  std::vector<std::pair<int, int>> context;  // per state: (local ctx, sg)
  std::vector<std::uint64_t> codes;          // per state packed code
};

// Replica-chain construction: micro horizon H * k, reward
// 1{stage = 1} gamma^t (reward_scale / n) r_l(s_1, s_g, a), one replica
// advanced per micro step, pending global state sampled at stage 1 under pi_g
// (keyed on the pre-update replica tuple) and committed after stage k.
// Enumerates reachable states breadth-first; throws std::length_error past
// max_states.
ChainedMdp build_k_chained(const ValidatedModel& model, const GlobalPolicy& pi_g, int k,
                           int macro_horizon, double reward_scale = 1.0,
                           int max_states = 400000);

// Mean-field chain: micro horizon H * (n_sl + 1); stage 0 moves the tagged
// agent and caches the pending global/tagged successors under pi_g (keyed on
// the coalition histogram plus the tagged agent), stage u >= 1 moves the
// c = coalition(u-1) agents of bin u-1 by one multinomial draw, the final
// stage commits. Reward 1{stage = 0} gamma^t (reward_scale / n) r_l(s_l, s_g, a).
ChainedMdp build_meanfield_chained(const ValidatedModel& model, const GlobalPolicy& pi_g,
                                   int k, int macro_horizon, double reward_scale = 1.0,
                                   int max_states = 400000);

// On-demand materialization of the same law for state spaces too large to
// enumerate. Ids are assigned in first-touch order. Stepping and rewards
// never build transition rows; support() materializes and caches the row of
// one (state, action) on demand.
class LazyChainEnv : public EpisodicEnv {
 public:
  LazyChainEnv(std::unique_ptr<ChainLawBase> law, int macro_horizon, double gamma);

  int n_actions() const override { return law_->n_actions(); }
  int horizon() const override { return horizon_; }
  int state_count() override { return static_cast<int>(codes_.size()); }
  bool fully_enumerated() const override { return false; }
  std::int64_t state_space_bound() const override;
  int sample_initial(Rng& rng) override { return id_of(law_->sample_initial_code(rng)); }
  int sample_next(int s, int a, Rng& rng) override;
  double reward(int t, int s, int a) override;
  const std::vector<std::pair<int, double>>& support(int s, int a) override;
  double max_reward_at(int t) override;

  std::pair<int, int> context_of(int s) const { return law_->context(codes_[s]); }
  ChainedKind kind() const { return law_->kind(); }
  int chain_len() const { return law_->chain_len(); }
  int id_of(std::uint64_t code);

 private:
  void ensure_row(int s, int a);

  std::unique_ptr<ChainLawBase> law_;
  int horizon_;
  std::vector<double> time_weight_;
  std::unordered_map<std::uint64_t, int> ids_;
  std::vector<std::uint64_t> codes_;
  std::vector<std::vector<std::pair<int, double>>> rows_;
  std::vector<char> row_ready_;
  std::vector<std::pair<std::uint64_t, double>> scratch_;
};

// Reduction from state-action rewards to state rewards: states become
// (s, a) commitments plus (s, wait) deciders, horizon doubles, a wait action
// self-loops with zero reward. Values of any original policy are preserved
// under the canonical embedding and the optimal value is unchanged for the
// nonnegative rewards used here.
EpisodicMDP state_action_to_state_reward(const EpisodicMDP& mdp);

struct LocalPolicyExtraction {
  LocalPolicy policy;
  // (s_l, s_g) pairs that received no visitation weight; they default to action 0.
  std::vector<std::pair<int, int>> defaulted;
  // (s_l, s_g) pairs whose top actions tied; lowest action index wins.
  std::vector<std::pair<int, int>> conflicted;
};

// Visitation-weighted majority projection of a micro policy onto the shared
// local policy class: micro state s votes weight[s] for micro_actions[s] at
// its context (s_l, s_g).
LocalPolicyExtraction extract_local_policy(const std::vector<int>& micro_actions,
                                           const std::vector<double>& weights,
                                           const std::vector<std::pair<int, int>>& contexts,
                                           const ModelSpec& model);

}  // namespace marl
