#include "marl/alternating.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "marl/episodic.hpp"

namespace marl {

double tolerance_eta(int k, double gamma, double r_max, int n_sl, int n_ag) {
  if (k < 1) throw std::invalid_argument("tolerance_eta: k must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("tolerance_eta: gamma must be in (0, 1)");
  }
  if (!(r_max > 0.0)) throw std::invalid_argument("tolerance_eta: r_max must be positive");
  if (n_sl < 1 || n_ag < 1) throw std::invalid_argument("tolerance_eta: dimensions must be positive");
  const double rk = std::sqrt(static_cast<double>(k));
  const double lead = 2.0 * r_max / ((1.0 - gamma) * (1.0 - gamma));
  const double conc = std::sqrt(std::log(2.0 * n_sl * n_ag * rk) / (2.0 * k));
  return lead * (conc + 5.0 / rk);
}

int sweep_count(int k, double gamma, double r_max) {
  if (k < 1) throw std::invalid_argument("sweep_count: k must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("sweep_count: gamma must be in (0, 1)");
  }
  if (!(r_max > 0.0)) throw std::invalid_argument("sweep_count: r_max must be positive");
  const double t = std::ceil(2.0 / (1.0 - gamma) *
                             std::log(r_max * std::sqrt(static_cast<double>(k)) / (1.0 - gamma)));
  if (!(t >= 1.0)) return 1;
  if (t >= 2.0e9) throw std::overflow_error("sweep_count: count does not fit an int");
  return static_cast<int>(t);
}

UpdateDecision update_rule(std::span<const double> v_old, std::span<const double> v_new,
                           double eta) {
  if (v_old.size() != v_new.size() || v_old.empty()) {
    throw std::invalid_argument("update_rule: value vectors must match and be nonempty");
  }
  if (!(eta >= 0.0)) throw std::invalid_argument("update_rule: eta must be nonnegative");
  bool all_above = true;
  for (std::size_t i = 0; i < v_old.size(); ++i) {
    if (v_new[i] < v_old[i] - 2.0 * eta) return UpdateDecision::kReject;
    if (!(v_new[i] > v_old[i] + 2.0 * eta)) all_above = false;
  }
  return all_above ? UpdateDecision::kAccept : UpdateDecision::kTerminate;
}

UpdateDecision update_rule(double v_old, double v_new, double eta) {
  return update_rule(std::span<const double>(&v_old, 1), std::span<const double>(&v_new, 1), eta);
}

namespace {

// Majority action over the time-indexed plan, lowest action on ties. States
// past a row's recorded size vote nothing.
std::vector<int> collapse_time_policy(const std::vector<std::vector<int>>& policy, int n_states,
                                      int n_actions) {
  std::vector<int> out(n_states, 0);
  std::vector<int> counts(n_actions);
  for (int s = 0; s < n_states; ++s) {
    std::fill(counts.begin(), counts.end(), 0);
    for (const auto& row : policy) {
      if (s < static_cast<int>(row.size())) ++counts[row[s]];
    }
    int arg = 0;
    for (int a = 1; a < n_actions; ++a) {
      if (counts[a] > counts[arg]) arg = a;
    }
    out[s] = arg;
  }
  return out;
}

}  // namespace

LLearnResult l_learn(const ValidatedModel& model, const GlobalPolicy& pi_g,
                     const LLearnConfig& cfg) {
  const ModelSpec& m = model.spec();
  const int k = pi_g.k;
  if (k < 1 || k > m.n_agents) {
    throw std::invalid_argument("l_learn: pi_g subsample size out of range");
  }
  const double eps = cfg.eps.value_or(1.0 / std::sqrt(static_cast<double>(k)));
  if (!(eps > 0.0)) throw std::invalid_argument("l_learn: eps must be positive");
  const double r_inf = m.max_local_reward();
  const int horizon = r_inf > 0.0 ? effective_horizon(m.gamma, eps, r_inf) : 1;
  // Chain rewards run at full size (scale = n) for conditioning; values are
  // scaled back to the (1/n) contract at the end.
  const double scale = static_cast<double>(m.n_agents);

  LLearnResult out;
  out.horizon = horizon;
  Rng rng(cfg.seed);

  auto law = pi_g.param == Parameterization::kStandard
                 ? make_k_chain_law(m, pi_g, k, scale)
                 : make_meanfield_chain_law(m, pi_g, k, scale);
  out.kind = law->kind();

  if (law->space_bound() <= static_cast<std::uint64_t>(cfg.dense_max_states)) {
    out.dense = true;
    const ChainedMdp chained =
        pi_g.param == Parameterization::kStandard
            ? build_k_chained(model, pi_g, k, horizon, scale, cfg.dense_max_states)
            : build_meanfield_chained(model, pi_g, k, horizon, scale, cfg.dense_max_states);
    out.states = chained.mdp.n_states;
    DenseEnv env(chained.mdp);
    UcfhResult res = ucfh_solve(env, cfg.ucfh, rng);
    out.episodes = res.episodes;
    out.updates = res.updates;
    out.termination = res.termination;
    const auto actions =
        collapse_time_policy(res.policy, chained.mdp.n_states, chained.mdp.n_actions);
    auto ext = extract_local_policy(actions, res.state_weights, chained.context, m);
    out.policy = std::move(ext.policy);
    out.defaulted = std::move(ext.defaulted);
    out.conflicted = std::move(ext.conflicted);
    const double v = policy_value_dp(chained.mdp, [&](int, int s) {
      const auto [sl, sg] = chained.context[s];
      return out.policy.mode_action(sl, sg);
    });
    out.value = v / scale;
    return out;
  }

  LazyChainEnv env(std::move(law), horizon, m.gamma);
  UcfhResult res = ucfh_solve(env, cfg.ucfh, rng);
  out.dense = false;
  out.states = env.state_count();
  out.episodes = res.episodes;
  out.updates = res.updates;
  out.termination = res.termination;
  const auto actions = collapse_time_policy(res.policy, env.state_count(), env.n_actions());
  std::vector<std::pair<int, int>> contexts(env.state_count());
  for (int s = 0; s < env.state_count(); ++s) contexts[s] = env.context_of(s);
  auto ext = extract_local_policy(actions, res.state_weights, contexts, m);
  out.policy = std::move(ext.policy);
  out.defaulted = std::move(ext.defaulted);
  out.conflicted = std::move(ext.conflicted);

  const int rollouts = std::max(1, cfg.value_rollouts);
  double sum = 0.0;
  for (int r = 0; r < rollouts; ++r) {
    Rng sub(Rng::mix(cfg.seed, 0x517cc1b727220a95ull + static_cast<std::uint64_t>(r)));
    int s = env.sample_initial(sub);
    double ret = 0.0;
    for (int t = 0; t < env.horizon(); ++t) {
      const auto [sl, sg] = env.context_of(s);
      const int a = out.policy.mode_action(sl, sg);
      ret += env.reward(t, s, a);
      s = env.sample_next(s, a, sub);
    }
    sum += ret;
  }
  out.value = (sum / rollouts) / scale;
  return out;
}

AlternatingResult alternating_marl(const ValidatedModel& model, const AlternatingConfig& cfg,
                                   const JointEvaluator& evaluator) {
  const ModelSpec& m = model.spec();
  if (cfg.k < 1 || cfg.k > m.n_agents) {
    throw std::invalid_argument("alternating_marl: k must be in [1, n_agents]");
  }
  if (cfg.n_steps < 1) throw std::invalid_argument("alternating_marl: n_steps must be positive");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) {
    throw std::invalid_argument("alternating_marl: delta must be in (0, 1)");
  }

  const double r_max = m.max_step_reward();
  AlternatingResult out;
  out.eta_formula = tolerance_eta(cfg.k, m.gamma, r_max, m.n_sl, m.n_ag);
  out.eta = cfg.eta_override.value_or(out.eta_formula);
  out.sweeps = sweep_count(cfg.k, m.gamma, r_max);

  const Parameterization param = choose_parameterization(m.n_sl, cfg.k);
  out.pi_g = GlobalPolicy::uniform(param, cfg.k, m.n_sg, m.n_sl, m.n_ag);
  out.pi_l = LocalPolicy::uniform(m.n_sl, m.n_sg, m.n_al);

  JointEvaluator eval = evaluator;
  if (!eval) {
    eval = [&model, &cfg](const GlobalPolicy& pg, const LocalPolicy& pl) {
      return evaluate(model, pg, pl, cfg.k, cfg.eval_horizon, InitialDist::uniform(),
                      cfg.eval_rollouts, Rng::mix(cfg.seed, 0x6576616c75617465ull))
          .mean;
    };
  }

  Rng rng(cfg.seed);
  double v_old = 0.0;
  const double delta_learn = cfg.delta / (4.0 * cfg.n_steps);
  for (int it = 0; it < cfg.n_steps; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const ProposerSide side = it % 2 == 0 ? ProposerSide::kGlobal : ProposerSide::kLocal;
    GlobalPolicy cand_g;
    LocalPolicy cand_l;
    double v_new = 0.0;
    if (side == ProposerSide::kGlobal) {
      GLearnConfig gcfg;
      gcfg.k = cfg.k;
      gcfg.m = cfg.m;
      gcfg.t_iters = out.sweeps;
      cand_g = g_learn(model, out.pi_l, gcfg, rng).policy;
      v_new = eval(cand_g, out.pi_l);
    } else {
      LLearnConfig lcfg;
      lcfg.seed = rng.next_u64();
      lcfg.eps = cfg.l_eps;
      lcfg.dense_max_states = cfg.dense_max_states;
      lcfg.ucfh = cfg.ucfh;
      lcfg.ucfh.delta = delta_learn;
      lcfg.value_rollouts = cfg.value_rollouts;
      cand_l = l_learn(model, out.pi_g, lcfg).policy;
      v_new = eval(out.pi_g, cand_l);
    }
    const UpdateDecision decision = update_rule(v_old, v_new, out.eta);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.trace.push_back({it, side, decision, v_old, v_new, out.eta, seconds});
    ++out.iterations;
    if (decision == UpdateDecision::kAccept) {
      if (side == ProposerSide::kGlobal) {
        out.pi_g = std::move(cand_g);
      } else {
        out.pi_l = std::move(cand_l);
      }
      v_old = v_new;
    } else if (decision == UpdateDecision::kTerminate) {
      out.terminated = true;
      break;
    }
  }
  out.value = v_old;
  return out;
}

std::string dynamics_trace_text(const std::vector<DynamicsRow>& rows) {
  std::ostringstream os;
  os.precision(12);
  os << "iteration\tproposer\tdecision\tv_old\tv_new\teta\tseconds\n";
  for (const auto& r : rows) {
    os << r.iteration << '\t' << (r.proposer == ProposerSide::kGlobal ? "global" : "local")
       << '\t';
    switch (r.decision) {
      case UpdateDecision::kAccept: os << "accept"; break;
      case UpdateDecision::kReject: os << "reject"; break;
      case UpdateDecision::kTerminate: os << "terminate"; break;
    }
    os << '\t' << r.v_old << '\t' << r.v_new << '\t' << r.eta << '\t' << r.seconds << '\n';
  }
  return os.str();
}

}  // namespace marl
