#include "marl/chained.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace marl {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (b != 0 && a > (std::uint64_t{1} << 63) / b) {
    throw std::overflow_error("chained micro-state space exceeds the packable range");
  }
  return a * b;
}

}  // namespace

int effective_horizon(double gamma, double eps, double r_inf) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("effective_horizon: gamma must be in (0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("effective_horizon: eps must be positive");
  if (!(r_inf > 0.0)) throw std::invalid_argument("effective_horizon: r_inf must be positive");
  double h = std::ceil(std::log(r_inf / (eps * (1.0 - gamma))) / (1.0 - gamma));
  if (!(h >= 1.0)) return 1;
  if (h >= 2.0e9) throw std::overflow_error("effective_horizon: horizon does not fit an int");
  return static_cast<int>(h);
}

KChainCoder::KChainCoder(int k, int n_sg, int n_sl) : k_(k), n_sg_(n_sg), n_sl_(n_sl) {
  if (k < 1 || n_sg < 1 || n_sl < 1) {
    throw std::invalid_argument("KChainCoder: dimensions must be positive");
  }
  std::uint64_t b = static_cast<std::uint64_t>(k);
  b = checked_mul(b, static_cast<std::uint64_t>(n_sg));
  b = checked_mul(b, static_cast<std::uint64_t>(n_sg) + 1);
  for (int i = 0; i < k; ++i) b = checked_mul(b, static_cast<std::uint64_t>(n_sl));
  bound_ = b;
}

std::uint64_t KChainCoder::encode(const MicroStateK& s) const {
  std::uint64_t code = static_cast<std::uint64_t>(s.stage - 1);
  code = code * n_sg_ + s.sg;
  code = code * (n_sg_ + 1) + s.pending_sg;
  for (int r : s.replicas) code = code * n_sl_ + r;
  return code;
}

MicroStateK KChainCoder::decode(std::uint64_t code) const {
  MicroStateK s;
  s.replicas.resize(k_);
  for (int i = k_ - 1; i >= 0; --i) {
    s.replicas[i] = static_cast<int>(code % n_sl_);
    code /= n_sl_;
  }
  s.pending_sg = static_cast<int>(code % (n_sg_ + 1));
  code /= n_sg_ + 1;
  s.sg = static_cast<int>(code % n_sg_);
  code /= n_sg_;
  s.stage = static_cast<int>(code) + 1;
  return s;
}

MfChainCoder::MfChainCoder(int k, int n_sg, int n_sl)
    : k_(k), n_sg_(n_sg), n_sl_(n_sl), coalition_coder_(k - 1, n_sl) {
  if (k < 1 || n_sg < 1 || n_sl < 1) {
    throw std::invalid_argument("MfChainCoder: dimensions must be positive");
  }
  coalition_hists_ = enumerate_histograms(k - 1, n_sl);
  std::uint64_t b = static_cast<std::uint64_t>(n_sl) + 1;
  b = checked_mul(b, static_cast<std::uint64_t>(n_sg));
  b = checked_mul(b, static_cast<std::uint64_t>(n_sg) + 1);
  b = checked_mul(b, static_cast<std::uint64_t>(n_sl));
  b = checked_mul(b, static_cast<std::uint64_t>(n_sl) + 1);
  b = checked_mul(b, static_cast<std::uint64_t>(coalition_hists_.size()));
  for (int i = 0; i < n_sl; ++i) b = checked_mul(b, static_cast<std::uint64_t>(k));
  bound_ = b;
}

std::uint64_t MfChainCoder::encode(const MicroStateMF& s) const {
  std::uint64_t code = static_cast<std::uint64_t>(s.stage);
  code = code * n_sg_ + s.sg;
  code = code * (n_sg_ + 1) + s.pending_sg;
  code = code * n_sl_ + s.sl;
  code = code * (n_sl_ + 1) + s.pending_sl;
  code = code * coalition_hists_.size() + static_cast<std::uint64_t>(coalition_coder_.index_of(s.coalition));
  for (int i = 0; i < n_sl_; ++i) code = code * k_ + s.moved[i];
  return code;
}

MicroStateMF MfChainCoder::decode(std::uint64_t code) const {
  MicroStateMF s;
  s.moved.resize(n_sl_);
  for (int i = n_sl_ - 1; i >= 0; --i) {
    s.moved[i] = static_cast<int>(code % k_);
    code /= k_;
  }
  const std::uint64_t nh = coalition_hists_.size();
  s.coalition = coalition_hists_[code % nh].counts;
  code /= nh;
  s.pending_sl = static_cast<int>(code % (n_sl_ + 1));
  code /= n_sl_ + 1;
  s.sl = static_cast<int>(code % n_sl_);
  code /= n_sl_;
  s.pending_sg = static_cast<int>(code % (n_sg_ + 1));
  code /= n_sg_ + 1;
  s.sg = static_cast<int>(code % n_sg_);
  code /= n_sg_;
  s.stage = static_cast<int>(code);
  return s;
}

namespace {

// Compositions w of `total` over p.size() bins with multinomial probabilities;
// zero-probability branches are pruned. Coefficients chain exactly as
// C(remaining, w_i) products, each factor small enough for int64.
template <typename F>
void for_each_composition(int total, std::span<const double> p, std::vector<int>& w, int slot,
                          double prob, F&& emit) {
  const int last = static_cast<int>(p.size()) - 1;
  if (slot == last) {
    if (total > 0 && p[slot] <= 0.0) return;
    w[slot] = total;
    emit(w, prob * std::pow(p[slot], total));
    return;
  }
  for (int c = 0; c <= total; ++c) {
    if (c > 0 && p[slot] <= 0.0) break;
    w[slot] = c;
    double f = prob * static_cast<double>(binomial(total, c)) * std::pow(p[slot], c);
    if (f <= 0.0 && c > 0) continue;
    for_each_composition(total - c, p, w, slot + 1, f, emit);
  }
}

class KChainLaw final : public ChainLawBase {
 public:
  KChainLaw(const ModelSpec& model, const GlobalPolicy& pi_g, int k, double reward_scale)
      : model_(&model),
        pi_g_(&pi_g),
        k_(k),
        step_scale_(reward_scale / model.n_agents),
        coder_(k, model.n_sg, model.n_sl) {
    if (!(reward_scale > 0.0)) {
      throw std::invalid_argument("k-chain law: reward_scale must be positive");
    }
    if (pi_g.param != Parameterization::kStandard || pi_g.k != k || pi_g.n_sg != model.n_sg ||
        pi_g.n_sl != model.n_sl || pi_g.n_ag != model.n_ag) {
      throw std::invalid_argument("k-chain law: pi_g must be tuple-keyed with matching dimensions");
    }
    max_base_ = std::max(0.0, step_scale_ * model.max_local_reward());
  }

  int n_actions() const override { return model_->n_al; }
  int chain_len() const override { return k_; }
  ChainedKind kind() const override { return ChainedKind::kReplicaChain; }
  std::uint64_t space_bound() const override { return coder_.space_bound(); }

  void successors(std::uint64_t code, int action,
                  std::vector<std::pair<std::uint64_t, double>>& out) const override {
    out.clear();
    const MicroStateK st = coder_.decode(code);
    const int n_sg = model_->n_sg;
    const int n_sl = model_->n_sl;
    std::vector<std::pair<int, double>> pend;
    if (st.pending_sg == n_sg) {
      // Stage 1: sample the dispatcher move, keyed on the pre-update tuple.
      auto pirow = pi_g_->row(st.sg, encode_tuple(st.replicas, n_sl));
      std::vector<double> mix(n_sg, 0.0);
      for (int ag = 0; ag < model_->n_ag; ++ag) {
        double w = pirow[ag];
        if (w <= 0.0) continue;
        auto prow = model_->pg.row(st.sg, ag);
        for (int sg2 = 0; sg2 < n_sg; ++sg2) mix[sg2] += w * prow[sg2];
      }
      for (int sg2 = 0; sg2 < n_sg; ++sg2) {
        if (mix[sg2] > 0.0) pend.emplace_back(sg2, mix[sg2]);
      }
    } else {
      pend.emplace_back(st.pending_sg, 1.0);
    }
    const int j = st.stage;
    auto plrow = model_->pl.row(st.replicas[j - 1], st.sg, action);
    MicroStateK nxt = st;
    for (const auto& [pg2, p1] : pend) {
      for (int sl2 = 0; sl2 < n_sl; ++sl2) {
        double p2 = plrow[sl2];
        if (p2 <= 0.0) continue;
        nxt.replicas[j - 1] = sl2;
        if (j < k_) {
          nxt.stage = j + 1;
          nxt.sg = st.sg;
          nxt.pending_sg = pg2;
        } else {
          nxt.stage = 1;
          nxt.sg = pg2;
          nxt.pending_sg = n_sg;
        }
        out.emplace_back(coder_.encode(nxt), p1 * p2);
      }
    }
  }

  std::uint64_t sample_successor(std::uint64_t code, int action, Rng& rng) const override {
    const MicroStateK st = coder_.decode(code);
    const int n_sg = model_->n_sg;
    int pend;
    if (st.pending_sg == n_sg) {
      auto pirow = pi_g_->row(st.sg, encode_tuple(st.replicas, model_->n_sl));
      int ag = sample_index(pirow, rng);
      pend = sample_index(model_->pg.row(st.sg, ag), rng);
    } else {
      pend = st.pending_sg;
    }
    const int j = st.stage;
    int sl2 = sample_index(model_->pl.row(st.replicas[j - 1], st.sg, action), rng);
    MicroStateK nxt = st;
    nxt.replicas[j - 1] = sl2;
    if (j < k_) {
      nxt.stage = j + 1;
      nxt.pending_sg = pend;
    } else {
      nxt.stage = 1;
      nxt.sg = pend;
      nxt.pending_sg = n_sg;
    }
    return coder_.encode(nxt);
  }

  double base_reward(std::uint64_t code, int action) const override {
    const MicroStateK st = coder_.decode(code);
    if (st.stage != 1) return 0.0;
    return step_scale_ * model_->local_reward(st.replicas[0], st.sg, action);
  }

  double max_base_reward() const override { return max_base_; }

  std::pair<int, int> context(std::uint64_t code) const override {
    const MicroStateK st = coder_.decode(code);
    return {st.replicas[st.stage - 1], st.sg};
  }

  void initial_states(std::vector<std::pair<std::uint64_t, double>>& out) const override {
    out.clear();
    const int n_sg = model_->n_sg;
    const int n_sl = model_->n_sl;
    double count = n_sg * std::pow(static_cast<double>(n_sl), k_);
    if (count > 2.0e6) {
      throw std::length_error("k-chain initial distribution too large to enumerate");
    }
    const double p = (1.0 / n_sg) * std::pow(1.0 / n_sl, k_);
    MicroStateK st;
    st.stage = 1;
    st.pending_sg = n_sg;
    st.replicas.assign(k_, 0);
    for (int sg = 0; sg < n_sg; ++sg) {
      st.sg = sg;
      std::fill(st.replicas.begin(), st.replicas.end(), 0);
      for (;;) {
        out.emplace_back(coder_.encode(st), p);
        int i = k_ - 1;
        while (i >= 0 && st.replicas[i] == n_sl - 1) st.replicas[i--] = 0;
        if (i < 0) break;
        ++st.replicas[i];
      }
    }
  }

  std::uint64_t sample_initial_code(Rng& rng) const override {
    MicroStateK st;
    st.stage = 1;
    st.sg = rng.next_below(model_->n_sg);
    st.pending_sg = model_->n_sg;
    st.replicas.resize(k_);
    for (int& r : st.replicas) r = rng.next_below(model_->n_sl);
    return coder_.encode(st);
  }

 private:
  const ModelSpec* model_;
  const GlobalPolicy* pi_g_;
  int k_;
  double step_scale_;
  double max_base_ = 0.0;
  KChainCoder coder_;
};

class MfChainLaw final : public ChainLawBase {
 public:
  MfChainLaw(const ModelSpec& model, const GlobalPolicy& pi_g, int k, double reward_scale)
      : model_(&model),
        pi_g_(&pi_g),
        k_(k),
        step_scale_(reward_scale / model.n_agents),
        coder_(k, model.n_sg, model.n_sl),
        key_coder_(k, model.n_sl) {
    if (!(reward_scale > 0.0)) {
      throw std::invalid_argument("mean-field chain law: reward_scale must be positive");
    }
    if (pi_g.param != Parameterization::kMeanField || pi_g.k != k || pi_g.n_sg != model.n_sg ||
        pi_g.n_sl != model.n_sl || pi_g.n_ag != model.n_ag) {
      throw std::invalid_argument(
          "mean-field chain law: pi_g must be histogram-keyed with matching dimensions");
    }
    max_base_ = std::max(0.0, step_scale_ * model.max_local_reward());
  }

  int n_actions() const override { return model_->n_al; }
  int chain_len() const override { return model_->n_sl + 1; }
  ChainedKind kind() const override { return ChainedKind::kMeanFieldChain; }
  std::uint64_t space_bound() const override { return coder_.space_bound(); }

  void successors(std::uint64_t code, int action,
                  std::vector<std::pair<std::uint64_t, double>>& out) const override {
    out.clear();
    const MicroStateMF st = coder_.decode(code);
    const int n_sg = model_->n_sg;
    const int n_sl = model_->n_sl;
    if (st.stage == 0) {
      // Tagged-agent stage: cache the dispatcher and tagged moves, keyed on
      // the histogram of coalition plus tagged agent.
      std::vector<int> counts = st.coalition;
      counts[st.sl] += 1;
      auto pirow = pi_g_->row(st.sg, key_coder_.index_of(counts));
      std::vector<double> mix(n_sg, 0.0);
      for (int ag = 0; ag < model_->n_ag; ++ag) {
        double w = pirow[ag];
        if (w <= 0.0) continue;
        auto prow = model_->pg.row(st.sg, ag);
        for (int sg2 = 0; sg2 < n_sg; ++sg2) mix[sg2] += w * prow[sg2];
      }
      auto plrow = model_->pl.row(st.sl, st.sg, action);
      MicroStateMF nxt = st;
      nxt.stage = 1;
      nxt.moved.assign(n_sl, 0);
      for (int sg2 = 0; sg2 < n_sg; ++sg2) {
        if (mix[sg2] <= 0.0) continue;
        nxt.pending_sg = sg2;
        for (int sl2 = 0; sl2 < n_sl; ++sl2) {
          double p2 = plrow[sl2];
          if (p2 <= 0.0) continue;
          nxt.pending_sl = sl2;
          out.emplace_back(coder_.encode(nxt), mix[sg2] * p2);
        }
      }
      return;
    }
    // Coalition stage u moves the coalition(u-1) agents by one multinomial draw.
    const int bin = st.stage - 1;
    const int c = st.coalition[bin];
    auto plrow = model_->pl.row(bin, st.sg, action);
    const bool commit = st.stage == n_sl;
    std::vector<int> w(n_sl, 0);
    MicroStateMF nxt = st;
    for_each_composition(c, plrow, w, 0, 1.0,
                         [&](const std::vector<int>& comp, double prob) {
                           if (prob <= 0.0) return;
                           if (!commit) {
                             nxt.stage = st.stage + 1;
                             for (int i = 0; i < n_sl; ++i) nxt.moved[i] = st.moved[i] + comp[i];
                           } else {
                             nxt.stage = 0;
                             nxt.sg = st.pending_sg;
                             nxt.pending_sg = n_sg;
                             nxt.sl = st.pending_sl;
                             nxt.pending_sl = n_sl;
                             nxt.coalition.resize(n_sl);
                             for (int i = 0; i < n_sl; ++i) nxt.coalition[i] = st.moved[i] + comp[i];
                             nxt.moved.assign(n_sl, 0);
                           }
                           out.emplace_back(coder_.encode(nxt), prob);
                         });
  }

  std::uint64_t sample_successor(std::uint64_t code, int action, Rng& rng) const override {
    const MicroStateMF st = coder_.decode(code);
    const int n_sg = model_->n_sg;
    const int n_sl = model_->n_sl;
    MicroStateMF nxt = st;
    if (st.stage == 0) {
      std::vector<int> counts = st.coalition;
      counts[st.sl] += 1;
      auto pirow = pi_g_->row(st.sg, key_coder_.index_of(counts));
      int ag = sample_index(pirow, rng);
      nxt.stage = 1;
      nxt.pending_sg = sample_index(model_->pg.row(st.sg, ag), rng);
      nxt.pending_sl = sample_index(model_->pl.row(st.sl, st.sg, action), rng);
      nxt.moved.assign(n_sl, 0);
      return coder_.encode(nxt);
    }
    const int bin = st.stage - 1;
    const int c = st.coalition[bin];
    const auto w = sample_multinomial(c, model_->pl.row(bin, st.sg, action), rng);
    if (st.stage < n_sl) {
      nxt.stage = st.stage + 1;
      for (int i = 0; i < n_sl; ++i) nxt.moved[i] = st.moved[i] + w[i];
    } else {
      nxt.stage = 0;
      nxt.sg = st.pending_sg;
      nxt.pending_sg = n_sg;
      nxt.sl = st.pending_sl;
      nxt.pending_sl = n_sl;
      for (int i = 0; i < n_sl; ++i) nxt.coalition[i] = st.moved[i] + w[i];
      nxt.moved.assign(n_sl, 0);
    }
    return coder_.encode(nxt);
  }

  double base_reward(std::uint64_t code, int action) const override {
    const MicroStateMF st = coder_.decode(code);
    if (st.stage != 0) return 0.0;
    return step_scale_ * model_->local_reward(st.sl, st.sg, action);
  }

  double max_base_reward() const override { return max_base_; }

  std::pair<int, int> context(std::uint64_t code) const override {
    const MicroStateMF st = coder_.decode(code);
    if (st.stage == 0) return {st.sl, st.sg};
    return {st.stage - 1, st.sg};
  }

  void initial_states(std::vector<std::pair<std::uint64_t, double>>& out) const override {
    out.clear();
    const int n_sg = model_->n_sg;
    const int n_sl = model_->n_sl;
    const auto hists = enumerate_histograms(k_ - 1, n_sl);
    const double base = (1.0 / n_sg) * (1.0 / n_sl) * std::pow(1.0 / n_sl, k_ - 1);
    MicroStateMF st;
    st.stage = 0;
    st.pending_sg = n_sg;
    st.pending_sl = n_sl;
    st.moved.assign(n_sl, 0);
    for (const auto& h : hists) {
      double coeff = 1.0;
      int remaining = k_ - 1;
      for (int b = 0; b < n_sl; ++b) {
        coeff *= static_cast<double>(binomial(remaining, h.counts[b]));
        remaining -= h.counts[b];
      }
      st.coalition = h.counts;
      for (int sg = 0; sg < n_sg; ++sg) {
        st.sg = sg;
        for (int sl = 0; sl < n_sl; ++sl) {
          st.sl = sl;
          out.emplace_back(coder_.encode(st), base * coeff);
        }
      }
    }
  }

  std::uint64_t sample_initial_code(Rng& rng) const override {
    MicroStateMF st;
    st.stage = 0;
    st.sg = rng.next_below(model_->n_sg);
    st.pending_sg = model_->n_sg;
    st.sl = rng.next_below(model_->n_sl);
    st.pending_sl = model_->n_sl;
    st.coalition.assign(model_->n_sl, 0);
    for (int i = 0; i < k_ - 1; ++i) ++st.coalition[rng.next_below(model_->n_sl)];
    st.moved.assign(model_->n_sl, 0);
    return coder_.encode(st);
  }

 private:
  const ModelSpec* model_;
  const GlobalPolicy* pi_g_;
  int k_;
  double step_scale_;
  double max_base_ = 0.0;
  MfChainCoder coder_;
  HistogramCoder key_coder_;
};

void merge_duplicate_ids(std::vector<std::pair<int, double>>& row) {
  std::sort(row.begin(), row.end());
  std::size_t w = 0;
  for (std::size_t r = 0; r < row.size(); ++r) {
    if (w > 0 && row[w - 1].first == row[r].first) {
      row[w - 1].second += row[r].second;
    } else {
      row[w++] = row[r];
    }
  }
  row.resize(w);
}

ChainedMdp build_from_law(const ValidatedModel& model, std::unique_ptr<ChainLawBase> law,
                          int macro_horizon, double reward_scale, int max_states) {
  if (macro_horizon < 1) {
    throw std::invalid_argument("chained build: macro_horizon must be at least 1");
  }
  if (max_states < 1) throw std::invalid_argument("chained build: max_states must be positive");

  ChainedMdp out;
  out.kind = law->kind();
  out.chain_len = law->chain_len();
  out.macro_horizon = macro_horizon;
  out.reward_scale = reward_scale;

  std::vector<std::pair<std::uint64_t, double>> init;
  law->initial_states(init);
  std::sort(init.begin(), init.end());

  std::unordered_map<std::uint64_t, int> ids;
  std::vector<std::uint64_t>& codes = out.codes;
  auto id_of = [&](std::uint64_t code) {
    auto [it, fresh] = ids.try_emplace(code, static_cast<int>(codes.size()));
    if (fresh) {
      if (static_cast<int>(codes.size()) >= max_states) {
        throw std::length_error("chained build: reachable state count exceeds max_states");
      }
      codes.push_back(code);
    }
    return it->second;
  };
  for (const auto& [code, p] : init) id_of(code);

  const int n_a = law->n_actions();
  std::vector<std::vector<std::pair<int, double>>> rows;
  std::vector<double> reward_base;
  std::vector<std::pair<std::uint64_t, double>> succ;
  for (int s = 0; s < static_cast<int>(codes.size()); ++s) {
    for (int a = 0; a < n_a; ++a) {
      law->successors(codes[s], a, succ);
      std::vector<std::pair<int, double>> row;
      row.reserve(succ.size());
      for (const auto& [c2, p] : succ) row.emplace_back(id_of(c2), p);
      merge_duplicate_ids(row);
      rows.push_back(std::move(row));
      reward_base.push_back(law->base_reward(codes[s], a));
    }
  }

  EpisodicMDP& mdp = out.mdp;
  mdp.n_states = static_cast<int>(codes.size());
  mdp.n_actions = n_a;
  mdp.horizon = macro_horizon * out.chain_len;
  mdp.rows = std::move(rows);
  mdp.time_factored = true;
  mdp.reward_base = std::move(reward_base);
  mdp.time_weight.resize(mdp.horizon);
  for (int t = 0; t < mdp.horizon; ++t) {
    mdp.time_weight[t] = std::pow(model->gamma, t / out.chain_len);
  }
  mdp.initial.assign(mdp.n_states, 0.0);
  for (const auto& [code, p] : init) mdp.initial[ids.at(code)] += p;
  out.context.resize(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) out.context[s] = law->context(codes[s]);
  return out;
}

}  // namespace

std::unique_ptr<ChainLawBase> make_k_chain_law(const ModelSpec& model, const GlobalPolicy& pi_g,
                                               int k, double reward_scale) {
  return std::make_unique<KChainLaw>(model, pi_g, k, reward_scale);
}

std::unique_ptr<ChainLawBase> make_meanfield_chain_law(const ModelSpec& model,
                                                       const GlobalPolicy& pi_g, int k,
                                                       double reward_scale) {
  return std::make_unique<MfChainLaw>(model, pi_g, k, reward_scale);
}

ChainedMdp build_k_chained(const ValidatedModel& model, const GlobalPolicy& pi_g, int k,
                           int macro_horizon, double reward_scale, int max_states) {
  return build_from_law(model, make_k_chain_law(model.spec(), pi_g, k, reward_scale),
                        macro_horizon, reward_scale, max_states);
}

ChainedMdp build_meanfield_chained(const ValidatedModel& model, const GlobalPolicy& pi_g, int k,
                                   int macro_horizon, double reward_scale, int max_states) {
  return build_from_law(model, make_meanfield_chain_law(model.spec(), pi_g, k, reward_scale),
                        macro_horizon, reward_scale, max_states);
}

LazyChainEnv::LazyChainEnv(std::unique_ptr<ChainLawBase> law, int macro_horizon, double gamma)
    : law_(std::move(law)) {
  if (macro_horizon < 1) {
    throw std::invalid_argument("LazyChainEnv: macro_horizon must be at least 1");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("LazyChainEnv: gamma must be in (0, 1)");
  }
  horizon_ = macro_horizon * law_->chain_len();
  time_weight_.resize(horizon_);
  for (int t = 0; t < horizon_; ++t) time_weight_[t] = std::pow(gamma, t / law_->chain_len());
}

std::int64_t LazyChainEnv::state_space_bound() const {
  const std::uint64_t cap = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());
  return static_cast<std::int64_t>(std::min(law_->space_bound(), cap));
}

int LazyChainEnv::id_of(std::uint64_t code) {
  auto [it, fresh] = ids_.try_emplace(code, static_cast<int>(codes_.size()));
  if (fresh) codes_.push_back(code);
  return it->second;
}

void LazyChainEnv::ensure_row(int s, int a) {
  if (s < 0 || s >= static_cast<int>(codes_.size())) {
    throw std::out_of_range("LazyChainEnv: state id not materialized");
  }
  const int n_a = law_->n_actions();
  if (a < 0 || a >= n_a) throw std::out_of_range("LazyChainEnv: action out of range");
  const std::size_t idx = static_cast<std::size_t>(s) * n_a + a;
  if (idx >= row_ready_.size()) {
    const std::size_t need = codes_.size() * static_cast<std::size_t>(n_a);
    rows_.resize(need);
    row_ready_.resize(need, 0);
  }
  if (row_ready_[idx]) return;
  law_->successors(codes_[s], a, scratch_);
  std::vector<std::pair<int, double>> row;
  row.reserve(scratch_.size());
  for (const auto& [c2, p] : scratch_) row.emplace_back(id_of(c2), p);
  merge_duplicate_ids(row);
  rows_[idx] = std::move(row);
  row_ready_[idx] = 1;
}

int LazyChainEnv::sample_next(int s, int a, Rng& rng) {
  if (s < 0 || s >= static_cast<int>(codes_.size())) {
    throw std::out_of_range("LazyChainEnv: state id not materialized");
  }
  return id_of(law_->sample_successor(codes_[s], a, rng));
}

double LazyChainEnv::reward(int t, int s, int a) {
  if (s < 0 || s >= static_cast<int>(codes_.size())) {
    throw std::out_of_range("LazyChainEnv: state id not materialized");
  }
  return law_->base_reward(codes_[s], a) * time_weight_.at(t);
}

const std::vector<std::pair<int, double>>& LazyChainEnv::support(int s, int a) {
  ensure_row(s, a);
  return rows_[static_cast<std::size_t>(s) * law_->n_actions() + a];
}

double LazyChainEnv::max_reward_at(int t) { return law_->max_base_reward() * time_weight_.at(t); }

EpisodicMDP state_action_to_state_reward(const EpisodicMDP& mdp) {
  const int S = mdp.n_states;
  const int A = mdp.n_actions;
  const int H = mdp.horizon;
  if (S < 1 || A < 1 || H < 1) {
    throw std::invalid_argument("state_action_to_state_reward: empty MDP");
  }
  if (static_cast<int>(mdp.initial.size()) != S) {
    throw std::invalid_argument("state_action_to_state_reward: initial distribution required");
  }
  EpisodicMDP out;
  out.n_states = S * A + S;
  out.n_actions = A + 1;
  out.horizon = 2 * H;
  const int wait = A;
  const int decider0 = S * A;
  out.rows.resize(static_cast<std::size_t>(out.n_states) * out.n_actions);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      // Committed (s, a): every action behaves alike, move to the successor's decider.
      std::vector<std::pair<int, double>> row;
      row.reserve(mdp.row(s, a).size());
      for (const auto& [s2, p] : mdp.row(s, a)) row.emplace_back(decider0 + s2, p);
      const std::size_t base = static_cast<std::size_t>(s * A + a) * out.n_actions;
      for (int u = 0; u < A; ++u) out.rows[base + u] = row;
      out.rows[base + wait] = std::move(row);
    }
    const std::size_t base = static_cast<std::size_t>(decider0 + s) * out.n_actions;
    for (int u = 0; u < A; ++u) out.rows[base + u] = {{s * A + u, 1.0}};
    out.rows[base + wait] = {{decider0 + s, 1.0}};
  }
  if (mdp.time_factored) {
    out.time_factored = true;
    out.reward_base.assign(static_cast<std::size_t>(out.n_states) * out.n_actions, 0.0);
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const double b = mdp.reward_base[static_cast<std::size_t>(s) * A + a];
        const std::size_t base = static_cast<std::size_t>(s * A + a) * out.n_actions;
        for (int u = 0; u <= A; ++u) out.reward_base[base + u] = b;
      }
    }
    // Rewards land on the commitment step only (odd times).
    out.time_weight.assign(out.horizon, 0.0);
    for (int t = 0; t < H; ++t) out.time_weight[2 * t + 1] = mdp.time_weight[t];
  } else {
    const std::size_t volume =
        static_cast<std::size_t>(out.horizon) * out.n_states * out.n_actions;
    if (volume > 100'000'000) {
      throw std::length_error("state_action_to_state_reward: full reward table too large");
    }
    out.time_factored = false;
    out.reward_full.assign(volume, 0.0);
    for (int t = 0; t < H; ++t) {
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          const double r = mdp.reward(t, s, a);
          const std::size_t base =
              (static_cast<std::size_t>(2 * t + 1) * out.n_states + s * A + a) * out.n_actions;
          for (int u = 0; u <= A; ++u) out.reward_full[base + u] = r;
        }
      }
    }
  }
  out.initial.assign(out.n_states, 0.0);
  for (int s = 0; s < S; ++s) out.initial[decider0 + s] = mdp.initial[s];
  return out;
}

LocalPolicyExtraction extract_local_policy(const std::vector<int>& micro_actions,
                                           const std::vector<double>& weights,
                                           const std::vector<std::pair<int, int>>& contexts,
                                           const ModelSpec& model) {
  const int n_sl = model.n_sl;
  const int n_sg = model.n_sg;
  const int n_al = model.n_al;
  if (micro_actions.size() != contexts.size() || weights.size() != contexts.size()) {
    throw std::invalid_argument("extract_local_policy: input sizes differ");
  }
  std::vector<double> votes(static_cast<std::size_t>(n_sl) * n_sg * n_al, 0.0);
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const auto [sl, sg] = contexts[i];
    const int a = micro_actions[i];
    const double w = weights[i];
    if (sl < 0 || sl >= n_sl || sg < 0 || sg >= n_sg) {
      throw std::out_of_range("extract_local_policy: context out of range");
    }
    if (a < 0 || a >= n_al) throw std::out_of_range("extract_local_policy: action out of range");
    if (w < 0.0) throw std::invalid_argument("extract_local_policy: negative weight");
    votes[(static_cast<std::size_t>(sl) * n_sg + sg) * n_al + a] += w;
  }
  LocalPolicyExtraction out;
  std::vector<int> actions(static_cast<std::size_t>(n_sl) * n_sg, 0);
  for (int sl = 0; sl < n_sl; ++sl) {
    for (int sg = 0; sg < n_sg; ++sg) {
      const double* v = &votes[(static_cast<std::size_t>(sl) * n_sg + sg) * n_al];
      double total = 0.0;
      for (int a = 0; a < n_al; ++a) total += v[a];
      int arg = 0;
      int ties = 1;
      double best = v[0];
      for (int a = 1; a < n_al; ++a) {
        if (v[a] > best) {
          best = v[a];
          arg = a;
          ties = 1;
        } else if (v[a] == best) {
          ++ties;
        }
      }
      if (total <= 0.0) {
        out.defaulted.emplace_back(sl, sg);
        arg = 0;
      } else if (ties > 1) {
        out.conflicted.emplace_back(sl, sg);
      }
      actions[static_cast<std::size_t>(sl) * n_sg + sg] = arg;
    }
  }
  out.policy = LocalPolicy::from_actions(n_sl, n_sg, n_al, actions);
  return out;
}

}  // namespace marl
