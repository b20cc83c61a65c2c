#include "marl/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace marl {

namespace {

constexpr double kRowSumTol = 1e-12;

void check_rows(const std::vector<double>& probs, int n_rows, int row_len,
                const std::string& name) {
  if (static_cast<std::int64_t>(probs.size()) !=
      static_cast<std::int64_t>(n_rows) * row_len) {
    throw std::invalid_argument(name + ": expected " + std::to_string(n_rows) + "x" +
                                std::to_string(row_len) + " entries, got " +
                                std::to_string(probs.size()));
  }
  for (int r = 0; r < n_rows; ++r) {
    double sum = 0.0;
    for (int j = 0; j < row_len; ++j) {
      double p = probs[static_cast<std::size_t>(r) * row_len + j];
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw std::invalid_argument(name + ": negative or non-finite entry at row " +
                                    std::to_string(r) + ", col " + std::to_string(j));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTol) {
      throw std::invalid_argument(name + ": row " + std::to_string(r) + " sums to " +
                                  std::to_string(sum) + ", expected 1 within 1e-12");
    }
  }
}

void check_finite(const std::vector<double>& values, std::size_t expected,
                  const std::string& name) {
  if (values.size() != expected) {
    throw std::invalid_argument(name + ": expected " + std::to_string(expected) +
                                " entries, got " + std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw std::invalid_argument(name + ": non-finite entry at index " + std::to_string(i));
    }
  }
}

}  // namespace

double ModelSpec::max_global_reward() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : rg) m = std::max(m, v);
  return m;
}

double ModelSpec::max_local_reward() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : rl) m = std::max(m, v);
  return m;
}

ValidatedModel validate_model(ModelSpec spec) {
  if (spec.n_agents < 1) throw std::invalid_argument("n_agents must be >= 1");
  if (spec.n_sg < 1) throw std::invalid_argument("n_sg must be >= 1");
  if (spec.n_sl < 1) throw std::invalid_argument("n_sl must be >= 1");
  if (spec.n_ag < 1) throw std::invalid_argument("n_ag must be >= 1");
  if (spec.n_al < 1) throw std::invalid_argument("n_al must be >= 1");
  if (!(spec.gamma > 0.0 && spec.gamma < 1.0)) {
    throw std::invalid_argument("gamma must lie in (0, 1)");
  }
  if (spec.pg.n_sg != spec.n_sg || spec.pg.n_ag != spec.n_ag) {
    throw std::invalid_argument("pg dimensions disagree with model dimensions");
  }
  if (spec.pl.n_sl != spec.n_sl || spec.pl.n_sg != spec.n_sg || spec.pl.n_al != spec.n_al) {
    throw std::invalid_argument("pl dimensions disagree with model dimensions");
  }
  check_rows(spec.pg.probs, spec.n_sg * spec.n_ag, spec.n_sg, "pg");
  check_rows(spec.pl.probs, spec.n_sl * spec.n_sg * spec.n_al, spec.n_sl, "pl");
  check_finite(spec.rg, static_cast<std::size_t>(spec.n_sg) * spec.n_ag, "rg");
  check_finite(spec.rl, static_cast<std::size_t>(spec.n_sl) * spec.n_sg * spec.n_al, "rl");
  return ValidatedModel(std::move(spec));
}

int LocalPolicy::mode_action(int sl, int sg) const {
  auto r = row(sl, sg);
  int best = 0;
  for (int a = 1; a < n_al; ++a) {
    if (r[a] > r[best]) best = a;
  }
  return best;
}

LocalPolicy LocalPolicy::uniform(int n_sl, int n_sg, int n_al) {
  LocalPolicy p{n_sl, n_sg, n_al, {}};
  p.dist.assign(static_cast<std::size_t>(n_sl) * n_sg * n_al, 1.0 / n_al);
  return p;
}

LocalPolicy LocalPolicy::from_actions(int n_sl, int n_sg, int n_al,
                                      const std::vector<int>& actions) {
  if (actions.size() != static_cast<std::size_t>(n_sl) * n_sg) {
    throw std::invalid_argument("from_actions: need one action per (s_l, s_g)");
  }
  LocalPolicy p{n_sl, n_sg, n_al, {}};
  p.dist.assign(static_cast<std::size_t>(n_sl) * n_sg * n_al, 0.0);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] < 0 || actions[i] >= n_al) {
      throw std::invalid_argument("from_actions: action out of range at index " +
                                  std::to_string(i));
    }
    p.dist[i * n_al + actions[i]] = 1.0;
  }
  return p;
}

int Histogram::total() const {
  int t = 0;
  for (int c : counts) t += c;
  return t;
}

Histogram histogram_of(std::span<const int> tuple, int n_sl) {
  Histogram h;
  h.counts.assign(n_sl, 0);
  for (int s : tuple) {
    if (s < 0 || s >= n_sl) throw std::invalid_argument("histogram_of: state out of range");
    h.counts[s]++;
  }
  return h;
}

double tv_distance(const Histogram& a, const Histogram& b) {
  if (a.counts.size() != b.counts.size()) {
    throw std::invalid_argument("tv_distance: histograms over different bin counts");
  }
  int ta = a.total();
  int tb = b.total();
  if (ta == 0 || tb == 0) throw std::invalid_argument("tv_distance: empty histogram");
  double l1 = 0.0;
  for (std::size_t i = 0; i < a.counts.size(); ++i) {
    l1 += std::abs(static_cast<double>(a.counts[i]) / ta -
                   static_cast<double>(b.counts[i]) / tb);
  }
  return 0.5 * l1;
}

namespace {

void enumerate_rec(int remaining, int slot, std::vector<int>& scratch,
                   std::vector<Histogram>& out) {
  int slots = static_cast<int>(scratch.size());
  if (slot == slots - 1) {
    scratch[slot] = remaining;
    out.push_back(Histogram{scratch});
    return;
  }
  for (int c = remaining; c >= 0; --c) {
    scratch[slot] = c;
    enumerate_rec(remaining - c, slot + 1, scratch, out);
  }
}

}  // namespace

std::vector<Histogram> enumerate_histograms(int k, int n_sl) {
  if (k < 0 || n_sl < 1) throw std::invalid_argument("enumerate_histograms: bad arguments");
  std::vector<Histogram> out;
  out.reserve(static_cast<std::size_t>(n_histograms(k, n_sl)));
  std::vector<int> scratch(n_sl, 0);
  enumerate_rec(k, 0, scratch, out);
  return out;
}

std::int64_t binomial(int n, int r) {
  if (r < 0 || r > n) return 0;
  r = std::min(r, n - r);
  std::int64_t result = 1;
  for (int i = 1; i <= r; ++i) {
    // Exact at every step: result holds C(n - r + i - 1, i - 1) * ... pattern
    // keeps divisibility; guard against overflow before multiplying.
    std::int64_t num = n - r + i;
    if (result > std::numeric_limits<std::int64_t>::max() / num) {
      throw std::overflow_error("binomial: value exceeds int64 range");
    }
    result = result * num / i;
  }
  return result;
}

std::int64_t n_histograms(int k, int n_sl) { return binomial(k + n_sl - 1, n_sl - 1); }

HistogramCoder::HistogramCoder(int k, int n_sl) : k_(k), bins_(n_sl) {
  if (k < 0 || n_sl < 1) throw std::invalid_argument("HistogramCoder: bad arguments");
  int span = k + 1;
  contrib_.assign(static_cast<std::size_t>(std::max(0, bins_ - 1)) * span * span, 0);
  for (int i = 0; i + 1 < bins_; ++i) {
    for (int m = 0; m <= k; ++m) {
      // contrib(i, m, c): histograms preceding count c at slot i with mass m left.
      std::int64_t acc = 0;
      for (int c = m; c >= 0; --c) {
        contrib_[(static_cast<std::size_t>(i) * span + m) * span + c] = acc;
        acc += n_histograms(m - c, bins_ - i - 1);
      }
    }
  }
}

std::int64_t HistogramCoder::index_of(std::span<const int> counts) const {
  int span = k_ + 1;
  int remaining = k_;
  std::int64_t rank = 0;
  for (int i = 0; i + 1 < bins_; ++i) {
    rank += contrib_[(static_cast<std::size_t>(i) * span + remaining) * span + counts[i]];
    remaining -= counts[i];
  }
  return rank;
}

std::int64_t histogram_index(const Histogram& h) {
  int slots = static_cast<int>(h.counts.size());
  int remaining = h.total();
  std::int64_t rank = 0;
  for (int i = 0; i + 1 < slots; ++i) {
    // Histograms whose count at position i exceeds h.counts[i] come first.
    for (int c = remaining; c > h.counts[i]; --c) {
      rank += n_histograms(remaining - c, slots - i - 1);
    }
    remaining -= h.counts[i];
  }
  return rank;
}

std::vector<int> representative_tuple(const Histogram& h) {
  std::vector<int> tuple;
  tuple.reserve(h.total());
  for (int s = 0; s < static_cast<int>(h.counts.size()); ++s) {
    for (int c = 0; c < h.counts[s]; ++c) tuple.push_back(s);
  }
  return tuple;
}

std::int64_t encode_tuple(std::span<const int> tuple, int n_sl) {
  std::int64_t code = 0;
  for (int s : tuple) {
    if (s < 0 || s >= n_sl) throw std::invalid_argument("encode_tuple: state out of range");
    if (code > (std::numeric_limits<std::int64_t>::max() - s) / n_sl) {
      throw std::overflow_error("encode_tuple: key space exceeds int64 range");
    }
    code = code * n_sl + s;
  }
  return code;
}

std::vector<int> decode_tuple(std::int64_t code, int k, int n_sl) {
  std::vector<int> tuple(k);
  for (int i = k - 1; i >= 0; --i) {
    tuple[i] = static_cast<int>(code % n_sl);
    code /= n_sl;
  }
  return tuple;
}

std::int64_t key_count(Parameterization param, int k, int n_sl) {
  if (param == Parameterization::kMeanField) return n_histograms(k, n_sl);
  std::int64_t count = 1;
  for (int i = 0; i < k; ++i) {
    if (count > std::numeric_limits<std::int64_t>::max() / n_sl) {
      throw std::overflow_error("key_count: standard key space exceeds int64 range");
    }
    count *= n_sl;
  }
  return count;
}

std::int64_t key_of(Parameterization param, std::span<const int> tuple, int n_sl) {
  if (param == Parameterization::kStandard) return encode_tuple(tuple, n_sl);
  return histogram_index(histogram_of(tuple, n_sl));
}

int GlobalPolicy::mode_action(int sg, std::int64_t key) const {
  auto r = row(sg, key);
  int best = 0;
  for (int a = 1; a < n_ag; ++a) {
    if (r[a] > r[best]) best = a;
  }
  return best;
}

GlobalPolicy GlobalPolicy::uniform(Parameterization param, int k, int n_sg, int n_sl,
                                   int n_ag) {
  GlobalPolicy p;
  p.param = param;
  p.k = k;
  p.n_sg = n_sg;
  p.n_sl = n_sl;
  p.n_ag = n_ag;
  p.n_keys = key_count(param, k, n_sl);
  p.dist.assign(static_cast<std::size_t>(n_sg) * p.n_keys * n_ag, 1.0 / n_ag);
  return p;
}

PolicyGuidedKernel policy_guided_kernel(const LocalKernel& pl, const LocalPolicy& pi_l) {
  if (pl.n_sl != pi_l.n_sl || pl.n_sg != pi_l.n_sg || pl.n_al != pi_l.n_al) {
    throw std::invalid_argument("policy_guided_kernel: kernel/policy dimension mismatch");
  }
  PolicyGuidedKernel out;
  out.n_sl = pl.n_sl;
  out.n_sg = pl.n_sg;
  out.probs.assign(static_cast<std::size_t>(pl.n_sl) * pl.n_sg * pl.n_sl, 0.0);
  for (int sl = 0; sl < pl.n_sl; ++sl) {
    for (int sg = 0; sg < pl.n_sg; ++sg) {
      double* row = out.probs.data() + (static_cast<std::size_t>(sl) * pl.n_sg + sg) * pl.n_sl;
      for (int a = 0; a < pl.n_al; ++a) {
        double w = pi_l.prob(a, sl, sg);
        if (w == 0.0) continue;
        auto krow = pl.row(sl, sg, a);
        for (int sl2 = 0; sl2 < pl.n_sl; ++sl2) row[sl2] += w * krow[sl2];
      }
    }
  }
  return out;
}

SurrogateLocalReward surrogate_local_reward(const ModelSpec& model, const LocalPolicy& pi_l) {
  if (model.n_sl != pi_l.n_sl || model.n_sg != pi_l.n_sg || model.n_al != pi_l.n_al) {
    throw std::invalid_argument("surrogate_local_reward: model/policy dimension mismatch");
  }
  SurrogateLocalReward out;
  out.n_sl = model.n_sl;
  out.n_sg = model.n_sg;
  out.values.assign(static_cast<std::size_t>(model.n_sl) * model.n_sg, 0.0);
  for (int sl = 0; sl < model.n_sl; ++sl) {
    for (int sg = 0; sg < model.n_sg; ++sg) {
      double v = 0.0;
      for (int a = 0; a < model.n_al; ++a) {
        v += pi_l.prob(a, sl, sg) * model.local_reward(sl, sg, a);
      }
      out.values[static_cast<std::size_t>(sl) * model.n_sg + sg] = v;
    }
  }
  return out;
}

namespace {

ModelSpec model_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.n_agents = j.at("n_agents").get<int>();
  spec.n_sg = j.at("n_sg").get<int>();
  spec.n_sl = j.at("n_sl").get<int>();
  spec.n_ag = j.at("n_ag").get<int>();
  spec.n_al = j.at("n_al").get<int>();
  spec.gamma = j.at("gamma").get<double>();
  spec.pg.n_sg = spec.n_sg;
  spec.pg.n_ag = spec.n_ag;
  spec.pg.probs = j.at("pg").get<std::vector<double>>();
  spec.pl.n_sl = spec.n_sl;
  spec.pl.n_sg = spec.n_sg;
  spec.pl.n_al = spec.n_al;
  spec.pl.probs = j.at("pl").get<std::vector<double>>();
  spec.rg = j.at("rg").get<std::vector<double>>();
  spec.rl = j.at("rl").get<std::vector<double>>();
  return spec;
}

nlohmann::json model_to_json(const ModelSpec& spec) {
  return nlohmann::json{{"n_agents", spec.n_agents}, {"n_sg", spec.n_sg},
                        {"n_sl", spec.n_sl},         {"n_ag", spec.n_ag},
                        {"n_al", spec.n_al},         {"gamma", spec.gamma},
                        {"pg", spec.pg.probs},       {"pl", spec.pl.probs},
                        {"rg", spec.rg},             {"rl", spec.rl}};
}

}  // namespace

ValidatedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_model: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return validate_model(model_from_json(j));
}

void save_model(const ValidatedModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("save_model: cannot open " + path);
  out << model_to_json(model.spec()).dump(2) << "\n";
}

std::string model_to_json_string(const ValidatedModel& model) {
  return model_to_json(model.spec()).dump(2);
}

ValidatedModel model_from_json_string(const std::string& text) {
  return validate_model(model_from_json(nlohmann::json::parse(text)));
}

}  // namespace marl
