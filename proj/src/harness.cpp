#include "marl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace marl {

using nlohmann::json;

OutputFormat parse_format(const std::string& name) {
  if (name == "csv") return OutputFormat::kCsv;
  if (name == "json") return OutputFormat::kJson;
  throw std::invalid_argument("unknown output format: " + name);
}

std::string format_name(OutputFormat format) {
  return format == OutputFormat::kCsv ? "csv" : "json";
}

namespace {

double require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be finite");
  return v;
}

void read_environment(const json& e, WarehouseParams& p) {
  const std::string name = e.value("name", std::string("warehouse"));
  if (name != "warehouse") throw std::invalid_argument("unknown environment: " + name);
  p.n_zones = e.value("n_zones", p.n_zones);
  p.g_target = e.value("g_target", p.g_target);
  p.g_stay = e.value("g_stay", p.g_stay);
  p.g_base = e.value("g_base", p.g_base);
  p.l_stay = e.value("l_stay", p.l_stay);
  p.l_move = e.value("l_move", p.l_move);
  p.l_global = e.value("l_global", p.l_global);
  p.l_base = e.value("l_base", p.l_base);
  p.g_peak = e.value("g_peak", p.g_peak);
  p.aligned_reward = e.value("aligned_reward", p.aligned_reward);
  p.misaligned_scale = e.value("misaligned_scale", p.misaligned_scale);
  p.bonus_stay = e.value("bonus_stay", p.bonus_stay);
  p.bonus_cw = e.value("bonus_cw", p.bonus_cw);
  p.bonus_ccw = e.value("bonus_ccw", p.bonus_ccw);
  p.dirichlet_alpha = e.value("dirichlet_alpha", p.dirichlet_alpha);
  p.shift_nonneg = e.value("shift_nonneg", p.shift_nonneg);
}

// Commas, tabs and newlines would break the CSV row shape.
std::string sanitize_field(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\t' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string fmt_seconds(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

AlternatingConfig cell_config(const RunConfig& cfg, int k, std::uint64_t seed) {
  AlternatingConfig acfg;
  acfg.k = k;
  acfg.n_steps = cfg.n_steps;
  acfg.delta = cfg.delta;
  acfg.eta_override = cfg.eta_override;
  acfg.seed = seed;
  acfg.m = cfg.m;
  acfg.ucfh = cfg.ucfh;
  acfg.l_eps = cfg.l_eps;
  acfg.dense_max_states = cfg.dense_max_states;
  acfg.value_rollouts = cfg.value_rollouts;
  acfg.eval_horizon = cfg.horizon;
  acfg.eval_rollouts = cfg.rollouts;
  return acfg;
}

struct CellOutcome {
  ResultRecord record;
  std::optional<AlternatingResult> trained;  // absent when the cell failed
};

CellOutcome run_cell(const ValidatedModel& model, const RunConfig& cfg, int k,
                     std::uint64_t seed) {
  CellOutcome cell;
  ResultRecord& rec = cell.record;
  rec.k = k;
  rec.seed = seed;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    AlternatingResult trained = alternating_marl(model, cell_config(cfg, k, seed));
    rec.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.iterations = trained.iterations;
    rec.termination = trained.terminated ? "terminated" : "step_limit";

    const EvalReport rep =
        evaluate(model, trained.pi_g, trained.pi_l, k, cfg.horizon,
                 InitialDist::dirichlet(cfg.environment.dirichlet_alpha), cfg.rollouts,
                 Rng::mix(seed, 0x726573756c747321ull));
    rec.mean_return = rep.mean;
    rec.std_err = rep.std_err;
    rec.mode_rate = rep.mode_rate;
    cell.trained = std::move(trained);
  } catch (const std::exception& e) {
    rec = ResultRecord{};
    rec.k = k;
    rec.seed = seed;
    rec.termination = "failed: " + sanitize_field(e.what());
    cell.trained.reset();
  }
  return cell;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg;
  try {
    if (j.contains("environment")) read_environment(j.at("environment"), cfg.environment);
    cfg.n_agents = j.value("n_agents", cfg.n_agents);
    cfg.k_list = j.at("k_list").get<std::vector<int>>();
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.m = j.value("m", cfg.m);
    cfg.n_steps = j.value("n_steps", cfg.n_steps);
    cfg.gamma = require_finite(j.value("gamma", cfg.gamma), "gamma");
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.rollouts = j.value("rollouts", cfg.rollouts);
    if (j.contains("eta_override") && !j.at("eta_override").is_null()) {
      cfg.eta_override = require_finite(j.at("eta_override").get<double>(), "eta_override");
    }
    cfg.delta = require_finite(j.value("delta", cfg.delta), "delta");
    if (j.contains("ucfh")) {
      const json& u = j.at("ucfh");
      cfg.ucfh.epsilon = require_finite(u.value("epsilon", cfg.ucfh.epsilon), "ucfh.epsilon");
      cfg.ucfh.delta = require_finite(u.value("delta", cfg.ucfh.delta), "ucfh.delta");
      cfg.ucfh.max_episodes = u.value("max_episodes", cfg.ucfh.max_episodes);
      if (u.contains("max_updates") && !u.at("max_updates").is_null()) {
        cfg.ucfh.max_updates = u.at("max_updates").get<std::int64_t>();
      }
      if (u.contains("m_override") && !u.at("m_override").is_null()) {
        cfg.ucfh.m_override = u.at("m_override").get<std::int64_t>();
      }
    }
    if (j.contains("l_eps") && !j.at("l_eps").is_null()) {
      cfg.l_eps = require_finite(j.at("l_eps").get<double>(), "l_eps");
    }
    cfg.dense_max_states = j.value("dense_max_states", cfg.dense_max_states);
    cfg.value_rollouts = j.value("value_rollouts", cfg.value_rollouts);
    cfg.out = j.value("out", cfg.out);
    if (j.contains("format")) cfg.format = parse_format(j.at("format").get<std::string>());
    cfg.jobs = j.value("jobs", cfg.jobs);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config field error: ") + e.what());
  }
  cfg.environment.n_agents = cfg.n_agents;
  cfg.environment.gamma = cfg.gamma;
  validate_run_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

void validate_run_config(const RunConfig& cfg) {
  if (cfg.n_agents < 1) throw std::invalid_argument("n_agents must be positive");
  if (cfg.k_list.empty()) throw std::invalid_argument("k_list must be non-empty");
  if (cfg.seeds.empty()) throw std::invalid_argument("seeds must be non-empty");
  for (int k : cfg.k_list) {
    if (k < 1 || k > cfg.n_agents) {
      throw std::invalid_argument("every k must lie in [1, n_agents]");
    }
  }
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) throw std::invalid_argument("gamma must be in (0, 1)");
  if (cfg.m < 1) throw std::invalid_argument("m must be positive");
  if (cfg.n_steps < 1) throw std::invalid_argument("n_steps must be positive");
  if (cfg.horizon < 1) throw std::invalid_argument("horizon must be positive");
  if (cfg.rollouts < 1) throw std::invalid_argument("rollouts must be positive");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
  if (cfg.dense_max_states < 1) throw std::invalid_argument("dense_max_states must be positive");
  if (cfg.value_rollouts < 1) throw std::invalid_argument("value_rollouts must be positive");
  if (cfg.jobs < 1) throw std::invalid_argument("jobs must be positive");
  if (cfg.environment.n_zones < 2) throw std::invalid_argument("n_zones must be at least 2");
}

void resolve_seeds(RunConfig& cfg, std::optional<std::uint64_t> flag_seed, const char* env_seed) {
  if (flag_seed) {
    cfg.seeds = {*flag_seed};
    return;
  }
  if (env_seed != nullptr && *env_seed != '\0') {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env_seed, &end, 10);
    if (errno != 0 || end == env_seed || *end != '\0') {
      throw std::invalid_argument(std::string("MARL_SEED is not an unsigned integer: ") +
                                  env_seed);
    }
    cfg.seeds = {static_cast<std::uint64_t>(v)};
  }
}

bool operator==(const ResultRecord& a, const ResultRecord& b) {
  return a.k == b.k && a.seed == b.seed && a.mean_return == b.mean_return &&
         a.std_err == b.std_err && a.train_seconds == b.train_seconds &&
         a.iterations == b.iterations && a.termination == b.termination &&
         a.mode_rate == b.mode_rate;
}

std::vector<ResultRecord> run_experiment(const RunConfig& cfg) {
  validate_run_config(cfg);
  const ValidatedModel model = build_warehouse(cfg.environment);

  struct Cell {
    int k;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  cells.reserve(cfg.k_list.size() * cfg.seeds.size());
  for (int k : cfg.k_list) {
    for (std::uint64_t s : cfg.seeds) cells.push_back({k, s});
  }
  std::sort(cells.begin(), cells.end(),
            [](const Cell& a, const Cell& b) { return std::tie(a.k, a.seed) < std::tie(b.k, b.seed); });

  std::vector<ResultRecord> out(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      out[i] = run_cell(model, cfg, cells[i].k, cells[i].seed).record;
    }
  };
  const int jobs = std::min<int>(cfg.jobs, static_cast<int>(cells.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

std::string results_csv(const std::vector<ResultRecord>& records) {
  std::ostringstream os;
  os << "k,seed,mean_return,stderr,train_seconds,iterations,termination,mode_rate\n";
  for (const auto& r : records) {
    os << r.k << ',' << r.seed << ',' << fmt_double(r.mean_return) << ','
       << fmt_double(r.std_err) << ',' << fmt_seconds(r.train_seconds) << ',' << r.iterations
       << ',' << sanitize_field(r.termination) << ',' << fmt_double(r.mode_rate) << '\n';
  }
  return os.str();
}

std::string results_json_text(const std::vector<ResultRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) {
    arr.push_back({{"k", r.k},
                   {"seed", r.seed},
                   {"mean_return", r.mean_return},
                   {"stderr", r.std_err},
                   {"train_seconds", r.train_seconds},
                   {"iterations", r.iterations},
                   {"termination", r.termination},
                   {"mode_rate", r.mode_rate}});
  }
  return arr.dump(2) + "\n";
}

std::vector<ResultRecord> records_from_json_text(const std::string& text) {
  json arr;
  try {
    arr = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("results parse error: ") + e.what());
  }
  if (!arr.is_array()) throw std::invalid_argument("results json must be an array");
  std::vector<ResultRecord> out;
  out.reserve(arr.size());
  for (const json& o : arr) {
    ResultRecord r;
    r.k = o.at("k").get<int>();
    r.seed = o.at("seed").get<std::uint64_t>();
    r.mean_return = o.at("mean_return").get<double>();
    r.std_err = o.at("stderr").get<double>();
    r.train_seconds = o.at("train_seconds").get<double>();
    r.iterations = o.at("iterations").get<int>();
    r.termination = o.at("termination").get<std::string>();
    r.mode_rate = o.at("mode_rate").get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

void emit_results(const std::vector<ResultRecord>& records, const std::string& path,
                  OutputFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write results: " + path);
  out << (format == OutputFormat::kCsv ? results_csv(records) : results_json_text(records));
  if (!out) throw std::runtime_error("write failed: " + path);
}

OccupancyTrace occupancy_trace(const RunConfig& cfg, int k, std::uint64_t seed,
                               const std::optional<InitialDist>& init) {
  validate_run_config(cfg);
  if (k < 1 || k > cfg.n_agents) throw std::invalid_argument("trace k must lie in [1, n_agents]");
  const ValidatedModel model = build_warehouse(cfg.environment);

  OccupancyTrace trace;
  trace.k = k;
  trace.seed = seed;
  trace.n_zones = cfg.environment.n_zones;
  CellOutcome cell = run_cell(model, cfg, k, seed);
  trace.record = std::move(cell.record);
  if (!cell.trained) return trace;

  const InitialDist dist =
      init.value_or(InitialDist::dirichlet(cfg.environment.dirichlet_alpha));
  Rng rng(Rng::mix(seed, 0x747261636572756eull));
  const Trajectory traj =
      execute(model, cell.trained->pi_g, cell.trained->pi_l, k, cfg.horizon, dist, rng);

  trace.rows.reserve(traj.steps.size());
  const double n = static_cast<double>(cfg.n_agents);
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const StepRecord& step = traj.steps[t];
    OccupancyRow row;
    row.step = static_cast<int>(t);
    row.occupancy.resize(step.zone_counts.size());
    int mode = 0;
    for (std::size_t z = 0; z < step.zone_counts.size(); ++z) {
      row.occupancy[z] = step.zone_counts[z] / n;
      if (step.zone_counts[z] > step.zone_counts[mode]) mode = static_cast<int>(z);
    }
    row.dispatcher_zone = step.ag;
    row.mode_zone = mode;
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

std::string trace_csv(const OccupancyTrace& trace) {
  std::ostringstream os;
  os << "step";
  for (int z = 0; z < trace.n_zones; ++z) os << ",zone_" << z;
  os << ",dispatcher_zone,mode_zone\n";
  for (const auto& row : trace.rows) {
    os << row.step;
    for (double f : row.occupancy) os << ',' << fmt_double(f);
    os << ',' << row.dispatcher_zone << ',' << row.mode_zone << '\n';
  }
  return os.str();
}

std::string trace_json_text(const OccupancyTrace& trace) {
  json rows = json::array();
  for (const auto& row : trace.rows) {
    rows.push_back({{"step", row.step},
                    {"occupancy", row.occupancy},
                    {"dispatcher_zone", row.dispatcher_zone},
                    {"mode_zone", row.mode_zone}});
  }
  const json o = {{"k", trace.k},
                  {"seed", trace.seed},
                  {"n_zones", trace.n_zones},
                  {"termination", trace.record.termination},
                  {"rows", rows}};
  return o.dump(2) + "\n";
}

void emit_trace(const OccupancyTrace& trace, const std::string& path, OutputFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace: " + path);
  out << (format == OutputFormat::kCsv ? trace_csv(trace) : trace_json_text(trace));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace marl
