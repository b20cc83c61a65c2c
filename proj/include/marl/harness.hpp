#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "marl/alternating.hpp"
#include "marl/online_exec.hpp"
#include "marl/warehouse.hpp"

namespace marl {

enum class OutputFormat { kCsv, kJson };

OutputFormat parse_format(const std::string& name);
std::string format_name(OutputFormat format);

// Experiment sweep over every (k, seed) cell of the warehouse benchmark.
// Top-level n_agents and gamma are authoritative; the loader copies them into
// the environment block.
struct RunConfig {
  WarehouseParams environment;
  int n_agents = 1000;
  std::vector<int> k_list;
  std::vector<std::uint64_t> seeds;

  int m = 30;        // dispatcher successor samples per sweep cell
  int n_steps = 10;  // best-response proposals per cell
  double gamma = 0.95;
  int horizon = 100;  // evaluation rollout length
  int rollouts = 50;  // evaluation rollouts per cell
  std::optional<double> eta_override;

  double delta = 0.1;
  UcfhConfig ucfh;  // local-learner budgets; delta is re-split per proposal
  std::optional<double> l_eps;
  int dense_max_states = 300000;
  int value_rollouts = 64;

  std::string out = "results.csv";
  OutputFormat format = OutputFormat::kCsv;
  int jobs = 1;
};

// Parses the JSON described in the README. Unknown environments and malformed
// fields throw with the offending name; the result is already validated.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
void validate_run_config(const RunConfig& cfg);

// Single-seed override, strongest first: command-line seed, then the MARL_SEED
// environment value (pass getenv's result; null or empty means unset), then
// the config file list is kept.
void resolve_seeds(RunConfig& cfg, std::optional<std::uint64_t> flag_seed, const char* env_seed);

struct ResultRecord {
  int k = 0;
  std::uint64_t seed = 0;
  double mean_return = 0.0;
  double std_err = 0.0;
  double train_seconds = 0.0;
  int iterations = 0;
  std::string termination;  // "terminated", "step_limit", or "failed: <reason>"
  double mode_rate = 0.0;
};

bool operator==(const ResultRecord& a, const ResultRecord& b);

// Trains and evaluates every (k, seed) cell. Cells are independent, run on a
// pool of cfg.jobs workers, and come back sorted by (k, seed) regardless of
// scheduling. A cell that throws yields a record with a "failed:" termination
// and zeroed statistics; the other cells proceed.
std::vector<ResultRecord> run_experiment(const RunConfig& cfg);

// Columns exactly: k, seed, mean_return, stderr, train_seconds, iterations,
// termination, mode_rate.
std::string results_csv(const std::vector<ResultRecord>& records);
std::string results_json_text(const std::vector<ResultRecord>& records);
std::vector<ResultRecord> records_from_json_text(const std::string& text);
void emit_results(const std::vector<ResultRecord>& records, const std::string& path,
                  OutputFormat format);

struct OccupancyRow {
  int step = 0;
  std::vector<double> occupancy;  // population fraction per zone, sums to 1
  int dispatcher_zone = 0;        // a_g that step
  int mode_zone = 0;              // most-occupied zone, lowest index on ties
};

struct OccupancyTrace {
  int k = 0;
  std::uint64_t seed = 0;
  int n_zones = 0;
  std::vector<OccupancyRow> rows;
  ResultRecord record;  // the trained cell behind the rollout
};

// Trains one (k, seed) cell, then replays a single evaluation rollout and
// tabulates the population occupancy behind it. The initial distribution
// defaults to the environment's Dirichlet placement.
OccupancyTrace occupancy_trace(const RunConfig& cfg, int k, std::uint64_t seed,
                               const std::optional<InitialDist>& init = {});

std::string trace_csv(const OccupancyTrace& trace);
std::string trace_json_text(const OccupancyTrace& trace);
void emit_trace(const OccupancyTrace& trace, const std::string& path, OutputFormat format);

}  // namespace marl
