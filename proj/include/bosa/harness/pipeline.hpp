#pragma once

#include "bosa/harness/config.hpp"
#include "bosa/metrics/metrics.hpp"

#include <ostream>

namespace bosa::harness {

/// Bumped whenever a change alters artifacts; part of every cache key.
inline constexpr const char *code_version = "bosa-1";

/// A stage failure: which stage, and the hashes of what it was fed.
class StageError : public std::runtime_error
{
public:
  StageError(std::string stage, std::vector<std::string> input_hashes, const std::string &cause);

  const std::string &stage() const { return stage_; }
  const std::vector<std::string> &input_hashes() const { return inputs_; }

private:
  std::string stage_;
  std::vector<std::string> inputs_;
};

/// End-of-run probes and the evaluation of one (setting, variant, sweep point, seed).
struct RunRecord
{
  std::string id;
  std::string setting;
  std::string variant;
  std::string sweep; // "" or e.g. "tt=0.08"
  std::uint64_t seed = 0;
  std::string key;
  metrics::EvalResult eval;

  double final_lambda = 0.0;
  double lambda_peak = 0.0;
  double tail_slackness = 0.0;    // mean lambda * |gap| over the last 10% of actor updates
  double tail_lambda_mean = 0.0;  // mean lambda over the same window
  double support_fraction = -1.0; // share of probe states with log pi_beta(act(s)|s) > eps_th; -1 if not probed
  double q_source = 0.0;          // mean min-twin Q over source-tagged probe transitions
  double q_target = 0.0;
  double filter_pass_source = 1.0;
  double filter_pass_target = 1.0;
  Index starvation_events = 0;
  bool cached = false;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json &j);
};

struct ExperimentReport
{
  std::string name;
  nlohmann::json config;    // resolved config
  nlohmann::json artifacts; // dataset hashes, density keys, filter statistics per setting
  std::vector<RunRecord> runs;
  std::vector<std::string> assertion_failures;
  Index cache_hits = 0;
  Index cache_misses = 0;

  bool ok() const { return assertion_failures.empty(); }
};

struct PipelineOptions
{
  bool resume = false; // continue interrupted agent runs from their last checkpoint
  int jobs = 1;
  std::ostream *log = nullptr;
};

/// Data -> subsample -> mix -> density models -> agent runs -> evaluation -> report files.
/// Every stage is cached under the config's cache directory by content hash.
ExperimentReport run_pipeline(const ExperimentConfig &config, const PipelineOptions &options = {});

struct AblationRow
{
  std::string setting;
  std::string variant;
  double full_mean = 0.0;
  double ablated_mean = 0.0;
  double percent_change = 0.0; // 100 * (ablated - full) / |full|
};

/// Percentage change of every non-full variant against full, per setting and sweep point.
std::vector<AblationRow> ablation_table(const ExperimentReport &report);

/// Runs the pipeline and tabulates the ablations. Throws if `full` is not among the variants.
std::vector<AblationRow> run_ablation_suite(const ExperimentConfig &config, const PipelineOptions &options = {});

} // namespace bosa::harness
