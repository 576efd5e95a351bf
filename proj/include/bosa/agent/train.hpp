#pragma once

#include "bosa/agent/losses.hpp"

#include <functional>
#include <limits>
#include <optional>

namespace bosa::agent {

/// Per-transition flags for one dataset, computed once and reused by every step.
struct SupportFilter
{
  std::vector<std::uint8_t> bellman;
  std::vector<std::uint8_t> source;

  double pass_rate() const;
  double pass_rate(const data::OfflineDataset &data, data::DomainTag tag) const;
};

/// `scores` are ensemble log-likelihoods aligned with `data` (may be empty when the
/// variant does not filter).
SupportFilter make_filter(const data::OfflineDataset &data, const BosaConfig &config, const Vector &scores);

struct StepDiagnostics
{
  Index step = 0;
  double critic_loss = 0.0;
  double actor_loss = std::numeric_limits<double>::quiet_NaN();
  double lambda = 0.0;
  double gap = std::numeric_limits<double>::quiet_NaN();
  double pass_rate = 0.0;
  double mean_q_source = 0.0;
  double mean_q_target = 0.0;
  bool starved = false;
  bool actor_updated = false;

  static std::string csv_header();
  std::string csv_row() const;
};

struct TrainInputs
{
  const data::OfflineDataset *data = nullptr;
  const density::DensityModel *behavior = nullptr; // required when the variant constrains the policy
  const SupportFilter *filter = nullptr;
};

/// One critic update; every `policy_frequency`-th step also an actor, dual and
/// target update. Randomness for step t comes from rng.split(t, .) only.
StepDiagnostics train_step(ActorCriticState &ac, const BosaConfig &config, const TrainInputs &in, const Rng &rng);

struct TrainResult
{
  ActorCriticState state;
  std::vector<StepDiagnostics> history; // every `log_every`-th step
  Index starvation_events = 0;
  std::vector<double> lambda_trace;     // lambda after every actor update
  std::vector<double> gap_trace;
};

struct TrainOptions
{
  Index steps = 100000;
  Index log_every = 100;
  std::function<void(const StepDiagnostics &)> on_log;
  std::function<void(const TrainResult &)> on_checkpoint;
  Index checkpoint_every = 10000;
  /// Continue from a saved run; its state's step counter says where. Traces and counters carry over.
  std::optional<TrainResult> resume_from;
};

/// Actor-critic state plus the traces and counters accumulated so far.
void save_progress(const std::filesystem::path &dir, const TrainResult &progress);
TrainResult load_progress(const std::filesystem::path &dir);

TrainResult train(const BosaConfig &config, const TrainInputs &in, const TrainOptions &options, std::uint64_t seed);

} // namespace bosa::agent
