#pragma once

#include "bosa/agent/actor_critic.hpp"
#include "bosa/envs/env.hpp"

#include <functional>

namespace bosa::metrics {

struct EvalResult
{
  std::vector<double> returns; // raw per-episode returns
  double mean_return = 0.0;
  double normalized_score = 0.0;
  std::uint64_t seed = 0;
  std::string variant;
  std::string dataset;

  nlohmann::json to_json() const;
  static EvalResult from_json(const nlohmann::json &j);
};

using Policy = std::function<Vector(const Vector &state)>;

/// Roll out `policy` for `episodes` episodes on `spec`; episode e draws from rng.split(e).
/// Scores are normalised with `refs`.
EvalResult evaluate_policy(const Policy &policy, const envs::EnvSpec &spec, int episodes, const Rng &rng,
                           const envs::References &refs);

/// Deterministic actor on the target env, normalised with the family references.
EvalResult evaluate(const agent::ActorCriticState &ac, const envs::EnvSpec &spec, int episodes, const Rng &rng);

double normalized_score(double mean_return, const envs::References &refs);

struct TransferDelta
{
  double x = 0.0;
  double y = 0.0;
};

/// x = (score_10 - best_100) / best_100, y = (score_cross - best_100) / best_100.
TransferDelta transfer_deltas(double score_10, double score_cross, double best_100);

struct Summary
{
  double mean = 0.0;
  double std = 0.0; // sample standard deviation; 0 for a single value
  Index count = 0;
};

Summary summarize(const std::vector<double> &values);

/// Mean and sample std of normalised scores across seeds; all results must share variant and dataset.
Summary aggregate(const std::vector<EvalResult> &results);

/// Mean |dataset TD target - oracle TD target| over `n` transitions drawn with
/// replacement from those with mask[i] != 0 (all, when `mask` is null). The
/// oracle target recomputes s' with the noise-free dynamics of `oracle`.
double extrapolation_diagnostic(const agent::ActorCriticState &ac, const data::OfflineDataset &dataset,
                                const envs::EnvSpec &oracle, Rng &rng, Index n, double discount = 0.99,
                                const std::vector<std::uint8_t> *mask = nullptr);

} // namespace bosa::metrics
