#include "bosa/metrics/metrics.hpp"

#include <cmath>

namespace bosa::metrics {

nlohmann::json EvalResult::to_json() const
{
  return {{"returns", returns},     {"mean_return", mean_return}, {"normalized_score", normalized_score},
          {"seed", seed},           {"variant", variant},         {"dataset", dataset}};
}

EvalResult EvalResult::from_json(const nlohmann::json &j)
{
  EvalResult r;
  r.returns = j.at("returns").get<std::vector<double>>();
  r.mean_return = j.at("mean_return").get<double>();
  r.normalized_score = j.at("normalized_score").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.variant = j.at("variant").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  return r;
}

double normalized_score(double mean_return, const envs::References &refs)
{
  const double span = refs.expert_return - refs.random_return;
  if (!std::isfinite(span) || span == 0.0) { throw std::invalid_argument("normalized score: missing or degenerate references"); }
  return 100.0 * (mean_return - refs.random_return) / span;
}

EvalResult evaluate_policy(const Policy &policy, const envs::EnvSpec &spec, int episodes, const Rng &rng,
                           const envs::References &refs)
{
  if (episodes < 1) { throw std::invalid_argument("evaluate: episodes must be >= 1"); }
  EvalResult r;
  r.seed = rng.seed();
  CompensatedSum total;
  for (int e = 0; e < episodes; ++e) {
    Rng ep = rng.split(static_cast<std::uint64_t>(e));
    envs::EnvState s = envs::reset(spec, ep);
    double ret = 0.0;
    for (;;) {
      const envs::StepResult out = envs::step(spec, s, policy(s.x), ep);
      ret += out.reward;
      s = out.next;
      if (out.done) { break; }
    }
    r.returns.push_back(ret);
    total.add(ret);
  }
  r.mean_return = total.value() / episodes;
  r.normalized_score = normalized_score(r.mean_return, refs);
  return r;
}

EvalResult evaluate(const agent::ActorCriticState &ac, const envs::EnvSpec &spec, int episodes, const Rng &rng)
{
  require_dim("evaluate: state dim", spec.state_dim, ac.state_dim());
  require_dim("evaluate: action dim", spec.action_dim, ac.action_dim());
  return evaluate_policy([&](const Vector &s) { return agent::act_one(ac, s); }, spec, episodes, rng,
                         envs::family_references(spec.family));
}

TransferDelta transfer_deltas(double score_10, double score_cross, double best_100)
{
  if (best_100 == 0.0) { throw std::invalid_argument("transfer_deltas: best score must be non-zero"); }
  return TransferDelta{(score_10 - best_100) / best_100, (score_cross - best_100) / best_100};
}

Summary summarize(const std::vector<double> &values)
{
  if (values.empty()) { throw std::invalid_argument("summarize: no values"); }
  Summary s;
  s.count = static_cast<Index>(values.size());
  CompensatedSum sum;
  for (double v : values) { sum.add(v); }
  s.mean = sum.value() / static_cast<double>(s.count);
  if (s.count > 1) {
    CompensatedSum sq;
    for (double v : values) { sq.add((v - s.mean) * (v - s.mean)); }
    s.std = std::sqrt(sq.value() / static_cast<double>(s.count - 1));
  }
  return s;
}

Summary aggregate(const std::vector<EvalResult> &results)
{
  if (results.empty()) { throw std::invalid_argument("aggregate: no results"); }
  std::vector<double> scores;
  for (const auto &r : results) {
    if (r.variant != results.front().variant || r.dataset != results.front().dataset) {
      throw std::invalid_argument("aggregate: results mix variants or datasets");
    }
    scores.push_back(r.normalized_score);
  }
  return summarize(scores);
}

double extrapolation_diagnostic(const agent::ActorCriticState &ac, const data::OfflineDataset &dataset,
                                const envs::EnvSpec &oracle, Rng &rng, Index n, double discount,
                                const std::vector<std::uint8_t> *mask)
{
  if (n < 1) { throw std::invalid_argument("extrapolation_diagnostic: n must be >= 1"); }
  require_dim("oracle state dim", oracle.state_dim, dataset.state_dim);
  std::vector<Index> pool;
  for (Index i = 0; i < dataset.size(); ++i) {
    if (mask == nullptr || (*mask)[static_cast<std::size_t>(i)] != 0) { pool.push_back(i); }
  }
  if (pool.empty()) { throw std::invalid_argument("extrapolation_diagnostic: nothing to sample"); }
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (auto &i : idx) { i = pool[rng.index(pool.size())]; }
  const data::Batch b = data::gather(dataset, idx, data::StateMode::raw);

  Matrix oracle_next(b.next_states.rows(), n);
  for (Index j = 0; j < n; ++j) {
    oracle_next.col(j) = envs::dynamics(oracle, b.states.col(j), envs::clip_action(b.actions.col(j)));
  }
  const Vector bootstrap = discount * b.not_done;
  const Vector y_data = b.rewards + bootstrap.cwiseProduct(agent::target_value(ac, b.next_states));
  const Vector y_oracle = b.rewards + bootstrap.cwiseProduct(agent::target_value(ac, oracle_next));
  CompensatedSum gap;
  for (Index j = 0; j < n; ++j) { gap.add(std::abs(y_data[j] - y_oracle[j])); }
  return gap.value() / static_cast<double>(n);
}

} // namespace bosa::metrics
