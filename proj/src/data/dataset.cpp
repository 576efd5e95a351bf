#include "bosa/data/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace bosa::data {

std::string to_string(DomainTag tag)
{
  switch (tag) {
  case DomainTag::target: return "target";
  case DomainTag::source: return "source";
  case DomainTag::generated: return "generated";
  }
  return "?";
}

DomainTag parse_tag(std::string_view name)
{
  for (DomainTag t : {DomainTag::target, DomainTag::source, DomainTag::generated}) {
    if (name == to_string(t)) { return t; }
  }
  throw std::invalid_argument("unknown domain tag: " + std::string(name));
}

Normalizer Normalizer::fit(const Eigen::Ref<const Matrix> &samples)
{
  const Index dim = samples.rows();
  const Index n = samples.cols();
  Normalizer out{Vector::Zero(dim), Vector::Constant(dim, 1.0)};
  if (n == 0) { return out; }
  for (Index d = 0; d < dim; ++d) {
    CompensatedSum sum;
    for (Index i = 0; i < n; ++i) { sum.add(samples(d, i)); }
    const double mean = sum.value() / static_cast<double>(n);
    CompensatedSum sq;
    for (Index i = 0; i < n; ++i) {
      const double c = samples(d, i) - mean;
      sq.add(c * c);
    }
    out.mean[d] = mean;
    out.std[d] = std::max(std::sqrt(sq.value() / static_cast<double>(n)), std_floor);
  }
  return out;
}

Normalizer Normalizer::identity(Index dim) { return Normalizer{Vector::Zero(dim), Vector::Ones(dim)}; }

Matrix Normalizer::apply(const Eigen::Ref<const Matrix> &x) const
{
  require_dim("normalizer input", dim(), x.rows());
  return (x.colwise() - mean).array().colwise() / std.array();
}

Matrix Normalizer::invert(const Eigen::Ref<const Matrix> &z) const
{
  require_dim("normalizer input", dim(), z.rows());
  return (z.array().colwise() * std.array()).matrix().colwise() + mean;
}

nlohmann::json Normalizer::to_json() const
{
  return {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
          {"std", std::vector<double>(std.data(), std.data() + std.size())}};
}

Normalizer Normalizer::from_json(const nlohmann::json &j)
{
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("std").get<std::vector<double>>();
  require_dim("normalizer std", static_cast<Index>(m.size()), static_cast<Index>(s.size()));
  Normalizer out{Vector::Map(m.data(), static_cast<Index>(m.size())), Vector::Map(s.data(), static_cast<Index>(s.size()))};
  return out;
}

Transition OfflineDataset::at(Index i) const
{
  if (i < 0 || i >= size()) { throw std::out_of_range("OfflineDataset::at: index out of range"); }
  const auto k = static_cast<std::size_t>(i);
  return Transition{states.col(i), actions.col(i), rewards[i], next_states.col(i), done[k] != 0, timeout[k] != 0, tags[k]};
}

void OfflineDataset::validate() const
{
  const Index n = size();
  require_dim("dataset states rows", state_dim, states.rows());
  require_dim("dataset next_states rows", state_dim, next_states.rows());
  require_dim("dataset actions rows", action_dim, actions.rows());
  require_dim("dataset states columns", n, states.cols());
  require_dim("dataset next_states columns", n, next_states.cols());
  require_dim("dataset actions columns", n, actions.cols());
  require_dim("dataset done flags", n, static_cast<Index>(done.size()));
  require_dim("dataset timeout flags", n, static_cast<Index>(timeout.size()));
  require_dim("dataset tags", n, static_cast<Index>(tags.size()));
  if (!rewards.allFinite()) { throw std::invalid_argument("dataset: non-finite reward"); }
  if (n > 0) {
    require_dim("dataset stats", state_dim, state_stats.dim());
    if ((state_stats.std.array() <= 0.0).any()) { throw std::invalid_argument("dataset: non-positive std"); }
  }
}

std::vector<std::pair<Index, Index>> OfflineDataset::episodes() const
{
  std::vector<std::pair<Index, Index>> out;
  Index begin = 0;
  for (Index i = 0; i < size(); ++i) {
    if (done[static_cast<std::size_t>(i)] != 0) {
      out.emplace_back(begin, i + 1);
      begin = i + 1;
    }
  }
  if (begin < size()) { out.emplace_back(begin, size()); }
  return out;
}

std::vector<Index> OfflineDataset::indices_with_tag(DomainTag tag) const
{
  std::vector<Index> out;
  for (Index i = 0; i < size(); ++i) {
    if (tags[static_cast<std::size_t>(i)] == tag) { out.push_back(i); }
  }
  return out;
}

Index OfflineDataset::count_tag(DomainTag tag) const
{
  return static_cast<Index>(std::count(tags.begin(), tags.end(), tag));
}

OfflineDataset make_dataset(Index state_dim, Index action_dim, Index n)
{
  OfflineDataset d;
  d.state_dim = state_dim;
  d.action_dim = action_dim;
  d.states.resize(state_dim, n);
  d.actions.resize(action_dim, n);
  d.next_states.resize(state_dim, n);
  d.rewards.resize(n);
  d.done.assign(static_cast<std::size_t>(n), 0);
  d.timeout.assign(static_cast<std::size_t>(n), 0);
  d.tags.assign(static_cast<std::size_t>(n), DomainTag::target);
  return d;
}

void set_transition(OfflineDataset &data, Index i, const Transition &t)
{
  require_dim("transition state", data.state_dim, t.state.size());
  require_dim("transition next_state", data.state_dim, t.next_state.size());
  require_dim("transition action", data.action_dim, t.action.size());
  if (!std::isfinite(t.reward)) { throw std::invalid_argument("transition: non-finite reward"); }
  const auto k = static_cast<std::size_t>(i);
  data.states.col(i) = t.state;
  data.actions.col(i) = t.action;
  data.next_states.col(i) = t.next_state;
  data.rewards[i] = t.reward;
  data.done[k] = t.done ? 1 : 0;
  data.timeout[k] = t.timeout ? 1 : 0;
  data.tags[k] = t.tag;
}

void recompute_stats(OfflineDataset &data)
{
  data.state_stats = data.empty() ? Normalizer::identity(data.state_dim) : Normalizer::fit(data.states);
}

OfflineDataset collect(const envs::EnvSpec &spec, const envs::BehaviorSpec &behavior, Index n, std::uint64_t seed,
                       DomainTag role)
{
  if (n < 1) { throw std::invalid_argument("collect: n_transitions must be >= 1"); }
  spec.validate();
  behavior.validate();

  OfflineDataset data = make_dataset(spec.state_dim, spec.action_dim, n);
  data.env = spec;
  data.behavior = behavior;
  data.seed = seed;
  data.provenance = {{"generator", "collect"}, {"role", to_string(role)}};

  Rng rng(seed);
  Index count = 0;
  long episode = 0;
  while (count < n) {
    envs::EnvState state = envs::reset(spec, rng);
    for (;;) {
      const envs::PolicyContext context{static_cast<double>(count) / static_cast<double>(n), episode};
      const Vector action = envs::clip_action(envs::scripted_policy(spec, behavior, state, rng, context));
      envs::StepResult r = envs::step(spec, state, action, rng);
      set_transition(data, count, Transition{state.x, action, r.reward, r.next.x, r.done, r.timeout, role});
      ++count;
      if (r.done || count == n) { break; }
      state = std::move(r.next);
    }
    ++episode;
  }
  recompute_stats(data);
  return data;
}

OfflineDataset select(const OfflineDataset &data, std::span<const Index> indices)
{
  OfflineDataset out = make_dataset(data.state_dim, data.action_dim, static_cast<Index>(indices.size()));
  out.env = data.env;
  out.behavior = data.behavior;
  out.seed = data.seed;
  out.provenance = data.provenance;
  for (std::size_t k = 0; k < indices.size(); ++k) { set_transition(out, static_cast<Index>(k), data.at(indices[k])); }
  recompute_stats(out);
  return out;
}

OfflineDataset subsample(const OfflineDataset &data, double fraction, std::uint64_t seed)
{
  if (!(fraction > 0.0 && fraction <= 1.0)) { throw std::invalid_argument("subsample: fraction must lie in (0, 1]"); }
  auto episodes = data.episodes();
  Rng rng(seed);
  for (std::size_t i = episodes.size(); i > 1; --i) {
    std::swap(episodes[i - 1], episodes[static_cast<std::size_t>(rng.index(i))]);
  }

  const double wanted = fraction * static_cast<double>(data.size());
  std::vector<std::pair<Index, Index>> kept;
  Index count = 0;
  for (const auto &ep : episodes) {
    if (static_cast<double>(count) >= wanted) { break; }
    kept.push_back(ep);
    count += ep.second - ep.first;
  }
  std::sort(kept.begin(), kept.end());

  std::vector<Index> indices;
  indices.reserve(static_cast<std::size_t>(count));
  for (const auto &[begin, end] : kept) {
    for (Index i = begin; i < end; ++i) { indices.push_back(i); }
  }
  OfflineDataset out = select(data, indices);
  out.seed = seed;
  out.provenance = {{"generator", "subsample"}, {"fraction", fraction}, {"parent", content_hash(data)}};
  return out;
}

OfflineDataset mix(const OfflineDataset &target, const OfflineDataset &source)
{
  auto dims_unset = [](const OfflineDataset &d) { return d.empty() && d.state_dim == 0 && d.action_dim == 0; };
  if (dims_unset(source)) {
    OfflineDataset out = target;
    recompute_stats(out);
    return out;
  }
  if (dims_unset(target)) {
    OfflineDataset out = source;
    recompute_stats(out);
    return out;
  }
  require_dim("mix state_dim", target.state_dim, source.state_dim);
  require_dim("mix action_dim", target.action_dim, source.action_dim);
  if (target.env.family != source.env.family || target.env.reward != source.env.reward) {
    throw std::invalid_argument("mix: datasets use different reward definitions");
  }

  const Index nt = target.size();
  const Index n = nt + source.size();
  OfflineDataset out = make_dataset(target.state_dim, target.action_dim, n);
  out.env = target.env;
  out.behavior = target.behavior;
  out.seed = target.seed;
  out.states << target.states, source.states;
  out.actions << target.actions, source.actions;
  out.next_states << target.next_states, source.next_states;
  out.rewards << target.rewards, source.rewards;
  std::copy(target.done.begin(), target.done.end(), out.done.begin());
  std::copy(source.done.begin(), source.done.end(), out.done.begin() + nt);
  std::copy(target.timeout.begin(), target.timeout.end(), out.timeout.begin());
  std::copy(source.timeout.begin(), source.timeout.end(), out.timeout.begin() + nt);
  std::copy(target.tags.begin(), target.tags.end(), out.tags.begin());
  std::copy(source.tags.begin(), source.tags.end(), out.tags.begin() + nt);
  out.provenance = {{"generator", "mix"}, {"target", content_hash(target)}, {"source", content_hash(source)}};
  recompute_stats(out);
  return out;
}

Batch gather(const OfflineDataset &data, std::span<const Index> indices, StateMode mode)
{
  const auto n = static_cast<Index>(indices.size());
  Batch b;
  b.states.resize(data.state_dim, n);
  b.actions.resize(data.action_dim, n);
  b.next_states.resize(data.state_dim, n);
  b.rewards.resize(n);
  b.not_done.resize(n);
  b.indices.assign(indices.begin(), indices.end());
  b.tags.resize(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    const Index i = indices[static_cast<std::size_t>(k)];
    if (i < 0 || i >= data.size()) { throw std::out_of_range("gather: index out of range"); }
    const auto ik = static_cast<std::size_t>(i);
    b.states.col(k) = data.states.col(i);
    b.actions.col(k) = data.actions.col(i);
    b.next_states.col(k) = data.next_states.col(i);
    b.rewards[k] = data.rewards[i];
    b.not_done[k] = (data.done[ik] != 0 && data.timeout[ik] == 0) ? 0.0 : 1.0;
    b.tags[static_cast<std::size_t>(k)] = data.tags[ik];
  }
  if (mode == StateMode::normalized) {
    b.states = data.state_stats.apply(b.states);
    b.next_states = data.state_stats.apply(b.next_states);
  }
  return b;
}

Batch sample_batch(const OfflineDataset &data, Index batch_size, Rng &rng, StateMode mode)
{
  if (batch_size < 1) { throw std::invalid_argument("sample_batch: batch size must be >= 1"); }
  if (data.empty()) { throw std::invalid_argument("sample_batch: dataset is empty"); }
  std::vector<Index> indices(static_cast<std::size_t>(batch_size));
  for (auto &i : indices) { i = static_cast<Index>(rng.index(static_cast<std::uint64_t>(data.size()))); }
  return gather(data, indices, mode);
}

double natural_next_state_scale(const OfflineDataset &data)
{
  if (data.empty()) { throw std::invalid_argument("natural_next_state_scale: dataset is empty"); }
  const Matrix delta = data.next_states - data.states;
  return Normalizer::fit(delta).std.mean();
}

} // namespace bosa::data
