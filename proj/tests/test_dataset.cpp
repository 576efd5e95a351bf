#include "bosa/data/dataset.hpp"

#include <doctest.h>

#include <filesystem>
#include <map>

using namespace bosa;
using namespace bosa::data;

namespace {

const envs::EnvSpec pm = envs::make_env(envs::Family::point_mass_2d);

OfflineDataset tiny(Index n, DomainTag tag = DomainTag::target)
{
  OfflineDataset d = make_dataset(2, 1, n);
  for (Index i = 0; i < n; ++i) {
    Transition t;
    t.state = Vector::Constant(2, static_cast<double>(i));
    t.action = Vector::Constant(1, 0.1 * static_cast<double>(i));
    t.next_state = t.state + Vector::Ones(2);
    t.reward = static_cast<double>(i);
    t.done = i == n - 1;
    t.timeout = t.done;
    t.tag = tag;
    set_transition(d, i, t);
  }
  recompute_stats(d);
  return d;
}

} // namespace

TEST_SUITE("dataset")
{
  TEST_CASE("normalizer fits and inverts")
  {
    Matrix x(2, 4);
    x << 1, 2, 3, 4, 10, 10, 10, 10;
    const Normalizer n = Normalizer::fit(x);
    CHECK(n.mean[0] == doctest::Approx(2.5));
    CHECK(n.std[0] == doctest::Approx(std::sqrt(1.25)));
    CHECK(n.std[1] == Normalizer::std_floor);
    CHECK(n.invert(n.apply(x)).isApprox(x));
    CHECK(Normalizer::from_json(n.to_json()).mean == n.mean);
  }

  TEST_CASE("n = 1 gives one transition from a reset state")
  {
    const OfflineDataset d = collect(pm, {envs::Tier::medium, 0.3}, 1, 5, DomainTag::target);
    REQUIRE(d.size() == 1);
    CHECK(d.states(2, 0) == 0.0);
    CHECK(d.states(3, 0) == 0.0);
    Rng rng(5);
    (void)rng;
    CHECK(d.episodes().size() == 1);
  }

  TEST_CASE("same seed gives byte-identical datasets")
  {
    const OfflineDataset a = collect(pm, {envs::Tier::medium, 0.3}, 500, 9, DomainTag::source);
    const OfflineDataset b = collect(pm, {envs::Tier::medium, 0.3}, 500, 9, DomainTag::source);
    CHECK(serialize(a) == serialize(b));
    CHECK(content_hash(a) == content_hash(b));
    const OfflineDataset c = collect(pm, {envs::Tier::medium, 0.3}, 500, 10, DomainTag::source);
    CHECK(content_hash(a) != content_hash(c));
    CHECK(a.count_tag(DomainTag::source) == 500);
  }

  TEST_CASE("expert data matches the expert reference within 10%")
  {
    const OfflineDataset d = collect(pm, {envs::Tier::expert, 0.0}, 10000, 1, DomainTag::target);
    CompensatedSum total;
    const auto eps = d.episodes();
    for (Index i = 0; i < d.size(); ++i) { total.add(d.rewards[i]); }
    const double per_episode = total.value() / static_cast<double>(eps.size());
    const double ref = envs::family_references(envs::Family::point_mass_2d).expert_return;
    CHECK(std::abs(per_episode - ref) <= 0.1 * std::abs(ref));
  }

  TEST_CASE("episodes split after done and at the end")
  {
    const OfflineDataset d = collect(pm, {envs::Tier::medium, 0.3}, 250, 2, DomainTag::target);
    const auto eps = d.episodes();
    CHECK(eps.front().first == 0);
    CHECK(eps.back().second == 250);
    for (std::size_t e = 0; e + 1 < eps.size(); ++e) {
      CHECK(eps[e].second == eps[e + 1].first);
      CHECK(d.done[static_cast<std::size_t>(eps[e].second - 1)] == 1);
    }
  }

  TEST_CASE("subsample keeps whole episodes")
  {
    const OfflineDataset d = collect(pm, {envs::Tier::medium, 0.3}, 100000, 3, DomainTag::target);
    const OfflineDataset full = subsample(d, 1.0, 1);
    CHECK(full.size() == d.size());
    CHECK(full.rewards.sum() == doctest::Approx(d.rewards.sum()));

    const OfflineDataset a = subsample(d, 0.1, 1);
    CHECK(a.size() >= 9000);
    CHECK(a.size() <= 11000);
    for (const auto &[b, e] : a.episodes()) { CHECK(e - b <= pm.horizon); }

    const OfflineDataset b = subsample(d, 0.1, 2);
    CHECK(content_hash(a) != content_hash(b));
    CHECK(a.state_dim == b.state_dim);
    CHECK(a.state_stats.dim() == b.state_stats.dim());
    CHECK_THROWS(subsample(d, 0.0, 1));
    CHECK_THROWS(subsample(d, 1.5, 1));
  }

  TEST_CASE("mix concatenates and tags")
  {
    const OfflineDataset t = tiny(5, DomainTag::target);
    const OfflineDataset s = tiny(7, DomainTag::source);
    const OfflineDataset m = mix(t, s);
    CHECK(m.size() == 12);
    CHECK(m.count_tag(DomainTag::target) == 5);
    CHECK(m.count_tag(DomainTag::source) == 7);
    CHECK(m.indices_with_tag(DomainTag::source).front() == 5);

    const OfflineDataset alone = mix(t, make_dataset(2, 1, 0));
    CHECK(alone.size() == 5);
    CHECK(alone.state_stats.mean.isApprox(t.state_stats.mean));
    CHECK_THROWS_AS(mix(t, make_dataset(3, 1, 2)), DimensionError);
  }

  TEST_CASE("batches from a singleton repeat it")
  {
    const OfflineDataset d = tiny(1);
    Rng rng(1);
    const Batch b = sample_batch(d, 8, rng);
    for (Index j = 0; j < 8; ++j) { CHECK(b.states.col(j) == d.states.col(0)); }
    CHECK(b.not_done.isZero(0.0) == false);
  }

  TEST_CASE("uniform sampling over ten transitions")
  {
    const OfflineDataset d = tiny(10);
    Rng rng(2);
    std::map<Index, int> counts;
    const int n = 100000;
    const Batch b = sample_batch(d, n, rng);
    for (Index i : b.indices) { counts[i]++; }
    const double p = 0.1, sigma = std::sqrt(n * p * (1 - p));
    for (const auto &[i, c] : counts) { CHECK(std::abs(c - n * p) < 3.0 * sigma); }
    CHECK(counts.size() == 10);
  }

  TEST_CASE("normalized batches have zero mean and unit std")
  {
    const OfflineDataset d = collect(pm, {envs::Tier::medium, 0.3}, 5000, 4, DomainTag::target);
    Rng rng(3);
    const Batch b = sample_batch(d, 50000, rng, StateMode::normalized);
    const Normalizer n = Normalizer::fit(b.states);
    CHECK(n.mean.cwiseAbs().maxCoeff() < 0.05);
    CHECK((n.std.array() - 1.0).abs().maxCoeff() < 0.05);
  }

  TEST_CASE("failure transitions do not bootstrap")
  {
    OfflineDataset d = tiny(2);
    d.timeout[1] = 0; // terminal by failure
    Rng rng(1);
    std::vector<Index> idx{0, 1};
    const Batch b = gather(d, idx);
    CHECK(b.not_done[0] == 1.0);
    CHECK(b.not_done[1] == 0.0);
    d.timeout[1] = 1;
    CHECK(gather(d, idx).not_done[1] == 1.0);
  }

  TEST_CASE("serialization round-trips and rejects damage")
  {
    const OfflineDataset d = collect(pm, {envs::Tier::medium_replay, 0.3}, 300, 5, DomainTag::target);
    const OfflineDataset back = deserialize(serialize(d));
    CHECK(back.states == d.states);
    CHECK(back.actions == d.actions);
    CHECK(back.next_states == d.next_states);
    CHECK(back.rewards == d.rewards);
    CHECK(back.done == d.done);
    CHECK(back.tags == d.tags);
    CHECK(back.env == d.env);
    CHECK(content_hash(back) == content_hash(d));

    const std::string bytes = serialize(d);
    CHECK_THROWS(deserialize(bytes.substr(0, bytes.size() - 8)));
    CHECK_THROWS(deserialize("{}\n"));

    const auto path = std::filesystem::temp_directory_path() / "bosa_test_dataset.bds";
    write_dataset(path, d);
    CHECK(content_hash(read_dataset(path)) == content_hash(d));
    std::filesystem::remove(path);
    CHECK_THROWS(read_dataset(path));
  }

  TEST_CASE("select copies the chosen transitions")
  {
    const OfflineDataset d = tiny(6);
    std::vector<Index> idx{4, 1, 4};
    const OfflineDataset s = select(d, idx);
    CHECK(s.size() == 3);
    CHECK(s.rewards[0] == 4.0);
    CHECK(s.rewards[1] == 1.0);
  }

  TEST_CASE("natural next-state scale")
  {
    const OfflineDataset d = tiny(6);
    CHECK(natural_next_state_scale(d) == doctest::Approx(Normalizer::std_floor));
    const OfflineDataset c = collect(pm, {envs::Tier::medium, 0.3}, 2000, 4, DomainTag::target);
    CHECK(natural_next_state_scale(c) > 0.0);
  }
}
