#include "bosa/envs/env.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace bosa;
using namespace bosa::envs;

namespace {

double mean_return(const EnvSpec &spec, const BehaviorSpec &behavior, int episodes, std::uint64_t seed)
{
  Rng rng(seed);
  CompensatedSum total;
  for (int e = 0; e < episodes; ++e) {
    EnvState s = reset(spec, rng);
    for (;;) {
      const StepResult r = step(spec, s, scripted_policy(spec, behavior, s, rng), rng);
      total.add(r.reward);
      s = r.next;
      if (r.done) { break; }
    }
  }
  return total.value() / episodes;
}

} // namespace

TEST_SUITE("envs")
{
  TEST_CASE("family and tier names round-trip")
  {
    for (Family f : {Family::point_mass_2d, Family::pendulum}) { CHECK(parse_family(to_string(f)) == f); }
    for (Tier t : {Tier::random, Tier::medium, Tier::expert, Tier::medium_replay, Tier::medium_expert}) {
      CHECK(parse_tier(to_string(t)) == t);
    }
    CHECK_THROWS(parse_family("hopper"));
    CHECK_THROWS(make_env(Family::point_mass_2d, 0.0));
    CHECK(env_from_json(to_json(make_env(Family::pendulum, 1.5, 0.05))) == make_env(Family::pendulum, 1.5, 0.05));
  }

  TEST_CASE("zero-variance initial distribution gives the origin")
  {
    EnvSpec spec = make_env(Family::point_mass_2d);
    spec.init_std = 0.0;
    Rng rng(1);
    CHECK(reset(spec, rng).x.isZero(0.0));
  }

  TEST_CASE("resets are deterministic per stream")
  {
    const EnvSpec spec = make_env(Family::point_mass_2d);
    Rng a(7), b(7);
    CHECK(reset(spec, a).x == reset(spec, b).x);
  }

  TEST_CASE("initial-state mean within 3 sigma of zero")
  {
    const EnvSpec spec = make_env(Family::point_mass_2d);
    Rng rng(11);
    const int n = 10000;
    Vector sum = Vector::Zero(spec.state_dim);
    for (int i = 0; i < n; ++i) { sum += reset(spec, rng).x; }
    const Vector mean = sum / n;
    const double bound = 3.0 * spec.init_std / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean[0]) < bound);
    CHECK(std::abs(mean[1]) < bound);
    CHECK(mean[2] == 0.0);
    CHECK(mean[3] == 0.0);
  }

  TEST_CASE("zero action at rest is a fixed point for every mass")
  {
    for (double m : {0.5, 1.0, 3.0}) {
      const EnvSpec spec = make_env(Family::point_mass_2d, m);
      Vector s(4);
      s << 0.3, -0.7, 0.0, 0.0;
      CHECK(dynamics(spec, s, Vector::Zero(2)) == s);
    }
  }

  TEST_CASE("mass shift changes the next state")
  {
    Vector s(4);
    s << 0.1, 0.2, 0.3, -0.1;
    Vector a(2);
    a << 0.5, -0.5;
    CHECK(dynamics(make_env(Family::point_mass_2d, 1.0), s, a) != dynamics(make_env(Family::point_mass_2d, 2.0), s, a));
    Vector p = Vector::Zero(3);
    p << 1.0, 0.0, 0.0;
    Vector u(1);
    u << 0.7;
    CHECK(dynamics(make_env(Family::pendulum, 1.0), p, u) != dynamics(make_env(Family::pendulum, 2.0), p, u));
  }

  TEST_CASE("joint noise keeps the executed action within the amplitude")
  {
    const EnvSpec spec = make_env(Family::point_mass_2d, 1.0, 0.05);
    Rng rng(3);
    EnvState s = reset(spec, rng);
    for (int i = 0; i < 1000; ++i) {
      Vector a = 0.5 * rng.normal_vector(2);
      a = clip_action(a);
      const StepResult r = step(spec, s, a, rng);
      CHECK((r.executed - a).cwiseAbs().maxCoeff() <= 0.05 + 1e-12);
      s = r.done ? reset(spec, rng) : r.next;
    }
  }

  TEST_CASE("episodes end at the horizon or on failure")
  {
    const EnvSpec spec = make_env(Family::point_mass_2d);
    Rng rng(4);
    EnvState s = reset(spec, rng);
    int steps = 0;
    StepResult r;
    do {
      r = step(spec, s, Vector::Zero(2), rng);
      s = r.next;
      ++steps;
    } while (!r.done);
    CHECK(steps == spec.horizon);
    CHECK(r.timeout);
    CHECK_FALSE(r.failed);
    CHECK_THROWS_AS(step(spec, s, Vector::Zero(2), rng), std::logic_error);

    Vector far(4);
    far << 2.5, 0.0, 0.0, 0.0;
    CHECK(failure(spec, far));
  }

  TEST_CASE("random tier is uniform on [-1, 1] (KS)")
  {
    const EnvSpec spec = make_env(Family::point_mass_2d);
    Rng rng(5);
    const EnvState s = reset(spec, rng);
    std::vector<double> xs;
    for (int i = 0; i < 10000; ++i) { xs.push_back(scripted_policy(spec, {Tier::random, 0.3}, s, rng)[0]); }
    CHECK(testing::ks_uniform(xs, -1.0, 1.0) < testing::ks_critical_01(xs.size()));
  }

  TEST_CASE("expert tier returns at least 5x the random tier")
  {
    const EnvSpec spec = make_env(Family::point_mass_2d);
    const double expert = mean_return(spec, {Tier::expert, 0.0}, 100, 1);
    const double random = mean_return(spec, {Tier::random, 0.0}, 100, 2);
    CHECK(random > 0.0);
    CHECK(expert >= 5.0 * random);
  }

  TEST_CASE("noise-free expert is deterministic per state")
  {
    const EnvSpec spec = make_env(Family::pendulum);
    Rng a(1), b(2);
    const EnvState s = reset(spec, a);
    CHECK(scripted_policy(spec, {Tier::expert, 0.0}, s, a) == scripted_policy(spec, {Tier::expert, 0.0}, s, b));
  }

  TEST_CASE("tiers are ordered by return")
  {
    const EnvSpec spec = make_env(Family::point_mass_2d);
    const double random = mean_return(spec, {Tier::random, 0.3}, 50, 3);
    const double medium = mean_return(spec, {Tier::medium, 0.3}, 50, 3);
    const double expert = mean_return(spec, {Tier::expert, 0.3}, 50, 3);
    CHECK(random < medium);
    CHECK(medium < expert);
  }

  TEST_CASE("references give 100 to the expert and 0 to random")
  {
    const References &r = family_references(Family::point_mass_2d);
    CHECK(r.expert_return > r.random_return);
    CHECK(normalized_score(Family::point_mass_2d, r.expert_return) == doctest::Approx(100.0));
    CHECK(normalized_score(Family::point_mass_2d, r.random_return) == doctest::Approx(0.0));
  }
}
