#include "bosa/metrics/metrics.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace bosa;
using namespace bosa::metrics;

TEST_SUITE("metrics")
{
  TEST_CASE("transfer deltas")
  {
    CHECK(transfer_deltas(50.0, 40.0, 50.0).x == 0.0);
    CHECK(transfer_deltas(0.0, 86.5, 112.0).y == doctest::Approx(-0.2277).epsilon(1e-3));
    CHECK(std::abs(transfer_deltas(0.0, 86.5, 112.0).y - -0.2277) < 1e-4);
    CHECK(std::abs(transfer_deltas(0.0, 104.2, 110.9).y - -0.0604) < 1e-4);
    CHECK(transfer_deltas(55.0, 0.0, 110.0).x == doctest::Approx(-0.5));
    CHECK_THROWS(transfer_deltas(1.0, 1.0, 0.0));
  }

  TEST_CASE("summaries")
  {
    const Summary one = summarize({4.0});
    CHECK(one.mean == 4.0);
    CHECK(one.std == 0.0);
    const Summary three = summarize({1.0, 2.0, 3.0});
    CHECK(three.mean == 2.0);
    CHECK(three.std == doctest::Approx(1.0));
    CHECK(summarize({7, 7, 7, 7, 7}).std == 0.0);
    CHECK_THROWS(summarize({}));
  }

  TEST_CASE("aggregate refuses mixed groups")
  {
    EvalResult a, b;
    a.variant = b.variant = "full";
    a.dataset = "cross";
    b.dataset = "target-10";
    a.normalized_score = 1.0;
    b.normalized_score = 3.0;
    CHECK_THROWS(aggregate({a, b}));
    b.dataset = "cross";
    CHECK(aggregate({a, b}).mean == 2.0);
    CHECK(EvalResult::from_json(a.to_json()).to_json() == a.to_json());
  }

  TEST_CASE("normalized score anchors")
  {
    const auto spec = envs::make_env(envs::Family::point_mass_2d);
    const auto &refs = envs::family_references(envs::Family::point_mass_2d);
    const EvalResult expert = evaluate_policy([&](const Vector &s) { return envs::expert_action(spec, s); }, spec, 50,
                                              Rng(1), refs);
    CHECK(std::abs(expert.normalized_score - 100.0) <= 10.0);

    Rng noise(2);
    const EvalResult random = evaluate_policy(
      [&](const Vector &) { return envs::scripted_policy(spec, {envs::Tier::random, 0.0}, {Vector::Zero(4), 0}, noise); },
      spec, 200, Rng(3), refs);
    CHECK(std::abs(random.normalized_score) <= 10.0);

    const EvalResult single = evaluate_policy([&](const Vector &) { return Vector::Zero(2); }, spec, 1, Rng(4), refs);
    CHECK(single.returns.size() == 1);
    CHECK(normalized_score(refs.expert_return, refs) == doctest::Approx(100.0));
    CHECK_THROWS(evaluate_policy([&](const Vector &) { return Vector::Zero(2); }, spec, 0, Rng(4), refs));
  }

  TEST_CASE("evaluation is deterministic per seed")
  {
    agent::BosaConfig cfg;
    cfg.hidden_dim = 8;
    const auto ac = testing::small_agent(cfg, 1, 4, 2);
    const auto spec = envs::make_env(envs::Family::point_mass_2d);
    CHECK(evaluate(ac, spec, 3, Rng(5)).returns == evaluate(ac, spec, 3, Rng(5)).returns);
  }

  TEST_CASE("extrapolation diagnostic")
  {
    agent::BosaConfig cfg;
    cfg.hidden_dim = 8;
    const auto ac = testing::small_agent(cfg, 2, 4, 2);
    const auto target_env = envs::make_env(envs::Family::point_mass_2d, 1.0);
    const auto target = data::collect(target_env, {envs::Tier::medium, 0.3}, 2000, 1, data::DomainTag::target);
    const auto source = data::collect(envs::make_env(envs::Family::point_mass_2d, 0.5), {envs::Tier::medium, 0.3}, 2000,
                                      2, data::DomainTag::source);
    Rng r1(3), r2(3);
    CHECK(extrapolation_diagnostic(ac, target, target_env, r1, 500) == 0.0);
    CHECK(extrapolation_diagnostic(ac, source, target_env, r2, 500) > 0.0);

    const auto m = data::mix(target, source);
    std::vector<std::uint8_t> only_target(static_cast<std::size_t>(m.size()), 0);
    for (Index i = 0; i < target.size(); ++i) { only_target[static_cast<std::size_t>(i)] = 1; }
    Rng r3(4), r4(4);
    CHECK(extrapolation_diagnostic(ac, m, target_env, r3, 1000, 0.99, &only_target) <
          extrapolation_diagnostic(ac, m, target_env, r4, 1000));
  }
}
