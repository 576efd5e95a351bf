#include "bosa/agent/dara.hpp"

#include <doctest.h>

using namespace bosa;
using namespace bosa::agent;

TEST_SUITE("dara")
{
  TEST_CASE("log-odds arithmetic")
  {
    CHECK(dara_reward_delta(0.5, 0.5) == 0.0);
    CHECK(dara_reward_delta(0.9, 0.5) == doctest::Approx(std::log(9.0)));
    CHECK(dara_reward_delta(0.1, 0.5) == doctest::Approx(-std::log(9.0)));
    CHECK(std::isfinite(dara_reward_delta(0.0, 1.0)));
    CHECK(dara_reward_delta(0.0, 0.5) == doctest::Approx(std::log(1e-6 / (1 - 1e-6))));
  }

  TEST_CASE("indifferent classifiers leave the reward unchanged")
  {
    DomainClassifier sas, sa;
    Rng rng(1);
    sas.net = nn::make_mlp<double>(nn::MlpSpec{10, 8, 2, 1, nn::Activation::relu, 0.0}, rng);
    sa.net = nn::make_mlp<double>(nn::MlpSpec{6, 8, 2, 1, nn::Activation::relu, 0.0}, rng);
    sas.net.store.params.setZero();
    sa.net.store.params.setZero();
    sas.input_norm = data::Normalizer::identity(10);
    sa.input_norm = data::Normalizer::identity(6);
    data::Transition t;
    t.state = rng.normal_vector(4);
    t.action = rng.normal_vector(2);
    t.next_state = rng.normal_vector(4);
    t.reward = 0.37;
    CHECK_THROWS_AS(dara_modified_reward(t, sas, sa), std::logic_error);
    sas.trained = sa.trained = true;
    CHECK(dara_modified_reward(t, sas, sa) == 0.37);
  }

  TEST_CASE("feature layout")
  {
    Matrix s(2, 1), a(1, 1), n(2, 1);
    s << 1, 2;
    a << 3;
    n << 4, 7;
    Vector expect(5);
    expect << 1, 2, 3, 3, 5;
    CHECK(sas_features(s, a, n).col(0) == expect);
    CHECK(sa_features(s, a).col(0) == expect.head(3));
  }

  TEST_CASE("classifier training needs both domains")
  {
    Matrix f = Matrix::Random(3, 10);
    std::vector<data::DomainTag> tags(10, data::DomainTag::target);
    Rng rng(1);
    CHECK_THROWS(train_domain_classifier(f, tags, {}, rng));
  }

  TEST_CASE("strongly shifted source transitions get a negative reward correction")
  {
    const auto env_t = envs::make_env(envs::Family::point_mass_2d, 1.0);
    const auto env_s = envs::make_env(envs::Family::point_mass_2d, 0.3);
    const data::OfflineDataset t = data::collect(env_t, {envs::Tier::medium, 0.3}, 4000, 1, data::DomainTag::target);
    const data::OfflineDataset s = data::collect(env_s, {envs::Tier::medium, 0.3}, 4000, 2, data::DomainTag::source);
    const data::OfflineDataset m = data::mix(t, s);
    DaraConfig cfg;
    cfg.iterations = 1500;
    Rng rng(3);
    const DaraClassifiers c = train_dara(m, cfg, rng);
    const Vector delta = dara_reward_deltas(c, m.states, m.actions, m.next_states);
    CHECK(delta.tail(4000).mean() < 0.0);
    CHECK(delta.head(4000).mean() > delta.tail(4000).mean());
  }
}
