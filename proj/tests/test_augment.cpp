#include "bosa/augment/augment.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace bosa;
using namespace bosa::augment;

namespace {

data::OfflineDataset pm_data(Index n, std::uint64_t seed)
{
  return data::collect(envs::make_env(envs::Family::point_mass_2d), {envs::Tier::medium, 0.3}, n, seed,
                       data::DomainTag::target);
}

/// Mean ||s~' - s'_true|| where s'_true comes from the noise-free target dynamics.
double model_error(const data::OfflineDataset &g)
{
  const auto env = envs::make_env(envs::Family::point_mass_2d);
  double total = 0.0;
  for (Index i = 0; i < g.size(); ++i) {
    total += (g.next_states.col(i) - envs::dynamics(env, g.states.col(i), envs::clip_action(g.actions.col(i)))).norm();
  }
  return total / static_cast<double>(g.size());
}

} // namespace

TEST_SUITE("augment")
{
  TEST_CASE("zero noise copies transitions and retags them")
  {
    const data::OfflineDataset d = pm_data(300, 1);
    Rng rng(2);
    const data::OfflineDataset g = noise_augment(d, {0.0}, 300, rng);
    CHECK(g.size() == 300);
    CHECK(g.count_tag(data::DomainTag::generated) == 300);
    for (Index i = 0; i < g.size(); ++i) {
      bool found = false;
      for (Index j = 0; j < d.size() && !found; ++j) {
        found = d.states.col(j) == g.states.col(i) && d.next_states.col(j) == g.next_states.col(i) &&
                d.actions.col(j) == g.actions.col(i) && d.rewards[j] == g.rewards[i];
      }
      CHECK(found);
    }
    CHECK(g.provenance.at("generator") == "noise");
    CHECK(g.provenance.at("parent_hash") == data::content_hash(d));
  }

  TEST_CASE("noise stays within the amplitude")
  {
    const data::OfflineDataset d = pm_data(1000, 3);
    Rng rng(4);
    const data::OfflineDataset g = noise_augment(d, {0.1}, 5000, rng);
    double worst = 0.0;
    for (Index i = 0; i < g.size(); ++i) {
      // the parent shares state and action; its next state is the noise-free one
      for (Index j = 0; j < d.size(); ++j) {
        if (d.states.col(j) == g.states.col(i) && d.actions.col(j) == g.actions.col(i)) {
          worst = std::max(worst, (g.next_states.col(i) - d.next_states.col(j)).cwiseAbs().maxCoeff());
          break;
        }
      }
    }
    CHECK(worst <= 0.1);
    CHECK(worst > 0.09);
    CHECK_THROWS(noise_augment(d, {-0.1}, 10, rng));
  }

  TEST_CASE("noise is uniform on [-s, s] (KS)")
  {
    data::OfflineDataset d = data::make_dataset(2, 1, 1);
    data::Transition t;
    t.state = Vector::Zero(2);
    t.action = Vector::Zero(1);
    t.next_state = Vector::Zero(2);
    data::set_transition(d, 0, t);
    data::recompute_stats(d);
    Rng rng(5);
    const data::OfflineDataset g = noise_augment(d, {0.3}, 100000, rng);
    std::vector<double> xs(g.next_states.row(0).data(), g.next_states.row(0).data() + g.size());
    for (Index i = 0; i < g.size(); ++i) { xs[static_cast<std::size_t>(i)] = g.next_states(0, i); }
    CHECK(testing::ks_uniform(xs, -0.3, 0.3) < testing::ks_critical_01(xs.size()));
  }

  TEST_CASE("model augmentation: size, tags, and the budget dial")
  {
    const data::OfflineDataset d = pm_data(4000, 6);
    density::DensityConfig cfg;
    cfg.hidden_dim = 32;
    cfg.train.batch_size = 128;
    Rng r1(7), r2(8);
    const PseudoModel weak = fit_pseudo_model(d, cfg, 20, r1);
    const PseudoModel strong = fit_pseudo_model(d, cfg, 2000, r2);
    CHECK(weak.budget == 20);

    Rng g1(9), g2(9);
    const data::OfflineDataset a = model_augment(d, weak, d.size(), g1);
    const data::OfflineDataset b = model_augment(d, strong, d.size(), g2);
    CHECK(a.size() == d.size());
    CHECK(a.count_tag(data::DomainTag::generated) == a.size());
    CHECK(a.provenance.at("generator") == "model");
    CHECK(model_error(a) > model_error(b));
    CHECK_THROWS(fit_pseudo_model(d, cfg, 0, r1));
  }
}
