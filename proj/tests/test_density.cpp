#include "bosa/density/density_model.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace bosa;
using namespace bosa::density;

namespace {

/// y | x ~ N(slope * x, sigma^2), one column per sample.
void gaussian_data(Index n, double slope, double sigma, Rng &rng, Matrix &x, Matrix &y)
{
  x = rng.normal_matrix(1, n);
  y = slope * x + sigma * rng.normal_matrix(1, n);
}

double gaussian_log_density(double y, double mean, double sigma)
{
  const double z = (y - mean) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * M_PI);
}

data::OfflineDataset pm_data(Index n, double mass, std::uint64_t seed, data::DomainTag tag)
{
  return data::collect(envs::make_env(envs::Family::point_mass_2d, mass), {envs::Tier::medium, 0.3}, n, seed, tag);
}

DensityConfig quick_config()
{
  DensityConfig c;
  c.hidden_dim = 32;
  c.train.iterations = 600;
  c.train.batch_size = 128;
  return c;
}

} // namespace

TEST_SUITE("density")
{
  TEST_CASE("KL against the prior")
  {
    CHECK(gaussian_kl(Matrix::Zero(3, 2), Matrix::Zero(3, 2)).isZero(0.0));
    CHECK(gaussian_kl(Matrix::Ones(4, 1), Matrix::Zero(4, 1))[0] == doctest::Approx(0.5 * 4));
    Matrix mu(1, 1), lv(1, 1);
    mu << 0.3;
    lv << std::log(2.0);
    CHECK(gaussian_kl(mu, lv)[0] == doctest::Approx(0.5 * (0.09 + 2.0 - std::log(2.0) - 1.0)));
  }

  TEST_CASE("spec shapes")
  {
    const CvaeSpec s = make_cvae_spec(5, 2, 16, 3);
    CHECK(s.latent_dim == 4);
    CHECK(s.encoder_spec().input_dim == 7);
    CHECK(s.encoder_spec().output_dim == 8);
    CHECK(s.decoder_spec().input_dim == 9);
    CHECK(s.decoder_spec().output_dim == 4);
    CHECK_THROWS(make_cvae_spec(0, 2, 16, 3).validate());
  }

  TEST_CASE("ELBO gradient matches central differences")
  {
    for (std::uint64_t seed = 0; seed < 3; ++seed) { CHECK(testing::elbo_gradient_error(seed) < 1e-4); }
  }

  TEST_CASE("exact decoder and posterior give the exact log-density for any L")
  {
    // Decoder ignores z and returns N(x, 0.2^2); the encoder returns the prior, which is then the exact posterior.
    const CvaeSpec spec = make_cvae_spec(1, 1, 2, 2, 0.5);
    Rng rng(1);
    CvaeModel m = make_cvae(spec, rng);
    m.encoder.store.params.setZero();
    m.decoder.store.params.setZero();
    // decoder layer 1: 2 x 3 weights over [x; z1; z2], relu(x) and relu(-x)
    Vector &p = m.decoder.store.params;
    p[0] = 1.0;
    p[1] = -1.0;
    // layer 2: 2 x 2 weights, rows (mean, logvar)
    const Index o = spec.decoder_spec().layer_offset(1);
    p[o + 0] = 1.0;  // mean <- h1
    p[o + 2] = -1.0; // mean <- h2
    p[o + 4 + 1] = 2.0 * std::log(0.2);

    Matrix x(1, 3), y(1, 3);
    x << 0.5, -1.0, 2.0;
    y << 0.4, -1.3, 2.0;
    for (int l : {1, 5, 50}) {
      Rng r(7);
      const Vector ll = log_likelihood(m, x, y, r, l);
      for (Index j = 0; j < 3; ++j) { CHECK(ll[j] == doctest::Approx(gaussian_log_density(y(0, j), x(0, j), 0.2))); }
    }
  }

  TEST_CASE("likelihood gradients match central differences")
  {
    Rng rng(3);
    const CvaeModel m = make_cvae(make_cvae_spec(2, 2, 8, 3), rng);
    const Matrix c = rng.normal_matrix(2, 4);
    Matrix y = rng.normal_matrix(2, 4);
    const Rng stream(9);
    Rng r0 = stream;
    const LikelihoodWithGrad g = log_likelihood_with_grad(m, c, y, r0, 6);
    Rng r1 = stream;
    CHECK((g.value - log_likelihood(m, c, y, r1, 6)).cwiseAbs().maxCoeff() < 1e-10);

    Vector yv = y.reshaped();
    auto f = [&] {
      Rng r = stream;
      return log_likelihood(m, c, yv.reshaped(2, 4), r, 6).sum();
    };
    CHECK(testing::max_relative_error(g.d_output.reshaped(), testing::numeric_gradient(f, yv)) < 1e-4);

    Vector cv = c.reshaped();
    auto fc = [&] {
      Rng r = stream;
      return log_likelihood(m, cv.reshaped(2, 4), y, r, 6).sum();
    };
    CHECK(testing::max_relative_error(g.d_condition.reshaped(), testing::numeric_gradient(fc, cv)) < 1e-4);
  }

  TEST_CASE("trained CVAE ranks a 20-sigma outlier below in-distribution points")
  {
    Rng rng(4);
    Matrix x, y;
    gaussian_data(4000, 2.0, 0.1, rng, x, y);
    CvaeModel m = make_cvae(make_cvae_spec(1, 1, 32, 3), rng);
    TrainConfig tc;
    tc.iterations = 1500;
    tc.batch_size = 128;
    const auto losses = train_cvae(m, x, y, tc, rng);
    CHECK(losses.back() < losses.front());

    Matrix hx, hy;
    gaussian_data(1000, 2.0, 0.1, rng, hx, hy);
    Vector ll = log_likelihood(m, hx, hy, rng, 10);
    std::sort(ll.data(), ll.data() + ll.size());
    Matrix ox(1, 1), oy(1, 1);
    ox << 0.3;
    oy << 0.6 + 20 * 0.1;
    CHECK(log_likelihood(m, ox, oy, rng, 10)[0] < ll[0]);
  }

  TEST_CASE("support thresholds")
  {
    CHECK(SupportThreshold::disabled().passes(-1e300));
    CHECK(SupportThreshold::from_log(-std::numeric_limits<double>::infinity()).passes(log_likelihood_floor));
    CHECK_FALSE(SupportThreshold::from_log(std::numeric_limits<double>::infinity()).passes(1e300));
    const auto t = SupportThreshold::from_likelihood(0.08);
    CHECK(t.log_value == doctest::Approx(std::log(0.08)));
    CHECK(t.likelihood() == doctest::Approx(0.08));
    CHECK_FALSE(t.passes(std::log(0.08)));
    CHECK(t.passes(std::log(0.081)));
    CHECK_THROWS(SupportThreshold::from_likelihood(0.0));
    CHECK_THROWS(SupportThreshold::from_likelihood(1.5));
  }

  TEST_CASE("behavior and transition models record their data and round-trip")
  {
    const data::OfflineDataset d = pm_data(2000, 1.0, 1, data::DomainTag::target);
    Rng rng(2);
    const DensityModel b = fit_behavior(d, quick_config(), rng);
    CHECK(b.role == Role::behavior);
    CHECK(b.data_hash == data::content_hash(d));

    const DensityEnsemble e = fit_transition_ensemble(d, quick_config(), 2, 5, 2);
    REQUIRE(e.members.size() == 2);
    CHECK(e.members[0].data_hash == data::content_hash(d));
    CHECK(e.members[1].ensemble_index == 1);
    CHECK(e.members[0].cvae.encoder.store.params != e.members[1].cvae.encoder.store.params);

    const auto dir = std::filesystem::temp_directory_path() / "bosa_test_density";
    std::filesystem::remove_all(dir);
    save_density(dir, "behavior", b);
    save_ensemble(dir / "ens", e);
    const DensityModel b2 = load_density(dir, "behavior");
    const DensityEnsemble e2 = load_ensemble(dir / "ens");
    Rng r1(3), r2(3);
    CHECK(behavior_log_likelihood(b, d.states.leftCols(20), d.actions.leftCols(20), r1, 5) ==
          behavior_log_likelihood(b2, d.states.leftCols(20), d.actions.leftCols(20), r2, 5));
    const Rng s(4);
    CHECK(score_dataset(e, d, s, 5) == score_dataset(e2, d, s, 5));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("ensemble is the member-wise minimum")
  {
    const data::OfflineDataset d = pm_data(1500, 1.0, 3, data::DomainTag::target);
    const DensityEnsemble e = fit_transition_ensemble(d, quick_config(), 3, 6, 1);
    const Rng rng(8);
    const Matrix members = member_log_likelihoods(e, d.states, d.actions, d.next_states, rng, 5);
    const Vector ens = ensemble_log_likelihood(e, d.states, d.actions, d.next_states, rng, 5);
    CHECK(members.rows() == 3);
    Index checked = 0;
    for (Index j = 0; j < 1000; ++j) {
      CHECK(ens[j] == members.col(j).minCoeff());
      CHECK(ens[j] <= members.col(j).mean());
      ++checked;
    }
    CHECK(checked == 1000);

    DensityEnsemble single{{e.members[0]}};
    Rng r1 = rng.split(0);
    CHECK(ensemble_log_likelihood(single, d.states, d.actions, d.next_states, rng, 5) ==
          transition_log_likelihood(e.members[0], d.states, d.actions, d.next_states, r1, 5));
  }

  TEST_CASE("scores do not depend on the worker count")
  {
    const data::OfflineDataset d = pm_data(5000, 1.0, 4, data::DomainTag::target);
    const DensityEnsemble e = fit_transition_ensemble(d, quick_config(), 2, 7, 1);
    const Rng rng(1);
    CHECK(score_dataset(e, d, rng, 4, 1) == score_dataset(e, d, rng, 4, 3));
  }

  TEST_CASE("transition models prefer target dynamics")
  {
    const data::OfflineDataset t = pm_data(10000, 1.0, 5, data::DomainTag::target);
    const data::OfflineDataset s = pm_data(3000, 0.5, 6, data::DomainTag::source);
    DensityConfig c = quick_config();
    c.train.iterations = 1500;
    const DensityEnsemble e = fit_transition_ensemble(t, c, 1, 8, 1);
    const Rng rng(2);
    const Vector st = score_dataset(e, t, rng, 5);
    const Vector ss = score_dataset(e, s, rng, 5);
    CHECK(st.mean() > ss.mean());
    const std::vector<std::uint8_t> pass =
      in_support(e, SupportThreshold::disabled(), s.states, s.actions, s.next_states, rng, 5);
    CHECK(std::count(pass.begin(), pass.end(), 1) == s.size());
  }
}
