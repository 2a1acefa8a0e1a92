#include <doctest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <random>

#include "exprate/tweedie.hpp"

using namespace exprate;

namespace {

double lambda_of(double mu, double phi, double p, double w) {
  return w * std::pow(mu, 2.0 - p) / (phi * (2.0 - p));
}

/// Poisson(lambda) x Gamma(n gamma, theta) written out independently.
double factorised_log_density(double y, int n, double mu, double phi, double p, double w) {
  const double lambda = lambda_of(mu, phi, p, w);
  if (n == 0) return -lambda;
  const double g = (2.0 - p) / (p - 1.0);
  const double theta = phi * (p - 1.0) * std::pow(mu, p - 1.0) / w;
  const double shape = n * g;
  return -lambda + n * std::log(lambda) - std::lgamma(n + 1.0) + (shape - 1.0) * std::log(y) -
         y / theta - shape * std::log(theta) - std::lgamma(shape);
}

double integrate_claims(int n, double mu, double phi, double p, double w) {
  boost::math::quadrature::exp_sinh<double> q;
  auto f = [&](double y) { return y > 0 ? std::exp(joint_log_density(y, n, mu, phi, p, w)) : 0.0; };
  return q.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-12);
}

DesignMatrix noise_design(std::mt19937_64& rng, std::size_t n, int k) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), k + 1);
  std::vector<std::string> labels{"intercept"};
  for (int j = 1; j <= k; ++j) labels.push_back("z" + std::to_string(j));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = 1.0;
    for (int j = 1; j <= k; ++j) x(i, j) = z(rng);
  }
  return DesignMatrix(std::move(x), std::move(labels));
}

DesignMatrix ones(std::size_t n) {
  return DesignMatrix(Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), 1), {"intercept"});
}

}  // namespace

TEST_CASE("joint density: zero branch and gamma index") {
  CHECK(joint_log_density(0.0, 0, 1.0, 1.0, 1.5, 1.0) == -2.0);
  CHECK(tweedie_gamma_index(1.5) == 1.0);
  CHECK(p_from_shape(1.0) == 1.5);
  CHECK(p_from_shape(tweedie_gamma_index(1.3)) == doctest::Approx(1.3).epsilon(1e-14));
  CHECK(default_weight(0.5, 1.5) == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("joint density: domain and support errors") {
  CHECK_THROWS_AS(joint_log_density(0.0, 1, 1.0, 1.0, 1.5, 1.0), ArgumentError);
  CHECK_THROWS_AS(joint_log_density(2.0, 0, 1.0, 1.0, 1.5, 1.0), ArgumentError);
  CHECK_THROWS_AS(joint_log_density(1.0, 1, 1.0, 1.0, 2.0, 1.0), ArgumentError);
  CHECK_THROWS_AS(joint_log_density(1.0, 1, 1.0, 1.0, 1.0, 1.0), ArgumentError);
  CHECK_THROWS_AS(joint_log_density(1.0, 1, -1.0, 1.0, 1.5, 1.0), ArgumentError);
  CHECK_THROWS_AS(joint_log_density(1.0, 1, 1.0, 0.0, 1.5, 1.0), ArgumentError);
  CHECK_THROWS_AS(joint_log_density(1.0, 1, 1.0, 1.0, 1.5, 0.0), ArgumentError);
}

TEST_CASE("joint density equals the compound Poisson factorisation") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 3.0), pp(1.05, 1.95);
  std::uniform_int_distribution<int> nn(1, 40);
  for (int k = 0; k < 500; ++k) {
    const double mu = u(rng), phi = u(rng), p = pp(rng), w = u(rng), y = 10 * u(rng);
    const int n = nn(rng);
    CHECK(joint_log_density(y, n, mu, phi, p, w) ==
          doctest::Approx(factorised_log_density(y, n, mu, phi, p, w)).epsilon(1e-11));
  }
  // large n gamma stays finite in log space
  CHECK(std::isfinite(joint_log_density(5000.0, 400, 10.0, 0.5, 1.1, 1.0)));
}

TEST_CASE("joint density normalises and its margins are Poisson") {
  for (double mu : {0.5, 1.0, 2.0})
    for (double phi : {0.5, 1.0})
      for (double p : {1.2, 1.5, 1.8}) {
        const double w = 1.0;
        const double lambda = lambda_of(mu, phi, p, w);
        double total = std::exp(joint_log_density(0.0, 0, mu, phi, p, w));
        CHECK(total == doctest::Approx(std::exp(-lambda)).epsilon(1e-14));
        double log_pmf = -lambda;
        for (int n = 1; n <= 60; ++n) {
          log_pmf += std::log(lambda) - std::log(static_cast<double>(n));
          const double mass = integrate_claims(n, mu, phi, p, w);
          CHECK(std::abs(mass - std::exp(log_pmf)) < 1e-6);
          total += mass;
        }
        CHECK(std::abs(total - 1.0) < 1e-6);
      }
}

TEST_CASE("dispersion response") {
  const double mu = 1.3, phi = 0.7, p = 1.4, w = 1.0;
  const double nu = dispersion_prior(mu, phi, p, w);
  CHECK(dispersion_prior(mu, phi, p, 2 * w) == doctest::Approx(2 * nu).epsilon(1e-14));
  const double d0 = deviance_response(0.0, 0, mu, phi, p, w);
  CHECK(std::isfinite(d0));
  CHECK(d0 == doctest::Approx(2.0 / nu * (w * std::pow(mu, 2 - p) / (2 - p)) + phi).epsilon(1e-14));

  std::mt19937_64 rng(11);
  double sum = 0.0;
  const int draws = 100'000;
  for (int k = 0; k < draws; ++k) {
    const auto o = sample_tweedie(rng, 1.0, 0.8, 1.5, 1.0);
    sum += deviance_response(o.y, o.n, 1.0, 0.8, 1.5, 1.0);
  }
  CHECK(std::abs(sum / draws / 0.8 - 1.0) < 0.02);
}

TEST_CASE("sampler mean") {
  std::mt19937_64 rng(12);
  const double mu = 1.7, phi = 1.1, p = 1.6;
  const int draws = 1'000'000;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < draws; ++k) {
    const auto o = sample_tweedie(rng, mu, phi, p, 1.0);
    CHECK_FALSE(((o.y == 0.0) != (o.n == 0)));
    s += o.y;
    s2 += o.y * o.y;
  }
  const double mean = s / draws;
  const double se = std::sqrt((s2 / draws - mean * mean) / draws);
  CHECK(std::abs(mean - mu) < 3 * se);
  // Tweedie variance phi mu^p
  CHECK((s2 / draws - mean * mean) == doctest::Approx(phi * std::pow(mu, p)).epsilon(0.02));
}

TEST_CASE("DGLM recovers mean and dispersion") {
  std::mt19937_64 rng(5);
  const std::size_t n = 100'000;
  std::vector<TweedieObservation> obs;
  for (std::size_t i = 0; i < n; ++i) obs.push_back(sample_tweedie(rng, 1.2, 0.9, 1.5, 1.0));
  const auto fit = fit_dglm(ones(n), ones(n), obs, 1.5);
  CHECK(fit.converged);
  CHECK(std::abs(std::exp(fit.beta_mean(0)) / 1.2 - 1.0) < 0.03);
  CHECK(std::abs(std::exp(fit.beta_disp(0)) / 0.9 - 1.0) < 0.03);
  CHECK(fit.n_params == 3);
}

TEST_CASE("DGLM monotone improvement and score") {
  std::mt19937_64 rng(6);
  const std::size_t n = 5000;
  auto dm = noise_design(rng, n, 2);
  auto dd = noise_design(rng, n, 1);
  std::vector<TweedieObservation> obs;
  std::uniform_real_distribution<double> expo(0.2, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double d = expo(rng);
    const double mu = d * std::exp(-0.2 + 0.3 * dm.values()(r, 1) - 0.1 * dm.values()(r, 2));
    const double phi = std::exp(0.1 + 0.2 * dd.values()(r, 1));
    auto o = sample_tweedie(rng, mu, phi, 1.4, default_weight(d, 1.4));
    o.exposure = d;
    obs.push_back(o);
  }
  const auto fit = fit_dglm(dm, dd, obs, 1.4);
  CHECK(fit.converged);
  CHECK(fit.loglik == doctest::Approx(dglm_loglik(dm, dd, obs, fit.beta_mean, fit.beta_disp, 1.4)));

  // ascent: the converged fit beats the mean model with an intercept dispersion
  Eigen::VectorXd disp0 = Eigen::VectorXd::Zero(2);
  const auto intercept_only = fit_dglm(dm, ones(n), obs, 1.4);
  disp0(0) = intercept_only.beta_disp(0);
  CHECK(fit.loglik >= dglm_loglik(dm, dd, obs, intercept_only.beta_mean, disp0, 1.4));

  const Eigen::VectorXd score = dglm_mean_score(dm, dd, obs, fit.beta_mean, fit.beta_disp, 1.4);
  CHECK(score.cwiseAbs().maxCoeff() < 1e-3);
  CHECK(std::abs(fit.beta_disp(1) - 0.2) < 0.06);

  // finite differences
  std::normal_distribution<double> z(0.0, 0.2);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd b = fit.beta_mean;
    for (Eigen::Index j = 0; j < b.size(); ++j) b(j) += z(rng);
    const Eigen::VectorXd a = dglm_mean_score(dm, dd, obs, b, fit.beta_disp, 1.4);
    Eigen::VectorXd num(b.size());
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const double h = 1e-5;
      Eigen::VectorXd up = b, dn = b;
      up(j) += h;
      dn(j) -= h;
      num(j) = (dglm_loglik(dm, dd, obs, up, fit.beta_disp, 1.4) -
                dglm_loglik(dm, dd, obs, dn, fit.beta_disp, 1.4)) / (2 * h);
    }
    CHECK((a - num).norm() / a.norm() < 1e-5);
  }
}

TEST_CASE("DGLM null dispersion covariates") {
  std::mt19937_64 rng(7);
  const std::size_t n = 100'000;
  auto dd = noise_design(rng, n, 3);
  std::vector<TweedieObservation> obs;
  for (std::size_t i = 0; i < n; ++i) obs.push_back(sample_tweedie(rng, 1.2, 0.9, 1.5, 1.0));
  const auto fit = fit_dglm(ones(n), dd, obs, 1.5);
  for (Eigen::Index j = 1; j < 4; ++j) CHECK(std::abs(fit.beta_disp(j)) < 0.02);
}

TEST_CASE("DGLM errors") {
  std::vector<TweedieObservation> none(10);
  CHECK_THROWS_AS(fit_dglm(ones(10), ones(10), none, 1.5), DivergenceError);
  CHECK_THROWS_AS(fit_dglm(ones(10), ones(9), none, 1.5), ArgumentError);
  CHECK_THROWS_AS(fit_dglm(ones(10), ones(10), none, 2.5), ArgumentError);
}

TEST_CASE("select_p") {
  std::mt19937_64 rng(8);
  const std::size_t n = 20'000;
  std::vector<TweedieObservation> obs;
  for (std::size_t i = 0; i < n; ++i) obs.push_back(sample_tweedie(rng, 1.0, 1.0, 1.5, 1.0));
  const std::vector<double> grid{1.3, 1.4, 1.5, 1.6, 1.7};
  const auto sel = select_p(ones(n), ones(n), obs, grid);
  CHECK(sel.p == 1.5);
  CHECK(sel.profile.size() == 5);
  const std::vector<double> rev(grid.rbegin(), grid.rend());
  const auto sel2 = select_p(ones(n), ones(n), obs, rev);
  CHECK(sel2.p == sel.p);
  CHECK(sel2.fit.loglik == sel.fit.loglik);
  CHECK(sel2.profile == sel.profile);

  const std::vector<double> one{1.5};
  const auto single = select_p(ones(n), ones(n), obs, one);
  CHECK(single.p == 1.5);
  CHECK(single.fit.loglik == sel.fit.loglik);

  const std::vector<double> bad{1.0};
  CHECK_THROWS_AS(select_p(ones(n), ones(n), obs, bad), ArgumentError);
  CHECK(default_p_grid().size() == 17);
  CHECK(default_p_grid().front() == 1.1);
  CHECK(default_p_grid().back() == 1.9);
}

TEST_CASE("CPG mapping") {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  const std::vector<double> d(3, 1.0);
  const auto m = cpg_to_tweedie(zero, zero, d, 1.5);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(m.mu(i) == 1.0);
    CHECK(m.phi(i) == doctest::Approx(1.0 / (2.0 - 1.5)).epsilon(1e-15));
  }
  CHECK_THROWS_AS(cpg_to_tweedie(zero, zero, d, 2.0), ArgumentError);

  // Likelihood equivalence with the compound Poisson-gamma model in its (N,Y) form.
  std::mt19937_64 rng(31);
  std::normal_distribution<double> x(0.0, 1.0);
  std::uniform_real_distribution<double> expo(0.1, 1.0);
  const double shape = 1.7;
  const double p = p_from_shape(shape);
  const int rows = 1000;
  Eigen::VectorXd eta_n(rows), eta_z(rows);
  std::vector<double> exposure(rows);
  double worst = 0.0;
  for (int i = 0; i < rows; ++i) {
    const double level = 95 + (i % 12);
    eta_n(i) = -2.0 + 0.3 * x(rng) + 0.05 * (level - 100);
    eta_z(i) = 8.0 - 0.1 * x(rng) + 0.02 * (level - 100);
    exposure[static_cast<std::size_t>(i)] = expo(rng);
  }
  const auto map = cpg_to_tweedie(eta_n, eta_z, exposure, p);
  for (int i = 0; i < rows; ++i) {
    const double d = exposure[static_cast<std::size_t>(i)];
    const double rate = d * std::exp(eta_n(i));
    const double sev = std::exp(eta_z(i));
    // Oversample claims so that every n branch is exercised.
    const int n = std::poisson_distribution<int>(rate * 20)(rng);
    double y = 0.0;
    for (int k = 0; k < n; ++k) y += std::gamma_distribution<double>(shape, sev / shape)(rng);
    double cpg = poisson_log_pmf(n, rate);
    if (n > 0) cpg += gamma_log_density(y, n * sev, n * shape);
    const double tw = joint_log_density(y, n, map.mu(i), map.phi(i), p, map.weight(i));
    worst = std::max(worst, std::abs(cpg - tw));
  }
  CHECK(worst < 1e-8);
}
