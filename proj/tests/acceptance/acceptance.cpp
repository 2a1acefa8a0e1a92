// One line per acceptance criterion. Tolerances and runtime limits are fixed
// here; the exit status is 0 when the failing set equals --expect-fail.

#include <boost/math/quadrature/exp_sinh.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "exprate/bms_search.hpp"
#include "exprate/elasticnet.hpp"
#include "exprate/evaluate.hpp"
#include "exprate/simulator.hpp"
#include "fixtures.hpp"

using namespace exprate;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;  // 0: no limit
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const std::vector<std::string> kAllCovariates{"age", "male", "urban", "value"};

// 1 ---------------------------------------------------------------------------

Outcome scope_fixture() {
  const auto p = testing::sample_portfolio();
  int compared = 0, wrong = 0, skipped = 0;
  auto cell = [&](int expect, std::optional<int> got) {
    if (expect == testing::kSkip) {
      ++skipped;
      return;
    }
    ++compared;
    if (got.value_or(testing::kAbsent) != expect) ++wrong;
  };
  for (const auto& row : testing::published_scope_rows()) {
    const auto i = p.find({row.policy, row.vehicle, row.contract});
    if (!i) return {false, "missing sample row"};
    cell(row.n, p.contracts()[*i].claim_count);
    for (int lag = 1; lag <= 3; ++lag) {
      cell(row.vehicle_lag[lag - 1], vehicle_lag_claims(p, *i, lag));
      cell(row.policy_lag[lag - 1], policy_lag_claims(p, *i, lag));
    }
  }
  return {wrong == 0, fmt("%d cells compared, %d differ, %d not asserted", compared, wrong, skipped)};
}

// 2 ---------------------------------------------------------------------------

Outcome relativity_arithmetic() {
  constexpr double tol = 0.005;
  struct Row {
    double gamma0;
    BmsStructure s;
    double surcharge, discount, min, max;
  };
  const Row rows[] = {{0.094, {3, 95, 106, 100}, 0.324, 0.089, 0.626, 1.753},
                      {0.026, {2, 94, 100, 100}, 0.054, 0.026, 0.855, 1.000},
                      {0.112, {3, 95, 104, 100}, 0.401, 0.106, 0.570, 1.568}};
  double worst = 0.0;
  auto gap = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (const auto& r : rows) {
    const auto t = relativity_table(r.gamma0, r.s);
    gap(t.surcharge_per_claim, r.surcharge);
    gap(t.claims_free_discount, r.discount);
    gap(t.min_relativity, r.min);
    gap(t.max_relativity, r.max);
  }
  const auto c = combined_relativity_table(0.094, BmsStructure{3, 95, 106, 100}, 0.026, BmsStructure{2, 94, 100, 100});
  gap(c.surcharge_per_claim, 0.395);
  gap(-c.claims_free_discount, -0.113);
  gap(c.min_relativity, 0.535);
  gap(c.max_relativity, 1.753);
  return {worst <= tol, fmt("largest deviation %.4f (tol %.3f)", worst, tol)};
}

// 3 ---------------------------------------------------------------------------

Outcome tweedie_normalization() {
  constexpr double tol = 1e-6;
  boost::math::quadrature::exp_sinh<double> q;
  double worst = 0.0;
  for (double mu : {0.5, 1.0, 2.0})
    for (double phi : {0.5, 1.0})
      for (double p : {1.2, 1.5, 1.8}) {
        double total = std::exp(joint_log_density(0.0, 0, mu, phi, p, 1.0));
        for (int n = 1; n <= 60; ++n) {
          auto f = [&](double y) { return y > 0 ? std::exp(joint_log_density(y, n, mu, phi, p, 1.0)) : 0.0; };
          total += q.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-12);
        }
        worst = std::max(worst, std::abs(total - 1.0));
      }
  return {worst < tol, fmt("18 grid points, max |mass - 1| = %.2e (tol %.0e)", worst, tol)};
}

// 4 ---------------------------------------------------------------------------

Outcome dispersion_response() {
  constexpr double tol = 0.02;
  const double mu = 1.0, phi = 0.8, p = 1.5;
  const int draws = 100'000;
  std::mt19937_64 rng(2024);
  double sum = 0.0;
  for (int k = 0; k < draws; ++k) {
    const auto o = sample_tweedie(rng, mu, phi, p, 1.0);
    sum += deviance_response(o.y, o.n, mu, phi, p, 1.0);
  }
  const double rel = std::abs(sum / draws / phi - 1.0);
  return {rel < tol, fmt("E[D] = %.4f vs phi = %.1f, relative error %.4f (tol %.2f)", sum / draws, phi, rel, tol)};
}

// 5 ---------------------------------------------------------------------------

Outcome cpg_equivalence() {
  constexpr double tol = 1e-8;
  std::mt19937_64 rng(55);
  std::normal_distribution<double> x(0.0, 1.0);
  std::uniform_real_distribution<double> expo(0.1, 1.0);
  const double shape = 1.5;
  const double p = p_from_shape(shape);
  const int rows = 1000;
  Eigen::VectorXd eta_n(rows), eta_z(rows);
  std::vector<double> exposure(rows);
  for (int i = 0; i < rows; ++i) {
    const double lf = 95 + (i % 12), ls = 94 + (i % 7);
    eta_n(i) = -1.5 + 0.3 * x(rng) + 0.094 * (lf - 100);
    eta_z(i) = 8.9 - 0.1 * x(rng) + 0.026 * (ls - 100);
    exposure[static_cast<std::size_t>(i)] = expo(rng);
  }
  const auto map = cpg_to_tweedie(eta_n, eta_z, exposure, p);
  double worst = 0.0;
  int with_claims = 0;
  for (int i = 0; i < rows; ++i) {
    const double rate = exposure[static_cast<std::size_t>(i)] * std::exp(eta_n(i));
    const double sev = std::exp(eta_z(i));
    const int n = std::poisson_distribution<int>(rate)(rng);
    double y = 0.0;
    for (int k = 0; k < n; ++k) y += std::gamma_distribution<double>(shape, sev / shape)(rng);
    double cpg = poisson_log_pmf(n, rate);
    if (n > 0) {
      cpg += gamma_log_density(y, n * sev, n * shape);
      ++with_claims;
    }
    const double tw = joint_log_density(y, n, map.mu(i), map.phi(i), p, map.weight(i));
    worst = std::max(worst, std::abs(cpg - tw));
  }
  return {worst < tol, fmt("%d contracts (%d with claims), max |difference| = %.2e (tol %.0e)", rows, with_claims,
                           worst, tol)};
}

// 6 ---------------------------------------------------------------------------

Outcome structural_recovery() {
  constexpr double tol = 0.01;
  auto s = SimSpec::defaults();
  s.n_policies = 50'000;
  s.base_frequency = 0.10;
  s.seed = 1;
  const auto sim = simulate_portfolio(s);
  ModelOptions o;
  o.min_calendar_year = s.first_year + 6;
  const BmsGrid grid{{1, 2, 3, 4, 5}, {93, 94, 95, 96, 97, 98, 99}, {101, 102, 103, 104, 105, 106, 107, 108}};
  const auto m = fit_bms(sim.portfolio, Target::frequency, kAllCovariates, grid, o);
  const bool exact = m.structure == s.freq.structure;
  const double err = std::abs(m.gamma0() - s.freq.gamma0);
  return {exact && err <= tol, fmt("found %s (truth %s), gamma0 %.4f vs %.3f (tol %.2f), %zu candidates",
                                   m.structure.to_string().c_str(), s.freq.structure.to_string().c_str(),
                                   m.gamma0(), s.freq.gamma0, tol, m.profile_table.size())};
}

// 7 ---------------------------------------------------------------------------

Outcome kappa_n_recovery() {
  constexpr double tol = 0.01;
  auto s = SimSpec::defaults();
  s.n_policies = 50'000;
  s.freq = TargetDynamics{BmsStructure{3, std::nullopt, std::nullopt, 100}, 0.10};
  // unbounded levels run away at higher frequencies and on some seeds
  s.base_frequency = 0.02;
  s.seed = 2;
  const auto sim = simulate_portfolio(s);
  ModelOptions o;
  o.min_calendar_year = s.first_year + 6;
  const auto m = fit_kappa_n(sim.portfolio, Target::frequency, kAllCovariates, o);
  const double e0 = std::abs(m.gamma0() - 0.10), e1 = std::abs(m.gamma1() - 0.30);
  return {e0 <= tol && e1 <= tol,
          fmt("gamma0 %.4f (truth 0.10), gamma1 %.4f (truth 0.30), tol %.2f", m.gamma0(), m.gamma1(), tol)};
}

// 8 ---------------------------------------------------------------------------

/// Difference of two test scores and its standard error from per-row densities.
struct ScoreGap {
  double gap, se;
};
ScoreGap score_gap(const ExperienceModel& a, const ExperienceModel& b, const Portfolio& test) {
  const Eigen::VectorXd d = model_log_densities(b, test) - model_log_densities(a, test);
  const double n = static_cast<double>(d.size());
  const double mean = d.mean();
  const double var = (d.array() - mean).square().sum() / (n - 1.0);
  return {d.sum(), std::sqrt(var * n)};
}

Outcome ordering() {
  auto s = SimSpec::defaults();
  s.n_policies = 20'000;
  s.base_frequency = 0.10;
  // policy frailty only: no true level dynamics
  s.frailty_variance = 1.0;
  s.freq.gamma0 = 0.0;
  s.sev.gamma0 = 0.0;
  s.seed = 1;
  const auto sim = simulate_portfolio(s);
  const auto split = split_train_test(sim.portfolio, 0.75, 5);
  ModelOptions o;
  o.min_calendar_year = s.first_year + 6;
  const BmsGrid grid{{1, 2, 3, 4, 5}, {93, 94, 95, 96, 97, 98, 99}, {101, 102, 103, 104, 105, 106, 107, 108}};

  bool ordered = true;
  std::ostringstream detail;
  ExperienceModel bms_loss;
  for (auto t : {Target::frequency, Target::loss_cost}) {
    const auto st = fit_standard(split.train, t, kAllCovariates, o);
    const auto kn = fit_kappa_n(split.train, t, kAllCovariates, o);
    const auto bm = fit_bms(split.train, t, kAllCovariates, grid, o);
    const double sl_st = logarithmic_score(st, split.test), sl_kn = logarithmic_score(kn, split.test),
                 sl_bm = logarithmic_score(bm, split.test);
    // SL(bms) - SL(kappa_n) is a sum over test rows; a tie is within two standard errors
    const auto g = score_gap(bm, kn, split.test);
    const bool order = sl_bm - sl_kn <= 2.0 * g.se && sl_kn < sl_st && sl_bm < sl_st;
    ordered = ordered && order;
    detail << fmt("%s SL bms %.1f, kappa_n %.1f (se of gap %.1f), standard %.1f; ", to_string(t).c_str(), sl_bm,
                  sl_kn, g.se, sl_st);
    if (t == Target::loss_cost) bms_loss = bm;
  }
  const auto fr = fit_bms(split.train, Target::frequency, kAllCovariates, grid, o);
  const auto sv = fit_bms(split.train, Target::severity, kAllCovariates, grid, o);
  const auto cp = fit_tweedie_cp(fr, sv, split.train, o);
  const bool own_wins = bms_loss.loglik > cp.loglik;
  detail << "score ordering " << (ordered ? "holds" : "violated") << "; ";
  detail << fmt("Tweedie clause %s: train loglik", own_wins ? "holds" : "fails")
         << fmt(" own-level Tweedie %.1f (%s) vs Tweedie on CPG levels %.1f (%s, %s)", bms_loss.loglik,
                bms_loss.structure.to_string().c_str(), cp.loglik, fr.structure.to_string().c_str(),
                sv.structure.to_string().c_str());
  return {ordered && own_wins, detail.str()};
}

// 9 ---------------------------------------------------------------------------

DesignMatrix random_design(std::mt19937_64& rng, Eigen::Index n, Eigen::Index k, const char* prefix) {
  std::normal_distribution<double> z(0.0, 0.5);
  Eigen::MatrixXd x(n, k);
  std::vector<std::string> labels{"intercept"};
  for (Eigen::Index j = 1; j < k; ++j) labels.push_back(prefix + std::to_string(j));
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < k; ++j) x(i, j) = z(rng);
  }
  return DesignMatrix(std::move(x), std::move(labels));
}

/// Relative error of an analytic gradient against central differences of f.
double gradient_error(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& analytic,
                      Eigen::VectorXd beta) {
  const double h = 1e-5;
  Eigen::VectorXd numeric(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double b = beta(j);
    beta(j) = b + h;
    const double up = f(beta);
    beta(j) = b - h;
    const double dn = f(beta);
    beta(j) = b;
    numeric(j) = (up - dn) / (2 * h);
  }
  return (analytic - numeric).norm() / analytic.norm();
}

Outcome gradients() {
  constexpr double tol = 1e-5;
  constexpr int points = 20;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> jitter(0.0, 0.3);
  const Eigen::Index n = 200;
  auto perturb = [&](Eigen::VectorXd b) {
    for (Eigen::Index j = 0; j < b.size(); ++j) b(j) += jitter(rng);
    return b;
  };

  const auto x = random_design(rng, n, 3, "x");
  Eigen::VectorXd truth(3);
  truth << -0.5, 0.3, 0.2;
  std::vector<double> counts, exposure, costs;
  std::uniform_real_distribution<double> expo(0.3, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = expo(rng), m = std::exp(x.values().row(i).dot(truth));
    exposure.push_back(e);
    counts.push_back(std::poisson_distribution<int>(e * m)(rng));
    costs.push_back(std::gamma_distribution<double>(1.5, 1000.0 * m / 1.5)(rng));
  }
  Eigen::VectorXd sev_truth = truth;
  sev_truth(0) += std::log(1000.0);

  double worst_p = 0.0, worst_g = 0.0, worst_t = 0.0;
  for (int k = 0; k < points; ++k) {
    const auto b = perturb(truth);
    worst_p = std::max(worst_p, gradient_error([&](const Eigen::VectorXd& v) {
                         return glm_loglik(Family::poisson, x, counts, exposure, v);
                       },
                                               loglik_gradient(Family::poisson, x, counts, exposure, b), b));
    const auto bg = perturb(sev_truth);
    worst_g = std::max(worst_g, gradient_error([&](const Eigen::VectorXd& v) {
                         return glm_loglik(Family::gamma, x, costs, {}, v, 1.5);
                       },
                                               loglik_gradient(Family::gamma, x, costs, {}, bg, 1.5), bg));
  }

  const double p = 1.6;
  const auto xd = random_design(rng, n, 2, "d");
  std::vector<TweedieObservation> obs;
  Eigen::VectorXd disp_truth(2);
  disp_truth << 0.2, -0.3;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = exposure[static_cast<std::size_t>(i)];
    const double mu = e * std::exp(x.values().row(i).dot(truth));
    const double phi = std::exp(xd.values().row(i).dot(disp_truth));
    const double w = default_weight(e, p);
    const auto o = sample_tweedie(rng, mu, phi, p, w);
    obs.push_back(TweedieObservation{o.y, o.n, w, e});
  }
  for (int k = 0; k < points; ++k) {
    const auto bm = perturb(truth);
    const auto bd = perturb(disp_truth);
    worst_t = std::max(worst_t, gradient_error([&](const Eigen::VectorXd& v) {
                         return dglm_loglik(x, xd, obs, v, bd, p);
                       },
                                               dglm_mean_score(x, xd, obs, bm, bd, p), bm));
  }
  const double worst = std::max({worst_p, worst_g, worst_t});
  return {worst < tol, fmt("%d points each, max relative error Poisson %.1e, gamma %.1e, Tweedie %.1e (tol %.0e)",
                           points, worst_p, worst_g, worst_t, tol)};
}

// 10 --------------------------------------------------------------------------

Outcome elastic_net_limits() {
  constexpr double tol = 1e-4;
  std::mt19937_64 rng(10);
  const Eigen::Index n = 2000;
  const auto x = random_design(rng, n, 4, "x");
  Eigen::VectorXd beta(4);
  beta << -1.0, 0.4, -0.3, 0.2;
  std::vector<double> counts, exposure, costs;
  std::uniform_real_distribution<double> expo(0.5, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = expo(rng), m = std::exp(x.values().row(i).dot(beta));
    exposure.push_back(e);
    counts.push_back(std::poisson_distribution<int>(e * m)(rng));
    costs.push_back(std::gamma_distribution<double>(1.5, 5000.0 * m / 1.5)(rng));
  }
  const auto mask = default_penalty_mask(x);
  const PenalizedData pois{&x, counts, exposure, PenalizedFamily::poisson, 1.5};
  const PenalizedData gam{&x, costs, {}, PenalizedFamily::gamma, 1.5};

  double worst = 0.0;
  const auto ref_p = fit_poisson(x, counts, exposure);
  const auto ref_g = fit_gamma(x, costs);
  for (double alpha : {0.0, 0.5, 1.0}) {
    worst = std::max(worst, (fit_penalized(pois, PenaltySpec{alpha, 0.0, mask}).beta - ref_p.beta).cwiseAbs().maxCoeff());
    worst = std::max(worst, (fit_penalized(gam, PenaltySpec{alpha, 0.0, mask}).beta - ref_g.beta).cwiseAbs().maxCoeff());
  }
  int nonzero = 0;
  for (const auto* d : {&pois, &gam})
    for (double alpha : {0.25, 1.0}) {
      const double top = lambda_max(*d, mask, alpha);
      for (double scale : {1.0, 10.0}) {
        const auto fit = fit_penalized(*d, PenaltySpec{alpha, top * scale, mask});
        for (Eigen::Index j = 1; j < fit.beta.size(); ++j) nonzero += fit.beta(j) != 0.0;
      }
    }
  return {worst < tol && nonzero == 0,
          fmt("lambda=0 max coefficient gap %.1e (tol %.0e); %d nonzero penalized coefficients at lambda >= lambda_max",
              worst, tol, nonzero)};
}

// 11 --------------------------------------------------------------------------

Outcome trajectories() {
  const BmsStructure structures[3] = {{3, 95, 106}, {2, 94, 100}, {3, 95, 104}};
  // levels at the start of years 7..12, worked by hand
  const int expect[3][4][6] = {{{95, 95, 95, 95, 95, 95},
                                {106, 106, 105, 106, 106, 105},
                                {105, 104, 103, 98, 98, 101},
                                {101, 101, 98, 98, 106, 106}},
                               {{94, 94, 94, 94, 94, 94},
                                {100, 100, 99, 100, 100, 99},
                                {99, 98, 97, 96, 95, 99},
                                {96, 95, 97, 97, 100, 100}},
                               {{95, 95, 95, 95, 95, 95},
                                {104, 104, 103, 104, 104, 103},
                                {103, 102, 101, 98, 98, 101},
                                {100, 99, 98, 98, 104, 104}}};
  int compared = 0, wrong = 0;
  const auto& histories = testing::fictitious_histories();
  for (int s = 0; s < 3; ++s)
    for (std::size_t k = 0; k < histories.size(); ++k) {
      const auto path = level_trajectory(histories[k], structures[s]);
      for (int t = 0; t < 6; ++t) {
        ++compared;
        if (path.at(static_cast<std::size_t>(6 + t)) != expect[s][k][t]) ++wrong;
      }
    }
  return {wrong == 0, fmt("%d levels compared, %d differ", compared, wrong)};
}

// 12 --------------------------------------------------------------------------

Outcome balance() {
  constexpr double tol_fit = 1e-8, tol_off = 1e-12;
  auto s = SimSpec::defaults();
  s.n_policies = 5000;
  s.seed = 12;
  const auto sim = simulate_portfolio(s);
  const auto& p = sim.portfolio;

  std::vector<double> counts, exposure, costs;
  for (const auto& c : p.contracts()) {
    counts.push_back(c.claim_count);
    exposure.push_back(c.exposure);
  }
  for (const auto& cl : p.claims()) costs.push_back(cl.cost);
  const auto ones = [](std::size_t n) {
    return DesignMatrix(Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), 1), {"intercept"});
  };
  const auto fp = fit_poisson(ones(counts.size()), counts, exposure);
  const double obs_n = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double fit_n = predict_mean(fp, ones(counts.size()), exposure).sum();
  const auto fg = fit_gamma(ones(costs.size()), costs);
  const double obs_c = std::accumulate(costs.begin(), costs.end(), 0.0);
  const double fit_c = predict_mean(fg, ones(costs.size()), {}).sum();
  const double rel_n = std::abs(fit_n / obs_n - 1.0), rel_c = std::abs(fit_c / obs_c - 1.0);

  // a model fitted on one half predicts the other half's totals only after correction
  const auto split = split_train_test(p, 0.5, 3);
  const auto m = fit_standard(split.train, Target::frequency, kAllCovariates);
  const Eigen::VectorXd pred = predict_contracts(m, split.test);
  std::vector<double> predicted(pred.data(), pred.data() + pred.size()), observed;
  for (const auto& c : split.test.contracts()) observed.push_back(c.claim_count);
  const double f = off_balance_factor(predicted, observed);
  const auto fixed = apply_off_balance(predicted, f);
  const double total_obs = std::accumulate(observed.begin(), observed.end(), 0.0);
  const double rel_off = std::abs(std::accumulate(fixed.begin(), fixed.end(), 0.0) / total_obs - 1.0);
  return {rel_n < tol_fit && rel_c < tol_fit && rel_off < tol_off,
          fmt("Poisson %.1e, gamma %.1e (tol %.0e); off-balance factor %.4f leaves %.1e (tol %.0e)", rel_n, rel_c,
              tol_fit, f, rel_off, tol_off)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only, expect_fail;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--expect-fail", expect_fail, "Criteria known not to hold; exit 0 when exactly these fail")
      ->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "scope fixture", 1, scope_fixture},
      {2, "relativity arithmetic", 1, relativity_arithmetic},
      {3, "Tweedie normalization", 30, tweedie_normalization},
      {4, "dispersion response", 10, dispersion_response},
      {5, "CPG / Tweedie equivalence", 5, cpg_equivalence},
      {6, "structural recovery", 600, structural_recovery},
      {7, "Kappa-N recovery", 120, kappa_n_recovery},
      {8, "ordering reproduction", 0, ordering},
      {9, "gradient checks", 0, gradients},
      {10, "elastic-net limits", 0, elastic_net_limits},
      {11, "trajectory fixture", 0, trajectories},
      {12, "balance identities", 0, balance},
  };
  std::set<int> failed;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1f s", secs);
    if (c.limit_seconds > 0) {
      timing += fmt(" of %.0f s", c.limit_seconds);
      if (secs > c.limit_seconds) o.pass = false;
    }
    if (!o.pass) failed.insert(c.id);
    std::cout << (o.pass ? "PASS" : "FAIL") << fmt(" %2d  ", c.id) << c.name << ": " << o.detail << " [" << timing
              << "]" << std::endl;
  }
  std::set<int> expected(expect_fail.begin(), expect_fail.end());
  if (!only.empty())
    std::erase_if(expected, [&](int id) { return std::find(only.begin(), only.end(), id) == only.end(); });
  if (failed != expected) {
    std::cout << "unexpected outcome: " << failed.size() << " failed, " << expected.size() << " expected to fail"
              << std::endl;
    return 1;
  }
  return 0;
}
