#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "exprate/evaluate.hpp"
#include "exprate/simulator.hpp"

using namespace exprate;

namespace {

ContractRecord contract(std::string policy, int index, int claims, double exposure = 1.0) {
  ContractRecord c;
  c.policy_id = std::move(policy);
  c.vehicle_id = "1";
  c.contract_index = index;
  c.calendar_year = 2010 + index;
  c.effective_date = std::chrono::year_month_day{std::chrono::year{c.calendar_year}, std::chrono::month{1},
                                                 std::chrono::day{1}};
  c.exposure = exposure;
  c.covariates = {1.0};
  c.claim_count = claims;
  return c;
}

ExperienceModel intercept_poisson(double mean) {
  ExperienceModel m;
  GlmFit f;
  f.beta = Eigen::VectorXd::Constant(1, std::log(mean));
  f.labels = {"intercept"};
  m.glm = f;
  return m;
}

const Simulation& eval_sim() {
  static const Simulation sim = [] {
    auto s = SimSpec::defaults();
    s.n_policies = 6000;
    s.base_frequency = 0.10;
    s.seed = 33;
    return simulate_portfolio(s);
  }();
  return sim;
}

}  // namespace

TEST_CASE("logarithmic score by hand") {
  const Portfolio test({contract("1", 1, 0), contract("2", 1, 1)}, {{"2", "1", 1, 1, 100.0}}, {});
  const auto m = intercept_poisson(0.5);
  CHECK(logarithmic_score(m, test) == doctest::Approx(0.5 + (0.5 - std::log(0.5))).epsilon(1e-14));
  CHECK(logarithmic_score(m, test) == doctest::Approx(1.6931471805599453).epsilon(1e-14));

  const Portfolio other({contract("1", 1, 0)}, {}, {});
  auto wrong = m;
  wrong.covariates = {"age"};
  CHECK_THROWS_AS(logarithmic_score(wrong, other), SchemaError);
}

TEST_CASE("logarithmic score: self-scoring and additivity") {
  const auto& p = eval_sim().portfolio;
  ModelOptions o;
  o.min_calendar_year = 2014;
  const std::vector<std::string> cov{"age", "urban"};
  const auto freq = fit_bms_structure(p, Target::frequency, cov, BmsStructure{3, 95, 106, 100}, o);
  CHECK(logarithmic_score(freq, p) == doctest::Approx(-freq.loglik).epsilon(1e-12));

  const auto split = split_train_test(p, 0.6, 4);
  const double whole = logarithmic_score(freq, p);
  const double parts = logarithmic_score(freq, split.train) + logarithmic_score(freq, split.test);
  CHECK(parts == doctest::Approx(whole).epsilon(1e-12));

  auto lo = o;
  lo.tweedie_p = 1.5;
  const auto loss = fit_kappa_n(p, Target::loss_cost, cov, lo);
  CHECK(logarithmic_score(loss, split.train) + logarithmic_score(loss, split.test) ==
        doctest::Approx(logarithmic_score(loss, p)).epsilon(1e-12));
}

TEST_CASE("relativity tables of the published structures") {
  // published values, printed to three decimals with the discount negated
  struct Row {
    double gamma0;
    BmsStructure s;
    double surcharge, discount, min, max;
  };
  const Row rows[] = {{0.094, {3, 95, 106, 100}, 0.324, 0.089, 0.626, 1.753},
                      {0.026, {2, 94, 100, 100}, 0.054, 0.026, 0.855, 1.000},
                      {0.112, {3, 95, 104, 100}, 0.401, 0.106, 0.570, 1.568}};
  for (const auto& r : rows) {
    const auto t = relativity_table(r.gamma0, r.s);
    CHECK(std::abs(t.surcharge_per_claim - r.surcharge) <= 0.005);
    CHECK(std::abs(t.claims_free_discount - r.discount) <= 0.005);
    CHECK(std::abs(t.min_relativity - r.min) <= 0.005);
    CHECK(std::abs(t.max_relativity - r.max) <= 0.005);
    CHECK(t.levels.front().level == *r.s.l_min);
    CHECK(t.levels.back().level == *r.s.l_max);
    for (std::size_t i = 1; i < t.levels.size(); ++i) CHECK(t.levels[i].relativity > t.levels[i - 1].relativity);
  }
  // exact formula values
  const auto t = relativity_table(0.094, BmsStructure{3, 95, 106, 100});
  CHECK(t.surcharge_per_claim == doctest::Approx(std::exp(0.282) - 1.0).epsilon(1e-15));
  CHECK(t.claims_free_discount == doctest::Approx(1.0 - std::exp(-0.094)).epsilon(1e-15));
  CHECK(t.levels[5].level == 100);
  CHECK(t.levels[5].relativity == 1.0);

  const auto cpg = combined_relativity_table(0.094, BmsStructure{3, 95, 106, 100}, 0.026, BmsStructure{2, 94, 100, 100});
  CHECK(std::abs(cpg.surcharge_per_claim - 0.395) <= 0.005);
  CHECK(std::abs(cpg.claims_free_discount - 0.113) <= 0.005);
  CHECK(std::abs(cpg.min_relativity - 0.535) <= 0.005);
  CHECK(std::abs(cpg.max_relativity - 1.753) <= 0.005);
  CHECK(cpg.levels.front().level == 94);
  CHECK(cpg.levels.back().level == 106);
  CHECK(cpg.levels.front().relativity == doctest::Approx(cpg.min_relativity));
  CHECK(cpg.levels.back().relativity == doctest::Approx(cpg.max_relativity));

  const auto flat = relativity_table(0.0, BmsStructure{2, 94, 104, 100});
  for (const auto& l : flat.levels) CHECK(l.relativity == 1.0);
  CHECK(flat.surcharge_per_claim == 0.0);
  CHECK(flat.claims_free_discount == 0.0);

  const auto open = relativity_table(0.1, BmsStructure{3, std::nullopt, std::nullopt, 100});
  CHECK(open.levels.front().level == 94);
  CHECK(open.levels.back().level == 118);

  const auto csv = relativity_csv(t);
  CHECK(csv.rfind("level,relativity\n95,", 0) == 0);
}

TEST_CASE("combined CPG relativity") {
  CHECK(combined_cpg_relativity(1.324, 1.054) == doctest::Approx(1.395496));
  CHECK(1.0 - combined_cpg_relativity(0.911, 0.974) == doctest::Approx(0.112686));
  CHECK(combined_cpg_relativity(1.0, 1.0) == 1.0);
  CHECK_THROWS_AS(combined_cpg_relativity(0.0, 1.0), ArgumentError);
}

TEST_CASE("off-balance factor") {
  const std::vector<double> same{1.0, 2.0, 3.0};
  CHECK(off_balance_factor(same, same) == 1.0);
  const std::vector<double> pred{40.0, 50.0}, obs{60.0, 40.0};
  const double f = off_balance_factor(pred, obs);
  CHECK(f == doctest::Approx(10.0 / 9.0).epsilon(1e-15));
  const auto fixed = apply_off_balance(pred, f);
  CHECK(fixed[0] + fixed[1] == doctest::Approx(100.0).epsilon(1e-15));
  CHECK_THROWS_AS(off_balance_factor(pred, same), ArgumentError);
  const std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(off_balance_factor(zero, obs), ArgumentError);
}

TEST_CASE("AIC, BIC and JSON report") {
  auto r = make_report("bms", "poisson", -1000.0, 10, 5000);
  CHECK(r.aic == 2020.0);
  CHECK(r.bic == doctest::Approx(2000.0 + 10.0 * std::log(5000.0)).epsilon(1e-15));
  r.sl_score = 321.5;
  r.relativities = relativity_table(0.094, BmsStructure{3, 95, 106, 100});
  const auto j = to_json(r);
  CHECK(j["aic"] == 2020.0);
  CHECK(j["sl_score"] == 321.5);
  CHECK(j["off_balance_factor"].is_null());
  CHECK(j["relativities"]["levels"].size() == 12);
  CHECK_THROWS_AS(bic(0.0, 1, 0), ArgumentError);
}

TEST_CASE("group ratios") {
  // identical contracts: every populated ratio is 1
  std::vector<ContractRecord> cs;
  std::vector<ClaimRecord> cl;
  for (int p = 1; p <= 3; ++p)
    for (int t = 1; t <= 8; ++t) {
      cs.push_back(contract(std::to_string(p), t, 1));
      cl.push_back({std::to_string(p), "1", t, 1, 500.0});
    }
  const Portfolio same(cs, cl, {});
  const ContractPredictions flat{std::vector<double>(same.size(), 0.2), std::vector<double>(same.size(), 90.0)};
  for (const auto& g : group_ratio_report(same, flat)) {
    if (g.contracts == 0) continue;
    CHECK(g.observed_frequency == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g.observed_severity == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g.predicted_loss_cost == doctest::Approx(1.0).epsilon(1e-15));
  }

  // strong dynamics order the experienced groups, two ways of summing agree
  const auto& p = eval_sim().portfolio;
  ContractPredictions pred;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pred.frequency.push_back(eval_sim().truth[i].mean_freq);
    pred.loss_cost.push_back(eval_sim().truth[i].mean_freq * eval_sim().truth[i].mean_sev);
  }
  const auto groups = group_ratio_report(p, pred);
  const auto& d = groups[static_cast<std::size_t>(InsuredType::D)];
  const auto& f = groups[static_cast<std::size_t>(InsuredType::F)];
  CHECK(f.observed_frequency > 1.0);
  CHECK(d.observed_frequency < 1.0);
  CHECK(f.predicted_frequency > 1.0);
  CHECK(d.predicted_frequency < 1.0);

  const auto scope = compute_scope(p);
  std::map<InsuredType, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < p.size(); ++i)
    members[classify_insured_type(scope[i], p.contracts()[i].contract_index - 1)].push_back(i);
  auto mean_freq = [&](const std::vector<std::size_t>& idx) {
    double n = 0.0, e = 0.0;
    for (auto i : idx) n += p.contracts()[i].claim_count;
    for (auto i : idx) e += p.contracts()[i].exposure;
    return n / e;
  };
  std::vector<std::size_t> all(p.size());
  std::iota(all.begin(), all.end(), 0);
  for (const auto& g : groups) {
    if (g.contracts == 0) continue;
    CHECK(g.contracts == members[g.type].size());
    CHECK(std::abs(g.observed_frequency - mean_freq(members[g.type]) / mean_freq(all)) < 1e-12);
  }
  CHECK(group_ratio_csv(groups).rfind("type,contracts,observed_frequency_ratio", 0) == 0);
  CHECK_THROWS_AS(group_ratio_report(p, ContractPredictions{}), ArgumentError);
}
