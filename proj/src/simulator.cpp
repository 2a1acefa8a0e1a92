#include "exprate/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

#include "exprate/errors.hpp"
#include "exprate/util.hpp"

namespace exprate {

namespace {

constexpr int kPilotPolicies = 4000;
constexpr int kCalibrationRounds = 5;
// Expected claims of one contract beyond which the dynamics are treated as runaway.
constexpr double kRunawayMean = 50.0;
constexpr std::uint64_t kPilotStream = 0x9E3779B97F4A7C15ULL;

struct Vehicle {
  int id = 0;
  int first_year = 0;  // simulation year of the first contract
  int month = 1;
  int day = 1;
  std::vector<double> x;  // covariates at the first year
};

struct PolicyOutput {
  std::vector<ContractRecord> contracts;
  std::vector<ClaimRecord> claims;
  std::vector<TruthRow> truth;
  double exposure = 0.0;
  double expected_claims = 0.0;
  double expected_cost = 0.0;
};

std::uint64_t policy_seed(std::uint64_t seed, std::uint64_t stream, std::size_t policy) {
  return splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ULL * (policy + 1)));
}

Vehicle new_vehicle(const SimSpec& spec, std::mt19937_64& rng, int id, int year) {
  Vehicle v;
  v.id = id;
  v.first_year = year;
  v.month = std::uniform_int_distribution<int>(1, 12)(rng);
  v.day = std::uniform_int_distribution<int>(1, 28)(rng);
  for (const auto& g : spec.covariates) {
    switch (g.kind) {
      case CovariateGenerator::Kind::bernoulli:
        v.x.push_back(std::bernoulli_distribution(g.a)(rng) ? 1.0 : 0.0);
        break;
      case CovariateGenerator::Kind::normal:
        v.x.push_back(std::normal_distribution<double>(g.a, g.b)(rng));
        break;
      case CovariateGenerator::Kind::age:
        v.x.push_back(std::uniform_int_distribution<int>(static_cast<int>(g.a), static_cast<int>(g.b))(rng));
        break;
    }
  }
  return v;
}

PolicyOutput simulate_policy(const SimSpec& spec, std::size_t index, std::uint64_t stream, double b0_freq,
                             double b0_sev) {
  std::mt19937_64 rng(policy_seed(spec.seed, stream, index));
  PolicyOutput out;
  const std::string pid = std::to_string(index + 1);
  const int entry = (spec.years == 1 || std::bernoulli_distribution(spec.initial_share)(rng))
                        ? 0
                        : std::uniform_int_distribution<int>(1, spec.years - 1)(rng);
  double frailty = 1.0;
  if (spec.frailty_variance > 0.0)
    frailty = std::gamma_distribution<double>(1.0 / spec.frailty_variance, spec.frailty_variance)(rng);

  std::discrete_distribution<int> count(spec.vehicle_count_probs.begin(), spec.vehicle_count_probs.end());
  std::vector<Vehicle> active;
  int next_id = 1;
  const int initial = count(rng) + 1;
  for (int k = 0; k < initial; ++k) active.push_back(new_vehicle(spec, rng, next_id++, entry));

  std::vector<int> history;  // policy-level yearly claim totals
  for (int t = entry; t < spec.years; ++t) {
    if (t > entry) {
      std::vector<Vehicle> kept;
      for (auto& v : active) {
        if (!std::bernoulli_distribution(spec.lapse_rate)(rng)) {
          kept.push_back(std::move(v));
        } else if (std::bernoulli_distribution(spec.replacement_rate)(rng)) {
          kept.push_back(new_vehicle(spec, rng, next_id++, t));
        }
      }
      if (std::bernoulli_distribution(spec.addition_rate)(rng)) kept.push_back(new_vehicle(spec, rng, next_id++, t));
      active = std::move(kept);
      if (active.empty()) break;
    }
    const std::size_t begin = history.size() > static_cast<std::size_t>(kDefaultWindowYears)
                                  ? history.size() - kDefaultWindowYears
                                  : 0;
    const std::span<const int> window(history.data() + begin, history.size() - begin);
    const int level_freq = bms_level_recursive(window, spec.freq.structure);
    const int level_sev = bms_level_recursive(window, spec.sev.structure);

    int total = 0;
    for (const auto& v : active) {
      ContractRecord c;
      c.policy_id = pid;
      c.vehicle_id = std::to_string(v.id);
      c.contract_index = t - entry + 1;
      c.calendar_year = spec.first_year + t;
      c.effective_date = std::chrono::year_month_day{std::chrono::year{c.calendar_year},
                                                     std::chrono::month{static_cast<unsigned>(v.month)},
                                                     std::chrono::day{static_cast<unsigned>(v.day)}};
      c.exposure = std::bernoulli_distribution(spec.partial_exposure_share)(rng)
                       ? std::uniform_real_distribution<double>(0.25, 1.0)(rng)
                       : 1.0;
      c.covariates.push_back(1.0);
      double eta_n = b0_freq + spec.freq.gamma0 * level_freq;
      double eta_z = b0_sev + spec.sev.gamma0 * level_sev;
      for (std::size_t j = 0; j < spec.covariates.size(); ++j) {
        double x = v.x[j];
        if (spec.covariates[j].kind == CovariateGenerator::Kind::age) x += t - v.first_year;
        c.covariates.push_back(x);
        eta_n += spec.true_beta_freq[j] * x;
        eta_z += spec.true_beta_sev[j] * x;
      }
      const double mean_n = c.exposure * std::exp(eta_n) * frailty;
      const double mean_z = std::exp(eta_z);
      if (!(mean_n <= kRunawayMean))
        throw DivergenceError("simulated claim frequency runs away (expected " + format_double(mean_n) +
                              " claims at level " + std::to_string(level_freq) +
                              "); lower gamma0, psi or base_frequency, or bound the levels");
      c.claim_count = std::poisson_distribution<int>(mean_n)(rng);
      for (int k = 1; k <= c.claim_count; ++k) {
        double cost = std::gamma_distribution<double>(spec.gamma_shape, mean_z / spec.gamma_shape)(rng);
        if (!(cost > 0.0)) cost = std::numeric_limits<double>::min();
        out.claims.push_back(ClaimRecord{pid, c.vehicle_id, c.contract_index, k, cost});
      }
      total += c.claim_count;
      out.exposure += c.exposure;
      out.expected_claims += mean_n;
      out.expected_cost += mean_n * mean_z;
      out.truth.push_back(TruthRow{ContractKey{pid, c.vehicle_id, c.contract_index}, level_freq, level_sev, mean_n, mean_z});
      out.contracts.push_back(std::move(c));
    }
    history.push_back(total);
  }
  return out;
}

std::vector<PolicyOutput> simulate_policies(const SimSpec& spec, std::size_t n, std::uint64_t stream, double b0_freq,
                                            double b0_sev) {
  std::vector<PolicyOutput> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = simulate_policy(spec, i, stream, b0_freq, b0_sev); });
  return out;
}

}  // namespace

SimSpec SimSpec::defaults() {
  SimSpec s;
  s.covariates = {
      {"age", CovariateGenerator::Kind::age, 18, 80},
      {"male", CovariateGenerator::Kind::bernoulli, 0.5, 0},
      {"urban", CovariateGenerator::Kind::bernoulli, 0.4, 0},
      {"value", CovariateGenerator::Kind::normal, 0.0, 1.0},
  };
  s.true_beta_freq = {-0.01, 0.10, 0.20, 0.0};
  s.true_beta_sev = {0.0, 0.0, 0.05, 0.15};
  return s;
}

void SimSpec::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError(std::string(what) + " must be a probability");
  };
  if (n_policies < 1) throw ArgumentError("n_policies must be positive");
  if (years < 1) throw ArgumentError("years must be positive");
  if (vehicle_count_probs.size() != 3) throw ArgumentError("vehicle_count_probs needs 3 entries (1, 2, 3 vehicles)");
  double total = 0.0;
  for (double p : vehicle_count_probs) {
    prob(p, "vehicle count probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("vehicle_count_probs must sum to 1");
  if (true_beta_freq.size() != covariates.size() || true_beta_sev.size() != covariates.size())
    throw ArgumentError("true_beta_freq and true_beta_sev need one entry per covariate");
  for (const auto& g : covariates) {
    if (g.name.empty()) throw ArgumentError("covariate generators need a name");
    if (g.kind == CovariateGenerator::Kind::bernoulli) prob(g.a, "bernoulli covariate probability");
    if (g.kind == CovariateGenerator::Kind::normal && !(g.b > 0.0)) throw ArgumentError("normal covariate sd must be positive");
    if (g.kind == CovariateGenerator::Kind::age && !(g.b >= g.a)) throw ArgumentError("age range is empty");
  }
  for (std::size_t i = 0; i < covariates.size(); ++i)
    for (std::size_t j = i + 1; j < covariates.size(); ++j)
      if (covariates[i].name == covariates[j].name) throw ArgumentError("duplicate covariate name " + covariates[i].name);
  freq.structure.validate();
  sev.structure.validate();
  if (!std::isfinite(freq.gamma0) || !std::isfinite(sev.gamma0)) throw ArgumentError("gamma0 must be finite");
  if (!(gamma_shape > 0.0)) throw ArgumentError("gamma_shape must be positive");
  if (!(base_frequency > 0.0)) throw ArgumentError("base_frequency must be positive");
  if (!(base_severity > 0.0)) throw ArgumentError("base_severity must be positive");
  prob(lapse_rate, "lapse_rate");
  prob(replacement_rate, "replacement_rate");
  prob(addition_rate, "addition_rate");
  prob(initial_share, "initial_share");
  prob(partial_exposure_share, "partial_exposure_share");
  if (!(frailty_variance >= 0.0)) throw ArgumentError("frailty_variance must be non-negative");
}

Simulation simulate_portfolio(const SimSpec& spec) {
  spec.validate();
  // Intercepts: fixed point on a pilot portfolio so that the expected
  // frequency and severity match the targets.
  double b0_freq = std::log(spec.base_frequency) - spec.freq.gamma0 * 100.0;
  double b0_sev = std::log(spec.base_severity) - spec.sev.gamma0 * 100.0;
  const auto pilot_n = static_cast<std::size_t>(std::min(spec.n_policies, kPilotPolicies));
  for (int round = 0; round < kCalibrationRounds; ++round) {
    const auto pilot = simulate_policies(spec, pilot_n, kPilotStream, b0_freq, b0_sev);
    double e = 0.0, n = 0.0, cost = 0.0;
    for (const auto& p : pilot) {
      e += p.exposure;
      n += p.expected_claims;
      cost += p.expected_cost;
    }
    b0_freq += std::log(spec.base_frequency / (n / e));
    b0_sev += std::log(spec.base_severity / (cost / n));
  }

  auto policies = simulate_policies(spec, static_cast<std::size_t>(spec.n_policies), 0, b0_freq, b0_sev);
  std::vector<ContractRecord> contracts;
  std::vector<ClaimRecord> claims;
  std::vector<TruthRow> truth;
  for (auto& p : policies) {
    std::move(p.contracts.begin(), p.contracts.end(), std::back_inserter(contracts));
    std::move(p.claims.begin(), p.claims.end(), std::back_inserter(claims));
    std::move(p.truth.begin(), p.truth.end(), std::back_inserter(truth));
  }
  std::vector<std::string> names;
  for (const auto& g : spec.covariates) names.push_back(g.name);

  Simulation sim;
  sim.portfolio = Portfolio(std::move(contracts), std::move(claims), std::move(names));
  sim.truth.resize(truth.size());
  for (auto& row : truth) {
    const auto pos = sim.portfolio.find(row.key);
    sim.truth[*pos] = std::move(row);
  }
  sim.intercept_freq = b0_freq;
  sim.intercept_sev = b0_sev;
  return sim;
}

void write_truth(std::ostream& out, const std::vector<TruthRow>& truth) {
  out << "policy_id,vehicle_id,contract_index,true_level_freq,true_level_sev,true_mean_freq,true_mean_sev\n";
  for (const auto& t : truth)
    out << t.key.policy_id << ',' << t.key.vehicle_id << ',' << t.key.contract_index << ',' << t.level_freq << ','
        << t.level_sev << ',' << format_double(t.mean_freq) << ',' << format_double(t.mean_sev) << '\n';
}

void save_simulation(const Simulation& sim, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_portfolio(sim.portfolio, dir / "contracts.csv", dir / "claims.csv");
  std::ofstream truth(dir / "truth.csv", std::ios::binary);
  if (!truth) throw Error("cannot write " + (dir / "truth.csv").string());
  write_truth(truth, sim.truth);
}

}  // namespace exprate
