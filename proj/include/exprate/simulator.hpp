#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "exprate/portfolio.hpp"

namespace exprate {

struct CovariateGenerator {
  enum class Kind { bernoulli, normal, age };
  std::string name;
  Kind kind = Kind::normal;
  /// bernoulli: a = probability. normal: mean a, sd b. age: uniform integer
  /// in [a, b] at the vehicle's first year, +1 every later year.
  double a = 0.0;
  double b = 1.0;
};

/// Level recursion and per-level relativity of one target.
struct TargetDynamics {
  BmsStructure structure;
  double gamma0 = 0.0;
};

struct SimSpec {
  int n_policies = 1000;
  int years = 13;
  int first_year = 2008;
  /// Probabilities of 1, 2 and 3 vehicles at entry (mean 1.7).
  std::vector<double> vehicle_count_probs{0.45, 0.40, 0.15};
  std::vector<CovariateGenerator> covariates;
  /// Effects of the covariates, same order; intercepts are calibrated.
  std::vector<double> true_beta_freq;
  std::vector<double> true_beta_sev;
  TargetDynamics freq{BmsStructure{3, 95, 106, 100}, 0.094};
  TargetDynamics sev{BmsStructure{2, 94, 100, 100}, 0.026};
  double gamma_shape = 1.5;
  double base_frequency = 0.02;
  double base_severity = 7500.0;
  /// Per vehicle-year probability that the vehicle leaves the policy.
  double lapse_rate = 0.25;
  /// Probability that a lapsed vehicle is replaced by a new one.
  double replacement_rate = 0.85;
  /// Per policy-year probability of adding a vehicle.
  double addition_rate = 0.05;
  /// Share of policies present from the first year; the rest enter uniformly later.
  double initial_share = 0.6;
  /// Share of contracts with a partial-year exposure drawn uniformly in [0.25, 1).
  double partial_exposure_share = 0.0;
  /// Variance of a mean-one gamma policy effect on the frequency (0: none).
  double frailty_variance = 0.0;
  std::uint64_t seed = 1;

  /// Default covariates (age, male, urban, value) with modest effects.
  static SimSpec defaults();
  void validate() const;
};

struct TruthRow {
  ContractKey key;
  int level_freq = 100;
  int level_sev = 100;
  double mean_freq = 0.0;  ///< expected claim count of the contract
  double mean_sev = 0.0;   ///< expected cost of one claim
};

struct Simulation {
  Portfolio portfolio;
  /// Aligned with portfolio.contracts().
  std::vector<TruthRow> truth;
  double intercept_freq = 0.0;
  double intercept_sev = 0.0;
};

/// Deterministic given spec.seed, whatever the number of threads.
Simulation simulate_portfolio(const SimSpec& spec);

void write_truth(std::ostream& out, const std::vector<TruthRow>& truth);
/// contracts.csv, claims.csv and truth.csv under `dir`.
void save_simulation(const Simulation& sim, const std::filesystem::path& dir);

}  // namespace exprate
