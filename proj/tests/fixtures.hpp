#pragma once

#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "exprate/portfolio.hpp"

namespace exprate::testing {

// Nine-contract sample of three policies (frequency and severity layout).
inline const char* kSampleContracts =
    "policy_id,vehicle_id,contract_index,effective_date,exposure,claim_count,calendar_year,age,male\n"
    "1,1,1,2018-01-15,1,0,2018,42,1\n"
    "1,1,2,2019-01-15,1,2,2019,43,1\n"
    "1,1,3,2020-01-15,1,1,2020,44,1\n"
    "1,1,4,2021-01-15,1,0,2021,45,1\n"
    "1,2,2,2019-01-15,1,2,2019,40,0\n"
    "1,2,3,2020-01-15,1,0,2020,41,0\n"
    "2,1,1,2018-02-05,1,0,2018,24,1\n"
    "3,1,1,2018-02-08,1,0,2018,34,0\n"
    "3,2,1,2018-02-08,1,1,2018,30,1\n";

inline const char* kSampleClaims =
    "policy_id,vehicle_id,contract_index,claim_ordinal,cost\n"
    "1,1,2,1,6592\n"
    "1,1,2,2,11520\n"
    "1,1,3,1,24151\n"
    "1,2,2,1,1490\n"
    "1,2,2,2,24505\n"
    "3,2,1,1,8150\n";

inline Portfolio sample_portfolio() {
  std::istringstream contracts(kSampleContracts), claims(kSampleClaims);
  return read_portfolio(contracts, claims);
}

/// Published scope-variable cells for the sample. kAbsent marks '.', kSkip a
/// cell that contradicts the sample data itself and is not asserted.
constexpr int kAbsent = -1;
constexpr int kSkip = -2;

struct ScopeRow {
  const char* policy;
  const char* vehicle;
  int contract;
  int n;
  int vehicle_lag[3];
  int policy_lag[3];
};

inline const std::vector<ScopeRow>& published_scope_rows() {
  static const std::vector<ScopeRow> rows = {
      {"1", "1", 1, 0, {kAbsent, kAbsent, kAbsent}, {kAbsent, kAbsent, kAbsent}},
      {"1", "1", 2, 2, {0, kAbsent, kSkip}, {0, kAbsent, kAbsent}},
      {"1", "1", 3, 1, {2, 0, kSkip}, {4, 0, kAbsent}},
      {"1", "1", 4, 0, {1, 2, 0}, {1, 4, 0}},
      {"1", "2", 2, 2, {kAbsent, kAbsent, kSkip}, {0, kAbsent, kAbsent}},
      {"1", "2", 3, 0, {2, kAbsent, kAbsent}, {4, 0, kAbsent}},
      {"2", "1", 1, 0, {kAbsent, kAbsent, kAbsent}, {kAbsent, kAbsent, kAbsent}},
      {"3", "1", 1, 0, {kAbsent, kAbsent, kAbsent}, {kAbsent, kAbsent, kAbsent}},
      {"3", "2", 1, 1, {kSkip, kAbsent, kAbsent}, {kSkip, kSkip, kAbsent}},
  };
  return rows;
}

/// Four twelve-year claim histories used for the level-trajectory fixtures.
inline const std::vector<std::vector<int>>& fictitious_histories() {
  static const std::vector<std::vector<int>> h = {
      {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0},
      {2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1},
      {4, 1, 3, 0, 1, 0, 0, 0, 0, 0, 2, 0},
      {0, 2, 0, 0, 0, 0, 0, 1, 0, 3, 1, 4},
  };
  return h;
}

/// Random multi-vehicle panel with intermittent vehicles; for property tests.
inline Portfolio random_portfolio(std::mt19937_64& rng, int n_policies, int years = 8) {
  std::vector<ContractRecord> contracts;
  std::vector<ClaimRecord> claims;
  std::uniform_int_distribution<int> vehicles(1, 3);
  std::bernoulli_distribution active(0.75);
  std::poisson_distribution<int> counts(0.4);
  std::uniform_real_distribution<double> cov(-1.0, 1.0);
  std::gamma_distribution<double> cost(2.0, 500.0);
  for (int p = 1; p <= n_policies; ++p) {
    const int nv = vehicles(rng);
    for (int v = 1; v <= nv; ++v) {
      const double x = cov(rng);
      for (int y = 0; y < years; ++y) {
        if (!active(rng)) continue;
        ContractRecord c;
        c.policy_id = std::to_string(p);
        c.vehicle_id = std::to_string(v);
        c.contract_index = y + 1;
        c.calendar_year = 2010 + y;
        c.effective_date = std::chrono::year_month_day{std::chrono::year{2010 + y},
                                                       std::chrono::month{3}, std::chrono::day{1}};
        c.exposure = 1.0;
        c.covariates = {1.0, x};
        c.claim_count = counts(rng);
        for (int k = 1; k <= c.claim_count; ++k)
          claims.push_back({c.policy_id, c.vehicle_id, c.contract_index, k, cost(rng)});
        contracts.push_back(std::move(c));
      }
    }
  }
  return Portfolio(std::move(contracts), std::move(claims), {"x"});
}

}  // namespace exprate::testing
