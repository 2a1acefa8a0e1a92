#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace exprate {

/// One annual (or shorter) coverage term of one vehicle.
struct ContractRecord {
  std::string policy_id;
  std::string vehicle_id;
  int contract_index = 1;
  std::chrono::year_month_day effective_date{};
  double exposure = 1.0;
  /// covariates[0] is the intercept and always equals 1.
  std::vector<double> covariates;
  int claim_count = 0;
  int calendar_year = 0;
};

struct ClaimRecord {
  std::string policy_id;
  std::string vehicle_id;
  int contract_index = 1;
  int claim_ordinal = 1;
  double cost = 0.0;
};

struct ContractKey {
  std::string policy_id;
  std::string vehicle_id;
  int contract_index = 1;

  std::string to_string() const;
};

/// Orders opaque identifiers numerically when both are unsigned integers,
/// lexicographically otherwise.
bool id_less(const std::string& a, const std::string& b);
bool key_less(const ContractKey& a, const ContractKey& b);

/// Validated, sorted collection of contracts and their claims. Immutable once
/// built; rows are sorted by (policy_id, vehicle_id, contract_index).
class Portfolio {
 public:
  Portfolio() = default;
  /// `covariate_names` excludes the intercept; every contract's covariate
  /// vector must hold 1 + covariate_names.size() entries.
  Portfolio(std::vector<ContractRecord> contracts, std::vector<ClaimRecord> claims,
            std::vector<std::string> covariate_names);

  const std::vector<ContractRecord>& contracts() const noexcept { return contracts_; }
  const std::vector<ClaimRecord>& claims() const noexcept { return claims_; }
  /// Names of the non-intercept covariates, in column order.
  const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }

  std::size_t size() const noexcept { return contracts_.size(); }
  bool empty() const noexcept { return contracts_.empty(); }

  /// Claims belonging to contract `i`, ordered by claim_ordinal.
  std::span<const ClaimRecord> claims_of(std::size_t i) const;
  /// Annual claims amount Y of contract `i`.
  double loss_of(std::size_t i) const;

  /// Half-open contract ranges [first, last) per policy, in sorted order.
  const std::vector<std::pair<std::size_t, std::size_t>>& policy_ranges() const noexcept {
    return policy_ranges_;
  }
  std::optional<std::size_t> find(const ContractKey& key) const;
  ContractKey key_of(std::size_t i) const;

  /// Sub-portfolio holding the listed policies (indices into policy_ranges()).
  Portfolio subset_policies(std::span<const std::size_t> policy_indices) const;
  /// Sub-portfolio of contracts with calendar_year >= first_year, plus their claims.
  Portfolio from_year(int first_year) const;

 private:
  void index();

  std::vector<ContractRecord> contracts_;
  std::vector<ClaimRecord> claims_;
  std::vector<std::string> covariate_names_;
  std::vector<std::size_t> claim_offsets_;
  std::vector<std::pair<std::size_t, std::size_t>> policy_ranges_;
};

/// Experience of the policy a contract belongs to, summarised over the
/// rolling window of policy-years preceding the contract.
struct ScopeSummary {
  /// Number of claim-free policy-years in the window.
  int kappa_dotdot = 0;
  /// Total policy-level claims in the window.
  int n_dotdot = 0;
  /// Policy-years with at least one active contract in the window.
  int years_observed = 0;
  /// Policy-level claim totals of the observed window years, oldest first.
  std::vector<int> window_claims;

  bool operator==(const ScopeSummary&) const = default;
};

/// Structural parameters of the level recursion. Absent bounds mean the
/// level is unclamped (Kappa-N claims score).
struct BmsStructure {
  int psi = 1;
  std::optional<int> l_min;
  std::optional<int> l_max;
  int l_start = 100;

  /// Throws ArgumentError when psi < 1 or the start level lies outside the bounds.
  void validate() const;
  bool clamped() const noexcept { return l_min.has_value() || l_max.has_value(); }
  std::string to_string() const;

  bool operator==(const BmsStructure&) const = default;
};

enum class InsuredType { A, B, C, D, E, F };
char to_char(InsuredType type);

constexpr int kDefaultWindowYears = 6;

/// Reads the contracts and claims CSV files; the result is sorted and validated.
Portfolio load_portfolio(const std::filesystem::path& contracts_path,
                         const std::filesystem::path& claims_path);
Portfolio read_portfolio(std::istream& contracts, std::istream& claims);

void write_contracts(std::ostream& out, const Portfolio& portfolio);
void write_claims(std::ostream& out, const Portfolio& portfolio);
void save_portfolio(const Portfolio& portfolio, const std::filesystem::path& contracts_path,
                    const std::filesystem::path& claims_path);

/// Scope summary for every contract, aligned with portfolio.contracts().
/// The window is measured in calendar years before the contract's year.
std::vector<ScopeSummary> compute_scope(const Portfolio& portfolio,
                                        int window_years = kDefaultWindowYears);

/// Claim count of the same vehicle `lag` calendar years earlier, if insured then.
std::optional<int> vehicle_lag_claims(const Portfolio& portfolio, std::size_t contract, int lag);
/// Policy-level claim total `lag` calendar years earlier, if any vehicle was insured then.
std::optional<int> policy_lag_claims(const Portfolio& portfolio, std::size_t contract, int lag);

/// Closed-form level l_start - kappa + psi * n, clamped to the bounds that are present.
int bms_level(const ScopeSummary& scope, const BmsStructure& structure);

/// Level reached by running the yearly transition from l_start over the
/// given policy-year claim totals (oldest first), clamping after every year.
int bms_level_recursive(std::span<const int> yearly_claims, const BmsStructure& structure);

/// Level at the start of each year 1..claims.size() for a single insured
/// observed every year, using the last `window_years` years of history.
std::vector<int> level_trajectory(std::span<const int> yearly_claims, const BmsStructure& structure,
                                  int window_years = kDefaultWindowYears);

struct SideDiagnostics {
  std::size_t policies = 0;
  std::size_t contracts = 0;
  double exposure = 0.0;
  long claims = 0;
  double claim_frequency = 0.0;
  double mean_severity = 0.0;
};

struct TrainTestSplit {
  Portfolio train;
  Portfolio test;
  SideDiagnostics train_stats;
  SideDiagnostics test_stats;
};

SideDiagnostics describe(const Portfolio& portfolio);

/// Policy-level random partition; deterministic given the seed.
TrainTestSplit split_train_test(const Portfolio& portfolio, double train_fraction,
                                std::uint64_t seed);

/// Groups A-C by past contract count, D-F by windowed claims for experienced insureds.
InsuredType classify_insured_type(const ScopeSummary& scope, int past_contract_count);

}  // namespace exprate
