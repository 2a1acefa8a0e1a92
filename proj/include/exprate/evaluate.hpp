#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "exprate/bms_search.hpp"
#include "exprate/portfolio.hpp"

namespace exprate {

/// Negative test-set log-likelihood at the fitted parameters. Levels and
/// scope variables are rebuilt from the test portfolio's own histories; the
/// model's min_calendar_year applies to the test rows as well.
double logarithmic_score(const ExperienceModel& model, const Portfolio& test);

struct LevelRelativity {
  int level = 100;
  double relativity = 1.0;
};

/// Premium impact of the experience component, relative to level 100.
/// Discounts are positive fractions (0.09 means 9% cheaper).
struct RelativityTable {
  std::vector<LevelRelativity> levels;
  double surcharge_per_claim = 0.0;
  double claims_free_discount = 0.0;
  double min_relativity = 1.0;
  double max_relativity = 1.0;
};

/// Levels run from l_min to l_max. A missing bound is replaced by the
/// farthest level one window can reach below (l_start - window) or the level
/// of one claim per window year above (l_start + psi * window).
RelativityTable relativity_table(double gamma0, const BmsStructure& structure,
                                 int window_years = kDefaultWindowYears);

double combined_cpg_relativity(double freq_relativity, double sev_relativity);

/// Frequency x severity table on the union of both level ranges. Each
/// component's level is clamped to its own bounds; surcharge and discount
/// combine the one-claim and one-claim-free-year moves from level 100.
RelativityTable combined_relativity_table(double gamma0_freq, const BmsStructure& freq,
                                          double gamma0_sev, const BmsStructure& sev);

struct GroupRatio {
  InsuredType type = InsuredType::A;
  std::size_t contracts = 0;
  double observed_frequency = 0.0;
  double observed_severity = 0.0;
  double observed_loss_cost = 0.0;
  double predicted_frequency = 0.0;
  double predicted_severity = 0.0;
  double predicted_loss_cost = 0.0;
};

/// Expected claim count and expected loss per contract, aligned with the portfolio.
struct ContractPredictions {
  std::vector<double> frequency;
  std::vector<double> loss_cost;
};

/// Ratios of each insured type's mean to the portfolio mean. Severity is per
/// claim (observed) and expected loss / expected count (predicted). Contracts
/// before `min_calendar_year` are excluded. Types with no contracts hold NaN.
std::array<GroupRatio, 6> group_ratio_report(const Portfolio& portfolio, const ContractPredictions& predictions,
                                             std::optional<int> min_calendar_year = std::nullopt,
                                             int window_years = kDefaultWindowYears);

/// Sum observed / sum predicted.
double off_balance_factor(std::span<const double> predicted, std::span<const double> observed);
std::vector<double> apply_off_balance(std::span<const double> predicted, double factor);

struct ModelReport {
  std::string model;   ///< standard, kappa_n or bms
  std::string family;  ///< poisson, gamma, cpg or tweedie
  int n_params = 0;
  std::size_t n_obs = 0;
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  std::optional<double> sl_score;
  std::optional<RelativityTable> relativities;
  std::optional<std::array<GroupRatio, 6>> group_ratios;
  std::optional<double> off_balance;
  std::vector<std::string> notes;
};

double aic(double loglik, int n_params);
double bic(double loglik, int n_params, std::size_t n_obs);
ModelReport make_report(std::string model, std::string family, double loglik, int n_params, std::size_t n_obs);

nlohmann::json to_json(const ModelReport& report);
nlohmann::json to_json(const RelativityTable& table);

/// level,relativity
std::string relativity_csv(const RelativityTable& table);
/// type,contracts,observed_frequency,...,predicted_loss_cost
std::string group_ratio_csv(const std::array<GroupRatio, 6>& groups);

}  // namespace exprate
