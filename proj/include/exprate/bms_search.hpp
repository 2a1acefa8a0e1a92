#pragma once

#include <optional>
#include <string>
#include <vector>

#include "exprate/elasticnet.hpp"
#include "exprate/glm.hpp"
#include "exprate/portfolio.hpp"
#include "exprate/tweedie.hpp"

namespace exprate {

/// Frequency rows are contracts, severity rows are claims, loss-cost rows are
/// contracts with the annual amount as response.
enum class Target { frequency, severity, loss_cost };
enum class ExperienceKind { standard, kappa_n, bms };

std::string to_string(Target target);
std::string to_string(ExperienceKind kind);
Target parse_target(const std::string& text);
ExperienceKind parse_experience(const std::string& text);

struct ModelOptions {
  int window_years = kDefaultWindowYears;
  /// Contracts before this calendar year only supply history.
  std::optional<int> min_calendar_year;
  /// Loss cost only. When absent the power is chosen on default_p_grid()
  /// once, before any structural search.
  std::optional<double> tweedie_p;
  GlmOptions glm;
  DglmOptions dglm;
};

struct ProfileEntry {
  BmsStructure structure;
  double loglik = 0.0;
  int n_params = 0;
  /// Empty when the candidate fitted; the diagnostic otherwise.
  std::string error;
};

/// Fitted frequency, severity or loss-cost model with its experience component.
struct ExperienceModel {
  Target target = Target::frequency;
  ExperienceKind kind = ExperienceKind::standard;
  /// Level recursion (bms only).
  BmsStructure structure;
  int window_years = kDefaultWindowYears;
  std::optional<int> min_calendar_year;
  /// Non-intercept portfolio covariates used, in design order.
  std::vector<std::string> covariates;

  std::optional<GlmFit> glm;    ///< frequency and severity
  std::optional<DglmFit> dglm;  ///< loss cost

  double loglik = 0.0;
  int n_params = 0;
  std::size_t n_obs = 0;
  std::vector<ProfileEntry> profile_table;
  std::vector<std::string> warnings;

  /// Coefficients of the (mean) model and their labels.
  const Eigen::VectorXd& beta() const;
  const std::vector<std::string>& labels() const;
  /// Relativity per level (bms) or per avoided claim-free year (kappa_n):
  /// minus the kappa coefficient for kappa_n, the level coefficient for bms.
  double gamma0() const;
  /// Coefficient of n (kappa_n only).
  double gamma1() const;
  /// Jump parameter: gamma1 / gamma0 for kappa_n, the structure's psi for bms.
  double psi() const;
};

/// Model matrix for the rows of `target`, with columns intercept, the listed
/// covariates and the experience columns ("kappa","n" or "level").
struct ModelRows {
  DesignMatrix design;
  /// Contract index (into portfolio.contracts()) of each row.
  std::vector<std::size_t> contract_of_row;
  std::vector<double> response;   ///< counts, costs or annual amounts
  std::vector<int> counts;        ///< claim counts (loss cost)
  std::vector<double> exposure;   ///< contract exposure
};

ModelRows build_rows(const Portfolio& portfolio, std::span<const ScopeSummary> scope, Target target,
                     ExperienceKind kind, const BmsStructure& structure,
                     std::span<const std::string> covariates, std::optional<int> min_calendar_year);

/// The listed covariates, checked against the portfolio and put in its column
/// order. An empty list means an intercept-only covariate part.
std::vector<std::string> resolve_covariates(const Portfolio& portfolio,
                                            std::span<const std::string> selection);

ExperienceModel fit_standard(const Portfolio& portfolio, Target target,
                             std::span<const std::string> covariates, const ModelOptions& options = {});

/// Kappa-N model: kappa and n enter as two columns.
ExperienceModel fit_kappa_n(const Portfolio& portfolio, Target target,
                            std::span<const std::string> covariates, const ModelOptions& options = {});

/// Fit at a fixed structure; n_params includes the three structural parameters.
ExperienceModel fit_bms_structure(const Portfolio& portfolio, Target target,
                                  std::span<const std::string> covariates, const BmsStructure& structure,
                                  const ModelOptions& options = {});

struct BmsGrid {
  std::vector<int> psi;
  std::vector<int> l_min;
  std::vector<int> l_max;

  /// Psi 1..6, l_min 90..100, l_max 100..110.
  static BmsGrid defaults();
  std::vector<BmsStructure> candidates() const;
};

/// Profile-likelihood search over the grid. Ties go to the smaller psi, then
/// the wider [l_min, l_max].
ExperienceModel fit_bms(const Portfolio& portfolio, Target target, std::span<const std::string> covariates,
                        const BmsGrid& grid, const ModelOptions& options = {});

/// Per-row log densities of `model` on `portfolio` (any portfolio with the
/// same covariate schema), levels rebuilt from that portfolio's histories.
Eigen::VectorXd model_log_densities(const ExperienceModel& model, const Portfolio& portfolio);
double model_loglik(const ExperienceModel& model, const Portfolio& portfolio);

/// Expected value per contract: claim frequency for frequency models
/// (exposure included), claim severity for severity models, annual amount for
/// loss-cost models. Aligned with portfolio.contracts(); contracts before the
/// model's first calendar year are included.
Eigen::VectorXd predict_contracts(const ExperienceModel& model, const Portfolio& portfolio);

/// Elastic-net covariate selection at the Kappa-N stage: cross-validated by
/// policy, returning the covariates with nonzero coefficients at the chosen
/// point (one-standard-error point when `one_se`).
struct SelectionResult {
  std::vector<std::string> covariates;
  CvResult cv;
};
SelectionResult select_covariates(const Portfolio& portfolio, Target target, std::span<const double> alpha_grid,
                                  int n_lambda, int folds, std::uint64_t seed, bool one_se,
                                  const ModelOptions& options = {});

/// psi,l_min,l_max,loglik,n_params
std::string profile_table_csv(const std::vector<ProfileEntry>& table);

/// Training log-likelihood of a frequency and a severity model taken jointly
/// in the (N, Y) representation through the Tweedie reparametrization.
struct CpgTweedieView {
  CpgMapping mapping;
  double loglik = 0.0;
  double shape = 0.0;
};
CpgTweedieView cpg_as_tweedie(const ExperienceModel& frequency, const ExperienceModel& severity,
                              const Portfolio& portfolio);

/// Tweedie model on the covariates and the two level columns of a fitted CPG
/// pair ("level_freq", "level_sev"), estimated as a Tweedie double GLM. When
/// both structures coincide a single "level" column is used.
struct TweedieCpModel {
  BmsStructure freq_structure;
  BmsStructure sev_structure;
  int window_years = kDefaultWindowYears;
  std::optional<int> min_calendar_year;
  std::vector<std::string> covariates;
  DglmFit dglm;
  double loglik = 0.0;
  /// Includes the six structural parameters.
  int n_params = 0;
  std::size_t n_obs = 0;
};
TweedieCpModel fit_tweedie_cp(const ExperienceModel& frequency, const ExperienceModel& severity,
                              const Portfolio& portfolio, const ModelOptions& options = {});
double model_loglik(const TweedieCpModel& model, const Portfolio& portfolio);

}  // namespace exprate
