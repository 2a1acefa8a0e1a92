#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "exprate/glm.hpp"

namespace exprate {

enum class PenalizedFamily { poisson, gamma, tweedie_mean };
std::string to_string(PenalizedFamily family);

struct PenaltySpec {
  double alpha = 1.0;   ///< 1: absolute-value penalty only, 0: quadratic only
  double lambda = 0.0;
  /// One flag per design column; the intercept flag is always false.
  std::vector<bool> penalize_mask;

  void validate(std::size_t n_columns) const;
};

/// Mask penalizing every column except the intercept and the labels in `exempt`.
std::vector<bool> default_penalty_mask(const DesignMatrix& design,
                                       std::span<const std::string> exempt = {});

/// Response data of a penalized fit. For gamma, `exposure` may be empty.
/// `tweedie_p` is only read for the tweedie_mean family, whose prior weights
/// are d^(p-1).
struct PenalizedData {
  const DesignMatrix* design = nullptr;
  std::span<const double> response;
  std::span<const double> exposure;
  PenalizedFamily family = PenalizedFamily::poisson;
  double tweedie_p = 1.5;
};

struct PenalizedOptions {
  double tol = 1e-12;
  int max_outer = 200;
  int max_sweeps = 100000;
};

struct PenalizedFit {
  Eigen::VectorXd beta;  ///< original (unstandardized) scale
  std::vector<std::string> labels;
  PenaltySpec spec;
  double deviance = 0.0;
  /// 0.5 * deviance + n * lambda * penalty on the standardized scale.
  double objective = 0.0;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;

  int nonzero_penalized() const;
};

double soft_threshold(double z, double gamma);

PenalizedFit fit_penalized(const PenalizedData& data, const PenaltySpec& spec,
                           const PenalizedOptions& options = {},
                           const PenalizedFit* warm_start = nullptr);

/// Smallest lambda at which every penalized coefficient is zero (alpha below
/// 0.001 is treated as 0.001).
double lambda_max(const PenalizedData& data, const std::vector<bool>& mask, double alpha);

/// Largest violation of the stationarity conditions, per observation, on the
/// standardized scale.
double kkt_violation(const PenalizedData& data, const PenalizedFit& fit);

/// Mean deviance per row of `fit` on the given data.
double mean_deviance(const PenalizedData& data, const Eigen::VectorXd& beta);

struct CvPoint {
  double alpha = 0.0;
  double lambda = 0.0;
  double mean_deviance = 0.0;
  double se_deviance = 0.0;
  int nonzero_count = 0;
};

struct CvResult {
  PenaltySpec best;       ///< minimum mean out-of-fold deviance
  PenaltySpec one_se;     ///< sparsest point within one standard error of the minimum
  std::vector<CvPoint> table;
  std::vector<int> fold_of_row;
};

/// K-fold cross validation over alpha_grid x (geometric lambda path of
/// n_lambda points). Rows sharing a group id never straddle folds.
CvResult cv_select(const PenalizedData& data, std::span<const std::string> groups,
                   std::span<const double> alpha_grid, int n_lambda, int folds, std::uint64_t seed,
                   const std::vector<bool>& mask);

/// alpha,lambda,mean_deviance,se_deviance,nonzero_count
std::string cv_table_csv(const std::vector<CvPoint>& table);

}  // namespace exprate
