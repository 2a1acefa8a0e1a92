#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exprate/errors.hpp"

namespace exprate {

enum class Family { poisson, gamma };
std::string to_string(Family family);

/// Model matrix with labelled columns. The first column is the intercept.
class DesignMatrix {
 public:
  DesignMatrix() = default;
  /// Throws ArgumentError unless column 0 is identically 1, no column is all
  /// zeros, every entry is finite and there is one label per column.
  DesignMatrix(Eigen::MatrixXd values, std::vector<std::string> labels);
  /// Skips the zero-column check (fits drop such columns as collinear); the
  /// intercept and label checks still apply.
  static DesignMatrix unchecked(Eigen::MatrixXd values, std::vector<std::string> labels);

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  Eigen::Index rows() const noexcept { return values_.rows(); }
  Eigen::Index cols() const noexcept { return values_.cols(); }

  /// Row subset, keeping labels.
  DesignMatrix select_rows(std::span<const Eigen::Index> rows) const;

 private:
  Eigen::MatrixXd values_;
  std::vector<std::string> labels_;
};

struct GlmOptions {
  /// Relative change of the log-likelihood that ends the iterations.
  double tol = 1e-10;
  int max_iter = 100;
};

struct GlmFit {
  Family family = Family::poisson;
  /// Coefficients aligned with `labels`; dropped (collinear) columns hold 0.
  Eigen::VectorXd beta;
  std::vector<std::string> labels;
  /// Gamma shape; absent for Poisson.
  std::optional<double> shape;
  double loglik = 0.0;
  int n_params = 0;
  std::size_t n_obs = 0;
  bool converged = false;
  int iterations = 0;
  std::vector<std::size_t> dropped_columns;
  std::vector<std::string> warnings;
};

/// Non-convergence after max_iter; carries the last iterate.
class GlmConvergenceError : public ConvergenceError {
 public:
  GlmConvergenceError(const std::string& what, GlmFit last)
      : ConvergenceError(what), last_(std::move(last)) {}
  const GlmFit& last_iterate() const noexcept { return last_; }

 private:
  GlmFit last_;
};

// --- log-link mean-model machinery shared with the penalized and Tweedie fits

/// Log-link exponential-dispersion mean model with variance function mu^power
/// (1 for Poisson, 2 for gamma, p in (1,2) for the Tweedie mean).
struct MeanModel {
  double power = 1.0;

  static MeanModel poisson() { return {1.0}; }
  static MeanModel gamma() { return {2.0}; }
  static MeanModel tweedie(double p) { return {p}; }

  /// Unit deviance d(y, mu) >= 0.
  double unit_deviance(double y, double mu) const;
  /// IRLS weight mu^2 / V(mu) for the log link.
  double irls_weight(double mu) const;
};

/// Inputs of a log-link IRLS fit. `offset` and `prior_weights` may be empty.
struct IrlsProblem {
  const Eigen::MatrixXd* x = nullptr;
  std::span<const double> y;
  std::span<const double> offset;
  std::span<const double> prior_weights;
  MeanModel model;
};

struct IrlsResult {
  Eigen::VectorXd beta;
  /// Sum of prior_weight * unit deviance at beta.
  double deviance = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<std::size_t> dropped_columns;
};

/// Fisher scoring with step-halving on the deviance. Collinear trailing
/// columns are dropped (coefficient fixed at 0). Throws DivergenceError when
/// the linear predictor overflows.
IrlsResult fit_irls(const IrlsProblem& problem, const GlmOptions& options = {},
                    const std::optional<Eigen::VectorXd>& start = std::nullopt);

/// Indices of columns that are linearly dependent on earlier columns.
std::vector<std::size_t> collinear_columns(const Eigen::MatrixXd& x, double rel_tol = 1e-9);

// --- public GLM operations

/// Poisson log-linear regression with log(exposure) offset.
GlmFit fit_poisson(const DesignMatrix& design, std::span<const double> counts,
                   std::span<const double> exposure, const GlmOptions& options = {});

/// Gamma regression with log link; one row per claim. The shape is the
/// profile maximum-likelihood estimate given the fitted means.
GlmFit fit_gamma(const DesignMatrix& design, std::span<const double> costs,
                 const GlmOptions& options = {});

/// Log-likelihood of the family at beta (exposure ignored for gamma).
double glm_loglik(Family family, const DesignMatrix& design, std::span<const double> response,
                  std::span<const double> exposure, const Eigen::VectorXd& beta, double shape = 1.0);

/// Analytic gradient of glm_loglik with respect to beta.
Eigen::VectorXd loglik_gradient(Family family, const DesignMatrix& design,
                                std::span<const double> response, std::span<const double> exposure,
                                const Eigen::VectorXd& beta, double shape = 1.0);

/// Element-wise exposure * exp(x'beta) for Poisson, exp(x'beta) for gamma.
/// Throws SchemaError if the design labels differ from the fit's.
Eigen::VectorXd predict_mean(const GlmFit& fit, const DesignMatrix& design,
                             std::span<const double> exposure);

double poisson_log_pmf(double n, double mean);
/// Gamma log-density with the given mean and shape.
double gamma_log_density(double z, double mean, double shape);

/// Maximum-likelihood gamma shape given observations and fitted means.
/// Returns nullopt if the data carry no dispersion (every z equals its mean).
std::optional<double> gamma_shape_mle(std::span<const double> z, std::span<const double> mean);

}  // namespace exprate
