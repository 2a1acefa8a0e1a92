#pragma once

#include <Eigen/Dense>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "exprate/glm.hpp"

namespace exprate {

/// Annual (N, Y) couple of one contract. y == 0 exactly when n == 0.
struct TweedieObservation {
  double y = 0.0;
  int n = 0;
  double weight = 1.0;
  double exposure = 1.0;
};

/// gamma = (2 - p) / (p - 1), the per-claim gamma shape of the compound Poisson form.
double tweedie_gamma_index(double p);
/// Inverse of tweedie_gamma_index: p = (shape + 2) / (shape + 1).
double p_from_shape(double shape);
/// Default weight rule w = d^(p-1).
double default_weight(double exposure, double p);

double joint_log_density(double y, int n, double mu, double phi, double p, double w);

/// Prior weight nu of the dispersion response.
double dispersion_prior(double mu, double phi, double p, double w);
/// Dispersion response D with E[D] = phi.
double deviance_response(double y, int n, double mu, double phi, double p, double w);

/// Draws (N, Y): N ~ Poisson(lambda), Y | N=n ~ Gamma(n * gamma, scale theta).
TweedieObservation sample_tweedie(std::mt19937_64& rng, double mu, double phi, double p, double w);

struct DglmFit {
  Eigen::VectorXd beta_mean;
  Eigen::VectorXd beta_disp;
  std::vector<std::string> labels_mean;
  std::vector<std::string> labels_disp;
  double p = 1.5;
  double loglik = 0.0;
  /// Mean and dispersion coefficients plus one for p.
  int n_params = 0;
  std::size_t n_obs = 0;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;
};

struct DglmOptions {
  /// Relative change of the joint log-likelihood between outer iterations.
  double tol = 1e-10;
  int max_iter = 200;
};

/// Alternates a weighted Tweedie mean fit (offset log d) and a log-link fit of
/// the dispersion until the joint (N, Y) log-likelihood settles.
DglmFit fit_dglm(const DesignMatrix& design_mean, const DesignMatrix& design_disp,
                 std::span<const TweedieObservation> obs, double p, const DglmOptions& options = {});

/// Fitted mu = d * exp(x'beta_mean) and phi = exp(z'beta_disp) per row.
Eigen::VectorXd dglm_mu(const DglmFit& fit, const DesignMatrix& design_mean,
                        std::span<const TweedieObservation> obs);
Eigen::VectorXd dglm_phi(const DglmFit& fit, const DesignMatrix& design_disp);

/// Per-row joint log densities at arbitrary coefficients.
Eigen::VectorXd dglm_log_densities(const DesignMatrix& design_mean, const DesignMatrix& design_disp,
                                   std::span<const TweedieObservation> obs,
                                   const Eigen::VectorXd& beta_mean,
                                   const Eigen::VectorXd& beta_disp, double p);
double dglm_loglik(const DesignMatrix& design_mean, const DesignMatrix& design_disp,
                   std::span<const TweedieObservation> obs, const Eigen::VectorXd& beta_mean,
                   const Eigen::VectorXd& beta_disp, double p);
/// Gradient of dglm_loglik in beta_mean.
Eigen::VectorXd dglm_mean_score(const DesignMatrix& design_mean, const DesignMatrix& design_disp,
                                std::span<const TweedieObservation> obs,
                                const Eigen::VectorXd& beta_mean, const Eigen::VectorXd& beta_disp,
                                double p);

std::vector<double> default_p_grid();

struct PSelection {
  double p = 0.0;
  DglmFit fit;
  /// (p, loglik) for every grid point that fitted, ascending in p.
  std::vector<std::pair<double, double>> profile;
  std::vector<std::string> failures;
};

/// Profile maximum over a grid of p; ties go to the smaller p.
PSelection select_p(const DesignMatrix& design_mean, const DesignMatrix& design_disp,
                    std::span<const TweedieObservation> obs, std::span<const double> p_grid,
                    const DglmOptions& options = {});

/// CPG fit expressed in the Tweedie parametrization.
struct CpgMapping {
  double p = 0.0;
  Eigen::VectorXd eta_mean;  ///< frequency + severity predictors, without the exposure offset
  Eigen::VectorXd eta_disp;  ///< includes the -log(2-p) constant
  Eigen::VectorXd mu;        ///< d * exp(eta_mean)
  Eigen::VectorXd phi;       ///< exp(eta_disp)
  Eigen::VectorXd weight;    ///< d^(p-1)
};

/// From per-contract frequency predictor eta_n (no offset) and severity
/// predictor eta_z. Level terms are whatever the predictors already contain.
CpgMapping cpg_to_tweedie(const Eigen::VectorXd& eta_n, const Eigen::VectorXd& eta_z,
                          std::span<const double> exposure, double p);

/// Same, computing the predictors from the two fits and row-aligned designs
/// (one row per contract for both, level columns included).
CpgMapping cpg_to_tweedie(const GlmFit& poisson_fit, const DesignMatrix& freq_design,
                          const GlmFit& gamma_fit, const DesignMatrix& sev_design,
                          std::span<const double> exposure, double p);

}  // namespace exprate
