#include "exprate/tweedie.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "exprate/util.hpp"

namespace exprate {

namespace {

constexpr double kMaxEta = 700.0;

void check_params(double mu, double phi, double p, double w) {
  if (!(p > 1.0 && p < 2.0)) throw ArgumentError("Tweedie power p must lie in (1,2)");
  if (!(mu > 0.0) || !std::isfinite(mu)) throw ArgumentError("Tweedie mean must be positive");
  if (!(phi > 0.0) || !std::isfinite(phi)) throw ArgumentError("Tweedie dispersion must be positive");
  if (!(w > 0.0) || !std::isfinite(w)) throw ArgumentError("Tweedie weight must be positive");
}

void check_support(double y, int n) {
  if (n < 0 || !(y >= 0.0) || !std::isfinite(y)) throw ArgumentError("(N,Y) must be non-negative");
  if ((y == 0.0) != (n == 0))
    throw ArgumentError("(N,Y) outside the compound Poisson support: y = 0 exactly when n = 0");
}

/// w (y mu^(1-p)/(1-p) - mu^(2-p)/(2-p)), always <= 0.
double theta_term(double y, double mu, double p, double w) {
  return w * (y * std::pow(mu, 1.0 - p) / (1.0 - p) - std::pow(mu, 2.0 - p) / (2.0 - p));
}

void check_design(const DesignMatrix& d, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(d.rows()) != n)
    throw ArgumentError(std::string(what) + " design rows do not match the observations");
}

std::vector<Eigen::Index> active_columns(const Eigen::MatrixXd& x, std::vector<std::size_t>& dropped) {
  dropped = collinear_columns(x);
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (std::find(dropped.begin(), dropped.end(), static_cast<std::size_t>(j)) == dropped.end())
      active.push_back(j);
  return active;
}

/// Maximises sum(-a exp(-eta) - b eta) over eta = z * beta (exact dispersion
/// profile given the means). Concave, so Newton with step-halving.
Eigen::VectorXd fit_dispersion(const Eigen::MatrixXd& z, const Eigen::VectorXd& a,
                               const Eigen::VectorXd& b, Eigen::VectorXd beta) {
  auto objective = [&](const Eigen::VectorXd& eta) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      if (std::abs(eta(i)) > kMaxEta) return -std::numeric_limits<double>::infinity();
      s += -a(i) * std::exp(-eta(i)) - b(i) * eta(i);
    }
    return s;
  };
  Eigen::VectorXd eta = z * beta;
  double obj = objective(eta);
  if (!std::isfinite(obj)) throw DivergenceError("dispersion predictor overflow");
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd h = (a.array() * (-eta.array()).exp()).matrix();
    const Eigen::VectorXd g = z.transpose() * (h - b);
    const Eigen::MatrixXd info = z.transpose() * (z.array().colwise() * h.array()).matrix();
    Eigen::VectorXd step = info.ldlt().solve(g);
    if (!step.allFinite()) throw DivergenceError("dispersion step is not finite");
    Eigen::VectorXd next = beta + step;
    double next_obj = objective(z * next);
    for (int k = 0; k < 50 && !(next_obj >= obj); ++k) {
      step *= 0.5;
      next = beta + step;
      next_obj = objective(z * next);
    }
    if (!(next_obj >= obj)) break;
    const double change = next_obj - obj;
    beta = next;
    eta = z * beta;
    obj = next_obj;
    if (change <= 1e-13 * (std::abs(obj) + 1.0)) break;
  }
  if (!std::isfinite(obj) || (eta.array().abs() > kMaxEta).any())
    throw DivergenceError("fitted dispersion overflows");
  return beta;
}

}  // namespace

double tweedie_gamma_index(double p) {
  if (!(p > 1.0 && p < 2.0)) throw ArgumentError("Tweedie power p must lie in (1,2)");
  return (2.0 - p) / (p - 1.0);
}

double p_from_shape(double shape) {
  if (!(shape > 0.0) || !std::isfinite(shape)) throw ArgumentError("gamma shape must be positive");
  return (shape + 2.0) / (shape + 1.0);
}

double default_weight(double exposure, double p) {
  if (!(exposure > 0.0)) throw ArgumentError("exposure must be positive");
  return std::pow(exposure, p - 1.0);
}

double joint_log_density(double y, int n, double mu, double phi, double p, double w) {
  check_params(mu, phi, p, w);
  check_support(y, n);
  if (n == 0) return -w * std::pow(mu, 2.0 - p) / ((2.0 - p) * phi);
  const double g = (2.0 - p) / (p - 1.0);
  const double nn = n;
  return theta_term(y, mu, p, w) / phi +
         nn * ((g + 1.0) * std::log(w / phi) + g * std::log(y) - g * std::log(p - 1.0) -
               std::log(2.0 - p)) -
         std::lgamma(nn + 1.0) - std::lgamma(nn * g) - std::log(y);
}

double dispersion_prior(double mu, double phi, double p, double w) {
  check_params(mu, phi, p, w);
  return 2.0 * w / phi * std::pow(mu, 2.0 - p) / ((p - 1.0) * (2.0 - p));
}

double deviance_response(double y, int n, double mu, double phi, double p, double w) {
  const double nu = dispersion_prior(mu, phi, p, w);
  check_support(y, n);
  return 2.0 / nu * (-theta_term(y, mu, p, w) - phi * n / (p - 1.0)) + phi;
}

TweedieObservation sample_tweedie(std::mt19937_64& rng, double mu, double phi, double p, double w) {
  check_params(mu, phi, p, w);
  const double lambda = w * std::pow(mu, 2.0 - p) / (phi * (2.0 - p));
  const double theta = phi * (p - 1.0) * std::pow(mu, p - 1.0) / w;
  TweedieObservation o;
  o.weight = w;
  o.n = std::poisson_distribution<int>(lambda)(rng);
  if (o.n > 0) {
    o.y = std::gamma_distribution<double>(o.n * tweedie_gamma_index(p), theta)(rng);
    // A gamma draw can underflow to 0 for tiny shapes; keep the support rule.
    if (o.y <= 0.0) o.y = std::numeric_limits<double>::min();
  }
  return o;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd dglm_log_densities(const DesignMatrix& dm, const DesignMatrix& dd,
                                   std::span<const TweedieObservation> obs,
                                   const Eigen::VectorXd& beta_mean,
                                   const Eigen::VectorXd& beta_disp, double p) {
  check_design(dm, obs.size(), "mean");
  check_design(dd, obs.size(), "dispersion");
  const Eigen::VectorXd em = dm.values() * beta_mean;
  const Eigen::VectorXd ed = dd.values() * beta_disp;
  Eigen::VectorXd out(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto& o = obs[i];
    out(r) = joint_log_density(o.y, o.n, o.exposure * std::exp(em(r)), std::exp(ed(r)), p, o.weight);
  }
  return out;
}

double dglm_loglik(const DesignMatrix& dm, const DesignMatrix& dd,
                   std::span<const TweedieObservation> obs, const Eigen::VectorXd& beta_mean,
                   const Eigen::VectorXd& beta_disp, double p) {
  return dglm_log_densities(dm, dd, obs, beta_mean, beta_disp, p).sum();
}

Eigen::VectorXd dglm_mean_score(const DesignMatrix& dm, const DesignMatrix& dd,
                                std::span<const TweedieObservation> obs,
                                const Eigen::VectorXd& beta_mean, const Eigen::VectorXd& beta_disp,
                                double p) {
  check_design(dm, obs.size(), "mean");
  check_design(dd, obs.size(), "dispersion");
  const Eigen::VectorXd em = dm.values() * beta_mean;
  const Eigen::VectorXd ed = dd.values() * beta_disp;
  Eigen::VectorXd r(em.size());
  for (Eigen::Index i = 0; i < em.size(); ++i) {
    const auto& o = obs[static_cast<std::size_t>(i)];
    const double mu = o.exposure * std::exp(em(i));
    r(i) = o.weight / std::exp(ed(i)) * (o.y - mu) * std::pow(mu, 1.0 - p);
  }
  return dm.values().transpose() * r;
}

Eigen::VectorXd dglm_mu(const DglmFit& fit, const DesignMatrix& dm,
                        std::span<const TweedieObservation> obs) {
  if (dm.labels() != fit.labels_mean) throw SchemaError("mean design labels differ from the fit");
  check_design(dm, obs.size(), "mean");
  Eigen::VectorXd mu = (dm.values() * fit.beta_mean).array().exp();
  for (std::size_t i = 0; i < obs.size(); ++i) mu(static_cast<Eigen::Index>(i)) *= obs[i].exposure;
  return mu;
}

Eigen::VectorXd dglm_phi(const DglmFit& fit, const DesignMatrix& dd) {
  if (dd.labels() != fit.labels_disp) throw SchemaError("dispersion design labels differ from the fit");
  return (dd.values() * fit.beta_disp).array().exp();
}

DglmFit fit_dglm(const DesignMatrix& dm, const DesignMatrix& dd,
                 std::span<const TweedieObservation> obs, double p, const DglmOptions& options) {
  if (!(p > 1.0 && p < 2.0)) throw ArgumentError("Tweedie power p must lie in (1,2)");
  check_design(dm, obs.size(), "mean");
  check_design(dd, obs.size(), "dispersion");
  if (obs.empty()) throw ArgumentError("DGLM needs observations");
  const std::size_t n = obs.size();
  std::vector<double> y(n), offset(n), w(n), pw(n);
  int total_claims = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = obs[i];
    check_support(o.y, o.n);
    if (!(o.weight > 0.0) || !(o.exposure > 0.0))
      throw ArgumentError("weights and exposures must be positive");
    y[i] = o.y;
    offset[i] = std::log(o.exposure);
    w[i] = o.weight;
    total_claims += o.n;
  }
  if (total_claims == 0) throw DivergenceError("no claims: Tweedie mean MLE at -infinity");

  DglmFit fit;
  fit.p = p;
  fit.labels_mean = dm.labels();
  fit.labels_disp = dd.labels();
  fit.n_obs = n;

  // Warm start: quasi-Poisson mean, dispersion at the mean weighted unit deviance.
  const MeanModel model = MeanModel::tweedie(p);
  IrlsResult start = fit_irls(IrlsProblem{&dm.values(), y, offset, w, MeanModel::poisson()}, {1e-8, 50});
  Eigen::VectorXd beta_mean = start.beta;
  Eigen::VectorXd mu = ((dm.values() * beta_mean).array() + Eigen::Map<Eigen::ArrayXd>(offset.data(), static_cast<Eigen::Index>(n))).exp();
  double phi0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) phi0 += w[i] * model.unit_deviance(y[i], mu(static_cast<Eigen::Index>(i)));
  phi0 /= static_cast<double>(n);
  if (!(phi0 > 0.0)) phi0 = 1.0;

  std::vector<std::size_t> dropped_disp;
  const auto active = active_columns(dd.values(), dropped_disp);
  const Eigen::MatrixXd zd = dd.values()(Eigen::all, active);
  Eigen::VectorXd gamma_disp = Eigen::VectorXd::Zero(zd.cols());
  gamma_disp(0) = std::log(phi0);
  Eigen::VectorXd b(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) b(static_cast<Eigen::Index>(i)) = obs[i].n / (p - 1.0);

  auto expand = [&](const Eigen::VectorXd& g) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(dd.cols());
    for (std::size_t a = 0; a < active.size(); ++a) full(active[a]) = g(static_cast<Eigen::Index>(a));
    return full;
  };

  double ll = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> dropped_mean;
  for (int it = 1; it <= options.max_iter; ++it) {
    fit.iterations = it;
    const Eigen::VectorXd phi = (zd * gamma_disp).array().exp();
    for (std::size_t i = 0; i < n; ++i) pw[i] = w[i] / phi(static_cast<Eigen::Index>(i));
    IrlsResult mean_fit = fit_irls(IrlsProblem{&dm.values(), y, offset, pw, model},
                                   {std::min(options.tol, 1e-10), 100}, beta_mean);
    beta_mean = mean_fit.beta;
    dropped_mean = mean_fit.dropped_columns;
    mu = ((dm.values() * beta_mean).array() + Eigen::Map<Eigen::ArrayXd>(offset.data(), static_cast<Eigen::Index>(n))).exp();
    if (!mu.allFinite() || (mu.array() <= 0.0).any()) throw DivergenceError("fitted Tweedie mean overflows");

    Eigen::VectorXd a(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) a(static_cast<Eigen::Index>(i)) = -theta_term(y[i], mu(static_cast<Eigen::Index>(i)), p, w[i]);
    gamma_disp = fit_dispersion(zd, a, b, gamma_disp);

    const double next = dglm_loglik(dm, dd, obs, beta_mean, expand(gamma_disp), p);
    if (!std::isfinite(next)) throw DivergenceError("DGLM log-likelihood is not finite");
    const double change = std::abs(next - ll);
    ll = next;
    if (change <= options.tol * (std::abs(ll) + 1.0)) {
      fit.converged = true;
      break;
    }
  }
  fit.beta_mean = beta_mean;
  fit.beta_disp = expand(gamma_disp);
  fit.loglik = ll;
  fit.n_params = static_cast<int>(dm.cols() - dropped_mean.size() + dd.cols() - dropped_disp.size()) + 1;
  for (auto j : dropped_mean)
    fit.warnings.push_back("mean column '" + dm.labels()[j] + "' is collinear; dropped");
  for (auto j : dropped_disp)
    fit.warnings.push_back("dispersion column '" + dd.labels()[j] + "' is collinear; dropped");
  if (!fit.converged)
    throw ConvergenceError("DGLM did not converge in " + std::to_string(options.max_iter) +
                           " outer iterations (last loglik " + format_double(ll) + ")");
  return fit;
}

std::vector<double> default_p_grid() {
  std::vector<double> g;
  for (int k = 0; k <= 16; ++k) g.push_back((110 + 5 * k) / 100.0);
  return g;
}

PSelection select_p(const DesignMatrix& dm, const DesignMatrix& dd,
                    std::span<const TweedieObservation> obs, std::span<const double> p_grid,
                    const DglmOptions& options) {
  if (p_grid.empty()) throw ArgumentError("p grid is empty");
  std::vector<double> grid(p_grid.begin(), p_grid.end());
  for (double p : grid)
    if (!(p > 1.0 && p < 2.0)) throw ArgumentError("p grid values must lie in (1,2)");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::vector<std::optional<DglmFit>> fits(grid.size());
  std::vector<std::string> errors(grid.size());
  parallel_for(grid.size(), [&](std::size_t k) {
    try {
      fits[k] = fit_dglm(dm, dd, obs, grid[k], options);
    } catch (const Error& e) {
      errors[k] = e.what();
    }
  });

  PSelection out;
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!fits[k]) {
      out.failures.push_back("p=" + format_double(grid[k]) + ": " + errors[k]);
      continue;
    }
    out.profile.emplace_back(grid[k], fits[k]->loglik);
    if (!best || fits[k]->loglik > fits[*best]->loglik) best = k;
  }
  if (!best) {
    std::string msg = "every p grid fit failed:";
    for (const auto& f : out.failures) msg += "\n  " + f;
    throw ConvergenceError(msg);
  }
  out.p = grid[*best];
  out.fit = std::move(*fits[*best]);
  return out;
}

CpgMapping cpg_to_tweedie(const Eigen::VectorXd& eta_n, const Eigen::VectorXd& eta_z,
                          std::span<const double> exposure, double p) {
  if (!(p > 1.0 && p < 2.0)) throw ArgumentError("Tweedie power p must lie in (1,2)");
  if (eta_n.size() != eta_z.size() || static_cast<std::size_t>(eta_n.size()) != exposure.size())
    throw ArgumentError("frequency, severity and exposure lengths differ");
  CpgMapping m;
  m.p = p;
  m.eta_mean = eta_n + eta_z;
  m.eta_disp = (-std::log(2.0 - p) - (p - 1.0) * eta_n.array() + (2.0 - p) * eta_z.array()).matrix();
  m.mu.resize(eta_n.size());
  m.weight.resize(eta_n.size());
  for (Eigen::Index i = 0; i < eta_n.size(); ++i) {
    const double d = exposure[static_cast<std::size_t>(i)];
    if (!(d > 0.0)) throw ArgumentError("exposure must be positive");
    m.mu(i) = d * std::exp(m.eta_mean(i));
    m.weight(i) = std::pow(d, p - 1.0);
  }
  m.phi = m.eta_disp.array().exp();
  return m;
}

CpgMapping cpg_to_tweedie(const GlmFit& poisson_fit, const DesignMatrix& freq_design,
                          const GlmFit& gamma_fit, const DesignMatrix& sev_design,
                          std::span<const double> exposure, double p) {
  if (poisson_fit.family != Family::poisson || gamma_fit.family != Family::gamma)
    throw ArgumentError("cpg_to_tweedie needs a Poisson and a gamma fit");
  if (freq_design.labels() != poisson_fit.labels || sev_design.labels() != gamma_fit.labels)
    throw SchemaError("design labels differ from the fits");
  if (freq_design.rows() != sev_design.rows())
    throw ArgumentError("frequency and severity designs must be row-aligned per contract");
  return cpg_to_tweedie(freq_design.values() * poisson_fit.beta, sev_design.values() * gamma_fit.beta,
                        exposure, p);
}

}  // namespace exprate
