#include "exprate/glm.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <numeric>
#include <limits>

namespace exprate {

namespace {

constexpr double kMaxEta = 700.0;
// |beta_j| * sd(x_j) above this is treated as a coefficient running off to infinity.
constexpr double kSeparationScale = 15.0;
constexpr double kRateSpread = 18.0;

double weight_at(std::span<const double> w, std::size_t i) { return w.empty() ? 1.0 : w[i]; }
double offset_at(std::span<const double> o, std::size_t i) { return o.empty() ? 0.0 : o[i]; }

void check_sizes(const DesignMatrix& design, std::span<const double> a, const char* what) {
  if (static_cast<Eigen::Index>(a.size()) != design.rows())
    throw ArgumentError(std::string(what) + " length does not match design rows");
}

}  // namespace

std::string to_string(Family family) { return family == Family::poisson ? "poisson" : "gamma"; }

DesignMatrix::DesignMatrix(Eigen::MatrixXd values, std::vector<std::string> labels)
    : values_(std::move(values)), labels_(std::move(labels)) {
  if (static_cast<Eigen::Index>(labels_.size()) != values_.cols())
    throw ArgumentError("design: one label per column required");
  if (values_.cols() == 0) throw ArgumentError("design: no columns");
  if (!values_.allFinite()) throw ArgumentError("design: non-finite entry");
  if (values_.rows() > 0 && (values_.col(0).array() != 1.0).any())
    throw ArgumentError("design: first column must be the intercept (all ones)");
  for (Eigen::Index j = 0; j < values_.cols(); ++j)
    if (values_.rows() > 0 && (values_.col(j).array() == 0.0).all())
      throw ArgumentError("design: column '" + labels_[j] + "' is identically zero");
}

DesignMatrix DesignMatrix::unchecked(Eigen::MatrixXd values, std::vector<std::string> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != values.cols())
    throw ArgumentError("design: one label per column required");
  if (values.cols() == 0) throw ArgumentError("design: no columns");
  if (values.rows() > 0 && (values.col(0).array() != 1.0).any())
    throw ArgumentError("design: first column must be the intercept (all ones)");
  DesignMatrix d;
  d.values_ = std::move(values);
  d.labels_ = std::move(labels);
  return d;
}

DesignMatrix DesignMatrix::select_rows(std::span<const Eigen::Index> rows) const {
  Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), values_.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = values_.row(rows[r]);
  DesignMatrix out;
  out.values_ = std::move(sub);
  out.labels_ = labels_;
  return out;
}

// ---------------------------------------------------------------------------

double MeanModel::unit_deviance(double y, double mu) const {
  if (power == 1.0) {
    return y > 0 ? 2.0 * (y * std::log(y / mu) - (y - mu)) : 2.0 * mu;
  }
  if (power == 2.0) {
    return 2.0 * (-std::log(y / mu) + (y - mu) / mu);
  }
  const double p = power;
  const double a = y > 0 ? std::pow(y, 2.0 - p) / ((1.0 - p) * (2.0 - p)) : 0.0;
  return 2.0 * (a - y * std::pow(mu, 1.0 - p) / (1.0 - p) + std::pow(mu, 2.0 - p) / (2.0 - p));
}

double MeanModel::irls_weight(double mu) const {
  if (power == 1.0) return mu;
  if (power == 2.0) return 1.0;
  return std::pow(mu, 2.0 - power);
}

std::vector<std::size_t> collinear_columns(const Eigen::MatrixXd& x, double rel_tol) {
  const Eigen::MatrixXd gram = x.transpose() * x;
  std::vector<Eigen::Index> active;
  Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(x.cols(), x.cols());  // lower factor of G_AA
  std::vector<std::size_t> dropped;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto m = static_cast<Eigen::Index>(active.size());
    Eigen::VectorXd g(m);
    for (Eigen::Index a = 0; a < m; ++a) g(a) = gram(active[a], j);
    Eigen::VectorXd l = chol.topLeftCorner(m, m).triangularView<Eigen::Lower>().solve(g);
    const double d = gram(j, j) - l.squaredNorm();
    if (!(d > rel_tol * gram(j, j))) {
      dropped.push_back(static_cast<std::size_t>(j));
      continue;
    }
    chol.block(m, 0, 1, m) = l.transpose();
    chol(m, m) = std::sqrt(d);
    active.push_back(j);
  }
  return dropped;
}

IrlsResult fit_irls(const IrlsProblem& pr, const GlmOptions& options,
                    const std::optional<Eigen::VectorXd>& start) {
  const Eigen::MatrixXd& xfull = *pr.x;
  const auto n = static_cast<std::size_t>(xfull.rows());
  if (pr.y.size() != n) throw ArgumentError("irls: response length mismatch");

  IrlsResult res;
  res.dropped_columns = collinear_columns(xfull);
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0, d = 0; j < xfull.cols(); ++j) {
    if (d < static_cast<Eigen::Index>(res.dropped_columns.size()) &&
        static_cast<Eigen::Index>(res.dropped_columns[d]) == j) {
      ++d;
      continue;
    }
    active.push_back(j);
  }
  Eigen::MatrixXd xreduced;
  if (!res.dropped_columns.empty()) xreduced = xfull(Eigen::all, active);
  const Eigen::MatrixXd& x = res.dropped_columns.empty() ? xfull : xreduced;
  const auto k = x.cols();

  Eigen::VectorXd offset(n), pw(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    offset(i) = offset_at(pr.offset, i);
    pw(i) = weight_at(pr.prior_weights, i);
    y(i) = pr.y[i];
  }

  auto deviance_of = [&](const Eigen::VectorXd& eta) {
    double dev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (eta(i) > kMaxEta) throw DivergenceError("linear predictor overflow during IRLS");
      dev += pw(i) * pr.model.unit_deviance(y(i), std::exp(eta(i)));
    }
    return dev;
  };

  Eigen::VectorXd beta(k), eta(n);
  if (start) {
    for (Eigen::Index a = 0; a < k; ++a) beta(a) = (*start)(active[a]);
    eta = x * beta + offset;
  } else {
    double sy = 0.0, so = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sy += pw(i) * y(i);
      so += pw(i) * std::exp(offset(i));
    }
    if (!(sy > 0.0)) throw DivergenceError("response is identically zero: MLE at -infinity");
    const double rate = sy / so;
    for (std::size_t i = 0; i < n; ++i) {
      const double base = rate * std::exp(offset(i));
      eta(i) = std::log(0.5 * (y(i) + base) > 0 ? 0.5 * (y(i) + base) : base);
    }
    beta.setZero();
  }

  double dev = start ? deviance_of(eta) : std::numeric_limits<double>::infinity();
  bool have_beta = start.has_value();
  Eigen::VectorXd w(n), z(n);
  for (int it = 1; it <= options.max_iter; ++it) {
    res.iterations = it;
    for (std::size_t i = 0; i < n; ++i) {
      const double mu = std::exp(eta(i));
      w(i) = pw(i) * pr.model.irls_weight(mu);
      z(i) = eta(i) - offset(i) + (y(i) - mu) / mu;
    }
    const Eigen::MatrixXd xw = x.array().colwise() * w.array();
    Eigen::MatrixXd gram = x.transpose() * xw;
    Eigen::VectorXd rhs = xw.transpose() * z;
    Eigen::VectorXd scale = gram.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd scaled = scale.asDiagonal() * gram * scale.asDiagonal();
    Eigen::VectorXd next = scale.asDiagonal() * scaled.ldlt().solve(scale.asDiagonal() * rhs);
    if (!next.allFinite()) throw DivergenceError("IRLS produced non-finite coefficients");

    Eigen::VectorXd next_eta = x * next + offset;
    double next_dev = deviance_of(next_eta);
    if (have_beta) {
      for (int h = 0; h < 40 && !(next_dev <= dev); ++h) {
        next = 0.5 * (next + beta);
        next_eta = x * next + offset;
        next_dev = deviance_of(next_eta);
      }
      if (!(next_dev <= dev)) {  // cannot improve: at the optimum up to rounding
        res.converged = true;
        break;
      }
    }
    const double change = std::abs(next_dev - dev);
    const double scale_ll = std::abs(0.5 * next_dev) + 0.1;
    beta = next;
    eta = next_eta;
    const bool first = !have_beta;
    dev = next_dev;
    have_beta = true;
    if (!first && 0.5 * change / scale_ll < options.tol) {
      res.converged = true;
      break;
    }
  }
  res.deviance = dev;
  res.beta = Eigen::VectorXd::Zero(xfull.cols());
  for (Eigen::Index a = 0; a < k; ++a) res.beta(active[a]) = beta(a);
  return res;
}

// ---------------------------------------------------------------------------

double poisson_log_pmf(double n, double mean) {
  if (n == 0) return -mean;
  return -mean + n * std::log(mean) - std::lgamma(n + 1.0);
}

double gamma_log_density(double z, double mean, double shape) {
  return shape * std::log(shape / mean) + (shape - 1.0) * std::log(z) - shape * z / mean -
         std::lgamma(shape);
}

std::optional<double> gamma_shape_mle(std::span<const double> z, std::span<const double> mean) {
  if (z.size() != mean.size() || z.empty()) throw ArgumentError("gamma_shape_mle: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double r = z[i] / mean[i];
    s += std::log(r) - r;
  }
  const double c = -1.0 - s / static_cast<double>(z.size());
  if (!(c > 1e-14)) return std::nullopt;
  // Solve log(a) - digamma(a) = c.
  double a = (3.0 - c + std::sqrt((c - 3.0) * (c - 3.0) + 24.0 * c)) / (12.0 * c);
  for (int it = 0; it < 100; ++it) {
    const double f = std::log(a) - boost::math::digamma(a) - c;
    const double fp = 1.0 / a - boost::math::trigamma(a);
    double next = a - f / fp;
    if (!(next > 0.0)) next = 0.5 * a;
    if (std::abs(next - a) <= 1e-15 * a) {
      a = next;
      break;
    }
    a = next;
  }
  return a;
}

namespace {

void check_separation(const DesignMatrix& design, const Eigen::VectorXd& beta) {
  const auto& x = design.values();
  for (Eigen::Index j = 1; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double sd = std::sqrt((x.col(j).array() - mean).square().mean());
    if (std::abs(beta(j)) * sd > kSeparationScale)
      throw DivergenceError("coefficient of '" + design.labels()[j] +
                            "' diverges (separated or near-separated design)");
  }
}

GlmFit make_fit(Family family, const DesignMatrix& design, const IrlsResult& r) {
  GlmFit fit;
  fit.family = family;
  fit.beta = r.beta;
  fit.labels = design.labels();
  fit.n_obs = static_cast<std::size_t>(design.rows());
  fit.converged = r.converged;
  fit.iterations = r.iterations;
  fit.dropped_columns = r.dropped_columns;
  fit.n_params = static_cast<int>(design.cols() - r.dropped_columns.size());
  for (auto j : r.dropped_columns)
    fit.warnings.push_back("column '" + design.labels()[j] + "' is collinear with earlier columns; dropped");
  return fit;
}

}  // namespace

GlmFit fit_poisson(const DesignMatrix& design, std::span<const double> counts,
                   std::span<const double> exposure, const GlmOptions& options) {
  check_sizes(design, counts, "counts");
  check_sizes(design, exposure, "exposure");
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 0 || counts[i] != std::floor(counts[i]))
      throw ArgumentError("counts must be non-negative integers");
    if (!(exposure[i] > 0)) throw ArgumentError("exposure must be positive");
    total += counts[i];
  }
  if (total == 0.0) throw DivergenceError("all counts are zero: Poisson MLE at -infinity");
  std::vector<double> offset(exposure.size());
  for (std::size_t i = 0; i < exposure.size(); ++i) offset[i] = std::log(exposure[i]);

  IrlsProblem pr{&design.values(), counts, offset, {}, MeanModel::poisson()};
  IrlsResult r = fit_irls(pr, options);
  GlmFit fit = make_fit(Family::poisson, design, r);
  fit.loglik = glm_loglik(Family::poisson, design, counts, exposure, fit.beta);
  if (!r.converged)
    throw GlmConvergenceError("Poisson IRLS did not converge in " + std::to_string(options.max_iter) +
                                  " iterations",
                              fit);
  check_separation(design, fit.beta);
  // A cell with no claims drives its fitted rate towards zero without any
  // single coefficient looking large.
  const double centre = std::log(total / std::accumulate(exposure.begin(), exposure.end(), 0.0));
  const Eigen::VectorXd eta = design.values() * fit.beta;
  if ((eta.array() - centre).abs().maxCoeff() > kRateSpread)
    throw DivergenceError("fitted rates collapse to zero in part of the design (separation)");
  return fit;
}

GlmFit fit_gamma(const DesignMatrix& design, std::span<const double> costs, const GlmOptions& options) {
  check_sizes(design, costs, "costs");
  for (double c : costs)
    if (!(c > 0.0) || !std::isfinite(c)) throw ArgumentError("gamma costs must be positive");
  if (costs.empty()) throw ArgumentError("gamma fit needs at least one claim");
  IrlsProblem pr{&design.values(), costs, {}, {}, MeanModel::gamma()};
  IrlsResult r = fit_irls(pr, options);
  GlmFit fit = make_fit(Family::gamma, design, r);
  Eigen::VectorXd mu = (design.values() * fit.beta).array().exp();
  auto shape = gamma_shape_mle(costs, std::span<const double>(mu.data(), costs.size()));
  if (!shape) {
    shape = 1e10;
    fit.warnings.push_back("costs equal their fitted means: shape is unbounded, capped at 1e10");
  }
  fit.shape = *shape;
  fit.n_params += 1;
  fit.loglik = glm_loglik(Family::gamma, design, costs, {}, fit.beta, *shape);
  if (!r.converged)
    throw GlmConvergenceError("gamma IRLS did not converge in " + std::to_string(options.max_iter) +
                                  " iterations",
                              fit);
  check_separation(design, fit.beta);
  return fit;
}

double glm_loglik(Family family, const DesignMatrix& design, std::span<const double> response,
                  std::span<const double> exposure, const Eigen::VectorXd& beta, double shape) {
  check_sizes(design, response, "response");
  const Eigen::VectorXd eta = design.values() * beta;
  double ll = 0.0;
  for (std::size_t i = 0; i < response.size(); ++i) {
    if (family == Family::poisson) {
      ll += poisson_log_pmf(response[i], exposure[i] * std::exp(eta(i)));
    } else {
      ll += gamma_log_density(response[i], std::exp(eta(i)), shape);
    }
  }
  return ll;
}

Eigen::VectorXd loglik_gradient(Family family, const DesignMatrix& design,
                                std::span<const double> response, std::span<const double> exposure,
                                const Eigen::VectorXd& beta, double shape) {
  check_sizes(design, response, "response");
  if (beta.size() != design.cols()) throw ArgumentError("beta length does not match design");
  const Eigen::VectorXd eta = design.values() * beta;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (family == Family::poisson) {
      r(i) = response[ui] - exposure[ui] * std::exp(eta(i));
    } else {
      r(i) = shape * (response[ui] * std::exp(-eta(i)) - 1.0);
    }
  }
  return design.values().transpose() * r;
}

Eigen::VectorXd predict_mean(const GlmFit& fit, const DesignMatrix& design,
                             std::span<const double> exposure) {
  if (design.labels() != fit.labels)
    throw SchemaError("design columns do not match the fitted model's columns");
  Eigen::VectorXd mu = (design.values() * fit.beta).array().exp();
  if (fit.family == Family::poisson) {
    check_sizes(design, exposure, "exposure");
    for (Eigen::Index i = 0; i < mu.size(); ++i) mu(i) *= exposure[static_cast<std::size_t>(i)];
  }
  return mu;
}

}  // namespace exprate
