#include "exprate/elasticnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <numeric>
#include <sstream>

#include "exprate/util.hpp"

namespace exprate {

namespace {

constexpr double kMaxEta = 700.0;
constexpr double kMinAlphaForLambdaMax = 0.001;
constexpr double kLambdaRatio = 1e-3;

/// Standardized working copy of the data.
struct Prepared {
  Eigen::MatrixXd x;  // column 0 ones, others centred and scaled
  Eigen::VectorXd means, sds;
  std::vector<bool> usable;  // false for constant non-intercept columns
  Eigen::VectorXd y, offset, pw;
  MeanModel model;
  double n = 0.0;
};

Prepared prepare(const PenalizedData& d) {
  if (d.design == nullptr) throw ArgumentError("penalized fit: no design");
  const auto& raw = d.design->values();
  const auto rows = raw.rows();
  if (static_cast<Eigen::Index>(d.response.size()) != rows)
    throw ArgumentError("penalized fit: response length does not match design rows");
  const bool has_exposure = !d.exposure.empty();
  if (has_exposure && static_cast<Eigen::Index>(d.exposure.size()) != rows)
    throw ArgumentError("penalized fit: exposure length does not match design rows");
  if (rows == 0) throw ArgumentError("penalized fit: no observations");

  Prepared p;
  p.n = static_cast<double>(rows);
  p.x = raw;
  p.means = Eigen::VectorXd::Zero(raw.cols());
  p.sds = Eigen::VectorXd::Ones(raw.cols());
  p.usable.assign(static_cast<std::size_t>(raw.cols()), true);
  for (Eigen::Index j = 1; j < raw.cols(); ++j) {
    const double m = raw.col(j).mean();
    const double s = std::sqrt((raw.col(j).array() - m).square().mean());
    p.means(j) = m;
    if (!(s > 1e-12 * std::max(1.0, std::abs(m)))) {
      p.usable[static_cast<std::size_t>(j)] = false;
      p.x.col(j).setZero();
      continue;
    }
    p.sds(j) = s;
    p.x.col(j) = (raw.col(j).array() - m) / s;
  }

  p.y.resize(rows);
  p.offset = Eigen::VectorXd::Zero(rows);
  p.pw = Eigen::VectorXd::Ones(rows);
  switch (d.family) {
    case PenalizedFamily::poisson: p.model = MeanModel::poisson(); break;
    case PenalizedFamily::gamma: p.model = MeanModel::gamma(); break;
    case PenalizedFamily::tweedie_mean:
      if (!(d.tweedie_p > 1.0 && d.tweedie_p < 2.0)) throw ArgumentError("Tweedie power must lie in (1,2)");
      p.model = MeanModel::tweedie(d.tweedie_p);
      break;
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double y = d.response[static_cast<std::size_t>(i)];
    if (!std::isfinite(y) || y < 0) throw ArgumentError("penalized fit: response must be non-negative");
    if (d.family == PenalizedFamily::gamma && !(y > 0)) throw ArgumentError("gamma response must be positive");
    if (d.family == PenalizedFamily::poisson && y != std::floor(y))
      throw ArgumentError("Poisson response must be integer counts");
    p.y(i) = y;
    if (has_exposure && d.family != PenalizedFamily::gamma) {
      const double e = d.exposure[static_cast<std::size_t>(i)];
      if (!(e > 0)) throw ArgumentError("exposure must be positive");
      p.offset(i) = std::log(e);
      if (d.family == PenalizedFamily::tweedie_mean) p.pw(i) = std::pow(e, d.tweedie_p - 1.0);
    }
  }
  if (!(p.y.sum() > 0)) throw DivergenceError("response is identically zero: MLE at -infinity");
  return p;
}

double deviance(const Prepared& p, const Eigen::VectorXd& eta) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (eta(i) > kMaxEta) throw DivergenceError("linear predictor overflow in penalized fit");
    dev += p.pw(i) * p.model.unit_deviance(p.y(i), std::exp(eta(i)));
  }
  return dev;
}

double penalty(const Eigen::VectorXd& b, const std::vector<bool>& mask, double alpha) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j)
    if (mask[static_cast<std::size_t>(j)]) s += alpha * std::abs(b(j)) + 0.5 * (1.0 - alpha) * b(j) * b(j);
  return s;
}

/// Score of -deviance/2 in the standardized coefficients.
Eigen::VectorXd score(const Prepared& p, const Eigen::VectorXd& eta) {
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double mu = std::exp(eta(i));
    r(i) = p.pw(i) * (p.y(i) - mu) * p.model.irls_weight(mu) / mu;
  }
  return p.x.transpose() * r;
}

Eigen::VectorXd to_standard(const Prepared& p, const Eigen::VectorXd& beta) {
  Eigen::VectorXd b = beta;
  for (Eigen::Index j = 1; j < b.size(); ++j) {
    b(j) = p.usable[static_cast<std::size_t>(j)] ? beta(j) * p.sds(j) : 0.0;
    b(0) += beta(j) * p.means(j);
  }
  return b;
}

Eigen::VectorXd to_original(const Prepared& p, const Eigen::VectorXd& b) {
  Eigen::VectorXd beta = b;
  for (Eigen::Index j = 1; j < b.size(); ++j) {
    beta(j) = b(j) / p.sds(j);
    beta(0) -= beta(j) * p.means(j);
  }
  return beta;
}

Eigen::VectorXd null_start(const Prepared& p) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p.x.cols());
  b(0) = std::log((p.pw.array() * p.y.array()).sum() / (p.pw.array() * p.offset.array().exp()).sum());
  return b;
}

}  // namespace

std::string to_string(PenalizedFamily family) {
  switch (family) {
    case PenalizedFamily::poisson: return "poisson";
    case PenalizedFamily::gamma: return "gamma";
    case PenalizedFamily::tweedie_mean: return "tweedie_mean";
  }
  return "?";
}

void PenaltySpec::validate(std::size_t n_columns) const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("elastic-net alpha must lie in [0,1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("elastic-net lambda must be >= 0");
  if (penalize_mask.size() != n_columns) throw ArgumentError("penalty mask needs one flag per column");
  if (!penalize_mask.empty() && penalize_mask[0]) throw ArgumentError("the intercept is never penalized");
}

std::vector<bool> default_penalty_mask(const DesignMatrix& design, std::span<const std::string> exempt) {
  std::vector<bool> mask(static_cast<std::size_t>(design.cols()), true);
  mask[0] = false;
  for (std::size_t j = 1; j < mask.size(); ++j)
    if (std::find(exempt.begin(), exempt.end(), design.labels()[j]) != exempt.end()) mask[j] = false;
  return mask;
}

int PenalizedFit::nonzero_penalized() const {
  int c = 0;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (spec.penalize_mask[static_cast<std::size_t>(j)] && beta(j) != 0.0) ++c;
  return c;
}

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

PenalizedFit fit_penalized(const PenalizedData& data, const PenaltySpec& spec,
                           const PenalizedOptions& options, const PenalizedFit* warm_start) {
  const Prepared p = prepare(data);
  const auto k = p.x.cols();
  spec.validate(static_cast<std::size_t>(k));

  PenalizedFit fit;
  fit.labels = data.design->labels();
  fit.spec = spec;
  for (Eigen::Index j = 1; j < k; ++j)
    if (!p.usable[static_cast<std::size_t>(j)])
      fit.warnings.push_back("column '" + fit.labels[j] + "' is constant; coefficient fixed at 0");

  const double l1 = p.n * spec.lambda * spec.alpha;
  const double l2 = p.n * spec.lambda * (1.0 - spec.alpha);
  Eigen::VectorXd b = warm_start && warm_start->beta.size() == k ? to_standard(p, warm_start->beta) : null_start(p);
  Eigen::VectorXd eta = p.x * b + p.offset;
  double obj = 0.5 * deviance(p, eta) + p.n * spec.lambda * penalty(b, spec.penalize_mask, spec.alpha);
  fit.objective_trace.push_back(obj);

  Eigen::VectorXd w(p.x.rows()), r(p.x.rows()), dj(k);
  for (int outer = 1; outer <= options.max_outer; ++outer) {
    fit.iterations = outer;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double mu = std::exp(eta(i));
      w(i) = p.pw(i) * p.model.irls_weight(mu);
      r(i) = (p.y(i) - mu) / mu;  // z - x'b with z the working response
    }
    const double wsum = w.sum();
    for (Eigen::Index j = 0; j < k; ++j) dj(j) = (w.array() * p.x.col(j).array().square()).sum();

    Eigen::VectorXd nb = b;
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
      double biggest = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (j > 0 && !p.usable[static_cast<std::size_t>(j)]) continue;
        if (!(dj(j) > 0)) continue;
        const double old = nb(j);
        const double g = (w.array() * p.x.col(j).array() * r.array()).sum() + dj(j) * old;
        const double next = spec.penalize_mask[static_cast<std::size_t>(j)]
                                ? soft_threshold(g, l1) / (dj(j) + l2)
                                : g / dj(j);
        if (next != old) {
          r -= (next - old) * p.x.col(j);
          nb(j) = next;
          biggest = std::max(biggest, std::abs(next - old) * std::sqrt(dj(j) / wsum));
        }
      }
      if (biggest < 1e-13) break;
    }

    Eigen::VectorXd neta = p.x * nb + p.offset;
    double nobj = 0.5 * deviance(p, neta) + p.n * spec.lambda * penalty(nb, spec.penalize_mask, spec.alpha);
    for (int h = 0; h < 60 && !(nobj <= obj); ++h) {
      nb = 0.5 * (nb + b);
      neta = p.x * nb + p.offset;
      nobj = 0.5 * deviance(p, neta) + p.n * spec.lambda * penalty(nb, spec.penalize_mask, spec.alpha);
    }
    if (!(nobj <= obj)) {  // no further descent available
      fit.converged = true;
      break;
    }
    const double change = obj - nobj;
    const double step = (nb - b).cwiseAbs().maxCoeff();
    b = nb;
    eta = neta;
    obj = nobj;
    fit.objective_trace.push_back(obj);
    if (change <= options.tol * (std::abs(obj) + 1.0) && step < 1e-8) {
      fit.converged = true;
      break;
    }
  }
  fit.objective = obj;
  fit.deviance = deviance(p, eta);
  fit.beta = to_original(p, b);
  for (Eigen::Index j = 1; j < k; ++j)
    if (b(j) == 0.0) fit.beta(j) = 0.0;
  if (!fit.converged)
    throw ConvergenceError("penalized fit did not converge in " + std::to_string(options.max_outer) +
                           " IRLS iterations (lambda " + format_double(spec.lambda) + ")");
  return fit;
}

double lambda_max(const PenalizedData& data, const std::vector<bool>& mask, double alpha) {
  const Prepared p = prepare(data);
  if (mask.size() != static_cast<std::size_t>(p.x.cols())) throw ArgumentError("mask size mismatch");
  std::vector<Eigen::Index> free_cols;
  for (Eigen::Index j = 0; j < p.x.cols(); ++j)
    if (!mask[static_cast<std::size_t>(j)] && (j == 0 || p.usable[static_cast<std::size_t>(j)]))
      free_cols.push_back(j);
  const Eigen::MatrixXd xf = p.x(Eigen::all, free_cols);
  std::vector<double> y(p.y.data(), p.y.data() + p.y.size());
  std::vector<double> off(p.offset.data(), p.offset.data() + p.offset.size());
  std::vector<double> pw(p.pw.data(), p.pw.data() + p.pw.size());
  const IrlsResult null_fit = fit_irls(IrlsProblem{&xf, y, off, pw, p.model});
  const Eigen::VectorXd eta = xf * null_fit.beta + p.offset;
  const Eigen::VectorXd g = score(p, eta);
  double top = 0.0;
  for (Eigen::Index j = 1; j < g.size(); ++j)
    if (mask[static_cast<std::size_t>(j)] && p.usable[static_cast<std::size_t>(j)]) top = std::max(top, std::abs(g(j)));
  // coordinate updates recompute the score with different rounding; the
  // margin keeps every coefficient at exactly zero at the returned value
  return top / (p.n * std::max(alpha, kMinAlphaForLambdaMax)) * (1.0 + 1e-12);
}

double kkt_violation(const PenalizedData& data, const PenalizedFit& fit) {
  const Prepared p = prepare(data);
  const Eigen::VectorXd b = to_standard(p, fit.beta);
  const Eigen::VectorXd g = score(p, p.x * b + p.offset);
  const double l1 = p.n * fit.spec.lambda * fit.spec.alpha;
  const double l2 = p.n * fit.spec.lambda * (1.0 - fit.spec.alpha);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    if (j > 0 && !p.usable[static_cast<std::size_t>(j)]) continue;
    double v;
    if (!fit.spec.penalize_mask[static_cast<std::size_t>(j)]) {
      v = std::abs(g(j));
    } else if (b(j) != 0.0) {
      v = std::abs(g(j) - l2 * b(j) - l1 * (b(j) > 0 ? 1.0 : -1.0));
    } else {
      v = std::max(0.0, std::abs(g(j)) - l1);
    }
    worst = std::max(worst, v / p.n);
  }
  return worst;
}

double mean_deviance(const PenalizedData& data, const Eigen::VectorXd& beta) {
  const Prepared p = prepare(data);
  const Eigen::VectorXd eta = data.design->values() * beta + p.offset;
  return deviance(p, eta) / p.n;
}

CvResult cv_select(const PenalizedData& data, std::span<const std::string> groups,
                   std::span<const double> alpha_grid, int n_lambda, int folds, std::uint64_t seed,
                   const std::vector<bool>& mask) {
  if (folds < 2) throw ArgumentError("cross validation needs at least 2 folds");
  if (n_lambda < 1) throw ArgumentError("n_lambda must be positive");
  if (alpha_grid.empty()) throw ArgumentError("alpha grid is empty");
  const auto rows = static_cast<std::size_t>(data.design->rows());
  if (groups.size() != rows) throw ArgumentError("one group id per row required");
  for (double a : alpha_grid)
    if (!(a >= 0.0 && a <= 1.0)) throw ArgumentError("elastic-net alpha must lie in [0,1]");

  // Fold assignment by hashed group order, independent of row order.
  std::vector<std::string> ids(groups.begin(), groups.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < static_cast<std::size_t>(folds))
    throw FoldAssignmentError("fewer groups (" + std::to_string(ids.size()) + ") than folds (" +
                              std::to_string(folds) + "); reduce the number of folds");
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  for (std::size_t g = 0; g < ids.size(); ++g) keyed.emplace_back(splitmix64(seed ^ fnv1a64(ids[g])), g);
  std::sort(keyed.begin(), keyed.end());
  std::map<std::string, int> fold_of_group;
  for (std::size_t r = 0; r < keyed.size(); ++r)
    fold_of_group[ids[keyed[r].second]] = static_cast<int>(r % static_cast<std::size_t>(folds));

  CvResult out;
  out.fold_of_row.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) out.fold_of_row[i] = fold_of_group[groups[i]];

  struct FoldData {
    DesignMatrix train_x, test_x;
    std::vector<double> train_y, test_y, train_e, test_e;
  };
  std::vector<FoldData> fd(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> tr, te;
    auto& d = fd[static_cast<std::size_t>(f)];
    for (std::size_t i = 0; i < rows; ++i) {
      const bool test = out.fold_of_row[i] == f;
      (test ? te : tr).push_back(static_cast<Eigen::Index>(i));
      (test ? d.test_y : d.train_y).push_back(data.response[i]);
      if (!data.exposure.empty()) (test ? d.test_e : d.train_e).push_back(data.exposure[i]);
    }
    d.train_x = data.design->select_rows(tr);
    d.test_x = data.design->select_rows(te);
    const double claims = std::accumulate(d.train_y.begin(), d.train_y.end(), 0.0);
    if (te.empty() || tr.empty() || !(claims > 0))
      throw FoldAssignmentError("fold " + std::to_string(f + 1) +
                                " leaves a training set without claims; use fewer folds or another seed");
  }

  auto fold_data = [&](const FoldData& d, bool test) {
    PenalizedData pd = data;
    pd.design = test ? &d.test_x : &d.train_x;
    pd.response = test ? std::span<const double>(d.test_y) : std::span<const double>(d.train_y);
    pd.exposure = test ? std::span<const double>(d.test_e) : std::span<const double>(d.train_e);
    return pd;
  };

  for (double alpha : alpha_grid) {
    const double top = lambda_max(data, mask, alpha);
    std::vector<double> path(static_cast<std::size_t>(n_lambda));
    for (int l = 0; l < n_lambda; ++l)
      path[static_cast<std::size_t>(l)] =
          n_lambda == 1 ? top : top * std::pow(kLambdaRatio, static_cast<double>(l) / (n_lambda - 1));

    // deviance[f][l]
    std::vector<std::vector<double>> dev(static_cast<std::size_t>(folds), std::vector<double>(path.size()));
    parallel_for(static_cast<std::size_t>(folds), [&](std::size_t f) {
      const PenalizedData train = fold_data(fd[f], false);
      const PenalizedData test = fold_data(fd[f], true);
      std::optional<PenalizedFit> prev;
      for (std::size_t l = 0; l < path.size(); ++l) {
        PenaltySpec s{alpha, path[l], mask};
        PenalizedFit fit = fit_penalized(train, s, {}, prev ? &*prev : nullptr);
        dev[f][l] = mean_deviance(test, fit.beta);
        prev = std::move(fit);
      }
    });
    std::optional<PenalizedFit> prev;
    for (std::size_t l = 0; l < path.size(); ++l) {
      PenaltySpec s{alpha, path[l], mask};
      PenalizedFit full = fit_penalized(data, s, {}, prev ? &*prev : nullptr);
      CvPoint pt;
      pt.alpha = alpha;
      pt.lambda = path[l];
      double sum = 0.0, sq = 0.0;
      for (int f = 0; f < folds; ++f) sum += dev[static_cast<std::size_t>(f)][l];
      pt.mean_deviance = sum / folds;
      for (int f = 0; f < folds; ++f) {
        const double e = dev[static_cast<std::size_t>(f)][l] - pt.mean_deviance;
        sq += e * e;
      }
      pt.se_deviance = std::sqrt(sq / (folds - 1) / folds);
      pt.nonzero_count = full.nonzero_penalized();
      out.table.push_back(pt);
      prev = std::move(full);
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < out.table.size(); ++i)
    if (out.table[i].mean_deviance < out.table[best].mean_deviance) best = i;
  const double bound = out.table[best].mean_deviance + out.table[best].se_deviance;
  std::size_t sparse = best;
  for (std::size_t i = 0; i < out.table.size(); ++i) {
    const auto& c = out.table[i];
    const auto& s = out.table[sparse];
    if (c.mean_deviance > bound) continue;
    if (c.nonzero_count < s.nonzero_count || (c.nonzero_count == s.nonzero_count && c.lambda > s.lambda)) sparse = i;
  }
  out.best = PenaltySpec{out.table[best].alpha, out.table[best].lambda, mask};
  out.one_se = PenaltySpec{out.table[sparse].alpha, out.table[sparse].lambda, mask};
  return out;
}

std::string cv_table_csv(const std::vector<CvPoint>& table) {
  std::ostringstream os;
  os << "alpha,lambda,mean_deviance,se_deviance,nonzero_count\n";
  for (const auto& p : table)
    os << format_double(p.alpha) << ',' << format_double(p.lambda) << ',' << format_double(p.mean_deviance)
       << ',' << format_double(p.se_deviance) << ',' << p.nonzero_count << '\n';
  return os.str();
}

}  // namespace exprate
