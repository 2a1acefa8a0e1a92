#include "exprate/bms_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "exprate/util.hpp"

namespace exprate {

namespace {

constexpr int kStructuralParams = 3;

std::optional<Eigen::Index> column_of(const std::vector<std::string>& labels, const std::string& name) {
  for (std::size_t j = 0; j < labels.size(); ++j)
    if (labels[j] == name) return static_cast<Eigen::Index>(j);
  return std::nullopt;
}

bool row_in_scope(const ContractRecord& c, std::optional<int> min_year) {
  return !min_year || c.calendar_year >= *min_year;
}

struct RowFit {
  std::optional<GlmFit> glm;
  std::optional<DglmFit> dglm;
};

std::vector<TweedieObservation> tweedie_obs(const ModelRows& rows, double p) {
  std::vector<TweedieObservation> obs(rows.response.size());
  for (std::size_t i = 0; i < obs.size(); ++i)
    obs[i] = TweedieObservation{rows.response[i], rows.counts[i], default_weight(rows.exposure[i], p),
                                rows.exposure[i]};
  return obs;
}

RowFit fit_rows(const ModelRows& rows, Target target, double p, const ModelOptions& options) {
  RowFit f;
  switch (target) {
    case Target::frequency:
      f.glm = fit_poisson(rows.design, rows.response, rows.exposure, options.glm);
      break;
    case Target::severity:
      if (rows.response.empty()) throw ArgumentError("severity model needs at least one claim");
      f.glm = fit_gamma(rows.design, rows.response, options.glm);
      break;
    case Target::loss_cost: {
      const auto obs = tweedie_obs(rows, p);
      f.dglm = fit_dglm(rows.design, rows.design, obs, p, options.dglm);
      break;
    }
  }
  return f;
}

double choose_p(const ModelRows& rows, const ModelOptions& options, std::vector<std::string>& warnings) {
  if (options.tweedie_p) return *options.tweedie_p;
  const auto grid = default_p_grid();
  // weights depend on p, so each grid point rebuilds them
  double best_p = 0.0, best_ll = -std::numeric_limits<double>::infinity();
  for (double p : grid) {
    try {
      const auto fit = fit_dglm(rows.design, rows.design, tweedie_obs(rows, p), p, options.dglm);
      if (fit.loglik > best_ll) {
        best_ll = fit.loglik;
        best_p = p;
      }
    } catch (const Error& e) {
      warnings.push_back("p=" + format_double(p) + " failed: " + e.what());
    }
  }
  if (best_p == 0.0) throw ConvergenceError("no Tweedie power on the default grid could be fitted");
  return best_p;
}

ExperienceModel assemble(Target target, ExperienceKind kind, const BmsStructure& structure,
                         std::vector<std::string> covariates, const ModelOptions& options, RowFit fit) {
  ExperienceModel m;
  m.target = target;
  m.kind = kind;
  m.structure = structure;
  m.window_years = options.window_years;
  m.min_calendar_year = options.min_calendar_year;
  m.covariates = std::move(covariates);
  if (fit.glm) {
    m.loglik = fit.glm->loglik;
    m.n_params = fit.glm->n_params;
    m.n_obs = fit.glm->n_obs;
    m.warnings = fit.glm->warnings;
    m.glm = std::move(fit.glm);
  } else {
    m.loglik = fit.dglm->loglik;
    m.n_params = fit.dglm->n_params;
    m.n_obs = fit.dglm->n_obs;
    m.warnings = fit.dglm->warnings;
    m.dglm = std::move(fit.dglm);
  }
  if (kind == ExperienceKind::bms) {
    m.n_params += kStructuralParams;
    if (const auto j = column_of(m.labels(), "level"); j && m.beta()(*j) == 0.0)
      m.warnings.push_back("BMS level column is constant for " + structure.to_string() +
                           "; gamma0 is not identified and is absorbed into the intercept");
  }
  if (kind == ExperienceKind::kappa_n && !(m.gamma0() > 0.0))
    m.warnings.push_back("estimated gamma0 = " + format_double(m.gamma0()) +
                         " is not positive: claim-free years do not earn a discount");
  return m;
}

ExperienceModel fit_kind(const Portfolio& portfolio, std::span<const ScopeSummary> scope, Target target,
                         ExperienceKind kind, const BmsStructure& structure,
                         std::vector<std::string> covariates, const ModelOptions& options,
                         std::optional<double> p) {
  const ModelRows rows =
      build_rows(portfolio, scope, target, kind, structure, covariates, options.min_calendar_year);
  std::vector<std::string> warnings;
  double power = 0.0;
  if (target == Target::loss_cost) power = p ? *p : choose_p(rows, options, warnings);
  auto m = assemble(target, kind, structure, std::move(covariates), options, fit_rows(rows, target, power, options));
  m.warnings.insert(m.warnings.end(), warnings.begin(), warnings.end());
  return m;
}

/// Contract-level design of `model` (frequency-shaped rows) on `portfolio`.
ModelRows contract_rows(const ExperienceModel& model, const Portfolio& portfolio,
                        std::span<const ScopeSummary> scope, std::optional<int> min_year) {
  const Target shape = model.target == Target::severity ? Target::frequency : model.target;
  ModelRows rows = build_rows(portfolio, scope, shape, model.kind, model.structure, model.covariates, min_year);
  if (rows.design.labels() != model.labels())
    throw SchemaError("model columns do not match the portfolio's covariates");
  return rows;
}

}  // namespace

std::string to_string(Target target) {
  switch (target) {
    case Target::frequency: return "frequency";
    case Target::severity: return "severity";
    case Target::loss_cost: return "loss_cost";
  }
  return "?";
}

std::string to_string(ExperienceKind kind) {
  switch (kind) {
    case ExperienceKind::standard: return "standard";
    case ExperienceKind::kappa_n: return "kappa_n";
    case ExperienceKind::bms: return "bms";
  }
  return "?";
}

Target parse_target(const std::string& text) {
  if (text == "frequency") return Target::frequency;
  if (text == "severity") return Target::severity;
  if (text == "loss_cost") return Target::loss_cost;
  throw ArgumentError("unknown target '" + text + "' (frequency, severity, loss_cost)");
}

ExperienceKind parse_experience(const std::string& text) {
  if (text == "standard") return ExperienceKind::standard;
  if (text == "kappa_n") return ExperienceKind::kappa_n;
  if (text == "bms") return ExperienceKind::bms;
  throw ArgumentError("unknown model '" + text + "' (standard, kappa_n, bms)");
}

const Eigen::VectorXd& ExperienceModel::beta() const {
  if (glm) return glm->beta;
  if (dglm) return dglm->beta_mean;
  throw ArgumentError("model has not been fitted");
}

const std::vector<std::string>& ExperienceModel::labels() const {
  if (glm) return glm->labels;
  if (dglm) return dglm->labels_mean;
  throw ArgumentError("model has not been fitted");
}

double ExperienceModel::gamma0() const {
  if (kind == ExperienceKind::kappa_n) return -beta()(*column_of(labels(), "kappa"));
  if (kind == ExperienceKind::bms) return beta()(*column_of(labels(), "level"));
  return 0.0;
}

double ExperienceModel::gamma1() const {
  if (kind == ExperienceKind::kappa_n) return beta()(*column_of(labels(), "n"));
  return 0.0;
}

double ExperienceModel::psi() const {
  if (kind == ExperienceKind::kappa_n) return gamma1() / gamma0();
  if (kind == ExperienceKind::bms) return structure.psi;
  return 0.0;
}

std::vector<std::string> resolve_covariates(const Portfolio& portfolio, std::span<const std::string> selection) {
  const auto& names = portfolio.covariate_names();
  std::vector<std::string> out;
  for (const auto& s : selection) {
    if (std::find(names.begin(), names.end(), s) == names.end())
      throw SchemaError("covariate '" + s + "' is not in the portfolio");
    if (std::find(out.begin(), out.end(), s) != out.end())
      throw ArgumentError("covariate '" + s + "' listed twice");
    out.push_back(s);
  }
  // keep portfolio column order so designs are reproducible
  std::sort(out.begin(), out.end(), [&](const std::string& a, const std::string& b) {
    return std::find(names.begin(), names.end(), a) < std::find(names.begin(), names.end(), b);
  });
  return out;
}

ModelRows build_rows(const Portfolio& portfolio, std::span<const ScopeSummary> scope, Target target,
                     ExperienceKind kind, const BmsStructure& structure,
                     std::span<const std::string> covariates, std::optional<int> min_calendar_year) {
  if (scope.size() != portfolio.size()) throw ArgumentError("scope is not aligned with the portfolio");
  if (kind == ExperienceKind::bms) structure.validate();
  const auto& names = portfolio.covariate_names();
  std::vector<std::size_t> cols;
  std::vector<std::string> labels{"intercept"};
  for (const auto& c : covariates) {
    const auto it = std::find(names.begin(), names.end(), c);
    if (it == names.end()) throw SchemaError("covariate '" + c + "' is not in the portfolio");
    cols.push_back(1 + static_cast<std::size_t>(it - names.begin()));
    labels.push_back(c);
  }
  if (kind == ExperienceKind::kappa_n) {
    labels.push_back("kappa");
    labels.push_back("n");
  } else if (kind == ExperienceKind::bms) {
    labels.push_back("level");
  }

  ModelRows rows;
  const auto& contracts = portfolio.contracts();
  for (std::size_t i = 0; i < contracts.size(); ++i) {
    if (!row_in_scope(contracts[i], min_calendar_year)) continue;
    const std::size_t repeat = target == Target::severity ? portfolio.claims_of(i).size() : 1;
    for (std::size_t r = 0; r < repeat; ++r) rows.contract_of_row.push_back(i);
    if (target == Target::severity) {
      for (const auto& cl : portfolio.claims_of(i)) rows.response.push_back(cl.cost);
    } else if (target == Target::frequency) {
      rows.response.push_back(contracts[i].claim_count);
    } else {
      rows.response.push_back(portfolio.loss_of(i));
    }
  }

  const auto n = static_cast<Eigen::Index>(rows.contract_of_row.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(labels.size()));
  rows.counts.resize(static_cast<std::size_t>(n));
  rows.exposure.resize(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t i = rows.contract_of_row[static_cast<std::size_t>(r)];
    const auto& c = contracts[i];
    x(r, 0) = 1.0;
    Eigen::Index j = 1;
    for (auto col : cols) x(r, j++) = c.covariates[col];
    if (kind == ExperienceKind::kappa_n) {
      x(r, j++) = scope[i].kappa_dotdot;
      x(r, j++) = scope[i].n_dotdot;
    } else if (kind == ExperienceKind::bms) {
      x(r, j++) = bms_level_recursive(scope[i].window_claims, structure);
    }
    rows.counts[static_cast<std::size_t>(r)] = c.claim_count;
    rows.exposure[static_cast<std::size_t>(r)] = c.exposure;
  }
  rows.design = DesignMatrix::unchecked(std::move(x), std::move(labels));
  return rows;
}

ExperienceModel fit_standard(const Portfolio& portfolio, Target target, std::span<const std::string> covariates,
                             const ModelOptions& options) {
  const auto scope = compute_scope(portfolio, options.window_years);
  return fit_kind(portfolio, scope, target, ExperienceKind::standard, {}, resolve_covariates(portfolio, covariates),
                  options, options.tweedie_p);
}

ExperienceModel fit_kappa_n(const Portfolio& portfolio, Target target, std::span<const std::string> covariates,
                            const ModelOptions& options) {
  const auto scope = compute_scope(portfolio, options.window_years);
  return fit_kind(portfolio, scope, target, ExperienceKind::kappa_n, {}, resolve_covariates(portfolio, covariates),
                  options, options.tweedie_p);
}

ExperienceModel fit_bms_structure(const Portfolio& portfolio, Target target, std::span<const std::string> covariates,
                                  const BmsStructure& structure, const ModelOptions& options) {
  const auto scope = compute_scope(portfolio, options.window_years);
  return fit_kind(portfolio, scope, target, ExperienceKind::bms, structure, resolve_covariates(portfolio, covariates),
                  options, options.tweedie_p);
}

BmsGrid BmsGrid::defaults() {
  BmsGrid g;
  for (int v = 1; v <= 6; ++v) g.psi.push_back(v);
  for (int v = 90; v <= 100; ++v) g.l_min.push_back(v);
  for (int v = 100; v <= 110; ++v) g.l_max.push_back(v);
  return g;
}

std::vector<BmsStructure> BmsGrid::candidates() const {
  std::vector<BmsStructure> out;
  for (int p : psi)
    for (int lo : l_min)
      for (int hi : l_max) {
        if (p < 1 || lo > 100 || hi < 100) continue;
        out.push_back(BmsStructure{p, lo, hi, 100});
      }
  return out;
}

ExperienceModel fit_bms(const Portfolio& portfolio, Target target, std::span<const std::string> covariates,
                        const BmsGrid& grid, const ModelOptions& options) {
  if (grid.psi.empty() || grid.l_min.empty() || grid.l_max.empty())
    throw ArgumentError("BMS grids must be non-empty");
  const auto candidates = grid.candidates();
  if (candidates.empty())
    throw ArgumentError("no feasible BMS structure: need psi >= 1 and l_min <= 100 <= l_max");
  const auto cov = resolve_covariates(portfolio, covariates);
  const auto scope = compute_scope(portfolio, options.window_years);

  std::optional<double> p = options.tweedie_p;
  std::vector<std::string> p_warnings;
  if (target == Target::loss_cost && !p) {
    const auto rows = build_rows(portfolio, scope, target, ExperienceKind::kappa_n, {}, cov, options.min_calendar_year);
    p = choose_p(rows, options, p_warnings);
  }

  std::vector<std::optional<ExperienceModel>> fits(candidates.size());
  std::vector<std::string> errors(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t k) {
    try {
      fits[k] = fit_kind(portfolio, scope, target, ExperienceKind::bms, candidates[k], cov, options, p);
    } catch (const Error& e) {
      errors[k] = e.what();
    }
  });

  std::vector<ProfileEntry> table;
  std::optional<std::size_t> best;
  auto better = [&](std::size_t a, std::size_t b) {
    const double la = fits[a]->loglik, lb = fits[b]->loglik;
    if (std::abs(la - lb) > 1e-9 * (1.0 + std::abs(lb))) return la > lb;
    const auto& sa = candidates[a];
    const auto& sb = candidates[b];
    if (sa.psi != sb.psi) return sa.psi < sb.psi;
    const int wa = *sa.l_max - *sa.l_min, wb = *sb.l_max - *sb.l_min;
    if (wa != wb) return wa > wb;
    return *sa.l_min < *sb.l_min;
  };
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    ProfileEntry e;
    e.structure = candidates[k];
    if (fits[k]) {
      e.loglik = fits[k]->loglik;
      e.n_params = fits[k]->n_params;
      if (!best || better(k, *best)) best = k;
    } else {
      e.loglik = std::nan("");
      e.error = errors[k];
    }
    table.push_back(std::move(e));
  }
  if (!best) {
    std::string msg = "every BMS candidate failed; first error: " + errors.front();
    throw ConvergenceError(msg);
  }
  ExperienceModel out = std::move(*fits[*best]);
  out.profile_table = std::move(table);
  out.warnings.insert(out.warnings.end(), p_warnings.begin(), p_warnings.end());
  return out;
}

Eigen::VectorXd model_log_densities(const ExperienceModel& model, const Portfolio& portfolio) {
  const auto scope = compute_scope(portfolio, model.window_years);
  const ModelRows rows = build_rows(portfolio, scope, model.target, model.kind, model.structure, model.covariates,
                                    model.min_calendar_year);
  if (rows.design.labels() != model.labels())
    throw SchemaError("model columns do not match the portfolio's covariates");
  const Eigen::VectorXd eta = rows.design.values() * model.beta();
  Eigen::VectorXd out(eta.size());
  for (Eigen::Index r = 0; r < eta.size(); ++r) {
    const auto i = static_cast<std::size_t>(r);
    switch (model.target) {
      case Target::frequency:
        out(r) = poisson_log_pmf(rows.response[i], rows.exposure[i] * std::exp(eta(r)));
        break;
      case Target::severity:
        out(r) = gamma_log_density(rows.response[i], std::exp(eta(r)), *model.glm->shape);
        break;
      case Target::loss_cost: {
        const auto& f = *model.dglm;
        const double phi = std::exp(rows.design.values().row(r).dot(f.beta_disp));
        out(r) = joint_log_density(rows.response[i], rows.counts[i], rows.exposure[i] * std::exp(eta(r)), phi, f.p,
                                   default_weight(rows.exposure[i], f.p));
        break;
      }
    }
  }
  return out;
}

double model_loglik(const ExperienceModel& model, const Portfolio& portfolio) {
  return model_log_densities(model, portfolio).sum();
}

Eigen::VectorXd predict_contracts(const ExperienceModel& model, const Portfolio& portfolio) {
  const auto scope = compute_scope(portfolio, model.window_years);
  const ModelRows rows = contract_rows(model, portfolio, scope, std::nullopt);
  Eigen::VectorXd mu = (rows.design.values() * model.beta()).array().exp();
  if (model.target != Target::severity)
    for (Eigen::Index r = 0; r < mu.size(); ++r) mu(r) *= rows.exposure[static_cast<std::size_t>(r)];
  return mu;
}

SelectionResult select_covariates(const Portfolio& portfolio, Target target, std::span<const double> alpha_grid,
                                  int n_lambda, int folds, std::uint64_t seed, bool one_se,
                                  const ModelOptions& options) {
  const auto scope = compute_scope(portfolio, options.window_years);
  const auto all = portfolio.covariate_names();
  const ModelRows rows =
      build_rows(portfolio, scope, target, ExperienceKind::kappa_n, {}, all, options.min_calendar_year);
  const std::vector<std::string> exempt{"kappa", "n"};
  const auto mask = default_penalty_mask(rows.design, exempt);
  PenalizedData data{&rows.design, rows.response, target == Target::severity ? std::span<const double>() : rows.exposure,
                     target == Target::frequency  ? PenalizedFamily::poisson
                     : target == Target::severity ? PenalizedFamily::gamma
                                                  : PenalizedFamily::tweedie_mean,
                     options.tweedie_p.value_or(1.5)};
  std::vector<std::string> groups;
  groups.reserve(rows.contract_of_row.size());
  for (auto i : rows.contract_of_row) groups.push_back(portfolio.contracts()[i].policy_id);

  SelectionResult out;
  out.cv = cv_select(data, groups, alpha_grid, n_lambda, folds, seed, mask);
  const auto fit = fit_penalized(data, one_se ? out.cv.one_se : out.cv.best);
  for (std::size_t j = 0; j < all.size(); ++j)
    if (fit.beta(static_cast<Eigen::Index>(j + 1)) != 0.0) out.covariates.push_back(all[j]);
  return out;
}

std::string profile_table_csv(const std::vector<ProfileEntry>& table) {
  std::ostringstream os;
  os << "psi,l_min,l_max,loglik,n_params\n";
  for (const auto& e : table) {
    os << e.structure.psi << ',' << e.structure.l_min.value_or(0) << ',' << e.structure.l_max.value_or(0) << ','
       << (e.error.empty() ? format_double(e.loglik) : std::string("NA")) << ','
       << (e.error.empty() ? std::to_string(e.n_params) : std::string("NA")) << '\n';
  }
  return os.str();
}

CpgTweedieView cpg_as_tweedie(const ExperienceModel& frequency, const ExperienceModel& severity,
                              const Portfolio& portfolio) {
  if (frequency.target != Target::frequency || severity.target != Target::severity)
    throw ArgumentError("CPG view needs a frequency and a severity model");
  if (frequency.window_years != severity.window_years)
    throw ArgumentError("frequency and severity models use different windows");
  const auto scope = compute_scope(portfolio, frequency.window_years);
  const auto min_year = frequency.min_calendar_year;
  const ModelRows fr = contract_rows(frequency, portfolio, scope, min_year);
  const ModelRows sr = contract_rows(severity, portfolio, scope, min_year);
  CpgTweedieView v;
  v.shape = *severity.glm->shape;
  const double p = p_from_shape(v.shape);
  v.mapping = cpg_to_tweedie(fr.design.values() * frequency.beta(), sr.design.values() * severity.beta(),
                             fr.exposure, p);
  for (std::size_t r = 0; r < fr.response.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    const std::size_t c = fr.contract_of_row[r];
    v.loglik += joint_log_density(portfolio.loss_of(c), fr.counts[r], v.mapping.mu(i), v.mapping.phi(i), p,
                                  v.mapping.weight(i));
  }
  return v;
}

namespace {

ModelRows tweedie_cp_rows(const Portfolio& portfolio, const BmsStructure& freq, const BmsStructure& sev,
                          const std::vector<std::string>& covariates, int window, std::optional<int> min_year) {
  const auto scope = compute_scope(portfolio, window);
  ModelRows rows = build_rows(portfolio, scope, Target::loss_cost, ExperienceKind::bms, freq, covariates, min_year);
  if (freq == sev) return rows;
  const auto& x = rows.design.values();
  Eigen::MatrixXd wide(x.rows(), x.cols() + 1);
  wide.leftCols(x.cols()) = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    wide(r, x.cols()) = bms_level_recursive(scope[rows.contract_of_row[static_cast<std::size_t>(r)]].window_claims, sev);
  auto labels = rows.design.labels();
  labels.back() = "level_freq";
  labels.push_back("level_sev");
  rows.design = DesignMatrix::unchecked(std::move(wide), std::move(labels));
  return rows;
}

}  // namespace

TweedieCpModel fit_tweedie_cp(const ExperienceModel& frequency, const ExperienceModel& severity,
                              const Portfolio& portfolio, const ModelOptions& options) {
  if (frequency.target != Target::frequency || severity.target != Target::severity ||
      frequency.kind != ExperienceKind::bms || severity.kind != ExperienceKind::bms)
    throw ArgumentError("Tweedie CP model needs a BMS frequency and a BMS severity model");
  if (frequency.window_years != severity.window_years)
    throw ArgumentError("frequency and severity models use different windows");
  std::vector<std::string> wanted = frequency.covariates;
  wanted.insert(wanted.end(), severity.covariates.begin(), severity.covariates.end());
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());

  TweedieCpModel m;
  m.freq_structure = frequency.structure;
  m.sev_structure = severity.structure;
  m.window_years = frequency.window_years;
  m.min_calendar_year = frequency.min_calendar_year;
  m.covariates = resolve_covariates(portfolio, wanted);
  const ModelRows rows = tweedie_cp_rows(portfolio, m.freq_structure, m.sev_structure, m.covariates,
                                         m.window_years, m.min_calendar_year);
  std::vector<std::string> warnings;
  const double p = choose_p(rows, options, warnings);
  m.dglm = fit_dglm(rows.design, rows.design, tweedie_obs(rows, p), p, options.dglm);
  m.dglm.warnings.insert(m.dglm.warnings.end(), warnings.begin(), warnings.end());
  m.loglik = m.dglm.loglik;
  m.n_params = m.dglm.n_params + 2 * kStructuralParams;
  m.n_obs = m.dglm.n_obs;
  return m;
}

double model_loglik(const TweedieCpModel& model, const Portfolio& portfolio) {
  const ModelRows rows = tweedie_cp_rows(portfolio, model.freq_structure, model.sev_structure, model.covariates,
                                         model.window_years, model.min_calendar_year);
  if (rows.design.labels() != model.dglm.labels_mean)
    throw SchemaError("model columns do not match the portfolio's covariates");
  return dglm_loglik(rows.design, rows.design, tweedie_obs(rows, model.dglm.p), model.dglm.beta_mean,
                     model.dglm.beta_disp, model.dglm.p);
}

}  // namespace exprate
