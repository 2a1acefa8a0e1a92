#include "exprate/evaluate.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "exprate/errors.hpp"
#include "exprate/util.hpp"

namespace exprate {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct GroupSums {
  std::size_t contracts = 0;
  double exposure = 0.0;
  double claims = 0.0;
  double loss = 0.0;
  double predicted_claims = 0.0;
  double predicted_loss = 0.0;

  void add(double d, double n, double y, double pn, double py) {
    ++contracts;
    exposure += d;
    claims += n;
    loss += y;
    predicted_claims += pn;
    predicted_loss += py;
  }
};

double ratio(double num, double den) { return den > 0.0 ? num / den : kNaN; }

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

double logarithmic_score(const ExperienceModel& model, const Portfolio& test) { return -model_loglik(model, test); }

RelativityTable relativity_table(double gamma0, const BmsStructure& structure, int window_years) {
  structure.validate();
  if (window_years < 1) throw ArgumentError("window_years must be positive");
  const int lo = structure.l_min.value_or(structure.l_start - window_years);
  const int hi = structure.l_max.value_or(structure.l_start + structure.psi * window_years);
  RelativityTable t;
  for (int l = lo; l <= hi; ++l) t.levels.push_back({l, std::exp(gamma0 * (l - structure.l_start))});
  t.surcharge_per_claim = std::exp(structure.psi * gamma0) - 1.0;
  t.claims_free_discount = 1.0 - std::exp(-gamma0);
  t.min_relativity = t.levels.front().relativity;
  t.max_relativity = t.levels.back().relativity;
  if (gamma0 < 0.0) std::swap(t.min_relativity, t.max_relativity);
  return t;
}

double combined_cpg_relativity(double freq_relativity, double sev_relativity) {
  if (!(freq_relativity > 0.0) || !(sev_relativity > 0.0)) throw ArgumentError("relativities must be positive");
  return freq_relativity * sev_relativity;
}

RelativityTable combined_relativity_table(double gamma0_freq, const BmsStructure& freq, double gamma0_sev,
                                          const BmsStructure& sev) {
  const auto f = relativity_table(gamma0_freq, freq);
  const auto s = relativity_table(gamma0_sev, sev);
  auto at = [](const RelativityTable& t, int l) {
    l = std::clamp(l, t.levels.front().level, t.levels.back().level);
    return t.levels[static_cast<std::size_t>(l - t.levels.front().level)].relativity;
  };
  RelativityTable t;
  const int lo = std::min(f.levels.front().level, s.levels.front().level);
  const int hi = std::max(f.levels.back().level, s.levels.back().level);
  for (int l = lo; l <= hi; ++l) t.levels.push_back({l, combined_cpg_relativity(at(f, l), at(s, l))});
  t.surcharge_per_claim = combined_cpg_relativity(1.0 + f.surcharge_per_claim, 1.0 + s.surcharge_per_claim) - 1.0;
  t.claims_free_discount = 1.0 - (1.0 - f.claims_free_discount) * (1.0 - s.claims_free_discount);
  t.min_relativity = f.min_relativity * s.min_relativity;
  t.max_relativity = f.max_relativity * s.max_relativity;
  return t;
}

std::array<GroupRatio, 6> group_ratio_report(const Portfolio& portfolio, const ContractPredictions& predictions,
                                             std::optional<int> min_calendar_year, int window_years) {
  if (predictions.frequency.size() != portfolio.size() || predictions.loss_cost.size() != portfolio.size())
    throw ArgumentError("predictions are not aligned with the portfolio");
  const auto scope = compute_scope(portfolio, window_years);
  std::array<GroupSums, 6> groups;
  GroupSums all;
  for (std::size_t i = 0; i < portfolio.size(); ++i) {
    const auto& c = portfolio.contracts()[i];
    if (min_calendar_year && c.calendar_year < *min_calendar_year) continue;
    const auto type = classify_insured_type(scope[i], c.contract_index - 1);
    const double y = portfolio.loss_of(i);
    groups[static_cast<std::size_t>(type)].add(c.exposure, c.claim_count, y, predictions.frequency[i],
                                               predictions.loss_cost[i]);
    all.add(c.exposure, c.claim_count, y, predictions.frequency[i], predictions.loss_cost[i]);
  }
  const double freq = ratio(all.claims, all.exposure), sev = ratio(all.loss, all.claims),
               loss = ratio(all.loss, all.exposure);
  const double pfreq = ratio(all.predicted_claims, all.exposure),
               psev = ratio(all.predicted_loss, all.predicted_claims),
               ploss = ratio(all.predicted_loss, all.exposure);
  std::array<GroupRatio, 6> out;
  for (std::size_t g = 0; g < 6; ++g) {
    const auto& s = groups[g];
    auto& r = out[g];
    r.type = static_cast<InsuredType>(g);
    r.contracts = s.contracts;
    r.observed_frequency = ratio(ratio(s.claims, s.exposure), freq);
    r.observed_severity = ratio(ratio(s.loss, s.claims), sev);
    r.observed_loss_cost = ratio(ratio(s.loss, s.exposure), loss);
    r.predicted_frequency = ratio(ratio(s.predicted_claims, s.exposure), pfreq);
    r.predicted_severity = ratio(ratio(s.predicted_loss, s.predicted_claims), psev);
    r.predicted_loss_cost = ratio(ratio(s.predicted_loss, s.exposure), ploss);
  }
  return out;
}

double off_balance_factor(std::span<const double> predicted, std::span<const double> observed) {
  if (predicted.size() != observed.size()) throw ArgumentError("predicted and observed differ in length");
  double p = 0.0, o = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    p += predicted[i];
    o += observed[i];
  }
  if (!(p > 0.0)) throw ArgumentError("total prediction must be positive");
  return o / p;
}

std::vector<double> apply_off_balance(std::span<const double> predicted, double factor) {
  std::vector<double> out(predicted.begin(), predicted.end());
  for (double& v : out) v *= factor;
  return out;
}

double aic(double loglik, int n_params) { return -2.0 * loglik + 2.0 * n_params; }

double bic(double loglik, int n_params, std::size_t n_obs) {
  if (n_obs == 0) throw ArgumentError("BIC needs at least one observation");
  return -2.0 * loglik + n_params * std::log(static_cast<double>(n_obs));
}

ModelReport make_report(std::string model, std::string family, double loglik, int n_params, std::size_t n_obs) {
  ModelReport r;
  r.model = std::move(model);
  r.family = std::move(family);
  r.loglik = loglik;
  r.n_params = n_params;
  r.n_obs = n_obs;
  r.aic = aic(loglik, n_params);
  r.bic = bic(loglik, n_params, n_obs);
  return r;
}

nlohmann::json to_json(const RelativityTable& table) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : table.levels) levels.push_back({{"level", l.level}, {"relativity", l.relativity}});
  return {{"surcharge_per_claim", table.surcharge_per_claim},
          {"claims_free_discount", table.claims_free_discount},
          {"discount_sign", "positive = premium decrease"},
          {"min_relativity", table.min_relativity},
          {"max_relativity", table.max_relativity},
          {"levels", levels}};
}

nlohmann::json to_json(const ModelReport& report) {
  nlohmann::json j{{"model", report.model},   {"family", report.family}, {"n_params", report.n_params},
                   {"n_obs", report.n_obs},   {"loglik", report.loglik}, {"aic", report.aic},
                   {"bic", report.bic},       {"notes", report.notes}};
  j["sl_score"] = report.sl_score ? number_or_null(*report.sl_score) : nlohmann::json(nullptr);
  j["off_balance_factor"] = report.off_balance ? number_or_null(*report.off_balance) : nlohmann::json(nullptr);
  if (report.relativities) j["relativities"] = to_json(*report.relativities);
  if (report.group_ratios) {
    nlohmann::json g = nlohmann::json::array();
    for (const auto& r : *report.group_ratios)
      g.push_back({{"type", std::string(1, to_char(r.type))},
                   {"contracts", r.contracts},
                   {"observed_frequency_ratio", number_or_null(r.observed_frequency)},
                   {"observed_severity_ratio", number_or_null(r.observed_severity)},
                   {"observed_loss_cost_ratio", number_or_null(r.observed_loss_cost)},
                   {"predicted_frequency_ratio", number_or_null(r.predicted_frequency)},
                   {"predicted_severity_ratio", number_or_null(r.predicted_severity)},
                   {"predicted_loss_cost_ratio", number_or_null(r.predicted_loss_cost)}});
    j["group_ratios"] = g;
  }
  return j;
}

std::string relativity_csv(const RelativityTable& table) {
  std::ostringstream out;
  out << "level,relativity\n";
  for (const auto& l : table.levels) out << l.level << ',' << format_double(l.relativity) << '\n';
  return out.str();
}

std::string group_ratio_csv(const std::array<GroupRatio, 6>& groups) {
  std::ostringstream out;
  out << "type,contracts,observed_frequency_ratio,observed_severity_ratio,observed_loss_cost_ratio,"
         "predicted_frequency_ratio,predicted_severity_ratio,predicted_loss_cost_ratio\n";
  auto cell = [](double v) { return std::isfinite(v) ? format_double(v) : std::string("NA"); };
  for (const auto& r : groups)
    out << to_char(r.type) << ',' << r.contracts << ',' << cell(r.observed_frequency) << ','
        << cell(r.observed_severity) << ',' << cell(r.observed_loss_cost) << ',' << cell(r.predicted_frequency)
        << ',' << cell(r.predicted_severity) << ',' << cell(r.predicted_loss_cost) << '\n';
  return out.str();
}

}  // namespace exprate
