#include "exprate/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/version.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "exprate/errors.hpp"
#include "exprate/evaluate.hpp"
#include "exprate/model_io.hpp"
#include "exprate/util.hpp"

#ifndef EXPRATE_VERSION
#define EXPRATE_VERSION "0.0.0"
#endif

namespace exprate::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kExitCodes =
    "Exit status:\n"
    "  0  success\n"
    "  1  I/O or unclassified failure\n"
    "  2  usage error (unknown flag, missing or malformed argument)\n"
    "  3  malformed input file\n"
    "  4  inconsistent records or schema mismatch\n"
    "  5  fit did not converge or diverged\n"
    "  6  invalid argument value\n"
    "  7  cross-validation folds cannot be formed\n";

/// Reads --config files: top-level keys set global options, an object named
/// after a subcommand sets that subcommand's options.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config values must be scalars or arrays of scalars");
  }

  static void collect(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto sub = parents;
        sub.push_back(key);
        collect(value, sub, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      std::replace(item.name.begin(), item.name.end(), '_', '-');
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

/// Resolved value of every option of a subcommand, given or defaulted.
json effective_config(const CLI::App* app) {
  json cfg = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_name() == "--help" || opt->get_lnames().empty()) continue;
    std::string key = opt->get_lnames().front();
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "config") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      cfg[key] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      cfg[key] = opt->get_default_str();
    }
  }
  return cfg;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config, std::uint64_t seed,
                    const std::vector<std::string>& outputs) {
  // where the outputs go does not change them
  json hashed = config;
  hashed.erase("out");
  json m{{"tool", "exprate"},
         {"command", command},
         {"config", config},
         {"config_hash", hex(fnv1a64(hashed.dump()))},
         {"seed", seed},
         {"outputs", outputs},
         {"versions",
          {{"exprate", EXPRATE_VERSION},
           {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                         std::to_string(EIGEN_MINOR_VERSION)},
           {"boost", BOOST_LIB_VERSION},
           {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                 std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                 std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
           {"cli11", CLI11_VERSION}}}};
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

Portfolio load(const std::string& contracts, const std::string& claims) { return load_portfolio(contracts, claims); }

/// Accepts the loss-cost aliases of the run configuration.
Target target_of(const std::string& text) {
  if (text == "loss_cost_tweedie") return Target::loss_cost;
  return parse_target(text);
}

std::string family_of(const ExperienceModel& m) {
  switch (m.target) {
    case Target::frequency: return "poisson";
    case Target::severity: return "gamma";
    case Target::loss_cost: return "tweedie";
  }
  return "";
}

std::optional<RelativityTable> relativities_of(const ExperienceModel& m) {
  if (m.kind == ExperienceKind::bms) return relativity_table(m.gamma0(), m.structure, m.window_years);
  if (m.kind == ExperienceKind::kappa_n) {
    // nearest integer jump; the table is descriptive only
    const int psi = std::max(1, static_cast<int>(std::lround(m.psi())));
    return relativity_table(m.gamma0(), BmsStructure{psi, std::nullopt, std::nullopt, 100}, m.window_years);
  }
  return std::nullopt;
}

ModelReport report_of(const ExperienceModel& m) {
  auto r = make_report(to_string(m.kind), family_of(m), m.loglik, m.n_params, m.n_obs);
  r.relativities = relativities_of(m);
  r.notes = m.warnings;
  if (m.kind == ExperienceKind::bms) r.notes.push_back("n_params counts psi, l_min and l_max as estimated");
  if (m.kind == ExperienceKind::kappa_n)
    r.notes.push_back("relativities use the nearest integer jump to gamma1/gamma0 and an open upper range");
  return r;
}

std::vector<std::string> split_list(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& r : raw) {
    std::string item;
    std::istringstream s(r);
    while (std::getline(s, item, ','))
      if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string out, spec;
  std::optional<std::uint64_t> seed;
  std::optional<int> policies, years;
  std::optional<double> base_frequency, base_severity, frailty;
};

int do_simulate(const SimulateArgs& a, const CLI::App* app, std::ostream& out) {
  SimSpec spec = a.spec.empty() ? SimSpec::defaults() : simspec_from_json(read_json_file(a.spec));
  if (a.seed) spec.seed = *a.seed;
  if (a.policies) spec.n_policies = *a.policies;
  if (a.years) spec.years = *a.years;
  if (a.base_frequency) spec.base_frequency = *a.base_frequency;
  if (a.base_severity) spec.base_severity = *a.base_severity;
  if (a.frailty) spec.frailty_variance = *a.frailty;
  const auto sim = simulate_portfolio(spec);
  const fs::path dir(a.out);
  save_simulation(sim, dir);
  write_text_file(dir / "spec.json", to_json(spec).dump(2) + "\n");
  auto cfg = effective_config(app);
  cfg["spec"] = to_json(spec);
  write_manifest(dir, "simulate", cfg, spec.seed, {"contracts.csv", "claims.csv", "truth.csv", "spec.json"});
  const auto d = describe(sim.portfolio);
  out << "policies=" << d.policies << " contracts=" << d.contracts << " claims=" << d.claims
      << " frequency=" << format_double(d.claim_frequency) << " severity=" << format_double(d.mean_severity) << "\n";
  return kOk;
}

// ---------------------------------------------------------------- split

struct SplitArgs {
  std::string contracts, claims, out;
  double train_fraction = 0.75;
  std::uint64_t seed = 1;
};

int do_split(const SplitArgs& a, const CLI::App* app, std::ostream& out) {
  const auto p = load(a.contracts, a.claims);
  const auto s = split_train_test(p, a.train_fraction, a.seed);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  save_portfolio(s.train, dir / "train_contracts.csv", dir / "train_claims.csv");
  save_portfolio(s.test, dir / "test_contracts.csv", dir / "test_claims.csv");
  write_manifest(dir, "split", effective_config(app), a.seed,
                 {"train_contracts.csv", "train_claims.csv", "test_contracts.csv", "test_claims.csv"});
  for (const auto* side : {&s.train_stats, &s.test_stats})
    out << (side == &s.train_stats ? "train" : "test") << " policies=" << side->policies
        << " contracts=" << side->contracts << " frequency=" << format_double(side->claim_frequency)
        << " severity=" << format_double(side->mean_severity) << "\n";
  return kOk;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string contracts, claims, out;
  std::string target = "frequency";
  std::string model = "bms";
  std::vector<std::string> covariates;
  bool select = false;
  bool one_se = false;
  std::vector<double> alpha_grid{0.0, 0.25, 0.5, 0.75, 1.0};
  int n_lambda = 30;
  int folds = 5;
  std::vector<int> psi{1, 2, 3, 4, 5, 6};
  std::vector<int> l_min{90, 91, 92, 93, 94, 95, 96, 97, 98, 99, 100};
  std::vector<int> l_max{100, 101, 102, 103, 104, 105, 106, 107, 108, 109, 110};
  std::optional<double> tweedie_p;
  int window = kDefaultWindowYears;
  std::optional<int> min_year;
  std::uint64_t seed = 1;
};

ExperienceModel fit_one(const Portfolio& p, Target target, ExperienceKind kind, const FitArgs& a,
                        const ModelOptions& opts, const fs::path& dir, std::vector<std::string>& outputs) {
  std::vector<std::string> cov;
  const std::string tag = to_string(target);
  if (a.select) {
    const auto sel = select_covariates(p, target, a.alpha_grid, a.n_lambda, a.folds, a.seed, a.one_se, opts);
    cov = sel.covariates;
    write_text_file(dir / ("cv_" + tag + ".csv"), cv_table_csv(sel.cv.table));
    outputs.push_back("cv_" + tag + ".csv");
  } else {
    const auto listed = split_list(a.covariates);
    cov = resolve_covariates(p, listed.empty() ? p.covariate_names() : listed);
  }
  ExperienceModel m;
  switch (kind) {
    case ExperienceKind::standard: m = fit_standard(p, target, cov, opts); break;
    case ExperienceKind::kappa_n: m = fit_kappa_n(p, target, cov, opts); break;
    case ExperienceKind::bms: m = fit_bms(p, target, cov, BmsGrid{a.psi, a.l_min, a.l_max}, opts); break;
  }
  save_model(m, dir / ("model_" + tag + ".json"));
  write_text_file(dir / ("report_" + tag + ".json"), to_json(report_of(m)).dump(2) + "\n");
  outputs.push_back("model_" + tag + ".json");
  outputs.push_back("report_" + tag + ".json");
  if (kind == ExperienceKind::bms) {
    write_text_file(dir / ("profile_" + tag + ".csv"), profile_table_csv(m.profile_table));
    outputs.push_back("profile_" + tag + ".csv");
  }
  return m;
}

int do_fit(const FitArgs& a, const CLI::App* app, std::ostream& out) {
  const auto p = load(a.contracts, a.claims);
  const auto kind = parse_experience(a.model);
  ModelOptions opts;
  opts.window_years = a.window;
  opts.min_calendar_year = a.min_year;
  opts.tweedie_p = a.tweedie_p;
  std::vector<Target> targets;
  if (a.target == "loss_cost_cpg") {
    targets = {Target::frequency, Target::severity};
  } else {
    targets = {target_of(a.target)};
  }
  const fs::path dir(a.out);
  std::vector<std::string> outputs;
  for (Target t : targets) {
    const auto m = fit_one(p, t, kind, a, opts, dir, outputs);
    out << to_string(t) << ' ' << to_string(kind) << " loglik=" << format_double(m.loglik)
        << " n_params=" << m.n_params;
    if (kind == ExperienceKind::bms) out << " structure=" << m.structure.to_string();
    if (kind != ExperienceKind::standard) out << " gamma0=" << format_double(m.gamma0());
    if (m.dglm) out << " p=" << format_double(m.dglm->p);
    out << "\n";
    for (const auto& w : m.warnings) out << "warning: " << w << "\n";
  }
  write_manifest(dir, "fit", effective_config(app), a.seed, outputs);
  return kOk;
}

// ---------------------------------------------------------------- compare

struct CompareArgs {
  std::vector<std::string> fits;
  std::string test_contracts, test_claims, train_contracts, train_claims, out;
};

struct CompareRow {
  std::string model, family;
  int n_params = 0;
  double loglik = 0.0, aic = 0.0, bic = 0.0, sl = 0.0;
};

int do_compare(const CompareArgs& a, const CLI::App* app, std::ostream& out) {
  const auto test = load(a.test_contracts, a.test_claims);
  std::optional<Portfolio> train;
  if (!a.train_contracts.empty()) train = load(a.train_contracts, a.train_claims);
  std::map<std::pair<ExperienceKind, Target>, ExperienceModel> by;
  for (const auto& f : a.fits) {
    auto m = load_model(f);
    const auto key = std::make_pair(m.kind, m.target);
    if (by.count(key)) throw ArgumentError("two fits for " + to_string(m.kind) + "/" + to_string(m.target));
    by.emplace(key, std::move(m));
  }
  std::vector<CompareRow> rows;
  auto add = [&](const std::string& model, const std::string& family, double loglik, int k, std::size_t n, double sl) {
    rows.push_back({model, family, k, loglik, aic(loglik, k), bic(loglik, k, n), sl});
  };
  for (auto kind : {ExperienceKind::standard, ExperienceKind::kappa_n, ExperienceKind::bms}) {
    const auto name = to_string(kind);
    const auto f = by.find({kind, Target::frequency});
    const auto s = by.find({kind, Target::severity});
    const auto y = by.find({kind, Target::loss_cost});
    const bool has_f = f != by.end(), has_s = s != by.end();
    double sl_f = 0.0, sl_s = 0.0;
    if (has_f) {
      sl_f = logarithmic_score(f->second, test);
      add(name, "poisson", f->second.loglik, f->second.n_params, f->second.n_obs, sl_f);
    }
    if (has_s) {
      sl_s = logarithmic_score(s->second, test);
      add(name, "gamma", s->second.loglik, s->second.n_params, s->second.n_obs, sl_s);
    }
    if (has_f && has_s) {
      const int k = f->second.n_params + s->second.n_params;
      if (train) {
        // same (N, Y) representation as the Tweedie rows
        const double tr = cpg_as_tweedie(f->second, s->second, *train).loglik;
        add(name, "cpg", tr, k, f->second.n_obs, -cpg_as_tweedie(f->second, s->second, test).loglik);
      } else {
        add(name, "cpg", f->second.loglik + s->second.loglik, k, f->second.n_obs, sl_f + sl_s);
      }
    }
    if (y != by.end())
      add(name, "tweedie", y->second.loglik, y->second.n_params, y->second.n_obs, logarithmic_score(y->second, test));
    if (kind == ExperienceKind::bms && has_f && has_s && train) {
      const auto cp = fit_tweedie_cp(f->second, s->second, *train);
      add(name, "tweedie_cp", cp.loglik, cp.n_params, cp.n_obs, -model_loglik(cp, test));
    }
  }
  if (rows.empty()) throw ArgumentError("no fits to compare");
  std::ostringstream csv;
  csv << "model,family,n_params,loglik,aic,bic,sl\n";
  for (const auto& r : rows)
    csv << r.model << ',' << r.family << ',' << r.n_params << ',' << format_double(r.loglik) << ','
        << format_double(r.aic) << ',' << format_double(r.bic) << ',' << format_double(r.sl) << '\n';
  const fs::path path(a.out);
  write_text_file(path, csv.str());
  write_manifest(path.has_parent_path() ? path.parent_path() : fs::path("."), "compare", effective_config(app), 0,
                 {path.filename().string()});
  out << csv.str();
  return kOk;
}

// ---------------------------------------------------------------- score

struct ScoreArgs {
  std::vector<std::string> fits;
  std::string contracts, claims, out;
};

int do_score(const ScoreArgs& a, const CLI::App* app, std::ostream& out) {
  const auto test = load(a.contracts, a.claims);
  json results = json::array();
  out << "fit,target,model,sl\n";
  for (const auto& f : a.fits) {
    const auto m = load_model(f);
    const double sl = logarithmic_score(m, test);
    out << f << ',' << to_string(m.target) << ',' << to_string(m.kind) << ',' << format_double(sl) << "\n";
    results.push_back({{"fit", f}, {"target", to_string(m.target)}, {"model", to_string(m.kind)}, {"sl", sl}});
  }
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    write_text_file(dir / "scores.json", results.dump(2) + "\n");
    write_manifest(dir, "score", effective_config(app), 0, {"scores.json"});
  }
  return kOk;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::vector<std::string> fits;
  std::string contracts, claims, trajectories, out;
  std::vector<int> structure;
  int window = kDefaultWindowYears;
};

/// insured,y1,...,yK rows of yearly policy claim counts.
std::vector<std::pair<std::string, std::vector<int>>> read_histories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  std::vector<std::pair<std::string, std::vector<int>>> out;
  std::size_t width = 0, line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (line_no == 1) {
      if (cells.size() < 2 || cells[0] != "insured") throw ParseError(path + ": header must be insured,y1,...", 1);
      width = cells.size();
      continue;
    }
    if (cells.size() != width) throw ParseError(path + ": wrong number of fields", line_no);
    std::vector<int> claims;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      long v = 0;
      if (!parse_int(cells[c], v) || v < 0) throw ParseError(path + ": claim counts must be non-negative integers", line_no);
      claims.push_back(static_cast<int>(v));
    }
    out.emplace_back(std::string(cells[0]), std::move(claims));
  }
  if (out.empty()) throw ParseError(path + ": no histories");
  return out;
}

std::string trajectory_csv(const std::vector<std::pair<std::string, std::vector<int>>>& histories,
                           const BmsStructure& structure, int window) {
  std::ostringstream csv;
  csv << "insured";
  for (std::size_t t = 1; t <= histories.front().second.size(); ++t) csv << ",y" << t;
  csv << "\n";
  for (const auto& [id, claims] : histories) {
    csv << id;
    for (int l : level_trajectory(claims, structure, window)) csv << ',' << l;
    csv << "\n";
  }
  return csv.str();
}

int do_report(const ReportArgs& a, const CLI::App* app, std::ostream& out) {
  const fs::path dir(a.out);
  std::vector<std::string> outputs;
  std::map<Target, ExperienceModel> by;
  for (const auto& f : a.fits) {
    auto m = load_model(f);
    const auto t = m.target;
    if (by.count(t)) throw ArgumentError("two fits for target " + to_string(t));
    by.emplace(t, std::move(m));
  }
  json report = json::object();
  for (const auto& [t, m] : by) {
    auto r = report_of(m);
    if (r.relativities) {
      const auto name = "relativities_" + to_string(t) + ".csv";
      write_text_file(dir / name, relativity_csv(*r.relativities));
      outputs.push_back(name);
    }
    report[to_string(t)] = to_json(r);
  }
  const auto f = by.find(Target::frequency), s = by.find(Target::severity), y = by.find(Target::loss_cost);
  if (f != by.end() && s != by.end() && f->second.kind == ExperienceKind::bms && s->second.kind == ExperienceKind::bms) {
    const auto cpg =
        combined_relativity_table(f->second.gamma0(), f->second.structure, s->second.gamma0(), s->second.structure);
    write_text_file(dir / "relativities_cpg.csv", relativity_csv(cpg));
    outputs.push_back("relativities_cpg.csv");
    report["cpg"] = to_json(cpg);
  }

  if (!a.contracts.empty()) {
    if (f == by.end()) throw ArgumentError("group ratios need a frequency fit");
    const auto p = load(a.contracts, a.claims);
    const auto freq = predict_contracts(f->second, p);
    ContractPredictions pred;
    pred.frequency.assign(freq.data(), freq.data() + freq.size());
    if (y != by.end()) {
      const auto loss = predict_contracts(y->second, p);
      pred.loss_cost.assign(loss.data(), loss.data() + loss.size());
    } else if (s != by.end()) {
      const auto sev = predict_contracts(s->second, p);
      for (std::size_t i = 0; i < p.size(); ++i) pred.loss_cost.push_back(pred.frequency[i] * sev(static_cast<Eigen::Index>(i)));
    } else {
      const double mean_sev = describe(p).mean_severity;
      for (double v : pred.frequency) pred.loss_cost.push_back(v * mean_sev);
    }
    const auto groups = group_ratio_report(p, pred, f->second.min_calendar_year, f->second.window_years);
    write_text_file(dir / "groups.csv", group_ratio_csv(groups));
    outputs.push_back("groups.csv");
    std::vector<double> observed, predicted;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (f->second.min_calendar_year && p.contracts()[i].calendar_year < *f->second.min_calendar_year) continue;
      observed.push_back(p.loss_of(i));
      predicted.push_back(pred.loss_cost[i]);
    }
    report["off_balance_factor"] = off_balance_factor(predicted, observed);
  }

  if (!a.trajectories.empty()) {
    const auto histories = read_histories(a.trajectories);
    std::vector<std::pair<std::string, BmsStructure>> structures;
    if (!a.structure.empty()) {
      if (a.structure.size() != 3) throw ArgumentError("--structure takes psi,l_min,l_max");
      structures.emplace_back("", BmsStructure{a.structure[0], a.structure[1], a.structure[2], 100});
    } else {
      for (const auto& [t, m] : by)
        if (m.kind == ExperienceKind::bms) structures.emplace_back(to_string(t), m.structure);
    }
    if (structures.empty()) throw ArgumentError("--trajectories needs --structure or a BMS fit");
    for (const auto& [tag, st] : structures) {
      st.validate();
      const auto name = tag.empty() ? std::string("trajectories.csv") : "trajectories_" + tag + ".csv";
      write_text_file(dir / name, trajectory_csv(histories, st, a.window));
      outputs.push_back(name);
    }
  }
  if (outputs.empty() && report.empty()) throw ArgumentError("nothing to report: give --fit or --trajectories");
  write_text_file(dir / "report.json", report.dump(2) + "\n");
  outputs.push_back("report.json");
  write_manifest(dir, "report", effective_config(app), 0, outputs);
  for (const auto& o : outputs) out << (dir / o).string() << "\n";
  return kOk;
}

int classify(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e)) return kParse;
  if (dynamic_cast<const ConsistencyError*>(&e) || dynamic_cast<const SchemaError*>(&e)) return kConsistency;
  if (dynamic_cast<const ConvergenceError*>(&e) || dynamic_cast<const DivergenceError*>(&e)) return kConvergence;
  if (dynamic_cast<const ArgumentError*>(&e)) return kArgument;
  if (dynamic_cast<const FoldAssignmentError*>(&e)) return kFolds;
  return kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Experience rating with Kappa-N and bonus-malus scale models", "exprate"};
  app.footer(kExitCodes);
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON run configuration; flags override its values");
  app.set_version_flag("--version", EXPRATE_VERSION);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic portfolio with known parameters");
  sim->add_option("--out", sa.out, "Output directory")->required();
  sim->add_option("--spec", sa.spec, "Simulation spec JSON (defaults otherwise)")->check(CLI::ExistingFile);
  sim->add_option("--seed", sa.seed, "Random seed");
  sim->add_option("--policies", sa.policies, "Number of policies")->check(CLI::PositiveNumber);
  sim->add_option("--years", sa.years, "Number of calendar years")->check(CLI::PositiveNumber);
  sim->add_option("--base-frequency", sa.base_frequency, "Target annual claim frequency");
  sim->add_option("--base-severity", sa.base_severity, "Target mean claim cost");
  sim->add_option("--frailty-variance", sa.frailty, "Variance of the policy frailty (0: none)");

  SplitArgs pa;
  auto* split = app.add_subcommand("split", "Policy-level train/test partition");
  split->add_option("--contracts", pa.contracts, "Contracts CSV")->required()->check(CLI::ExistingFile);
  split->add_option("--claims", pa.claims, "Claims CSV")->required()->check(CLI::ExistingFile);
  split->add_option("--out", pa.out, "Output directory")->required();
  split->add_option("--train-fraction", pa.train_fraction, "Share of policies in the training side")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  split->add_option("--seed", pa.seed, "Random seed")->capture_default_str();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit a standard, Kappa-N or BMS model");
  fit->add_option("--contracts", fa.contracts, "Contracts CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--claims", fa.claims, "Claims CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", fa.out, "Output directory")->required();
  fit->add_option("--target", fa.target, "frequency, severity, loss_cost (Tweedie) or loss_cost_cpg")
      ->capture_default_str()
      ->check(CLI::IsMember({"frequency", "severity", "loss_cost", "loss_cost_tweedie", "loss_cost_cpg"}));
  fit->add_option("--model", fa.model, "standard, kappa_n or bms")
      ->capture_default_str()
      ->check(CLI::IsMember({"standard", "kappa_n", "bms"}));
  fit->add_option("--covariates", fa.covariates, "Comma-separated covariates (default: all)")->delimiter(',');
  fit->add_flag("--select", fa.select, "Choose covariates by cross-validated elastic-net at the Kappa-N stage");
  fit->add_flag("--one-se", fa.one_se, "Use the one-standard-error point instead of the minimum");
  fit->add_option("--alpha-grid", fa.alpha_grid, "Elastic-net mixing values")->delimiter(',')->capture_default_str();
  fit->add_option("--n-lambda", fa.n_lambda, "Points on each lambda path")->capture_default_str();
  fit->add_option("--folds", fa.folds, "Cross-validation folds")->capture_default_str();
  fit->add_option("--psi", fa.psi, "Jump parameter grid")->delimiter(',')->capture_default_str();
  fit->add_option("--l-min", fa.l_min, "Lower bound grid")->delimiter(',')->capture_default_str();
  fit->add_option("--l-max", fa.l_max, "Upper bound grid")->delimiter(',')->capture_default_str();
  fit->add_option("--tweedie-p", fa.tweedie_p, "Tweedie power (chosen by profile likelihood if absent)");
  fit->add_option("--window", fa.window, "Experience window in years")->capture_default_str()->check(CLI::PositiveNumber);
  fit->add_option("--min-year", fa.min_year, "First calendar year fitted; earlier years only supply history");
  fit->add_option("--seed", fa.seed, "Seed for cross-validation folds")->capture_default_str();

  CompareArgs ca;
  auto* cmp = app.add_subcommand("compare", "Tabulate fits: model,family,n_params,loglik,aic,bic,sl");
  cmp->add_option("--fit", ca.fits, "Model JSON written by fit (repeatable)")->required()->check(CLI::ExistingFile);
  cmp->add_option("--test-contracts", ca.test_contracts, "Test contracts CSV")->required()->check(CLI::ExistingFile);
  cmp->add_option("--test-claims", ca.test_claims, "Test claims CSV")->required()->check(CLI::ExistingFile);
  auto* trc = cmp->add_option("--train-contracts", ca.train_contracts, "Training contracts (CPG rows in the (N,Y) form, adds tweedie_cp)")
                  ->check(CLI::ExistingFile);
  auto* trl = cmp->add_option("--train-claims", ca.train_claims, "Training claims")->check(CLI::ExistingFile);
  trc->needs(trl);
  trl->needs(trc);
  cmp->add_option("--out", ca.out, "Output CSV")->required();

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Logarithmic score of fits on a test portfolio");
  score->add_option("--fit", sc.fits, "Model JSON (repeatable)")->required()->check(CLI::ExistingFile);
  score->add_option("--contracts", sc.contracts, "Test contracts CSV")->required()->check(CLI::ExistingFile);
  score->add_option("--claims", sc.claims, "Test claims CSV")->required()->check(CLI::ExistingFile);
  score->add_option("--out", sc.out, "Directory for scores.json");

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Relativity, group-ratio and level-trajectory tables");
  rep->add_option("--fit", ra.fits, "Model JSON (repeatable, one per target)")->check(CLI::ExistingFile);
  auto* rc = rep->add_option("--contracts", ra.contracts, "Portfolio for group ratios")->check(CLI::ExistingFile);
  auto* rl = rep->add_option("--claims", ra.claims, "Claims for group ratios")->check(CLI::ExistingFile);
  rc->needs(rl);
  rl->needs(rc);
  rep->add_option("--trajectories", ra.trajectories, "CSV of yearly claim histories: insured,y1,...")
      ->check(CLI::ExistingFile);
  rep->add_option("--structure", ra.structure, "psi,l_min,l_max for the trajectories")->delimiter(',');
  rep->add_option("--window", ra.window, "Experience window in years")->capture_default_str()->check(CLI::PositiveNumber);
  rep->add_option("--out", ra.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*sim) return do_simulate(sa, sim, out);
    if (*split) return do_split(pa, split, out);
    if (*fit) return do_fit(fa, fit, out);
    if (*cmp) return do_compare(ca, cmp, out);
    if (*score) return do_score(sc, score, out);
    if (*rep) return do_report(ra, rep, out);
  } catch (const std::exception& e) {
    err << "exprate: " << e.what() << "\n";
    return classify(e);
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace exprate::cli
