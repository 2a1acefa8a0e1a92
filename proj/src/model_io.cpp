#include "exprate/model_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "exprate/errors.hpp"

namespace exprate {

namespace {

using nlohmann::json;

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Wraps nlohmann errors in SchemaError with the offending key.
template <class F>
auto field(const json& j, const char* key, F&& read) {
  if (!j.contains(key)) throw SchemaError(std::string("missing key '") + key + "'");
  try {
    return read(j.at(key));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <class T>
T get(const json& j, const char* key) {
  return field(j, key, [](const json& v) { return v.get<T>(); });
}

const char* kind_name(CovariateGenerator::Kind k) {
  switch (k) {
    case CovariateGenerator::Kind::bernoulli: return "bernoulli";
    case CovariateGenerator::Kind::normal: return "normal";
    case CovariateGenerator::Kind::age: return "age";
  }
  return "normal";
}

CovariateGenerator::Kind parse_kind(const std::string& s) {
  if (s == "bernoulli") return CovariateGenerator::Kind::bernoulli;
  if (s == "normal") return CovariateGenerator::Kind::normal;
  if (s == "age") return CovariateGenerator::Kind::age;
  throw SchemaError("unknown covariate kind '" + s + "' (bernoulli, normal, age)");
}

}  // namespace

json to_json(const BmsStructure& s) {
  json j{{"psi", s.psi}, {"l_start", s.l_start}};
  j["l_min"] = s.l_min ? json(*s.l_min) : json(nullptr);
  j["l_max"] = s.l_max ? json(*s.l_max) : json(nullptr);
  return j;
}

BmsStructure structure_from_json(const json& j) {
  BmsStructure s;
  s.psi = get<int>(j, "psi");
  if (j.contains("l_min") && !j["l_min"].is_null()) s.l_min = get<int>(j, "l_min");
  if (j.contains("l_max") && !j["l_max"].is_null()) s.l_max = get<int>(j, "l_max");
  if (j.contains("l_start")) s.l_start = get<int>(j, "l_start");
  s.validate();
  return s;
}

json to_json(const ExperienceModel& m) {
  json j{{"target", to_string(m.target)},
         {"model", to_string(m.kind)},
         {"structure", to_json(m.structure)},
         {"window_years", m.window_years},
         {"covariates", m.covariates},
         {"loglik", m.loglik},
         {"n_params", m.n_params},
         {"n_obs", m.n_obs},
         {"warnings", m.warnings}};
  j["min_calendar_year"] = m.min_calendar_year ? json(*m.min_calendar_year) : json(nullptr);
  if (m.glm) {
    const auto& g = *m.glm;
    j["glm"] = {{"family", to_string(g.family)}, {"beta", vec(g.beta)},     {"labels", g.labels},
                {"loglik", g.loglik},            {"n_params", g.n_params}, {"n_obs", g.n_obs},
                {"converged", g.converged},      {"iterations", g.iterations}};
    j["glm"]["shape"] = g.shape ? json(*g.shape) : json(nullptr);
  }
  if (m.dglm) {
    const auto& d = *m.dglm;
    j["dglm"] = {{"beta_mean", vec(d.beta_mean)}, {"beta_disp", vec(d.beta_disp)}, {"labels_mean", d.labels_mean},
                 {"labels_disp", d.labels_disp},  {"p", d.p},                      {"loglik", d.loglik},
                 {"n_params", d.n_params},        {"n_obs", d.n_obs},              {"converged", d.converged},
                 {"iterations", d.iterations}};
  }
  json table = json::array();
  for (const auto& e : m.profile_table) {
    json row{{"structure", to_json(e.structure)}, {"n_params", e.n_params}};
    row["loglik"] = e.error.empty() ? json(e.loglik) : json(nullptr);
    if (!e.error.empty()) row["error"] = e.error;
    table.push_back(row);
  }
  j["profile_table"] = table;
  return j;
}

ExperienceModel model_from_json(const json& j) {
  ExperienceModel m;
  m.target = parse_target(get<std::string>(j, "target"));
  m.kind = parse_experience(get<std::string>(j, "model"));
  m.structure = field(j, "structure", structure_from_json);
  m.window_years = get<int>(j, "window_years");
  if (j.contains("min_calendar_year") && !j["min_calendar_year"].is_null())
    m.min_calendar_year = get<int>(j, "min_calendar_year");
  m.covariates = get<std::vector<std::string>>(j, "covariates");
  m.loglik = get<double>(j, "loglik");
  m.n_params = get<int>(j, "n_params");
  m.n_obs = get<std::size_t>(j, "n_obs");
  if (j.contains("warnings")) m.warnings = get<std::vector<std::string>>(j, "warnings");
  if (j.contains("glm")) {
    const auto& g = j["glm"];
    GlmFit f;
    const auto family = get<std::string>(g, "family");
    if (family != "poisson" && family != "gamma") throw SchemaError("unknown GLM family '" + family + "'");
    f.family = family == "poisson" ? Family::poisson : Family::gamma;
    f.beta = field(g, "beta", [](const json& v) { return vec(v); });
    f.labels = get<std::vector<std::string>>(g, "labels");
    if (g.contains("shape") && !g["shape"].is_null()) f.shape = get<double>(g, "shape");
    f.loglik = get<double>(g, "loglik");
    f.n_params = get<int>(g, "n_params");
    f.n_obs = get<std::size_t>(g, "n_obs");
    f.converged = get<bool>(g, "converged");
    f.iterations = get<int>(g, "iterations");
    if (f.labels.size() != static_cast<std::size_t>(f.beta.size())) throw SchemaError("glm beta and labels differ in length");
    if (f.family == Family::gamma && !f.shape) throw SchemaError("gamma fit without a shape");
    m.glm = std::move(f);
  }
  if (j.contains("dglm")) {
    const auto& g = j["dglm"];
    DglmFit f;
    f.beta_mean = field(g, "beta_mean", [](const json& v) { return vec(v); });
    f.beta_disp = field(g, "beta_disp", [](const json& v) { return vec(v); });
    f.labels_mean = get<std::vector<std::string>>(g, "labels_mean");
    f.labels_disp = get<std::vector<std::string>>(g, "labels_disp");
    f.p = get<double>(g, "p");
    f.loglik = get<double>(g, "loglik");
    f.n_params = get<int>(g, "n_params");
    f.n_obs = get<std::size_t>(g, "n_obs");
    f.converged = get<bool>(g, "converged");
    f.iterations = get<int>(g, "iterations");
    if (f.labels_mean.size() != static_cast<std::size_t>(f.beta_mean.size()) ||
        f.labels_disp.size() != static_cast<std::size_t>(f.beta_disp.size()))
      throw SchemaError("dglm coefficients and labels differ in length");
    m.dglm = std::move(f);
  }
  if ((m.target == Target::loss_cost) != m.dglm.has_value() || (m.target != Target::loss_cost) != m.glm.has_value())
    throw SchemaError("model body does not match its target");
  if (j.contains("profile_table"))
    for (const auto& row : j["profile_table"]) {
      ProfileEntry e;
      e.structure = field(row, "structure", structure_from_json);
      e.n_params = get<int>(row, "n_params");
      if (row.contains("error")) e.error = get<std::string>(row, "error");
      if (e.error.empty()) e.loglik = get<double>(row, "loglik");
      m.profile_table.push_back(std::move(e));
    }
  return m;
}

void save_model(const ExperienceModel& model, const std::filesystem::path& path) {
  write_text_file(path, to_json(model).dump(2) + "\n");
}

ExperienceModel load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

json to_json(const SimSpec& s) {
  json cov = json::array();
  for (const auto& g : s.covariates) cov.push_back({{"name", g.name}, {"kind", kind_name(g.kind)}, {"a", g.a}, {"b", g.b}});
  return {{"n_policies", s.n_policies},
          {"years", s.years},
          {"first_year", s.first_year},
          {"vehicle_count_probs", s.vehicle_count_probs},
          {"covariates", cov},
          {"true_beta_freq", s.true_beta_freq},
          {"true_beta_sev", s.true_beta_sev},
          {"freq_structure", to_json(s.freq.structure)},
          {"freq_gamma0", s.freq.gamma0},
          {"sev_structure", to_json(s.sev.structure)},
          {"sev_gamma0", s.sev.gamma0},
          {"gamma_shape", s.gamma_shape},
          {"base_frequency", s.base_frequency},
          {"base_severity", s.base_severity},
          {"lapse_rate", s.lapse_rate},
          {"replacement_rate", s.replacement_rate},
          {"addition_rate", s.addition_rate},
          {"initial_share", s.initial_share},
          {"partial_exposure_share", s.partial_exposure_share},
          {"frailty_variance", s.frailty_variance},
          {"seed", s.seed}};
}

SimSpec simspec_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("simulation spec must be a JSON object");
  SimSpec s = SimSpec::defaults();
  const std::set<std::string> known{"n_policies",     "years",         "first_year",    "vehicle_count_probs",
                                    "covariates",     "true_beta_freq", "true_beta_sev", "freq_structure",
                                    "freq_gamma0",    "sev_structure", "sev_gamma0",    "gamma_shape",
                                    "base_frequency", "base_severity", "lapse_rate",    "replacement_rate",
                                    "addition_rate",  "initial_share", "partial_exposure_share",
                                    "frailty_variance", "seed"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw SchemaError("unknown simulation key '" + k + "'");
  auto opt = [&](const char* key, auto& target) {
    if (j.contains(key)) target = get<std::decay_t<decltype(target)>>(j, key);
  };
  opt("n_policies", s.n_policies);
  opt("years", s.years);
  opt("first_year", s.first_year);
  opt("vehicle_count_probs", s.vehicle_count_probs);
  if (j.contains("covariates")) {
    s.covariates.clear();
    for (const auto& g : j["covariates"]) {
      CovariateGenerator c;
      c.name = get<std::string>(g, "name");
      c.kind = parse_kind(get<std::string>(g, "kind"));
      if (g.contains("a")) c.a = get<double>(g, "a");
      if (g.contains("b")) c.b = get<double>(g, "b");
      s.covariates.push_back(std::move(c));
    }
  }
  opt("true_beta_freq", s.true_beta_freq);
  opt("true_beta_sev", s.true_beta_sev);
  if (j.contains("freq_structure")) s.freq.structure = field(j, "freq_structure", structure_from_json);
  if (j.contains("sev_structure")) s.sev.structure = field(j, "sev_structure", structure_from_json);
  opt("freq_gamma0", s.freq.gamma0);
  opt("sev_gamma0", s.sev.gamma0);
  opt("gamma_shape", s.gamma_shape);
  opt("base_frequency", s.base_frequency);
  opt("base_severity", s.base_severity);
  opt("lapse_rate", s.lapse_rate);
  opt("replacement_rate", s.replacement_rate);
  opt("addition_rate", s.addition_rate);
  opt("initial_share", s.initial_share);
  opt("partial_exposure_share", s.partial_exposure_share);
  opt("frailty_variance", s.frailty_variance);
  opt("seed", s.seed);
  return s;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace exprate
