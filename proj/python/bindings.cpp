#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "exprate/bms_search.hpp"
#include "exprate/evaluate.hpp"
#include "exprate/model_io.hpp"
#include "exprate/simulator.hpp"

namespace py = pybind11;
using namespace exprate;

namespace {

ModelOptions options(std::optional<int> min_calendar_year, int window_years, std::optional<double> tweedie_p) {
  ModelOptions o;
  o.min_calendar_year = min_calendar_year;
  o.window_years = window_years;
  o.tweedie_p = tweedie_p;
  return o;
}

py::dict table_dict(const RelativityTable& t) {
  py::dict d;
  std::vector<int> levels;
  std::vector<double> rel;
  for (const auto& l : t.levels) {
    levels.push_back(l.level);
    rel.push_back(l.relativity);
  }
  d["levels"] = levels;
  d["relativities"] = rel;
  d["surcharge_per_claim"] = t.surcharge_per_claim;
  d["claims_free_discount"] = t.claims_free_discount;
  d["min_relativity"] = t.min_relativity;
  d["max_relativity"] = t.max_relativity;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Experience-rating models: Kappa-N and bonus-malus scales under CPG and Tweedie";

  auto base = py::register_exception<Error>(m, "ExprateError");
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ConsistencyError>(m, "ConsistencyError", base.ptr());
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<FoldAssignmentError>(m, "FoldAssignmentError", base.ptr());

  py::class_<BmsStructure>(m, "BmsStructure")
      .def(py::init([](int psi, std::optional<int> l_min, std::optional<int> l_max, int l_start) {
             BmsStructure s{psi, l_min, l_max, l_start};
             s.validate();
             return s;
           }),
           py::arg("psi"), py::arg("l_min") = py::none(), py::arg("l_max") = py::none(), py::arg("l_start") = 100)
      .def_readonly("psi", &BmsStructure::psi)
      .def_readonly("l_min", &BmsStructure::l_min)
      .def_readonly("l_max", &BmsStructure::l_max)
      .def_readonly("l_start", &BmsStructure::l_start)
      .def("__eq__", [](const BmsStructure& a, const BmsStructure& b) { return a == b; })
      .def("__repr__", [](const BmsStructure& s) { return "BmsStructure(" + s.to_string() + ")"; });

  py::class_<Portfolio>(m, "Portfolio")
      .def("__len__", &Portfolio::size)
      .def_property_readonly("covariate_names", &Portfolio::covariate_names)
      .def_property_readonly("n_claims", [](const Portfolio& p) { return p.claims().size(); })
      .def_property_readonly("claim_counts",
                             [](const Portfolio& p) {
                               std::vector<int> n;
                               for (const auto& c : p.contracts()) n.push_back(c.claim_count);
                               return n;
                             })
      .def_property_readonly("exposures", [](const Portfolio& p) {
        std::vector<double> e;
        for (const auto& c : p.contracts()) e.push_back(c.exposure);
        return e;
      });

  m.def("load_portfolio", &load_portfolio, py::arg("contracts"), py::arg("claims"));
  m.def("save_portfolio", &save_portfolio, py::arg("portfolio"), py::arg("contracts"), py::arg("claims"));
  m.def(
      "split_train_test",
      [](const Portfolio& p, double fraction, std::uint64_t seed) {
        auto s = split_train_test(p, fraction, seed);
        return py::make_tuple(std::move(s.train), std::move(s.test));
      },
      py::arg("portfolio"), py::arg("train_fraction") = 0.75, py::arg("seed") = 1);

  m.def(
      "level_trajectory",
      [](const std::vector<int>& claims, const BmsStructure& s, int window) { return level_trajectory(claims, s, window); },
      py::arg("yearly_claims"), py::arg("structure"), py::arg("window_years") = kDefaultWindowYears);

  // JSON text crosses the boundary; the Python wrapper handles dicts
  m.def(
      "_simulate",
      [](const std::string& spec_json) {
        const auto spec = simspec_from_json(nlohmann::json::parse(spec_json));
        auto sim = simulate_portfolio(spec);
        py::dict truth;
        std::vector<int> lf, ls;
        std::vector<double> mf, ms;
        for (const auto& t : sim.truth) {
          lf.push_back(t.level_freq);
          ls.push_back(t.level_sev);
          mf.push_back(t.mean_freq);
          ms.push_back(t.mean_sev);
        }
        truth["level_freq"] = lf;
        truth["level_sev"] = ls;
        truth["mean_freq"] = mf;
        truth["mean_sev"] = ms;
        return py::make_tuple(std::move(sim.portfolio), truth, to_json(spec).dump());
      },
      py::arg("spec_json"));

  py::class_<ExperienceModel>(m, "ExperienceModel")
      .def_property_readonly("target", [](const ExperienceModel& e) { return to_string(e.target); })
      .def_property_readonly("kind", [](const ExperienceModel& e) { return to_string(e.kind); })
      .def_readonly("structure", &ExperienceModel::structure)
      .def_readonly("covariates", &ExperienceModel::covariates)
      .def_readonly("loglik", &ExperienceModel::loglik)
      .def_readonly("n_params", &ExperienceModel::n_params)
      .def_readonly("n_obs", &ExperienceModel::n_obs)
      .def_readonly("warnings", &ExperienceModel::warnings)
      .def_property_readonly("beta", &ExperienceModel::beta)
      .def_property_readonly("labels", &ExperienceModel::labels)
      .def_property_readonly("gamma0", &ExperienceModel::gamma0)
      .def_property_readonly("gamma1", &ExperienceModel::gamma1)
      .def_property_readonly("psi", &ExperienceModel::psi)
      .def_property_readonly("tweedie_p",
                             [](const ExperienceModel& e) -> std::optional<double> {
                               if (e.dglm) return e.dglm->p;
                               return std::nullopt;
                             })
      .def_property_readonly("profile_table",
                             [](const ExperienceModel& e) {
                               py::list rows;
                               for (const auto& r : e.profile_table)
                                 rows.append(py::make_tuple(r.structure, r.error.empty() ? py::object(py::float_(r.loglik))
                                                                                         : py::object(py::none())));
                               return rows;
                             })
      .def("to_json", [](const ExperienceModel& e) { return to_json(e).dump(); })
      .def_static("from_json", [](const std::string& s) { return model_from_json(nlohmann::json::parse(s)); })
      .def("__repr__", [](const ExperienceModel& e) {
        return "ExperienceModel(" + to_string(e.kind) + ", " + to_string(e.target) + ", loglik=" +
               std::to_string(e.loglik) + ")";
      });

  m.def(
      "fit_standard",
      [](const Portfolio& p, const std::string& target, const std::vector<std::string>& covariates,
         std::optional<int> min_year, int window, std::optional<double> tweedie_p) {
        return fit_standard(p, parse_target(target), covariates, options(min_year, window, tweedie_p));
      },
      py::arg("portfolio"), py::arg("target"), py::arg("covariates"), py::arg("min_calendar_year") = py::none(),
      py::arg("window_years") = kDefaultWindowYears, py::arg("tweedie_p") = py::none());
  m.def(
      "fit_kappa_n",
      [](const Portfolio& p, const std::string& target, const std::vector<std::string>& covariates,
         std::optional<int> min_year, int window, std::optional<double> tweedie_p) {
        return fit_kappa_n(p, parse_target(target), covariates, options(min_year, window, tweedie_p));
      },
      py::arg("portfolio"), py::arg("target"), py::arg("covariates"), py::arg("min_calendar_year") = py::none(),
      py::arg("window_years") = kDefaultWindowYears, py::arg("tweedie_p") = py::none());
  m.def(
      "fit_bms_structure",
      [](const Portfolio& p, const std::string& target, const std::vector<std::string>& covariates,
         const BmsStructure& s, std::optional<int> min_year, int window, std::optional<double> tweedie_p) {
        return fit_bms_structure(p, parse_target(target), covariates, s, options(min_year, window, tweedie_p));
      },
      py::arg("portfolio"), py::arg("target"), py::arg("covariates"), py::arg("structure"),
      py::arg("min_calendar_year") = py::none(), py::arg("window_years") = kDefaultWindowYears,
      py::arg("tweedie_p") = py::none());
  m.def(
      "fit_bms",
      [](const Portfolio& p, const std::string& target, const std::vector<std::string>& covariates,
         std::vector<int> psi, std::vector<int> l_min, std::vector<int> l_max, std::optional<int> min_year,
         int window, std::optional<double> tweedie_p) {
        const BmsGrid grid{std::move(psi), std::move(l_min), std::move(l_max)};
        return fit_bms(p, parse_target(target), covariates, grid, options(min_year, window, tweedie_p));
      },
      py::arg("portfolio"), py::arg("target"), py::arg("covariates"), py::arg("psi") = BmsGrid::defaults().psi,
      py::arg("l_min") = BmsGrid::defaults().l_min, py::arg("l_max") = BmsGrid::defaults().l_max,
      py::arg("min_calendar_year") = py::none(), py::arg("window_years") = kDefaultWindowYears,
      py::arg("tweedie_p") = py::none());

  m.def("model_loglik", py::overload_cast<const ExperienceModel&, const Portfolio&>(&model_loglik), py::arg("model"),
        py::arg("portfolio"));
  m.def("logarithmic_score", &logarithmic_score, py::arg("model"), py::arg("portfolio"));
  m.def("predict_contracts", &predict_contracts, py::arg("model"), py::arg("portfolio"));
  m.def(
      "relativity_table",
      [](double gamma0, const BmsStructure& s, int window) { return table_dict(relativity_table(gamma0, s, window)); },
      py::arg("gamma0"), py::arg("structure"), py::arg("window_years") = kDefaultWindowYears);
  m.def(
      "off_balance_factor",
      [](const std::vector<double>& predicted, const std::vector<double>& observed) {
        return off_balance_factor(predicted, observed);
      },
      py::arg("predicted"), py::arg("observed"));

  m.def("joint_log_density", &joint_log_density, py::arg("y"), py::arg("n"), py::arg("mu"), py::arg("phi"),
        py::arg("p"), py::arg("w") = 1.0);
  m.def("deviance_response", &deviance_response, py::arg("y"), py::arg("n"), py::arg("mu"), py::arg("phi"),
        py::arg("p"), py::arg("w") = 1.0);
  m.def("p_from_shape", &p_from_shape, py::arg("shape"));
}
