// Python bindings. Structured results cross the boundary as JSON text and are
// decoded on the Python side.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "appraisal/appraiser.hpp"
#include "appraisal/config.hpp"
#include "appraisal/eval.hpp"
#include "appraisal/geo.hpp"
#include "appraisal/reply_parser.hpp"
#include "appraisal/runner.hpp"
#include "appraisal/strategy.hpp"

namespace py = pybind11;
using namespace appraisal;

namespace {

PredictionSet point_set(const std::vector<double>& truth, const std::vector<std::optional<double>>& pred) {
  if (truth.size() != pred.size()) throw py::value_error("truth and predictions differ in length");
  PredictionSet s;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    Prediction p;
    p.truth = truth[i];
    p.point = pred[i];
    s.rows.push_back(std::move(p));
  }
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Property appraisal core";

  static py::exception<Error> base(m, "AppraisalError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<AuthError>(m, "AuthError", base.ptr());

  m.def(
      "haversine",
      [](double lat1, double lon1, double lat2, double lon2) { return haversine(make_point(lat1, lon1), make_point(lat2, lon2)); },
      py::arg("lat1"), py::arg("lon1"), py::arg("lat2"), py::arg("lon2"), "Great-circle distance in km.");

  m.def("parse_price", [](const std::string& reply, const std::string& currency) { return parse_price(reply, currency).value; },
        py::arg("reply"), py::arg("currency") = "USD");
  m.def(
      "parse_interval",
      [](const std::string& reply, const std::string& currency) -> std::optional<std::tuple<double, double, bool>> {
        const auto iv = parse_interval(reply, currency);
        if (!iv.valid()) return std::nullopt;
        return std::make_tuple(iv.bounds->first, iv.bounds->second, iv.swapped);
      },
      py::arg("reply"), py::arg("currency") = "USD");
  m.def("parse_features",
        [](const std::string& reply, const std::vector<std::string>& vocabulary, std::size_t limit) {
          return parse_features(reply, vocabulary, limit).names;
        },
        py::arg("reply"), py::arg("vocabulary"), py::arg("limit") = 5);

  m.def("strategy_names", [] {
    std::vector<std::string> names;
    for (const auto& s : all_strategies()) names.push_back(s.name);
    return names;
  });
  m.def("strategies_json", [] { return strategies_json().dump(); });

  m.def(
      "mape",
      [](const std::vector<double>& truth, const std::vector<std::optional<double>>& pred) {
        const auto r = mape(point_set(truth, pred));
        return std::make_tuple(r.mape, r.pe_std, r.n_valid, r.n_invalid);
      },
      py::arg("truth"), py::arg("predictions"), "(mape, pe_std, n_valid, n_invalid); None marks an invalid prediction.");
  m.def(
      "interval_metrics",
      [](const std::vector<double>& truth, const std::vector<std::optional<std::pair<double, double>>>& intervals) {
        auto s = point_set(truth, std::vector<std::optional<double>>(truth.size()));
        if (intervals.size() != truth.size()) throw py::value_error("truth and intervals differ in length");
        for (std::size_t i = 0; i < truth.size(); ++i) s.rows[i].interval = intervals[i];
        const auto r = interval_metrics(s);
        return std::make_tuple(r.coverage_pct, r.mpiw, r.n_valid, r.n_invalid);
      },
      py::arg("truth"), py::arg("intervals"), "(coverage %, MPIW, n_valid, n_invalid).");

  m.def("render_tables", [](const std::filesystem::path& reports) {
    const auto reps = load_reports(reports);
    bool any_interval = false;
    for (const auto& r : reps) any_interval |= r.coverage_pct.has_value();
    return std::make_pair(render_table2(reps), any_interval ? render_table3(reps) : std::string{});
  });

  m.def(
      "run_grid",
      [](const std::filesystem::path& config, bool write_outputs) {
        GridOptions opt;
        opt.write_outputs = write_outputs;
        GridResult res;
        {
          py::gil_scoped_release release;
          res = run_grid(load_run_config(config), opt);
        }
        nlohmann::json out = nlohmann::json::array();
        for (const auto& r : res.reports) out.push_back(to_json(r));
        return out.dump();
      },
      py::arg("config"), py::arg("write_outputs") = true);

  py::class_<Appraiser>(m, "Appraiser")
      .def(py::init([](const std::filesystem::path& config) { return std::make_unique<Appraiser>(load_run_config(config)); }),
           py::arg("config"))
      .def(
          "appraise",
          [](const Appraiser& a, const std::string& body) {
            nlohmann::json request = nlohmann::json::parse(body, nullptr, false);
            if (request.is_discarded()) return std::make_pair(400, std::string(R"({"error":"validation","fields":[]})"));
            try {
              const auto parsed = a.parse_request(request);
              AppraisalResponse res;
              {
                py::gil_scoped_release release;
                res = a.appraise(parsed);
              }
              return std::make_pair(res.upstream_failed ? 502 : 200, res.body.dump());
            } catch (const ValidationError& e) {
              return std::make_pair(400, e.to_json().dump());
            }
          },
          py::arg("request"), "Returns (HTTP status, JSON body) exactly as the service would.")
      .def("comparables",
           [](const Appraiser& a, const std::vector<std::pair<std::string, std::string>>& query) {
             return a.comparables(query).dump();
           })
      .def("datasets", [](const Appraiser& a) { return a.datasets_json().dump(); });
}
