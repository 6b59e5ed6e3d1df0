#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hqm/errors.hpp"
#include "hqm/harness.hpp"

namespace py = pybind11;
using namespace hqm;

namespace {

RunConfig config_from(const std::string& text) { return text.empty() ? RunConfig{} : run_config_from_json(nlohmann::json::parse(text)); }

CostMatrix cost_from(const std::vector<std::vector<double>>& rows) {
  const std::size_t q = rows.size(), t = q ? rows[0].size() : 0;
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.size() != t) throw ContractError("ragged cost matrix");
    v.insert(v.end(), r.begin(), r.end());
  }
  return CostMatrix(q, t, std::move(v));
}

}  // namespace

PYBIND11_MODULE(_hqm, m) {
  m.doc() = "Hard-positive query mining for HOI detection (C++ core)";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<Box>(m, "Box")
      .def(py::init([](double cx, double cy, double w, double h) { return Box{cx, cy, w, h}; }), py::arg("cx"), py::arg("cy"), py::arg("w"), py::arg("h"))
      .def_readwrite("cx", &Box::cx)
      .def_readwrite("cy", &Box::cy)
      .def_readwrite("w", &Box::w)
      .def_readwrite("h", &Box::h)
      .def("__repr__", [](const Box& b) {
        return "Box(" + std::to_string(b.cx) + ", " + std::to_string(b.cy) + ", " + std::to_string(b.w) + ", " + std::to_string(b.h) + ")";
      });

  m.def("iou", [](const Box& a, const Box& b) { return iou(a, b); });
  m.def("giou", [](const Box& a, const Box& b) { return giou(a, b); });
  m.def(
      "shift_box",
      [](const Box& gt, double iou_lo, double iou_hi, std::uint64_t seed) {
        ShiftConfig cfg;
        cfg.iou_lo = iou_lo;
        cfg.iou_hi = iou_hi;
        cfg.validate();
        Rng rng(seed);
        bool fell = false;
        const Box b = shift_box(gt, cfg, rng, &fell);
        return py::make_tuple(b, fell);
      },
      py::arg("gt"), py::arg("iou_lo") = 0.4, py::arg("iou_hi") = 0.6, py::arg("seed") = 0);

  m.def(
      "hungarian", [](const std::vector<std::vector<double>>& cost) { return hungarian(cost_from(cost)).pairs; },
      "Rows are queries, columns targets; returns (query, target) pairs sorted by target.");
  m.def("brute_force_assignment", [](const std::vector<std::vector<double>>& cost) { return brute_force_assignment(cost_from(cost)).pairs; });

  m.def(
      "amm_mask",
      [](const std::vector<double>& attention, const std::vector<double>& reference, std::size_t top_k, double gamma, std::uint64_t seed) {
        AmmConfig cfg;
        cfg.top_k = top_k;
        cfg.gamma = gamma;
        cfg.validate(reference.size());
        Rng rng(seed);
        return amm_mask(attention, reference, cfg, rng);
      },
      py::arg("attention"), py::arg("reference"), py::arg("top_k") = 24, py::arg("gamma") = 0.4, py::arg("seed") = 0);
  m.def("top_k_indices", [](const std::vector<double>& row, std::size_t k) { return top_k_indices(row, k); });

  m.def(
      "sigmoid_focal_sum",
      [](const std::vector<double>& logits, const std::vector<double>& labels, double gamma, double alpha) {
        return sigmoid_focal_sum(Tensor({logits.size()}, logits), labels, gamma, alpha).item();
      },
      py::arg("logits"), py::arg("labels"), py::arg("gamma") = 2.0, py::arg("alpha") = 0.25);

  m.def("default_config_json", [] { return to_json(RunConfig{}).dump(); });
  m.def("tiny_config_json", [] { return to_json(tiny_config()).dump(); });
  m.def("normalize_config_json", [](const std::string& text) { return to_json(config_from(text)).dump(); });

  m.def(
      "generate_dataset_json",
      [](const std::string& config, std::uint64_t seed, std::size_t count) {
        return to_json(generate_dataset(config_from(config).data.generation, seed, count)).dump();
      },
      py::arg("config"), py::arg("seed"), py::arg("count"));

  m.def(
      "train",
      [](const std::string& config, bool write_artifacts) {
        const RunConfig cfg = config_from(config);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(cfg, write_artifacts);
        }
        py::list rows;
        for (const auto& e : r.metrics) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["loss_total"] = e.loss_total;
          d["loss_l"] = e.loss_l;
          d["loss_h"] = e.loss_h;
          d["l1"] = e.l1;
          d["giou"] = e.giou;
          d["ce"] = e.ce;
          d["focal"] = e.focal;
          d["val_map"] = e.val_map;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config"), py::arg("write_artifacts") = false);

  m.def(
      "evaluate_checkpoint",
      [](const std::string& checkpoint, const std::string& dataset) {
        const auto [cfg, params] = load_checkpoint(checkpoint);
        const EvalReport r = evaluate(params, load_dataset(dataset).scenes);
        py::dict d;
        d["map"] = r.map;
        d["ap_per_verb"] = r.ap_per_verb;
        d["true_positives"] = r.true_positives;
        d["false_positives"] = r.false_positives;
        return d;
      },
      py::arg("checkpoint"), py::arg("dataset"));

  m.def(
      "grad_check",
      [](const std::string& config, const std::vector<std::string>& strategies) {
        std::vector<HqmStrategy> parsed;
        for (const auto& s : strategies) parsed.push_back(parse_strategy(s));
        const RunConfig cfg = config.empty() ? tiny_config() : config_from(config);
        std::vector<GradCheckEntry> report;
        {
          py::gil_scoped_release release;
          report = grad_check(cfg, parsed);
        }
        py::dict out;
        for (const auto& e : report) out[py::str(e.strategy)] = e.max_rel_error;
        return out;
      },
      py::arg("config") = "", py::arg("strategies") = std::vector<std::string>{"baseline"});
}
