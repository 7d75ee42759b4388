// Python bindings. Structured values cross the boundary as JSON text; the
// lkge package wraps them into dicts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>

#include "lkge/checkpoint.hpp"
#include "lkge/cli.hpp"
#include "lkge/error.hpp"
#include "lkge/experiment.hpp"
#include "lkge/runner.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Triples = py::array_t<std::uint32_t>;

Triples to_array(const std::vector<lkge::Fact>& facts) {
  Triples out({facts.size(), std::size_t{3}});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t k = 0; k < facts.size(); ++k) {
    m(k, 0) = facts[k].subject.value;
    m(k, 1) = facts[k].relation.value;
    m(k, 2) = facts[k].object.value;
  }
  return out;
}

py::array_t<double> to_array(const lkge::EmbeddingTable& t) {
  py::array_t<double> out({t.rows(), t.dim()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict snapshot_dict(const lkge::Snapshot& s) {
  py::dict d;
  d["index"] = s.index;
  d["num_entities"] = s.num_entities;
  d["num_relations"] = s.num_relations;
  d["train"] = to_array(s.train);
  d["valid"] = to_array(s.valid);
  d["test"] = to_array(s.test);
  return d;
}

std::string train(const lkge::GrowthDataset& ds, const std::string& config) {
  const auto cfg = lkge::run_config_from_json(json::parse(config));
  lkge::RunRecord record;
  {
    py::gil_scoped_release release;
    record = lkge::run_lifelong(ds, cfg);
  }
  return lkge::to_json(record).dump();
}

std::string evaluate(const lkge::GrowthDataset& ds, const std::filesystem::path& ckpt_path,
                     int snapshot, bool filtered, const std::string& norm) {
  const auto ckpt = lkge::load_checkpoint(ckpt_path);
  const int i = snapshot > 0 ? snapshot : ckpt.snapshot;
  const auto& snap = ds.snapshot(i);
  if (snap.num_entities > ckpt.entities.rows() ||
      snap.num_relations > ckpt.relations.rows()) {
    throw lkge::BoundsError("checkpoint does not cover snapshot " + std::to_string(i));
  }
  std::optional<lkge::KnownFacts> known;
  if (filtered) known.emplace(ds);
  const lkge::Norm n = norm == "l1" ? lkge::Norm::l1 : lkge::Norm::l2;
  if (norm != "l1" && norm != "l2") throw lkge::ConfigError("norm must be l1 or l2");
  const auto m = lkge::link_prediction(ckpt.to_state(), snap.test, snap.num_entities, i,
                                       {n, known ? &*known : nullptr});
  return lkge::metrics_to_json(m).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Lifelong knowledge graph embedding core";

  // Translators are tried newest first, so the base class goes first.
  py::register_exception<lkge::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<lkge::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<lkge::IoError>(m, "IoError", PyExc_OSError);

  if (const char* env = std::getenv("LKGE_LOG_LEVEL"); env && *env) {
    spdlog::set_level(spdlog::level::from_str(env));
  }

  py::class_<lkge::GrowthDataset>(m, "Dataset")
      .def_static("load", &lkge::load_dataset, py::arg("path"))
      .def_static(
          "from_recipe",
          [](const std::string& recipe) {
            const auto r = lkge::dataset_recipe_from_json(json::parse(recipe));
            py::gil_scoped_release release;
            return lkge::build_from_recipe(r);
          },
          py::arg("recipe"))
      .def("save", [](const lkge::GrowthDataset& ds,
                      const std::filesystem::path& p) { lkge::save_dataset(ds, p); })
      .def("__len__", &lkge::GrowthDataset::size)
      .def("snapshot", [](const lkge::GrowthDataset& ds, int i) {
        return snapshot_dict(ds.snapshot(i));
      })
      .def("delta_stats",
           [](const lkge::GrowthDataset& ds, int i) {
             const auto s = lkge::delta_stats(ds, i);
             return py::make_tuple(s.facts, s.entities, s.relations);
           })
      .def_property_readonly("entity_names",
                             [](const lkge::GrowthDataset& ds) { return ds.entity_names.names(); })
      .def_property_readonly("relation_names",
                             [](const lkge::GrowthDataset& ds) { return ds.relation_names.names(); })
      .def_property_readonly("variant",
                             [](const lkge::GrowthDataset& ds) { return ds.build.variant; })
      .def_property_readonly("seed", [](const lkge::GrowthDataset& ds) { return ds.build.seed; });

  m.def("train", &train, py::arg("dataset"), py::arg("config"));
  m.def("evaluate", &evaluate, py::arg("dataset"), py::arg("checkpoint"),
        py::arg("snapshot") = 0, py::arg("filtered") = true, py::arg("norm") = "l2");

  m.def("load_checkpoint", [](const std::filesystem::path& p) {
    const auto c = lkge::load_checkpoint(p);
    py::dict d;
    d["snapshot"] = c.snapshot;
    d["dim"] = c.dim;
    d["entities"] = to_array(c.entities);
    d["relations"] = to_array(c.relations);
    d["entity_counts"] = c.ledger.entity_curr;
    d["relation_counts"] = c.ledger.relation_curr;
    return d;
  });

  m.def("run_experiment",
        [](const std::filesystem::path& manifest, bool force) {
          const auto mf = lkge::load_manifest(manifest);
          py::gil_scoped_release release;
          return lkge::run_experiment(mf, {force}).dump();
        },
        py::arg("manifest"), py::arg("force") = false);

  m.def("split_sizes", [](std::size_t n, std::array<int, 3> ratio) {
    const auto s = lkge::split_sizes(n, ratio);
    return py::make_tuple(s.train, s.valid, s.test);
  }, py::arg("n"), py::arg("ratio") = std::array<int, 3>{3, 1, 1});
  m.def("reg_weight", &lkge::reg_weight, py::arg("prev_count"), py::arg("curr_count"));
  m.def("fwt_bwt", [](const std::vector<std::vector<std::optional<double>>>& h) {
    lkge::TransferMatrix t(static_cast<int>(h.size()));
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (h[i].size() != h.size()) throw lkge::ShapeError("h must be square");
      for (std::size_t j = 0; j < h.size(); ++j) {
        if (h[i][j]) t.set(static_cast<int>(i + 1), static_cast<int>(j + 1), *h[i][j]);
      }
    }
    const auto s = lkge::fwt_bwt(t);
    return py::make_tuple(s.fwt, s.bwt);
  });

  m.def("cli", [](const std::vector<std::string>& args) {
    std::vector<const char*> argv{"lkge-bench"};
    for (const auto& a : args) argv.push_back(a.c_str());
    py::gil_scoped_release release;
    return lkge::run_cli(static_cast<int>(argv.size()), argv.data());
  });
}
