// Python bindings. Structured results cross the boundary as JSON text and are
// decoded in mga/__init__.py.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <filesystem>

#include "json.hpp"
#include "mga/config.hpp"
#include "mga/core/checkpoint.hpp"
#include "mga/data.hpp"
#include "mga/errors.hpp"
#include "mga/eval.hpp"
#include "mga/geometry.hpp"
#include "mga/models.hpp"
#include "mga/pipeline.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace mga;

namespace {

config::RunConfig run_config(const std::string& path, std::optional<std::uint64_t> seed) {
  auto rc = path.empty() ? config::default_config() : config::load_config(path);
  if (seed) config::apply_seed(rc, *seed);
  return rc;
}

pipeline::Network network_of(const std::string& s) {
  if (s == "can") return pipeline::Network::Can;
  if (s == "dgn") return pipeline::Network::Dgn;
  if (s == "in") return pipeline::Network::In;
  if (s == "mga") return pipeline::Network::Mga;
  throw ConfigError("unknown network '" + s + "' (can, dgn, in, mga)");
}

std::pair<std::string, std::vector<double>> build_feature(const std::vector<double>& xy, bool prescale) {
  geometry::GeometryOptions opts;
  opts.nose_eye_prescale = prescale;
  const auto f = geometry::build_feature(geometry::LandmarkSet::from_xy(xy), opts);
  return {geometry::to_string(f.side), f.values};
}

std::size_t synthesize(const fs::path& out, std::size_t n, std::uint64_t seed) {
  data::SynthConfig sc;
  sc.samples = n;
  sc.seed = seed;
  const auto records = data::generate_synthetic(sc);
  data::write_manifest(out / "manifest.csv", records);
  return records.size();
}

// Trains stages `first`..`last` on the training part of fold 0 into `out`;
// returns {run name: per-epoch losses}.
std::string train(const std::string& manifest, const std::string& out, int first, int last,
                  const std::string& config_path, std::optional<std::uint64_t> seed) {
  auto rc = run_config(config_path, seed);
  auto records = data::load_manifest(manifest);
  if (records.empty()) throw DataError("manifest " + manifest + " has no records");
  const auto split = data::make_folds(records, rc.data.folds, rc.data.fold_seed);
  std::vector<data::SampleRecord> train;
  for (auto i : split.train_indices(0)) train.push_back(records[i]);
  const auto prepared = pipeline::prepare(train, rc.arch, rc.training);
  const pipeline::Trainer trainer(rc.arch, rc.training);
  nlohmann::json j = nlohmann::json::object();
  for (int s = first; s <= last; ++s) {
    const auto result = pipeline::run_stage_files(trainer, s, out, prepared);
    for (const auto& h : result.histories) j[h.name] = h.epoch_loss;
  }
  return j.dump();
}

std::string predict(const std::string& checkpoint, const std::string& manifest, const std::string& network,
                    const std::string& config_path) {
  const auto rc = run_config(config_path, std::nullopt);
  const auto records = data::load_manifest(manifest);
  auto store = nn::load_checkpoint(checkpoint);
  const auto prepared = pipeline::prepare(records, rc.arch, rc.training);
  const auto preds = pipeline::predict(network_of(network), store, rc.arch, prepared);
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    nlohmann::json p{{"id", records[i].id}, {"p_male", preds[i].gender[1]}, {"gender", preds[i].gender_label()}};
    if (preds[i].age) p["age"] = *preds[i].age;
    if (!preds[i].group.empty()) p["group"] = preds[i].group;
    out.push_back(p);
  }
  return out.dump();
}

std::string metrics(const std::vector<double>& p_male, const std::vector<double>& ages,
                    const std::vector<double>& true_ages, const std::vector<int>& true_genders) {
  if (p_male.size() != ages.size()) throw ContractError("metrics: p_male and ages differ in length");
  if (true_ages.size() != true_genders.size()) throw ContractError("metrics: truth lists differ in length");
  std::vector<models::Prediction> preds(p_male.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i].gender = {1.0 - p_male[i], p_male[i]};
    preds[i].age = ages[i];
  }
  std::vector<eval::Truth> truths(true_ages.size());
  for (std::size_t i = 0; i < truths.size(); ++i) truths[i] = {true_ages[i], true_genders[i]};
  return eval::to_json(eval::compute_metrics(preds, truths)).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Age-group aware gender classification: native core";

  static py::exception<Error> base(m, "MgaError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.def("build_feature", &build_feature, py::arg("xy"), py::arg("nose_eye_prescale") = false,
        "136 interleaved landmark coordinates -> (side, half-face feature)");
  m.def("feature_length", [] { return geometry::default_feature_length(); });
  m.def(
      "fuse_experts",
      [](const std::vector<double>& gate, const std::vector<std::array<double, 2>>& experts) {
        return models::fuse_experts(gate, experts);
      },
      py::arg("gate"), py::arg("experts"));
  m.def(
      "coarse_group", [](double age) { return std::string(pipeline::to_string(pipeline::assign_coarse_group(age))); },
      py::arg("age"));
  m.def(
      "parameter_count",
      [](const std::string& preset) { return models::mga_parameter_count(config::default_config(preset).arch); },
      py::arg("preset") = "reference");
  m.def("synthesize", &synthesize, py::arg("out"), py::arg("n"), py::arg("seed") = 0);
  m.def("_train", &train, py::arg("manifest"), py::arg("out"), py::arg("first"), py::arg("last"),
        py::arg("config") = "", py::arg("seed") = std::nullopt);
  m.def("_predict", &predict, py::arg("checkpoint"), py::arg("manifest"), py::arg("network") = "mga",
        py::arg("config") = "");
  m.def("_metrics", &metrics, py::arg("p_male"), py::arg("ages"), py::arg("true_ages"), py::arg("true_genders"));
}
