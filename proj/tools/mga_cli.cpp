// mga: synthetic data, staged training, evaluation and inspection.
//
// Every run reads one JSON config (see README); `--seed` overrides the
// training, synthesis and fold seeds together. Errors print a single line
// `error: code=<CODE> <message>` and exit 2 (config), 3 (data), 4 (state) or 1.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mga/config.hpp"
#include "mga/core/checkpoint.hpp"
#include "mga/data.hpp"
#include "mga/errors.hpp"
#include "mga/eval.hpp"
#include "mga/geometry.hpp"
#include "mga/models.hpp"
#include "mga/pipeline.hpp"
#include "mga/text.hpp"

namespace fs = std::filesystem;
using namespace mga;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

config::RunConfig load_run_config(const Common& c) {
  config::RunConfig rc = c.config.empty() ? config::default_config() : config::load_config(c.config);
  if (c.seed) config::apply_seed(rc, *c.seed);
  return rc;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json arch_json(const config::RunConfig& rc) {
  json j = config::to_json(rc).at("arch");
  j["can_feature_dim"] = rc.arch.can_feature_dim();
  j["dgn_input_dim"] = rc.arch.dgn_input_dim();
  j["dgn_feature_dim"] = rc.arch.dgn_feature_dim();
  j["mga_parameters"] = models::mga_parameter_count(rc.arch);
  return j;
}

std::vector<data::SampleRecord> load_records(const config::RunConfig& rc, const std::string& manifest_override) {
  const std::string manifest = manifest_override.empty() ? rc.data.manifest : manifest_override;
  if (manifest.empty()) throw ConfigError("no manifest: set data.manifest in the config or pass --manifest");
  auto records = data::load_manifest(manifest);
  if (records.empty()) throw DataError("manifest " + manifest + " has no records");
  return records;
}

std::vector<std::size_t> parse_folds(const std::string& sel, std::size_t k) {
  if (sel == "all") {
    std::vector<std::size_t> all(k);
    for (std::size_t i = 0; i < k; ++i) all[i] = i;
    return all;
  }
  const auto v = text::parse_int(sel);
  if (!v || *v < 0 || static_cast<std::size_t>(*v) >= k) {
    throw ConfigError("--fold must be 'all' or an index in [0, " + std::to_string(k) + "), got '" + sel + "'");
  }
  return {static_cast<std::size_t>(*v)};
}

std::vector<int> parse_stages(const std::string& sel) {
  if (sel == "all") return {1, 2, 3, 4};
  const auto v = text::parse_int(sel);
  if (!v || *v < 1 || *v > 4) throw ConfigError("--stage must be 1, 2, 3, 4 or all, got '" + sel + "'");
  return {static_cast<int>(*v)};
}

template <class T>
std::vector<T> pick(const std::vector<T>& all, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

fs::path fold_dir(const fs::path& out, std::size_t fold) { return out / ("fold" + std::to_string(fold)); }

// Highest stage{k}.ckpt in `dir`, 0 if none.
int latest_stage(const fs::path& dir) {
  for (int s = 4; s >= 1; --s) {
    if (fs::exists(pipeline::checkpoint_path(dir, s))) return s;
  }
  return 0;
}

std::vector<pipeline::Network> networks_for(int stage) {
  std::vector<pipeline::Network> n{pipeline::Network::Can, pipeline::Network::Dgn};
  if (stage >= 2) n.push_back(pipeline::Network::In);
  if (stage >= 3) n.push_back(pipeline::Network::Mga);
  return n;
}

pipeline::Network parse_network(const std::string& s) {
  if (s == "can") return pipeline::Network::Can;
  if (s == "dgn") return pipeline::Network::Dgn;
  if (s == "in") return pipeline::Network::In;
  if (s == "mga") return pipeline::Network::Mga;
  throw ConfigError("unknown network '" + s + "' (expected can, dgn, in or mga)");
}

std::vector<eval::Truth> truths_of(std::span<const pipeline::PreparedSample> data) {
  std::vector<eval::Truth> t;
  t.reserve(data.size());
  for (const auto& s : data) t.push_back({s.record.age, s.record.gender});
  return t;
}

json prediction_json(const std::string& id, const models::Prediction& p) {
  json j{{"id", id}, {"gender", p.gender_label()}, {"p_male", p.gender[1]}};
  j["age"] = p.age ? json(*p.age) : json(nullptr);
  if (!p.group.empty()) j["group"] = p.group;
  if (!p.experts.empty()) j["experts"] = p.experts;
  return j;
}

// --- subcommands ----------------------------------------------------------------

struct SynthArgs {
  std::optional<std::size_t> n;
};

int cmd_synth(const Common& c, const SynthArgs& a) {
  config::RunConfig rc = load_run_config(c);
  if (a.n) rc.synth.samples = *a.n;
  rc.validate();
  const fs::path out = c.out.empty() ? fs::path("synth") : fs::path(c.out);
  const auto records = data::generate_synthetic(rc.synth);
  data::write_manifest(out / "manifest.csv", records);
  rc.data.manifest = "manifest.csv";
  config::save_config(out / "config.json", rc);
  std::cout << "wrote " << records.size() << " records to " << (out / "manifest.csv").string() << '\n';
  return 0;
}

struct TrainArgs {
  std::string stage = "all";
  std::string fold = "0";
  std::string manifest;
};

int cmd_train(const Common& c, const TrainArgs& a) {
  config::RunConfig rc = load_run_config(c);
  if (!a.manifest.empty()) rc.data.manifest = a.manifest;
  // The saved copy must resolve from the output directory too.
  if (!rc.data.manifest.empty()) rc.data.manifest = fs::absolute(rc.data.manifest).lexically_normal().string();
  const auto stages = parse_stages(a.stage);
  const fs::path out = c.out.empty() ? fs::path("run") : fs::path(c.out);
  const auto records = load_records(rc, "");
  const auto split = data::make_folds(records, rc.data.folds, rc.data.fold_seed);
  const auto folds = parse_folds(a.fold, split.size());

  config::save_config(out / "config.json", rc);
  write_json(out / "arch.json", arch_json(rc));
  const pipeline::Trainer trainer(rc.arch, rc.training);
  for (auto k : folds) {
    const auto train = pick(records, split.train_indices(k));
    const auto prepared = pipeline::prepare(train, rc.arch, rc.training);
    const fs::path dir = fold_dir(out, k);
    for (int s : stages) {
      const auto result = pipeline::run_stage_files(trainer, s, dir, prepared);
      for (const auto& h : result.histories) {
        std::cout << "fold " << k << ' ' << h.name << " loss " << text::format_double(h.epoch_loss.front()) << " -> "
                  << text::format_double(h.epoch_loss.back()) << '\n';
      }
    }
  }
  return 0;
}

struct EvalArgs {
  std::string fold = "all";
  std::string manifest;
  std::string predictions;
  std::string report;
};

// Predictions file: header "id,p_male,age"; age may be empty.
int eval_predictions_file(const Common& c, const EvalArgs& a) {
  const config::RunConfig rc = load_run_config(c);
  if (a.manifest.empty() && rc.data.manifest.empty()) throw ConfigError("--predictions needs --manifest for truths");
  const auto records = data::load_manifest(a.manifest.empty() ? rc.data.manifest : a.manifest, false);
  std::map<std::string, const data::SampleRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;

  std::ifstream in(a.predictions);
  if (!in) throw DataError("cannot read predictions file " + a.predictions);
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "id,p_male,age") {
    throw DataError(a.predictions + ": header must be 'id,p_male,age'");
  }
  std::vector<models::Prediction> preds;
  std::vector<eval::Truth> truths;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, ',');
    const std::string where = a.predictions + ":" + std::to_string(lineno);
    if (f.size() != 3) throw DataError(where + ": expected 3 fields");
    const auto it = by_id.find(std::string(text::trim(f[0])));
    if (it == by_id.end()) throw DataError(where + ": unknown id '" + std::string(f[0]) + "'");
    const auto p = text::parse_double(f[1]);
    if (!p || *p < 0.0 || *p > 1.0) throw DataError(where + ": p_male must be in [0, 1]");
    models::Prediction pred;
    pred.gender = {1.0 - *p, *p};
    if (!text::trim(f[2]).empty()) {
      const auto age = text::parse_double(f[2]);
      if (!age) throw DataError(where + ": bad age");
      pred.age = *age;
    }
    preds.push_back(pred);
    truths.push_back({it->second->age, it->second->gender});
  }
  const auto report = eval::compute_metrics(preds, truths, rc.training.groups);
  const json j = eval::to_json(report);
  if (!a.report.empty()) write_json(a.report, j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_eval(const Common& c, const EvalArgs& a) {
  if (!a.predictions.empty()) return eval_predictions_file(c, a);
  const fs::path out = c.out.empty() ? fs::path("run") : fs::path(c.out);
  Common run = c;
  if (run.config.empty()) run.config = (out / "config.json").string();
  const config::RunConfig rc = load_run_config(run);
  const auto records = load_records(rc, a.manifest);
  const auto split = data::make_folds(records, rc.data.folds, rc.data.fold_seed);
  const auto folds = parse_folds(a.fold, split.size());

  std::map<std::string, std::vector<models::Prediction>> all_preds;
  std::map<std::string, std::vector<eval::Truth>> all_truths;
  json summary;
  for (auto k : folds) {
    const fs::path dir = fold_dir(out, k);
    const int stage = latest_stage(dir);
    if (stage == 0) throw StateError("no checkpoint in " + dir.string() + "; run train first");
    auto store = nn::load_checkpoint(pipeline::checkpoint_path(dir, stage));
    const auto test = pick(records, split.test_indices(k));
    const auto prepared = pipeline::prepare(test, rc.arch, rc.training);
    const auto truths = truths_of(prepared);
    json fold_report;
    for (auto net : networks_for(stage)) {
      const auto preds = pipeline::predict(net, store, rc.arch, prepared);
      const auto report = eval::compute_metrics(preds, truths, rc.training.groups);
      const std::string name = pipeline::to_string(net);
      fold_report[name] = eval::to_json(report);
      auto& ap = all_preds[name];
      ap.insert(ap.end(), preds.begin(), preds.end());
      auto& at = all_truths[name];
      at.insert(at.end(), truths.begin(), truths.end());
      std::cout << "fold " << k << ' ' << name << " gender " << text::format_double(report.gender_accuracy);
      if (report.age_mae) std::cout << " mae " << text::format_double(*report.age_mae);
      std::cout << '\n';
    }
    write_json(dir / "eval.json", fold_report);
    summary["folds"][std::to_string(k)] = fold_report;
  }
  for (const auto& [name, preds] : all_preds) {
    summary["aggregate"][name] = eval::to_json(eval::compute_metrics(preds, all_truths[name], rc.training.groups));
  }
  write_json(a.report.empty() ? out / "eval.json" : fs::path(a.report), summary);
  return 0;
}

struct InferArgs {
  std::string checkpoint;
  std::string manifest;
  std::string network = "mga";
};

int cmd_infer(const Common& c, const InferArgs& a) {
  const config::RunConfig rc = load_run_config(c);
  const auto records = load_records(rc, a.manifest);
  auto store = nn::load_checkpoint(a.checkpoint);
  const auto prepared = pipeline::prepare(records, rc.arch, rc.training);
  const auto preds = pipeline::predict(parse_network(a.network), store, rc.arch, prepared);
  for (std::size_t i = 0; i < preds.size(); ++i) std::cout << prediction_json(records[i].id, preds[i]).dump() << '\n';
  return 0;
}

struct GeoArgs {
  std::string landmarks;
  std::string manifest;
  bool prescale = false;
};

int cmd_geo_extract(const Common& c, const GeoArgs& a) {
  std::vector<geometry::LandmarkRecord> input;
  if (!a.landmarks.empty()) {
    input = geometry::read_landmark_file(a.landmarks);
  } else if (!a.manifest.empty()) {
    for (const auto& r : data::load_manifest(a.manifest, false)) input.push_back({r.id, r.landmarks});
  } else {
    throw ConfigError("geo-extract needs --landmarks or --manifest");
  }
  const fs::path out = c.out.empty() ? fs::path("features.csv") : fs::path(c.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw DataError("cannot write " + out.string());
  const std::size_t d = geometry::default_feature_length();
  f << "id,side";
  for (std::size_t i = 1; i <= d; ++i) f << ",f" << i;
  f << '\n';
  geometry::GeometryOptions opts;
  opts.nose_eye_prescale = a.prescale;
  for (const auto& r : input) {
    const auto feat = geometry::build_feature(r.landmarks, opts);
    f << r.id << ',' << geometry::to_string(feat.side);
    for (double v : feat.values) f << ',' << text::format_double(v);
    f << '\n';
  }
  std::cout << "wrote " << input.size() << " feature vectors (" << d << " values each) to " << out.string() << '\n';
  return 0;
}

struct CamArgs {
  std::string checkpoint;
  std::string manifest;
  std::string id;
  std::string head = "in.gender";
  std::optional<int> target;
};

int cmd_cam(const Common& c, const CamArgs& a) {
  const config::RunConfig rc = load_run_config(c);
  auto records = load_records(rc, a.manifest);
  if (!a.id.empty()) {
    std::erase_if(records, [&](const data::SampleRecord& r) { return r.id != a.id; });
    if (records.empty()) throw DataError("no record with id '" + a.id + "'");
  }
  auto store = nn::load_checkpoint(a.checkpoint);
  const auto prepared = pipeline::prepare(records, rc.arch, rc.training);
  const fs::path out = c.out.empty() ? fs::path("cam") : fs::path(c.out);
  for (const auto& s : prepared) {
    const int target = a.target.value_or(s.record.gender);
    const auto cam = eval::compute_cam(store, rc.arch, s.record.image, target, a.head);
    eval::write_cam(out / (s.record.id + "." + a.head), cam);
  }
  std::cout << "wrote " << prepared.size() << " maps to " << out.string() << '\n';
  return 0;
}

struct ParamsArgs {
  std::string preset;
};

int cmd_params(const Common& c, const ParamsArgs& a) {
  config::RunConfig rc = load_run_config(c);
  if (!a.preset.empty()) rc = config::default_config(a.preset);
  const auto store = models::make_full_store(rc.arch, rc.training.seed);
  std::cout << "preset " << rc.preset << '\n';
  for (const char* p : {"can.", "dgn.", "in.", "expert."}) {
    std::cout << p << "* " << store.parameter_count({p}) << '\n';
  }
  std::cout << "mga_total " << models::mga_parameter_count(rc.arch) << '\n';
  return 0;
}

int exit_code(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const GeometryError*>(&e)) return 3;
  if (dynamic_cast<const StateError*>(&e)) return 4;
  return 1;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Age-aware gender classification: data, training, evaluation"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Run config (JSON)")->envname("MGA_CONFIG");
    sub->add_option("--seed", common.seed, "Seed for training, synthesis and folds")->envname("MGA_SEED");
    sub->add_option("--out", common.out, "Output path")->envname("MGA_OUT");
  };

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic dataset manifest and images");
  add_common(s);
  s->add_option("--n", synth.n, "Number of records")->envname("MGA_N");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run training stages, writing checkpoints and loss logs");
  add_common(t);
  t->add_option("--stage", train.stage, "1, 2, 3, 4 or all")->envname("MGA_STAGE");
  t->add_option("--fold", train.fold, "Fold index or all")->envname("MGA_FOLD");
  t->add_option("--manifest", train.manifest, "Manifest (overrides data.manifest)")->envname("MGA_MANIFEST");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate trained folds, or score a predictions file");
  add_common(e);
  e->add_option("--fold", ev.fold, "Fold index or all")->envname("MGA_FOLD");
  e->add_option("--manifest", ev.manifest, "Manifest (overrides data.manifest)")->envname("MGA_MANIFEST");
  e->add_option("--predictions", ev.predictions, "CSV with id,p_male,age to score against the manifest");
  e->add_option("--report", ev.report, "Report path (default <out>/eval.json)");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Print one JSON prediction per manifest record");
  add_common(i);
  i->add_option("--checkpoint", inf.checkpoint, "Checkpoint file")->required();
  i->add_option("--manifest", inf.manifest, "Input manifest")->envname("MGA_MANIFEST");
  i->add_option("--network", inf.network, "can, dgn, in or mga");

  GeoArgs geo;
  auto* g = app.add_subcommand("geo-extract", "Write geometric feature vectors as CSV");
  add_common(g);
  g->add_option("--landmarks", geo.landmarks, "Landmark file (id,x1,y1,...,x68,y68)");
  g->add_option("--manifest", geo.manifest, "Manifest to take landmarks from");
  g->add_flag("--nose-eye-prescale", geo.prescale, "Divide by the nose-eye distance before normalizing");

  CamArgs cam;
  auto* m = app.add_subcommand("cam", "Write class activation maps");
  add_common(m);
  m->add_option("--checkpoint", cam.checkpoint, "Checkpoint file")->required();
  m->add_option("--manifest", cam.manifest, "Input manifest")->envname("MGA_MANIFEST");
  m->add_option("--id", cam.id, "Only this record");
  m->add_option("--head", cam.head, "can.gender, in.gender or expert.{young,adult,elder}");
  m->add_option("--target", cam.target, "Gender class to explain (default: the record's label)");

  ParamsArgs params;
  auto* p = app.add_subcommand("params", "Print parameter counts");
  add_common(p);
  p->add_option("--preset", params.preset, "desk or reference (ignores --config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    if (err.get_exit_code() == 0) return app.exit(err);
    std::cerr << "error: code=USAGE_ERROR " << one_line(err.what()) << '\n';
    return 2;
  }

  try {
    if (s->parsed()) return cmd_synth(common, synth);
    if (t->parsed()) return cmd_train(common, train);
    if (e->parsed()) return cmd_eval(common, ev);
    if (i->parsed()) return cmd_infer(common, inf);
    if (g->parsed()) return cmd_geo_extract(common, geo);
    if (m->parsed()) return cmd_cam(common, cam);
    if (p->parsed()) return cmd_params(common, params);
  } catch (const Error& err) {
    std::cerr << "error: code=" << err.code() << ' ' << one_line(err.what()) << '\n';
    return exit_code(err);
  } catch (const std::exception& err) {
    std::cerr << "error: code=INTERNAL_ERROR " << one_line(err.what()) << '\n';
    return 1;
  }
  return 1;
}
