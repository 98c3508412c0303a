#include "mga/config.hpp"

#include <fstream>

#include "mga/errors.hpp"

namespace mga::config {

using nlohmann::json;

namespace {

json hyper_json(const pipeline::Hyper& h) {
  return {{"batch_size", h.batch_size}, {"learning_rate", h.learning_rate}, {"decay", h.decay}, {"epochs", h.epochs}};
}

pipeline::Hyper hyper_from(const json& j) {
  return {j.at("batch_size").get<std::size_t>(), j.at("learning_rate").get<double>(), j.at("decay").get<double>(),
          j.at("epochs").get<std::size_t>()};
}

json weights_json(const loss::LossWeights& w) {
  return {{"alpha1", w.alpha1}, {"beta1", w.beta1}, {"lambda1", w.lambda1}, {"lambda2", w.lambda2}};
}

loss::LossWeights weights_from(const json& j) {
  return {j.at("alpha1").get<double>(), j.at("beta1").get<double>(), j.at("lambda1").get<double>(),
          j.at("lambda2").get<double>()};
}

// Every key of `user` must exist in `reference` (recursively for objects).
void check_keys(const json& user, const json& reference, const std::string& where) {
  if (!user.is_object()) return;
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (value.is_object()) check_keys(value, reference.at(key), path);
  }
}

}  // namespace

void RunConfig::validate() const {
  arch.validate();
  training.validate();
  synth.validate();
  if (data.folds < 2) throw ConfigError("data.folds must be at least 2");
  if (synth.image_size != arch.can.image_size) {
    throw ConfigError("synth.image_size (" + std::to_string(synth.image_size) + ") must equal arch.image_size (" +
                      std::to_string(arch.can.image_size) + ")");
  }
}

RunConfig default_config(const std::string& preset) {
  RunConfig c;
  c.preset = preset;
  if (preset == "desk") {
    c.arch = models::ArchConfig::desk();
  } else if (preset == "reference") {
    c.arch = models::ArchConfig::reference();
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected desk or reference)");
  }
  c.synth.image_size = c.arch.can.image_size;
  return c;
}

json to_json(const RunConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.arch.can.blocks) {
    blocks.push_back({{"filters", b.filters}, {"kernel", b.kernel}, {"stride", b.stride}, {"padding", b.padding}});
  }
  json j;
  j["preset"] = c.preset;
  j["arch"] = {{"in_channels", c.arch.can.in_channels},
               {"image_size", c.arch.can.image_size},
               {"blocks", blocks},
               {"width_multiplier", c.arch.can.width_multiplier},
               {"pool_size", c.arch.can.pool_size},
               {"pool_stride", c.arch.can.pool_stride},
               {"dgn_hidden", c.arch.dgn.hidden},
               {"fine_groups", c.arch.dgn.fine_groups},
               {"coarse_groups", c.arch.coarse_groups},
               {"age_offset", c.arch.age_offset},
               {"age_scale", c.arch.age_scale},
               {"bn_eps", c.arch.bn_eps},
               {"bn_momentum", c.arch.bn_momentum}};
  const auto& t = c.training;
  j["training"] = {{"can", hyper_json(t.can)},
                   {"dgn", hyper_json(t.dgn)},
                   {"in", hyper_json(t.in)},
                   {"expert", hyper_json(t.expert)},
                   {"mga", hyper_json(t.mga)},
                   {"align", t.align},
                   {"seed", t.seed}};
  j["weights"] = {{"stage2", weights_json(t.stage2)}, {"stage3", weights_json(t.stage3)}, {"stage4", weights_json(t.stage4)}};
  j["groups"] = {{"young_adult", t.groups.young_adult},
                 {"adult_elder", t.groups.adult_elder},
                 {"overlap", t.groups.overlap},
                 {"fine_groups", t.groups.fine_groups},
                 {"fine_width", t.groups.fine_width}};
  j["augment"] = {{"enabled", t.augment.enabled},
                  {"flip_probability", t.augment.flip_probability},
                  {"max_rotation_deg", t.augment.max_rotation_deg}};
  const auto& s = c.synth;
  j["synth"] = {{"samples", s.samples},
                {"image_size", s.image_size},
                {"seed", s.seed},
                {"young_strength", s.young_strength},
                {"adult_strength", s.adult_strength},
                {"elder_strength", s.elder_strength},
                {"ramp_years", s.ramp_years},
                {"geometry_strength", s.geometry_strength},
                {"noise", s.noise},
                {"max_records_per_subject", s.max_records_per_subject}};
  j["data"] = {{"manifest", c.data.manifest}, {"folds", c.data.folds}, {"fold_seed", c.data.fold_seed}};
  return j;
}

RunConfig from_json(const json& user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  const std::string preset = user.contains("preset") ? user.at("preset").get<std::string>() : "desk";
  const RunConfig base = default_config(preset);
  json full = to_json(base);
  check_keys(user, full, "");
  full.merge_patch(user);
  RunConfig c = base;
  try {
    const auto& a = full.at("arch");
    c.arch.can.in_channels = a.at("in_channels").get<std::size_t>();
    c.arch.can.image_size = a.at("image_size").get<std::size_t>();
    const auto& blocks = a.at("blocks");
    if (!blocks.is_array() || blocks.size() != 3) throw ConfigError("arch.blocks must list exactly 3 conv blocks");
    for (std::size_t i = 0; i < 3; ++i) {
      c.arch.can.blocks[i] = {blocks[i].at("filters").get<std::size_t>(), blocks[i].at("kernel").get<std::size_t>(),
                              blocks[i].at("stride").get<std::size_t>(), blocks[i].at("padding").get<std::size_t>()};
    }
    c.arch.can.width_multiplier = a.at("width_multiplier").get<double>();
    c.arch.can.pool_size = a.at("pool_size").get<std::size_t>();
    c.arch.can.pool_stride = a.at("pool_stride").get<std::size_t>();
    c.arch.dgn.hidden = a.at("dgn_hidden").get<std::array<std::size_t, 2>>();
    c.arch.dgn.fine_groups = a.at("fine_groups").get<std::size_t>();
    c.arch.coarse_groups = a.at("coarse_groups").get<std::size_t>();
    c.arch.age_offset = a.at("age_offset").get<double>();
    c.arch.age_scale = a.at("age_scale").get<double>();
    c.arch.bn_eps = a.at("bn_eps").get<double>();
    c.arch.bn_momentum = a.at("bn_momentum").get<double>();

    const auto& t = full.at("training");
    c.training.can = hyper_from(t.at("can"));
    c.training.dgn = hyper_from(t.at("dgn"));
    c.training.in = hyper_from(t.at("in"));
    c.training.expert = hyper_from(t.at("expert"));
    c.training.mga = hyper_from(t.at("mga"));
    c.training.align = t.at("align").get<bool>();
    c.training.seed = t.at("seed").get<std::uint64_t>();
    const auto& w = full.at("weights");
    c.training.stage2 = weights_from(w.at("stage2"));
    c.training.stage3 = weights_from(w.at("stage3"));
    c.training.stage4 = weights_from(w.at("stage4"));
    const auto& g = full.at("groups");
    c.training.groups = {g.at("young_adult").get<double>(), g.at("adult_elder").get<double>(),
                         g.at("overlap").get<double>(), g.at("fine_groups").get<std::size_t>(),
                         g.at("fine_width").get<double>()};
    const auto& au = full.at("augment");
    c.training.augment = {au.at("enabled").get<bool>(), au.at("flip_probability").get<double>(),
                          au.at("max_rotation_deg").get<double>()};
    const auto& s = full.at("synth");
    c.synth.samples = s.at("samples").get<std::size_t>();
    c.synth.image_size = s.at("image_size").get<std::size_t>();
    c.synth.seed = s.at("seed").get<std::uint64_t>();
    c.synth.young_strength = s.at("young_strength").get<double>();
    c.synth.adult_strength = s.at("adult_strength").get<double>();
    c.synth.elder_strength = s.at("elder_strength").get<double>();
    c.synth.ramp_years = s.at("ramp_years").get<double>();
    c.synth.geometry_strength = s.at("geometry_strength").get<double>();
    c.synth.noise = s.at("noise").get<double>();
    c.synth.max_records_per_subject = s.at("max_records_per_subject").get<std::size_t>();
    const auto& d = full.at("data");
    c.data.manifest = d.at("manifest").get<std::string>();
    c.data.folds = d.at("folds").get<std::size_t>();
    c.data.fold_seed = d.at("fold_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  if (c.arch.dgn.fine_groups != c.training.groups.fine_groups) {
    throw ConfigError("arch.fine_groups and groups.fine_groups must agree");
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  RunConfig c = from_json(j);
  if (!c.data.manifest.empty() && std::filesystem::path(c.data.manifest).is_relative()) {
    c.data.manifest = (path.parent_path() / c.data.manifest).lexically_normal().string();
  }
  return c;
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config file: " + path.string());
  out << to_json(config).dump(2) << '\n';
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
  config.training.seed = seed;
  config.synth.seed = seed;
  config.data.fold_seed = seed;
}

}  // namespace mga::config
