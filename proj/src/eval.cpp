#include "mga/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mga/errors.hpp"
#include "mga/text.hpp"

namespace mga::eval {

std::optional<int> predicted_fine_group(const Prediction& p, const pipeline::AgeGroupScheme& scheme) {
  if (!p.fine_group.empty()) {
    return static_cast<int>(std::max_element(p.fine_group.begin(), p.fine_group.end()) - p.fine_group.begin());
  }
  if (p.age) return pipeline::assign_fine_group(std::max(0.0, *p.age), scheme);
  return std::nullopt;
}

EvalReport compute_metrics(std::span<const Prediction> predictions, std::span<const Truth> truths,
                           const pipeline::AgeGroupScheme& scheme) {
  if (predictions.size() != truths.size()) {
    throw ContractError("compute_metrics: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(truths.size()) + " truths");
  }
  if (predictions.empty()) throw ContractError("compute_metrics: no samples");
  EvalReport r;
  r.count = predictions.size();
  std::size_t correct = 0;
  std::array<std::size_t, 3> group_correct{};
  bool all_ages = true;
  bool all_fine = true;
  double abs_error = 0.0;
  std::size_t exact = 0;
  std::size_t one_off = 0;
  Confusion fine(scheme.fine_groups);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& t = truths[i];
    if (t.gender != 0 && t.gender != 1) throw ContractError("compute_metrics: gender labels must be 0 or 1");
    const int label = p.gender_label();
    r.gender_confusion.at(static_cast<std::size_t>(t.gender), static_cast<std::size_t>(label))++;
    const auto g = static_cast<std::size_t>(pipeline::assign_coarse_group(t.age, scheme));
    r.group_counts[g]++;
    if (label == t.gender) {
      ++correct;
      group_correct[g]++;
    }
    if (p.age) {
      abs_error += std::abs(*p.age - t.age);
    } else {
      all_ages = false;
    }
    const auto pf = predicted_fine_group(p, scheme);
    if (pf && *pf >= 0 && static_cast<std::size_t>(*pf) < scheme.fine_groups) {
      const int tf = pipeline::assign_fine_group(t.age, scheme);
      if (*pf == tf) ++exact;
      if (std::abs(*pf - tf) <= 1) ++one_off;
      fine.at(static_cast<std::size_t>(tf), static_cast<std::size_t>(*pf))++;
    } else {
      all_fine = false;
    }
  }
  const double n = static_cast<double>(r.count);
  r.gender_accuracy = 100.0 * static_cast<double>(correct) / n;
  for (std::size_t g = 0; g < 3; ++g) {
    if (r.group_counts[g] > 0) {
      r.group_gender_accuracy[g] = 100.0 * static_cast<double>(group_correct[g]) / static_cast<double>(r.group_counts[g]);
    }
  }
  if (all_ages) r.age_mae = abs_error / n;
  if (all_fine) {
    r.exact = 100.0 * static_cast<double>(exact) / n;
    r.one_off = 100.0 * static_cast<double>(one_off) / n;
    r.fine_confusion = fine;
  }
  return r;
}

namespace {

nlohmann::json confusion_json(const Confusion& c) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t t = 0; t < c.classes; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < c.classes; ++p) row.push_back(c.at(t, p));
    rows.push_back(row);
  }
  return rows;
}

template <class T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

void write_grid(const std::filesystem::path& path, const Tensor& grid) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const std::size_t h = grid.dim(0);
  const std::size_t w = grid.dim(1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) out << (x ? "," : "") << text::format_double(grid[y * w + x]);
    out << '\n';
  }
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["count"] = r.count;
  j["gender_accuracy"] = r.gender_accuracy;
  nlohmann::json groups;
  for (std::size_t g = 0; g < 3; ++g) {
    const char* name = pipeline::to_string(static_cast<pipeline::AgeGroup>(g));
    groups[name] = {{"count", r.group_counts[g]}, {"gender_accuracy", opt(r.group_gender_accuracy[g])}};
  }
  j["groups"] = groups;
  j["age_mae"] = opt(r.age_mae);
  j["fine_group_exact"] = opt(r.exact);
  j["fine_group_one_off"] = opt(r.one_off);
  j["gender_confusion"] = confusion_json(r.gender_confusion);
  j["fine_group_confusion"] = r.fine_confusion ? confusion_json(*r.fine_confusion) : nlohmann::json(nullptr);
  return j;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write report: " + path.string());
  out << to_json(report).dump(2) << '\n';
}

// --- CAM -----------------------------------------------------------------------

Tensor class_activation_map(const Tensor& maps, std::span<const double> weights) {
  if (maps.rank() != 3) throw DimensionError("CAM needs K×h×w feature maps, got " + nn::shape_string(maps.shape()));
  const std::size_t k = maps.dim(0);
  if (weights.size() != k) {
    throw DimensionError("CAM: " + std::to_string(weights.size()) + " weights for " + std::to_string(k) + " maps");
  }
  const std::size_t hw = maps.dim(1) * maps.dim(2);
  Tensor out({maps.dim(1), maps.dim(2)}, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < hw; ++i) out[i] += weights[c] * maps[c * hw + i];
  }
  return out;
}

Tensor bilinear_upsample(const Tensor& map, std::size_t height, std::size_t width) {
  if (map.rank() != 2) throw DimensionError("bilinear_upsample needs an h×w map");
  const std::size_t h = map.dim(0);
  const std::size_t w = map.dim(1);
  Tensor out({height, width});
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(fy));
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ay = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(fx));
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double ax = fx - static_cast<double>(x0);
      out[y * width + x] = (1 - ay) * ((1 - ax) * map[y0 * w + x0] + ax * map[y0 * w + x1]) +
                           ay * ((1 - ax) * map[y1 * w + x0] + ax * map[y1 * w + x1]);
    }
  }
  return out;
}

CamResult compute_cam(nn::ParameterStore& store, const models::ArchConfig& arch, const data::Image& image,
                      int target, const std::string& head) {
  std::size_t offset = 0;
  if (head == "can.gender") {
    offset = 0;
  } else if (head == "in.gender" || head.rfind("expert.", 0) == 0) {
    offset = arch.dgn_feature_dim();
  } else {
    throw ContractError("CAM: head '" + head + "' is not fed by the pooled CAN maps");
  }
  if (!store.contains(head + ".weight")) throw StateError("CAM: the store has no head '" + head + "'");
  if (target != 0 && target != 1) throw ContractError("CAM: target must be a gender label (0 or 1)");
  const Tensor& weight = store.get(head + ".weight").value();
  const std::size_t k = arch.can_feature_dim();
  if (weight.rank() != 2 || weight.dim(0) != 2 || weight.dim(1) != offset + k) {
    throw DimensionError("CAM: head '" + head + "' has shape " + nn::shape_string(weight.shape()));
  }
  std::vector<double> w(weight.data() + static_cast<std::size_t>(target) * weight.dim(1) + offset,
                        weight.data() + static_cast<std::size_t>(target) * weight.dim(1) + offset + k);

  const std::size_t size = arch.can.image_size;
  if (image.channels != arch.can.in_channels || image.height != size || image.width != size) {
    throw DimensionError("CAM: image does not match the CAN input size");
  }
  Tensor input({1, image.channels, size, size});
  std::copy(image.pixels.begin(), image.pixels.end(), input.data());
  const nn::NoGradGuard no_grad;
  const auto trunk = models::CanModel(arch).trunk(store, nn::Var::constant(std::move(input)), models::Mode::Infer);
  const Tensor& maps4 = trunk.maps.value();
  const Tensor maps = maps4.reshaped({maps4.dim(1), maps4.dim(2), maps4.dim(3)});

  CamResult r;
  r.head = head;
  r.target = target;
  r.raw = class_activation_map(maps, w);
  r.upsampled = bilinear_upsample(r.raw, size, size);
  const auto [lo, hi] = std::minmax_element(r.upsampled.values().begin(), r.upsampled.values().end());
  r.min = *lo;
  r.max = *hi;
  return r;
}

void write_cam(const std::filesystem::path& stem, const CamResult& cam) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  const std::size_t h = cam.upsampled.dim(0);
  const std::size_t w = cam.upsampled.dim(1);
  data::Image img(1, h, w);
  const double span = cam.max - cam.min;
  for (std::size_t i = 0; i < h * w; ++i) img.pixels[i] = span > 0 ? (cam.upsampled[i] - cam.min) / span : 0.0;
  auto with = [&](const char* ext) { return std::filesystem::path(stem.string() + ext); };
  data::write_pnm(with(".pgm"), img);
  write_grid(with(".csv"), cam.upsampled);
  write_grid(with(".raw.csv"), cam.raw);
  nlohmann::json meta{{"head", cam.head},
                      {"target", cam.target},
                      {"min", cam.min},
                      {"max", cam.max},
                      {"height", h},
                      {"width", w},
                      {"raw_height", cam.raw.dim(0)},
                      {"raw_width", cam.raw.dim(1)}};
  std::ofstream out(with(".json"), std::ios::trunc);
  if (!out) throw DataError("cannot write CAM metadata for " + stem.string());
  out << meta.dump(2) << '\n';
}

}  // namespace mga::eval
