#include "spt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "spt/errors.hpp"
#include "spt/io.hpp"
#include "spt/rng.hpp"

namespace spt {
namespace {

std::string fmt_point(double x, double y) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "(%g, %g)", x, y);
  return buf;
}

// 1-based line and column of a 1-based byte offset.
std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double cx = ax + t * dx - px, cy = ay + t * dy - py;
  return std::sqrt(cx * cx + cy * cy);
}

int offset(Rng& rng, int amplitude) {
  return static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * amplitude + 1))) - amplitude;
}

}  // namespace

std::vector<std::string> validate_annotation(const Annotation& ann, std::optional<std::size_t> image_h,
                                             std::optional<std::size_t> image_w) {
  std::vector<std::string> out;
  if (ann.joints.size() != ann.visible.size()) {
    out.push_back("joints and visible lengths differ (" + std::to_string(ann.joints.size()) + " vs " +
                  std::to_string(ann.visible.size()) + ")");
  }
  if (!(std::isfinite(ann.head_size) && ann.head_size > 0.0)) {
    out.push_back("head_size must be positive and finite, got " + std::to_string(ann.head_size));
  }
  for (std::size_t j = 0; j < ann.joints.size(); ++j) {
    const auto [x, y] = ann.joints[j];
    if (!std::isfinite(x) || !std::isfinite(y)) {
      out.push_back("joint " + std::to_string(j) + " has a non-finite coordinate");
      continue;
    }
    if (j >= ann.visible.size() || !ann.visible[j]) continue;
    const double max_x = image_w ? static_cast<double>(*image_w) - 1.0 : INFINITY;
    const double max_y = image_h ? static_cast<double>(*image_h) - 1.0 : INFINITY;
    if (x < 0.0 || y < 0.0 || x > max_x || y > max_y) {
      out.push_back("visible joint " + std::to_string(j) + " at " + fmt_point(x, y) + " lies outside the image");
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const Annotation& a) {
  j = nlohmann::json::object();
  if (const auto* ref = std::get_if<SyntheticRef>(&a.image)) {
    j["image"] = {{"seed", ref->seed}, {"index", ref->index}};
  } else {
    j["image"] = std::get<std::string>(a.image);
  }
  auto& joints = j["joints"] = nlohmann::json::array();
  for (const auto& [x, y] : a.joints) joints.push_back({x, y});
  auto& visible = j["visible"] = nlohmann::json::array();
  for (bool v : a.visible) visible.push_back(v);
  j["head_size"] = a.head_size;
}

void from_json(const nlohmann::json& j, Annotation& a) {
  const auto& image = j.at("image");
  if (image.is_string()) {
    a.image = image.get<std::string>();
  } else {
    a.image = SyntheticRef{image.at("seed").get<std::uint64_t>(), image.at("index").get<std::uint64_t>()};
  }
  a.joints.clear();
  for (const auto& p : j.at("joints")) {
    if (!p.is_array() || p.size() != 2) throw ValidationError("joint entries must be [x, y] pairs");
    a.joints.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  a.visible.clear();
  for (const auto& v : j.at("visible")) a.visible.push_back(v.get<bool>());
  a.head_size = j.at("head_size").get<double>();
}

std::vector<Annotation> parse_annotations(const std::string& text, const std::string& source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte);
    throw ValidationError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
  if (!doc.is_array()) throw ValidationError(source + ": expected a JSON array of annotation records");
  std::vector<Annotation> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    Annotation a;
    try {
      a = doc[i].get<Annotation>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(source + ": record " + std::to_string(i) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(source + ": record " + std::to_string(i) + ": " + e.what());
    }
    const auto problems = validate_annotation(a);
    if (!problems.empty()) throw ValidationError(source + ": record " + std::to_string(i) + ": " + problems.front());
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Annotation> load_annotations(const std::filesystem::path& path) {
  return parse_annotations(read_text_file(path), path.string());
}

void save_annotations(const std::filesystem::path& path, const std::vector<Annotation>& anns) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& a : anns) doc.push_back(a);
  write_text_file(path, doc.dump(1) + "\n");
}

void SyntheticSceneConfig::validate() const {
  if (image_h < 2 || image_w < 2) throw ConfigError("synthetic images must be at least 2x2");
  if (!(limb_thickness >= 0.0)) throw ConfigError("limb_thickness must be non-negative");
  if (!(limb_intensity >= 0.0 && limb_intensity < 1.0)) throw ConfigError("limb_intensity must be in [0, 1)");
  if (!(blob_sigma > 0.0)) throw ConfigError("blob_sigma must be positive");
  if (shift < 0 || jitter < 0) throw ConfigError("shift and jitter must be non-negative");
  if (!(occlusion >= 0.0 && occlusion <= 1.0)) throw ConfigError("occlusion must be in [0, 1]");
}

void to_json(nlohmann::json& j, const SyntheticSceneConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"skeleton", c.skeleton},
                     {"image_h", c.image_h},
                     {"image_w", c.image_w},
                     {"limb_thickness", c.limb_thickness},
                     {"limb_intensity", c.limb_intensity},
                     {"blob_sigma", c.blob_sigma},
                     {"shift", c.shift},
                     {"jitter", c.jitter},
                     {"occlusion", c.occlusion}};
}

void from_json(const nlohmann::json& j, SyntheticSceneConfig& c) {
  if (!j.is_object()) throw ConfigError("synthetic scene config must be a JSON object");
  static const std::set<std::string> known{"seed",         "skeleton",       "image_h",    "image_w", "limb_thickness",
                                           "limb_intensity", "blob_sigma", "shift",   "jitter",  "occlusion"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown synthetic scene field '" + key + "'");
  c.seed = j.value("seed", c.seed);
  c.skeleton = j.value("skeleton", c.skeleton);
  c.image_h = j.value("image_h", c.image_h);
  c.image_w = j.value("image_w", c.image_w);
  c.limb_thickness = j.value("limb_thickness", c.limb_thickness);
  c.limb_intensity = j.value("limb_intensity", c.limb_intensity);
  c.blob_sigma = j.value("blob_sigma", c.blob_sigma);
  c.shift = j.value("shift", c.shift);
  c.jitter = j.value("jitter", c.jitter);
  c.occlusion = j.value("occlusion", c.occlusion);
}

Sample generate_sample(const SyntheticSceneConfig& config, const SkeletonSpec& skeleton, std::uint64_t index) {
  if (skeleton.template_pose.size() != skeleton.joint_count) {
    throw ConfigError("skeleton has no template pose to generate figures from");
  }
  const std::size_t h = config.image_h, w = config.image_w, jn = skeleton.joint_count;
  Rng rng = Rng::for_index(config.seed, index);
  const int gx = offset(rng, config.shift), gy = offset(rng, config.shift);

  Sample s;
  auto& ann = s.annotation;
  ann.image = SyntheticRef{config.seed, index};
  for (std::size_t j = 0; j < jn; ++j) {
    const auto [tx, ty] = skeleton.template_pose[j];
    const int jx = offset(rng, config.jitter), jy = offset(rng, config.jitter);
    const bool hidden = rng.uniform() < config.occlusion;
    const double x = std::lround(tx * static_cast<double>(w - 1)) + gx + jx;
    const double y = std::lround(ty * static_cast<double>(h - 1)) + gy + jy;
    ann.joints.emplace_back(std::clamp(x, 0.0, static_cast<double>(w - 1)),
                            std::clamp(y, 0.0, static_cast<double>(h - 1)));
    ann.visible.push_back(!hidden);
  }

  const auto head = skeleton.find("head-top"), neck = skeleton.find("upper-neck");
  if (head && neck) {
    const double dx = ann.joints[*head].first - ann.joints[*neck].first;
    const double dy = ann.joints[*head].second - ann.joints[*neck].second;
    ann.head_size = std::max(1.0, std::hypot(dx, dy));
  } else {
    ann.head_size = std::max(1.0, 0.1 * static_cast<double>(std::max(h, w)));
  }

  std::vector<double> pixels(h * w, 0.0);
  const double half = 0.5 * config.limb_thickness;
  const double inv = 1.0 / (2.0 * config.blob_sigma * config.blob_sigma);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double px = static_cast<double>(x), py = static_cast<double>(y);
      double v = 0.0;
      for (const auto& [a, b] : skeleton.edges) {
        const auto [ax, ay] = ann.joints[a];
        const auto [bx, by] = ann.joints[b];
        if (segment_distance(px, py, ax, ay, bx, by) <= half) {
          v = config.limb_intensity;
          break;
        }
      }
      for (std::size_t j = 0; j < jn; ++j) {
        if (!ann.visible[j]) continue;
        const double dx = px - ann.joints[j].first, dy = py - ann.joints[j].second;
        v = std::max(v, std::exp(-(dx * dx + dy * dy) * inv));
      }
      pixels[y * w + x] = v;
    }
  }
  s.image = Tensor({1, h, w}, std::move(pixels));
  return s;
}

std::vector<Sample> generate_synthetic(const SyntheticSceneConfig& config, std::size_t count,
                                       std::uint64_t first_index) {
  config.validate();
  const auto skeleton = resolve_skeleton(config.skeleton);
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_sample(config, skeleton, first_index + i));
  return out;
}

Tensor render_target_heatmaps(const Annotation& ann, std::size_t image_h, std::size_t image_w, std::size_t heatmap_h,
                              std::size_t heatmap_w, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("heatmap sigma must be positive");
  const std::size_t jn = ann.joints.size();
  const double sx = static_cast<double>(heatmap_w) / static_cast<double>(image_w);
  const double sy = static_cast<double>(heatmap_h) / static_cast<double>(image_h);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> data(jn * heatmap_h * heatmap_w, 0.0);
  for (std::size_t j = 0; j < jn; ++j) {
    if (!ann.visible[j]) continue;
    const double cx = ann.joints[j].first * sx, cy = ann.joints[j].second * sy;
    double* map = &data[j * heatmap_h * heatmap_w];
    for (std::size_t y = 0; y < heatmap_h; ++y) {
      for (std::size_t x = 0; x < heatmap_w; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        map[y * heatmap_w + x] = std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  return Tensor({jn, heatmap_h, heatmap_w}, std::move(data));
}

std::vector<TrainingSample> make_training_samples(const std::vector<Sample>& samples, const ModelConfig& config,
                                                  double sigma) {
  std::vector<TrainingSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.image.shape() != Shape{config.channels, config.image_h, config.image_w}) {
      throw ConfigError("sample image " + shape_to_string(s.image.shape()) + " does not match the model input [" +
                        std::to_string(config.channels) + "x" + std::to_string(config.image_h) + "x" +
                        std::to_string(config.image_w) + "]");
    }
    if (s.annotation.joints.size() != config.joint_count) {
      throw ConfigError("annotation has " + std::to_string(s.annotation.joints.size()) + " joints, model expects " +
                        std::to_string(config.joint_count));
    }
    out.push_back(TrainingSample{s.image,
                                 render_target_heatmaps(s.annotation, config.image_h, config.image_w,
                                                        config.heatmap_h, config.heatmap_w, sigma),
                                 s.annotation.visible});
  }
  return out;
}

std::string dataset_digest(const std::vector<Sample>& samples) {
  std::uint64_t h = fnv1a64(std::string_view{});
  for (const auto& s : samples) {
    nlohmann::json ann = s.annotation;
    ann.erase("image");
    h = fnv1a64(ann.dump(), h);
    std::vector<std::uint8_t> bytes(s.image.size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
      bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(s.image[i], 0.0, 1.0) * 255.0));
    h = fnv1a64(bytes, h);
  }
  return hex_digest(h);
}

std::string write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                          std::string_view comment) {
  std::vector<Annotation> anns;
  anns.reserve(samples.size());
  std::filesystem::create_directories(dir / "images");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "images/%06zu.pgm", i);
    const auto& img = samples[i].image;
    save_pgm(dir / name, reshape(img, {img.dim(1), img.dim(2)}), comment);
    anns.push_back(samples[i].annotation);
    anns.back().image = std::string(name);
  }
  save_annotations(dir / "annotations.json", anns);
  return dataset_digest(samples);
}

std::vector<Sample> load_dataset(const std::filesystem::path& path, const SyntheticSceneConfig* scene) {
  const auto file = std::filesystem::is_directory(path) ? path / "annotations.json" : path;
  const auto anns = load_annotations(file);
  const auto base = file.parent_path();
  std::optional<SkeletonSpec> skeleton;
  std::vector<Sample> out;
  out.reserve(anns.size());
  for (std::size_t i = 0; i < anns.size(); ++i) {
    Sample s;
    s.annotation = anns[i];
    if (const auto* ref = std::get_if<SyntheticRef>(&anns[i].image)) {
      if (!scene) throw ValidationError(file.string() + ": record " + std::to_string(i) +
                                        " references a synthetic image but no scene config was given");
      if (!skeleton) skeleton = resolve_skeleton(scene->skeleton);
      auto cfg = *scene;
      cfg.seed = ref->seed;
      s.image = generate_sample(cfg, *skeleton, ref->index).image;
    } else {
      s.image = load_pgm(base / std::get<std::string>(anns[i].image));
    }
    const auto problems = validate_annotation(s.annotation, s.image.dim(1), s.image.dim(2));
    if (!problems.empty()) {
      throw ValidationError(file.string() + ": record " + std::to_string(i) + ": " + problems.front());
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace spt
