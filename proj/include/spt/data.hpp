#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "spt/model.hpp"
#include "spt/skeleton.hpp"
#include "spt/tensor.hpp"

namespace spt {

/// Identifies the synthetic sample an annotation was generated from.
struct SyntheticRef {
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  friend bool operator==(const SyntheticRef&, const SyntheticRef&) = default;
};

/// Ground truth for one image: joint (x, y) pixel coordinates, visibility,
/// and the head segment length that normalizes PCKh distances.
struct Annotation {
  std::vector<std::pair<double, double>> joints;
  std::vector<bool> visible;
  double head_size = 1.0;
  std::variant<std::string, SyntheticRef> image;
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// Empty when valid. With extents, visible joints must lie in [0, w-1] x [0, h-1].
std::vector<std::string> validate_annotation(const Annotation& ann, std::optional<std::size_t> image_h = {},
                                             std::optional<std::size_t> image_w = {});

void to_json(nlohmann::json& j, const Annotation& a);
void from_json(const nlohmann::json& j, Annotation& a);

/// Parses and validates an annotation array. Throws ValidationError with
/// line:column context on malformed JSON and the record index on a broken invariant.
std::vector<Annotation> parse_annotations(const std::string& text, const std::string& source = "<annotations>");
std::vector<Annotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const std::vector<Annotation>& anns);

/// Stick-figure scene parameters. Joints sit at integer pixels: the
/// template pose is shifted by a uniform global offset in [-shift, shift]
/// and each joint by a further uniform offset in [-jitter, jitter].
struct SyntheticSceneConfig {
  std::uint64_t seed = 1;
  std::string skeleton = "builtin:toy";
  std::size_t image_h = 32, image_w = 32;
  double limb_thickness = 1.0;
  double limb_intensity = 0.5;
  double blob_sigma = 1.0;
  int shift = 3;
  int jitter = 2;
  /// Probability that a joint is hidden (not drawn, marked invisible).
  double occlusion = 0.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticSceneConfig& c);
void from_json(const nlohmann::json& j, SyntheticSceneConfig& c);

struct Sample {
  Tensor image;  // [1 x H x W], values in [0, 1]
  Annotation annotation;
};

/// Sample `index` of the family seeded by `config.seed`; independent of other indices.
Sample generate_sample(const SyntheticSceneConfig& config, const SkeletonSpec& skeleton, std::uint64_t index);
/// Samples first_index .. first_index + count - 1.
std::vector<Sample> generate_synthetic(const SyntheticSceneConfig& config, std::size_t count,
                                       std::uint64_t first_index = 0);

/// Unnormalized Gaussians of deviation `sigma` (heatmap pixels), peak 1, at
/// each visible joint scaled by heatmap/image extent; invisible joints give zero maps.
Tensor render_target_heatmaps(const Annotation& ann, std::size_t image_h, std::size_t image_w, std::size_t heatmap_h,
                              std::size_t heatmap_w, double sigma);

/// Images, targets and visibility for training.
std::vector<TrainingSample> make_training_samples(const std::vector<Sample>& samples, const ModelConfig& config,
                                                  double sigma);

/// Writes images/NNNNNN.pgm and annotations.json (image fields point at the
/// PGM files). Returns the dataset digest.
std::string write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                          std::string_view comment = {});

/// Loads annotations.json or an annotation file plus its images. Image
/// paths resolve relative to the annotation file; synthetic references are
/// regenerated from `scene`.
std::vector<Sample> load_dataset(const std::filesystem::path& path, const SyntheticSceneConfig* scene = nullptr);

/// Content hash over joints, visibility, head sizes and 8-bit image bytes.
std::string dataset_digest(const std::vector<Sample>& samples);

}  // namespace spt
