#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "spt/data.hpp"
#include "spt/model.hpp"
#include "spt/pruning.hpp"
#include "spt/skeleton.hpp"
#include "spt/tensor.hpp"

namespace spt {

enum class Decoder {
  refined,  // argmax plus a quarter-pixel step toward the larger axis neighbour
  argmax,
};

std::string to_string(Decoder d);
/// Accepts "refined" and "argmax".
Decoder parse_decoder(std::string_view text);

using Point = std::pair<double, double>;

/// Peak of `heatmap` [H_h x W_h] in input-image pixels. Ties go to the lowest
/// row-major index; coordinates scale by image/heatmap extent.
Point decode_heatmap(const Tensor& heatmap, std::size_t image_h, std::size_t image_w,
                     Decoder decoder = Decoder::refined);
/// One point per joint of `heatmaps` [J x H_h x W_h].
std::vector<Point> decode_heatmaps(const Tensor& heatmaps, std::size_t image_h, std::size_t image_w,
                                   Decoder decoder = Decoder::refined);

/// Per-joint PCKh rates at each threshold. A joint never visible in the
/// ground truth has no rate (NaN, null in JSON) and is left out of the mean.
struct PckhReport {
  std::vector<std::string> joint_names;
  std::vector<double> thresholds;
  std::vector<std::vector<double>> rates;  // [threshold][joint]
  std::vector<double> means;               // [threshold]
  std::vector<std::size_t> visible_counts;  // [joint]
  std::size_t samples = 0;

  /// Mean at `alpha`; throws ContractError when it was not evaluated.
  double mean_at(double alpha) const;
  /// Per-joint rates at `alpha`.
  const std::vector<double>& rates_at(double alpha) const;
};

/// Joint j of sample i is correct iff visible and ||pred - truth|| <= alpha * head_size.
/// Throws DimensionError on mismatched lengths, ConfigError on a non-positive alpha
/// or an empty set.
PckhReport pckh(const std::vector<std::vector<Point>>& preds, const std::vector<Annotation>& anns,
                const std::vector<double>& thresholds, std::vector<std::string> joint_names = {});

void to_json(nlohmann::json& j, const PckhReport& r);

/// Aligned rows of percentages: label, one column per joint at `primary`,
/// then Mean (at `primary`) and Mean@0.1.
std::string format_pckh_table(const std::vector<std::pair<std::string, PckhReport>>& rows,
                              std::string_view label_header = "Method", double primary = 0.5);

struct Evaluation {
  std::vector<std::vector<Point>> predictions;
  PckhReport report;
  SparsityStats sparsity;  // from the first sample; counts do not depend on the input
};

/// Grad-free forward over `samples`, decoded and scored.
Evaluation evaluate(const PoseModelParams& params, const ModelConfig& config, const JointMask& joint_mask,
                    const std::vector<Sample>& samples, const std::vector<double>& thresholds,
                    Decoder decoder = Decoder::refined, const std::vector<std::string>& joint_names = {});

struct SweepSettings {
  ModelConfig model;
  TrainOptions training;
  std::uint64_t init_seed = 1;
  double target_sigma = 1.0;
  std::vector<double> thresholds{0.5, 0.1};
  Decoder decoder = Decoder::refined;
};

struct SweepRow {
  double akr = 1.0;
  PckhReport report;
  SparsityStats sparsity;
  double final_loss = 0.0;
};

/// Trains one identically seeded model per akr on `train` and scores it on `test`.
/// Throws ConfigError when an akr is outside (0, 1].
std::vector<SweepRow> ablation_sweep(const std::vector<double>& akr_values, const SweepSettings& settings,
                                     const SkeletonSpec& skeleton, const std::vector<Sample>& train,
                                     const std::vector<Sample>& test);

/// PCKh table (one row per akr) followed by a sparsity table.
std::string format_sweep_table(const std::vector<SweepRow>& rows, double primary = 0.5);

void to_json(nlohmann::json& j, const SweepRow& r);

}  // namespace spt
