#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "spt/attention.hpp"
#include "spt/errors.hpp"
#include "spt/pruning.hpp"
#include "spt/rng.hpp"
#include "spt/skeleton.hpp"
#include "spt/tensor.hpp"

namespace spt {

enum class PositionalEncoding { learned, sinusoidal };

std::string to_string(PositionalEncoding pe);
PositionalEncoding parse_positional_encoding(std::string_view text);

/// Architecture hyperparameters. The image is average-pooled by `pool`
/// before being cut into patch_h x patch_w patches.
struct ModelConfig {
  std::size_t image_h = 256, image_w = 256;
  std::size_t channels = 3;
  std::size_t pool = 4;
  std::size_t patch_h = 4, patch_w = 4;
  std::size_t embed_dim = 192;
  std::size_t heads = 8;
  std::size_t encoder_layers = 12;
  std::size_t graph_layers = 8;
  std::size_t joint_count = 16;
  std::size_t heatmap_h = 64, heatmap_w = 64;
  std::size_t mlp_ratio = 3;
  std::size_t head_hidden = 256;
  PositionalEncoding positional = PositionalEncoding::learned;
  PruneSchedule schedule;

  std::size_t grid_h() const { return image_h / pool / patch_h; }
  std::size_t grid_w() const { return image_w / pool / patch_w; }
  std::size_t visual_tokens() const { return grid_h() * grid_w(); }
  std::size_t patch_dim() const { return patch_h * patch_w * channels; }
  std::size_t heatmap_size() const { return heatmap_h * heatmap_w; }
  /// Throws ConfigError naming the first broken invariant.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Layer norm, D -> hidden affine, GELU, hidden -> H_h*W_h affine.
struct HeadParams {
  Tensor norm_gain, norm_bias;  // [D]
  Tensor fc1_weight, fc1_bias;  // [D x hidden], [hidden]
  Tensor fc2_weight, fc2_bias;  // [hidden x H_h*W_h], [H_h*W_h]
};

struct PoseModelParams {
  Tensor patch_projection;     // [patch_dim x D]
  Tensor positional_encoding;  // [N_p x D]
  Tensor keypoint_tokens;      // [J x D]
  std::vector<AttentionLayerParams> encoder;
  std::vector<AttentionLayerParams> graph;
  HeadParams head;

  /// Draws every tensor from `seed`. Keypoint tokens and a learned
  /// positional table use N(0, 0.02^2); the sinusoidal table is fixed.
  static PoseModelParams init(const ModelConfig& config, std::uint64_t seed);

  /// Visits (name, tensor) pairs in a fixed order, e.g. "encoder.2.qkv_projection".
  template <typename Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

  std::size_t parameter_count() const;

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    fn(std::string("patch_projection"), self.patch_projection);
    fn(std::string("positional_encoding"), self.positional_encoding);
    fn(std::string("keypoint_tokens"), self.keypoint_tokens);
    for (std::size_t i = 0; i < self.encoder.size(); ++i) {
      const std::string prefix = "encoder." + std::to_string(i) + ".";
      self.encoder[i].for_each([&](const char* name, auto& t) { fn(prefix + name, t); });
    }
    for (std::size_t i = 0; i < self.graph.size(); ++i) {
      const std::string prefix = "graph." + std::to_string(i) + ".";
      self.graph[i].for_each([&](const char* name, auto& t) { fn(prefix + name, t); });
    }
    fn(std::string("head.norm_gain"), self.head.norm_gain);
    fn(std::string("head.norm_bias"), self.head.norm_bias);
    fn(std::string("head.fc1_weight"), self.head.fc1_weight);
    fn(std::string("head.fc1_bias"), self.head.fc1_bias);
    fn(std::string("head.fc2_weight"), self.head.fc2_weight);
    fn(std::string("head.fc2_bias"), self.head.fc2_bias);
  }
};

/// Fixed 2D sin/cos table [grid_h*grid_w x D]: the first half of the
/// channels encodes the row, the second half the column.
Tensor sinusoidal_encoding(std::size_t grid_h, std::size_t grid_w, std::size_t embed_dim);

/// Average-pools `image` [C x H x W] by `config.pool` and flattens each
/// patch (channel, row, column order) into one row, patches in row-major order.
Tensor extract_patches(const Tensor& image, const ModelConfig& config);

/// Visual tokens X_v = patches . W_p + E, [N_p x D]. Throws ConfigError on an extent mismatch.
Tensor patchify_embed(const Tensor& image, const PoseModelParams& params, const ModelConfig& config);

struct ForwardOptions {
  bool retain_records = false;
};

struct ForwardDiagnostics {
  MaskState mask_state;
  SparsityStats sparsity;
  std::vector<AttentionRecord> encoder_records;  // filled when retain_records
  std::vector<AttentionRecord> graph_records;
};

struct ForwardResult {
  Tensor heatmaps;  // [J x H_h x W_h]
  ForwardDiagnostics diagnostics;
};

/// Full network: [X_k, X_v] through the pruned encoder stack, keypoint rows
/// through the graph stack under `joint_mask`, then the heatmap head.
ForwardResult forward(const Tensor& image, const PoseModelParams& params, const ModelConfig& config,
                      const JointMask& joint_mask, const ForwardOptions& options = {});

/// Mean squared error over visible joints; zero when none is visible.
Tensor loss_mse(const Tensor& pred, const Tensor& target, const std::vector<bool>& visible);

struct TrainingSample {
  Tensor image;    // [C x H x W]
  Tensor target;   // [J x H_h x W_h]
  std::vector<bool> visible;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;  // per parameter, in for_each order
};

/// Raised when a sample's loss is NaN or Inf. `step` is the 1-based
/// training step when known (0 otherwise); `sample_index` indexes the batch.
class NonFiniteLossError : public NumericError {
 public:
  NonFiniteLossError(std::size_t sample_index, double loss, std::size_t step = 0);
  std::size_t sample_index() const noexcept { return sample_index_; }
  double loss() const noexcept { return loss_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t sample_index_;
  double loss_;
  std::size_t step_;
};

/// Names of the parameters the optimizer updates (all but a fixed sinusoidal table).
bool is_trainable(const std::string& name, const ModelConfig& config);

/// Gradient of the batch-mean loss for every trainable parameter, in
/// for_each order (empty for frozen ones), plus the loss value. Samples are
/// spread over SPT_THREADS workers and reduced in sample order.
struct BatchGradient {
  double loss = 0.0;
  std::vector<std::vector<double>> grads;
};
BatchGradient batch_gradient(std::span<const TrainingSample> batch, const PoseModelParams& params,
                             const ModelConfig& config, const JointMask& joint_mask);

/// One Adam update on the batch-mean loss; returns the loss before the update.
double train_step(std::span<const TrainingSample> batch, PoseModelParams& params, const ModelConfig& config,
                  const JointMask& joint_mask, AdamState& state, const AdamConfig& adam = {});

struct TrainOptions {
  std::size_t steps = 0;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  AdamConfig adam;
};

/// Per-step callback: (1-based step, batch loss).
using StepCallback = std::function<void(std::size_t, double)>;

/// Runs `options.steps` Adam steps. Each epoch visits the samples in an order
/// shuffled by Rng(seed, epoch); a short final batch wraps into the next epoch.
/// NonFiniteLossError messages gain the step number.
void train_model(PoseModelParams& params, const ModelConfig& config, const JointMask& joint_mask,
                 std::span<const TrainingSample> samples, const TrainOptions& options,
                 const StepCallback& on_step = {});

/// Worker count from SPT_THREADS, defaulting to the hardware concurrency.
std::size_t worker_threads();

/// Directory of SPT1 tensors plus manifest.json holding the config and a name -> file map.
void save_checkpoint(const std::filesystem::path& dir, const PoseModelParams& params, const ModelConfig& config,
                     const nlohmann::json& extra = nlohmann::json::object());
struct Checkpoint {
  ModelConfig config;
  PoseModelParams params;
  nlohmann::json manifest;
};
/// Throws IncompatibleError when tensors disagree with the recorded config.
Checkpoint load_checkpoint(const std::filesystem::path& dir);
/// Throws IncompatibleError when `expected` differs architecturally from the checkpoint's config.
void check_compatible(const ModelConfig& expected, const ModelConfig& actual);

}  // namespace spt
