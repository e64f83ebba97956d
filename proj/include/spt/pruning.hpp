#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "spt/attention.hpp"
#include "spt/mask.hpp"
#include "spt/tensor.hpp"

namespace spt {

/// How many columns a row keeps at an update.
enum class KMode {
  support_relative,  // K = max(1, round(akr * current row support))
  n_relative,        // K = max(1, round(akr * N)), capped by the current support
};

std::string to_string(KMode mode);
/// Accepts "support-relative" and "n-relative".
KMode parse_k_mode(std::string_view text);

/// Encoder layers (1-indexed) whose attention re-derives the visual mask,
/// and the fraction of connections kept per row at each update.
struct PruneSchedule {
  std::vector<std::size_t> update_layers{3, 6, 9};
  double akr = 1.0;
  KMode k_mode = KMode::support_relative;

  /// Throws ConfigError unless layers are strictly increasing in [1, encoder_layers] and akr is in (0, 1].
  void validate(std::size_t encoder_layers) const;
  bool is_update_layer(std::size_t layer) const;
  /// Update layers that fall inside a stack of `encoder_layers`.
  std::size_t active_updates(std::size_t encoder_layers) const;
};

/// Evolving visual-token mask of one forward pass.
struct MaskState {
  AttentionMask current;
  std::size_t stage = 0;
  /// Total support after each stage; history[0] is the initial all-ones mask.
  std::vector<std::size_t> history;
  /// Mask after each stage; snapshots[0] is the initial mask.
  std::vector<AttentionMask> snapshots;

  static MaskState initial(std::size_t visual_tokens);
};

/// Half-away-from-zero rounding of akr * base, floored at one.
std::size_t keep_count(std::size_t support, std::size_t n, double akr, KMode mode);

/// Per row, keeps the K highest-scoring columns among those set in `prev`.
/// Equal scores prefer the lower column index. Throws ConfigError when akr
/// is outside (0, 1].
AttentionMask topk_row_mask(const Tensor& avg_attention, const AttentionMask& prev, double akr,
                            KMode mode = KMode::support_relative);

/// Advances `state` after encoder layer `layer_index` has run. At an update
/// layer the head-averaged attention restricted to the visual block (rows and
/// columns starting at `visual_offset`) prunes the current mask; the new mask
/// governs the following layers. Throws ContractError when an update layer
/// has no record.
MaskState apply_schedule(std::size_t layer_index, const AttentionRecord* record, MaskState state,
                         const PruneSchedule& schedule, std::size_t visual_offset = 0);

struct SparsityStats {
  std::size_t stages = 0;
  /// Visual-block density (support / N^2) after each stage, starting with the initial mask.
  std::vector<double> per_stage_density;
  /// Mean over encoder layers of the visual-block density in effect at that layer.
  double layer_weighted_density = 1.0;
  /// Attention-stage multiply-accumulates (QK^T plus AV) over all encoder
  /// layers and tokens, keypoint rows and columns included.
  double attention_macs = 0.0;
  double dense_attention_macs = 0.0;
  double mac_ratio = 1.0;
};

/// `keypoint_tokens` rows and columns are always dense; `embed_dim` scales the MAC counts.
SparsityStats sparsity_report(const MaskState& state, const PruneSchedule& schedule, std::size_t encoder_layers,
                              std::size_t keypoint_tokens = 0, std::size_t embed_dim = 1);

void to_json(nlohmann::json& j, const PruneSchedule& s);
void from_json(const nlohmann::json& j, PruneSchedule& s);
void to_json(nlohmann::json& j, const SparsityStats& s);

}  // namespace spt
