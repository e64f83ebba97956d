#include "spt/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spt/errors.hpp"

namespace spt {

std::string to_string(KMode mode) {
  return mode == KMode::support_relative ? "support-relative" : "n-relative";
}

KMode parse_k_mode(std::string_view text) {
  if (text == "support-relative") return KMode::support_relative;
  if (text == "n-relative") return KMode::n_relative;
  throw ConfigError("unknown k-mode '" + std::string(text) + "' (expected support-relative or n-relative)");
}

namespace {

void check_akr(double akr) {
  if (!(akr > 0.0 && akr <= 1.0)) {
    throw ConfigError("attention-keep ratio must lie in (0, 1], got " + std::to_string(akr));
  }
}

}  // namespace

void PruneSchedule::validate(std::size_t encoder_layers) const {
  check_akr(akr);
  std::size_t previous = 0;
  for (auto layer : update_layers) {
    if (layer <= previous) throw ConfigError("update layers must be strictly increasing and 1-indexed");
    if (layer > encoder_layers) {
      throw ConfigError("update layer " + std::to_string(layer) + " exceeds the " + std::to_string(encoder_layers) +
                        " encoder layers");
    }
    previous = layer;
  }
}

bool PruneSchedule::is_update_layer(std::size_t layer) const {
  return std::find(update_layers.begin(), update_layers.end(), layer) != update_layers.end();
}

std::size_t PruneSchedule::active_updates(std::size_t encoder_layers) const {
  return static_cast<std::size_t>(
      std::count_if(update_layers.begin(), update_layers.end(), [&](auto l) { return l >= 1 && l <= encoder_layers; }));
}

MaskState MaskState::initial(std::size_t visual_tokens) {
  MaskState s;
  s.current = AttentionMask::ones(visual_tokens, visual_tokens);
  s.history.push_back(s.current.total_support());
  s.snapshots.push_back(s.current);
  return s;
}

std::size_t keep_count(std::size_t support, std::size_t n, double akr, KMode mode) {
  check_akr(akr);
  const std::size_t base = mode == KMode::support_relative ? support : n;
  const auto k = static_cast<std::size_t>(std::round(akr * static_cast<double>(base)));
  return std::min(std::max<std::size_t>(1, k), support);
}

AttentionMask topk_row_mask(const Tensor& avg_attention, const AttentionMask& prev, double akr, KMode mode) {
  check_akr(akr);
  if (avg_attention.rank() != 2 || avg_attention.dim(0) != prev.rows() || avg_attention.dim(1) != prev.cols()) {
    throw DimensionError("topk_row_mask: attention " + shape_to_string(avg_attention.shape()) + " vs mask [" +
                         std::to_string(prev.rows()) + "x" + std::to_string(prev.cols()) + "]");
  }
  const std::size_t rows = prev.rows(), cols = prev.cols();
  std::vector<std::uint8_t> bits(rows * cols, 0);
  std::vector<std::size_t> candidates;
  for (std::size_t r = 0; r < rows; ++r) {
    candidates.clear();
    for (std::size_t c = 0; c < cols; ++c)
      if (prev.at(r, c)) candidates.push_back(c);
    const std::size_t k = keep_count(candidates.size(), cols, akr, mode);
    const double* scores = avg_attention.data().data() + r * cols;
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                      [scores](std::size_t a, std::size_t b) {
                        return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                      });
    for (std::size_t i = 0; i < k; ++i) bits[r * cols + candidates[i]] = 1;
  }
  return AttentionMask::from_bits(rows, cols, std::move(bits));
}

MaskState apply_schedule(std::size_t layer_index, const AttentionRecord* record, MaskState state,
                         const PruneSchedule& schedule, std::size_t visual_offset) {
  if (layer_index == 0) throw ContractError("encoder layers are 1-indexed");
  if (!schedule.is_update_layer(layer_index)) return state;
  if (record == nullptr) {
    throw ContractError("layer " + std::to_string(layer_index) +
                        " is an update layer but its attention record was not retained");
  }
  const std::size_t n = state.current.rows();
  const auto& avg = record->head_average;
  if (avg.rank() != 2 || avg.dim(0) < visual_offset + n || avg.dim(1) < visual_offset + n) {
    throw DimensionError("attention record " + shape_to_string(avg.shape()) + " cannot hold a " + std::to_string(n) +
                         "-token visual block at offset " + std::to_string(visual_offset));
  }
  std::vector<double> block(n * n);
  const std::size_t stride = avg.dim(1);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) block[r * n + c] = avg[(visual_offset + r) * stride + visual_offset + c];
  state.current = topk_row_mask(Tensor({n, n}, std::move(block)), state.current, schedule.akr, schedule.k_mode);
  ++state.stage;
  state.history.push_back(state.current.total_support());
  state.snapshots.push_back(state.current);
  return state;
}

SparsityStats sparsity_report(const MaskState& state, const PruneSchedule& schedule, std::size_t encoder_layers,
                              std::size_t keypoint_tokens, std::size_t embed_dim) {
  SparsityStats stats;
  stats.stages = state.stage;
  const double n = static_cast<double>(state.current.rows());
  const double total = n + static_cast<double>(keypoint_tokens);
  for (auto support : state.history) stats.per_stage_density.push_back(static_cast<double>(support) / (n * n));

  double density_sum = 0.0;
  for (std::size_t layer = 1; layer <= encoder_layers; ++layer) {
    // A mask produced at layer u governs layers u+1 onward.
    std::size_t stage = 0;
    for (auto u : schedule.update_layers)
      if (u < layer) ++stage;
    stage = std::min(stage, state.history.size() - 1);
    const double visual_support = static_cast<double>(state.history[stage]);
    density_sum += visual_support / (n * n);
    const double support = total * total - n * n + visual_support;
    stats.attention_macs += 2.0 * static_cast<double>(embed_dim) * support;
    stats.dense_attention_macs += 2.0 * static_cast<double>(embed_dim) * total * total;
  }
  if (encoder_layers > 0) {
    stats.layer_weighted_density = density_sum / static_cast<double>(encoder_layers);
    stats.mac_ratio = stats.attention_macs / stats.dense_attention_macs;
  }
  return stats;
}

void to_json(nlohmann::json& j, const PruneSchedule& s) {
  j = nlohmann::json{{"update_layers", s.update_layers}, {"akr", s.akr}, {"k_mode", to_string(s.k_mode)}};
}

void from_json(const nlohmann::json& j, PruneSchedule& s) {
  s.update_layers = j.value("update_layers", s.update_layers);
  s.akr = j.value("akr", s.akr);
  if (j.contains("k_mode")) s.k_mode = parse_k_mode(j.at("k_mode").get<std::string>());
}

void to_json(nlohmann::json& j, const SparsityStats& s) {
  j = nlohmann::json{{"stages", s.stages},
                     {"per_stage_density", s.per_stage_density},
                     {"layer_weighted_density", s.layer_weighted_density},
                     {"attention_macs", s.attention_macs},
                     {"dense_attention_macs", s.dense_attention_macs},
                     {"mac_ratio", s.mac_ratio}};
}

}  // namespace spt
