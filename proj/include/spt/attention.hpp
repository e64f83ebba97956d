#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "spt/mask.hpp"
#include "spt/rng.hpp"
#include "spt/tensor.hpp"

namespace spt {

/// Parameters of one pre-norm encoder block.
///
/// The fused projection is laid out as [Q | K | V], each D columns wide,
/// with head h owning columns [h*D_h, (h+1)*D_h) inside each third.
struct AttentionLayerParams {
  std::size_t heads = 1;
  Tensor norm1_gain, norm1_bias;  // [D]
  Tensor qkv_projection;          // [D x 3D]
  Tensor output_projection;       // [D x D]
  Tensor output_bias;             // [D]
  Tensor norm2_gain, norm2_bias;  // [D]
  Tensor ff1_weight, ff1_bias;    // [D x hidden], [hidden]
  Tensor ff2_weight, ff2_bias;    // [hidden x D], [D]

  std::size_t embed_dim() const { return qkv_projection.dim(0); }
  std::size_t head_dim() const { return embed_dim() / heads; }
  std::size_t hidden_dim() const { return ff1_weight.dim(1); }

  /// Unit norm gains, zero biases, Xavier-normal weights drawn in field order.
  static AttentionLayerParams init(std::size_t embed_dim, std::size_t heads, std::size_t mlp_ratio, Rng& rng);
  /// All-zero parameters; the block then reduces to its residual path.
  static AttentionLayerParams zeros(std::size_t embed_dim, std::size_t heads, std::size_t mlp_ratio);

  /// Throws ConfigError/DimensionError when shapes disagree or heads do not divide D.
  void validate() const;

  template <typename Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    fn("norm1_gain", self.norm1_gain);
    fn("norm1_bias", self.norm1_bias);
    fn("qkv_projection", self.qkv_projection);
    fn("output_projection", self.output_projection);
    fn("output_bias", self.output_bias);
    fn("norm2_gain", self.norm2_gain);
    fn("norm2_bias", self.norm2_bias);
    fn("ff1_weight", self.ff1_weight);
    fn("ff1_bias", self.ff1_bias);
    fn("ff2_weight", self.ff2_weight);
    fn("ff2_bias", self.ff2_bias);
  }
};

struct QkvHeads {
  Tensor q, k, v;  // each [heads x N x D_h]
};

/// Post-softmax attention kept for inspection and pruning.
struct AttentionRecord {
  Tensor per_head;      // [heads x N x N]
  Tensor head_average;  // [N x N]
};

struct AttentionOutput {
  Tensor out;                             // [N x D]
  std::optional<AttentionRecord> record;  // present when requested
};

QkvHeads project_qkv(const Tensor& x, const AttentionLayerParams& params);

/// Masked multi-head self-attention. Each head computes
/// masked_softmax(Q_h K_h^T / sqrt(D_h)) V_h under the shared `mask`; the
/// heads are concatenated and passed through the output projection.
AttentionOutput mmsa(const Tensor& x, const AttentionMask& mask, const AttentionLayerParams& params,
                     bool retain_record = false);

/// x + mmsa(norm1(x)), then + ff2(gelu(ff1(norm2(.)))).
AttentionOutput encoder_block(const Tensor& x, const AttentionMask& mask, const AttentionLayerParams& params,
                              bool retain_record = false);

}  // namespace spt
