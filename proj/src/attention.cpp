#include "spt/attention.hpp"

#include <cmath>
#include <vector>

#include "spt/errors.hpp"

namespace spt {
namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> data(fan_in * fan_out);
  for (auto& v : data) v = rng.normal(0.0, stddev);
  return Tensor::parameter({fan_in, fan_out}, std::move(data));
}

Tensor constant_param(std::size_t n, double value) {
  return Tensor::parameter({n}, std::vector<double>(n, value));
}

Tensor zero_param(Shape shape) {
  const auto n = shape_numel(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, 0.0));
}

void expect_shape(const Tensor& t, const Shape& shape, const char* name) {
  if (!t.defined() || t.shape() != shape) {
    throw DimensionError(std::string("attention parameter ") + name + " should be " + shape_to_string(shape) +
                         ", got " + (t.defined() ? shape_to_string(t.shape()) : std::string("<undefined>")));
  }
}

struct HeadSlices {
  std::vector<Tensor> q, k, v;  // per head, [N x D_h]
};

HeadSlices split_heads(const Tensor& qkv, std::size_t heads, std::size_t embed) {
  const std::size_t dh = embed / heads;
  HeadSlices s;
  for (std::size_t h = 0; h < heads; ++h) {
    s.q.push_back(slice_cols(qkv, h * dh, dh));
    s.k.push_back(slice_cols(qkv, embed + h * dh, dh));
    s.v.push_back(slice_cols(qkv, 2 * embed + h * dh, dh));
  }
  return s;
}

void check_input(const Tensor& x, const AttentionLayerParams& params) {
  if (x.rank() != 2 || x.dim(1) != params.embed_dim()) {
    throw DimensionError("attention input " + shape_to_string(x.shape()) + " does not match embedding width " +
                         std::to_string(params.embed_dim()));
  }
}

}  // namespace

AttentionLayerParams AttentionLayerParams::init(std::size_t embed_dim, std::size_t heads, std::size_t mlp_ratio,
                                                Rng& rng) {
  if (heads == 0 || embed_dim % heads != 0) {
    throw ConfigError("embedding width " + std::to_string(embed_dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const std::size_t hidden = mlp_ratio * embed_dim;
  AttentionLayerParams p;
  p.heads = heads;
  p.norm1_gain = constant_param(embed_dim, 1.0);
  p.norm1_bias = constant_param(embed_dim, 0.0);
  p.qkv_projection = xavier(embed_dim, 3 * embed_dim, rng);
  p.output_projection = xavier(embed_dim, embed_dim, rng);
  p.output_bias = constant_param(embed_dim, 0.0);
  p.norm2_gain = constant_param(embed_dim, 1.0);
  p.norm2_bias = constant_param(embed_dim, 0.0);
  p.ff1_weight = xavier(embed_dim, hidden, rng);
  p.ff1_bias = constant_param(hidden, 0.0);
  p.ff2_weight = xavier(hidden, embed_dim, rng);
  p.ff2_bias = constant_param(embed_dim, 0.0);
  return p;
}

AttentionLayerParams AttentionLayerParams::zeros(std::size_t embed_dim, std::size_t heads, std::size_t mlp_ratio) {
  if (heads == 0 || embed_dim % heads != 0) {
    throw ConfigError("embedding width " + std::to_string(embed_dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const std::size_t hidden = mlp_ratio * embed_dim;
  AttentionLayerParams p;
  p.heads = heads;
  p.norm1_gain = zero_param({embed_dim});
  p.norm1_bias = zero_param({embed_dim});
  p.qkv_projection = zero_param({embed_dim, 3 * embed_dim});
  p.output_projection = zero_param({embed_dim, embed_dim});
  p.output_bias = zero_param({embed_dim});
  p.norm2_gain = zero_param({embed_dim});
  p.norm2_bias = zero_param({embed_dim});
  p.ff1_weight = zero_param({embed_dim, hidden});
  p.ff1_bias = zero_param({hidden});
  p.ff2_weight = zero_param({hidden, embed_dim});
  p.ff2_bias = zero_param({embed_dim});
  return p;
}

void AttentionLayerParams::validate() const {
  if (!qkv_projection.defined() || qkv_projection.rank() != 2) {
    throw DimensionError("qkv_projection must be a matrix");
  }
  const std::size_t d = qkv_projection.dim(0);
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("embedding width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (!ff1_weight.defined() || ff1_weight.rank() != 2) throw DimensionError("ff1_weight must be a matrix");
  const std::size_t hidden = ff1_weight.dim(1);
  expect_shape(norm1_gain, {d}, "norm1_gain");
  expect_shape(norm1_bias, {d}, "norm1_bias");
  expect_shape(qkv_projection, {d, 3 * d}, "qkv_projection");
  expect_shape(output_projection, {d, d}, "output_projection");
  expect_shape(output_bias, {d}, "output_bias");
  expect_shape(norm2_gain, {d}, "norm2_gain");
  expect_shape(norm2_bias, {d}, "norm2_bias");
  expect_shape(ff1_weight, {d, hidden}, "ff1_weight");
  expect_shape(ff1_bias, {hidden}, "ff1_bias");
  expect_shape(ff2_weight, {hidden, d}, "ff2_weight");
  expect_shape(ff2_bias, {d}, "ff2_bias");
}

QkvHeads project_qkv(const Tensor& x, const AttentionLayerParams& params) {
  check_input(x, params);
  const auto qkv = matmul(x, params.qkv_projection);
  const auto s = split_heads(qkv, params.heads, params.embed_dim());
  return QkvHeads{stack(s.q), stack(s.k), stack(s.v)};
}

AttentionOutput mmsa(const Tensor& x, const AttentionMask& mask, const AttentionLayerParams& params,
                     bool retain_record) {
  check_input(x, params);
  const std::size_t n = x.dim(0);
  if (mask.rows() != n || mask.cols() != n) {
    throw DimensionError("attention mask [" + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                         "] does not match " + std::to_string(n) + " tokens");
  }
  const std::size_t heads = params.heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(params.head_dim()));
  const auto qkv = matmul(x, params.qkv_projection);
  const auto s = split_heads(qkv, heads, params.embed_dim());

  std::vector<Tensor> contexts;
  std::vector<Tensor> probabilities;
  contexts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto logits = scale(matmul(s.q[h], transpose(s.k[h])), inv_scale);
    const auto probs = rowwise_masked_softmax(logits, mask);
    contexts.push_back(matmul(probs, s.v[h]));
    if (retain_record) probabilities.push_back(probs.detach());
  }
  AttentionOutput result;
  result.out = linear(concat_cols(contexts), params.output_projection, params.output_bias);
  if (retain_record) {
    std::vector<double> average(n * n, 0.0);
    for (const auto& p : probabilities)
      for (std::size_t i = 0; i < average.size(); ++i) average[i] += p[i];
    for (auto& v : average) v /= static_cast<double>(heads);
    result.record = AttentionRecord{stack(probabilities), Tensor({n, n}, std::move(average))};
  }
  return result;
}

AttentionOutput encoder_block(const Tensor& x, const AttentionMask& mask, const AttentionLayerParams& params,
                              bool retain_record) {
  auto attended = mmsa(layer_norm(x, params.norm1_gain, params.norm1_bias), mask, params, retain_record);
  const auto h = add(x, attended.out);
  const auto hidden = gelu(linear(layer_norm(h, params.norm2_gain, params.norm2_bias), params.ff1_weight,
                                  params.ff1_bias));
  attended.out = add(h, linear(hidden, params.ff2_weight, params.ff2_bias));
  return attended;
}

}  // namespace spt
