#include "spt/model.hpp"

#include <cmath>
#include <algorithm>
#include <cstdlib>
#include <exception>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "spt/io.hpp"

namespace spt {
namespace {

constexpr const char* kCheckpointFormat = "spt-checkpoint/1";

Tensor normal_param(Shape shape, double stddev, Rng& rng) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.normal(0.0, stddev);
  return Tensor::parameter(std::move(shape), std::move(data));
}

Tensor xavier_param(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return normal_param({fan_in, fan_out}, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)), rng);
}

Tensor filled_param(std::size_t n, double value) { return Tensor::parameter({n}, std::vector<double>(n, value)); }

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

// Fields that fix tensor shapes; the prune schedule is excluded because it
// changes only which connections are live.
nlohmann::json architecture(const ModelConfig& c) {
  nlohmann::json j = c;
  j.erase("schedule");
  return j;
}

}  // namespace

std::string to_string(PositionalEncoding pe) { return pe == PositionalEncoding::learned ? "learned" : "sinusoidal"; }

PositionalEncoding parse_positional_encoding(std::string_view text) {
  if (text == "learned") return PositionalEncoding::learned;
  if (text == "sinusoidal") return PositionalEncoding::sinusoidal;
  throw ConfigError("unknown positional encoding '" + std::string(text) + "' (expected learned or sinusoidal)");
}

void ModelConfig::validate() const {
  require(image_h > 0 && image_w > 0 && channels > 0, "image extents and channels must be positive");
  require(pool > 0 && patch_h > 0 && patch_w > 0, "pool and patch extents must be positive");
  require(image_h % (pool * patch_h) == 0 && image_w % (pool * patch_w) == 0,
          "pool*patch (" + std::to_string(pool * patch_h) + "x" + std::to_string(pool * patch_w) +
              ") must divide the image extents " + std::to_string(image_h) + "x" + std::to_string(image_w));
  require(embed_dim > 0 && heads > 0 && embed_dim % heads == 0,
          "embed_dim " + std::to_string(embed_dim) + " must be divisible by heads " + std::to_string(heads));
  require(encoder_layers > 0, "encoder_layers must be positive");
  require(joint_count > 0, "joint_count must be positive");
  require(heatmap_h > 0 && heatmap_w > 0, "heatmap extents must be positive");
  require(mlp_ratio > 0 && head_hidden > 0, "mlp_ratio and head_hidden must be positive");
  require(positional == PositionalEncoding::learned || embed_dim % 4 == 0,
          "sinusoidal positional encoding needs embed_dim divisible by 4");
  schedule.validate(encoder_layers);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"image_h", c.image_h},
                     {"image_w", c.image_w},
                     {"channels", c.channels},
                     {"pool", c.pool},
                     {"patch_h", c.patch_h},
                     {"patch_w", c.patch_w},
                     {"embed_dim", c.embed_dim},
                     {"heads", c.heads},
                     {"encoder_layers", c.encoder_layers},
                     {"graph_layers", c.graph_layers},
                     {"joint_count", c.joint_count},
                     {"heatmap_h", c.heatmap_h},
                     {"heatmap_w", c.heatmap_w},
                     {"mlp_ratio", c.mlp_ratio},
                     {"head_hidden", c.head_hidden},
                     {"positional", to_string(c.positional)},
                     {"schedule", c.schedule}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::set<std::string> known{
      "image_h",        "image_w",      "channels",    "pool",      "patch_h",   "patch_w",
      "embed_dim",      "heads",        "encoder_layers", "graph_layers", "joint_count", "heatmap_h",
      "heatmap_w",      "mlp_ratio",    "head_hidden", "positional", "schedule"};
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown model config field '" + key + "'");
  }
  auto get = [&](const char* key, std::size_t& field) { field = j.value(key, field); };
  get("image_h", c.image_h);
  get("image_w", c.image_w);
  get("channels", c.channels);
  get("pool", c.pool);
  get("patch_h", c.patch_h);
  get("patch_w", c.patch_w);
  get("embed_dim", c.embed_dim);
  get("heads", c.heads);
  get("encoder_layers", c.encoder_layers);
  get("graph_layers", c.graph_layers);
  get("joint_count", c.joint_count);
  get("heatmap_h", c.heatmap_h);
  get("heatmap_w", c.heatmap_w);
  get("mlp_ratio", c.mlp_ratio);
  get("head_hidden", c.head_hidden);
  if (j.contains("positional")) c.positional = parse_positional_encoding(j.at("positional").get<std::string>());
  if (j.contains("schedule")) c.schedule = j.at("schedule").get<PruneSchedule>();
}

Tensor sinusoidal_encoding(std::size_t grid_h, std::size_t grid_w, std::size_t embed_dim) {
  if (embed_dim % 4 != 0) throw ConfigError("sinusoidal encoding needs embed_dim divisible by 4");
  const std::size_t half = embed_dim / 2;
  std::vector<double> data(grid_h * grid_w * embed_dim);
  for (std::size_t r = 0; r < grid_h; ++r) {
    for (std::size_t c = 0; c < grid_w; ++c) {
      double* row = &data[(r * grid_w + c) * embed_dim];
      for (std::size_t i = 0; i < half / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(half));
        row[2 * i] = std::sin(static_cast<double>(r) * freq);
        row[2 * i + 1] = std::cos(static_cast<double>(r) * freq);
        row[half + 2 * i] = std::sin(static_cast<double>(c) * freq);
        row[half + 2 * i + 1] = std::cos(static_cast<double>(c) * freq);
      }
    }
  }
  return Tensor({grid_h * grid_w, embed_dim}, std::move(data));
}

PoseModelParams PoseModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t d = config.embed_dim;
  PoseModelParams p;
  p.patch_projection = xavier_param(config.patch_dim(), d, rng);
  p.positional_encoding = config.positional == PositionalEncoding::learned
                              ? normal_param({config.visual_tokens(), d}, 0.02, rng)
                              : sinusoidal_encoding(config.grid_h(), config.grid_w(), d);
  p.keypoint_tokens = normal_param({config.joint_count, d}, 0.02, rng);
  for (std::size_t i = 0; i < config.encoder_layers; ++i)
    p.encoder.push_back(AttentionLayerParams::init(d, config.heads, config.mlp_ratio, rng));
  for (std::size_t i = 0; i < config.graph_layers; ++i)
    p.graph.push_back(AttentionLayerParams::init(d, config.heads, config.mlp_ratio, rng));
  p.head.norm_gain = filled_param(d, 1.0);
  p.head.norm_bias = filled_param(d, 0.0);
  p.head.fc1_weight = xavier_param(d, config.head_hidden, rng);
  p.head.fc1_bias = filled_param(config.head_hidden, 0.0);
  p.head.fc2_weight = xavier_param(config.head_hidden, config.heatmap_size(), rng);
  p.head.fc2_bias = filled_param(config.heatmap_size(), 0.0);
  return p;
}

std::size_t PoseModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

Tensor extract_patches(const Tensor& image, const ModelConfig& config) {
  if (image.rank() != 3 || image.dim(0) != config.channels || image.dim(1) != config.image_h ||
      image.dim(2) != config.image_w) {
    throw ConfigError("image " + shape_to_string(image.shape()) + " does not match the configured [" +
                      std::to_string(config.channels) + "x" + std::to_string(config.image_h) + "x" +
                      std::to_string(config.image_w) + "]");
  }
  const std::size_t pool = config.pool, ph = config.patch_h, pw = config.patch_w;
  const std::size_t gh = config.grid_h(), gw = config.grid_w();
  const std::size_t h = config.image_h, w = config.image_w;
  const double inv_area = 1.0 / static_cast<double>(pool * pool);
  std::vector<double> out(gh * gw * config.patch_dim());
  std::size_t k = 0;
  for (std::size_t gy = 0; gy < gh; ++gy) {
    for (std::size_t gx = 0; gx < gw; ++gx) {
      for (std::size_t c = 0; c < config.channels; ++c) {
        for (std::size_t dy = 0; dy < ph; ++dy) {
          for (std::size_t dx = 0; dx < pw; ++dx) {
            const std::size_t y0 = (gy * ph + dy) * pool, x0 = (gx * pw + dx) * pool;
            double acc = 0.0;
            for (std::size_t py = 0; py < pool; ++py)
              for (std::size_t px = 0; px < pool; ++px) acc += image[(c * h + y0 + py) * w + x0 + px];
            out[k++] = acc * inv_area;
          }
        }
      }
    }
  }
  return Tensor({gh * gw, config.patch_dim()}, std::move(out));
}

Tensor patchify_embed(const Tensor& image, const PoseModelParams& params, const ModelConfig& config) {
  return add(matmul(extract_patches(image, config), params.patch_projection), params.positional_encoding);
}

ForwardResult forward(const Tensor& image, const PoseModelParams& params, const ModelConfig& config,
                      const JointMask& joint_mask, const ForwardOptions& options) {
  const std::size_t j = config.joint_count, np = config.visual_tokens();
  if (joint_mask.joint_count() != j) {
    throw DimensionError("joint mask covers " + std::to_string(joint_mask.joint_count()) + " joints, model has " +
                         std::to_string(j));
  }
  if (params.encoder.size() != config.encoder_layers || params.graph.size() != config.graph_layers) {
    throw DimensionError("parameter stacks do not match the configured layer counts");
  }
  const auto& schedule = config.schedule;
  const Tensor tokens[] = {params.keypoint_tokens, patchify_embed(image, params, config)};
  Tensor x = concat_rows(tokens);

  ForwardResult result;
  auto& diag = result.diagnostics;
  MaskState state = MaskState::initial(np);
  const auto dense = AttentionMask::ones(j + np, j + np);
  for (std::size_t layer = 1; layer <= config.encoder_layers; ++layer) {
    const auto full = state.current.all_ones() ? dense : dense.with_block(j, state.current);
    const bool keep = options.retain_records || schedule.is_update_layer(layer);
    auto block = encoder_block(x, full, params.encoder[layer - 1], keep);
    x = block.out;
    const AttentionRecord* record = block.record ? &*block.record : nullptr;
    state = apply_schedule(layer, record, std::move(state), schedule, j);
    if (options.retain_records) diag.encoder_records.push_back(std::move(*block.record));
  }

  Tensor k = slice_rows(x, 0, j);
  for (const auto& layer : params.graph) {
    auto block = encoder_block(k, joint_mask.mask(), layer, options.retain_records);
    k = block.out;
    if (options.retain_records) diag.graph_records.push_back(std::move(*block.record));
  }

  const auto& head = params.head;
  auto h = layer_norm(k, head.norm_gain, head.norm_bias);
  h = gelu(linear(h, head.fc1_weight, head.fc1_bias));
  h = linear(h, head.fc2_weight, head.fc2_bias);
  result.heatmaps = reshape(h, {j, config.heatmap_h, config.heatmap_w});
  diag.sparsity = sparsity_report(state, schedule, config.encoder_layers, j, config.embed_dim);
  diag.mask_state = std::move(state);
  return result;
}

Tensor loss_mse(const Tensor& pred, const Tensor& target, const std::vector<bool>& visible) {
  if (pred.shape() != target.shape() || pred.rank() == 0) {
    throw DimensionError("loss_mse: prediction " + shape_to_string(pred.shape()) + " vs target " +
                         shape_to_string(target.shape()));
  }
  const std::size_t joints = pred.dim(0);
  if (visible.size() != joints) throw DimensionError("loss_mse: visibility flags do not match joint count");
  const std::size_t per_joint = pred.size() / joints;
  std::size_t count = 0;
  for (bool v : visible) count += v;
  std::vector<double> weights(pred.size(), 0.0);
  if (count > 0) {
    const double w = 1.0 / static_cast<double>(count * per_joint);
    for (std::size_t jt = 0; jt < joints; ++jt)
      if (visible[jt]) std::fill_n(weights.begin() + jt * per_joint, per_joint, w);
  }
  const auto diff = sub(pred, target);
  return sum(mul(mul(diff, diff), Tensor(pred.shape(), std::move(weights))));
}

NonFiniteLossError::NonFiniteLossError(std::size_t sample_index, double loss, std::size_t step)
    : NumericError("non-finite loss " + std::to_string(loss) + " at batch sample " + std::to_string(sample_index) +
                   (step ? " of step " + std::to_string(step) : std::string())),
      sample_index_(sample_index),
      loss_(loss),
      step_(step) {}

bool is_trainable(const std::string& name, const ModelConfig& config) {
  return !(name == "positional_encoding" && config.positional == PositionalEncoding::sinusoidal);
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("SPT_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

BatchGradient batch_gradient(std::span<const TrainingSample> batch, const PoseModelParams& params,
                             const ModelConfig& config, const JointMask& joint_mask) {
  if (batch.empty()) throw ContractError("batch_gradient: empty batch");
  std::vector<Tensor> tensors;
  std::vector<bool> trainable;
  params.for_each([&](const std::string& name, const Tensor& t) {
    tensors.push_back(t);
    trainable.push_back(is_trainable(name, config));
  });

  struct SampleResult {
    double loss = 0.0;
    std::vector<std::vector<double>> grads;
    std::exception_ptr error;
  };
  std::vector<SampleResult> results(batch.size());
  auto run = [&](std::size_t i) {
    try {
      Tape tape;
      TapeScope scope(tape);
      const auto& s = batch[i];
      const auto out = forward(s.image, params, config, joint_mask);
      const auto loss = loss_mse(out.heatmaps, s.target, s.visible);
      results[i].loss = loss.item();
      if (!std::isfinite(results[i].loss)) throw NonFiniteLossError(i, results[i].loss);
      const auto grads = backward(loss, tape);
      results[i].grads.resize(tensors.size());
      for (std::size_t p = 0; p < tensors.size(); ++p) {
        if (!trainable[p]) continue;
        const auto g = grads.view(tensors[p]);
        results[i].grads[p].assign(g.begin(), g.end());
      }
    } catch (...) {
      results[i].error = std::current_exception();
    }
  };

  const std::size_t workers = std::min(worker_threads(), batch.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < batch.size(); i += workers) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  BatchGradient out;
  out.grads.resize(tensors.size());
  for (std::size_t p = 0; p < tensors.size(); ++p)
    if (trainable[p]) out.grads[p].assign(tensors[p].size(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (results[i].error) std::rethrow_exception(results[i].error);
    out.loss += results[i].loss * inv;
    for (std::size_t p = 0; p < tensors.size(); ++p) {
      const auto& g = results[i].grads[p];
      for (std::size_t e = 0; e < g.size(); ++e) out.grads[p][e] += g[e] * inv;
    }
  }
  return out;
}

double train_step(std::span<const TrainingSample> batch, PoseModelParams& params, const ModelConfig& config,
                  const JointMask& joint_mask, AdamState& state, const AdamConfig& adam) {
  const auto bg = batch_gradient(batch, params, config, joint_mask);
  if (state.m.empty()) {
    state.m.resize(bg.grads.size());
    state.v.resize(bg.grads.size());
    for (std::size_t p = 0; p < bg.grads.size(); ++p) {
      state.m[p].assign(bg.grads[p].size(), 0.0);
      state.v[p].assign(bg.grads[p].size(), 0.0);
    }
  }
  if (state.m.size() != bg.grads.size()) throw ContractError("optimizer state does not match the parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(adam.beta1, t), c2 = 1.0 - std::pow(adam.beta2, t);
  std::size_t p = 0;
  params.for_each([&](const std::string&, Tensor& tensor) {
    const auto& g = bg.grads[p];
    if (!g.empty()) {
      auto& m = state.m[p];
      auto& v = state.v[p];
      std::vector<double> data(tensor.data().begin(), tensor.data().end());
      for (std::size_t e = 0; e < data.size(); ++e) {
        m[e] = adam.beta1 * m[e] + (1.0 - adam.beta1) * g[e];
        v[e] = adam.beta2 * v[e] + (1.0 - adam.beta2) * g[e] * g[e];
        data[e] -= adam.learning_rate * (m[e] / c1) / (std::sqrt(v[e] / c2) + adam.epsilon);
      }
      tensor = Tensor::parameter(tensor.shape(), std::move(data));
    }
    ++p;
  });
  return bg.loss;
}

void train_model(PoseModelParams& params, const ModelConfig& config, const JointMask& joint_mask,
                 std::span<const TrainingSample> samples, const TrainOptions& options, const StepCallback& on_step) {
  if (options.steps == 0) return;
  if (samples.empty()) throw ContractError("train_model: no training samples");
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  AdamState state;
  std::vector<std::size_t> order;
  std::size_t cursor = 0, epoch = 0;
  std::vector<TrainingSample> batch;
  for (std::size_t step = 1; step <= options.steps; ++step) {
    batch.clear();
    while (batch.size() < options.batch_size) {
      if (cursor == order.size()) {
        order.resize(samples.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng = Rng::for_index(options.seed, epoch++);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      batch.push_back(samples[order[cursor++]]);
    }
    double loss = 0.0;
    try {
      loss = train_step(batch, params, config, joint_mask, state, options.adam);
    } catch (const NonFiniteLossError& e) {
      throw NonFiniteLossError(e.sample_index(), e.loss(), step);
    }
    if (on_step) on_step(step, loss);
  }
}

void save_checkpoint(const std::filesystem::path& dir, const PoseModelParams& params, const ModelConfig& config,
                     const nlohmann::json& extra) {
  nlohmann::json manifest = extra;
  manifest["format"] = kCheckpointFormat;
  manifest["model"] = config;
  auto& entries = manifest["parameters"] = nlohmann::json::array();
  params.for_each([&](const std::string& name, const Tensor& t) {
    const std::string file = name + ".bin";
    save_tensor(dir / file, t);
    entries.push_back({{"name", name}, {"file", file}, {"shape", t.shape()}});
  });
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kCheckpointFormat) {
    throw IncompatibleError(manifest_path.string() + ": unsupported checkpoint format '" +
                            manifest.value("format", "") + "'");
  }
  Checkpoint ck;
  ck.manifest = manifest;
  ck.config = manifest.at("model").get<ModelConfig>();
  ck.config.validate();
  ck.params = PoseModelParams::init(ck.config, 0);
  std::map<std::string, std::string> files;
  for (const auto& e : manifest.at("parameters")) files[e.at("name").get<std::string>()] = e.at("file");
  ck.params.for_each([&](const std::string& name, Tensor& t) {
    const auto it = files.find(name);
    if (it == files.end()) throw IncompatibleError(dir.string() + ": checkpoint lacks parameter " + name);
    const auto loaded = load_tensor(dir / it->second);
    if (loaded.shape() != t.shape()) {
      throw IncompatibleError(dir.string() + ": parameter " + name + " has shape " +
                              shape_to_string(loaded.shape()) + ", config implies " + shape_to_string(t.shape()));
    }
    std::vector<double> data(loaded.data().begin(), loaded.data().end());
    t = is_trainable(name, ck.config) ? Tensor::parameter(loaded.shape(), std::move(data))
                                      : Tensor(loaded.shape(), std::move(data));
    files.erase(it);
  });
  if (!files.empty()) {
    throw IncompatibleError(dir.string() + ": checkpoint has unexpected parameter " + files.begin()->first);
  }
  return ck;
}

void check_compatible(const ModelConfig& expected, const ModelConfig& actual) {
  const auto a = architecture(expected), b = architecture(actual);
  if (a == b) return;
  for (const auto& [key, value] : a.items()) {
    if (b.at(key) != value) {
      throw IncompatibleError("checkpoint " + key + " = " + b.at(key).dump() + " but the run config expects " +
                              value.dump());
    }
  }
}

}  // namespace spt
