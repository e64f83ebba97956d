#include "spt/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "spt/errors.hpp"
#include "spt/io.hpp"

namespace spt {
namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown " + where + " field '" + key + "'");
}

std::string akr_tag(double akr) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", akr);
  return buf;
}

std::vector<Sample> samples_from(const std::string& annotations, const RunConfig& config) {
  return load_dataset(annotations, &config.data.synthetic);
}

// Checkpoint parameters with the run's prune schedule, which may differ from training.
Checkpoint open_checkpoint(const RunConfig& config, const std::filesystem::path& dir) {
  auto ck = load_checkpoint(dir);
  check_compatible(config.model, ck.config);
  ck.config.schedule = config.model.schedule;
  ck.config.validate();
  return ck;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace

void RunConfig::validate() const {
  model.validate();
  data.synthetic.validate();
  const auto sk = resolve_skeleton(skeleton);
  if (sk.joint_count != model.joint_count) {
    throw ConfigError("skeleton " + skeleton + " has " + std::to_string(sk.joint_count) + " joints, model expects " +
                      std::to_string(model.joint_count));
  }
  if (training.batch_size == 0) throw ConfigError("training.batch_size must be positive");
  if (!(training.learning_rate >= 0.0)) throw ConfigError("training.learning_rate must be non-negative");
  if (!(training.target_sigma > 0.0)) throw ConfigError("training.target_sigma must be positive");
}

ModelConfig toy_model_config() {
  ModelConfig c;
  c.image_h = c.image_w = 32;
  c.channels = 1;
  c.pool = 1;
  c.patch_h = c.patch_w = 4;
  c.embed_dim = 16;
  c.heads = 2;
  c.encoder_layers = 3;
  c.graph_layers = 2;
  c.joint_count = 5;
  c.heatmap_h = c.heatmap_w = 16;
  c.mlp_ratio = 2;
  c.head_hidden = 32;
  c.schedule.update_layers = {1, 2};
  c.schedule.akr = 1.0;
  return c;
}

RunConfig default_run_config() {
  RunConfig c;
  c.model = toy_model_config();
  c.data.synthetic.shift = 4;
  c.data.synthetic.jitter = 1;
  return c;
}

void to_json(nlohmann::json& j, const DataConfig& c) {
  j = nlohmann::json{{"synthetic", c.synthetic},
                     {"train_count", c.train_count},
                     {"test_count", c.test_count},
                     {"test_first_index", c.test_first_index},
                     {"train_annotations", c.train_annotations},
                     {"test_annotations", c.test_annotations}};
}

void from_json(const nlohmann::json& j, DataConfig& c) {
  reject_unknown(j,
                 {"synthetic", "train_count", "test_count", "test_first_index", "train_annotations",
                  "test_annotations"},
                 "data");
  if (j.contains("synthetic")) {
    reject_unknown(j.at("synthetic"),
                   {"seed", "skeleton", "image_h", "image_w", "limb_thickness", "limb_intensity", "blob_sigma",
                    "shift", "jitter", "occlusion"},
                   "data.synthetic");
    from_json(j.at("synthetic"), c.synthetic);
  }
  c.train_count = j.value("train_count", c.train_count);
  c.test_count = j.value("test_count", c.test_count);
  c.test_first_index = j.value("test_first_index", c.test_first_index);
  c.train_annotations = j.value("train_annotations", c.train_annotations);
  c.test_annotations = j.value("test_annotations", c.test_annotations);
}

void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{{"steps", c.steps},     {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                     {"beta1", c.beta1},     {"beta2", c.beta2},           {"epsilon", c.epsilon},
                     {"seed", c.seed},       {"init_seed", c.init_seed},   {"target_sigma", c.target_sigma}};
}

void from_json(const nlohmann::json& j, TrainingConfig& c) {
  reject_unknown(j,
                 {"steps", "batch_size", "learning_rate", "beta1", "beta2", "epsilon", "seed", "init_seed",
                  "target_sigma"},
                 "training");
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.seed = j.value("seed", c.seed);
  c.init_seed = j.value("init_seed", c.init_seed);
  c.target_sigma = j.value("target_sigma", c.target_sigma);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  nlohmann::json model = c.model;
  model.erase("schedule");
  j = nlohmann::json{{"model", model},
                     {"schedule", c.model.schedule},
                     {"skeleton", c.skeleton},
                     {"data", c.data},
                     {"training", c.training},
                     {"output_dir", c.output_dir}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  reject_unknown(j, {"model", "schedule", "skeleton", "data", "training", "output_dir", "config_digest"}, "run config");
  if (j.contains("model")) from_json(j.at("model"), c.model);
  if (j.contains("schedule")) {
    reject_unknown(j.at("schedule"), {"update_layers", "akr", "k_mode"}, "schedule");
    from_json(j.at("schedule"), c.model.schedule);
  }
  c.skeleton = j.value("skeleton", c.skeleton);
  if (j.contains("data")) from_json(j.at("data"), c.data);
  if (j.contains("training")) from_json(j.at("training"), c.training);
  c.output_dir = j.value("output_dir", c.output_dir);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  RunConfig config = default_run_config();
  try {
    from_json(nlohmann::json::parse(text), config);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config;
}

std::string config_digest(const RunConfig& config) {
  nlohmann::json j = config;
  j.erase("output_dir");
  return hex_digest(fnv1a64(j.dump()));
}

int report_exception(std::ostream& err) {
  try {
    throw;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IncompatibleError& e) {
    err << "incompatible: " << e.what() << '\n';
    return kExitIncompatible;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

std::vector<Sample> training_samples(const RunConfig& config) {
  if (!config.data.train_annotations.empty()) return samples_from(config.data.train_annotations, config);
  return generate_synthetic(config.data.synthetic, config.data.train_count, 0);
}

std::vector<Sample> test_samples(const RunConfig& config) {
  if (!config.data.test_annotations.empty()) return samples_from(config.data.test_annotations, config);
  return generate_synthetic(config.data.synthetic, config.data.test_count, config.data.test_first_index);
}

GenDataResult cmd_gen_data(const SyntheticSceneConfig& scene, std::size_t count, std::uint64_t first_index,
                           const std::filesystem::path& out_dir, std::ostream& out) {
  const auto samples = generate_synthetic(scene, count, first_index);
  nlohmann::json scene_json = scene;
  const auto scene_digest = hex_digest(fnv1a64(scene_json.dump()));
  GenDataResult r;
  r.count = count;
  r.digest = write_dataset(out_dir, samples, "scene " + scene_digest);
  write_json(out_dir / "dataset.json", {{"scene", scene_json},
                                        {"scene_digest", scene_digest},
                                        {"first_index", first_index},
                                        {"count", count},
                                        {"digest", r.digest}});
  out << "dataset " << out_dir.string() << ": " << count << " samples, digest " << r.digest << '\n';
  return r;
}

TrainResult cmd_train(const RunConfig& config, std::ostream& out) {
  config.validate();
  const std::filesystem::path dir = config.output_dir;
  const auto digest = config_digest(config);
  nlohmann::json persisted = config;
  persisted["config_digest"] = digest;
  write_json(dir / "config.json", persisted);

  const auto skeleton = resolve_skeleton(config.skeleton);
  const auto joint_mask = compile_joint_mask(skeleton);
  const auto train = training_samples(config);
  const auto samples = make_training_samples(train, config.model, config.training.target_sigma);
  auto params = PoseModelParams::init(config.model, config.training.init_seed);

  TrainOptions options;
  options.steps = config.training.steps;
  options.batch_size = config.training.batch_size;
  options.seed = config.training.seed;
  options.adam = {config.training.learning_rate, config.training.beta1, config.training.beta2,
                  config.training.epsilon};

  TrainResult result;
  std::ofstream log(dir / "train_log.jsonl");
  if (!log) throw IoError("cannot open " + (dir / "train_log.jsonl").string() + " for writing");
  const auto start = std::chrono::steady_clock::now();
  try {
    train_model(params, config.model, joint_mask, samples, options, [&](std::size_t step, double loss) {
      const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      log << nlohmann::json{{"step", step}, {"loss", loss}, {"wall_ms", ms}, {"config_digest", digest}}.dump()
          << '\n';
      result.final_loss = loss;
      if (step % 100 == 0 || step == options.steps) out << "step " << step << " loss " << loss << '\n';
    });
  } catch (const NonFiniteLossError& e) {
    write_json(dir / "failure.json", {{"step", e.step()},
                                      {"batch_sample", e.sample_index()},
                                      {"loss", std::to_string(e.loss())},
                                      {"config_digest", digest}});
    throw;
  }
  log.close();

  result.checkpoint = dir / "checkpoint";
  nlohmann::json run = persisted;
  run.erase("output_dir");
  save_checkpoint(result.checkpoint, params, config.model, {{"config_digest", digest}, {"run", run}});
  if (!train.empty()) {
    result.sparsity = forward(train.front().image, params, config.model, joint_mask).diagnostics.sparsity;
  }
  write_json(dir / "sparsity.json", {{"config_digest", digest}, {"sparsity", result.sparsity}});
  out << "checkpoint " << result.checkpoint.string() << " (config " << digest << ")\n";
  return result;
}

PckhReport cmd_eval(const RunConfig& config, const EvalRequest& request, std::ostream& out) {
  const auto ck = open_checkpoint(config, request.checkpoint);
  const auto test = test_samples(config);
  if (test.empty()) throw ValidationError("evaluation dataset is empty");
  const auto skeleton = resolve_skeleton(config.skeleton);
  const auto ev = evaluate(ck.params, ck.config, compile_joint_mask(skeleton), test, request.thresholds,
                           request.decoder, skeleton.names);
  const auto digest = config_digest(config);
  write_json(request.out_dir / "pckh.json", {{"config_digest", digest},
                                             {"checkpoint", request.checkpoint.string()},
                                             {"decoder", to_string(request.decoder)},
                                             {"pckh", ev.report},
                                             {"sparsity", ev.sparsity}});
  const auto table = format_pckh_table({{"AKR=" + akr_tag(ck.config.schedule.akr), ev.report}});
  write_text_file(request.out_dir / "pckh.txt", "# config " + digest + "\n" + table);
  out << table;
  return ev.report;
}

ForwardDiagnostics cmd_masks(const RunConfig& config, const MasksRequest& request, std::ostream& out) {
  const auto ck = open_checkpoint(config, request.checkpoint);
  Tensor image;
  if (!request.image.empty()) {
    image = load_pgm(request.image);
  } else {
    const auto test = test_samples(config);
    if (request.index >= test.size()) {
      throw ConfigError("sample index " + std::to_string(request.index) + " is outside the " +
                        std::to_string(test.size()) + "-sample test set");
    }
    image = test[request.index].image;
  }
  const auto skeleton = resolve_skeleton(config.skeleton);
  const auto joint_mask = compile_joint_mask(skeleton);
  auto result = forward(image, ck.params, ck.config, joint_mask, ForwardOptions{true});
  const auto& diag = result.diagnostics;
  const auto digest = config_digest(config);
  const auto& dir = request.out_dir;
  const std::string comment = "config " + digest;

  for (std::size_t s = 1; s < diag.mask_state.snapshots.size(); ++s)
    save_pbm(dir / ("mask_stage_" + std::to_string(s) + ".pbm"), diag.mask_state.snapshots[s], comment);
  save_pbm(dir / "joint_mask.pbm", joint_mask.mask(), comment);
  for (std::size_t l = 0; l < diag.encoder_records.size(); ++l)
    save_tensor_csv(dir / ("attention_encoder_" + std::to_string(l + 1) + ".csv"),
                    diag.encoder_records[l].head_average, comment);
  for (std::size_t l = 0; l < diag.graph_records.size(); ++l)
    save_tensor_csv(dir / ("attention_graph_" + std::to_string(l + 1) + ".csv"), diag.graph_records[l].head_average,
                    comment);
  for (std::size_t j = 0; j < ck.config.joint_count; ++j) {
    const auto name = j < skeleton.names.size() ? skeleton.names[j] : std::to_string(j);
    save_pgm(dir / ("heatmap_" + std::to_string(j) + "_" + name + ".pgm"),
             min_max_normalize(select(result.heatmaps, j)), comment);
  }
  write_json(dir / "masks.json", {{"config_digest", digest},
                                  {"stages", diag.mask_state.stage},
                                  {"history", diag.mask_state.history},
                                  {"sparsity", diag.sparsity}});
  out << "wrote " << diag.mask_state.stage << " stage masks to " << dir.string() << '\n';
  return result.diagnostics;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& config, const std::vector<double>& akr_values, std::ostream& out) {
  config.validate();
  const std::filesystem::path dir = config.output_dir;
  const auto digest = config_digest(config);
  nlohmann::json persisted = config;
  persisted["config_digest"] = digest;
  write_json(dir / "config.json", persisted);

  SweepSettings settings;
  settings.model = config.model;
  settings.training.steps = config.training.steps;
  settings.training.batch_size = config.training.batch_size;
  settings.training.seed = config.training.seed;
  settings.training.adam = {config.training.learning_rate, config.training.beta1, config.training.beta2,
                            config.training.epsilon};
  settings.init_seed = config.training.init_seed;
  settings.target_sigma = config.training.target_sigma;
  const auto skeleton = resolve_skeleton(config.skeleton);
  const auto train = training_samples(config);
  const auto test = test_samples(config);
  if (test.empty()) throw ValidationError("sweep test dataset is empty");
  const auto rows = ablation_sweep(akr_values, settings, skeleton, train, test);

  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : rows) {
    write_json(dir / ("pckh_akr_" + akr_tag(r.akr) + ".json"), {{"config_digest", digest}, {"row", r}});
    all.push_back(r);
  }
  write_json(dir / "sweep.json", {{"config_digest", digest}, {"akr_values", akr_values}, {"rows", all}});
  const auto table = format_sweep_table(rows);
  write_text_file(dir / "sweep.txt", "# config " + digest + "\n" + table);
  out << table;
  return rows;
}

}  // namespace spt
