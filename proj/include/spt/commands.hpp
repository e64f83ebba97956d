#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spt/data.hpp"
#include "spt/evaluation.hpp"
#include "spt/model.hpp"

namespace spt {

/// Where training and test samples come from. With no annotation paths the
/// synthetic scene supplies train indices [0, train_count) and test indices
/// [test_first_index, test_first_index + test_count).
struct DataConfig {
  SyntheticSceneConfig synthetic;
  std::size_t train_count = 512;
  std::size_t test_count = 128;
  std::uint64_t test_first_index = 1000000;
  std::string train_annotations;  // dataset dir or annotation file; overrides synthetic training data
  std::string test_annotations;
};

struct TrainingConfig {
  std::size_t steps = 2500;
  std::size_t batch_size = 16;
  double learning_rate = 3e-3;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::uint64_t seed = 1;       // batch order
  std::uint64_t init_seed = 7;  // parameter initialization
  double target_sigma = 0.5;    // heatmap pixels
};

/// Everything a run depends on. The prune schedule lives in `model.schedule`
/// but serializes as a top-level "schedule" entry.
struct RunConfig {
  ModelConfig model;
  std::string skeleton = "builtin:toy";
  DataConfig data;
  TrainingConfig training;
  std::string output_dir = "runs/default";

  void validate() const;
};

/// 32x32 single-channel input, 4x4 patches, D=16, 2 heads, L=3, L'=2, five
/// joints, 16x16 heatmaps, prune updates after layers 1 and 2.
ModelConfig toy_model_config();
/// Toy model, toy skeleton and the synthetic scene it was tuned on.
RunConfig default_run_config();

void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);
void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
/// Hash of the effective config with output_dir left out, so a rerun into
/// another directory carries the same digest.
std::string config_digest(const RunConfig& config);

/// Process exit codes, one per error class.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,       // bad flags or configuration
  kExitData = 3,        // malformed or invalid input files
  kExitIo = 4,          // unreadable or unwritable paths
  kExitIncompatible = 5,  // checkpoint does not fit the config
  kExitNumeric = 6,     // non-finite loss
};

/// Maps the in-flight exception to its exit code and prints it to `err`.
int report_exception(std::ostream& err);

struct GenDataResult {
  std::string digest;
  std::size_t count = 0;
};
/// Writes count samples starting at first_index as PGM images plus annotations.json.
GenDataResult cmd_gen_data(const SyntheticSceneConfig& scene, std::size_t count, std::uint64_t first_index,
                           const std::filesystem::path& out_dir, std::ostream& out);

struct TrainResult {
  std::filesystem::path checkpoint;
  double final_loss = 0.0;
  SparsityStats sparsity;
};
/// Trains from initialization and writes config.json, checkpoint/,
/// train_log.jsonl (one line per step) and sparsity.json under output_dir.
TrainResult cmd_train(const RunConfig& config, std::ostream& out);

struct EvalRequest {
  std::filesystem::path checkpoint;
  std::vector<double> thresholds{0.5, 0.1};
  Decoder decoder = Decoder::refined;
  std::filesystem::path out_dir;
};
/// Scores a checkpoint on the config's test data; writes pckh.json and pckh.txt.
PckhReport cmd_eval(const RunConfig& config, const EvalRequest& request, std::ostream& out);

struct MasksRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path image;  // PGM; when empty, test sample `index` of the config's data
  std::size_t index = 0;
  std::filesystem::path out_dir;
};
/// One diagnostic forward pass: per-stage visual masks and the joint mask
/// (PBM), head-averaged attention per layer (CSV), heatmaps (PGM).
ForwardDiagnostics cmd_masks(const RunConfig& config, const MasksRequest& request, std::ostream& out);

/// Ablation over akr values; writes sweep.txt, sweep.json and pckh_akr_<akr>.json.
std::vector<SweepRow> cmd_sweep(const RunConfig& config, const std::vector<double>& akr_values,
                                std::ostream& out);

/// Training and test samples described by `config.data`.
std::vector<Sample> training_samples(const RunConfig& config);
std::vector<Sample> test_samples(const RunConfig& config);

}  // namespace spt
