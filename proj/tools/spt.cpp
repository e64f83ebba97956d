#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spt/commands.hpp"
#include "spt/errors.hpp"
#include "spt/io.hpp"

namespace {

using namespace spt;

// Flags shared by commands that take a run config; each overrides the file value when given.
struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::size_t> steps, batch_size, train_count, test_count;
  std::optional<double> lr, akr;
  std::optional<std::uint64_t> seed, init_seed, data_seed;
  std::string k_mode, skeleton, train_data, test_data;
  std::vector<std::size_t> update_layers;

  void add_to(CLI::App& app, bool training) {
    app.add_option("-c,--config", config, "Run config JSON");
    app.add_option("--akr", akr, "Attention-keep ratio in (0, 1]");
    app.add_option("--k-mode", k_mode, "Keep-count rule")->check(CLI::IsMember({"support-relative", "n-relative"}));
    app.add_option("--update-layers", update_layers, "Encoder layers that update the mask")->delimiter(',');
    app.add_option("--skeleton", skeleton, "builtin:toy, builtin:mpii or a skeleton JSON path");
    app.add_option("--test-data", test_data, "Test dataset directory or annotation file");
    app.add_option("--test-count", test_count, "Synthetic test samples");
    app.add_option("--data-seed", data_seed, "Synthetic scene seed");
    if (!training) return;
    app.add_option("-o,--out", out, "Output directory");
    app.add_option("--steps", steps, "Training steps");
    app.add_option("--batch-size", batch_size, "Samples per step");
    app.add_option("--lr", lr, "Adam step size");
    app.add_option("--seed", seed, "Batch-order seed");
    app.add_option("--init-seed", init_seed, "Parameter initialization seed");
    app.add_option("--train-data", train_data, "Training dataset directory or annotation file");
    app.add_option("--train-count", train_count, "Synthetic training samples");
  }

  RunConfig resolve(RunConfig base) const {
    if (!config.empty()) base = load_run_config(config);
    if (!out.empty()) base.output_dir = out;
    if (steps) base.training.steps = *steps;
    if (batch_size) base.training.batch_size = *batch_size;
    if (lr) base.training.learning_rate = *lr;
    if (seed) base.training.seed = *seed;
    if (init_seed) base.training.init_seed = *init_seed;
    if (akr) base.model.schedule.akr = *akr;
    if (!k_mode.empty()) base.model.schedule.k_mode = parse_k_mode(k_mode);
    if (!update_layers.empty()) base.model.schedule.update_layers = update_layers;
    if (!skeleton.empty()) base.skeleton = skeleton;
    if (!train_data.empty()) base.data.train_annotations = train_data;
    if (!test_data.empty()) base.data.test_annotations = test_data;
    if (train_count) base.data.train_count = *train_count;
    if (test_count) base.data.test_count = *test_count;
    if (data_seed) base.data.synthetic.seed = *data_seed;
    return base;
  }
};

// Run config recorded in a checkpoint manifest, or the defaults.
RunConfig checkpoint_run_config(const std::string& checkpoint) {
  RunConfig config = default_run_config();
  const auto manifest = std::filesystem::path(checkpoint) / "manifest.json";
  if (!std::filesystem::exists(manifest)) return config;
  try {
    const auto j = nlohmann::json::parse(read_text_file(manifest));
    if (j.contains("run")) from_json(j.at("run"), config);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest.string() + ": " + e.what());
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-attention pose transformer: data generation, training, evaluation and mask inspection"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset (PGM images + annotations.json)");
  std::string gen_config, gen_out;
  std::size_t gen_count = 0;
  std::uint64_t gen_first = 0;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("-c,--config", gen_config, "Run config JSON (its data.synthetic section is used)");
  gen->add_option("-n,--count", gen_count, "Number of samples")->required();
  gen->add_option("--first-index", gen_first, "Index of the first sample");
  gen->add_option("--seed", gen_seed, "Scene seed");
  gen->add_option("-o,--out", gen_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  Overrides train_opts;
  train_opts.add_to(*train, true);

  auto* eval = app.add_subcommand("eval", "Score a checkpoint with PCKh");
  Overrides eval_opts;
  EvalRequest eval_req;
  std::string eval_ckpt, eval_out, decoder = "refined";
  eval_opts.add_to(*eval, false);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required();
  eval->add_option("--thresholds", eval_req.thresholds, "PCKh alphas")->delimiter(',');
  eval->add_option("--decoder", decoder, "Heatmap decoder")->check(CLI::IsMember({"refined", "argmax"}));
  eval->add_option("-o,--out", eval_out, "Report directory")->required();

  auto* masks = app.add_subcommand("masks", "Export masks, attention maps and heatmaps for one image");
  Overrides mask_opts;
  MasksRequest mask_req;
  std::string mask_ckpt, mask_image, mask_out;
  mask_opts.add_to(*masks, false);
  masks->add_option("--checkpoint", mask_ckpt, "Checkpoint directory")->required();
  masks->add_option("--image", mask_image, "PGM image (default: a test sample)");
  masks->add_option("--index", mask_req.index, "Test sample index");
  masks->add_option("-o,--out", mask_out, "Export directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Train and score one model per attention-keep ratio");
  Overrides sweep_opts;
  std::vector<double> akr_list{0.2, 0.5, 0.6, 0.7, 0.8, 1.0};
  sweep_opts.add_to(*sweep, true);
  sweep->add_option("--akr-list", akr_list, "Comma-separated akr values")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      RunConfig config = gen_config.empty() ? default_run_config() : load_run_config(gen_config);
      if (gen_seed) config.data.synthetic.seed = *gen_seed;
      cmd_gen_data(config.data.synthetic, gen_count, gen_first, gen_out, std::cout);
    } else if (*train) {
      cmd_train(train_opts.resolve(default_run_config()), std::cout);
    } else if (*eval) {
      const auto config = eval_opts.resolve(checkpoint_run_config(eval_ckpt));
      eval_req.checkpoint = eval_ckpt;
      eval_req.decoder = parse_decoder(decoder);
      eval_req.out_dir = eval_out;
      cmd_eval(config, eval_req, std::cout);
    } else if (*masks) {
      const auto config = mask_opts.resolve(checkpoint_run_config(mask_ckpt));
      mask_req.checkpoint = mask_ckpt;
      mask_req.image = mask_image;
      mask_req.out_dir = mask_out;
      cmd_masks(config, mask_req, std::cout);
    } else if (*sweep) {
      cmd_sweep(sweep_opts.resolve(default_run_config()), akr_list, std::cout);
    }
  } catch (...) {
    return report_exception(std::cerr);
  }
  return kExitOk;
}
