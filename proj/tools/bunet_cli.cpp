// bunet command-line driver.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bunet/checkpoint.hpp"
#include "bunet/config.hpp"
#include "bunet/dataset.hpp"
#include "bunet/errors.hpp"
#include "bunet/fusion.hpp"
#include "bunet/losses.hpp"
#include "bunet/parallel.hpp"
#include "bunet/trainer.hpp"

namespace {

using namespace bunet;

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

std::set<int> parse_ids(const std::string& list) {
  std::set<int> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.insert(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("invalid case id '" + item + "'");
    }
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      throw ConfigError("invalid number '" + item + "'");
    }
  }
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p);
  os << text;
  if (!os) throw DataError("cannot write " + path);
}

// Options shared by train and ablation.
struct TrainOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string activation;
  std::string relu_clusters;
  std::string loss;
  double q = 0.0;
  bool paper = false;
  std::string data_dir;
  std::size_t synthetic_count = 200;
  std::size_t slices_per_case = 8;
  std::uint64_t data_seed = 7;
  std::string val_ids;
  bool overfit = false;
  bool no_augment = false;
  ExperimentConfig exp;
  double target = 0.0;
  std::string resume;

  void add(CLI::App* app) {
    app->add_option("--seed", exp.seed, "Random seed")->required();
    app->add_option("--config", config_file, "Model configuration file (key = value lines)");
    app->add_option("--set", overrides, "Override one configuration key, e.g. --set depth=3");
    app->add_flag("--paper-scale", paper, "Base 32 channels, 256x256 slices");
    app->add_option("--activation", activation, "all-elu | all-relu | cluster1 | cluster2 | cluster3");
    app->add_option("--relu-clusters", relu_clusters, "Comma-separated cluster numbers using ReLU");
    app->add_option("--loss", loss, "dice | cos-dice");
    app->add_option("--q", q, "Cos-dice exponent Q");
    app->add_option("--epochs", exp.epochs, "Epoch budget")->capture_default_str();
    app->add_option("--batch", exp.batch_size, "Mini-batch size")->capture_default_str();
    app->add_option("--lr", exp.adam.learning_rate, "Adam learning rate")->capture_default_str();
    app->add_option("--patience", exp.patience, "Early-stop patience in epochs (0 disables)")->capture_default_str();
    app->add_option("--target-train-dsc", target, "Stop once the training soft DSC reaches this value");
    app->add_option("--data", data_dir, "Directory of CaseXX.mhd volumes (default: synthetic data)");
    app->add_option("--synthetic-count", synthetic_count, "Synthetic slices")->capture_default_str();
    app->add_option("--slices-per-case", slices_per_case, "Synthetic slices per volume")->capture_default_str();
    app->add_option("--data-seed", data_seed, "Synthetic data seed")->capture_default_str();
    app->add_option("--val-ids", val_ids, "Validation case numbers, e.g. 5,15,25,35,45");
    app->add_flag("--overfit", overfit, "Validate on the training cases");
    app->add_flag("--no-augment", no_augment, "Disable flip/rotation augmentation");
    app->add_option("--pregenerate", exp.pregenerate, "Pre-generate this many augmented images");
    app->add_option("--workers", exp.workers, "Augmentation producer threads")->capture_default_str();
    app->add_option("--resume", resume, "Initialize from a checkpoint");
    app->add_option("--out", exp.output_dir, "Output directory")->capture_default_str();
  }

  ExperimentConfig finish() {
    RunConfig run = paper ? paper_scale() : desk_defaults();
    if (paper && exp.batch_size == 8) exp.batch_size = 24;
    if (!config_file.empty()) run = load_config_file(config_file, run);
    if (!activation.empty()) apply_config_key(run, "activation", activation);
    if (!relu_clusters.empty()) apply_config_key(run, "relu_clusters", relu_clusters == "none" ? "" : relu_clusters);
    if (!loss.empty()) apply_config_key(run, "loss", loss);
    if (q != 0.0) run.loss.q = q;
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
      apply_config_key(run, o.substr(0, eq), o.substr(eq + 1));
    }
    exp.run = run;
    exp.data.directory = data_dir;
    exp.data.synthetic_count = synthetic_count;
    exp.data.slices_per_case = slices_per_case;
    exp.data.synthetic_seed = data_seed;
    if (!val_ids.empty()) exp.data.val_ids = parse_ids(val_ids == "none" ? "" : val_ids);
    exp.data.validate_on_train = overfit;
    exp.augment = !no_augment;
    if (target > 0.0) exp.target_train_dsc = target;
    if (!resume.empty()) exp.init_checkpoint = resume;
    exp.validate();
    return exp;
  }
};

void print_epoch(const std::string& prefix, const EpochRecord& r) {
  std::printf("%sepoch %zu  train_loss %.5f  val_loss %.5f  val_soft_dsc %.4f  train_soft_dsc %.4f  %.1fs\n",
              prefix.c_str(), r.epoch, r.train_loss, r.val_loss, r.val_soft_dsc, r.train_soft_dsc, r.wall_seconds);
  std::fflush(stdout);
}

int run(int argc, char** argv) {
  CLI::App app{"Bridged U-net training and analysis"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads for tensor kernels (1 = deterministic)")->capture_default_str();

  // train
  TrainOptions topt;
  auto* train_cmd = app.add_subcommand("train", "Train a network");
  topt.add(train_cmd);

  // ablation
  TrainOptions aopt;
  std::string suite;
  auto* abl_cmd = app.add_subcommand("ablation", "Run an ablation suite (table1, table2, table4)");
  abl_cmd->add_option("--suite", suite, "table1 | table2 | table4")->required();
  aopt.add(abl_cmd);

  // eval
  std::string ckpt;
  std::string eval_data;
  std::string eval_out;
  std::string eval_cases = "val";
  std::string eval_val_ids;
  double hd_percentile = 100.0;
  std::size_t eval_synthetic = 200;
  std::size_t eval_spc = 8;
  std::uint64_t eval_seed = 7;
  auto* eval_cmd = app.add_subcommand("eval", "Per-case vDSC/HD/ABD/RAVD of a checkpoint");
  eval_cmd->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "Directory of CaseXX.mhd volumes (default: synthetic data)");
  eval_cmd->add_option("--cases", eval_cases, "val | train | all")->capture_default_str();
  eval_cmd->add_option("--val-ids", eval_val_ids, "Validation case numbers");
  eval_cmd->add_option("--synthetic-count", eval_synthetic)->capture_default_str();
  eval_cmd->add_option("--slices-per-case", eval_spc)->capture_default_str();
  eval_cmd->add_option("--data-seed", eval_seed)->capture_default_str();
  eval_cmd->add_option("--hd-percentile", hd_percentile, "100 for the exact Hausdorff distance")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "CSV path (default: stdout)");

  // predict
  std::string pred_ckpt;
  std::string pred_in;
  std::string pred_out;
  auto* pred_cmd = app.add_subcommand("predict", "Segment one volume");
  pred_cmd->add_option("--checkpoint", pred_ckpt, "Checkpoint file")->required();
  pred_cmd->add_option("--input", pred_in, "Input .mhd volume")->required();
  pred_cmd->add_option("--out", pred_out, "Output mask .mhd")->required();

  // analyze-loss
  std::string qs = "1.7,2,3";
  std::size_t resolution = 101;
  std::string loss_out;
  auto* loss_cmd = app.add_subcommand("analyze-loss", "Dice and cos-dice loss curves over DSC");
  loss_cmd->add_option("--q", qs, "Comma-separated Q values")->capture_default_str();
  loss_cmd->add_option("--resolution", resolution, "Samples on [0, 1]")->capture_default_str();
  loss_cmd->add_option("--out", loss_out, "CSV path (default: stdout)");

  // verify-fusion
  FusionExperiment fx;
  auto* fusion_cmd = app.add_subcommand("verify-fusion", "Monte-Carlo variance of add vs concat fusion");
  fusion_cmd->add_option("--n", fx.sample_count, "Samples per stream")->capture_default_str();
  fusion_cmd->add_option("--sigma", fx.sigma, "Standard deviation of each stream")->capture_default_str();
  fusion_cmd->add_option("--seed", fx.seed, "Random seed")->capture_default_str();

  // gen-data
  std::size_t gen_count = 200;
  std::size_t gen_size = 64;
  std::size_t gen_spc = 8;
  std::uint64_t gen_seed = 7;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic MetaImage dataset");
  gen_cmd->add_option("--count", gen_count, "Number of slices")->capture_default_str();
  gen_cmd->add_option("--size", gen_size, "Slice side in pixels")->capture_default_str();
  gen_cmd->add_option("--slices-per-case", gen_spc, "Slices per volume")->capture_default_str();
  gen_cmd->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (threads < 1) throw ConfigError("--threads must be at least 1");
  set_num_threads(threads);

  if (*train_cmd) {
    const ExperimentConfig cfg = topt.finish();
    const TrainResult r = train(cfg, [](const EpochRecord& e) { print_epoch("", e); });
    std::printf("stopped: %s\nbest epoch %zu, val soft DSC %.4f\nbest checkpoint %s\nlast checkpoint %s\n",
                r.stop_reason.c_str(), r.best_epoch, r.best_val_soft_dsc, r.best_checkpoint.string().c_str(),
                r.last_checkpoint.string().c_str());
  } else if (*abl_cmd) {
    const AblationSuite s = parse_ablation_suite(suite);
    const ExperimentConfig cfg = aopt.finish();
    const AblationReport rep =
        run_ablation(s, cfg, [](const std::string& label, const EpochRecord& e) { print_epoch("[" + label + "] ", e); });
    std::cout << rep.to_csv();
  } else if (*eval_cmd) {
    Checkpoint ck = load_checkpoint(ckpt);
    DataSource src;
    src.directory = eval_data;
    src.synthetic_count = eval_synthetic;
    src.slices_per_case = eval_spc;
    src.synthetic_seed = eval_seed;
    if (!eval_val_ids.empty()) src.val_ids = parse_ids(eval_val_ids);
    const auto size = static_cast<std::size_t>(ck.config.model.unet.input_size);
    PreparedData data = prepare_data(src, size);
    std::vector<VolumeRecord> cases;
    if (eval_cases == "val") {
      cases = data.val_cases;
    } else if (eval_cases == "train") {
      cases = data.train_cases;
    } else if (eval_cases == "all") {
      cases = data.train_cases;
      cases.insert(cases.end(), data.val_cases.begin(), data.val_cases.end());
    } else {
      throw ConfigError("--cases must be val, train or all");
    }
    write_file(eval_out, evaluate(ck.graph, cases, size, hd_percentile).to_csv());
  } else if (*pred_cmd) {
    Checkpoint ck = load_checkpoint(pred_ckpt);
    VolumeRecord v = load_volume(pred_in);
    const BinaryVolume mask =
        predict_volume(ck.graph, v, static_cast<std::size_t>(ck.config.model.unet.input_size));
    save_mask(pred_out, mask);
    std::printf("wrote %s (%zu x %zu x %zu, %zu foreground voxels)\n", pred_out.c_str(), mask.depth, mask.height,
                mask.width, mask.count());
  } else if (*loss_cmd) {
    write_file(loss_out, loss_curve(parse_doubles(qs), resolution).to_csv());
  } else if (*fusion_cmd) {
    std::printf("%-8s %12s %12s %12s %12s\n", "method", "samples", "variance", "expected", "std_error");
    double var[2] = {0.0, 0.0};
    int i = 0;
    for (Fusion m : {Fusion::Add, Fusion::Concat}) {
      FusionExperiment e = fx;
      e.method = m;
      const FusionEstimate r = simulate_fusion_variance(e);
      std::printf("%-8s %12zu %12.6f %12.6f %12.6f\n", std::string(to_string(m)).c_str(), r.fused_count, r.variance,
                  r.expected, r.standard_error);
      var[i++] = r.variance;
    }
    std::printf("ratio add/concat %.6f (expected 2)\n", var[1] > 0.0 ? var[0] / var[1] : 0.0);
  } else if (*gen_cmd) {
    const auto cases = synthetic_cases(gen_synthetic(gen_count, gen_size, gen_seed), gen_spc);
    write_cases(gen_out, cases);
    std::printf("wrote %zu cases (%zu slices of %zux%zu) to %s\n", cases.size(), gen_count, gen_size, gen_size,
                gen_out.c_str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const bunet::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const bunet::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const bunet::MetricUndefined& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const bunet::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
