#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "bunet/checkpoint.hpp"
#include "bunet/config.hpp"
#include "bunet/errors.hpp"
#include "bunet/trainer.hpp"

using namespace bunet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("bunet_trainer_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig tiny_run() {
  RunConfig r = desk_defaults();
  r.model.unet.depth = 2;
  r.model.unet.base_channels = 4;
  r.model.unet.input_size = 32;
  r.model.scheme = ActivationScheme::from_list("2,7");
  return r;
}

ExperimentConfig tiny(const fs::path& out) {
  ExperimentConfig c;
  c.run = tiny_run();
  c.batch_size = 4;
  c.epochs = 2;
  c.seed = 3;
  c.data.synthetic_count = 24;
  c.data.slices_per_case = 4;  // Case00..Case05, Case05 validates
  c.output_dir = out;
  return c;
}

std::size_t lines(const std::string& text) {
  std::istringstream is(text);
  std::size_t n = 0;
  for (std::string l; std::getline(is, l);) ++n;
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_parameters(const ModelGraph<float>& a, const ModelGraph<float>& b) {
  if (a.parameters().size() != b.parameters().size()) return false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    if (a.parameters()[i].value.storage() != b.parameters()[i].value.storage()) return false;
  return true;
}

}  // namespace

TEST_CASE("config text round trip and overrides") {
  RunConfig r = desk_defaults();
  CHECK(r.model.unet.base_channels == 8);
  CHECK(r.model.unet.input_size == 64);
  CHECK(r.model.scheme == ActivationScheme::cluster3());
  CHECK(r.loss.q == 1.7);
  CHECK(paper_scale().model.unet.base_channels == 32);
  CHECK(paper_scale().model.unet.input_size == 256);
  r.model.bridge = {Fusion::Add, Fusion::Concat, BridgeTap::ClusterOutput};
  r.loss.q = 2.5;
  r.model.scheme.alpha = 0.7;
  CHECK(parse_config_text(to_config_text(r)) == r);
  const auto p = parse_config_text("# comment\n\ndepth = 3\nactivation = all-relu\nloss = dice\n");
  CHECK(p.model.unet.depth == 3);
  CHECK(p.model.scheme == ActivationScheme::all_relu());
  CHECK(p.loss.kind == LossKind::Dice);
  CHECK_THROWS_AS(parse_config_text("colour = blue\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("depth = four\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("depth 4\n"), ConfigError);
  RunConfig bad = desk_defaults();
  bad.loss.q = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("experiment validation") {
  TempDir dir("validate");
  ExperimentConfig c = tiny(dir.path);
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny(dir.path);
  c.data.directory = dir.path / "absent";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny(dir.path);
  c.init_checkpoint = dir.path / "absent.ckpt";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny(dir.path);
  c.adam.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("validation data is never trained on") {
  DataSource src;
  src.synthetic_count = 24;
  src.slices_per_case = 4;
  const auto data = prepare_data(src, 32);
  std::set<std::string> train, val;
  for (const auto& s : data.train) train.insert(s.source_case);
  for (const auto& s : data.val) val.insert(s.source_case);
  CHECK(val == std::set<std::string>{"Case05"});
  for (const auto& id : val) CHECK_FALSE(train.contains(id));
  CHECK(data.train.size() == 20);
  CHECK_FALSE(data.val_is_train);
  src.validate_on_train = true;
  const auto overfit = prepare_data(src, 32);
  CHECK(overfit.val_is_train);
  CHECK(overfit.train.size() == 24);
}

TEST_CASE("checkpoint round trip gives bitwise-identical predictions") {
  TempDir dir("ckpt");
  const RunConfig run = tiny_run();
  auto g = build_model<float>(run.model);
  g.initialize(9);
  // move the batch-norm running statistics away from their defaults
  const auto samples = gen_synthetic(4, 32, 1);
  std::vector<const SliceSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const auto [x, y] = make_batch(ptrs);
  g.forward(x, ops::BatchNormMode::Train);
  save_checkpoint(dir.path / "m.ckpt", run, g);
  CHECK_FALSE(fs::exists(dir.path / "m.ckpt.tmp"));
  auto ck = load_checkpoint(dir.path / "m.ckpt");
  CHECK(ck.config == run);
  CHECK(same_parameters(g, ck.graph));
  const Tensor a = g.forward(x, ops::BatchNormMode::Eval);
  const Tensor b = ck.graph.forward(x, ops::BatchNormMode::Eval);
  CHECK(a.storage() == b.storage());
}

TEST_CASE("malformed checkpoints are data errors") {
  TempDir dir("badckpt");
  const RunConfig run = tiny_run();
  auto g = build_model<float>(run.model);
  g.initialize(1);
  save_checkpoint(dir.path / "ok.ckpt", run, g);
  const std::string good = slurp(dir.path / "ok.ckpt");
  auto write = [&](const std::string& name, const std::string& bytes) {
    std::ofstream(dir.path / name, std::ios::binary) << bytes;
    return dir.path / name;
  };
  CHECK_THROWS_AS(load_checkpoint(write("trunc.ckpt", good.substr(0, good.size() / 2))), DataError);
  CHECK_THROWS_AS(load_checkpoint(write("magic.ckpt", "XX" + good.substr(2))), DataError);
  CHECK_THROWS_AS(load_checkpoint(write("tail.ckpt", good + "junk")), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "none.ckpt"), DataError);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    std::string bytes = good;
    bytes[rng() % bytes.size()] ^= static_cast<char>(1 + rng() % 255);
    try {
      load_checkpoint(write("fuzz.ckpt", bytes));
    } catch (const DataError&) {
    }
  }
}

TEST_CASE("zero epochs leaves the initialization in the checkpoint") {
  TempDir dir("zero");
  ExperimentConfig c = tiny(dir.path / "run");
  c.epochs = 0;
  const auto r = train(c);
  CHECK(r.log.records.empty());
  auto init = build_model<float>(c.run.model);
  init.initialize(c.seed);
  CHECK(same_parameters(load_checkpoint(r.best_checkpoint).graph, init));
  CHECK(same_parameters(load_checkpoint(r.last_checkpoint).graph, init));
  CHECK(lines(slurp(dir.path / "run" / "log.csv")) == 1);
}

TEST_CASE("training writes logs and checkpoints and is reproducible") {
  TempDir dir("train");
  ExperimentConfig c = tiny(dir.path / "a");
  std::vector<std::size_t> seen;
  const auto a = train(c, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
  CHECK(seen == std::vector<std::size_t>{1, 2});
  REQUIRE(a.log.records.size() == 2);
  for (const auto& rec : a.log.records) {
    CHECK(std::isfinite(rec.train_loss));
    CHECK(rec.val_soft_dsc >= 0.0);
    CHECK(rec.val_soft_dsc <= 1.0);
    CHECK(rec.saturation.size() == 10);
    CHECK(std::isfinite(rec.train_soft_dsc));
  }
  CHECK(a.log.records[0].batch_hash != a.log.records[1].batch_hash);
  CHECK(fs::exists(a.best_checkpoint));
  CHECK(fs::exists(a.last_checkpoint));
  const std::string csv = slurp(dir.path / "a" / "log.csv");
  CHECK(lines(csv) == 3);
  CHECK(csv.rfind("epoch,train_loss,val_loss,val_soft_dsc,train_soft_dsc,wall_seconds,batch_hash,sat_c1", 0) == 0);
  CHECK(parse_config_text(slurp(dir.path / "a" / "config.txt")) == c.run);

  c.output_dir = dir.path / "b";
  const auto b = train(c);
  CHECK(a.log.same_results(b.log));
  CHECK(same_parameters(*a.model, *b.model));

  c.seed = 4;
  c.output_dir = dir.path / "c";
  CHECK_FALSE(a.log.same_results(train(c).log));
}

TEST_CASE("augmentation workers do not change results") {
  TempDir dir("workers");
  ExperimentConfig c = tiny(dir.path);
  c.write_files = false;
  c.epochs = 1;
  const auto inline_run = train(c);
  c.workers = 3;
  CHECK(inline_run.log.same_results(train(c).log));
}

TEST_CASE("pre-generated augmentation pool") {
  TempDir dir("pregen");
  ExperimentConfig c = tiny(dir.path);
  c.write_files = false;
  c.epochs = 1;
  c.pregenerate = 30;
  const auto r = train(c);
  CHECK(r.log.records.size() == 1);
  CHECK(std::isfinite(r.log.records[0].train_loss));
}

TEST_CASE("resuming with zero further epochs changes nothing") {
  TempDir dir("resume");
  ExperimentConfig c = tiny(dir.path / "first");
  c.epochs = 1;
  const auto first = train(c);
  ExperimentConfig again = c;
  again.output_dir = dir.path / "second";
  again.init_checkpoint = first.last_checkpoint;
  again.epochs = 0;
  const auto second = train(again);
  CHECK(same_parameters(*first.model, *second.model));
  CHECK(same_parameters(load_checkpoint(second.last_checkpoint).graph, *first.model));
  again.run.loss.q = 2.0;
  CHECK_THROWS_AS(train(again), ConfigError);
}

TEST_CASE("early stopping on target and patience") {
  TempDir dir("stop");
  ExperimentConfig c = tiny(dir.path);
  c.write_files = false;
  c.epochs = 5;
  c.target_train_dsc = 1e-9;
  auto r = train(c);
  CHECK(r.log.records.size() == 1);
  CHECK(r.stop_reason.find("target") != std::string::npos);
  c.target_train_dsc.reset();
  c.patience = 1;
  c.adam.learning_rate = 1e-12;
  r = train(c);
  CHECK(r.log.records.size() < 5);
  CHECK(r.stop_reason.find("improvement") != std::string::npos);
}

TEST_CASE("non-finite data aborts with epoch and batch") {
  TempDir dir("nan");
  ExperimentConfig c = tiny(dir.path);
  c.write_files = false;
  c.augment = false;
  PreparedData data = prepare_data(c.data, 32);
  for (auto& s : data.train) s.image.values[5] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(c, data);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch 1") != std::string::npos);
    CHECK(msg.find("batch 1") != std::string::npos);
  }
}

TEST_CASE("ground truth as prediction scores perfectly") {
  const auto cases = synthetic_cases(gen_synthetic(8, 32, 5), 4);
  std::vector<CaseMetrics> rows;
  for (const auto& c : cases) {
    const auto m = case_metrics(c.case_id, *c.mask, *c.mask);
    CHECK(m.vdsc == 1.0);
    CHECK(m.hd == 0.0);
    CHECK(m.abd == 0.0);
    CHECK(m.ravd == 0.0);
    CHECK_FALSE(m.flagged);
    rows.push_back(m);
  }
  const auto report = summarize(rows);
  CHECK(report.mean_vdsc == 1.0);
  CHECK(report.std_vdsc == 0.0);
  const std::string csv = report.to_csv();
  CHECK(lines(csv) == 1 + cases.size() + 1);
  CHECK(csv.rfind("case,vdsc,hd_mm,abd_mm,ravd_pct", 0) == 0);
  CHECK(csv.find("\nsummary,") != std::string::npos);
}

TEST_CASE("empty prediction is flagged with undefined surface metrics") {
  const auto cases = synthetic_cases(gen_synthetic(4, 32, 5), 4);
  const BinaryVolume empty(cases[0].depth, cases[0].height, cases[0].width, cases[0].spacing);
  const auto m = case_metrics("Case00", *cases[0].mask, empty);
  CHECK(m.flagged);
  CHECK(m.vdsc == 0.0);
  CHECK_FALSE(m.hd.has_value());
  CHECK_FALSE(m.abd.has_value());
  CHECK(m.ravd == 100.0);
  const auto csv = summarize({m}).to_csv();
  CHECK(csv.find("undefined") != std::string::npos);
}

TEST_CASE("summary statistics") {
  std::vector<CaseMetrics> rows(4);
  const double v[4] = {0.9, 0.7, 0.8, 0.6};
  for (int i = 0; i < 4; ++i) {
    rows[static_cast<std::size_t>(i)].vdsc = v[i];
    rows[static_cast<std::size_t>(i)].hd = 2.0 * i;
  }
  rows[3].hd.reset();
  const auto r = summarize(rows);
  CHECK(r.mean_vdsc == doctest::Approx(0.75));
  CHECK(r.median_vdsc == doctest::Approx(0.75));
  CHECK(r.std_vdsc == doctest::Approx(std::sqrt(0.0125)));
  CHECK(r.mean_hd == doctest::Approx(2.0));
}

TEST_CASE("predicted volumes keep the input geometry, binary and deterministic") {
  const RunConfig run = tiny_run();
  auto g = build_model<float>(run.model);
  g.initialize(2);
  VolumeRecord v;
  v.case_id = "Case09";
  v.depth = 3;
  v.height = 45;
  v.width = 37;
  v.spacing = {3.0, 0.6, 0.6};
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0, 1);
  v.image.resize(v.depth * v.height * v.width);
  for (auto& p : v.image) p = n(rng);
  const auto a = predict_volume(g, v, 32);
  const auto b = predict_volume(g, v, 32);
  CHECK(a.depth == 3);
  CHECK(a.height == 45);
  CHECK(a.width == 37);
  CHECK(a.spacing == v.spacing);
  CHECK(a.voxels == b.voxels);
  CHECK(std::all_of(a.voxels.begin(), a.voxels.end(), [](std::uint8_t x) { return x <= 1; }));
}

TEST_CASE("evaluation emits one row per case plus a summary") {
  const RunConfig run = tiny_run();
  auto g = build_model<float>(run.model);
  g.initialize(2);
  const auto cases = synthetic_cases(gen_synthetic(12, 32, 5), 4);
  const auto report = evaluate(g, cases, 32);
  CHECK(report.cases.size() == 3);
  CHECK(lines(report.to_csv()) == 5);
  std::vector<VolumeRecord> unlabeled = cases;
  for (auto& c : unlabeled) c.mask.reset();
  CHECK_THROWS_AS(evaluate(g, unlabeled, 32), DataError);
}

TEST_CASE("ablation suites mirror the published tables") {
  const auto t1 = ablation_rows(AblationSuite::Table1, desk_defaults());
  REQUIRE(t1.size() == 6);
  CHECK(t1[0].run.model.architecture == Architecture::UNet);
  const std::pair<Fusion, Fusion> expect[] = {{Fusion::None, Fusion::None}, {Fusion::Add, Fusion::None},
                                              {Fusion::Concat, Fusion::None}, {Fusion::Concat, Fusion::Concat},
                                              {Fusion::Concat, Fusion::Add}};
  for (std::size_t i = 1; i < 6; ++i) {
    CHECK(t1[i].run.model.bridge.bridging == expect[i - 1].first);
    CHECK(t1[i].run.model.bridge.skip == expect[i - 1].second);
  }
  const double t1_ref[] = {86.73, 85.57, 86.99, 87.85, 86.02, 88.12};
  for (std::size_t i = 0; i < 6; ++i) CHECK(t1[i].reference_vdsc == t1_ref[i]);

  const auto t2 = ablation_rows(AblationSuite::Table2, desk_defaults());
  REQUIRE(t2.size() == 5);
  CHECK(t2[4].run.model.scheme == ActivationScheme::cluster3());
  CHECK(t2[4].reference_vdsc == 89.10);

  const auto t4 = ablation_rows(AblationSuite::Table4, desk_defaults());
  REQUIRE(t4.size() == 4);
  CHECK(t4[0].run.loss.kind == LossKind::Dice);
  const double qs[] = {1.7, 2.0, 3.0};
  const double t4_ref[] = {89.56, 88.77, 87.79};
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(t4[i + 1].run.loss.kind == LossKind::CosDice);
    CHECK(t4[i + 1].run.loss.q == qs[i]);
    CHECK(t4[i + 1].reference_vdsc == t4_ref[i]);
  }
  CHECK(parse_ablation_suite("table4") == AblationSuite::Table4);
  CHECK_THROWS_AS(parse_ablation_suite("table3"), ConfigError);
}

TEST_CASE("a row that cannot be built aborts the suite before training") {
  TempDir dir("abort");
  ExperimentConfig c = tiny(dir.path / "out");
  c.run.model.unet.depth = 1;
  c.run.model.unet.input_size = 32;
  c.run.model.scheme = ActivationScheme::all_elu();
  // depth 1 has 6 clusters, so the cluster presets of table 2 are invalid
  CHECK_THROWS_AS(run_ablation(AblationSuite::Table2, c), ConfigError);
  CHECK_FALSE(fs::exists(dir.path / "out"));
}

TEST_CASE("every ablation row sees the same data order") {
  TempDir dir("ablation");
  ExperimentConfig c = tiny(dir.path);
  c.epochs = 1;
  c.run.model.scheme = ActivationScheme::all_elu();
  c.run.model.unet.depth = 4;
  c.run.model.unet.base_channels = 2;
  const auto report = run_ablation(AblationSuite::Table4, c);
  REQUIRE(report.rows.size() == 4);
  for (const auto& r : report.rows) {
    CHECK(r.order_hash == report.rows[0].order_hash);
    CHECK(r.epochs_run == 1);
    CHECK(r.mean_vdsc >= 0.0);
  }
  const std::string csv = slurp(dir.path / "ablation_table4.csv");
  CHECK(lines(csv) == 5);
  CHECK(csv.find("cos-dice") != std::string::npos);
}
