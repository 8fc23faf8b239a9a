#include "bunet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "bunet/activations.hpp"
#include "bunet/errors.hpp"
#include "bunet/losses.hpp"
#include "bunet/unet.hpp"

namespace bunet {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void fnv(std::uint64_t& h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

template <typename U>
void fnv_value(std::uint64_t& h, U v) {
  fnv(h, &v, sizeof v);
}

std::uint64_t hash_samples(const std::vector<SliceSample>& samples, std::uint64_t h) {
  for (const auto& s : samples) {
    fnv(h, s.source_case.data(), s.source_case.size());
    fnv_value(h, static_cast<std::uint64_t>(s.slice_index));
    fnv(h, s.image.values.data(), s.image.values.size() * sizeof(float));
    fnv(h, s.mask.values.data(), s.mask.values.size() * sizeof(float));
  }
  return h;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : "undefined"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  os << text;
  if (!os) throw DataError("cannot write " + path.string());
}

std::vector<const SliceSample*> pointers(const std::vector<SliceSample>& v, std::size_t begin, std::size_t end) {
  std::vector<const SliceSample*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(&v[i]);
  return out;
}

// Per-cluster saturation of the last forward pass.
std::vector<double> cluster_saturation(const ModelGraph<float>& graph, const ClusterMap& map) {
  std::vector<double> sum(static_cast<std::size_t>(map.cluster_count), 0.0);
  std::vector<int> count(sum.size(), 0);
  for (const auto& layer : map.layers) {
    const auto& act = graph.node(layer.activation_node);
    const auto idx = static_cast<std::size_t>(layer.cluster - 1);
    sum[idx] += saturation_stats(graph.value(act.inputs.at(0)));
    ++count[idx];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = count[i] ? sum[i] / count[i] : 0.0;
  return sum;
}

std::vector<TensorT<float>> snapshot(const ModelGraph<float>& graph) {
  std::vector<TensorT<float>> out;
  out.reserve(graph.parameters().size());
  for (const auto& p : graph.parameters()) out.push_back(p.value);
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  run.validate();
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!data.directory.empty() && !std::filesystem::is_directory(data.directory)) {
    throw ConfigError("dataset directory not found: " + data.directory.string());
  }
  if (data.directory.empty() && data.synthetic_count == 0) throw ConfigError("synthetic dataset is empty");
  if (init_checkpoint && !std::filesystem::exists(*init_checkpoint)) {
    throw ConfigError("checkpoint not found: " + init_checkpoint->string());
  }
  if (target_train_dsc && !(*target_train_dsc > 0.0 && *target_train_dsc <= 1.0)) {
    throw ConfigError("target train DSC must lie in (0, 1]");
  }
}

std::string TrainingLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_soft_dsc,train_soft_dsc,wall_seconds,batch_hash";
  const std::size_t clusters = records.empty() ? 0 : records.front().saturation.size();
  for (std::size_t c = 0; c < clusters; ++c) os << ",sat_c" << c + 1;
  os << '\n';
  for (const auto& r : records) {
    os << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss) << ',' << fmt(r.val_soft_dsc) << ','
       << fmt(r.train_soft_dsc) << ',' << fmt(r.wall_seconds) << ',' << r.batch_hash;
    for (double s : r.saturation) os << ',' << fmt(s);
    os << '\n';
  }
  return os.str();
}

bool TrainingLog::same_results(const TrainingLog& other) const {
  if (records.size() != other.records.size()) return false;
  auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& a = records[i];
    const auto& b = other.records[i];
    if (a.epoch != b.epoch || !same(a.train_loss, b.train_loss) || !same(a.val_loss, b.val_loss) ||
        !same(a.val_soft_dsc, b.val_soft_dsc) || !same(a.train_soft_dsc, b.train_soft_dsc) ||
        a.batch_hash != b.batch_hash || a.saturation != b.saturation) {
      return false;
    }
  }
  return true;
}

PreparedData prepare_data(const DataSource& source, std::size_t input_size) {
  std::vector<VolumeRecord> cases;
  std::set<int> val_ids;
  if (source.directory.empty()) {
    cases = synthetic_cases(gen_synthetic(source.synthetic_count, input_size, source.synthetic_seed),
                            source.slices_per_case);
    if (source.val_ids) {
      val_ids = *source.val_ids;
    } else {
      for (int id : kDefaultValidationIds) {
        if (static_cast<std::size_t>(id) < cases.size()) val_ids.insert(id);
      }
    }
  } else {
    cases = load_case_directory(source.directory);
    val_ids = source.val_ids.value_or(kDefaultValidationIds);
  }
  PreparedData data;
  if (source.validate_on_train) {
    data.train_cases = std::move(cases);
    data.val_cases = data.train_cases;
    data.val_is_train = true;
  } else {
    CaseSplit split = split_train_val(std::move(cases), val_ids);
    data.train_cases = std::move(split.train);
    data.val_cases = std::move(split.val);
  }
  if (data.train_cases.empty()) throw ConfigError("no training cases remain after the validation split");
  data.train = volume_slices(data.train_cases, input_size);
  data.val = volume_slices(data.val_cases, input_size);
  data.hash = hash_samples(data.val, hash_samples(data.train, kFnvOffset));
  return data;
}

ModelGraph<float> TrainResult::best_model() const {
  if (!model) throw UsageError("training result holds no model");
  ModelGraph<float> g = *model;
  for (std::size_t i = 0; i < best_parameters.size(); ++i) g.parameters()[i].value = best_parameters[i];
  return g;
}

SetScore score_slices(ModelGraph<float>& graph, const LossConfig& loss, const std::vector<SliceSample>& slices,
                      std::size_t batch_size) {
  if (slices.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double inter = 0.0;
  double psum = 0.0;
  double msum = 0.0;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t b = 0; b < slices.size(); b += batch_size) {
    const auto ptrs = pointers(slices, b, std::min(slices.size(), b + batch_size));
    auto [image, mask] = make_batch(ptrs);
    const Tensor& pred = graph.forward(image, ops::BatchNormMode::Eval);
    const DiceTerms t = dice_terms<float>(pred.values(), mask.values(), loss.smooth);
    inter += t.intersection;
    psum += t.pred_sum;
    msum += t.mask_sum;
    loss_sum += evaluate_loss<float>(loss, pred.values(), mask.values(), {}).loss;
    ++batches;
  }
  const DiceTerms pooled{inter, psum, msum, loss.smooth};
  return {loss_sum / static_cast<double>(batches), pooled.dsc()};
}

TrainResult train(const ExperimentConfig& config, const PreparedData& data, const EpochCallback& on_epoch) {
  config.validate();
  const RunConfig& run = config.run;

  TrainResult result;
  if (config.init_checkpoint) {
    Checkpoint ck = load_checkpoint(*config.init_checkpoint);
    if (!(ck.config == run)) throw ConfigError("checkpoint configuration differs from the requested model");
    result.model.emplace(std::move(ck.graph));
  } else {
    result.model.emplace(build_model<float>(run.model));
    result.model->initialize(config.seed);
  }
  ModelGraph<float>& graph = *result.model;
  const ClusterMap cmap = cluster_index_map(graph);

  std::vector<SliceSample> pool;
  const std::vector<SliceSample>* train_set = &data.train;
  bool augment = config.augment;
  if (config.pregenerate > 0 && !data.train.empty()) {
    pool.reserve(config.pregenerate);
    for (std::size_t i = 0; i < config.pregenerate; ++i) {
      std::mt19937_64 rng(augment_seed(config.seed, std::numeric_limits<std::size_t>::max(), i));
      pool.push_back(bunet::augment(data.train[i % data.train.size()], rng));
    }
    train_set = &pool;
    augment = false;
  }
  if (train_set->empty()) throw DataError("training set is empty");

  const std::filesystem::path dir = config.output_dir;
  if (config.write_files) std::filesystem::create_directories(dir);
  result.best_checkpoint = dir / "best.ckpt";
  result.last_checkpoint = dir / "last.ckpt";
  result.best_parameters = snapshot(graph);
  result.best_val_soft_dsc = -1.0;
  if (config.write_files) {
    save_checkpoint(result.best_checkpoint, run, graph);
    write_text(dir / "config.txt", to_config_text(run));
  }

  AdamState adam;
  adam.hyper = config.adam;
  std::size_t stale = 0;
  result.stop_reason = "epoch budget reached";
  Tensor grad;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_set->size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(augment_seed(config.seed ^ 0x9E3779B97F4A7C15ull, epoch, 0));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.batch_hash = kFnvOffset;
    for (std::size_t i : order) fnv_value(rec.batch_hash, static_cast<std::uint64_t>(i));

    AugmentStream stream(*train_set, order, config.seed, epoch, augment, config.workers);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      std::vector<SliceSample> batch;
      batch.reserve(count);
      for (std::size_t k = 0; k < count; ++k) batch.push_back(*stream.next());
      auto [image, mask] = make_batch(pointers(batch, 0, batch.size()));
      const Tensor& pred = graph.forward(image, ops::BatchNormMode::Train);
      if (grad.shape() != pred.shape()) grad = Tensor(pred.shape());
      const LossResult lr = evaluate_loss<float>(run.loss, pred.values(), mask.values(), grad.values());
      if (!std::isfinite(lr.loss)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches + 1));
      }
      graph.backward(grad);
      try {
        const auto refs = trainable_refs(graph);
        adam_step<float>(refs, adam);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches + 1) + ")");
      }
      loss_sum += lr.loss;
      ++batches;
    }
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.saturation = cluster_saturation(graph, cmap);

    const SetScore val = score_slices(graph, run.loss, data.val, config.batch_size);
    rec.val_loss = val.loss;
    rec.val_soft_dsc = val.soft_dsc;
    if (data.val_is_train) {
      rec.train_soft_dsc = val.soft_dsc;
    } else if (config.track_train_dsc) {
      rec.train_soft_dsc = score_slices(graph, run.loss, data.train, config.batch_size).soft_dsc;
    } else {
      rec.train_soft_dsc = std::numeric_limits<double>::quiet_NaN();
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.records.push_back(rec);

    const double score = std::isnan(rec.val_soft_dsc) ? rec.train_soft_dsc : rec.val_soft_dsc;
    if (score > result.best_val_soft_dsc) {
      result.best_val_soft_dsc = score;
      result.best_epoch = epoch;
      result.best_parameters = snapshot(graph);
      if (config.write_files) save_checkpoint(result.best_checkpoint, run, graph);
      stale = 0;
    } else {
      ++stale;
    }
    if (config.write_files) write_text(dir / "log.csv", result.log.to_csv());
    if (on_epoch) on_epoch(rec);

    if (config.target_train_dsc && rec.train_soft_dsc >= *config.target_train_dsc) {
      result.stop_reason = "target train soft DSC reached";
      break;
    }
    if (config.patience > 0 && stale >= config.patience) {
      result.stop_reason = "no validation improvement for " + std::to_string(stale) + " epochs";
      break;
    }
  }
  if (result.best_val_soft_dsc < 0.0) result.best_val_soft_dsc = 0.0;
  if (config.write_files) {
    save_checkpoint(result.last_checkpoint, run, graph);
    write_text(dir / "log.csv", result.log.to_csv());
  }
  return result;
}

TrainResult train(const ExperimentConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const PreparedData data = prepare_data(config.data, static_cast<std::size_t>(config.run.model.unet.input_size));
  return train(config, data, on_epoch);
}

std::vector<Slice> predict_slices(ModelGraph<float>& graph, const std::vector<SliceSample>& slices,
                                  std::size_t batch_size) {
  std::vector<Slice> out;
  out.reserve(slices.size());
  for (std::size_t b = 0; b < slices.size(); b += batch_size) {
    const auto ptrs = pointers(slices, b, std::min(slices.size(), b + batch_size));
    auto [image, mask] = make_batch(ptrs);
    const Tensor& pred = graph.forward(image, ops::BatchNormMode::Eval);
    const Shape s = pred.shape();
    for (std::size_t n = 0; n < s.n; ++n) {
      Slice p(s.h, s.w);
      const auto src = pred.values().subspan(n * s.sample(), s.plane());
      std::copy(src.begin(), src.end(), p.values.begin());
      out.push_back(std::move(p));
    }
  }
  return out;
}

BinaryVolume predict_volume(ModelGraph<float>& graph, const VolumeRecord& volume, std::size_t input_size,
                            std::size_t batch_size) {
  if (volume.depth == 0 || volume.height == 0 || volume.width == 0) throw DataError("empty volume " + volume.case_id);
  VolumeRecord image_only = volume;
  image_only.mask.reset();
  const auto probs = predict_slices(graph, volume_slices(image_only, input_size), batch_size);
  BinaryVolume out(volume.depth, volume.height, volume.width, volume.spacing);
  const std::size_t plane = volume.height * volume.width;
  for (std::size_t z = 0; z < volume.depth; ++z) {
    const Slice full = resize_bilinear(probs[z], volume.height, volume.width);
    for (std::size_t k = 0; k < plane; ++k) out.voxels[z * plane + k] = full.values[k] >= 0.5f ? 1 : 0;
  }
  return out;
}

CaseMetrics case_metrics(const std::string& case_id, const BinaryVolume& truth, const BinaryVolume& prediction,
                         double hd_percentile) {
  CaseMetrics m;
  m.case_id = case_id;
  m.vdsc = vdsc(truth, prediction);
  if (truth.count() == 0) {
    m.flagged = true;
    return m;
  }
  m.ravd = ravd(truth, prediction);
  if (prediction.count() == 0) {
    m.flagged = true;
    return m;
  }
  m.hd = hausdorff(truth, prediction, hd_percentile);
  m.abd = abd(truth, prediction);
  return m;
}

EvaluationReport summarize(std::vector<CaseMetrics> cases) {
  EvaluationReport r;
  r.cases = std::move(cases);
  if (r.cases.empty()) return r;
  std::vector<double> d;
  for (const auto& c : r.cases) d.push_back(c.vdsc);
  const double n = static_cast<double>(d.size());
  r.mean_vdsc = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double sq = 0.0;
  for (double v : d) sq += (v - r.mean_vdsc) * (v - r.mean_vdsc);
  r.std_vdsc = std::sqrt(sq / n);
  std::sort(d.begin(), d.end());
  const std::size_t mid = d.size() / 2;
  r.median_vdsc = d.size() % 2 ? d[mid] : 0.5 * (d[mid - 1] + d[mid]);
  auto mean_of = [&](auto field) {
    double s = 0.0;
    std::size_t k = 0;
    for (const auto& c : r.cases) {
      if (const auto& v = c.*field) {
        s += *v;
        ++k;
      }
    }
    return k ? s / static_cast<double>(k) : std::numeric_limits<double>::quiet_NaN();
  };
  r.mean_hd = mean_of(&CaseMetrics::hd);
  r.mean_abd = mean_of(&CaseMetrics::abd);
  r.mean_ravd = mean_of(&CaseMetrics::ravd);
  return r;
}

std::string EvaluationReport::to_csv() const {
  std::ostringstream os;
  os << "case,vdsc,hd_mm,abd_mm,ravd_pct,flagged,vdsc_median,vdsc_std\n";
  std::size_t flagged = 0;
  for (const auto& c : cases) {
    os << c.case_id << ',' << fmt(c.vdsc) << ',' << opt_fmt(c.hd) << ',' << opt_fmt(c.abd) << ',' << opt_fmt(c.ravd)
       << ',' << (c.flagged ? 1 : 0) << ",,\n";
    flagged += c.flagged ? 1 : 0;
  }
  os << "summary," << fmt(mean_vdsc) << ',' << fmt(mean_hd) << ',' << fmt(mean_abd) << ',' << fmt(mean_ravd) << ','
     << flagged << ',' << fmt(median_vdsc) << ',' << fmt(std_vdsc) << '\n';
  return os.str();
}

EvaluationReport evaluate(ModelGraph<float>& graph, const std::vector<VolumeRecord>& cases, std::size_t input_size,
                          double hd_percentile, std::size_t batch_size) {
  std::vector<CaseMetrics> rows;
  for (const auto& c : cases) {
    if (!c.mask) continue;
    const BinaryVolume pred = predict_volume(graph, c, input_size, batch_size);
    rows.push_back(case_metrics(c.case_id, *c.mask, pred, hd_percentile));
  }
  if (rows.empty()) throw DataError("no case with a ground-truth segmentation to evaluate");
  return summarize(std::move(rows));
}

std::string_view to_string(AblationSuite s) {
  switch (s) {
    case AblationSuite::Table1: return "table1";
    case AblationSuite::Table2: return "table2";
    case AblationSuite::Table4: return "table4";
  }
  return "table1";
}

AblationSuite parse_ablation_suite(std::string_view name) {
  if (name == "table1") return AblationSuite::Table1;
  if (name == "table2") return AblationSuite::Table2;
  if (name == "table4") return AblationSuite::Table4;
  throw ConfigError("unknown ablation suite '" + std::string(name) + "' (expected table1, table2 or table4)");
}

std::vector<AblationRow> ablation_rows(AblationSuite suite, const RunConfig& base) {
  std::vector<AblationRow> rows;
  RunConfig bridged = base;
  bridged.model.architecture = Architecture::Stacked;
  bridged.model.bridge = {Fusion::Concat, Fusion::Add, BridgeTap::ClusterOutput};
  switch (suite) {
    case AblationSuite::Table1: {
      RunConfig c = bridged;
      c.model.scheme = ActivationScheme::all_elu();
      c.model.scheme.alpha = base.model.scheme.alpha;
      c.loss.kind = LossKind::Dice;
      RunConfig u = c;
      u.model.architecture = Architecture::UNet;
      rows.push_back({"U-net", u, 86.73});
      auto stacked = [&](const std::string& label, Fusion b, Fusion s, double ref) {
        RunConfig r = c;
        r.model.bridge.bridging = b;
        r.model.bridge.skip = s;
        rows.push_back({label, r, ref});
      };
      stacked("Stacked U (none, none)", Fusion::None, Fusion::None, 85.57);
      stacked("Stacked U (add, none)", Fusion::Add, Fusion::None, 86.99);
      stacked("Stacked U (concat, none)", Fusion::Concat, Fusion::None, 87.85);
      stacked("Stacked U (concat, concat)", Fusion::Concat, Fusion::Concat, 86.02);
      stacked("Bridged U-net (concat, add)", Fusion::Concat, Fusion::Add, 88.12);
      break;
    }
    case AblationSuite::Table2: {
      RunConfig c = bridged;
      c.loss.kind = LossKind::Dice;
      const std::pair<const char*, double> schemes[] = {
          {"all-elu", 88.12}, {"all-relu", 88.07}, {"cluster1", 87.56}, {"cluster2", 88.10}, {"cluster3", 89.10}};
      for (const auto& [name, ref] : schemes) {
        RunConfig r = c;
        r.model.scheme = ActivationScheme::preset(name);
        r.model.scheme.alpha = base.model.scheme.alpha;
        rows.push_back({name, r, ref});
      }
      break;
    }
    case AblationSuite::Table4: {
      RunConfig c = bridged;
      c.model.scheme = ActivationScheme::cluster3();
      c.model.scheme.alpha = base.model.scheme.alpha;
      RunConfig dice = c;
      dice.loss.kind = LossKind::Dice;
      rows.push_back({"dice", dice, 89.10});
      const std::pair<double, double> qs[] = {{1.7, 89.56}, {2.0, 88.77}, {3.0, 87.79}};
      for (const auto& [q, ref] : qs) {
        RunConfig r = c;
        r.loss.kind = LossKind::CosDice;
        r.loss.q = q;
        rows.push_back({"cos-dice Q=" + fmt(q), r, ref});
      }
      break;
    }
  }
  return rows;
}

std::string AblationReport::to_csv() const {
  std::ostringstream os;
  os << "suite,row,label,architecture,bridging,skip,relu_clusters,loss,q,parameters,epochs,best_val_soft_dsc,"
        "val_mean_vdsc,reference_mean_vdsc_pct,order_hash,data_hash\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& m = r.row.run.model;
    os << to_string(suite) << ',' << i + 1 << ",\"" << r.row.label << "\"," << to_string(m.architecture) << ','
       << to_string(m.bridge.bridging) << ',' << to_string(m.bridge.skip) << ",\"" << m.scheme.to_list() << "\","
       << to_string(r.row.run.loss.kind) << ',' << fmt(r.row.run.loss.q) << ',' << r.parameters << ','
       << r.epochs_run << ',' << fmt(r.best_val_soft_dsc) << ',' << fmt(r.mean_vdsc) << ','
       << fmt(r.row.reference_vdsc) << ',' << r.order_hash << ',' << data_hash << '\n';
  }
  return os.str();
}

AblationReport run_ablation(AblationSuite suite, const ExperimentConfig& base,
                            const std::function<void(const std::string&, const EpochRecord&)>& on_epoch) {
  base.validate();
  const auto rows = ablation_rows(suite, base.run);
  std::vector<std::size_t> params;
  for (const auto& row : rows) {
    row.run.validate();
    params.push_back(build_model<float>(row.run.model).parameter_count());
  }
  const auto input_size = static_cast<std::size_t>(base.run.model.unet.input_size);
  const PreparedData data = prepare_data(base.data, input_size);

  AblationReport report;
  report.suite = suite;
  report.data_hash = data.hash;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ExperimentConfig cfg = base;
    cfg.run = rows[i].run;
    cfg.init_checkpoint.reset();
    cfg.output_dir = base.output_dir / (std::string(to_string(suite)) + "_row" + std::to_string(i + 1));
    const TrainResult tr = train(cfg, data, [&](const EpochRecord& r) {
      if (on_epoch) on_epoch(rows[i].label, r);
    });
    AblationOutcome out;
    out.row = rows[i];
    out.parameters = params[i];
    out.epochs_run = tr.log.records.size();
    out.best_val_soft_dsc = tr.best_val_soft_dsc;
    out.order_hash = kFnvOffset;
    for (const auto& r : tr.log.records) fnv_value(out.order_hash, r.batch_hash);
    ModelGraph<float> best = tr.best_model();
    const auto& eval_cases = data.val_cases.empty() ? data.train_cases : data.val_cases;
    out.mean_vdsc = evaluate(best, eval_cases, input_size, 100.0, cfg.batch_size).mean_vdsc;
    report.rows.push_back(std::move(out));
    if (base.write_files) {
      std::filesystem::create_directories(base.output_dir);
      write_text(base.output_dir / ("ablation_" + std::string(to_string(suite)) + ".csv"), report.to_csv());
    }
  }
  return report;
}

}  // namespace bunet
