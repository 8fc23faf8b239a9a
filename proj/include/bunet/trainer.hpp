#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "bunet/adam.hpp"
#include "bunet/checkpoint.hpp"
#include "bunet/config.hpp"
#include "bunet/dataset.hpp"
#include "bunet/metrics.hpp"

namespace bunet {

struct DataSource {
  /// Empty: synthetic data; otherwise a directory of CaseXX(.mhd) volumes.
  std::filesystem::path directory;
  std::size_t synthetic_count = 200;
  std::size_t slices_per_case = 8;
  std::uint64_t synthetic_seed = 7;
  /// Validation case numbers. Unset: {5,15,25,35,45} for directories, the
  /// present members of that set for synthetic data.
  std::optional<std::set<int>> val_ids;
  /// Validate on the training cases themselves (overfit checks).
  bool validate_on_train = false;
};

struct ExperimentConfig {
  RunConfig run = desk_defaults();
  AdamHyper adam;
  std::size_t batch_size = 8;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  DataSource data;
  std::filesystem::path output_dir = "run";
  /// Stop after this many epochs without a better validation soft DSC (0: never).
  std::size_t patience = 30;
  /// Stop once the training-set soft DSC (eval mode) reaches this value.
  std::optional<double> target_train_dsc;
  bool augment = true;
  /// Pre-generate this many augmented images once instead of augmenting per epoch.
  std::size_t pregenerate = 0;
  /// Augmentation producer threads (0: produce inline).
  std::size_t workers = 0;
  /// Measure training-set soft DSC after every epoch.
  bool track_train_dsc = true;
  /// Start from these weights instead of a fresh initialization.
  std::optional<std::filesystem::path> init_checkpoint;
  bool write_files = true;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_soft_dsc = 0.0;
  double train_soft_dsc = 0.0;  // NaN when not tracked
  double wall_seconds = 0.0;
  std::uint64_t batch_hash = 0;
  /// Fraction of pre-activations below the saturation threshold, per cluster
  /// (index 0 is cluster 1), from the epoch's last training batch.
  std::vector<double> saturation;
};

struct TrainingLog {
  std::vector<EpochRecord> records;

  std::string to_csv() const;
  /// Equality of every field except wall time.
  bool same_results(const TrainingLog& other) const;
};

/// Training and validation slices plus the volumes used for evaluation.
struct PreparedData {
  std::vector<SliceSample> train;
  std::vector<SliceSample> val;
  std::vector<VolumeRecord> train_cases;
  std::vector<VolumeRecord> val_cases;
  std::uint64_t hash = 0;  // over every pixel, mask and case id
  bool val_is_train = false;
};

PreparedData prepare_data(const DataSource& source, std::size_t input_size);

struct TrainResult {
  TrainingLog log;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  double best_val_soft_dsc = 0.0;
  std::size_t best_epoch = 0;
  std::string stop_reason;
  std::optional<ModelGraph<float>> model;      // weights after the last epoch
  std::vector<TensorT<float>> best_parameters;  // snapshot at the best epoch

  /// Copy of `model` carrying the best-epoch weights.
  ModelGraph<float> best_model() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled mini-batch Adam on the configured loss. Deterministic for a
/// given seed when single-threaded. Throws NumericalError (with epoch and
/// batch) on a non-finite loss or gradient.
TrainResult train(const ExperimentConfig& config, const PreparedData& data, const EpochCallback& on_epoch = {});
TrainResult train(const ExperimentConfig& config, const EpochCallback& on_epoch = {});

/// Soft DSC (pooled over all pixels) and mean batch loss in eval mode.
struct SetScore {
  double loss = 0.0;
  double soft_dsc = 0.0;
};
SetScore score_slices(ModelGraph<float>& graph, const LossConfig& loss, const std::vector<SliceSample>& slices,
                      std::size_t batch_size);

/// Per-slice forward in eval mode; probabilities at network resolution.
std::vector<Slice> predict_slices(ModelGraph<float>& graph, const std::vector<SliceSample>& slices,
                                  std::size_t batch_size);

/// Predicts every slice, resizes the probabilities back to the volume's
/// slice size, thresholds at 0.5 and stacks the result.
BinaryVolume predict_volume(ModelGraph<float>& graph, const VolumeRecord& volume, std::size_t input_size,
                            std::size_t batch_size = 8);

struct CaseMetrics {
  std::string case_id;
  double vdsc = 0.0;
  std::optional<double> hd;   // undefined for an empty prediction
  std::optional<double> abd;
  std::optional<double> ravd;
  bool flagged = false;
};

struct EvaluationReport {
  std::vector<CaseMetrics> cases;
  double mean_vdsc = 0.0;
  double median_vdsc = 0.0;
  double std_vdsc = 0.0;
  double mean_hd = 0.0;  // over cases where defined
  double mean_abd = 0.0;
  double mean_ravd = 0.0;

  /// One row per case plus a final `summary` row.
  std::string to_csv() const;
};

EvaluationReport summarize(std::vector<CaseMetrics> cases);

CaseMetrics case_metrics(const std::string& case_id, const BinaryVolume& truth, const BinaryVolume& prediction,
                         double hd_percentile = 100.0);

/// Metrics for every case that carries a ground-truth mask.
EvaluationReport evaluate(ModelGraph<float>& graph, const std::vector<VolumeRecord>& cases, std::size_t input_size,
                          double hd_percentile = 100.0, std::size_t batch_size = 8);

enum class AblationSuite { Table1, Table2, Table4 };

std::string_view to_string(AblationSuite s);
AblationSuite parse_ablation_suite(std::string_view name);

struct AblationRow {
  std::string label;
  RunConfig run;
  double reference_vdsc = 0.0;  // the published mean vDSC for this row, in percent
};

/// Row configurations derived from `base` (input size, depth, width are kept).
std::vector<AblationRow> ablation_rows(AblationSuite suite, const RunConfig& base);

struct AblationOutcome {
  AblationRow row;
  std::size_t parameters = 0;
  std::size_t epochs_run = 0;
  double best_val_soft_dsc = 0.0;
  double mean_vdsc = 0.0;
  std::uint64_t order_hash = 0;  // combined batch hashes of all epochs
};

struct AblationReport {
  AblationSuite suite = AblationSuite::Table1;
  std::uint64_t data_hash = 0;
  std::vector<AblationOutcome> rows;

  std::string to_csv() const;
};

/// Builds every row first (any failure aborts before training), then trains
/// each with the same seed, data and budget and evaluates its best weights
/// on the validation volumes.
AblationReport run_ablation(AblationSuite suite, const ExperimentConfig& base,
                            const std::function<void(const std::string&, const EpochRecord&)>& on_epoch = {});

}  // namespace bunet
