#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "bunet/mhd.hpp"
#include "bunet/preprocess.hpp"
#include "bunet/tensor.hpp"

namespace bunet {

/// One fuzzy-boundary ellipse slice. Depends only on (seed, index).
SliceSample synthetic_sample(std::size_t size, std::uint64_t seed, std::size_t index);

/// `count` samples of side `size` (>= 32); bitwise-reproducible per seed.
std::vector<SliceSample> gen_synthetic(std::size_t count, std::size_t size, std::uint64_t seed);

/// Groups consecutive samples into volumes of `slices_per_case` slices named
/// Case00, Case01, ...; a short final group forms its own case.
std::vector<VolumeRecord> synthetic_cases(const std::vector<SliceSample>& samples, std::size_t slices_per_case,
                                          const Spacing& spacing = {2.0, 1.0, 1.0});

/// Writes CaseXX.mhd/.raw (float32 image) and CaseXX_segmentation.mhd/.raw.
void write_cases(const std::filesystem::path& dir, const std::vector<VolumeRecord>& cases);

/// Loads every CaseXX.mhd in `dir` with its CaseXX_segmentation.mhd, sorted
/// by case number.
std::vector<VolumeRecord> load_case_directory(const std::filesystem::path& dir);

/// Trailing decimal digits of a case id ("Case07" -> 7). Throws DataError.
int case_number(const std::string& case_id);

inline const std::set<int> kDefaultValidationIds{5, 15, 25, 35, 45};

struct CaseSplit {
  std::vector<VolumeRecord> train;
  std::vector<VolumeRecord> val;
};

/// Partitions by case number. Throws ConfigError for ids not present.
CaseSplit split_train_val(std::vector<VolumeRecord> cases, const std::set<int>& val_ids = kDefaultValidationIds);

/// Per-slice resize (bilinear image, nearest mask) and normalization.
std::vector<SliceSample> volume_slices(const VolumeRecord& volume, std::size_t input_size);

std::vector<SliceSample> volume_slices(std::span<const VolumeRecord> volumes, std::size_t input_size);

/// Stacks samples into (N,1,H,W) image and mask tensors.
std::pair<Tensor, Tensor> make_batch(std::span<const SliceSample* const> samples);

/// Augmentation RNG for one (seed, epoch, position) triple.
std::uint64_t augment_seed(std::uint64_t seed, std::size_t epoch, std::size_t position);

/// Produces augmented samples for one epoch on worker threads. Output order
/// is the requested order regardless of scheduling: every item carries its
/// sequence number and the consumer waits for the next one in line.
class AugmentStream {
 public:
  AugmentStream(const std::vector<SliceSample>& samples, std::vector<std::size_t> order, std::uint64_t seed,
                std::size_t epoch, bool augment, std::size_t workers, std::size_t capacity = 64);
  ~AugmentStream();
  AugmentStream(const AugmentStream&) = delete;
  AugmentStream& operator=(const AugmentStream&) = delete;

  /// Next sample in order, or nullopt once all have been consumed.
  std::optional<SliceSample> next();

 private:
  SliceSample produce(std::size_t position) const;
  void work();

  const std::vector<SliceSample>& samples_;
  std::vector<std::size_t> order_;
  std::uint64_t seed_;
  std::size_t epoch_;
  bool augment_;
  std::size_t capacity_;

  std::mutex mutex_;
  std::condition_variable produced_;
  std::condition_variable consumed_;
  std::map<std::size_t, SliceSample> ready_;
  std::size_t next_claim_ = 0;
  std::size_t next_out_ = 0;
  bool stop_ = false;
  std::vector<std::jthread> workers_;
};

}  // namespace bunet
