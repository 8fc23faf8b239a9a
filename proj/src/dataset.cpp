#include "bunet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>
#include <regex>
#include <string>

#include "bunet/errors.hpp"

namespace bunet {

namespace {

std::mt19937_64 seeded(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32), static_cast<std::uint32_t>(c),
                    static_cast<std::uint32_t>(c >> 32)};
  return std::mt19937_64(seq);
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable blur with edge clamping.
std::vector<double> blur(const std::vector<double>& img, std::size_t n, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  std::vector<double> tmp(img.size());
  std::vector<double> out(img.size());
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t i = -r; i <= r; ++i) {
        const auto xx = std::clamp(static_cast<std::ptrdiff_t>(x) + i, std::ptrdiff_t{0}, last);
        s += k[static_cast<std::size_t>(i + r)] * img[y * n + static_cast<std::size_t>(xx)];
      }
      tmp[y * n + x] = s;
    }
  }
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t i = -r; i <= r; ++i) {
        const auto yy = std::clamp(static_cast<std::ptrdiff_t>(y) + i, std::ptrdiff_t{0}, last);
        s += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(yy) * n + x];
      }
      out[y * n + x] = s;
    }
  }
  return out;
}

}  // namespace

SliceSample synthetic_sample(std::size_t size, std::uint64_t seed, std::size_t index) {
  if (size < 32) throw ConfigError("synthetic slices must be at least 32 pixels");
  auto rng = seeded(seed, index, 0x5EED);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double n = static_cast<double>(size);
  const double pi = std::numbers::pi;

  const double cy = n / 2.0 + (u(rng) - 0.5) * 0.3 * n;
  const double cx = n / 2.0 + (u(rng) - 0.5) * 0.3 * n;
  const double ra = (0.15 + 0.2 * u(rng)) * n;
  const double rb = (0.15 + 0.2 * u(rng)) * n;
  const double phi = u(rng) * pi;
  const double cphi = std::cos(phi);
  const double sphi = std::sin(phi);

  // Low-frequency background texture and a multiplicative bias field.
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::vector<Wave> waves(3);
  for (auto& w : waves) {
    w = {(u(rng) - 0.5) * 6.0 * pi / n, (u(rng) - 0.5) * 6.0 * pi / n, u(rng) * 2.0 * pi, 0.15 + 0.2 * u(rng)};
  }
  const double bias_fy = (u(rng) - 0.5) * 2.0 * pi / n;
  const double bias_fx = (u(rng) - 0.5) * 2.0 * pi / n;
  const double bias_phase = u(rng) * 2.0 * pi;
  const double contrast = 0.6 + 0.4 * u(rng);

  SliceSample s;
  s.image = Slice(size, size);
  s.mask = Slice(size, size);
  s.slice_index = index;
  std::vector<double> region(size * size, 0.0);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = static_cast<double>(y) + 0.5 - cy;
      const double dx = static_cast<double>(x) + 0.5 - cx;
      const double p = (dx * cphi + dy * sphi) / ra;
      const double q = (-dx * sphi + dy * cphi) / rb;
      if (p * p + q * q <= 1.0) {
        region[y * size + x] = 1.0;
        s.mask.at(y, x) = 1.0f;
      }
    }
  }
  const std::vector<double> soft = blur(region, size, 2.0);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double yd = static_cast<double>(y);
      const double xd = static_cast<double>(x);
      double bg = 0.0;
      for (const auto& w : waves) bg += w.amp * std::sin(w.fy * yd + w.fx * xd + w.phase);
      const double bias = 1.0 + 0.3 * std::sin(bias_fy * yd + bias_fx * xd + bias_phase);
      const double v = bias * (bg + contrast * soft[y * size + x]) + 0.25 * gauss(rng);
      s.image.at(y, x) = static_cast<float>(v);
    }
  }
  normalize_slice(s.image);
  return s;
}

std::vector<SliceSample> gen_synthetic(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::vector<SliceSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synthetic_sample(size, seed, i));
  return out;
}

std::vector<VolumeRecord> synthetic_cases(const std::vector<SliceSample>& samples, std::size_t slices_per_case,
                                          const Spacing& spacing) {
  if (slices_per_case == 0) throw ConfigError("slices per case must be positive");
  std::vector<VolumeRecord> cases;
  for (std::size_t start = 0; start < samples.size(); start += slices_per_case) {
    const std::size_t end = std::min(samples.size(), start + slices_per_case);
    VolumeRecord v;
    const std::size_t id = cases.size();
    v.case_id = (id < 10 ? "Case0" : "Case") + std::to_string(id);
    v.depth = end - start;
    v.height = samples[start].image.height;
    v.width = samples[start].image.width;
    v.spacing = spacing;
    BinaryVolume mask(v.depth, v.height, v.width, spacing);
    v.image.reserve(v.depth * v.height * v.width);
    for (std::size_t i = start; i < end; ++i) {
      const auto& s = samples[i];
      if (s.image.height != v.height || s.image.width != v.width) throw DataError("synthetic slices differ in size");
      v.image.insert(v.image.end(), s.image.values.begin(), s.image.values.end());
      for (std::size_t k = 0; k < s.mask.values.size(); ++k) {
        mask.voxels[(i - start) * v.height * v.width + k] = s.mask.values[k] > 0.5f ? 1 : 0;
      }
    }
    v.mask = std::move(mask);
    cases.push_back(std::move(v));
  }
  return cases;
}

void write_cases(const std::filesystem::path& dir, const std::vector<VolumeRecord>& cases) {
  std::filesystem::create_directories(dir);
  for (const auto& c : cases) {
    save_volume(dir / (c.case_id + ".mhd"), c.depth, c.height, c.width, c.image, c.spacing);
    if (c.mask) save_mask(dir / (c.case_id + "_segmentation.mhd"), *c.mask);
  }
}

int case_number(const std::string& case_id) {
  std::size_t end = case_id.size();
  std::size_t begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(case_id[begin - 1]))) --begin;
  if (begin == end || end - begin > 9) throw DataError("case id without a number: " + case_id);
  return std::stoi(case_id.substr(begin));
}

std::vector<VolumeRecord> load_case_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("dataset directory not found: " + dir.string());
  static const std::regex image_name(R"(Case(\d+)\.mhd)");
  std::vector<VolumeRecord> cases;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, image_name)) continue;
    VolumeRecord v = load_volume(entry.path());
    const auto seg = dir / (entry.path().stem().string() + "_segmentation.mhd");
    if (std::filesystem::exists(seg)) {
      BinaryVolume m = load_mask(seg);
      if (m.depth != v.depth || m.height != v.height || m.width != v.width) {
        throw DataError("segmentation dimensions differ from image: " + seg.string());
      }
      v.mask = std::move(m);
    }
    cases.push_back(std::move(v));
  }
  if (cases.empty()) throw DataError("no CaseXX.mhd volumes in " + dir.string());
  std::sort(cases.begin(), cases.end(),
            [](const VolumeRecord& a, const VolumeRecord& b) { return case_number(a.case_id) < case_number(b.case_id); });
  return cases;
}

CaseSplit split_train_val(std::vector<VolumeRecord> cases, const std::set<int>& val_ids) {
  std::set<int> present;
  for (const auto& c : cases) present.insert(case_number(c.case_id));
  for (int id : val_ids) {
    if (!present.contains(id)) throw ConfigError("validation case " + std::to_string(id) + " is not in the dataset");
  }
  CaseSplit split;
  for (auto& c : cases) {
    (val_ids.contains(case_number(c.case_id)) ? split.val : split.train).push_back(std::move(c));
  }
  return split;
}

std::vector<SliceSample> volume_slices(const VolumeRecord& volume, std::size_t input_size) {
  std::vector<SliceSample> out;
  out.reserve(volume.depth);
  const std::size_t plane = volume.height * volume.width;
  for (std::size_t z = 0; z < volume.depth; ++z) {
    Slice img(volume.height, volume.width);
    const auto src = volume.slice(z);
    std::copy(src.begin(), src.end(), img.values.begin());
    SliceSample s;
    s.image = resize_slice(img, input_size, Interpolation::Bilinear);
    normalize_slice(s.image);
    if (volume.mask) {
      Slice m(volume.height, volume.width);
      for (std::size_t k = 0; k < plane; ++k) m.values[k] = volume.mask->voxels[z * plane + k];
      s.mask = resize_slice(m, input_size, Interpolation::Nearest);
    } else {
      s.mask = Slice(input_size, input_size);
    }
    s.source_case = volume.case_id;
    s.slice_index = z;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SliceSample> volume_slices(std::span<const VolumeRecord> volumes, std::size_t input_size) {
  std::vector<SliceSample> out;
  for (const auto& v : volumes) {
    auto s = volume_slices(v, input_size);
    std::move(s.begin(), s.end(), std::back_inserter(out));
  }
  return out;
}

std::pair<Tensor, Tensor> make_batch(std::span<const SliceSample* const> samples) {
  if (samples.empty()) throw UsageError("empty batch");
  const std::size_t h = samples.front()->image.height;
  const std::size_t w = samples.front()->image.width;
  const Shape shape{samples.size(), 1, h, w};
  Tensor image(shape);
  Tensor mask(shape);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = *samples[i];
    if (s.image.height != h || s.image.width != w || s.mask.values.size() != h * w) {
      throw DataError("batch samples differ in size");
    }
    std::copy(s.image.values.begin(), s.image.values.end(), image.values().begin() + static_cast<std::ptrdiff_t>(i * h * w));
    std::copy(s.mask.values.begin(), s.mask.values.end(), mask.values().begin() + static_cast<std::ptrdiff_t>(i * h * w));
  }
  return {std::move(image), std::move(mask)};
}

std::uint64_t augment_seed(std::uint64_t seed, std::size_t epoch, std::size_t position) {
  auto rng = seeded(seed, epoch, position);
  return rng();
}

AugmentStream::AugmentStream(const std::vector<SliceSample>& samples, std::vector<std::size_t> order,
                             std::uint64_t seed, std::size_t epoch, bool augment, std::size_t workers,
                             std::size_t capacity)
    : samples_(samples),
      order_(std::move(order)),
      seed_(seed),
      epoch_(epoch),
      augment_(augment),
      capacity_(std::max<std::size_t>(capacity, 1)) {
  for (std::size_t i = 0; i < workers; ++i) workers_.emplace_back([this] { work(); });
}

AugmentStream::~AugmentStream() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  consumed_.notify_all();
  produced_.notify_all();
}

SliceSample AugmentStream::produce(std::size_t position) const {
  const SliceSample& src = samples_.at(order_[position]);
  if (!augment_) return src;
  std::mt19937_64 rng(augment_seed(seed_, epoch_, position));
  return bunet::augment(src, rng);
}

void AugmentStream::work() {
  for (;;) {
    std::size_t pos = 0;
    {
      std::unique_lock lock(mutex_);
      consumed_.wait(lock, [&] { return stop_ || next_claim_ >= order_.size() || next_claim_ < next_out_ + capacity_; });
      if (stop_ || next_claim_ >= order_.size()) return;
      pos = next_claim_++;
    }
    SliceSample s = produce(pos);
    {
      std::lock_guard lock(mutex_);
      ready_.emplace(pos, std::move(s));
    }
    produced_.notify_all();
  }
}

std::optional<SliceSample> AugmentStream::next() {
  if (next_out_ >= order_.size()) return std::nullopt;
  if (workers_.empty()) return produce(next_out_++);
  std::unique_lock lock(mutex_);
  produced_.wait(lock, [&] { return ready_.contains(next_out_); });
  auto node = ready_.extract(next_out_);
  ++next_out_;
  lock.unlock();
  consumed_.notify_all();
  return std::move(node.mapped());
}

}  // namespace bunet
