#pragma once

#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bunet/tensor.hpp"

namespace bunet {

enum class LossKind { Dice, CosDice };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

struct LossConfig {
  LossKind kind = LossKind::CosDice;
  double q = 1.7;
  double smooth = 1e-5;

  /// Throws ConfigError: smooth must be > 0, and Q > 1 for cos-dice.
  void validate() const;
};

/// Sums that determine the soft DSC; kept so the gradient can be formed
/// without a second pass.
struct DiceTerms {
  double intersection = 0.0;  // sum(pred * mask)
  double pred_sum = 0.0;
  double mask_sum = 0.0;
  double smooth = 1e-5;

  double dsc() const { return (2.0 * intersection + smooth) / (pred_sum + mask_sum + smooth); }
};

template <typename T>
DiceTerms dice_terms(std::span<const T> pred, std::span<const T> mask, double smooth);

/// (2 sum(p m) + smooth) / (sum p + sum m + smooth)
template <typename T>
double soft_dsc(std::span<const T> pred, std::span<const T> mask, double smooth = 1e-5);

template <typename T>
double dice_loss(std::span<const T> pred, std::span<const T> mask, double smooth = 1e-5);

template <typename T>
double cos_dice_loss(std::span<const T> pred, std::span<const T> mask, double q, double smooth = 1e-5);

/// cos^Q(pi/2 * dsc) as a function of the overlap score alone.
double cos_dice_from_dsc(double dsc, double q);

/// d cos_dice / d dsc.
double cos_dice_slope(double dsc, double q);

/// Weight w with dL_cosdice/dDSC = w * dL_dice/dDSC (dL_dice/dDSC = -1):
/// w = Q cos^(Q-1)(pi/2 dsc) sin(pi/2 dsc) pi/2.
double cos_dice_weight(double dsc, double q);

struct LossResult {
  double loss = 0.0;
  double dsc = 0.0;
};

/// Evaluates the configured loss over all elements (the whole batch) and,
/// when `grad` is non-empty, writes dLoss/dpred into it.
template <typename T>
LossResult evaluate_loss(const LossConfig& config, std::span<const T> pred, std::span<const T> mask,
                         std::span<T> grad);

struct LossCurve {
  std::vector<double> q_values;
  std::vector<double> dsc;
  std::vector<double> dice;
  std::vector<std::vector<double>> cos_dice;  // [q index][sample]

  /// Columns dsc,dice,cosdice_q<Q>...
  std::string to_csv() const;
};

/// Samples dsc uniformly on [0, 1] at `resolution` points.
LossCurve loss_curve(const std::vector<double>& q_values, std::size_t resolution);

}  // namespace bunet
