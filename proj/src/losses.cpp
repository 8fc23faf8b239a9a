#include "bunet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bunet/errors.hpp"

namespace bunet {

namespace {
constexpr double kHalfPi = std::numbers::pi / 2.0;

std::string format_q(double q) {
  std::ostringstream os;
  os << q;
  return os.str();
}
}  // namespace

std::string_view to_string(LossKind kind) { return kind == LossKind::Dice ? "dice" : "cos-dice"; }

LossKind parse_loss_kind(std::string_view name) {
  if (name == "dice") return LossKind::Dice;
  if (name == "cos-dice" || name == "cosdice" || name == "cos_dice") return LossKind::CosDice;
  throw ConfigError("unknown loss '" + std::string(name) + "' (expected dice or cos-dice)");
}

void LossConfig::validate() const {
  if (!(smooth > 0.0)) throw ConfigError("loss smoothing constant must be positive");
  if (kind == LossKind::CosDice && !(q > 1.0)) {
    throw ConfigError("cos-dice exponent Q must be > 1, got " + format_q(q));
  }
}

template <typename T>
DiceTerms dice_terms(std::span<const T> pred, std::span<const T> mask, double smooth) {
  if (pred.size() != mask.size()) throw ShapeError("dice: prediction and mask sizes differ");
  DiceTerms t;
  t.smooth = smooth;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    const double m = mask[i];
    t.intersection += p * m;
    t.pred_sum += p;
    t.mask_sum += m;
  }
  return t;
}

template <typename T>
double soft_dsc(std::span<const T> pred, std::span<const T> mask, double smooth) {
  return dice_terms(pred, mask, smooth).dsc();
}

template <typename T>
double dice_loss(std::span<const T> pred, std::span<const T> mask, double smooth) {
  return 1.0 - soft_dsc(pred, mask, smooth);
}

template <typename T>
double cos_dice_loss(std::span<const T> pred, std::span<const T> mask, double q, double smooth) {
  if (!(q > 1.0)) throw ConfigError("cos-dice exponent Q must be > 1");
  return cos_dice_from_dsc(soft_dsc(pred, mask, smooth), q);
}

double cos_dice_from_dsc(double dsc, double q) {
  // cos(pi/2 d) written as sin(pi/2 (1 - d)) so that d = 1 gives exactly 0.
  const double c = std::sin(kHalfPi * (1.0 - std::clamp(dsc, 0.0, 1.0)));
  return std::pow(c, q);
}

double cos_dice_slope(double dsc, double q) { return -cos_dice_weight(dsc, q); }

double cos_dice_weight(double dsc, double q) {
  const double x = kHalfPi * std::clamp(dsc, 0.0, 1.0);
  const double c = std::sin(kHalfPi * (1.0 - std::clamp(dsc, 0.0, 1.0)));
  return q * std::pow(c, q - 1.0) * std::sin(x) * kHalfPi;
}

template <typename T>
LossResult evaluate_loss(const LossConfig& config, std::span<const T> pred, std::span<const T> mask,
                         std::span<T> grad) {
  const DiceTerms t = dice_terms(pred, mask, config.smooth);
  const double dsc = t.dsc();
  LossResult r;
  r.dsc = dsc;
  double dloss_ddsc = -1.0;
  if (config.kind == LossKind::Dice) {
    r.loss = 1.0 - dsc;
  } else {
    r.loss = cos_dice_from_dsc(dsc, config.q);
    dloss_ddsc = cos_dice_slope(dsc, config.q);
  }
  if (!grad.empty()) {
    if (grad.size() != pred.size()) throw ShapeError("loss gradient buffer size mismatch");
    // d dsc / d p_i = (2 m_i D - N) / D^2 with N = 2I + s, D = P + M + s.
    const double num = 2.0 * t.intersection + t.smooth;
    const double den = t.pred_sum + t.mask_sum + t.smooth;
    const double inv_den2 = 1.0 / (den * den);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double ddsc = (2.0 * static_cast<double>(mask[i]) * den - num) * inv_den2;
      grad[i] = static_cast<T>(dloss_ddsc * ddsc);
    }
  }
  return r;
}

LossCurve loss_curve(const std::vector<double>& q_values, std::size_t resolution) {
  if (resolution < 2) throw ConfigError("loss curve resolution must be >= 2");
  for (double q : q_values) {
    if (!(q > 1.0)) throw ConfigError("cos-dice exponent Q must be > 1, got " + format_q(q));
  }
  LossCurve curve;
  curve.q_values = q_values;
  curve.cos_dice.assign(q_values.size(), {});
  for (std::size_t i = 0; i < resolution; ++i) {
    const double dsc = static_cast<double>(i) / static_cast<double>(resolution - 1);
    curve.dsc.push_back(dsc);
    curve.dice.push_back(1.0 - dsc);
    for (std::size_t k = 0; k < q_values.size(); ++k) {
      curve.cos_dice[k].push_back(cos_dice_from_dsc(dsc, q_values[k]));
    }
  }
  return curve;
}

std::string LossCurve::to_csv() const {
  std::ostringstream os;
  os << "dsc,dice";
  for (double q : q_values) os << ",cosdice_q" << format_q(q);
  os << '\n';
  os.precision(10);
  for (std::size_t i = 0; i < dsc.size(); ++i) {
    os << dsc[i] << ',' << dice[i];
    for (const auto& col : cos_dice) os << ',' << col[i];
    os << '\n';
  }
  return os.str();
}

#define BUNET_INSTANTIATE_LOSS(T)                                                                   \
  template DiceTerms dice_terms<T>(std::span<const T>, std::span<const T>, double);                 \
  template double soft_dsc<T>(std::span<const T>, std::span<const T>, double);                      \
  template double dice_loss<T>(std::span<const T>, std::span<const T>, double);                     \
  template double cos_dice_loss<T>(std::span<const T>, std::span<const T>, double, double);         \
  template LossResult evaluate_loss<T>(const LossConfig&, std::span<const T>, std::span<const T>,   \
                                       std::span<T>);

BUNET_INSTANTIATE_LOSS(float)
BUNET_INSTANTIATE_LOSS(double)
#undef BUNET_INSTANTIATE_LOSS

}  // namespace bunet
