#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rock/errors.hpp"
#include "rock/mlp.hpp"
#include "rock/observation.hpp"
#include "rock/policy.hpp"

namespace rock {

inline std::int8_t quantize_value(double x, double scale) {
  if (!(scale > 0.0)) return 0;
  const double q = std::nearbyint(x / scale);
  return static_cast<std::int8_t>(std::clamp(q, -127.0, 127.0));
}

/// Symmetric per-tensor scale: max|w| / 127, or 1 for an all-zero tensor.
inline float symmetric_scale(std::span<const float> w) {
  float m = 0.0f;
  for (float x : w) m = std::max(m, std::abs(x));
  return m > 0.0f ? m / 127.0f : 1.0f;
}

inline std::vector<std::int8_t> quantize_tensor(std::span<const float> w, float scale) {
  std::vector<std::int8_t> q(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) q[i] = quantize_value(w[i], scale);
  return q;
}

inline std::vector<float> dequantize_tensor(std::span<const std::int8_t> q, float scale) {
  std::vector<float> w(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) w[i] = static_cast<float>(q[i]) * scale;
  return w;
}

/// Real multiplier represented as m0 * 2^-shift with m0 in [2^30, 2^31).
struct FixedPointMultiplier {
  std::int64_t m0 = 0;
  int shift = 0;

  static FixedPointMultiplier from(double m) {
    FixedPointMultiplier f;
    if (!(m > 0.0)) return f;
    int e = 0;
    const double mant = std::frexp(m, &e);
    std::int64_t q = std::llround(mant * 2147483648.0);
    if (q == (std::int64_t{1} << 31)) {
      q /= 2;
      ++e;
    }
    f.m0 = q;
    f.shift = 31 - e;
    return f;
  }

  /// round(x * m), ties toward +inf, saturated to int32.
  std::int32_t apply(std::int32_t x) const {
    const __int128 p = static_cast<__int128>(x) * m0;
    __int128 r;
    if (shift > 0) {
      if (shift > 100) return 0;
      r = (p + (static_cast<__int128>(1) << (shift - 1))) >> shift;
    } else {
      r = p << std::min(-shift, 32);
    }
    const __int128 lo = INT32_MIN, hi = INT32_MAX;
    return static_cast<std::int32_t>(std::clamp(r, lo, hi));
  }
};

struct QuantizedLayer {
  int rows = 0;  ///< outputs
  int cols = 0;  ///< inputs
  std::vector<std::int8_t> weights;  ///< row-major rows x cols
  std::vector<std::int32_t> bias;    ///< in units of weight_scale * input_scale
  float weight_scale = 1.0f;
  float input_scale = 1.0f / 127.0f;
  std::int32_t input_zero_point = 0;
  /// Hidden layers only: scale of the 12-bit pre-activation code that
  /// indexes the activation table, and the asymmetric int8 domain of the
  /// activation output. Zero on the last layer.
  float preact_scale = 0.0f;
  float output_scale = 0.0f;
  std::int32_t output_zero_point = 0;
};

/// Pre-activation codes span [-kPreactLevels, kPreactLevels].
inline constexpr int kPreactLevels = 2047;

/// Int8 actor. Inputs are quantized with scale 1/127; each hidden layer
/// accumulates int8 x int8 products in int32, rescales with a fixed-point
/// multiplier to a 12-bit code, and looks up the activation output as int8.
/// The last layer dequantizes its accumulator and applies the output
/// activation in float.
class QuantizedPolicy {
 public:
  QuantizedPolicy() = default;

  QuantizedPolicy(std::vector<QuantizedLayer> layers, Activation hidden, Activation output)
      : layers_(std::move(layers)), hidden_(hidden), output_(output) {
    prepare();
  }

  const std::vector<QuantizedLayer>& layers() const noexcept { return layers_; }
  Activation hidden_activation() const noexcept { return hidden_; }
  Activation output_activation() const noexcept { return output_; }
  int input_size() const { return layers_.empty() ? 0 : layers_.front().cols; }
  int output_size() const { return layers_.empty() ? 0 : layers_.back().rows; }

  double forward(std::span<const float> o) const {
    check_observation(o, static_cast<std::size_t>(input_size()));
    std::vector<std::int16_t> x(o.size());
    for (std::size_t i = 0; i < o.size(); ++i) {
      x[i] = static_cast<std::int16_t>(quantize_value(o[i], 1.0 / 127.0));
    }
    std::vector<std::int32_t> acc;
    std::vector<std::int16_t> next;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const QuantizedLayer& L = layers_[k];
      const Prepared& P = prepared_[k];
      acc.assign(L.bias.begin(), L.bias.end());
      for (int r = 0; r < L.rows; ++r) {
        const std::int8_t* w = L.weights.data() + static_cast<std::size_t>(r) * L.cols;
        std::int32_t s = 0;
        for (int c = 0; c < L.cols; ++c) s += static_cast<std::int32_t>(w[c]) * x[c];
        acc[r] += s;
      }
      if (k + 1 == layers_.size()) {
        const double a = activate(output_, static_cast<double>(acc[0]) * P.acc_scale);
        if (!std::isfinite(a)) throw CorruptedModel("quantized policy: non-finite output");
        return std::clamp(a, -1.0, 1.0);
      }
      next.resize(L.rows);
      for (int r = 0; r < L.rows; ++r) {
        const std::int32_t code =
            std::clamp(P.requant.apply(acc[r]), -kPreactLevels, kPreactLevels);
        next[r] = P.lut[code + kPreactLevels];
      }
      x.swap(next);
    }
    throw CorruptedModel("quantized policy: no layers");
  }

  double forward(const Observation& o) const {
    return forward(std::span<const float>(o));
  }

 private:
  struct Prepared {
    FixedPointMultiplier requant;
    double acc_scale = 0.0;
    /// Activation table indexed by pre-activation code + kPreactLevels.
    /// Entries are the next layer's input with its zero point subtracted.
    std::vector<std::int16_t> lut;
  };

  void prepare() {
    if (layers_.empty()) throw CorruptedModel("quantized policy: no layers");
    if (layers_.back().rows != 1) throw CorruptedModel("quantized policy: output width must be 1");
    prepared_.assign(layers_.size(), {});
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const QuantizedLayer& L = layers_[k];
      if (L.rows <= 0 || L.cols <= 0 ||
          L.weights.size() != static_cast<std::size_t>(L.rows) * L.cols ||
          L.bias.size() != static_cast<std::size_t>(L.rows)) {
        throw CorruptedModel("quantized policy: bad shape in layer " + std::to_string(k));
      }
      if (k > 0 && L.cols != layers_[k - 1].rows) {
        throw CorruptedModel("quantized policy: width mismatch at layer " + std::to_string(k));
      }
      if (!(L.weight_scale > 0.0f) || !(L.input_scale > 0.0f) ||
          !std::isfinite(L.weight_scale) || !std::isfinite(L.input_scale)) {
        throw CorruptedModel("quantized policy: bad scale in layer " + std::to_string(k));
      }
      Prepared& P = prepared_[k];
      P.acc_scale = static_cast<double>(L.weight_scale) * L.input_scale;
      if (k + 1 == layers_.size()) continue;

      if (!(L.preact_scale > 0.0f) || !(L.output_scale > 0.0f) ||
          !std::isfinite(L.preact_scale) || !std::isfinite(L.output_scale)) {
        throw CorruptedModel("quantized policy: bad activation scale in layer " + std::to_string(k));
      }
      const QuantizedLayer& N = layers_[k + 1];
      if (N.input_scale != L.output_scale || N.input_zero_point != L.output_zero_point) {
        throw CorruptedModel("quantized policy: scale chain broken at layer " + std::to_string(k));
      }
      P.requant = FixedPointMultiplier::from(P.acc_scale / L.preact_scale);
      P.lut.resize(2 * kPreactLevels + 1);
      for (int code = -kPreactLevels; code <= kPreactLevels; ++code) {
        const double y = activate(hidden_, code * static_cast<double>(L.preact_scale));
        const double q = std::nearbyint(y / L.output_scale) + L.output_zero_point;
        const int qc = static_cast<int>(std::clamp(q, -128.0, 127.0));
        P.lut[code + kPreactLevels] = static_cast<std::int16_t>(qc - L.output_zero_point);
      }
    }
  }

  std::vector<QuantizedLayer> layers_;
  Activation hidden_ = Activation::kElu;
  Activation output_ = Activation::kTanh;
  std::vector<Prepared> prepared_;
};

/// Post-training quantization calibrated on `calibration` observations.
/// Throws DegenerateCalibration when a hidden layer never leaves zero.
inline QuantizedPolicy quantize(const PolicyNet& policy,
                                std::span<const Observation> calibration) {
  if (calibration.empty()) throw InputDomainError("quantize: empty calibration set");
  if (policy.input_size() != static_cast<int>(obs::kSize) || policy.output_size() != 1) {
    throw InputDomainError("quantize: policy must map 45 inputs to 1 output");
  }
  if (!policy.all_finite()) throw CorruptedModel("quantize: non-finite parameters");
  const std::size_t L = policy.num_layers();
  std::vector<double> max_pre(L, 0.0);
  PolicyNet::Cache cache;
  for (const Observation& o : calibration) {
    check_observation(o, obs::kSize);
    policy.forward(std::span<const float>(o), cache);
    for (std::size_t k = 0; k < L; ++k) {
      for (float v : cache.pre[k]) {
        if (!std::isfinite(v)) throw CorruptedModel("quantize: non-finite activation");
        max_pre[k] = std::max(max_pre[k], static_cast<double>(std::abs(v)));
      }
    }
  }

  std::vector<QuantizedLayer> layers(L);
  float in_scale = 1.0f / 127.0f;
  std::int32_t in_zp = 0;
  for (std::size_t k = 0; k < L; ++k) {
    QuantizedLayer& q = layers[k];
    q.rows = policy.out_width(k);
    q.cols = policy.in_width(k);
    q.weight_scale = symmetric_scale(policy.weights(k));
    q.weights = quantize_tensor(policy.weights(k), q.weight_scale);
    q.input_scale = in_scale;
    q.input_zero_point = in_zp;
    const double acc_scale = static_cast<double>(q.weight_scale) * in_scale;
    q.bias.resize(q.rows);
    for (int r = 0; r < q.rows; ++r) {
      const double b = std::nearbyint(policy.biases(k)[r] / acc_scale);
      q.bias[r] = static_cast<std::int32_t>(std::clamp(b, -1.0e9, 1.0e9));
    }
    if (k + 1 == L) break;
    if (!(max_pre[k] > 0.0)) throw DegenerateCalibration(static_cast<int>(k));
    q.preact_scale = static_cast<float>(max_pre[k] / kPreactLevels);
    const Activation a = policy.hidden_activation();
    const double lo = std::min(0.0, std::min(activate(a, -max_pre[k]), activate(a, max_pre[k])));
    const double hi = std::max(0.0, std::max(activate(a, -max_pre[k]), activate(a, max_pre[k])));
    if (!(hi > lo)) throw DegenerateCalibration(static_cast<int>(k));
    q.output_scale = static_cast<float>((hi - lo) / 255.0);
    q.output_zero_point = static_cast<std::int32_t>(
        std::clamp(std::nearbyint(-128.0 - lo / q.output_scale), -128.0, 127.0));
    in_scale = q.output_scale;
    in_zp = q.output_zero_point;
  }
  return QuantizedPolicy(std::move(layers), policy.hidden_activation(),
                         policy.output_activation());
}

inline double forward_q(const QuantizedPolicy& q, const Observation& o) {
  return q.forward(o);
}

}  // namespace rock
