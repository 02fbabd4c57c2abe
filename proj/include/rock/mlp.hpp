#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rock/errors.hpp"

namespace rock {

/// Activation ids are part of the checkpoint format; never renumber.
enum class Activation : std::uint32_t {
  kIdentity = 0,
  kElu = 1,
  kTanh = 2,
  kRelu = 3,
};

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kElu: return "elu";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
  }
  return "unknown";
}

inline bool valid_activation(std::uint32_t id) { return id <= 3; }

template <typename T>
inline T activate(Activation a, T x) {
  switch (a) {
    case Activation::kIdentity: return x;
    case Activation::kElu: return x > T(0) ? x : std::expm1(x);
    case Activation::kTanh: return std::tanh(x);
    case Activation::kRelu: return x > T(0) ? x : T(0);
  }
  return x;
}

/// Derivative of the activation, given its input and output.
template <typename T>
inline T activation_slope(Activation a, T pre, T post) {
  switch (a) {
    case Activation::kIdentity: return T(1);
    case Activation::kElu: return pre > T(0) ? T(1) : post + T(1);
    case Activation::kTanh: return T(1) - post * post;
    case Activation::kRelu: return pre > T(0) ? T(1) : T(0);
  }
  return T(1);
}

/// Fully connected network with flat parameter storage. Layer k maps
/// widths[k] inputs to widths[k + 1] outputs with a row-major weight matrix
/// followed by its bias vector.
template <typename T>
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<int> widths, Activation hidden, Activation output)
      : widths_(std::move(widths)), hidden_(hidden), output_(output) {
    if (widths_.size() < 2) throw ConstructionError("mlp: need at least one layer");
    for (int w : widths_) {
      if (w <= 0) throw ConstructionError("mlp: widths must be positive");
    }
    std::size_t offset = 0;
    for (std::size_t k = 0; k + 1 < widths_.size(); ++k) {
      weight_offsets_.push_back(offset);
      offset += static_cast<std::size_t>(widths_[k]) * widths_[k + 1];
      bias_offsets_.push_back(offset);
      offset += static_cast<std::size_t>(widths_[k + 1]);
    }
    params_.assign(offset, T(0));
  }

  /// Gaussian initialization with std gain / sqrt(fan_in); the last layer
  /// uses `output_gain` instead of `hidden_gain`. Biases start at zero.
  static Mlp random(std::vector<int> widths, Activation hidden,
                    Activation output, std::uint64_t seed,
                    double output_gain = 1.0, double hidden_gain = std::sqrt(2.0)) {
    Mlp m(std::move(widths), hidden, output);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < m.num_layers(); ++k) {
      const double gain = k + 1 == m.num_layers() ? output_gain : hidden_gain;
      const double sd = gain / std::sqrt(static_cast<double>(m.in_width(k)));
      for (T& w : m.weights(k)) w = static_cast<T>(sd * normal(rng));
    }
    return m;
  }

  std::size_t num_layers() const noexcept { return weight_offsets_.size(); }
  const std::vector<int>& widths() const noexcept { return widths_; }
  int in_width(std::size_t k) const { return widths_[k]; }
  int out_width(std::size_t k) const { return widths_[k + 1]; }
  int input_size() const { return widths_.front(); }
  int output_size() const { return widths_.back(); }
  Activation hidden_activation() const noexcept { return hidden_; }
  Activation output_activation() const noexcept { return output_; }
  Activation layer_activation(std::size_t k) const {
    return k + 1 == num_layers() ? output_ : hidden_;
  }

  std::span<T> weights(std::size_t k) {
    return {params_.data() + weight_offsets_[k],
            static_cast<std::size_t>(in_width(k)) * out_width(k)};
  }
  std::span<const T> weights(std::size_t k) const {
    return {params_.data() + weight_offsets_[k],
            static_cast<std::size_t>(in_width(k)) * out_width(k)};
  }
  std::span<T> biases(std::size_t k) {
    return {params_.data() + bias_offsets_[k], static_cast<std::size_t>(out_width(k))};
  }
  std::span<const T> biases(std::size_t k) const {
    return {params_.data() + bias_offsets_[k], static_cast<std::size_t>(out_width(k))};
  }

  std::vector<T>& params() noexcept { return params_; }
  const std::vector<T>& params() const noexcept { return params_; }

  template <typename U>
  Mlp<U> cast() const {
    Mlp<U> out(widths_, hidden_, output_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.params()[i] = static_cast<U>(params_[i]);
    }
    return out;
  }

  bool all_finite() const {
    for (const T& p : params_) {
      if (!std::isfinite(p)) return false;
    }
    return true;
  }

  /// Per-layer pre- and post-activation values from one forward pass.
  struct Cache {
    std::vector<T> input;
    std::vector<std::vector<T>> pre;
    std::vector<std::vector<T>> post;
  };

  /// Forward pass. Throws CorruptedModel when any activation is non-finite.
  std::vector<T> forward(std::span<const T> x) const {
    check_input(x);
    std::vector<T> cur(x.begin(), x.end()), next;
    for (std::size_t k = 0; k < num_layers(); ++k) {
      affine(k, cur, next);
      const Activation a = layer_activation(k);
      for (T& v : next) {
        v = activate(a, v);
        if (!std::isfinite(v)) {
          throw CorruptedModel("mlp: non-finite activation in layer " +
                               std::to_string(k));
        }
      }
      cur.swap(next);
    }
    return cur;
  }

  void forward(std::span<const T> x, Cache& cache) const {
    check_input(x);
    cache.input.assign(x.begin(), x.end());
    cache.pre.resize(num_layers());
    cache.post.resize(num_layers());
    for (std::size_t k = 0; k < num_layers(); ++k) {
      const std::vector<T>& in = k == 0 ? cache.input : cache.post[k - 1];
      affine(k, in, cache.pre[k]);
      const Activation a = layer_activation(k);
      cache.post[k].resize(cache.pre[k].size());
      for (std::size_t i = 0; i < cache.pre[k].size(); ++i) {
        cache.post[k][i] = activate(a, cache.pre[k][i]);
      }
    }
  }

  /// Accumulates d(loss)/d(params) into `grad`, given d(loss)/d(final
  /// pre-activation). The output activation is not differentiated through.
  void backward(const Cache& cache, std::span<const T> grad_out_pre,
                std::span<T> grad) const {
    std::vector<T> delta(grad_out_pre.begin(), grad_out_pre.end()), prev;
    for (std::size_t k = num_layers(); k-- > 0;) {
      const std::vector<T>& in = k == 0 ? cache.input : cache.post[k - 1];
      const int nin = in_width(k), nout = out_width(k);
      const T* W = params_.data() + weight_offsets_[k];
      T* gW = grad.data() + weight_offsets_[k];
      T* gb = grad.data() + bias_offsets_[k];
      for (int o = 0; o < nout; ++o) {
        const T d = delta[o];
        gb[o] += d;
        T* row = gW + static_cast<std::size_t>(o) * nin;
        for (int i = 0; i < nin; ++i) row[i] += d * in[i];
      }
      if (k == 0) break;
      prev.assign(nin, T(0));
      for (int o = 0; o < nout; ++o) {
        const T d = delta[o];
        const T* row = W + static_cast<std::size_t>(o) * nin;
        for (int i = 0; i < nin; ++i) prev[i] += d * row[i];
      }
      const Activation a = layer_activation(k - 1);
      for (int i = 0; i < nin; ++i) {
        prev[i] *= activation_slope(a, cache.pre[k - 1][i], cache.post[k - 1][i]);
      }
      delta.swap(prev);
    }
  }

 private:
  void check_input(std::span<const T> x) const {
    if (static_cast<int>(x.size()) != input_size()) {
      throw InputDomainError("mlp: expected " + std::to_string(input_size()) +
                             " inputs, got " + std::to_string(x.size()));
    }
  }

  void affine(std::size_t k, const std::vector<T>& in, std::vector<T>& out) const {
    const int nin = in_width(k), nout = out_width(k);
    const T* W = params_.data() + weight_offsets_[k];
    const T* b = params_.data() + bias_offsets_[k];
    out.resize(nout);
    for (int o = 0; o < nout; ++o) {
      const T* row = W + static_cast<std::size_t>(o) * nin;
      T acc = T(0);
      for (int i = 0; i < nin; ++i) acc += row[i] * in[i];
      out[o] = acc + b[o];
    }
  }

  std::vector<int> widths_;
  Activation hidden_ = Activation::kElu;
  Activation output_ = Activation::kTanh;
  std::vector<std::size_t> weight_offsets_;
  std::vector<std::size_t> bias_offsets_;
  std::vector<T> params_;
};

}  // namespace rock
