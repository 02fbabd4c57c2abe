#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rock/checkpoint.hpp"
#include "rock/env.hpp"
#include "rock/errors.hpp"
#include "rock/mlp.hpp"
#include "rock/parallel.hpp"
#include "rock/policy.hpp"

namespace rock {

struct TrainConfig {
  int num_envs = 64;
  int horizon = 256;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  double learning_rate = 3e-4;
  int epochs = 3;
  int minibatch_size = 2048;
  double entropy_coef = 0.003;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  int iterations = 100;
  std::uint64_t seed = 1;
  double action_std = 0.3;  ///< exploration std of the pre-squash Gaussian
  double action_std_final = 0.1;  ///< linearly annealed to this value
  std::vector<int> hidden = {512, 256, 128};
  int checkpoint_every = 0;  ///< 0 writes only the final checkpoint
  int threads = 0;  ///< 0 uses every hardware thread

  void validate() const {
    if (num_envs < 1 || horizon < 1 || epochs < 1 || minibatch_size < 1 ||
        iterations < 0 || hidden.empty()) {
      throw ConfigError("train: counts must be positive");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0) || !(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
      throw ConfigError("train: gamma and lambda must lie in [0, 1]");
    }
    if (!(clip_ratio > 0.0) || !(learning_rate > 0.0) || !(action_std > 0.0) ||
        !(action_std_final > 0.0) || !(max_grad_norm > 0.0) || entropy_coef < 0.0 ||
        value_coef < 0.0) {
      throw ConfigError("train: clip, lr, std and grad norm must be positive");
    }
    for (int w : hidden) {
      if (w <= 0) throw ConfigError("train: hidden widths must be positive");
    }
  }

  double std_at(int iteration) const {
    if (iterations <= 1) return action_std;
    const double f = std::clamp(static_cast<double>(iteration) / (iterations - 1), 0.0, 1.0);
    return action_std + f * (action_std_final - action_std);
  }
};

using TrainNet = Mlp<double>;

/// Actor and critic trained in double precision. The actor's final
/// pre-activation is the mean of the exploration Gaussian; its tanh is the
/// deterministic action.
struct ActorCritic {
  TrainNet actor;
  TrainNet critic;

  static ActorCritic create(const std::vector<int>& hidden, std::uint64_t seed) {
    return {TrainNet::random(policy_widths(hidden), Activation::kElu, Activation::kTanh,
                             derive_seed(seed, 101), 0.01),
            TrainNet::random(policy_widths(hidden), Activation::kElu, Activation::kIdentity,
                             derive_seed(seed, 102), 1.0)};
  }

  PolicyNet export_policy() const { return actor.cast<float>(); }
};

namespace detail {

inline std::vector<double> to_double(const Observation& o) {
  return std::vector<double>(o.begin(), o.end());
}

/// log(1 - tanh(x)^2) without cancellation.
inline double log_tanh_jacobian(double x) {
  const double a = std::abs(x);
  return 2.0 * (std::log(2.0) - a - std::log1p(std::exp(-2.0 * a)));
}

inline double gaussian_log_prob(double z, double mean, double sd) {
  const double e = (z - mean) / sd;
  return -0.5 * e * e - std::log(sd) - 0.5 * std::log(2.0 * kPi);
}

inline double gaussian_entropy(double sd) {
  return 0.5 * std::log(2.0 * kPi * std::exp(1.0)) + std::log(sd);
}

}  // namespace detail

/// Transitions laid out row-major by time: index t * N + n.
struct RolloutBatch {
  int T = 0;
  int N = 0;
  std::vector<Observation> observations;
  std::vector<double> actions;  ///< squashed, in [-1, 1]
  std::vector<double> pre_actions;  ///< Gaussian sample before tanh
  std::vector<double> means;  ///< actor pre-activation at collection time
  std::vector<double> log_probs;  ///< Gaussian log-density of pre_actions
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<std::uint8_t> valid;  ///< 0 for transitions dropped on divergence
  std::vector<Vec2> commands;
  std::vector<double> speeds;  ///< ground-truth speed along the command
  std::vector<double> bootstrap_values;  ///< V(s_T) per env
  double action_std = 0.3;
  int dropped = 0;
  int episodes_finished = 0;

  std::size_t size() const { return static_cast<std::size_t>(T) * N; }
  std::size_t index(int t, int n) const { return static_cast<std::size_t>(t) * N + n; }

  void resize(int t, int n) {
    T = t;
    N = n;
    const std::size_t s = size();
    observations.assign(s, Observation{});
    actions.assign(s, 0.0);
    pre_actions.assign(s, 0.0);
    means.assign(s, 0.0);
    log_probs.assign(s, 0.0);
    values.assign(s, 0.0);
    rewards.assign(s, 0.0);
    dones.assign(s, 0);
    valid.assign(s, 1);
    commands.assign(s, Vec2::Zero());
    speeds.assign(s, 0.0);
    bootstrap_values.assign(n, 0.0);
  }

  bool finite() const {
    auto ok = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return ok(actions) && ok(pre_actions) && ok(means) && ok(log_probs) &&
           ok(values) && ok(rewards) && ok(bootstrap_values);
  }

  Eigen::MatrixXd matrix(const std::vector<double>& v) const {
    Eigen::MatrixXd m(T, N);
    for (int t = 0; t < T; ++t)
      for (int n = 0; n < N; ++n) m(t, n) = v[index(t, n)];
    return m;
  }
};

/// N environments with per-env random streams. Env n's k-th episode is
/// reset with derive_seed(derive_seed(seed, n), k), so results do not
/// depend on how envs are spread over threads.
class VecEnv {
 public:
  VecEnv(const EnvSpec& spec, int n, std::uint64_t seed) : seed_(seed) {
    if (n < 1) throw ConfigError("vec env: need at least one env");
    auto shell = std::make_shared<const ShellModel>(spec.shell);
    for (int i = 0; i < n; ++i) {
      envs_.emplace_back(spec, shell);
      rngs_.emplace_back(derive_seed(seed, 1000 + i));
    }
    episodes_.assign(n, 0);
    obs_.resize(n);
    for (int i = 0; i < n; ++i) reset(i);
  }

  int size() const { return static_cast<int>(envs_.size()); }
  RockEnv& env(int i) { return envs_[i]; }
  const Observation& observation(int i) const { return obs_[i]; }
  std::mt19937_64& rng(int i) { return rngs_[i]; }

  void reset(int i) {
    obs_[i] = envs_[i].reset(derive_seed(derive_seed(seed_, i), episodes_[i]++));
  }
  void set_observation(int i, const Observation& o) { obs_[i] = o; }

 private:
  std::uint64_t seed_;
  std::vector<RockEnv> envs_;
  std::vector<std::mt19937_64> rngs_;
  std::vector<std::uint64_t> episodes_;
  std::vector<Observation> obs_;
};

/// Steps every env T times with stochastic actions tanh(m + sd * noise).
/// Finished envs are reset in place; diverged transitions are kept in the
/// batch with valid = 0 and done = 1.
inline RolloutBatch collect_rollouts(VecEnv& envs, const ActorCritic& ac, int T,
                                     double action_std, int threads = 1) {
  RolloutBatch b;
  const int N = envs.size();
  b.resize(T, N);
  b.action_std = action_std;
  std::vector<int> dropped(N, 0), finished(N, 0);
  parallel_for(static_cast<std::size_t>(N), threads, [&](std::size_t ni) {
    const int n = static_cast<int>(ni);
    std::normal_distribution<double> normal(0.0, 1.0);
    TrainNet::Cache cache;
    for (int t = 0; t < T; ++t) {
      const std::size_t k = b.index(t, n);
      const Observation& o = envs.observation(n);
      const auto x = detail::to_double(o);
      ac.actor.forward(std::span<const double>(x), cache);
      const double m = cache.pre.back()[0];
      const double v = ac.critic.forward(std::span<const double>(x))[0];
      const double z = m + action_std * normal(envs.rng(n));
      const double a = std::tanh(z);
      b.observations[k] = o;
      b.means[k] = m;
      b.pre_actions[k] = z;
      b.actions[k] = a;
      b.log_probs[k] = detail::gaussian_log_prob(z, m, action_std);
      b.values[k] = v;
      b.commands[k] = envs.env(n).command().d;
      const EnvStep r = envs.env(n).step(a);
      b.rewards[k] = r.reward;
      b.speeds[k] = r.info.speed_along_command;
      b.dones[k] = r.done ? 1 : 0;
      if (r.info.diverged || !std::isfinite(r.reward)) {
        b.valid[k] = 0;
        b.rewards[k] = 0.0;
        b.dones[k] = 1;
        ++dropped[n];
        envs.reset(n);
      } else if (r.done) {
        ++finished[n];
        envs.reset(n);
      } else {
        envs.set_observation(n, r.observation);
      }
    }
    const auto x = detail::to_double(envs.observation(n));
    b.bootstrap_values[n] = ac.critic.forward(std::span<const double>(x))[0];
  });
  b.dropped = std::accumulate(dropped.begin(), dropped.end(), 0);
  b.episodes_finished = std::accumulate(finished.begin(), finished.end(), 0);
  return b;
}

struct GaeResult {
  Eigen::MatrixXd advantages;
  Eigen::MatrixXd returns;
};

/// Generalized advantage estimation. `values` has T + 1 rows; the last row
/// is the bootstrap value. A done flag at step t cuts the recursion after t.
inline GaeResult gae(const Eigen::MatrixXd& rewards, const Eigen::MatrixXd& values,
                     const Eigen::MatrixXd& dones, double gamma, double lambda) {
  const Eigen::Index T = rewards.rows(), N = rewards.cols();
  if (values.rows() != T + 1 || values.cols() != N || dones.rows() != T || dones.cols() != N) {
    throw InputDomainError("gae: shape mismatch");
  }
  GaeResult r;
  r.advantages.resize(T, N);
  for (Eigen::Index n = 0; n < N; ++n) {
    double next = 0.0;
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      const double live = 1.0 - dones(t, n);
      const double delta = rewards(t, n) + gamma * values(t + 1, n) * live - values(t, n);
      next = delta + gamma * lambda * live * next;
      r.advantages(t, n) = next;
    }
  }
  r.returns = r.advantages + values.topRows(T);
  return r;
}

inline GaeResult gae(const RolloutBatch& b, double gamma, double lambda) {
  Eigen::MatrixXd v(b.T + 1, b.N);
  v.topRows(b.T) = b.matrix(b.values);
  for (int n = 0; n < b.N; ++n) v(b.T, n) = b.bootstrap_values[n];
  Eigen::MatrixXd d(b.T, b.N);
  for (int t = 0; t < b.T; ++t)
    for (int n = 0; n < b.N; ++n) d(t, n) = b.dones[b.index(t, n)];
  return gae(b.matrix(b.rewards), v, d, gamma, lambda);
}

/// Normalizes in place to mean 0, std 1 over entries with mask != 0.
inline void normalize_advantages(std::vector<double>& adv, const std::vector<std::uint8_t>& mask) {
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    if (!mask[i]) continue;
    sum += adv[i];
    ++count;
  }
  if (count == 0) return;
  const double mean = sum / count;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    if (mask[i]) sq += (adv[i] - mean) * (adv[i] - mean);
  }
  const double sd = std::sqrt(sq / count);
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);
}

/// Flattened samples consumed by the loss.
struct PpoSamples {
  std::vector<Observation> observations;
  std::vector<double> pre_actions, means, log_probs, advantages, returns;
  double action_std = 0.3;

  std::size_t size() const { return observations.size(); }
};

inline PpoSamples make_samples(const RolloutBatch& b, double gamma, double lambda) {
  const GaeResult g = gae(b, gamma, lambda);
  std::vector<double> adv(b.size()), ret(b.size());
  for (int t = 0; t < b.T; ++t)
    for (int n = 0; n < b.N; ++n) {
      adv[b.index(t, n)] = g.advantages(t, n);
      ret[b.index(t, n)] = g.returns(t, n);
    }
  normalize_advantages(adv, b.valid);
  PpoSamples s;
  s.action_std = b.action_std;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!b.valid[i]) continue;
    s.observations.push_back(b.observations[i]);
    s.pre_actions.push_back(b.pre_actions[i]);
    s.means.push_back(b.means[i]);
    s.log_probs.push_back(b.log_probs[i]);
    s.advantages.push_back(adv[i]);
    s.returns.push_back(ret[i]);
  }
  return s;
}

struct PpoLoss {
  double policy = 0.0;  ///< clipped surrogate, to be minimized
  double value = 0.0;  ///< 0.5 * mean squared return error
  double entropy = 0.0;  ///< of the squashed action distribution
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double total = 0.0;
};

/// Loss on samples `idx` and, when the gradient spans are non-empty, its
/// gradient with respect to actor and critic parameters (accumulated).
///
/// Per sample, with r = exp(log N(z; m, sd) - log_prob_old):
///   policy  = -min(r A, clip(r, 1 - c, 1 + c) A)
///   entropy = H(N(0, sd)) + log(1 - tanh(m + sd * eps)^2), eps = (z - m_old) / sd
///   total   = mean(policy) + value_coef * value - entropy_coef * mean(entropy)
inline PpoLoss ppo_loss(const ActorCritic& ac, const PpoSamples& s,
                        std::span<const std::size_t> idx, const TrainConfig& cfg,
                        std::span<double> actor_grad = {},
                        std::span<double> critic_grad = {},
                        std::vector<std::uint8_t>* main_term_active = nullptr) {
  PpoLoss L;
  if (idx.empty()) return L;
  const double inv = 1.0 / static_cast<double>(idx.size());
  const double sd = s.action_std;
  const bool want_grad = !actor_grad.empty();
  TrainNet::Cache ca, cc;
  if (main_term_active) main_term_active->assign(idx.size(), 0);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const std::size_t i = idx[j];
    const auto x = detail::to_double(s.observations[i]);
    ac.actor.forward(std::span<const double>(x), ca);
    ac.critic.forward(std::span<const double>(x), cc);
    const double m = ca.pre.back()[0];
    const double v = cc.pre.back()[0];
    const double z = s.pre_actions[i];
    const double A = s.advantages[i];
    const double log_ratio = detail::gaussian_log_prob(z, m, sd) - s.log_probs[i];
    const double r = std::exp(log_ratio);
    const double rc = std::clamp(r, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio);
    const bool unclipped = r * A <= rc * A;
    L.policy += -std::min(r * A, rc * A) * inv;
    L.clip_fraction += (std::abs(r - 1.0) > cfg.clip_ratio ? 1.0 : 0.0) * inv;
    L.approx_kl += ((r - 1.0) - log_ratio) * inv;
    const double eps = (z - s.means[i]) / sd;
    const double zz = m + sd * eps;
    L.entropy += (detail::gaussian_entropy(sd) + detail::log_tanh_jacobian(zz)) * inv;
    const double err = v - s.returns[i];
    L.value += 0.5 * err * err * inv;
    if (main_term_active) (*main_term_active)[j] = unclipped ? 1 : 0;

    if (want_grad) {
      double g_m = 0.0;
      if (unclipped) g_m += -A * r * (z - m) / (sd * sd) * inv;
      g_m += -cfg.entropy_coef * (-2.0 * std::tanh(zz)) * inv;
      const double ga[1] = {g_m};
      ac.actor.backward(ca, std::span<const double>(ga, 1), actor_grad);
      const double gc[1] = {cfg.value_coef * err * inv};
      ac.critic.backward(cc, std::span<const double>(gc, 1), critic_grad);
    }
  }
  L.total = L.policy + cfg.value_coef * L.value - cfg.entropy_coef * L.entropy;
  return L;
}

/// Adam over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(b1), b2_(b2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& p, std::span<const double> g) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * g[i];
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * g[i] * g[i];
      p[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_ = 3e-4, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  std::vector<double> m_, v_;
  long t_ = 0;
};

/// Scales `g` so its Euclidean norm is at most `max_norm`; returns the
/// norm before clipping.
inline double clip_grad_norm(std::span<double> g, double max_norm) {
  double sq = 0.0;
  for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (double& x : g) x *= k;
  }
  return norm;
}

struct UpdateStats {
  PpoLoss loss;  ///< averaged over minibatches
  double grad_norm = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

struct PpoOptimizer {
  Adam actor;
  Adam critic;

  static PpoOptimizer create(const ActorCritic& ac, double lr) {
    return {Adam(ac.actor.params().size(), lr), Adam(ac.critic.params().size(), lr)};
  }
};

/// Several epochs of minibatch descent on the clipped objective. A
/// non-finite loss or parameter restores the networks to their state before
/// the call and marks the update aborted.
inline UpdateStats ppo_update(ActorCritic& ac, PpoOptimizer& opt, const PpoSamples& s,
                              const TrainConfig& cfg, std::uint64_t shuffle_seed) {
  UpdateStats st;
  if (s.size() == 0) return st;
  const ActorCritic backup = ac;
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(shuffle_seed);
  std::vector<double> ga(ac.actor.params().size()), gc(ac.critic.params().size());
  int batches = 0;
  const std::size_t mb = std::min<std::size_t>(cfg.minibatch_size, s.size());
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t lo = 0; lo < order.size(); lo += mb) {
      const std::size_t hi = std::min(order.size(), lo + mb);
      std::fill(ga.begin(), ga.end(), 0.0);
      std::fill(gc.begin(), gc.end(), 0.0);
      const PpoLoss L = ppo_loss(ac, s, std::span<const std::size_t>(order.data() + lo, hi - lo),
                                 cfg, ga, gc);
      if (!std::isfinite(L.total)) {
        ac = backup;
        st.aborted = true;
        st.abort_reason = "non-finite loss";
        return st;
      }
      st.grad_norm += clip_grad_norm(ga, cfg.max_grad_norm);
      clip_grad_norm(gc, cfg.max_grad_norm);
      opt.actor.step(ac.actor.params(), ga);
      opt.critic.step(ac.critic.params(), gc);
      if (!ac.actor.all_finite() || !ac.critic.all_finite()) {
        ac = backup;
        st.aborted = true;
        st.abort_reason = "non-finite parameters";
        return st;
      }
      st.loss.policy += L.policy;
      st.loss.value += L.value;
      st.loss.entropy += L.entropy;
      st.loss.approx_kl += L.approx_kl;
      st.loss.clip_fraction += L.clip_fraction;
      st.loss.total += L.total;
      ++batches;
    }
  }
  const double k = 1.0 / std::max(1, batches);
  st.loss.policy *= k;
  st.loss.value *= k;
  st.loss.entropy *= k;
  st.loss.approx_kl *= k;
  st.loss.clip_fraction *= k;
  st.loss.total *= k;
  st.grad_norm *= k;
  return st;
}

struct CurveRow {
  int iteration = 0;
  double mean_reward = 0.0;
  double mean_speed = 0.0;
  double kl = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  int dropped = 0;
  bool aborted = false;
};

inline std::string curve_header() {
  return "iteration,mean_reward,mean_speed,kl,policy_loss,value_loss,entropy,clip_fraction,dropped,aborted";
}

inline std::string curve_line(const CurveRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d", r.iteration,
                r.mean_reward, r.mean_speed, r.kl, r.policy_loss, r.value_loss, r.entropy,
                r.clip_fraction, r.dropped, r.aborted ? 1 : 0);
  return buf;
}

struct TrainResult {
  std::string checkpoint_path;
  std::string curve_path;
  std::vector<CurveRow> curve;
  ActorCritic nets;
};

/// Mean ground-truth speed along the command of the deterministic policy
/// over `episodes` fresh episodes.
inline double evaluate_speed(const EnvSpec& spec, const PolicyNet& policy, int episodes,
                             std::uint64_t seed, int threads = 1) {
  std::vector<double> per(episodes, 0.0);
  auto shell = std::make_shared<const ShellModel>(spec.shell);
  parallel_for(static_cast<std::size_t>(episodes), threads, [&](std::size_t e) {
    RockEnv env(spec, shell);
    Observation o = env.reset(derive_seed(seed, e));
    double sum = 0.0;
    int steps = 0;
    for (;;) {
      const EnvStep r = env.step(forward(policy, o));
      sum += r.info.speed_along_command;
      ++steps;
      if (r.done) break;
      o = r.observation;
    }
    per[e] = sum / std::max(1, steps);
  });
  return episodes > 0 ? std::accumulate(per.begin(), per.end(), 0.0) / episodes : 0.0;
}

/// Collect/update loop. Writes `policy.rock` (plus sidecar) and
/// `learning_curve.csv` into `out_dir`, and intermediate checkpoints every
/// `checkpoint_every` iterations.
inline TrainResult train(const TrainConfig& cfg, const EnvSpec& spec, const std::string& out_dir,
                         std::uint64_t config_hash = 0) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  const int threads = cfg.threads > 0 ? cfg.threads : default_thread_count();

  TrainResult res;
  res.nets = ActorCritic::create(cfg.hidden, cfg.seed);
  res.curve_path = (fs::path(out_dir) / "learning_curve.csv").string();
  res.checkpoint_path = (fs::path(out_dir) / "policy.rock").string();
  std::ofstream curve(res.curve_path, std::ios::trunc);
  if (!curve) throw IoError("cannot write " + res.curve_path);
  curve << curve_header() << "\n";

  PpoOptimizer opt = PpoOptimizer::create(res.nets, cfg.learning_rate);
  std::unique_ptr<VecEnv> envs;
  if (cfg.iterations > 0) envs = std::make_unique<VecEnv>(spec, cfg.num_envs, cfg.seed);
  for (int it = 0; it < cfg.iterations; ++it) {
    const double sd = cfg.std_at(it);
    const RolloutBatch b = collect_rollouts(*envs, res.nets, cfg.horizon, sd, threads);
    if (!b.finite()) throw SimulationDiverged(static_cast<std::uint64_t>(it), "non-finite rollout");
    const PpoSamples s = make_samples(b, cfg.gamma, cfg.gae_lambda);
    const UpdateStats u = ppo_update(res.nets, opt, s, cfg, derive_seed(cfg.seed, 5000 + it));

    CurveRow row;
    row.iteration = it;
    double rs = 0.0, vs = 0.0;
    int cnt = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (!b.valid[i]) continue;
      rs += b.rewards[i];
      vs += b.speeds[i];
      ++cnt;
    }
    row.mean_reward = cnt ? rs / cnt : 0.0;
    row.mean_speed = cnt ? vs / cnt : 0.0;
    row.kl = u.loss.approx_kl;
    row.policy_loss = u.loss.policy;
    row.value_loss = u.loss.value;
    row.entropy = u.loss.entropy;
    row.clip_fraction = u.loss.clip_fraction;
    row.dropped = b.dropped;
    row.aborted = u.aborted;
    res.curve.push_back(row);
    curve << curve_line(row) << "\n" << std::flush;
    if (!curve) throw IoError("write failed for " + res.curve_path + " at iteration " + std::to_string(it));

    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "policy_iter_%05d.rock", it + 1);
      save_policy((fs::path(out_dir) / name).string(), res.nets.export_policy(), config_hash);
    }
  }
  save_policy(res.checkpoint_path, res.nets.export_policy(), config_hash);
  return res;
}

}  // namespace rock
