#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "rock/ppo.hpp"

using namespace rock;

namespace {

// Direct double sum of discounted TD errors, stopping after a done flag.
Eigen::MatrixXd brute_force_gae(const Eigen::MatrixXd& r, const Eigen::MatrixXd& v,
                                const Eigen::MatrixXd& d, double gamma, double lambda) {
  const Eigen::Index T = r.rows(), N = r.cols();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(T, N);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index t = 0; t < T; ++t) {
      double weight = 1.0;
      for (Eigen::Index k = t; k < T; ++k) {
        const double bootstrap = d(k, n) > 0.5 ? 0.0 : gamma * v(k + 1, n);
        A(t, n) += weight * (r(k, n) + bootstrap - v(k, n));
        if (d(k, n) > 0.5) break;
        weight *= gamma * lambda;
      }
    }
  }
  return A;
}

EnvSpec tiny_spec() {
  EnvSpec spec;
  spec.episode.max_episode_length = 0.5;
  spec.episode.terrain_roughness = 0.0;
  return spec;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.num_envs = 2;
  cfg.horizon = 16;
  cfg.epochs = 2;
  cfg.minibatch_size = 16;
  cfg.hidden = {16, 8};
  cfg.iterations = 2;
  cfg.threads = 1;
  return cfg;
}

std::vector<Observation> random_observations(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<Observation> out(n);
  for (auto& o : out)
    for (float& v : o) v = u(rng);
  return out;
}

// Samples collected by `old` and scored by `cur`.
PpoSamples synthetic_samples(const ActorCritic& old, std::size_t n, std::uint64_t seed,
                             double sd = 0.3) {
  PpoSamples s;
  s.action_std = sd;
  s.observations = random_observations(n, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& o : s.observations) {
    const auto x = std::vector<double>(o.begin(), o.end());
    TrainNet::Cache c;
    old.actor.forward(std::span<const double>(x), c);
    const double m = c.pre.back()[0];
    const double z = m + sd * normal(rng);
    s.means.push_back(m);
    s.pre_actions.push_back(z);
    s.log_probs.push_back(-0.5 * std::pow((z - m) / sd, 2) - std::log(sd) -
                          0.5 * std::log(2.0 * kPi));
    s.advantages.push_back(normal(rng));
    s.returns.push_back(normal(rng));
  }
  return s;
}

void perturb(TrainNet& net, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& p : net.params()) p += normal(rng);
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

std::string slurp(const std::string& path) { return detail::read_file(path); }

}  // namespace

TEST(Gae, MatchesBruteForce) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution done(0.1);
  for (int trial = 0; trial < 20; ++trial) {
    const int T = 1 + trial * 3, N = 1 + trial % 4;
    Eigen::MatrixXd r(T, N), v(T + 1, N), d(T, N);
    for (int t = 0; t <= T; ++t)
      for (int n = 0; n < N; ++n) {
        v(t, n) = normal(rng);
        if (t < T) {
          r(t, n) = normal(rng);
          d(t, n) = done(rng) ? 1.0 : 0.0;
        }
      }
    const GaeResult g = gae(r, v, d, 0.99, 0.95);
    const Eigen::MatrixXd A = brute_force_gae(r, v, d, 0.99, 0.95);
    EXPECT_LT((g.advantages - A).cwiseAbs().maxCoeff(), 1e-10) << trial;
    EXPECT_LT((g.returns - (A + v.topRows(T))).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Gae, DoneFlagCutsDependenceOnLaterSteps) {
  const int T = 8;
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(T, 1, 1.0), v = Eigen::MatrixXd::Constant(T + 1, 1, 0.5),
                  d = Eigen::MatrixXd::Zero(T, 1);
  d(3, 0) = 1.0;
  const GaeResult a = gae(r, v, d, 0.9, 0.8);
  r(4, 0) = 100.0;
  v(4, 0) = -7.0;
  v(T, 0) = 42.0;
  const GaeResult b = gae(r, v, d, 0.9, 0.8);
  for (int t = 0; t <= 3; ++t) EXPECT_EQ(a.advantages(t, 0), b.advantages(t, 0)) << t;
  EXPECT_NE(a.advantages(4, 0), b.advantages(4, 0));
  // Terminal step: advantage is the bare reward minus the value.
  EXPECT_DOUBLE_EQ(a.advantages(3, 0), 1.0 - 0.5);
}

TEST(Gae, LambdaZeroIsOneStepTd) {
  Eigen::MatrixXd r(2, 1), v(3, 1), d = Eigen::MatrixXd::Zero(2, 1);
  r << 1.0, 2.0;
  v << 0.1, 0.2, 0.3;
  const GaeResult g = gae(r, v, d, 0.5, 0.0);
  EXPECT_DOUBLE_EQ(g.advantages(0, 0), 1.0 + 0.5 * 0.2 - 0.1);
  EXPECT_DOUBLE_EQ(g.advantages(1, 0), 2.0 + 0.5 * 0.3 - 0.2);
}

TEST(Gae, ShapeMismatchThrows) {
  EXPECT_THROW(gae(Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(3, 2),
                   Eigen::MatrixXd::Zero(3, 2), 0.99, 0.95),
               InputDomainError);
}

TEST(PpoLoss, UnitRatioGivesNegativeMeanAdvantage) {
  const ActorCritic ac = ActorCritic::create({8, 8}, 3);
  const PpoSamples s = synthetic_samples(ac, 64, 4);
  TrainConfig cfg;
  const auto idx = all_indices(s.size());
  const PpoLoss L = ppo_loss(ac, s, idx, cfg);
  double mean_a = 0.0;
  for (double a : s.advantages) mean_a += a / s.size();
  EXPECT_NEAR(L.policy, -mean_a, 1e-12);
  EXPECT_EQ(L.clip_fraction, 0.0);
  EXPECT_NEAR(L.approx_kl, 0.0, 1e-15);
}

TEST(PpoLoss, GradientMatchesFiniteDifferences) {
  const ActorCritic old = ActorCritic::create({6, 5}, 5);
  ActorCritic cur = old;
  perturb(cur.actor, 0.3, 6);
  perturb(cur.critic, 0.02, 7);
  const PpoSamples s = synthetic_samples(old, 24, 8);
  TrainConfig cfg;
  cfg.entropy_coef = 0.01;
  const auto idx = all_indices(s.size());
  std::vector<double> ga(cur.actor.params().size(), 0.0), gc(cur.critic.params().size(), 0.0);
  const PpoLoss L0 = ppo_loss(cur, s, idx, cfg, ga, gc);
  EXPECT_GT(L0.clip_fraction, 0.0);  // the kinks are exercised

  auto fd = [&](TrainNet& net, std::vector<double>& out) {
    const double h = 1e-6;
    for (std::size_t i = 0; i < net.params().size(); ++i) {
      const double saved = net.params()[i];
      net.params()[i] = saved + h;
      const double up = ppo_loss(cur, s, idx, cfg).total;
      net.params()[i] = saved - h;
      const double dn = ppo_loss(cur, s, idx, cfg).total;
      net.params()[i] = saved;
      out.push_back((up - dn) / (2 * h));
    }
  };
  std::vector<double> fa, fc;
  fd(cur.actor, fa);
  fd(cur.critic, fc);
  auto rel = [](const std::vector<double>& g, const std::vector<double>& f) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      num += (g[i] - f[i]) * (g[i] - f[i]);
      den += f[i] * f[i];
    }
    return std::sqrt(num / den);
  };
  EXPECT_LT(rel(ga, fa), 1e-4);
  EXPECT_LT(rel(gc, fc), 1e-4);
}

// The surrogate gradient vanishes exactly on samples where the clipped
// branch is the minimum.
TEST(PpoLoss, ClippedSamplesContributeNoSurrogateGradient) {
  const ActorCritic old = ActorCritic::create({6}, 9);
  ActorCritic cur = old;
  perturb(cur.actor, 0.05, 10);
  const PpoSamples s = synthetic_samples(old, 200, 11);
  TrainConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  std::vector<std::uint8_t> active;
  const auto idx = all_indices(s.size());
  ppo_loss(cur, s, idx, cfg, {}, {}, &active);
  int inactive = 0, active_count = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    std::vector<double> ga(cur.actor.params().size(), 0.0), gc(cur.critic.params().size(), 0.0);
    const std::size_t one[1] = {j};
    ppo_loss(cur, s, std::span<const std::size_t>(one, 1), cfg, ga, gc);
    const double norm = std::sqrt(std::inner_product(ga.begin(), ga.end(), ga.begin(), 0.0));
    if (active[j]) {
      ++active_count;
      EXPECT_GT(norm, 0.0) << j;
    } else {
      ++inactive;
      EXPECT_EQ(norm, 0.0) << j;
    }
  }
  EXPECT_GT(inactive, 0);
  EXPECT_GT(active_count, 0);
}

TEST(PpoLoss, ZeroAdvantagesLeaveOnlyEntropy) {
  const ActorCritic ac = ActorCritic::create({8}, 12);
  PpoSamples s = synthetic_samples(ac, 32, 13);
  std::fill(s.advantages.begin(), s.advantages.end(), 0.0);
  const auto idx = all_indices(s.size());
  TrainConfig cfg;
  cfg.entropy_coef = 0.0;
  std::vector<double> ga(ac.actor.params().size(), 0.0), gc(ac.critic.params().size(), 0.0);
  ppo_loss(ac, s, idx, cfg, ga, gc);
  for (double g : ga) EXPECT_EQ(g, 0.0);
  cfg.entropy_coef = 0.01;
  std::fill(ga.begin(), ga.end(), 0.0);
  ppo_loss(ac, s, idx, cfg, ga, gc);
  EXPECT_GT(std::abs(*std::max_element(ga.begin(), ga.end(),
                                       [](double a, double b) { return std::abs(a) < std::abs(b); })),
            0.0);
}

TEST(PpoLoss, EmptyIndexIsZero) {
  const ActorCritic ac = ActorCritic::create({4}, 1);
  const PpoSamples s = synthetic_samples(ac, 4, 1);
  const PpoLoss L = ppo_loss(ac, s, {}, TrainConfig{});
  EXPECT_EQ(L.total, 0.0);
}

TEST(Rollouts, SingleEnvZeroPolicy) {
  ActorCritic ac = ActorCritic::create({8}, 14);
  std::fill(ac.actor.params().begin(), ac.actor.params().end(), 0.0);
  VecEnv envs(tiny_spec(), 1, 15);
  const RolloutBatch b = collect_rollouts(envs, ac, 4, 0.3);
  ASSERT_EQ(b.size(), 4u);
  EXPECT_TRUE(b.finite());
  for (int t = 0; t < 4; ++t) {
    EXPECT_EQ(b.means[t], 0.0);
    EXPECT_NEAR(b.actions[t], std::tanh(b.pre_actions[t]), 1e-15);
    EXPECT_EQ(b.valid[t], 1);
  }
  const PpoSamples s = make_samples(b, 0.99, 0.95);
  EXPECT_EQ(s.size(), 4u);
  PpoOptimizer opt = PpoOptimizer::create(ac, 1e-3);
  const UpdateStats u = ppo_update(ac, opt, s, tiny_config(), 1);
  EXPECT_FALSE(u.aborted);
  EXPECT_TRUE(ac.actor.all_finite());
}

TEST(Rollouts, EpisodeBoundariesFlagged) {
  const ActorCritic ac = ActorCritic::create({8}, 16);
  VecEnv envs(tiny_spec(), 2, 17);  // 25 control steps per episode
  const RolloutBatch b = collect_rollouts(envs, ac, 60, 0.3);
  for (int n = 0; n < 2; ++n) {
    EXPECT_EQ(b.dones[b.index(24, n)], 1);
    EXPECT_EQ(b.dones[b.index(49, n)], 1);
    EXPECT_EQ(b.dones[b.index(23, n)], 0);
  }
  EXPECT_EQ(b.episodes_finished, 4);
}

TEST(Rollouts, IndependentOfThreadCount) {
  const ActorCritic ac = ActorCritic::create({8}, 18);
  VecEnv a(tiny_spec(), 3, 19), c(tiny_spec(), 3, 19);
  const RolloutBatch b1 = collect_rollouts(a, ac, 10, 0.3, 1);
  const RolloutBatch b2 = collect_rollouts(c, ac, 10, 0.3, 3);
  EXPECT_EQ(b1.rewards, b2.rewards);
  EXPECT_EQ(b1.pre_actions, b2.pre_actions);
}

TEST(Train, SeededRunsAreBitIdentical) {
  const std::string a = ::testing::TempDir() + "train_a", b = ::testing::TempDir() + "train_b";
  train(tiny_config(), tiny_spec(), a);
  train(tiny_config(), tiny_spec(), b);
  EXPECT_EQ(slurp(a + "/policy.rock"), slurp(b + "/policy.rock"));
  EXPECT_EQ(slurp(a + "/learning_curve.csv"), slurp(b + "/learning_curve.csv"));
}

TEST(Train, ZeroIterationsWritesUntrainedPolicy) {
  TrainConfig cfg = tiny_config();
  cfg.iterations = 0;
  const std::string dir = ::testing::TempDir() + "train_zero";
  const TrainResult r = train(cfg, tiny_spec(), dir);
  EXPECT_TRUE(r.curve.empty());
  EXPECT_EQ(slurp(dir + "/learning_curve.csv"), curve_header() + "\n");
  const PolicyNet expected = ActorCritic::create(cfg.hidden, cfg.seed).export_policy();
  EXPECT_EQ(load_policy(dir + "/policy.rock").params(), expected.params());
}

TEST(Train, HugeRewardScaleStaysFinite) {
  EnvSpec spec = tiny_spec();
  spec.reward.w_speed = 1e9;
  spec.reward.w_action_rate = 1e8;
  TrainConfig cfg = tiny_config();
  cfg.iterations = 3;
  const TrainResult r = train(cfg, spec, ::testing::TempDir() + "train_huge");
  ASSERT_EQ(r.curve.size(), 3u);
  for (const CurveRow& row : r.curve) {
    EXPECT_TRUE(std::isfinite(row.policy_loss));
    EXPECT_TRUE(std::isfinite(row.value_loss));
  }
  EXPECT_TRUE(r.nets.actor.all_finite());
  EXPECT_TRUE(r.nets.critic.all_finite());
}

TEST(Train, RejectsInvalidConfig) {
  TrainConfig cfg = tiny_config();
  cfg.gamma = 1.5;
  EXPECT_THROW(train(cfg, tiny_spec(), ::testing::TempDir() + "train_bad"), ConfigError);
}

TEST(TrainConfig, StdAnneals) {
  TrainConfig cfg;
  cfg.iterations = 11;
  EXPECT_DOUBLE_EQ(cfg.std_at(0), 0.3);
  EXPECT_DOUBLE_EQ(cfg.std_at(10), 0.1);
  EXPECT_NEAR(cfg.std_at(5), 0.2, 1e-15);
}
