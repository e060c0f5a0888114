#include <cmath>
#include <numeric>

#include "aerialtx/errors.hpp"
#include "aerialtx/policy.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "table_policy.hpp"

using namespace aerialtx;
using nn::Tensor;
using testutil::TablePolicy;

namespace {

std::vector<double> brute_probs(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  for (auto& v : p) v = rng.uniform(0.02, 0.98);
  return p;
}

Image lr_image(std::uint64_t seed) {
  Rng rng(seed);
  return testutil::random_image(24, 24, rng);
}

}  // namespace

TEST_SUITE("policy") {
  TEST_CASE("untrained network outputs one half everywhere") {
    PolicyNetwork net(PolicyConfig{}, 1);
    const Image lr = lr_image(2);
    for (std::size_t g = 0; g < 7; ++g) {
      for (double p : net.probabilities({&lr, g})) CHECK(p == 0.5);
    }
    CHECK(log_prob(net.probabilities({&lr, 0}), SemanticAction(0x1234)) == doctest::Approx(16 * std::log(0.5)));
  }

  TEST_CASE("gain input changes the output once the head is trained") {
    PolicyNetwork net(PolicyConfig{}, 1);
    Rng rng(3);
    for (auto& v : net.params()["psi.fc2.w"].value.values()) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    const Image lr = lr_image(4);
    const auto a = net.probabilities({&lr, 0}), b = net.probabilities({&lr, 6});
    double diff = 0.0;
    for (std::size_t i = 0; i < 16; ++i) diff += std::abs(a[i] - b[i]);
    CHECK(diff > 1e-4);
    CHECK(net.probabilities({&lr, 3}) == net.probabilities({&lr, 3}));
  }

  TEST_CASE("clamped probabilities stay inside the open interval") {
    CHECK(clamped_probability(1e6) == 1.0 - kProbClamp);
    CHECK(clamped_probability(-1e6) == kProbClamp);
    CHECK(clamped_probability(0.0) == 0.5);
    const std::vector<double> z = {1e6, -1e6};
    const auto g = log_prob_logit_grad(z, SemanticAction(1));
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
  }

  TEST_CASE("input validation") {
    PolicyNetwork net(PolicyConfig{}, 1);
    const Image wrong(32, 32);
    CHECK_THROWS_AS(net.logits({&wrong, 0}), DimensionError);
    const Image lr = lr_image(5);
    CHECK_THROWS_AS(net.logits({&lr, 7}), DimensionError);
  }

  TEST_CASE("brute force on a 4-block grid: normalization and per-bit argmax") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = brute_probs(rng, 4);
      double total = 0.0, best = -1e300;
      for (std::uint16_t bits = 0; bits < 16; ++bits) {
        const double lp = log_prob(p, SemanticAction(bits));
        total += std::exp(lp);
        best = std::max(best, lp);
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
      CHECK(log_prob(p, baseline_action(p)) == best);
    }
  }

  TEST_CASE("baseline action thresholds at one half inclusive") {
    const std::vector<double> p = {0.7, 0.3, 0.5, 0.5 - 1e-12};
    const auto a = baseline_action(p);
    CHECK(a.test(0));
    CHECK_FALSE(a.test(1));
    CHECK(a.test(2));
    CHECK_FALSE(a.test(3));
    CHECK(baseline_action(p) == a);
  }

  TEST_CASE("Bernoulli sampling statistics and determinism") {
    Rng rng(9);
    std::vector<double> p(16, 0.5);
    p[3] = 1.0 - kProbClamp;
    std::size_t ones = 0;
    double blocks = 0.0;
    const int n = 10000;
    std::vector<double> half(16, 0.5);
    for (int i = 0; i < n; ++i) {
      ones += sample_action(p, rng).test(3);
      blocks += static_cast<double>(sample_action(half, rng).count());
    }
    CHECK(static_cast<double>(ones) / n >= 0.999);
    CHECK(std::abs(blocks / n - 8.0) <= 0.2);
    Rng a(4), b(4);
    for (int i = 0; i < 50; ++i) CHECK(sample_action(half, a) == sample_action(half, b));
    const std::vector<double> u = {0.1, 0.6, 0.5, 0.49};
    const std::vector<double> q(4, 0.5);
    CHECK(sample_action(q, u).bits() == 0b1001);
  }

  TEST_CASE("rewards") {
    const auto r1 = RewardConfig::reciprocal(), r2 = RewardConfig::exponential();
    CHECK(reward(true, 0.0, r1) == 1.0);
    CHECK(reward(true, 0.0, r2) == 1.0);
    CHECK(reward(true, 1.962, r1) == doctest::Approx(1.0 / 4.924).epsilon(1e-9));
    CHECK(reward(true, 1.962, r1) == doctest::Approx(0.2031).epsilon(1e-3));
    CHECK(reward(false, 0.3, r1) == 0.15);
    CHECK(reward(false, 0.3, r2) == -0.02);
    double prev1 = 2.0, prev2 = 2.0;
    for (double t = 0.0; t <= 5.0; t += 0.01) {
      const double a = latency_reward(t, r1), b = latency_reward(t, r2);
      CHECK(a < prev1);
      CHECK(b < prev2);
      CHECK(a >= b);
      prev1 = a;
      prev2 = b;
    }
    CHECK_THROWS_AS(RewardConfig::reciprocal(2.0, 1.5).validate(), ConfigError);
    CHECK_NOTHROW(RewardConfig::exponential(2.0, -0.5).validate());
    CHECK_THROWS_AS(RewardConfig::exponential(0.0).validate(), ConfigError);
    CHECK(reward_family_from_string("exponential") == RewardFamily::Exponential);
  }

  TEST_CASE("zero advantage leaves the policy untouched") {
    PolicyNetwork net(PolicyConfig{}, 1);
    const nn::ParamSet before = net.params();
    const Image lr = lr_image(11);
    std::vector<EpisodeSample> batch(3);
    for (auto& s : batch) {
      s.input = {&lr, 2};
      s.action = SemanticAction(0x00F0);
      s.reward = s.baseline_reward = 0.4;
    }
    const auto st = reinforce_step(net, batch, {});
    CHECK_FALSE(st.updated);
    CHECK(net.params().values_equal(before));
  }

  TEST_CASE("policy objective gradient agrees with finite differences") {
    PolicyNetwork net(PolicyConfig{}, 13);
    Rng rng(14);
    for (auto& v : net.params()["psi.fc2.w"].value.values()) v = static_cast<float>(rng.uniform(-0.3, 0.3));
    for (auto& v : net.params()["theta.conv1.b"].value.values()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    const Image lr = lr_image(15);
    EpisodeSample s;
    s.input = {&lr, 4};
    s.action = SemanticAction(0xA53C);
    s.reward = 0.8;
    s.baseline_reward = 0.15;
    const std::vector<EpisodeSample> batch = {s};
    const nn::Objective f = [&](nn::ParamSet&, bool want) {
      if (want) net.params().zero_grad();
      return reinforce_objective(net, batch, want);
    };
    Rng pick(16);
    { const auto gc = nn::grad_check(f, net.params(), 1e-2, 1e-3, 16, &pick); INFO(gc.worst_param, " ", gc.worst_index, " ", gc.skipped_kinks); CHECK(gc.max_rel_error <= 1e-3); CHECK(gc.checked >= 20); }
  }

  TEST_CASE("shifting R and R-bar together does not change the update") {
    const Image lr = lr_image(17);
    auto run = [&](double shift) {
      PolicyNetwork net(PolicyConfig{}, 18);
      std::vector<EpisodeSample> batch(2);
      batch[0] = {{&lr, 1}, 0, SemanticAction(0x0F0F), {}, 0.9 + shift, 0.4 + shift};
      batch[1] = {{&lr, 5}, 0, SemanticAction(0x3000), {}, 0.1 + shift, 0.6 + shift};
      reinforce_step(net, batch, {});
      return net.params()["psi.fc2.b"].value;
    };
    CHECK(testutil::max_abs_diff(run(0.0), run(0.5)) <= 1e-6);
  }

  TEST_CASE("known-optimum bandit converges") {
    TablePolicy policy(4);
    Rng rng(21);
    nn::OptimizerConfig opt;
    opt.lr = 0.05;
    const SemanticAction target(0b0100);
    std::vector<double> p;
    int steps = 0;
    for (; steps < 2000; ++steps) {
      std::vector<EpisodeSample> batch(16);
      p = policy.probabilities({});
      const SemanticAction bar = baseline_action(p);
      for (auto& s : batch) {
        s.action = sample_action(p, rng);
        s.reward = s.action == target ? 1.0 : 0.0;
        s.baseline_reward = bar == target ? 1.0 : 0.0;
      }
      reinforce_step(policy, batch, opt);
      p = policy.probabilities({});
      if (p[2] >= 0.99 && p[0] <= 0.01 && p[1] <= 0.01 && p[3] <= 0.01) break;
    }
    MESSAGE("bandit converged after " << steps << " steps");
    CHECK(p[2] >= 0.95);
    CHECK(p[0] <= 0.05);
    CHECK(p[1] <= 0.05);
    CHECK(p[3] <= 0.05);
  }

  TEST_CASE("schedule split and stage freezing") {
    PolicySchedule sched;
    sched.total_steps = 10;
    CHECK(sched.stage_a_steps() == 3);
    CHECK(sched.stage_b_steps() == 3);
    CHECK(sched.stage_c_steps() == 4);

    std::vector<Image> lrs = {lr_image(30), lr_image(31), lr_image(32)};
    const Environment env = [](std::size_t img, std::size_t, SemanticAction a) {
      return EpisodeOutcome{a.test(img), 0.01 * static_cast<double>(a.count())};
    };
    auto train = [&](double fa, double fb, std::size_t steps) {
      PolicyNetwork net(PolicyConfig{}, 33);
      PolicySchedule s;
      s.total_steps = steps;
      s.stage_a_fraction = fa;
      s.stage_b_fraction = fb;
      s.batch_size = 4;
      s.seed = 34;
      const auto log = train_policy(net, lrs, 7, env, RewardConfig::reciprocal(), s);
      return std::make_pair(net.params(), log);
    };
    const PolicyNetwork fresh(PolicyConfig{}, 33);
    const auto [p0, log0] = train(0.3, 0.3, 0);
    CHECK(log0.empty());
    CHECK(p0.values_equal(fresh.params()));

    const auto [pa, loga] = train(1.0, 0.0, 6);
    CHECK(pa["phi.fc1.w"].value == fresh.params()["phi.fc1.w"].value);
    CHECK_FALSE(pa["psi.fc2.w"].value == fresh.params()["psi.fc2.w"].value);
    for (const auto& r : loga) CHECK(r.stage == 'A');

    const auto [pb, logb] = train(0.0, 1.0, 6);
    CHECK(pb["theta.conv1.w"].value == fresh.params()["theta.conv1.w"].value);
    CHECK_FALSE(pb["phi.fc2.w"].value == fresh.params()["phi.fc2.w"].value);

    const auto [pc1, logc1] = train(0.3, 0.3, 12);
    const auto [pc2, logc2] = train(0.3, 0.3, 12);
    CHECK(pc1.values_equal(pc2));
    CHECK(to_jsonl(logc1) == to_jsonl(logc2));
  }

  TEST_CASE("trained policy earns more than sending everything") {
    // Block i of image i carries the evidence; each block costs latency.
    std::vector<Image> lrs;
    for (std::uint64_t i = 0; i < 4; ++i) lrs.push_back(lr_image(40 + i));
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 6; ++x)
          for (std::size_t c = 0; c < 3; ++c) lrs[i].at(y, 6 * i + x, c) = 1.0f;
    }
    const Environment env = [](std::size_t img, std::size_t, SemanticAction a) {
      return EpisodeOutcome{a.test(img), 0.05 * static_cast<double>(a.count())};
    };
    const auto cfg = RewardConfig::reciprocal();
    PolicyNetwork net(PolicyConfig{}, 41);
    PolicySchedule s;
    s.total_steps = 300;
    s.batch_size = 16;
    s.lr = 1e-2;
    s.seed = 42;
    const auto log = train_policy(net, lrs, 7, env, cfg, s);
    double tail = 0.0;
    const std::size_t n = 30;
    for (std::size_t i = log.size() - n; i < log.size(); ++i) tail += log[i].mean_reward;
    tail /= n;
    const double all_ones = reward(true, 0.05 * 16, cfg);
    MESSAGE("final reward " << tail << " vs all-ones " << all_ones);
    CHECK(tail >= all_ones);
  }
}
