// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "carft/common/error.hpp"
#include "carft/common/random.hpp"
#include "carft/model/params.hpp"
#include "carft/rollout/rollout.hpp"
#include "carft/task/dataset.hpp"
#include "test_util.hpp"

using namespace carft;
using rollout::RewardMode;
using task::Outcome;

namespace {

using Vec = std::vector<double>;

// Double-sum form of the advantage with a zero value after the last token.
Vec gae_oracle(const Vec& r, const Vec& v, double gamma, double lambda) {
  const std::size_t n = r.size();
  Vec delta(n);
  for (std::size_t t = 0; t < n; ++t) delta[t] = r[t] + gamma * (t + 1 < n ? v[t + 1] : 0.0) - v[t];
  Vec out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t l = 0; t + l < n; ++l) {
      out[t] += w * delta[t + l];
      w *= gamma * lambda;
    }
  }
  return out;
}

double reward_at(double ip) {
  // Two unit vectors in the plane with inner product ip.
  const Vec a = {1.0, 0.0};
  const Vec b = {ip, std::sqrt(std::max(0.0, 1.0 - ip * ip))};
  return rollout::terminal_reward(Outcome::wrong_extractable, a, b, RewardMode::embedding);
}

}  // namespace

TEST_CASE("terminal reward by outcome and mode") {
  for (RewardMode m : {RewardMode::fixed, RewardMode::embedding}) {
    CHECK(rollout::terminal_reward(Outcome::correct, std::nullopt, std::nullopt, m) == 1.0);
    CHECK(rollout::terminal_reward(Outcome::unextractable, std::nullopt, std::nullopt, m) == 0.0);
  }
  CHECK(rollout::terminal_reward(Outcome::wrong_extractable, std::nullopt, std::nullopt,
                                 RewardMode::fixed) == 0.1);
  CHECK(reward_at(1.0) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(reward_at(-1.0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(reward_at(0.0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(rollout::terminal_reward(Outcome::wrong_extractable, std::nullopt, std::nullopt,
                                           RewardMode::embedding),
                  Error);
}

TEST_CASE("embedding rewards stay in range and grow with the inner product") {
  Rng rng(11);
  double prev_ip = -1.0;
  double prev_reward = reward_at(prev_ip);
  for (int i = 0; i <= 200; ++i) {
    const double ip = -1.0 + 0.01 * i;
    const double r = reward_at(ip);
    CHECK(r >= 0.1);
    CHECK(r <= 0.3);
    CHECK(r >= prev_reward);
    prev_reward = r;
  }
  for (int i = 0; i < 1000; ++i) {
    const Vec a = testing::random_unit(8, rng);
    const Vec b = testing::random_unit(8, rng);
    const double r = rollout::terminal_reward(Outcome::wrong_extractable, a, b, RewardMode::embedding);
    CHECK(r >= 0.1);
    CHECK(r <= 0.3);
  }
}

TEST_CASE("reward mode names") {
  CHECK(rollout::parse_reward_mode("fixed") == RewardMode::fixed);
  CHECK(rollout::parse_reward_mode("embedding") == RewardMode::embedding);
  CHECK_FALSE(rollout::parse_reward_mode("other").has_value());
  CHECK(rollout::reward_mode_name(RewardMode::fixed) == "fixed");
}

TEST_CASE("token rewards") {
  CHECK(rollout::token_rewards(1.0, Vec{0.3, 0.1, 0.2}, Vec{0.1, 0.4, 0.0}, 0.0) == Vec{0, 0, 1});
  const Vec same = {-0.5, -1.5, -0.25};
  for (double r : rollout::token_rewards(0.0, same, same, 0.05)) CHECK(r == 0.0);
  const Vec got = rollout::token_rewards(0.0, Vec{0.2, -0.1}, Vec{0.0, 0.0}, 0.05);
  CHECK(got[0] == doctest::Approx(-0.01).epsilon(1e-14));
  CHECK(got[1] == doctest::Approx(0.005).epsilon(1e-14));
  CHECK_THROWS_AS(rollout::token_rewards(0.0, Vec{0.1}, Vec{0.1, 0.2}, 0.05), Error);
}

TEST_CASE("advantages") {
  const Vec a = rollout::gae(Vec{0, 0, 1}, Vec{0, 0, 0}, 0.95, 1.0);
  CHECK(a[0] == doctest::Approx(0.9025).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(a[2] == 1.0);
  for (double x : rollout::gae(Vec{0, 0, 0, 0}, Vec{0, 0, 0, 0}, 0.95, 1.0)) CHECK(x == 0.0);
  for (double lambda : {0.3, 1.0}) {
    CHECK(rollout::gae(Vec{0.7}, Vec{0.25}, 0.9, lambda)[0] == doctest::Approx(0.45).epsilon(1e-15));
  }
  CHECK_THROWS_AS(rollout::gae(Vec{}, Vec{}, 0.95, 1.0), Error);
  CHECK_THROWS_AS(rollout::gae(Vec{1.0}, Vec{0.0, 0.0}, 0.95, 1.0), Error);
}

TEST_CASE("recursive advantages equal the double sum") {
  Rng rng(12);
  const double gammas[] = {0.0, 0.5, 0.95, 1.0};
  const double lambdas[] = {0.5, 1.0};
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(32);
    Vec r(n), v(n);
    for (std::size_t t = 0; t < n; ++t) {
      r[t] = 2.0 * rng.uniform() - 1.0;
      v[t] = 2.0 * rng.uniform() - 1.0;
    }
    const double g = gammas[rng.below(4)];
    const double l = lambdas[rng.below(2)];
    const Vec got = rollout::gae(r, v, g, l);
    const Vec want = gae_oracle(r, v, g, l);
    for (std::size_t t = 0; t < n; ++t) REQUIRE(std::abs(got[t] - want[t]) <= 1e-10);
  }
}

TEST_CASE("returns") {
  const Vec adv = {0.9025, 0.95, 1.0};
  CHECK(rollout::returns(adv, Vec{0, 0, 0}) == adv);
  const Vec v = {0.3, -0.2};
  CHECK(rollout::returns(Vec{0, 0}, v) == v);
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    Vec a(10), vals(10);
    for (std::size_t i = 0; i < 10; ++i) {
      a[i] = rng.normal();
      vals[i] = rng.normal();
    }
    const Vec r = rollout::returns(a, vals);
    for (std::size_t i = 0; i < 10; ++i) CHECK(r[i] == a[i] + vals[i]);
  }
  CHECK_THROWS_AS(rollout::returns(Vec{1.0}, Vec{}), Error);
}

TEST_CASE("collect fills every trajectory field deterministically") {
  model::ModelConfig c;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_seq_len = 48;
  c.d_proj = 8;
  const auto params = model::init_params(c, 21);
  const auto reference = model::init_params(c, 22);
  const auto batch = task::gen_dataset(6, 3, task::Split::train);
  rollout::RolloutConfig rc;
  rc.max_new_tokens = 24;

  for (RewardMode mode : {RewardMode::fixed, RewardMode::embedding}) {
    rc.reward_mode = mode;
    const auto a = rollout::collect(params, reference, batch, rc, 5, 0);
    const auto b = rollout::collect(params, reference, batch, rc, 5, 0);
    REQUIRE(a.size() == batch.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto& t = a[i];
      CHECK(t.tokens == b[i].tokens);
      CHECK(t.old_log_probs == b[i].old_log_probs);
      CHECK(t.prompt_length == batch[i].question_tokens.size());
      const std::size_t n = t.generated_count();
      CHECK(n >= 1);
      CHECK(n <= rc.max_new_tokens);
      CHECK(t.old_log_probs.size() == n);
      CHECK(t.ref_log_probs.size() == n);
      CHECK(t.values.size() == n);
      CHECK(t.token_rewards.size() == n);
      CHECK(t.advantages.size() == n);
      CHECK(t.returns.size() == n);
      for (std::size_t k = 0; k < n; ++k) CHECK(t.returns[k] == t.advantages[k] + t.values[k]);
      CHECK(t.outcome == task::check(task::extract_answer(t.generated()), batch[i].answer));
      const double r = t.terminal_reward;
      CHECK((r == 0.0 || r == 1.0 || (r >= 0.1 && r <= 0.3)));
      if (mode == RewardMode::fixed && t.outcome == Outcome::wrong_extractable) CHECK(r == 0.1);
    }
  }
  const auto other = rollout::collect(params, reference, batch, rc, 5, 1);
  const auto first = rollout::collect(params, reference, batch, rc, 5, 0);
  bool differs = false;
  for (std::size_t i = 0; i < other.size(); ++i) differs |= other[i].tokens != first[i].tokens;
  CHECK(differs);
}
