#include "doctest_torch.hpp"

#include <cmath>
#include <random>

#include "sfuda/losses.hpp"
#include "support.hpp"

using namespace sfuda;
using namespace sfuda::testing;
namespace L = sfuda::losses;

namespace {

ProbMap prob_map(const Planes& planes, int64_t h, int64_t w) {
  return ProbMap(GridShape{static_cast<int64_t>(planes.size()), h, w}, flatten(planes));
}

FeatureMap feature_map(const Planes& planes, int64_t h, int64_t w) {
  return FeatureMap(GridShape{static_cast<int64_t>(planes.size()), h, w}, flatten(planes));
}

ProbMap uniform2(int64_t h, int64_t w) {
  return ProbMap(GridShape{2, h, w}, std::vector<double>(static_cast<size_t>(2 * h * w), 0.5));
}

}  // namespace

TEST_CASE("cross entropy: worked values") {
  const auto truth = mask_from(2, 2, {0, 1, 1, 0});
  CHECK(std::abs(L::cross_entropy_loss(ProbMap::one_hot(truth), truth)) < 1e-6);
  CHECK(L::cross_entropy_loss(uniform2(2, 2), truth) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const ProbMap single(GridShape{2, 1, 1}, {0.75, 0.25});
  CHECK(L::cross_entropy_loss(single, mask_from(1, 1, {1})) == doctest::Approx(-std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("cross entropy: shape mismatch is a contract violation") {
  CHECK_THROWS_AS(L::cross_entropy_loss(uniform2(2, 2), mask_from(1, 4, {0, 0, 1, 1})), ContractViolation);
}

TEST_CASE("dice loss: worked values") {
  const auto t = mask_from(1, 4, {1, 1, 0, 0});
  const ProbMap p(GridShape{2, 1, 4}, {0, 1, 0, 1, 1, 0, 1, 0});
  CHECK(L::dice_loss(p, t) == doctest::Approx(0.4).epsilon(1e-12));

  // Hard probabilities equal to t: zero up to the smooth term, which cancels.
  CHECK(L::dice_loss(ProbMap::one_hot(t), t) == doctest::Approx(0.0).scale(1e-12));

  const ProbMap disjoint(GridShape{2, 1, 4}, {1, 1, 0, 0, 0, 0, 1, 1});
  CHECK(L::dice_loss(disjoint, t) == doctest::Approx(1.0 - 1.0 / 5.0).epsilon(1e-12));
}

TEST_CASE("ring loss: worked values") {
  CHECK(L::ring_loss(FeatureMap(GridShape{2, 1, 1}, {3, 4}), 1.0) == doctest::Approx(16.0).epsilon(1e-12));
  CHECK(L::ring_loss(FeatureMap(GridShape{1, 1, 2}, {1, 3}), 1.0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(L::ring_loss(FeatureMap(GridShape{2, 1, 2}, {0.6, 1, 0.8, 0}), 1.0) == doctest::Approx(0.0).scale(1e-12));
}

TEST_CASE("entropy loss: worked values") {
  const auto hot = ProbMap::one_hot(mask_from(2, 2, {0, 1, 1, 0}));
  CHECK(L::entropy_loss(hot) == 0.0);
  CHECK(L::entropy_loss(uniform2(3, 3)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const ProbMap mixed(GridShape{2, 1, 2}, {0.5, 1.0, 0.5, 0.0});
  CHECK(L::entropy_loss(mixed) == doctest::Approx(std::log(2.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("class ratio prior: worked values") {
  const ProbMap p(GridShape{2, 1, 2}, {0.9, 0.9, 0.1, 0.1});
  CHECK(L::class_ratio_prior_loss(p, {0.9, 0.1}) == doctest::Approx(0.0).scale(1e-12));

  const ProbMap all_bg(GridShape{2, 1, 2}, {1, 1, 0, 0});
  const double expected = 0.5 * std::log(0.5 / 1e-7) + 0.5 * std::log(0.5 / (1 - 1e-7));
  CHECK(L::class_ratio_prior_loss(all_bg, {0.5, 0.5}) == doctest::Approx(expected).epsilon(1e-9));

  CHECK_THROWS_AS(L::class_ratio_prior_loss(p, {0.7, 0.7}), ContractViolation);
  CHECK_THROWS_AS(L::class_ratio_prior_loss(p, {1.2, -0.2}), ContractViolation);
  CHECK_THROWS_AS(L::class_ratio_prior_loss(p, {1.0}), ContractViolation);
}

TEST_CASE("composites: weighted sums of their components") {
  std::mt19937_64 rng(7);
  const auto probs = random_probs(rng, 2, 16);
  const auto labels = random_labels(rng, 2, 16);
  const auto feats = random_features(rng, 3, 16);
  const auto p = prob_map(probs, 4, 4);
  const auto t = mask_from(4, 4, labels);
  const auto f = feature_map(feats, 4, 4);
  const double ce = oracle_cross_entropy(probs, labels);
  const double dice = oracle_dice(probs[1], labels);
  const double ring = oracle_ring(feats, 1.0);
  const double ent = oracle_entropy(probs);

  L::LossWeights w;
  CHECK(L::source_loss(p, t, f, w) == doctest::Approx(ce + dice + ring).epsilon(1e-10));
  w.w_d = 0.0;
  w.w_r = 0.0;
  CHECK(L::source_loss(p, t, f, w) == doctest::Approx(ce).epsilon(1e-10));

  // Type 1: feature norms are ignored entirely.
  L::LossWeights type1;
  type1.w_r = 0.0;
  auto huge = feats;
  for (auto& plane : huge)
    for (auto& v : plane) v *= 1e3;
  CHECK(L::source_loss(p, t, feature_map(huge, 4, 4), type1) == L::source_loss(p, t, f, type1));
  CHECK(L::source_loss(p, t, f, type1) == doctest::Approx(ce + dice).epsilon(1e-10));

  L::LossWeights g;
  CHECK(L::shape_prior_loss(p, t, g) == doctest::Approx(ce + dice).epsilon(1e-10));
  g.w_d_prime = 0.0;
  CHECK(L::shape_prior_loss(p, t, g) == doctest::Approx(ce).epsilon(1e-10));

  L::LossWeights s;
  s.w_r_prime = 0.0;
  CHECK(L::adaptation_loss(p, f, s) == doctest::Approx(ent).epsilon(1e-10));
  L::LossWeights ns;
  CHECK(L::adaptation_loss(p, f, ns) == doctest::Approx(ent + ring).epsilon(1e-10));
}

TEST_CASE("property: composites are exactly linear in their weights") {
  std::mt19937_64 rng(11);
  const auto probs = random_probs(rng, 2, 9);
  const auto labels = random_labels(rng, 2, 9);
  const auto feats = random_features(rng, 2, 9);
  const auto p = prob_map(probs, 3, 3);
  const auto t = mask_from(3, 3, labels);
  const auto f = feature_map(feats, 3, 3);
  const double dice = L::dice_loss(p, t);
  const double ring = L::ring_loss(f, 1.0);
  for (double delta : {0.25, 1.0, 3.5}) {
    L::LossWeights a, b;
    b.w_d = a.w_d + delta;
    CHECK(L::source_loss(p, t, f, b) - L::source_loss(p, t, f, a) == doctest::Approx(delta * dice).epsilon(1e-9));
    b = a;
    b.w_r = a.w_r + delta;
    CHECK(L::source_loss(p, t, f, b) - L::source_loss(p, t, f, a) == doctest::Approx(delta * ring).epsilon(1e-9));
    b = a;
    b.w_d_prime = a.w_d_prime + delta;
    CHECK(L::shape_prior_loss(p, t, b) - L::shape_prior_loss(p, t, a) == doctest::Approx(delta * dice).epsilon(1e-9));
    b = a;
    b.w_r_prime = a.w_r_prime + delta;
    CHECK(L::adaptation_loss(p, f, b) - L::adaptation_loss(p, f, a) == doctest::Approx(delta * ring).epsilon(1e-9));
  }
}

TEST_CASE("loss weights: negative weights and non-positive radius are rejected") {
  L::LossWeights w;
  w.w_d = -1;
  CHECK_THROWS(w.validate());
  w = {};
  w.ring_radius = 0;
  CHECK_THROWS(w.validate());
}

TEST_CASE("tensor forms agree with plain-loop oracles on random small inputs") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 3;
    const int h = 1 + trial % 4, w = 1 + (trial / 4) % 4;
    const int n = h * w;
    const auto probs = random_probs(rng, k, n);
    const auto labels = random_labels(rng, k, n);
    const auto feats = random_features(rng, 1 + trial % 5, n);
    const auto pt = to_tensor4(probs, h, w);
    const auto lt = labels_tensor(labels, h, w);
    CHECK(L::cross_entropy(pt, lt).item<double>() == doctest::Approx(oracle_cross_entropy(probs, labels)).epsilon(1e-12));
    CHECK(L::entropy(pt).item<double>() == doctest::Approx(oracle_entropy(probs)).epsilon(1e-12));
    CHECK(L::ring(to_tensor4(feats, h, w), 1.0).item<double>() == doctest::Approx(oracle_ring(feats, 1.0)).epsilon(1e-12));
    if (k == 2) {
      CHECK(L::soft_dice(pt, lt).item<double>() == doctest::Approx(oracle_dice(probs[1], labels)).epsilon(1e-12));
    }
    std::vector<double> prior(static_cast<size_t>(k), 1.0 / k);
    CHECK(L::class_ratio_prior(pt, prior).item<double>() == doctest::Approx(oracle_kl(prior, probs)).epsilon(1e-10));
  }
}

TEST_CASE("batched tensor forms average per-image values") {
  std::mt19937_64 rng(5);
  const auto a = random_probs(rng, 2, 4), b = random_probs(rng, 2, 4);
  const auto la = random_labels(rng, 2, 4), lb = random_labels(rng, 2, 4);
  auto probs = torch::cat({to_tensor4(a, 2, 2), to_tensor4(b, 2, 2)}, 0);
  auto labels = torch::cat({labels_tensor(la, 2, 2), labels_tensor(lb, 2, 2)}, 0);
  CHECK(L::soft_dice(probs, labels).item<double>() ==
        doctest::Approx((oracle_dice(a[1], la) + oracle_dice(b[1], lb)) / 2).epsilon(1e-12));
  CHECK(L::class_ratio_prior(probs, {0.7, 0.3}).item<double>() ==
        doctest::Approx((oracle_kl({0.7, 0.3}, a) + oracle_kl({0.7, 0.3}, b)) / 2).epsilon(1e-12));
}

TEST_CASE("gradients match central finite differences") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 2, w = 2 + trial % 3, n = h * w;
    const auto probs = to_tensor4(random_probs(rng, 2, n, 0.2), h, w);
    const auto labels = labels_tensor(random_labels(rng, 2, n), h, w);
    const auto feats = to_tensor4(random_features(rng, 3, n), h, w);
    const auto logits = to_tensor4(random_features(rng, 2, n), h, w);

    CHECK(finite_difference_error([&](const torch::Tensor& p) { return L::cross_entropy(p, labels); }, probs) < 1e-3);
    CHECK(finite_difference_error([&](const torch::Tensor& p) { return L::soft_dice(p, labels); }, probs) < 1e-3);
    CHECK(finite_difference_error([&](const torch::Tensor& p) { return L::entropy(p); }, probs) < 1e-3);
    CHECK(finite_difference_error([&](const torch::Tensor& f) { return L::ring(f, 1.0); }, feats) < 1e-3);
    CHECK(finite_difference_error([&](const torch::Tensor& p) { return L::class_ratio_prior(p, {0.8, 0.2}); }, probs) <
          1e-3);
    // Through the softmax, as used in training.
    CHECK(finite_difference_error(
              [&](const torch::Tensor& z) {
                return L::source_loss(torch::softmax(z, 1), labels, feats, L::LossWeights{});
              },
              logits) < 1e-3);
    CHECK(finite_difference_error(
              [&](const torch::Tensor& z) { return L::adaptation_loss(torch::softmax(z, 1), feats, L::LossWeights{}); },
              logits) < 1e-3);
  }
}

TEST_CASE("property: entropy lies in [0, ln K] with the bounds attained") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = 2 + trial % 4;
    const int n = 1 + trial % 16;
    const auto probs = random_probs(rng, k, n);
    const double e = L::entropy_loss(prob_map(probs, 1, n));
    CHECK(e >= 0.0);
    CHECK(e <= std::log(static_cast<double>(k)) + 1e-12);
  }
  for (int k = 2; k <= 5; ++k) {
    const ProbMap uniform(GridShape{k, 2, 2}, std::vector<double>(static_cast<size_t>(4 * k), 1.0 / k));
    CHECK(L::entropy_loss(uniform) == doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));
    std::vector<int> labels = {0, k - 1, 1, 0};
    CHECK(L::entropy_loss(ProbMap::one_hot(mask_from(2, 2, labels, k))) == 0.0);
  }
}

TEST_CASE("property: ring loss is zero iff every positional norm equals R") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = 1 + trial % 6, n = 1 + trial % 16;
    const double radius = 0.5 + 2.0 * u(rng);
    auto feats = random_features(rng, c, n);
    for (int j = 0; j < n; ++j) {
      double sq = 0;
      for (auto& plane : feats) sq += plane[j] * plane[j];
      const double scale = radius / std::sqrt(sq);
      for (auto& plane : feats) plane[j] *= scale;
    }
    const bool on_ring = trial % 2 == 0;
    if (!on_ring) {
      const int j = static_cast<int>(u(rng) * n) % n;
      const double factor = u(rng) < 0.5 ? 1.0 + 1e-3 + u(rng) : 1.0 - 1e-3 - 0.9 * u(rng);
      for (auto& plane : feats) plane[j] *= factor;
    }
    const double loss = L::ring_loss(feature_map(feats, 1, n), radius);
    CHECK(loss >= 0.0);
    if (on_ring) {
      CHECK(loss < 1e-24);
    } else {
      CHECK(loss > 1e-8);
    }
  }
}

TEST_CASE("property: dice loss stays in [0, 1] and decreases as p moves toward t") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 15;
    auto labels = random_labels(rng, 2, n);
    auto probs = random_probs(rng, 2, n);
    double previous = 2.0;
    for (double step : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      Planes moved = probs;
      for (int j = 0; j < n; ++j) {
        moved[1][j] = probs[1][j] + step * (labels[j] - probs[1][j]);
        moved[0][j] = 1.0 - moved[1][j];
      }
      const double d = L::dice_loss(prob_map(moved, 1, n), mask_from(1, n, labels));
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
      CHECK(d <= previous + 1e-12);
      previous = d;
    }
  }
}
