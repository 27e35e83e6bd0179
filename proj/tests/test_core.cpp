#include "doctest_torch.hpp"

#include <cmath>
#include <random>

#include "sfuda/core.hpp"
#include "sfuda/tensors.hpp"
#include "support.hpp"

using namespace sfuda;
using namespace sfuda::testing;

namespace {

double oracle_set_dice(const std::vector<int>& a, const std::vector<int>& b) {
  int inter = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    na += a[i] == 1;
    nb += b[i] == 1;
    inter += a[i] == 1 && b[i] == 1;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * inter / (na + nb);
}

}  // namespace

TEST_CASE("dice coefficient: worked values") {
  const auto m = mask_from(2, 3, {0, 1, 1, 0, 1, 0});
  CHECK(dice_coefficient(m, m) == 1.0);

  CHECK(dice_coefficient(mask_from(1, 4, {1, 1, 0, 0}), mask_from(1, 4, {0, 0, 1, 1})) == 0.0);
  CHECK(dice_coefficient(mask_from(1, 4, {1, 1, 0, 0}), mask_from(1, 4, {0, 1, 1, 0})) == doctest::Approx(0.5));
  CHECK(dice_coefficient(mask_from(2, 2, {0, 0, 0, 0}), mask_from(2, 2, {0, 0, 0, 0})) == 1.0);
}

TEST_CASE("dice coefficient: shape mismatch is a contract violation") {
  CHECK_THROWS_AS(dice_coefficient(mask_from(1, 4, {0, 1, 0, 1}), mask_from(2, 2, {0, 1, 0, 1})), ContractViolation);
}

TEST_CASE("property: dice coefficient is symmetric and matches a set-count oracle") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 300; ++trial) {
    const int h = 1 + trial % 5, w = 1 + trial % 7;
    const auto a = random_labels(rng, 2, h * w), b = random_labels(rng, 2, h * w);
    const auto ma = mask_from(h, w, a), mb = mask_from(h, w, b);
    const double ab = dice_coefficient(ma, mb);
    CHECK(ab == dice_coefficient(mb, ma));
    CHECK(ab == doctest::Approx(oracle_set_dice(a, b)).epsilon(1e-12));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    if (ma.count(1) > 0) CHECK(dice_coefficient(ma, ma) == 1.0);
  }
}

TEST_CASE("binarize: threshold boundary is inclusive") {
  const ProbMap half(GridShape{2, 2, 2}, std::vector<double>(8, 0.5));
  const auto ones = binarize(half);
  CHECK(ones.count(1) == 4);

  std::vector<double> zeros_fg(8, 0.0);
  for (int i = 0; i < 4; ++i) zeros_fg[static_cast<size_t>(i)] = 1.0;
  CHECK(binarize(ProbMap(GridShape{2, 2, 2}, zeros_fg)).count(1) == 0);

  // Checkerboard of 0.4 / 0.6 on the foreground channel.
  std::vector<double> probs(8);
  for (int j = 0; j < 4; ++j) {
    const double fg = (j / 2 + j % 2) % 2 == 0 ? 0.4 : 0.6;
    probs[static_cast<size_t>(4 + j)] = fg;
    probs[static_cast<size_t>(j)] = 1.0 - fg;
  }
  CHECK(binarize(ProbMap(GridShape{2, 2, 2}, probs)) == mask_from(2, 2, {0, 1, 1, 0}));
}

TEST_CASE("binarize: unsupported class count and invalid thresholds") {
  const ProbMap three(GridShape{3, 1, 1}, {0.2, 0.3, 0.5});
  CHECK_THROWS_AS(binarize(three), ConfigError);
  const ProbMap two(GridShape{2, 1, 1}, {0.5, 0.5});
  CHECK_THROWS(binarize(two, 0.0));
  CHECK_THROWS(binarize(two, 1.0));
}

TEST_CASE("raster invariants are enforced at construction") {
  CHECK_THROWS_AS(ProbMap(GridShape{2, 1, 1}, {0.5, 0.6}), ContractViolation);
  CHECK_NOTHROW(ProbMap(GridShape{2, 1, 1}, {0.5, 0.5 + 5e-6}));
  CHECK_THROWS_AS(Image2D(GridShape{2, 1, 1}, {0.f, 0.f}), ContractViolation);
  CHECK_THROWS_AS(Image2D(GridShape{1, 1, 1}, {std::nanf("")}), ContractViolation);
  CHECK_THROWS_AS(FeatureMap(GridShape{1, 1, 1}, {INFINITY}), ContractViolation);
  CHECK_THROWS_AS(MaskMap(1, 2, {0, 2}, 2), ContractViolation);
  CHECK_THROWS_AS(FeatureMap(GridShape{0, 1, 1}, {}), ContractViolation);
}

TEST_CASE("one-hot lift and tensor round trips") {
  const auto m = mask_from(2, 2, {0, 1, 1, 0});
  const auto hot = ProbMap::one_hot(m);
  CHECK(hot.at(1, 0, 1) == 1.0);
  CHECK(hot.at(0, 0, 1) == 0.0);
  CHECK(binarize(hot) == m);

  CHECK(mask_from_tensor(to_tensor(m)[0]) == m);
  const auto back = prob_map_from_tensor(to_tensor(hot)[0]);
  CHECK(std::equal(back.values().begin(), back.values().end(), hot.values().begin()));

  const Image2D img(GridShape{1, 2, 2}, {0.f, 1.f, 2.f, 3.f});
  const auto t = to_tensor(img);
  CHECK(t.sizes() == torch::IntArrayRef({1, 1, 2, 2}));
  const auto img_back = image_from_tensor(t[0]);
  CHECK(std::equal(img_back.values().begin(), img_back.values().end(), img.values().begin()));
}

TEST_CASE("domain tags parse and print") {
  CHECK(parse_domain("source") == Domain::source);
  CHECK(to_string(Domain::target) == "target");
  CHECK_THROWS(parse_domain("elsewhere"));
}
