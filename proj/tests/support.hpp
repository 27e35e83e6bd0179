#pragma once

// Plain-loop reference implementations and random generators shared by the
// unit and acceptance tests. Nothing here calls into the library's loss code.

#include <torch/torch.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "sfuda/core.hpp"

namespace sfuda::testing {

inline constexpr double kEps = 1e-7;

// probs[k][j] with j = h * W + w; labels[j].
using Planes = std::vector<std::vector<double>>;

inline double clamp_p(double p) { return std::min(1.0, std::max(kEps, p)); }

inline double oracle_cross_entropy(const Planes& probs, const std::vector<int>& labels) {
  double sum = 0.0;
  for (size_t j = 0; j < labels.size(); ++j) sum -= std::log(clamp_p(probs[static_cast<size_t>(labels[j])][j]));
  return sum / static_cast<double>(labels.size());
}

inline double oracle_dice(const std::vector<double>& p_fg, const std::vector<int>& labels, double smooth = 1.0) {
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (size_t j = 0; j < labels.size(); ++j) {
    const double t = labels[j] == 1 ? 1.0 : 0.0;
    inter += p_fg[j] * t;
    sp += p_fg[j];
    st += t;
  }
  return 1.0 - (2.0 * inter + smooth) / (sp + st + smooth);
}

// features[c][j]
inline double oracle_ring(const Planes& features, double radius) {
  const size_t n = features[0].size();
  double sum = 0.0;
  for (size_t j = 0; j < n; ++j) {
    double sq = 0.0;
    for (const auto& plane : features) sq += plane[j] * plane[j];
    const double d = std::sqrt(sq) - radius;
    sum += d * d;
  }
  return sum / static_cast<double>(n);
}

inline double oracle_entropy(const Planes& probs) {
  const size_t n = probs[0].size();
  double sum = 0.0;
  for (size_t j = 0; j < n; ++j) {
    for (const auto& plane : probs) sum -= plane[j] * std::log(clamp_p(plane[j]));
  }
  return sum / static_cast<double>(n);
}

inline double oracle_kl(const std::vector<double>& prior, const Planes& probs) {
  const size_t n = probs[0].size();
  double kl = 0.0;
  for (size_t k = 0; k < prior.size(); ++k) {
    double mean = 0.0;
    for (double v : probs[k]) mean += v;
    mean /= static_cast<double>(n);
    mean = std::min(1.0 - kEps, std::max(kEps, mean));
    if (prior[k] > 0) kl += prior[k] * std::log(prior[k] / mean);
  }
  return kl;
}

inline std::vector<double> flatten(const Planes& planes) {
  std::vector<double> out;
  for (const auto& p : planes) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline Planes random_probs(std::mt19937_64& rng, int k, int n, double floor = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Planes probs(static_cast<size_t>(k), std::vector<double>(static_cast<size_t>(n)));
  for (int j = 0; j < n; ++j) {
    double total = 0.0;
    for (int c = 0; c < k; ++c) total += probs[c][j] = floor + u(rng);
    for (int c = 0; c < k; ++c) probs[c][j] /= total;
  }
  return probs;
}

inline std::vector<int> random_labels(std::mt19937_64& rng, int k, int n) {
  std::uniform_int_distribution<int> u(0, k - 1);
  std::vector<int> labels(static_cast<size_t>(n));
  for (auto& l : labels) l = u(rng);
  return labels;
}

inline Planes random_features(std::mt19937_64& rng, int c, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Planes f(static_cast<size_t>(c), std::vector<double>(static_cast<size_t>(n)));
  for (auto& plane : f)
    for (auto& v : plane) v = g(rng);
  return f;
}

// Planes -> [1, K, H, W] double tensor.
inline torch::Tensor to_tensor4(const Planes& planes, int64_t h, int64_t w) {
  return torch::tensor(flatten(planes), torch::kFloat64).reshape({1, static_cast<int64_t>(planes.size()), h, w});
}

inline torch::Tensor labels_tensor(const std::vector<int>& labels, int64_t h, int64_t w) {
  std::vector<int64_t> l(labels.begin(), labels.end());
  return torch::tensor(l, torch::kInt64).reshape({1, h, w});
}

/// Max over elements of |analytic - numeric| / max(|numeric|, floor) using
/// central differences of a scalar function of one double tensor.
inline double finite_difference_error(const std::function<torch::Tensor(const torch::Tensor&)>& fn,
                                      const torch::Tensor& x0, double step = 1e-4, double floor = 1e-3) {
  auto x = x0.detach().clone().set_requires_grad(true);
  auto y = fn(x);
  y.backward();
  auto analytic = x.grad().detach().clone().reshape({-1});
  auto flat = x0.detach().clone().reshape({-1});
  double worst = 0.0;
  torch::NoGradGuard no_grad;
  for (int64_t i = 0; i < flat.numel(); ++i) {
    auto plus = flat.clone();
    auto minus = flat.clone();
    plus[i] += step;
    minus[i] -= step;
    const double fp = fn(plus.reshape(x0.sizes())).item<double>();
    const double fm = fn(minus.reshape(x0.sizes())).item<double>();
    const double numeric = (fp - fm) / (2.0 * step);
    const double err = std::abs(analytic[i].item<double>() - numeric) / std::max(std::abs(numeric), floor);
    worst = std::max(worst, err);
  }
  return worst;
}

inline MaskMap mask_from(int64_t h, int64_t w, const std::vector<int>& labels, int32_t k = 2) {
  return MaskMap(h, w, std::vector<int32_t>(labels.begin(), labels.end()), k);
}

}  // namespace sfuda::testing
