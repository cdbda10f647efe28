#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ddtrx/error.hpp"
#include "ddtrx/stats.hpp"

namespace ddtrx {

namespace detail {

inline bool is_constant(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

// Spectral density at frequency zero with a Bartlett window (Newey-West).
inline double spectral_variance0(std::span<const double> x) {
  const auto n = x.size();
  const double m = mean(x);
  const auto lags = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  auto autocov = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t i = k; i < n; ++i) s += (x[i] - m) * (x[i - k] - m);
    return s / static_cast<double>(n);
  };
  double s = autocov(0);
  for (std::size_t k = 1; k <= lags && k < n; ++k)
    s += 2.0 * (1.0 - static_cast<double>(k) / static_cast<double>(lags + 1)) * autocov(k);
  return std::max(s, 0.0);
}

}  // namespace detail

inline constexpr std::size_t kMinGewekeLength = 100;

/// Geweke z-score comparing the means of the first 10% and last 50% of the
/// series, each with a spectral estimate of its variance.
inline double geweke_z(std::span<const double> series) {
  if (series.size() < kMinGewekeLength) throw DomainError("geweke_z needs at least 100 values");
  if (detail::is_constant(series)) throw DomainError("geweke_z of a constant series is undefined");
  const auto n = series.size();
  const auto na = n / 10;
  const auto nb = n / 2;
  const auto a = series.first(na);
  const auto b = series.last(nb);
  const double var = detail::spectral_variance0(a) / static_cast<double>(na) +
                     detail::spectral_variance0(b) / static_cast<double>(nb);
  if (!(var > 0.0)) throw DomainError("geweke_z: both segments are constant");
  return (mean(a) - mean(b)) / std::sqrt(var);
}

inline constexpr std::size_t kMinEssLength = 10;

/// n / (1 + 2 sum rho_t), truncating the sum with Geyer's initial positive
/// sequence; clamped to [1, n].
inline double mcmc_ess(std::span<const double> series) {
  if (series.size() < kMinEssLength) throw DomainError("mcmc_ess needs at least 10 values");
  if (detail::is_constant(series)) throw DomainError("mcmc_ess of a constant series is undefined");
  const auto n = series.size();
  const double m = mean(series);
  auto autocov = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t i = k; i < n; ++i) s += (series[i] - m) * (series[i - k] - m);
    return s / static_cast<double>(n);
  };
  const double g0 = autocov(0);
  double sum_pairs = 0.0;
  for (std::size_t k = 0; k + 1 < n; k += 2) {
    const double pair = (autocov(k) + autocov(k + 1)) / g0;
    if (!(pair > 0.0)) break;
    sum_pairs += pair;
  }
  const double tau = -1.0 + 2.0 * sum_pairs;
  const double ess = static_cast<double>(n) / std::max(tau, 1.0);
  return std::clamp(ess, 1.0, static_cast<double>(n));
}

}  // namespace ddtrx
