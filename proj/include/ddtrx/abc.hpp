#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ddtrx/data_matrix.hpp"
#include "ddtrx/ddt_gen.hpp"
#include "ddtrx/error.hpp"
#include "ddtrx/hclust.hpp"
#include "ddtrx/parallel.hpp"
#include "ddtrx/rng.hpp"
#include "ddtrx/stats.hpp"

namespace ddtrx {

inline constexpr std::array<double, 5> kSummaryQuantiles{0.10, 0.25, 0.50, 0.75, 0.90};

// Percentiles of pairwise row distances, then of leaf merge heights.
using SummaryC = std::array<double, 10>;

/// tr(sum_j x_j x_j^T) / (I J): the mean squared entry.
inline double summary_sigma(const DataMatrix& data) {
  if (data.rows() == 0 || data.cols() == 0) throw DomainError("summary_sigma of an empty matrix");
  return data.values.squaredNorm() / static_cast<double>(data.rows() * data.cols());
}

inline SummaryC summary_c(const DataMatrix& data) {
  if (data.rows() < 3) throw DomainError("summary_c needs at least three rows");
  Eigen::MatrixXd d2 = squared_row_distances(data.values);
  const auto n = d2.rows();
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) dist.push_back(std::sqrt(d2(i, j)));
  const auto heights = leaf_merge_heights(ward_linkage(std::move(d2)));
  const auto a = percentiles(std::move(dist), kSummaryQuantiles);
  const auto b = percentiles(heights, kSummaryQuantiles);
  SummaryC out{};
  std::copy(a.begin(), a.end(), out.begin());
  std::copy(b.begin(), b.end(), out.begin() + 5);
  return out;
}

/// One synthetic dataset reduced to what ABC needs. Also the JSON-lines
/// cache record.
struct SyntheticStats {
  double c = 0.0;
  double sigma2 = 0.0;
  SummaryC s_c{};
  double s_sigma = 0.0;
  std::uint64_t index = 0;
};

inline SyntheticStats synthetic_stats(const SyntheticSpec& spec, RngSeed seed, std::uint64_t index) {
  SyntheticDraw draw = synthetic_draw(spec, seed, index);
  return SyntheticStats{draw.c, draw.sigma2, summary_c(draw.data), summary_sigma(draw.data), index};
}

inline std::vector<SyntheticStats> generate_stats(const SyntheticSpec& spec, std::size_t n, RngSeed seed,
                                                  std::uint64_t first_index = 0) {
  spec.check();
  if (spec.rows < 3) throw DomainError("ABC summaries need I >= 3");
  std::vector<SyntheticStats> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = synthetic_stats(spec, seed, first_index + i); });
  return out;
}

/// Retained ABC draws of one scalar parameter.
struct WeightedSamples {
  std::vector<double> values;
  std::vector<double> weights;
  double bandwidth = 0.0;
  std::vector<double> obs_stat;
  Eigen::MatrixXd stats;             // retained statistics, one row per sample
  std::vector<std::size_t> indices;  // positions in the simulation stream
  std::vector<double> distances;     // standardized distance to obs_stat

  std::size_t size() const { return values.size(); }
};

inline constexpr std::size_t kMinAbcSamples = 10;

inline std::size_t abc_keep_count(std::size_t n, double d) {
  if (!(d > 0.0 && d <= 1.0)) throw DomainError("ABC threshold d must lie in (0, 1]");
  const double raw = static_cast<double>(n) * d;
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * raw));
  return std::min(std::max<std::size_t>(k, 1), n);
}

/// Epanechnikov weight 1 - (x/h)^2 on [0, h].
inline double epanechnikov(double x, double h) {
  const double r = x / h;
  return r < 1.0 ? 1.0 - r * r : 0.0;
}

/// Rejection step. Each statistic coordinate is divided by its median absolute
/// deviation over the whole stream before taking Euclidean distances; the
/// k = ceil(N d) nearest draws are kept and weighted with an Epanechnikov
/// kernel whose bandwidth is the largest kept distance.
inline WeightedSamples abc_reject(std::span<const double> obs_stat, const Eigen::MatrixXd& stats,
                                  std::span<const double> thetas, double d) {
  const auto n = static_cast<std::size_t>(stats.rows());
  const auto dim = static_cast<std::size_t>(stats.cols());
  if (thetas.size() != n) throw DomainError("abc_reject: parameter and statistic counts differ");
  if (obs_stat.size() != dim) throw DomainError("abc_reject: observed statistic has the wrong dimension");
  const std::size_t k = abc_keep_count(n, d);
  if (k < kMinAbcSamples)
    throw DomainError("abc_reject: only " + std::to_string(k) + " samples kept; need at least " +
                      std::to_string(kMinAbcSamples) + " (raise d or N^syn)");

  std::vector<double> scale(dim, 1.0);
  for (std::size_t c = 0; c < dim; ++c) {
    std::vector<double> column(n);
    for (std::size_t r = 0; r < n; ++r) column[r] = stats(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    double mad = median_abs_deviation(column);
    if (!(mad > 0.0)) {
      const double m = mean(column);
      mad = 0.0;
      for (double x : column) mad += std::abs(x - m);
      mad /= static_cast<double>(n);
    }
    if (mad > 0.0 && std::isfinite(mad)) scale[c] = mad;
  }

  std::vector<double> dist(n);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double z = (stats(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) - obs_stat[c]) / scale[c];
      s += z * z;
    }
    dist[r] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto closer = [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), closer);
  order.resize(k);

  WeightedSamples ws;
  ws.obs_stat.assign(obs_stat.begin(), obs_stat.end());
  ws.bandwidth = dist[order.back()];
  ws.stats.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t r = order[i];
    ws.indices.push_back(r);
    ws.values.push_back(thetas[r]);
    ws.distances.push_back(dist[r]);
    const double w = ws.bandwidth > 0.0 ? epanechnikov(dist[r], ws.bandwidth) : 0.0;
    ws.weights.push_back(w);
    total += w;
    ws.stats.row(static_cast<Eigen::Index>(i)) = stats.row(static_cast<Eigen::Index>(r));
  }
  if (!(total > 0.0))
    throw DegenerateKernelError("abc_reject: every kept distance equals the bandwidth; raise d or N^syn");
  return ws;
}

struct AdjustResult {
  std::vector<double> values;              // adjusted parameter values, aligned with the input samples
  std::vector<double> beta;                // slope per statistic column; 0 for dropped columns
  double intercept = 0.0;                  // m(S_obs) on the log scale
  std::vector<std::size_t> dropped_columns;
  std::vector<std::string> warnings;
};

/// Local-linear regression adjustment on log(theta): fit
/// log theta_l ~ alpha + beta^T (S_l - S_obs) by kernel-weighted least squares
/// and return exp(log theta_l - beta^T (S_l - S_obs)). Collinear statistic
/// columns are dropped with a warning.
inline AdjustResult regression_adjust(const WeightedSamples& ws) {
  const auto k = ws.values.size();
  const auto dim = static_cast<std::size_t>(ws.stats.cols());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < k; ++i)
    if (ws.weights[i] > 0.0) rows.push_back(i);
  if (rows.size() < kMinAbcSamples) throw DomainError("regression_adjust: fewer than 10 positively weighted samples");
  for (double v : ws.values)
    if (!(v > 0.0)) throw DomainError("regression_adjust: parameter values must be positive");

  AdjustResult out;
  out.beta.assign(dim, 0.0);

  // Centered statistics, scaled per column for conditioning.
  Eigen::MatrixXd centered(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t c = 0; c < dim; ++c)
      centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          ws.stats(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) - ws.obs_stat[c];
  std::vector<std::size_t> kept;
  std::vector<double> col_scale(dim, 1.0);
  for (std::size_t c = 0; c < dim; ++c) {
    double s = 0.0;
    for (std::size_t i : rows) s = std::max(s, std::abs(centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c))));
    if (s > 0.0 && std::isfinite(s)) {
      col_scale[c] = s;
      kept.push_back(c);
    } else {
      out.dropped_columns.push_back(c);
      out.warnings.push_back("statistic column " + std::to_string(c) + " is constant over the kept samples; dropped");
    }
  }

  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd y(m);
  Eigen::VectorXd sw(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    sw(r) = std::sqrt(ws.weights[rows[static_cast<std::size_t>(r)]]);
    y(r) = sw(r) * std::log(ws.values[rows[static_cast<std::size_t>(r)]]);
  }

  Eigen::VectorXd coef;
  for (;;) {
    const auto p = static_cast<Eigen::Index>(kept.size()) + 1;
    Eigen::MatrixXd design(m, p);
    for (Eigen::Index r = 0; r < m; ++r) {
      design(r, 0) = sw(r);
      for (std::size_t j = 0; j < kept.size(); ++j)
        design(r, static_cast<Eigen::Index>(j) + 1) =
            sw(r) * centered(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]),
                             static_cast<Eigen::Index>(kept[j])) /
            col_scale[kept[j]];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() == p) {
      coef = qr.solve(y);
      break;
    }
    // Keep the pivoted columns inside the numerical rank; always keep the intercept.
    std::vector<char> keep_col(static_cast<std::size_t>(p), 0);
    keep_col[0] = 1;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index r = 0; r < qr.rank(); ++r) keep_col[static_cast<std::size_t>(perm(r))] = 1;
    std::vector<std::size_t> next;
    for (std::size_t j = 0; j < kept.size(); ++j) {
      if (keep_col[j + 1]) {
        next.push_back(kept[j]);
      } else {
        out.dropped_columns.push_back(kept[j]);
        out.warnings.push_back("statistic column " + std::to_string(kept[j]) + " is collinear; dropped");
      }
    }
    if (next.size() == kept.size()) next.pop_back();
    kept = std::move(next);
  }
  std::sort(out.dropped_columns.begin(), out.dropped_columns.end());

  out.intercept = coef(0);
  for (std::size_t j = 0; j < kept.size(); ++j) out.beta[kept[j]] = coef(static_cast<Eigen::Index>(j) + 1) / col_scale[kept[j]];
  out.values.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    double shift = 0.0;
    for (std::size_t c = 0; c < dim; ++c) shift += out.beta[c] * centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    out.values[i] = std::exp(std::log(ws.values[i]) - shift);
  }
  return out;
}

/// Weighted quantile with linear interpolation. Sorted sample i sits at
/// cumulative position (W_i - w_i/2 - w_1/2) / (1 - w_1/2 - w_n/2) over the
/// positively weighted values, so equal weights reproduce percentile().
inline double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("weighted_quantile: q outside [0,1]");
  if (values.size() != weights.size()) throw DomainError("weighted_quantile: length mismatch");
  std::vector<std::pair<double, double>> pts;
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (weights[i] < 0.0) throw DomainError("weighted_quantile: negative weight");
    if (weights[i] > 0.0) {
      pts.emplace_back(values[i], weights[i]);
      total += weights[i];
    }
  }
  if (!(total > 0.0)) throw DomainError("weighted_quantile: no positive weight");
  if (pts.size() == 1) return pts.front().first;
  std::sort(pts.begin(), pts.end());
  const double first = pts.front().second / total;
  const double last = pts.back().second / total;
  const double span = 1.0 - 0.5 * first - 0.5 * last;
  double cum = 0.0;
  double prev_pos = 0.0;
  double prev_val = pts.front().first;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double w = pts[i].second / total;
    cum += w;
    const double pos = i + 1 == pts.size() ? 1.0 : (cum - 0.5 * w - 0.5 * first) / span;
    if (q <= pos) {
      if (i == 0 || pos <= prev_pos) return pts[i].first;
      return prev_val + (q - prev_pos) / (pos - prev_pos) * (pts[i].first - prev_val);
    }
    prev_pos = pos;
    prev_val = pts[i].first;
  }
  return pts.back().first;
}

inline double weighted_quantile(const WeightedSamples& ws, double q) { return weighted_quantile(ws.values, ws.weights, q); }

/// 1 / sum of squared normalized weights.
inline double abc_ess(std::span<const double> weights) {
  double total = 0.0, sq = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw DomainError("abc_ess: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw DomainError("abc_ess: all weights are zero");
  for (double w : weights) sq += (w / total) * (w / total);
  return 1.0 / sq;
}

struct PosteriorSummary {
  double median = 0.0;
  double lower = 0.0;  // 2.5%
  double upper = 0.0;  // 97.5%
};

inline PosteriorSummary summarize_posterior(std::span<const double> values, std::span<const double> weights) {
  return {weighted_quantile(values, weights, 0.5), weighted_quantile(values, weights, 0.025),
          weighted_quantile(values, weights, 0.975)};
}

/// Rejection, weighting and adjustment for one parameter.
struct AbcParameterResult {
  WeightedSamples samples;  // unadjusted
  AdjustResult adjusted;
  PosteriorSummary summary;  // of the adjusted values
  double ess = 0.0;
};

enum class AbcParameter { c, sigma2 };

struct AbcResult {
  AbcParameterResult c;
  AbcParameterResult sigma2;
};

namespace detail {

inline AbcParameterResult abc_parameter(std::span<const double> obs, const Eigen::MatrixXd& stats,
                                        std::span<const double> thetas, double d) {
  AbcParameterResult r;
  r.samples = abc_reject(obs, stats, thetas, d);
  r.adjusted = regression_adjust(r.samples);
  r.summary = summarize_posterior(r.adjusted.values, r.samples.weights);
  r.ess = abc_ess(r.samples.weights);
  return r;
}

}  // namespace detail

// Statistic matrices for both parameters, one row per pool entry.
struct StatTable {
  Eigen::MatrixXd s_c;
  Eigen::MatrixXd s_sigma;
  std::vector<double> c;
  std::vector<double> sigma2;

  static StatTable from(std::span<const SyntheticStats> pool) {
    StatTable t;
    const auto n = static_cast<Eigen::Index>(pool.size());
    t.s_c.resize(n, 10);
    t.s_sigma.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& s = pool[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < 10; ++j) t.s_c(i, j) = s.s_c[static_cast<std::size_t>(j)];
      t.s_sigma(i, 0) = s.s_sigma;
      t.c.push_back(s.c);
      t.sigma2.push_back(s.sigma2);
    }
    return t;
  }
};

inline AbcResult run_abc(const SummaryC& obs_c, double obs_sigma, const StatTable& table, double d) {
  AbcResult out;
  out.c = detail::abc_parameter(obs_c, table.s_c, table.c, d);
  const std::array<double, 1> obs_s{obs_sigma};
  out.sigma2 = detail::abc_parameter(obs_s, table.s_sigma, table.sigma2, d);
  return out;
}

inline AbcResult run_abc(const DataMatrix& obs, const StatTable& table, double d) {
  return run_abc(summary_c(obs), summary_sigma(obs), table, d);
}

// ---------------------------------------------------------------------------
// Coverage calibration

enum class CalibrationVariant {
  standard,
  shuffled_truths,  // negative control: each pseudo-observation is scored against another set's truth
};

struct CalibrationParameterReport {
  double ks_stat = 0.0;
  double p_value = 0.0;
  double coverage_95 = 0.0;
  std::vector<double> q;  // q_e per pseudo-observed dataset
};

struct CalibrationReport {
  CalibrationParameterReport c;
  CalibrationParameterReport sigma2;
  std::size_t E = 0;
  std::size_t k = 0;
};

inline constexpr std::size_t kMinCalibrationSets = 50;

/// Splits a prior-predictive pool into N^syn training and E pseudo-observed
/// sets, runs ABC on each pseudo-observed set, and tests
/// q_e = sum_l w_l 1{theta_l > theta_e} (normalized weights) for uniformity.
inline CalibrationReport calibrate(std::span<const SyntheticStats> pool, std::size_t nsyn, double d, std::size_t E,
                                   RngSeed seed, CalibrationVariant variant = CalibrationVariant::standard) {
  if (E < kMinCalibrationSets) throw DomainError("calibrate: E must be at least 50");
  if (pool.size() < nsyn + E) throw DomainError("calibrate: pool too small for N^syn + E");
  std::vector<std::size_t> perm(pool.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  std::vector<SyntheticStats> train, test;
  for (std::size_t i = 0; i < nsyn; ++i) train.push_back(pool[perm[i]]);
  for (std::size_t i = nsyn; i < nsyn + E; ++i) test.push_back(pool[perm[i]]);
  const StatTable table = StatTable::from(train);

  CalibrationReport report;
  report.E = E;
  report.k = abc_keep_count(nsyn, d);
  report.c.q.resize(E);
  report.sigma2.q.resize(E);
  std::vector<char> cover_c(E), cover_s(E);
  parallel_for(E, [&](std::size_t e) {
    const auto& obs = test[e];
    const auto& truth = variant == CalibrationVariant::shuffled_truths ? test[(e + 1) % E] : obs;
    auto one = [&](std::span<const double> o, const Eigen::MatrixXd& stats, std::span<const double> th,
                   double truth, double& q, char& covered) {
      const WeightedSamples ws = abc_reject(o, stats, th, d);
      const std::vector<double> values = regression_adjust(ws).values;
      double total = 0.0, above = 0.0;
      for (std::size_t l = 0; l < values.size(); ++l) {
        total += ws.weights[l];
        if (values[l] > truth) above += ws.weights[l];
      }
      q = above / total;
      const auto s = summarize_posterior(values, ws.weights);
      covered = truth >= s.lower && truth <= s.upper;
    };
    one(obs.s_c, table.s_c, table.c, truth.c, report.c.q[e], cover_c[e]);
    const std::array<double, 1> os{obs.s_sigma};
    one(os, table.s_sigma, table.sigma2, truth.sigma2, report.sigma2.q[e], cover_s[e]);
  });
  auto finish = [&](CalibrationParameterReport& r, const std::vector<char>& cover) {
    r.ks_stat = ks_statistic(r.q, [](double x) { return std::clamp(x, 0.0, 1.0); });
    r.p_value = ks_p_value(r.ks_stat, E);
    r.coverage_95 = static_cast<double>(std::count(cover.begin(), cover.end(), 1)) / static_cast<double>(E);
  };
  finish(report.c, cover_c);
  finish(report.sigma2, cover_s);
  return report;
}

}  // namespace ddtrx
