#pragma once

#include "coldguess/graph.hpp"
#include "coldguess/tensor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coldguess {

/// ROC-AUC by the Mann-Whitney rank statistic with average ranks for ties,
/// i.e. (concordant + 0.5 * tied) / (P * N). Empty when the labels hold a
/// single class.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: scores and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("roc_auc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  for (double s : scores)
    if (std::isnan(s)) throw std::invalid_argument("roc_auc: NaN score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the positive rank sum keeps average ranks integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t positives = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) positives += static_cast<std::uint64_t>(labels[order[j++]]);
    twice_rank_sum += positives * static_cast<std::uint64_t>(i + 1 + j);  // ranks i+1..j average to (i+1+j)/2
    i = j;
  }
  // 2U = 2R - P(P+1) = 2 * concordant + tied
  const std::uint64_t twice_u = twice_rank_sum - static_cast<std::uint64_t>(pos) * (pos + 1);
  return static_cast<double>(twice_u) / 2.0 / (static_cast<double>(pos) * static_cast<double>(neg));
}

inline std::optional<double> roc_auc(std::span<const float> scores, std::span<const int> labels) {
  std::vector<double> s(scores.begin(), scores.end());
  return roc_auc(std::span<const double>(s), labels);
}

/// (prod auc_i)^(1/n); empty if any entry is undefined or not positive.
inline std::optional<double> geometric_mean_auc(std::span<const std::optional<double>> aucs) {
  if (aucs.empty()) return std::nullopt;
  double log_sum = 0.0;
  for (const auto& a : aucs) {
    if (!a || !(*a > 0.0)) return std::nullopt;
    log_sum += std::log(*a);
  }
  return std::exp(log_sum / static_cast<double>(aucs.size()));
}

struct EvalReport {
  std::string scenario;
  std::size_t listings = 0;
  std::uint64_t seed = 0;
  std::vector<std::optional<double>> auc;        // per class
  std::vector<std::optional<double>> delta_pcp;  // per class, vs. the baseline when given
  std::optional<double> gmean;
  std::optional<double> gmean_delta_pcp;
};

/// Rounds to 0.1 percentage point.
inline double round_pcp(double pcp) { return std::round(pcp * 10.0) / 10.0; }

/// One-vs-rest AUC per class of a |L| x C score matrix.
inline EvalReport per_class_report(const Matrix<float>& scores, const Matrix<float>& labels,
                                   const EvalReport* baseline = nullptr) {
  if (!scores.same_shape(labels)) throw ShapeError("per_class_report: scores and labels differ in shape");
  EvalReport r;
  r.listings = scores.rows;
  std::vector<double> s(scores.rows);
  std::vector<int> z(scores.rows);
  for (std::size_t c = 0; c < scores.cols; ++c) {
    for (std::size_t i = 0; i < scores.rows; ++i) {
      s[i] = scores(i, c);
      z[i] = labels(i, c) != 0.0f ? 1 : 0;
    }
    r.auc.push_back(roc_auc(std::span<const double>(s), std::span<const int>(z)));
  }
  r.gmean = geometric_mean_auc(r.auc);
  if (baseline) {
    if (baseline->auc.size() != r.auc.size()) throw ShapeError("per_class_report: baseline has a different class count");
    for (std::size_t c = 0; c < r.auc.size(); ++c) {
      const auto& a = r.auc[c];
      const auto& b = baseline->auc[c];
      r.delta_pcp.push_back(a && b ? std::optional<double>(round_pcp(100.0 * (*a - *b))) : std::nullopt);
    }
    if (r.gmean && baseline->gmean) r.gmean_delta_pcp = round_pcp(100.0 * (*r.gmean - *baseline->gmean));
  }
  return r;
}

// Scaling benchmark

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_linear: need at least two paired points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_linear: x values are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.slope * x[i] + f.intercept);
    sse += e * e;
  }
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return f;
}

enum class BenchTask { train_epoch, inference };

inline const char* to_string(BenchTask t) { return t == BenchTask::train_epoch ? "train_epoch" : "inference"; }

struct BenchPoint {
  std::size_t requested_edges = 0;
  std::size_t edges = 0;     // edges of the graph actually built
  double seconds = 0.0;      // median over repeats
};

struct BenchResult {
  std::vector<BenchPoint> points;
  LinearFit fit;
};

/// Slope of log(seconds) against log(edges): 1 for linear growth, 2 for quadratic.
inline double growth_exponent(const BenchResult& r) {
  std::vector<double> x, y;
  for (const auto& p : r.points) {
    x.push_back(std::log(static_cast<double>(p.edges)));
    y.push_back(std::log(p.seconds));
  }
  return fit_linear(x, y).slope;
}

struct BenchOptions {
  std::size_t warmup = 1;
  std::size_t repeats = 3;
  /// Shortest timing accepted for the smallest size, as a multiple of the
  /// clock's tick.
  double min_ticks = 1000.0;
};

/// A prepared workload: the edge count it covers and a callable that runs it once.
struct BenchWorkload {
  std::size_t edges = 0;
  std::function<void()> run;
};

inline void check_bench_sizes(std::span<const std::size_t> sizes) {
  if (sizes.size() < 4) throw std::invalid_argument("scaling_benchmark: need at least 4 sizes");
  std::set<std::size_t> seen;
  for (std::size_t s : sizes) {
    if (s == 0) throw std::invalid_argument("scaling_benchmark: sizes must be positive");
    if (!seen.insert(s).second) throw std::invalid_argument("scaling_benchmark: duplicate size " + std::to_string(s));
  }
  if (*seen.rbegin() < 8 * *seen.begin()) throw std::invalid_argument("scaling_benchmark: sizes must span at least 8x");
}

/// Times `setup(size).run` for every size (warm-up runs first, then the
/// median of `repeats`) and fits time against edge count.
inline BenchResult scaling_benchmark(std::span<const std::size_t> sizes,
                                     const std::function<BenchWorkload(std::size_t)>& setup, const BenchOptions& options = {}) {
  check_bench_sizes(sizes);
  if (options.repeats == 0) throw std::invalid_argument("scaling_benchmark: repeats must be positive");
  using clock = std::chrono::steady_clock;
  const double tick = static_cast<double>(clock::period::num) / static_cast<double>(clock::period::den);
  BenchResult result;
  std::vector<double> x, y;
  for (std::size_t size : sizes) {
    BenchWorkload w = setup(size);
    for (std::size_t i = 0; i < options.warmup; ++i) w.run();
    std::vector<double> t;
    for (std::size_t i = 0; i < options.repeats; ++i) {
      const auto t0 = clock::now();
      w.run();
      t.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    }
    std::sort(t.begin(), t.end());
    const double median = t[t.size() / 2];
    if (median < options.min_ticks * tick)
      throw std::invalid_argument("scaling_benchmark: size " + std::to_string(size) + " runs in " + std::to_string(median) +
                                  " s, too close to the timer resolution");
    result.points.push_back({size, w.edges, median});
    x.push_back(static_cast<double>(w.edges));
    y.push_back(median);
  }
  result.fit = fit_linear(x, y);
  return result;
}

}  // namespace coldguess
