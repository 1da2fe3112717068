#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "topicaudit/common.hpp"
#include "topicaudit/lda.hpp"

namespace topicaudit {

enum class QueryStatisticKind { log_likelihood, neg_entropy, logit_max_posterior, std_dev };

inline const char* to_string(QueryStatisticKind kind) {
  switch (kind) {
    case QueryStatisticKind::log_likelihood: return "log_likelihood";
    case QueryStatisticKind::neg_entropy: return "neg_entropy";
    case QueryStatisticKind::logit_max_posterior: return "logit_max_posterior";
    case QueryStatisticKind::std_dev: return "std_dev";
  }
  return "unknown";
}

inline QueryStatisticKind statistic_from_string(const std::string& name) {
  if (name == "log_likelihood") return QueryStatisticKind::log_likelihood;
  if (name == "neg_entropy") return QueryStatisticKind::neg_entropy;
  if (name == "logit_max_posterior") return QueryStatisticKind::logit_max_posterior;
  if (name == "std_dev") return QueryStatisticKind::std_dev;
  throw Error("unknown query statistic \"" + name + "\"");
}

constexpr std::array<QueryStatisticKind, 4> kAllStatistics = {
    QueryStatisticKind::log_likelihood, QueryStatisticKind::neg_entropy,
    QueryStatisticKind::logit_max_posterior, QueryStatisticKind::std_dev};

// Scalar statistic of a fitted mixture. `zeta` is the attained log-likelihood
// (used by the log_likelihood kind). `clamped` reports the logit vertex clamp.
inline double statistic_from_theta(QueryStatisticKind kind, const TopicMixture& theta,
                                   double zeta, bool* clamped = nullptr) {
  switch (kind) {
    case QueryStatisticKind::log_likelihood:
      return zeta;
    case QueryStatisticKind::neg_entropy: {
      double s = 0.0;
      for (double t : theta.weights)
        if (t > 0.0) s += t * std::log(t);
      return s;
    }
    case QueryStatisticKind::logit_max_posterior: {
      double m = *std::max_element(theta.weights.begin(), theta.weights.end());
      if (m >= 1.0 - 1e-12) {
        m = 1.0 - 1e-12;
        if (clamped) *clamped = true;
      }
      require(m > 0.0, "logit_max_posterior: max posterior must be positive");
      return std::log(m / (1.0 - m));
    }
    case QueryStatisticKind::std_dev: {
      const double k = static_cast<double>(theta.weights.size());
      double mean = 0.0;
      for (double t : theta.weights) mean += t;
      mean /= k;
      double ss = 0.0;
      for (double t : theta.weights) ss += (t - mean) * (t - mean);
      return std::sqrt(ss / k);  // population standard deviation
    }
  }
  throw Error("statistic_from_theta: unknown kind");
}

inline double query_statistic(QueryStatisticKind kind, const TopicModel& model, const Document& d,
                              double tol = 1e-8, int max_iter = 1000, bool* clamped = nullptr) {
  require(!d.counts.empty(), "query_statistic: empty document");
  const auto [theta, zeta] = estimate_theta(model, d, tol, max_iter);
  return statistic_from_theta(kind, theta, zeta, clamped);
}

// All four statistics from a single theta fit, indexed as kAllStatistics.
inline std::array<double, 4> all_query_statistics(const TopicModel& model, const Document& d,
                                                  double tol = 1e-8, int max_iter = 1000) {
  require(!d.counts.empty(), "all_query_statistics: empty document");
  const auto [theta, zeta] = estimate_theta(model, d, tol, max_iter);
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < kAllStatistics.size(); ++i)
    out[i] = statistic_from_theta(kAllStatistics[i], theta, zeta);
  return out;
}

struct NormalFit {
  double mean = 0.0;
  double variance = kVarianceFloor;
  std::size_t n = 0;

  static constexpr double kVarianceFloor = 1e-12;

  double stddev() const { return std::sqrt(variance); }
};

inline NormalFit fit_normal(const std::vector<double>& samples) {
  require(samples.size() >= 2, "fit_normal: need at least 2 samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  NormalFit fit;
  fit.mean = mean;
  fit.variance = std::max(ss / (n - 1.0), NormalFit::kVarianceFloor);
  fit.n = samples.size();
  return fit;
}

// Closed-form KL(N_a || N_b); non-negative by construction.
inline double kl_normal(const NormalFit& a, const NormalFit& b) {
  require(a.variance >= NormalFit::kVarianceFloor && b.variance >= NormalFit::kVarianceFloor,
          "kl_normal: variance below floor");
  const double dm = a.mean - b.mean;
  const double kl =
      0.5 * std::log(b.variance / a.variance) + (a.variance + dm * dm) / (2.0 * b.variance) - 0.5;
  return kl > 0.0 ? kl : 0.0;
}

namespace detail {

inline double poly(const double* c, int n, double x) {
  double r = c[0];
  double p = 1.0;
  for (int i = 1; i < n; ++i) {
    p *= x;
    r += c[i] * p;
  }
  return r;
}

}  // namespace detail

// Shapiro-Wilk normality test, Royston's 1995 approximation (AS R94).
// Returns the p-value; `w_out` receives the W statistic when non-null.
inline double shapiro_wilk(const std::vector<double>& samples, double* w_out = nullptr) {
  const std::size_t n = samples.size();
  require(n >= 3 && n <= 5000, "shapiro_wilk: n must be in [3, 5000]");
  std::vector<double> x = samples;
  std::sort(x.begin(), x.end());
  require(x.back() > x.front(), "shapiro_wilk: sample is constant (W undefined)");

  const double an = static_cast<double>(n);
  std::vector<double> a(n, 0.0);
  if (n == 3) {
    const double s = std::sqrt(0.5);
    a[0] = -s;
    a[2] = s;
  } else {
    // Expected normal order statistics (Blom approximation), upper weights
    // corrected per Royston's polynomials.
    std::vector<double> mvals(n);
    double m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mvals[i] = inverse_normal_cdf((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
      m2 += mvals[i] * mvals[i];
    }
    const double rm2 = std::sqrt(m2);
    const double u = 1.0 / std::sqrt(an);
    static const double c1[6] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
    static const double c2[6] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    const double a_n = mvals[n - 1] / rm2 + detail::poly(c1, 6, u);
    if (n > 5) {
      const double a_n1 = mvals[n - 2] / rm2 + detail::poly(c2, 6, u);
      const double phi = (m2 - 2.0 * mvals[n - 1] * mvals[n - 1] - 2.0 * mvals[n - 2] * mvals[n - 2]) /
                         (1.0 - 2.0 * a_n * a_n - 2.0 * a_n1 * a_n1);
      const double rphi = std::sqrt(phi);
      a[n - 1] = a_n;
      a[n - 2] = a_n1;
      a[0] = -a_n;
      a[1] = -a_n1;
      for (std::size_t i = 2; i < n - 2; ++i) a[i] = mvals[i] / rphi;
    } else {
      const double phi = (m2 - 2.0 * mvals[n - 1] * mvals[n - 1]) / (1.0 - 2.0 * a_n * a_n);
      const double rphi = std::sqrt(phi);
      a[n - 1] = a_n;
      a[0] = -a_n;
      for (std::size_t i = 1; i < n - 1; ++i) a[i] = mvals[i] / rphi;
    }
  }

  double mean = 0.0;
  for (double xi : x) mean += xi;
  mean /= an;
  double ssq = 0.0, num = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ssq += (x[i] - mean) * (x[i] - mean);
    num += a[i] * x[i];
  }
  double w = num * num / ssq;
  if (w > 1.0) w = 1.0;
  if (w_out) *w_out = w;

  double p;
  if (n == 3) {
    constexpr double kPi6 = 1.90985931710274;    // 6/pi
    constexpr double kStqr = 1.04719755119660;   // asin(sqrt(3/4))
    p = kPi6 * (std::asin(std::sqrt(w)) - kStqr);
    p = std::min(std::max(p, 0.0), 1.0);
  } else if (n <= 11) {
    const double gamma = -2.273 + 0.459 * an;
    const double y = std::log1p(-w);
    if (y >= gamma) return 0.0;  // w below the approximation's support: decisively non-normal
    const double yy = -std::log(gamma - y);
    static const double c3[4] = {0.5440, -0.39978, 0.025054, -0.6714e-3};
    static const double c4[4] = {1.3822, -0.77857, 0.062767, -0.20322e-2};
    const double mu = detail::poly(c3, 4, an);
    const double sigma = std::exp(detail::poly(c4, 4, an));
    p = 1.0 - normal_cdf((yy - mu) / sigma);
  } else {
    const double y = std::log1p(-w);
    if (!std::isfinite(y)) return 1.0;  // w rounded to exactly 1
    const double ln = std::log(an);
    static const double c5[4] = {-1.5861, -0.31082, -0.083751, 0.38915e-2};
    static const double c6[3] = {-0.4803, -0.082676, 0.30302e-2};
    const double mu = detail::poly(c5, 4, ln);
    const double sigma = std::exp(detail::poly(c6, 3, ln));
    p = 1.0 - normal_cdf((y - mu) / sigma);
  }
  return std::min(std::max(p, 0.0), 1.0);
}

// Benjamini-Hochberg step-up at level q; flags[i] = reject H_i.
inline std::vector<bool> bh_fdr(const std::vector<double>& p_values, double q) {
  require(q > 0.0 && q < 1.0, "bh_fdr: q must be in (0,1)");
  for (double p : p_values)
    require(p >= 0.0 && p <= 1.0, "bh_fdr: p-values must be in [0,1]");
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::size_t cut = 0;  // number of rejections
  for (std::size_t i = m; i >= 1; --i) {
    if (p_values[order[i - 1]] <= static_cast<double>(i) * q / static_cast<double>(m)) {
      cut = i;
      break;
    }
  }
  std::vector<bool> reject(m, false);
  for (std::size_t i = 0; i < cut; ++i) reject[order[i]] = true;
  return reject;
}

}  // namespace topicaudit
