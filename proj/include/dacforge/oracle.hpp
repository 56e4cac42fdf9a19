#pragma once

/**
 * Validation of the surrogate-reward association on the synthetic causal
 * model s -> C: for any nondecreasing success function g, the covariance
 * between each subproblem indicator and the final-answer indicator is
 * nonnegative. Exact values come from enumerating {0,1}^m; Monte Carlo
 * estimates carry standard errors and per-coordinate conditional lifts
 * P(s_i=1 | C=1) - P(s_i=1).
 */

#include <bit>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dacforge/common.hpp"
#include "dacforge/policy.hpp"

namespace dacforge::oracle {

struct CovarianceReport {
  policy::SyntheticPolicyParams params;
  uint64_t samples = 0;
  std::vector<double> cov_estimates;
  std::vector<double> std_errors;
  std::vector<double> conditional_lift;  // P(s_i=1|C=1) - P(s_i=1), 0 if C never 1
};

// ============================================================================
// Monte Carlo estimate
// ============================================================================

namespace detail {

/// Sufficient statistics for covariance estimation: integer joint counts per
/// coordinate, so shard merging is exact and shard-count independent.
struct CovCounts {
  uint64_t n = 0;
  uint64_t n_c = 0;                 // C = 1
  std::vector<uint64_t> n_s;        // s_i = 1
  std::vector<uint64_t> n_sc;       // s_i = 1 and C = 1

  explicit CovCounts(size_t m = 0) : n_s(m, 0), n_sc(m, 0) {}

  void merge(const CovCounts& other) {
    n += other.n;
    n_c += other.n_c;
    for (size_t i = 0; i < n_s.size(); ++i) {
      n_s[i] += other.n_s[i];
      n_sc[i] += other.n_sc[i];
    }
  }
};

/// Samples are indexed globally and seeded per index, so shard boundaries
/// cannot change what gets drawn.
inline CovCounts sample_range(const policy::SyntheticPolicyParams& params, uint64_t begin,
                              uint64_t end, uint64_t seed) {
  CovCounts counts(static_cast<size_t>(params.m));
  for (uint64_t s = begin; s < end; ++s) {
    auto roll = policy::synthetic_rollout(params, derive_seed(seed, s));
    ++counts.n;
    if (roll.c) ++counts.n_c;
    for (size_t i = 0; i < roll.s.size(); ++i) {
      if (roll.s[i]) {
        ++counts.n_s[i];
        if (roll.c) ++counts.n_sc[i];
      }
    }
  }
  return counts;
}

}  // namespace detail

/// Empirical Cov(1{s_i}, 1{C}) with standard errors. Sampling shards partition
/// the per-sample seed range, so the merged counts (and therefore the
/// estimates) do not depend on the shard count. The standard error is the
/// population std of the centered products divided by sqrt(N), computed
/// exactly from joint counts.
inline CovarianceReport estimate_covariance(const policy::SyntheticPolicyParams& params,
                                            uint64_t samples, uint64_t seed, int shards = 1,
                                            int parallelism = 1) {
  policy::validate_params(params);  // rejects non-monotone g before sampling
  if (samples < 1000)
    throw std::invalid_argument("estimate_covariance: need at least 1000 samples");
  if (shards < 1) throw std::invalid_argument("estimate_covariance: shards must be >= 1");

  std::vector<detail::CovCounts> shard_counts(static_cast<size_t>(shards));
  uint64_t per_shard = samples / static_cast<uint64_t>(shards);
  uint64_t remainder = samples % static_cast<uint64_t>(shards);
  parallel_for(static_cast<size_t>(shards), parallelism, [&](size_t w) {
    uint64_t begin = w * per_shard + std::min<uint64_t>(w, remainder);
    uint64_t end = begin + per_shard + (w < remainder ? 1 : 0);
    shard_counts[w] = detail::sample_range(params, begin, end, seed);
  });
  detail::CovCounts counts(static_cast<size_t>(params.m));
  for (const auto& c : shard_counts) counts.merge(c);

  CovarianceReport report;
  report.params = params;
  report.samples = counts.n;
  double n = static_cast<double>(counts.n);
  double p_c = static_cast<double>(counts.n_c) / n;
  for (int i = 0; i < params.m; ++i) {
    double p_s = static_cast<double>(counts.n_s[static_cast<size_t>(i)]) / n;
    double p_sc = static_cast<double>(counts.n_sc[static_cast<size_t>(i)]) / n;
    double cov = p_sc - p_s * p_c;
    report.cov_estimates.push_back(cov);

    // Var of u = (s - p_s)(C - p_c) from the four joint cells.
    double n11 = p_sc;
    double n10 = p_s - p_sc;
    double n01 = p_c - p_sc;
    double n00 = 1.0 - p_s - p_c + p_sc;
    double u11 = (1.0 - p_s) * (1.0 - p_c);
    double u10 = (1.0 - p_s) * (0.0 - p_c);
    double u01 = (0.0 - p_s) * (1.0 - p_c);
    double u00 = p_s * p_c;
    double e_u2 = n11 * u11 * u11 + n10 * u10 * u10 + n01 * u01 * u01 + n00 * u00 * u00;
    double var_u = std::max(0.0, e_u2 - cov * cov);
    report.std_errors.push_back(std::sqrt(var_u / n));

    double lift = counts.n_c == 0
                      ? 0.0
                      : static_cast<double>(counts.n_sc[static_cast<size_t>(i)]) /
                                static_cast<double>(counts.n_c) -
                            p_s;
    report.conditional_lift.push_back(lift);
  }
  return report;
}

// ============================================================================
// Exact covariance by enumeration
// ============================================================================

/// Exact Cov(1{s_i}, 1{C}) for each coordinate, summing over all 2^m
/// configurations of s.
inline std::vector<double> closed_form_covariance(const policy::SyntheticPolicyParams& params) {
  policy::validate_params(params);
  if (params.m > 20)
    throw std::invalid_argument("closed_form_covariance: enumeration requires m <= 20");

  size_t configs = size_t{1} << params.m;
  double p = params.p_sub;
  double e_c = 0.0;
  std::vector<double> e_sc(static_cast<size_t>(params.m), 0.0);
  for (size_t mask = 0; mask < configs; ++mask) {
    int ones = std::popcount(mask);
    double prob = std::pow(p, ones) * std::pow(1.0 - p, params.m - ones);
    double g = params.g_by_config.empty() ? params.g_by_count[static_cast<size_t>(ones)]
                                          : params.g_by_config[mask];
    double w = prob * g;
    e_c += w;
    for (int i = 0; i < params.m; ++i) {
      if (mask & (size_t{1} << i)) e_sc[static_cast<size_t>(i)] += w;
    }
  }
  std::vector<double> cov(static_cast<size_t>(params.m));
  for (int i = 0; i < params.m; ++i) cov[static_cast<size_t>(i)] = e_sc[static_cast<size_t>(i)] - p * e_c;
  return cov;
}

/// Whether coordinate i can change the success probability at all (decidable
/// exactly on the table); exact covariance is strictly positive iff the
/// coordinate has influence and 0 < p_sub < 1.
inline bool coordinate_influences(const policy::SyntheticPolicyParams& params, int i) {
  policy::validate_params(params);
  if (i < 0 || i >= params.m) throw std::invalid_argument("coordinate_influences: bad index");
  if (!params.g_by_config.empty()) {
    size_t configs = size_t{1} << params.m;
    size_t bit = size_t{1} << i;
    for (size_t mask = 0; mask < configs; ++mask) {
      if (!(mask & bit) && params.g_by_config[mask | bit] > params.g_by_config[mask]) return true;
    }
    return false;
  }
  for (size_t j = 0; j + 1 < params.g_by_count.size(); ++j) {
    if (params.g_by_count[j + 1] > params.g_by_count[j]) return true;
  }
  return false;
}

// ============================================================================
// Report output
// ============================================================================

inline std::string report_text(const CovarianceReport& report) {
  std::ostringstream out;
  out << "samples: " << report.samples << "  m: " << report.params.m
      << "  p_sub: " << report.params.p_sub << "\n";
  out << std::left << std::setw(6) << "i" << std::right << std::setw(14) << "cov"
      << std::setw(14) << "std_err" << std::setw(14) << "lift" << "\n";
  for (size_t i = 0; i < report.cov_estimates.size(); ++i) {
    out << std::left << std::setw(6) << i + 1 << std::right << std::fixed
        << std::setprecision(6) << std::setw(14) << report.cov_estimates[i] << std::setw(14)
        << report.std_errors[i] << std::setw(14) << report.conditional_lift[i] << "\n";
  }
  return out.str();
}

inline std::string report_csv(const CovarianceReport& report) {
  std::ostringstream out;
  out << "subproblem,cov,std_err,conditional_lift\n";
  for (size_t i = 0; i < report.cov_estimates.size(); ++i) {
    out << i + 1 << "," << std::setprecision(17) << report.cov_estimates[i] << ","
        << report.std_errors[i] << "," << report.conditional_lift[i] << "\n";
  }
  return out.str();
}

}  // namespace dacforge::oracle
