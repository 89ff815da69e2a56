#pragma once

// Post-run diagnostics and closed-form probability bounds.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "sqd/errors.hpp"
#include "sqd/recovery.hpp"
#include "sqd/system.hpp"

namespace sqd {

struct VariancePoint {
  double scaled_variance = 0.0;  // Delta H / E^2
  double energy = 0.0;
  std::uint64_t batch_size = 0;
  int batch_index = 0;
};

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double residual = 0.0;  // root-mean-square of the fit residuals
};

/// Unweighted least squares of E against Delta H / E^2; the intercept
/// estimates the exact energy.
inline LinearFit extrapolate_energy(const std::vector<VariancePoint>& pts) {
  if (pts.size() < 2) throw DomainError("energy-variance fit needs at least two points");
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    mx += p.scaled_variance;
    my += p.energy;
  }
  const double n = static_cast<double>(pts.size());
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : pts) {
    sxx += (p.scaled_variance - mx) * (p.scaled_variance - mx);
    sxy += (p.scaled_variance - mx) * (p.energy - my);
  }
  double scale = 0.0;
  for (const auto& p : pts) scale = std::max(scale, std::abs(p.scaled_variance));
  if (!(sxx > 1e-28 * std::max(1.0, scale * scale) * n)) throw DomainError("degenerate abscissa: rank-deficient fit");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (const auto& p : pts) {
    const double r = p.energy - (fit.intercept + fit.slope * p.scaled_variance);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

/// -sum |c|^2 log2 |c|^2 with 0 log 0 = 0.
inline double amplitude_entropy(const Eigen::VectorXd& c) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double p = c(i) * c(i);
    if (p > 0.0) s -= p * std::log2(p);
  }
  return s;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// 95% Wilson score interval for k successes in n trials.
inline Interval wilson_interval(std::uint64_t k, std::uint64_t n) {
  if (n == 0) throw DomainError("Wilson interval needs at least one trial");
  constexpr double z = 1.959963984540054;
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double den = 1.0 + z * z / nn;
  const double centre = (p + z * z / (2.0 * nn)) / den;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / den;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct SectorFraction {
  double fraction = 0.0;
  Interval wilson95;
  std::uint64_t in_sector = 0;
  std::uint64_t shots = 0;
};

/// Fraction of shots (counting multiplicity) in the correct sector.
inline SectorFraction sector_fraction(const SampleSet& samples) {
  if (samples.total() == 0) throw DomainError("empty sample set");
  SectorFraction out;
  out.shots = samples.total();
  for (const auto& [d, c] : samples.entries())
    if (in_sector(d, samples.shape())) out.in_sector += c;
  out.fraction = static_cast<double>(out.in_sector) / static_cast<double>(out.shots);
  out.wilson95 = wilson_interval(out.in_sector, out.shots);
  return out;
}

/// C(n, N_alpha) C(n, N_beta) / 2^M.
inline double uniform_sector_probability(const SystemShape& shape) {
  shape.validate();
  const double lg = std::lgamma(shape.n_orb + 1.0);
  auto lc = [&](int k) { return lg - std::lgamma(k + 1.0) - std::lgamma(shape.n_orb - k + 1.0); };
  return std::exp(lc(shape.n_alpha) + lc(shape.n_beta) - shape.n_qubits() * std::log(2.0));
}

struct RecoveryBoundInput {
  int m_qubits = 0;
  int n_electrons = 0;
  int half_distance = 0;  // b
  double epsilon = 0.1;
};

namespace detail {

inline double log_binomial(int n, int k) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// log of prod_{i=1}^{g} i(1-e)/((1-e)(b+i) + e(A+h)) * prod_{j=1}^{h} j e/((1-e) b + e(A+j)).
inline double log_products(int g, int h, int b, int A, double e) {
  double acc = 0.0;
  for (int i = 1; i <= g; ++i) acc += std::log(i * (1.0 - e)) - std::log((1.0 - e) * (b + i) + e * (A + h));
  for (int j = 1; j <= h; ++j) acc += std::log(j * e) - std::log((1.0 - e) * b + e * (A + j));
  return acc;
}

inline double log_sum_exp(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace detail

/// Lower bound F(M, N, b, eps) on the probability that a uniformly drawn
/// configuration ends, after recovery, at a fixed target at Hamming distance
/// 2b from the reference. Evaluated in log space.
inline double recovery_probability_bound(const RecoveryBoundInput& in) {
  const int M = in.m_qubits, N = in.n_electrons, b = in.half_distance;
  const double e = in.epsilon;
  if (M < 1 || N < 0 || N > M) throw DomainError("invalid (M, N)");
  if (b < 0 || b > std::min(N, M - N)) throw DomainError("b must lie in [0, min(N, M - N)]");
  if (!(e > 0.0 && e < 1.0)) throw DomainError("epsilon must lie in (0, 1)");
  const double log2M = M * std::log(2.0);
  std::vector<double> terms;
  for (int g = 0; g <= M - N - b; ++g)
    for (int h = 0; h <= N - b; ++h) {
      const double lb = detail::log_binomial(M - N - b, g) + detail::log_binomial(b, h);
      if (!std::isfinite(lb)) continue;
      terms.push_back(lb - log2M + detail::log_products(g, h, b, N - b, e));
    }
  for (int g = 0; g <= N - b; ++g)
    for (int h = 0; h <= M - N - b; ++h) {
      const double lb = detail::log_binomial(N - b, g) + detail::log_binomial(b, h);
      if (!std::isfinite(lb)) continue;
      terms.push_back(lb - log2M + detail::log_products(g, h, b, M - N - b, e));
    }
  return std::exp(detail::log_sum_exp(terms));
}

struct ConcentrationReport {
  double alpha_m = 0.0;
  double beta_m = 0.0;
  double shots_bound = 0.0;  // +inf when beta_m = 0
  double subsample_fail = 1.0;
};

/// alpha_m = sum_{i<m} P_i, beta_m = P_{m-1}, N_s = ceil(2/beta_m ln(1/eta)),
/// p_fail = [1 - ((d - m)/N_s)^m]^K with the ratio clamped to [0, 1].
inline ConcentrationReport concentration_bounds(const std::vector<double>& probs, int m, double eta, double d, int K) {
  if (m < 1 || static_cast<std::size_t>(m) > probs.size()) throw DomainError("m must lie in [1, len(P)]");
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("eta must lie in (0, 1]");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] < 0.0) throw DomainError("negative probability");
    if (i > 0 && probs[i] > probs[i - 1]) throw DomainError("probabilities must be sorted descending");
    total += probs[i];
  }
  if (total > 1.0 + 1e-9) throw DomainError("probabilities sum above one");
  ConcentrationReport r;
  for (int i = 0; i < m; ++i) r.alpha_m += probs[static_cast<std::size_t>(i)];
  r.beta_m = probs[static_cast<std::size_t>(m - 1)];
  if (r.beta_m <= 0.0) {
    r.shots_bound = std::numeric_limits<double>::infinity();
    r.subsample_fail = 1.0;
    return r;
  }
  r.shots_bound = std::ceil(2.0 / r.beta_m * std::log(1.0 / eta));
  if (r.shots_bound <= 0.0) {
    r.subsample_fail = 1.0;  // no shots, nothing can be seen
    return r;
  }
  const double ratio = std::clamp((d - m) / r.shots_bound, 0.0, 1.0);
  r.subsample_fail = std::pow(1.0 - std::pow(ratio, m), K);
  return r;
}

}  // namespace sqd
