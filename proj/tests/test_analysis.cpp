#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace sqd;
using namespace testing_support;

namespace {

/// F(M, N, b, eps) summed term by term in plain arithmetic.
double naive_bound(int M, int N, int b, double e) {
  auto binom = [](int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  };
  auto prods = [&](int g, int h, int A) {
    double r = 1.0;
    for (int i = 1; i <= g; ++i) r *= i * (1 - e) / ((1 - e) * (b + i) + e * (A + h));
    for (int j = 1; j <= h; ++j) r *= j * e / ((1 - e) * b + e * (A + j));
    return r;
  };
  const double scale = std::pow(2.0, -M);
  double f = 0.0;
  for (int g = 0; g <= M - N - b; ++g)
    for (int h = 0; h <= N - b; ++h) f += binom(M - N - b, g) * binom(b, h) * scale * prods(g, h, N - b);
  for (int g = 0; g <= N - b; ++g)
    for (int h = 0; h <= M - N - b; ++h) f += binom(N - b, g) * binom(b, h) * scale * prods(g, h, M - N - b);
  return f;
}

struct TwoLevel {
  double energy;
  double variance;
};

/// Expectation and variance of diag(e0, e1) in cos(t)|0> + sin(t)|1> via the matrix itself.
TwoLevel two_level(double e0, double e1, double t) {
  Eigen::Matrix2d H;
  H << e0, 0.0, 0.0, e1;
  Eigen::Matrix2d R;
  R << std::cos(0.3), -std::sin(0.3), std::sin(0.3), std::cos(0.3);
  const Eigen::Matrix2d Hr = R * H * R.transpose();  // a non-diagonal representation
  const Eigen::Vector2d psi = R * Eigen::Vector2d(std::cos(t), std::sin(t));
  const double e = psi.dot(Hr * psi);
  return {e, (Hr * psi).squaredNorm() - e * e};
}

}  // namespace

TEST(Extrapolate, PlantedLine) {
  std::vector<VariancePoint> pts;
  for (int i = 0; i < 6; ++i) pts.push_back({0.001 * i, -2.0 + 3.0 * 0.001 * i, 100, i});
  const auto fit = extrapolate_energy(pts);
  EXPECT_NEAR(fit.intercept, -2.0, 1e-12);
  EXPECT_NEAR(fit.slope, 3.0, 1e-9);
  EXPECT_NEAR(fit.residual, 0.0, 1e-12);
  std::reverse(pts.begin(), pts.end());
  std::swap(pts[1], pts[4]);
  const auto again = extrapolate_energy(pts);
  EXPECT_NEAR(again.intercept, fit.intercept, 1e-13);
  EXPECT_NEAR(again.slope, fit.slope, 1e-10);
}

TEST(Extrapolate, TwoPointsThroughExactState) {
  const auto fit = extrapolate_energy({{0.0, -1.5, 0, 0}, {0.02, -1.4, 0, 1}});
  EXPECT_NEAR(fit.intercept, -1.5, 1e-14);
  EXPECT_NEAR(fit.slope, 5.0, 1e-12);
}

TEST(Extrapolate, Errors) {
  EXPECT_THROW(extrapolate_energy({{0.1, -1.0, 0, 0}}), DomainError);
  EXPECT_THROW(extrapolate_energy({{0.1, -1.0, 0, 0}, {0.1, -1.1, 0, 1}}), DomainError);
}

TEST(Extrapolate, TwoLevelMixtures) {
  const double e0 = -1.3, e1 = -0.6, gap = e1 - e0;
  std::vector<VariancePoint> pts;
  for (double t : {0.02, 0.04, 0.06, 0.08, 0.1}) {
    const auto m = two_level(e0, e1, t);
    EXPECT_NEAR(m.variance, std::pow(std::sin(t) * std::cos(t) * gap, 2), 1e-12);
    pts.push_back({m.variance / (m.energy * m.energy), m.energy, 0, 0});
  }
  EXPECT_LT(std::abs(extrapolate_energy(pts).intercept - e0), 1e-3 * gap);
}

TEST(Extrapolate, ExactEigenstateHasZeroVariance) {
  const auto ints = build_hubbard({6, 4.0, 4, 0});
  const auto sol = solve_batch(full_sector_batch(ints.shape), ints, {});
  EXPECT_LE(std::abs(sol.variance / (sol.energy * sol.energy)), 1e-8);
}

TEST(Entropy, Examples) {
  EXPECT_EQ(amplitude_entropy(Eigen::VectorXd::Unit(5, 2)), 0.0);
  for (int k = 0; k <= 6; ++k) {
    const int d = 1 << k;
    EXPECT_NEAR(amplitude_entropy(Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(double(d)))), k, 1e-12);
  }
  Eigen::VectorXd c(3);
  c << 0.0, std::sqrt(0.5), -std::sqrt(0.5);
  EXPECT_NEAR(amplitude_entropy(c), 1.0, 1e-14);
}

TEST(Entropy, BoundedByLogDimension) {
  const auto ints = random_integrals(make_shape(5, 2, 2), 3);
  const auto all = enumerate_sector(ints.shape);
  std::mt19937_64 gen(2);
  for (int t = 0; t < 30; ++t) {
    std::vector<Determinant> pick = all;
    std::shuffle(pick.begin(), pick.end(), gen);
    pick.resize(2 + gen() % 40);
    const auto sol = solve_batch(make_batch(pick), ints, {});
    EXPECT_LE(amplitude_entropy(sol.amplitudes), std::log2(double(pick.size())) + 1e-12);
    EXPECT_GE(amplitude_entropy(sol.amplitudes), 0.0);
  }
}

TEST(Entropy, DecreasesWithHubbardU) {
  const double us[] = {1.0, 8.0, 16.0};
  double prev = std::numeric_limits<double>::infinity();
  for (double u : us) {
    double mean = 0.0;
    for (std::uint64_t r = 0; r < 20; ++r) {
      const auto ints = build_hubbard({6, u, 17, r});
      mean += amplitude_entropy(solve_batch(full_sector_batch(ints.shape), ints, {}, SolverOptions{{}, false, 1}).amplitudes);
    }
    mean /= 20.0;
    EXPECT_LT(mean, prev) << "U=" << u;
    prev = mean;
  }
}

TEST(SectorFractionTest, AllCorrect) {
  const auto shape = make_shape(2, 1, 1);
  SampleSet s(shape);
  s.add(Determinant{0b01, 0b10}, 50);
  const auto f = sector_fraction(s);
  EXPECT_EQ(f.fraction, 1.0);
  EXPECT_EQ(f.wilson95.hi, 1.0);
  EXPECT_GT(f.wilson95.lo, 0.9);
  EXPECT_THROW(sector_fraction(SampleSet(shape)), DomainError);
}

TEST(SectorFractionTest, WilsonInterval) {
  const auto w = wilson_interval(50, 100);
  EXPECT_NEAR(w.lo, 0.4038, 1e-4);
  EXPECT_NEAR(w.hi, 0.5962, 1e-4);
  const auto z = wilson_interval(0, 10);
  EXPECT_EQ(z.lo, 0.0);
  EXPECT_NEAR(z.hi, 0.2775, 1e-4);
}

TEST(SectorFractionTest, DepolarizingConvergence) {
  const auto shape = make_shape(6, 3, 3);
  const auto state = rhf_state(shape);
  const std::uint64_t shots = 1000000;
  for (double a : {0.0, 0.25, 0.7}) {
    const auto s = ConfigurationSampler(state, NoiseModel::depolarizing(a)).sample(shots, CounterRng(7));
    const double expect = a + (1 - a) * uniform_sector_probability(shape);
    const auto f = sector_fraction(s);
    EXPECT_NEAR(f.fraction, expect, 3.0 * std::sqrt(expect * (1 - expect) / shots) + 1e-12) << "alpha " << a;
    EXPECT_LE(f.wilson95.lo, f.fraction);
    EXPECT_GE(f.wilson95.hi, f.fraction);
  }
}

TEST(UniformSectorProbability, TableValues) {
  EXPECT_NEAR(uniform_sector_probability(make_shape(16, 5, 5)), 0.0044, 0.05 * 0.0044);
  EXPECT_NEAR(uniform_sector_probability(make_shape(26, 5, 5)), 9.6e-7, 0.05 * 9.6e-7);
  EXPECT_NEAR(uniform_sector_probability(make_shape(20, 15, 15)), 0.00022, 0.05 * 0.00022);
  EXPECT_NEAR(uniform_sector_probability(make_shape(36, 27, 27)), 1.88e-6, 0.05 * 1.88e-6);
  EXPECT_DOUBLE_EQ(uniform_sector_probability(make_shape(1, 0, 0)), 0.25);
  EXPECT_NEAR(uniform_sector_probability(make_shape(4, 2, 1)), 24.0 / 256.0, 1e-15);
}

TEST(RecoveryBound, MatchesDirectSummation) {
  for (int M : {6, 10, 16, 24})
    for (int N : {2, M / 2})
      for (int b = 0; b <= std::min(N, M - N); b += 1)
        for (double e : {0.05, 0.3}) {
          const double direct = naive_bound(M, N, b, e);
          EXPECT_NEAR(recovery_probability_bound({M, N, b, e}), direct, 1e-12 * direct) << M << " " << N << " " << b;
        }
}

TEST(RecoveryBound, MonotoneInQubits) {
  for (int b = 0; b <= 3; ++b) {
    double prev = 1.0;
    for (int M = 20; M <= 60; M += 8) {
      const double f = recovery_probability_bound({M, 10, b, 0.1});
      EXPECT_LT(f, prev) << "M=" << M << " b=" << b;
      EXPECT_GT(f, 0.0);
      prev = f;
    }
  }
}

TEST(RecoveryBound, MonotoneInDistance) {
  double prev = 1.0;
  for (int b = 0; b <= 5; ++b) {
    const double f = recovery_probability_bound({52, 10, b, 0.1});
    EXPECT_LE(f, prev) << "b=" << b;
    prev = f;
  }
}

TEST(RecoveryBound, AboveUniformLineAtZeroDistance) {
  for (int M = 4; M <= 16; M += 2)
    for (int N = 1; N < M; N += 3) EXPECT_GE(recovery_probability_bound({M, N, 0, 0.1}), std::pow(2.0, -M));
}

TEST(RecoveryBound, LargeInstancesStayFinite) {
  const double f = recovery_probability_bound({200, 60, 4, 0.1});
  EXPECT_GT(f, 0.0);
  EXPECT_TRUE(std::isfinite(f));
}

TEST(RecoveryBound, InvalidInput) {
  EXPECT_THROW(recovery_probability_bound({10, 4, 5, 0.1}), DomainError);
  EXPECT_THROW(recovery_probability_bound({10, 4, -1, 0.1}), DomainError);
  EXPECT_THROW(recovery_probability_bound({10, 4, 1, 0.0}), DomainError);
}

TEST(RecoveryBound, MonteCarloRateAboveBound) {
  const std::uint64_t trials = 400000;
  for (int b = 0; b <= 2; ++b) {
    const double rate = oracle::simulate_recovery_rate(12, 4, b, 0.1, trials, 31 + static_cast<std::uint64_t>(b));
    const double f = recovery_probability_bound({12, 4, b, 0.1});
    const double sigma = std::sqrt(std::max(rate, f) * (1 - std::max(rate, f)) / trials);
    EXPECT_GE(rate, f - 3.0 * sigma) << "b=" << b << " rate=" << rate << " F=" << f;
  }
}

TEST(Concentration, UniformDistribution) {
  const std::vector<double> p(8, 1.0 / 8.0);
  const auto r = concentration_bounds(p, 8, 0.01, 100.0, 3);
  EXPECT_NEAR(r.alpha_m, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(r.beta_m, 0.125);
  EXPECT_DOUBLE_EQ(r.shots_bound, std::ceil(16.0 * std::log(100.0)));
  const double ratio = std::min(1.0, (100.0 - 8.0) / r.shots_bound);
  EXPECT_NEAR(r.subsample_fail, std::pow(1.0 - std::pow(ratio, 8), 3), 1e-15);
}

TEST(Concentration, EtaOneNeedsNoShots) {
  const auto r = concentration_bounds({0.5, 0.3, 0.2}, 2, 1.0, 10.0, 1);
  EXPECT_EQ(r.shots_bound, 0.0);
}

TEST(Concentration, GeometricClosedForm) {
  const int L = 30;
  const double q = std::exp(-1.0), norm = (1.0 - q) / (1.0 - std::pow(q, L));
  std::vector<double> p;
  for (int i = 0; i < L; ++i) p.push_back(norm * std::pow(q, i));
  double prev_a = 0.0, prev_b = 1.0;
  for (int m = 1; m <= L; ++m) {
    const auto r = concentration_bounds(p, m, 0.05, 1e4, 2);
    EXPECT_NEAR(r.alpha_m, (1.0 - std::pow(q, m)) / (1.0 - std::pow(q, L)), 1e-12);
    EXPECT_NEAR(r.beta_m, norm * std::pow(q, m - 1), 1e-12);
    EXPECT_GE(r.alpha_m, prev_a);
    EXPECT_LE(r.beta_m, prev_b);
    prev_a = r.alpha_m;
    prev_b = r.beta_m;
  }
}

TEST(Concentration, ZeroBetaIsUnbounded) {
  const auto r = concentration_bounds({0.7, 0.3, 0.0}, 3, 0.1, 10.0, 1);
  EXPECT_TRUE(std::isinf(r.shots_bound));
  EXPECT_EQ(r.subsample_fail, 1.0);
}

TEST(Concentration, InvalidInput) {
  EXPECT_THROW(concentration_bounds({0.3, 0.5}, 1, 0.1, 10, 1), DomainError);
  EXPECT_THROW(concentration_bounds({0.8, 0.5}, 1, 0.1, 10, 1), DomainError);
  EXPECT_THROW(concentration_bounds({0.5, 0.5}, 3, 0.1, 10, 1), DomainError);
}
