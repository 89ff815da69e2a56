#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace sqd;
using namespace testing_support;

namespace {

using cplx = std::complex<double>;

oracle::Fock to_fock(const SectorState& s) {
  const int n = s.shape.n_orb;
  oracle::Fock v = oracle::Fock::Zero(Eigen::Index{1} << (2 * n));
  for (std::size_t i = 0; i < s.alpha_strings.size(); ++i)
    for (std::size_t j = 0; j < s.beta_strings.size(); ++j)
      v(static_cast<Eigen::Index>(to_state({s.alpha_strings[i], s.beta_strings[j]}, n))) =
          s.amplitudes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return v;
}

double fidelity(const oracle::Fock& a, const oracle::Fock& b) { return std::norm(a.dot(b)); }

LucjLayer random_layer(int n, std::uint64_t seed, double sign = -1.0) {
  return {random_antihermitian(n, seed, 0.4), random_symmetric(2 * n, seed + 1000, 0.4), sign};
}

oracle::Fock oracle_lucj(const LucjParams& p, int n, int na, int nb) {
  oracle::Fock v = oracle::basis_vector(n, oracle::reference_state(n, na, nb));
  for (const auto& l : p.layers) {
    v = oracle::exp_one_body(n, -l.sign * l.K, v);
    v = oracle::jastrow_phase(n, l.J, v);
    v = oracle::exp_one_body(n, l.sign * l.K, v);
  }
  if (p.final_rotation) v = oracle::exp_one_body(n, p.final_sign * *p.final_rotation, v);
  return v;
}

CcsdAmplitudes random_t2(int no, int nv, std::uint64_t seed) {
  auto c = CcsdAmplitudes::zeros(no, nv);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 0.1);
  for (int a = 0; a < nv; ++a)
    for (int i = 0; i < no; ++i)
      for (int b = 0; b < nv; ++b)
        for (int j = 0; j < no; ++j) {
          if (a * no + i > b * no + j) continue;
          c(a, i, b, j) = c(b, j, a, i) = nd(gen);
        }
  return c;
}

Eigen::MatrixXcd omega_from(const Eigen::MatrixXcd& K) {
  Eigen::MatrixXcd W = Eigen::MatrixXcd::Identity(K.rows(), K.cols()), term = W;
  for (int k = 1; k < 40; ++k) {
    term = term * K / static_cast<double>(k);
    W += term;
  }
  return W;
}

}  // namespace

TEST(SectorStateTest, RhfIsPointMass) {
  const auto shape = make_shape(4, 2, 1);
  const auto s = rhf_state(shape);
  const auto p = s.probabilities();
  const auto dets = enumerate_sector(shape);
  ASSERT_EQ(p.size(), dets.size());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], dets[i] == rhf_determinant(shape) ? 1.0 : 0.0);
}

TEST(SectorStateTest, BudgetIsEnforced) {
  EXPECT_THROW(rhf_state(make_shape(16, 8, 8), 1000), BudgetError);
}

TEST(OrbitalRotation, ZeroIsIdentity) {
  const auto shape = make_shape(4, 2, 2);
  auto s = prepare_lucj(LucjParams{{random_layer(4, 1)}, {}, 1.0}, shape);
  const auto before = s.amplitudes;
  apply_orbital_rotation(s, Eigen::MatrixXcd::Zero(4, 4));
  EXPECT_LT((s.amplitudes - before).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(OrbitalRotation, ThoulessMinors) {
  for (int n = 2; n <= 6; ++n)
    for (int na = 0; na <= std::min(n, 3); ++na) {
      const int nb = std::max(0, na - 1);
      const auto shape = make_shape(n, na, nb);
      const Eigen::MatrixXcd K = random_antihermitian(n, static_cast<std::uint64_t>(10 * n + na));
      auto s = rhf_state(shape);
      apply_orbital_rotation(s, K, 1.0);
      const Eigen::MatrixXcd W = omega_from(K);
      for (std::size_t i = 0; i < s.alpha_strings.size(); ++i)
        for (std::size_t j = 0; j < s.beta_strings.size(); ++j) {
          const auto x = to_state({s.alpha_strings[i], s.beta_strings[j]}, n);
          EXPECT_LT(std::abs(s.amplitudes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                             oracle::thouless_amplitude(n, na, nb, W, x)),
                    1e-10);
        }
    }
}

TEST(OrbitalRotation, MatchesDenseOracleAndPreservesNorm) {
  for (int n = 2; n <= 4; ++n) {
    const auto shape = make_shape(n, (n + 1) / 2, n / 2);
    auto s = prepare_lucj(LucjParams{{random_layer(n, 3)}, {}, 1.0}, shape);
    const oracle::Fock v = to_fock(s);
    const Eigen::MatrixXcd K = random_antihermitian(n, 77);
    apply_orbital_rotation(s, K, -1.0);
    const oracle::Fock ref = oracle::exp_one_body(n, -K, v);
    EXPECT_LT((to_fock(s) - ref).norm(), 1e-10);
    EXPECT_NEAR(s.amplitudes.norm(), 1.0, 1e-10);
  }
}

TEST(OrbitalRotation, RejectsBadInput) {
  auto s = rhf_state(make_shape(3, 1, 1));
  Eigen::MatrixXcd K = random_antihermitian(3, 2);
  K(0, 1) += 0.1;
  EXPECT_THROW(apply_orbital_rotation(s, K), DomainError);
  EXPECT_THROW(apply_orbital_rotation(s, Eigen::MatrixXcd::Zero(4, 4)), DomainError);
}

TEST(Jastrow, ZeroAndSingleDeterminant) {
  const auto shape = make_shape(4, 2, 2);
  auto s = prepare_lucj(LucjParams{{random_layer(4, 5)}, {}, 1.0}, shape);
  const auto before = s.amplitudes;
  apply_jastrow(s, Eigen::MatrixXd::Zero(8, 8));
  EXPECT_EQ(s.amplitudes, before);
  auto r = rhf_state(shape);
  const auto p0 = r.probabilities();
  apply_jastrow(r, random_symmetric(8, 6));
  const auto p1 = r.probabilities();
  for (std::size_t i = 0; i < p0.size(); ++i) EXPECT_NEAR(p0[i], p1[i], 1e-15);
}

TEST(Jastrow, MatchesDenseOracle) {
  const int n = 4;
  const auto shape = make_shape(n, 2, 1);
  auto s = prepare_lucj(LucjParams{{random_layer(n, 8)}, {}, 1.0}, shape);
  const oracle::Fock v = to_fock(s);
  const Eigen::MatrixXd J = random_symmetric(2 * n, 9, 0.7);
  apply_jastrow(s, J);
  EXPECT_LT((to_fock(s) - oracle::jastrow_phase(n, J, v)).norm(), 1e-12);
  EXPECT_NEAR(s.amplitudes.norm(), 1.0, 1e-12);
}

TEST(PrepareLucj, ZeroParametersGivePointMass) {
  const int n = 5;
  const auto shape = make_shape(n, 2, 2);
  LucjParams p{{LucjLayer{Eigen::MatrixXcd::Zero(n, n), Eigen::MatrixXd::Zero(2 * n, 2 * n), -1.0}}, {}, 1.0};
  const auto probs = prepare_lucj(p, shape).probabilities();
  const auto dets = enumerate_sector(shape);
  for (std::size_t i = 0; i < dets.size(); ++i) EXPECT_NEAR(probs[i], dets[i] == rhf_determinant(shape) ? 1.0 : 0.0, 1e-15);
  p.layers[0].J = random_symmetric(2 * n, 4);
  const auto probs_j = prepare_lucj(p, shape).probabilities();
  for (std::size_t i = 0; i < dets.size(); ++i) EXPECT_NEAR(probs_j[i], probs[i], 1e-15);
}

TEST(PrepareLucj, MatchesDenseCircuitOracle) {
  for (int n = 2; n <= 5; ++n) {
    const int na = (n + 1) / 2, nb = n / 2;
    LucjParams p;
    p.layers = {random_layer(n, 20 + n), random_layer(n, 40 + n, 1.0)};
    p.final_rotation = random_antihermitian(n, 60 + n);
    p.final_sign = -1.0;
    const auto s = prepare_lucj(p, make_shape(n, na, nb));
    const auto ref = oracle_lucj(p, n, na, nb);
    EXPECT_GE(fidelity(to_fock(s), ref), 1.0 - 1e-10) << "n=" << n;
    EXPECT_NEAR(s.amplitudes.norm(), 1.0, 1e-10);
  }
}

TEST(PrepareLucj, TruncatedAnsatzOrders) {
  const int n = 4;
  LucjParams full{{random_layer(n, 1), random_layer(n, 2)}, {}, 1.0};
  const auto sup = truncated_ansatz(full, AnsatzOrder::supplement);
  ASSERT_EQ(sup.layers.size(), 1u);
  ASSERT_TRUE(sup.final_rotation.has_value());
  // supplement: e^{K2} e^{-K1} e^{iJ1} e^{K1}
  oracle::Fock v = oracle::basis_vector(n, oracle::reference_state(n, 2, 2));
  v = oracle::exp_one_body(n, full.layers[0].K, v);
  v = oracle::jastrow_phase(n, full.layers[0].J, v);
  v = oracle::exp_one_body(n, -full.layers[0].K, v);
  v = oracle::exp_one_body(n, full.layers[1].K, v);
  EXPECT_GE(fidelity(to_fock(prepare_lucj(sup, make_shape(n, 2, 2))), v), 1.0 - 1e-10);
  // main text: e^{-K2} e^{K1} e^{iJ1} e^{-K1}
  oracle::Fock w = oracle::basis_vector(n, oracle::reference_state(n, 2, 2));
  w = oracle::exp_one_body(n, -full.layers[0].K, w);
  w = oracle::jastrow_phase(n, full.layers[0].J, w);
  w = oracle::exp_one_body(n, full.layers[0].K, w);
  w = oracle::exp_one_body(n, -full.layers[1].K, w);
  EXPECT_GE(fidelity(to_fock(prepare_lucj(truncated_ansatz(full, AnsatzOrder::main_text), make_shape(n, 2, 2))), w),
            1.0 - 1e-10);
}

TEST(PrepareLucj, DimensionMismatch) {
  LucjParams p{{random_layer(3, 1)}, {}, 1.0};
  EXPECT_THROW(prepare_lucj(p, make_shape(4, 2, 2)), DomainError);
}

TEST(DecomposeT2, ZeroAmplitudes) {
  const auto dec = decompose_t2(CcsdAmplitudes::zeros(2, 3), 4);
  ASSERT_EQ(dec.params.layers.size(), 4u);
  for (const auto& l : dec.params.layers) {
    EXPECT_LT(l.J.cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT(l.K.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DecomposeT2, RankOne) {
  const int no = 2, nv = 3, m = no * nv;
  Eigen::VectorXd u(m);
  u << 0.3, -0.1, 0.5, 0.2, -0.4, 0.6;
  u.normalize();
  const double tau = -0.37;
  auto c = CcsdAmplitudes::zeros(no, nv);
  for (int a = 0; a < nv; ++a)
    for (int i = 0; i < no; ++i)
      for (int b = 0; b < nv; ++b)
        for (int j = 0; j < no; ++j) c(a, i, b, j) = tau * u(a * no + i) * u(b * no + j);
  const auto dec = decompose_t2(c, 2);
  EXPECT_NEAR(dec.tau(0), tau, 1e-12);
  for (Eigen::Index y = 1; y < dec.tau.size(); ++y) EXPECT_LT(std::abs(dec.tau(y)), 1e-12);
  const Eigen::MatrixXd rec = dec.tau(0) * dec.vectors.col(0) * dec.vectors.col(0).transpose();
  EXPECT_LT((rec - c.reshaped()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(DecomposeT2, SpectralReconstruction) {
  const auto c = random_t2(3, 4, 11);
  const auto dec = decompose_t2(c, 2);
  const Eigen::MatrixXd rec = dec.vectors * dec.tau.asDiagonal() * dec.vectors.transpose();
  EXPECT_LT((rec - c.reshaped()).cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index y = 1; y < dec.tau.size(); ++y) EXPECT_GE(std::abs(dec.tau(y - 1)), std::abs(dec.tau(y)));
}

TEST(DecomposeT2, LayersAreValid) {
  const int no = 2, nv = 3, n = no + nv;
  const auto dec = decompose_t2(random_t2(no, nv, 5), 4);
  ASSERT_EQ(dec.params.layers.size(), 4u);
  for (const auto& l : dec.params.layers) {
    EXPECT_LT((l.K + l.K.adjoint()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((l.J - l.J.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(l.J.topLeftCorner(n, n), l.J.topRightCorner(n, n));
    EXPECT_EQ(l.J.topLeftCorner(n, n), l.J.bottomRightCorner(n, n));
  }
  EXPECT_NO_THROW(prepare_lucj(dec.params, make_shape(n, no, no)));
}

TEST(DecomposeT2, RejectsAsymmetric) {
  auto c = CcsdAmplitudes::zeros(2, 2);
  c(0, 0, 1, 1) = 0.1;
  EXPECT_THROW(decompose_t2(c, 2), DomainError);
}

TEST(CcsdJson, ParseAndErrors) {
  nlohmann::json j = {{"n_occ", 1}, {"n_virt", 1}, {"t1", {{0.01}}}, {"t2", {{{{0.2}}}}}};
  const auto c = parse_ccsd_json(j);
  EXPECT_EQ(c(0, 0, 0, 0), 0.2);
  EXPECT_EQ(c.t1(0, 0), 0.01);
  j["t2"] = {{{0.2}}};
  EXPECT_THROW(parse_ccsd_json(j), FormatError);
  EXPECT_THROW(parse_ccsd_json(nlohmann::json{{"n_occ", 1}}), FormatError);
}

TEST(HeavyHex, RetainedIndexSet) {
  const int n = 8;
  const auto mask = heavy_hex_mask(n);
  for (int a = 0; a < 2 * n; ++a)
    for (int b = 0; b < 2 * n; ++b) {
      const int p = a % n, q = b % n;
      const bool same = (a < n) == (b < n);
      const bool keep = same ? std::abs(p - q) == 1 : (p == q && p % 4 == 0);
      EXPECT_EQ(mask(a, b), keep ? 1.0 : 0.0) << a << "," << b;
    }
  const auto capped = heavy_hex_mask(24, 16);
  EXPECT_EQ(capped(16, 24 + 16), 1.0);
  EXPECT_EQ(capped(20, 24 + 20), 0.0);
  EXPECT_EQ(heavy_hex_mask(24)(20, 24 + 20), 1.0);
}

TEST(HeavyHex, SparsifyIdempotentAndKeepsSparse) {
  const int n = 6;
  LucjParams p{{random_layer(n, 1), random_layer(n, 2)}, {}, 1.0};
  const auto once = sparsify_heavy_hex(p, n);
  const auto twice = sparsify_heavy_hex(once, n);
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    EXPECT_EQ(once.layers[k].J, twice.layers[k].J);
    EXPECT_EQ(once.layers[k].K, p.layers[k].K);
    const auto mask = heavy_hex_mask(n);
    for (int a = 0; a < 2 * n; ++a)
      for (int b = 0; b < 2 * n; ++b)
        EXPECT_EQ(once.layers[k].J(a, b), mask(a, b) ? p.layers[k].J(a, b) : 0.0);
  }
}

TEST(PermuteForAnchors, AlreadyAnchoredIsIdentity) {
  const int n = 6;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  J(0, n) = J(n, 0) = 0.9;
  J(4, n + 4) = J(n + 4, 4) = 0.5;
  J(1, n + 1) = J(n + 1, 1) = 0.1;
  const auto perm = anchor_permutation(J, n, 2);
  for (int p = 0; p < n; ++p) EXPECT_EQ(perm[static_cast<std::size_t>(p)], p);
}

TEST(PermuteForAnchors, DominantCouplingMovesToAnchor) {
  const int n = 6;
  Eigen::MatrixXd J = random_symmetric(2 * n, 3, 0.05);
  J(3, n + 3) = J(n + 3, 3) = 2.0;
  const auto perm = anchor_permutation(J, n, 1);
  EXPECT_EQ(perm[3], 0);
  LucjParams p{{LucjLayer{random_antihermitian(n, 4), J, -1.0}}, {}, 1.0};
  const auto moved = permute_for_anchors(p, n, 1);
  const auto sparse = sparsify_heavy_hex(moved, n);
  EXPECT_DOUBLE_EQ(sparse.layers[0].J(0, n), 2.0);

  // exhaustive: no relabelling keeps more opposite-spin diagonal weight on the anchors
  const auto best_ours = [&](const Eigen::MatrixXd& Jp) {
    double s = 0.0;
    for (int a = 0; a < n; a += 4) s += std::abs(Jp(a, n + a));
    return s;
  };
  const auto full = permute_for_anchors(p, n);
  const double ours = best_ours(full.layers[0].J);
  std::vector<int> perm_all(n);
  std::iota(perm_all.begin(), perm_all.end(), 0);
  double best = 0.0;
  do {
    double s = 0.0;
    for (int q = 0; q < n; ++q)
      if (perm_all[static_cast<std::size_t>(q)] % 4 == 0) s += std::abs(J(q, n + q));
    best = std::max(best, s);
  } while (std::next_permutation(perm_all.begin(), perm_all.end()));
  EXPECT_NEAR(ours, best, 1e-14);
}

TEST(PermuteForAnchors, PreservesPreparedDistribution) {
  for (int n = 3; n <= 6; ++n) {
    const auto shape = make_shape(n, (n + 1) / 2, n / 2);
    LucjParams p{{random_layer(n, 100 + n), random_layer(n, 200 + n)}, random_antihermitian(n, 300 + n), 1.0};
    const auto a = prepare_lucj(p, shape).probabilities();
    const auto b = prepare_lucj(permute_for_anchors(p, n), shape).probabilities();
    double dev = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dev = std::max(dev, std::abs(a[i] - b[i]));
    EXPECT_LT(dev, 1e-10) << "n=" << n;
  }
}

TEST(Sampling, SignalOnlyStaysInSector) {
  const int n = 4;
  const auto shape = make_shape(n, 2, 2);
  const auto state = prepare_lucj(LucjParams{{random_layer(n, 7)}, {}, 1.0}, shape);
  const auto s = ConfigurationSampler(state, NoiseModel::depolarizing(1.0)).sample(20000, CounterRng(1));
  EXPECT_EQ(s.total(), 20000u);
  EXPECT_EQ(triage(s).wrong.total(), 0u);
}

TEST(Sampling, ChiSquareAgainstAmplitudes) {
  const int n = 4;
  const auto shape = make_shape(n, 2, 2);
  const auto state = prepare_lucj(LucjParams{{random_layer(n, 12), random_layer(n, 13)}, {}, 1.0}, shape);
  const auto probs = state.probabilities();
  const std::uint64_t shots = 1000000;
  const auto s = ConfigurationSampler(state, NoiseModel::none()).sample(shots, CounterRng(5), 2);
  const auto dets = enumerate_sector(shape);
  double chi2 = 0.0;
  int dof = -1;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const double expect = probs[i] * static_cast<double>(shots);
    const auto it = s.entries().find(dets[i]);
    const double seen = it == s.entries().end() ? 0.0 : static_cast<double>(it->second);
    if (expect < 5.0) {
      EXPECT_LT(seen, expect + 6.0 * std::sqrt(expect + 1.0));
      continue;
    }
    chi2 += (seen - expect) * (seen - expect) / expect;
    ++dof;
  }
  ASSERT_GT(dof, 5);
  // mean + 4 standard deviations of the chi-square distribution
  EXPECT_LT(chi2, dof + 4.0 * std::sqrt(2.0 * dof));
}

TEST(Sampling, UniformFullFockSectorFraction) {
  const auto shape = make_shape(16, 5, 5);
  const std::uint64_t shots = 1000000;
  const auto s = ConfigurationSampler(shape, {}, NoiseModel::uniform_full_fock()).sample(shots, CounterRng(8));
  const double frac = static_cast<double>(triage(s).correct.total()) / shots;
  const double exact = uniform_sector_probability(shape);
  EXPECT_NEAR(frac, exact, 4.0 * std::sqrt(exact * (1 - exact) / shots));
  EXPECT_NEAR(frac, 0.0044, 0.05 * 0.0044 + 4.0 * std::sqrt(exact / shots));
}

TEST(Sampling, DepolarizingMixture) {
  const int n = 6;
  const auto shape = make_shape(n, 3, 3);
  const auto state = rhf_state(shape);
  const double alpha = 0.3;
  const std::uint64_t shots = 200000;
  const auto s = ConfigurationSampler(state, NoiseModel::depolarizing(alpha)).sample(shots, CounterRng(2));
  const double p_rhf = alpha + (1 - alpha) / 4096.0;
  const double seen = static_cast<double>(s.entries().at(rhf_determinant(shape))) / shots;
  EXPECT_NEAR(seen, p_rhf, 4.0 * std::sqrt(p_rhf * (1 - p_rhf) / shots));
  EXPECT_THROW(NoiseModel::depolarizing(1.5), DomainError);
}

TEST(Sampling, UniformSector) {
  const auto shape = make_shape(4, 2, 1);
  const std::uint64_t shots = 120000;
  const auto s = ConfigurationSampler(shape, {}, NoiseModel::uniform_sector()).sample(shots, CounterRng(4));
  EXPECT_EQ(triage(s).wrong.total(), 0u);
  EXPECT_EQ(s.distinct(), 24u);
  const double p = 1.0 / 24.0;
  for (const auto& [d, c] : s.entries()) EXPECT_NEAR(c / double(shots), p, 4.0 * std::sqrt(p * (1 - p) / shots));
}

TEST(Sampling, WorkerCountInvariant) {
  const auto shape = make_shape(5, 2, 2);
  const auto state = prepare_lucj(LucjParams{{random_layer(5, 2)}, {}, 1.0}, shape);
  const ConfigurationSampler sampler(state, NoiseModel::depolarizing(0.6));
  const auto a = sampler.sample(200000, CounterRng(3), 1);
  const auto b = sampler.sample(200000, CounterRng(3), 4);
  EXPECT_EQ(a.entries(), b.entries());
  EXPECT_THROW(sampler.sample(0, CounterRng(3)), DomainError);
}
