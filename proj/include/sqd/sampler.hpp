#pragma once

// Fixed-particle-number statevector simulation of LUCJ circuits, CCSD t2
// parameter initialization, and noisy sampling of configurations.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <vector>

#include <json.hpp>

#include "sqd/errors.hpp"
#include "sqd/parallel.hpp"
#include "sqd/random.hpp"
#include "sqd/recovery.hpp"
#include "sqd/system.hpp"

namespace sqd {

using cplx = std::complex<double>;

/// Amplitudes over the sector; row = alpha string, column = beta string,
/// both in ascending mask order, so row-major flattening is canonical order.
struct SectorState {
  SystemShape shape;
  std::vector<Mask> alpha_strings;
  std::vector<Mask> beta_strings;
  Eigen::MatrixXcd amplitudes;

  std::size_t dimension() const noexcept { return alpha_strings.size() * beta_strings.size(); }

  /// |c|^2 in canonical determinant order.
  std::vector<double> probabilities() const {
    std::vector<double> p;
    p.reserve(dimension());
    for (Eigen::Index i = 0; i < amplitudes.rows(); ++i)
      for (Eigen::Index j = 0; j < amplitudes.cols(); ++j) p.push_back(std::norm(amplitudes(i, j)));
    return p;
  }

  Determinant determinant(std::size_t flat) const {
    return {alpha_strings[flat / beta_strings.size()], beta_strings[flat % beta_strings.size()]};
  }

  double norm() const { return amplitudes.norm(); }
};

inline constexpr std::uint64_t kDefaultSectorBudget = 10'000'000;

/// Point mass on the given determinant.
inline SectorState basis_state(const SystemShape& shape, const Determinant& d,
                               std::uint64_t budget = kDefaultSectorBudget) {
  shape.validate();
  const std::uint64_t dim = sector_dimension(shape);
  if (dim > budget)
    throw BudgetError("sector dimension " + std::to_string(dim) + " exceeds the statevector budget " +
                      std::to_string(budget));
  if (!in_sector(d, shape)) throw DomainError("determinant is outside the sector");
  SectorState s;
  s.shape = shape;
  s.alpha_strings = enumerate_strings(shape.n_orb, shape.n_alpha);
  s.beta_strings = enumerate_strings(shape.n_orb, shape.n_beta);
  s.amplitudes = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(s.alpha_strings.size()),
                                        static_cast<Eigen::Index>(s.beta_strings.size()));
  const auto ia = std::lower_bound(s.alpha_strings.begin(), s.alpha_strings.end(), d.alpha) - s.alpha_strings.begin();
  const auto ib = std::lower_bound(s.beta_strings.begin(), s.beta_strings.end(), d.beta) - s.beta_strings.begin();
  s.amplitudes(ia, ib) = 1.0;
  return s;
}

inline SectorState rhf_state(const SystemShape& shape, std::uint64_t budget = kDefaultSectorBudget) {
  return basis_state(shape, rhf_determinant(shape), budget);
}

/// exp(K) for anti-Hermitian K via the eigendecomposition of the Hermitian iK.
inline Eigen::MatrixXcd expm_antihermitian(const Eigen::MatrixXcd& K, double tol = 1e-12) {
  if (K.rows() != K.cols()) throw DomainError("generator must be square");
  if (K.size() > 0 && (K + K.adjoint()).cwiseAbs().maxCoeff() > tol)
    throw DomainError("generator is not anti-Hermitian");
  const Eigen::Index n = K.rows();
  if (n == 0) return K;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(cplx(0.0, 1.0) * K);
  Eigen::VectorXcd ph(n);
  for (Eigen::Index k = 0; k < n; ++k) ph(k) = std::exp(cplx(0.0, -es.eigenvalues()(k)));
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

/// Principal logarithm of a unitary matrix; the result is anti-Hermitian.
inline Eigen::MatrixXcd logm_unitary(const Eigen::MatrixXcd& U) {
  Eigen::ComplexSchur<Eigen::MatrixXcd> schur(U);
  const Eigen::MatrixXcd& T = schur.matrixT();
  const Eigen::MatrixXcd& Q = schur.matrixU();
  Eigen::VectorXcd lg(T.rows());
  for (Eigen::Index k = 0; k < T.rows(); ++k) lg(k) = cplx(0.0, std::arg(T(k, k)));
  Eigen::MatrixXcd L = Q * lg.asDiagonal() * Q.adjoint();
  return 0.5 * (L - L.adjoint());
}

/// Matrix of determinants det(W[rows J, cols I]) over k-subsets J, I.
inline Eigen::MatrixXcd compound_matrix(const Eigen::MatrixXcd& W, const std::vector<Mask>& strings) {
  const auto m = static_cast<Eigen::Index>(strings.size());
  Eigen::MatrixXcd out(m, m);
  if (m == 0) return out;
  const int k = std::popcount(strings.front());
  if (k == 0) {
    out.setOnes();
    return out;
  }
  std::vector<std::vector<int>> occ;
  occ.reserve(strings.size());
  for (Mask s : strings) occ.push_back(occupied_orbitals(s));
  Eigen::MatrixXcd sub(k, k);
  for (Eigen::Index J = 0; J < m; ++J)
    for (Eigen::Index I = 0; I < m; ++I) {
      const auto& rows = occ[static_cast<std::size_t>(J)];
      const auto& cols = occ[static_cast<std::size_t>(I)];
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) sub(a, b) = W(rows[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(b)]);
      out(J, I) = k == 1 ? sub(0, 0) : sub.partialPivLu().determinant();
    }
  return out;
}

/// Applies the orbital transformation a+_q -> sum_p W_pq a+_p to both spins.
inline void apply_orbital_transform(SectorState& state, const Eigen::MatrixXcd& W) {
  const Eigen::MatrixXcd A = compound_matrix(W, state.alpha_strings);
  const Eigen::MatrixXcd B = state.beta_strings == state.alpha_strings ? A : compound_matrix(W, state.beta_strings);
  state.amplitudes = A * state.amplitudes * B.transpose();
}

/// exp(sign * K^) with K^ = sum_{pq,sigma} K_pq a+_{p sigma} a_{q sigma}.
inline void apply_orbital_rotation(SectorState& state, const Eigen::MatrixXcd& K, double sign = 1.0) {
  if (K.rows() != state.shape.n_orb || K.cols() != state.shape.n_orb)
    throw DomainError("orbital rotation dimension does not match n_orb");
  apply_orbital_transform(state, expm_antihermitian(sign * K));
}

/// Jastrow phase exp(i sum_{p sigma, q tau} J x_{p sigma} x_{q tau}); J is
/// 2n x 2n, indexed alpha block first.
inline void apply_jastrow(SectorState& state, const Eigen::MatrixXd& J) {
  const int n = state.shape.n_orb;
  if (J.rows() != 2 * n || J.cols() != 2 * n) throw DomainError("Jastrow matrix must be 2 n_orb square");
  if ((J - J.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw DomainError("Jastrow matrix is not symmetric");
  const Eigen::MatrixXd Jaa = J.topLeftCorner(n, n), Jbb = J.bottomRightCorner(n, n);
  const Eigen::MatrixXd Jab = J.topRightCorner(n, n) + J.bottomLeftCorner(n, n).transpose();
  auto quad = [n](const Eigen::MatrixXd& M, Mask x, Mask y) {
    double acc = 0.0;
    for (Mask a = x; a; a &= a - 1) {
      const int p = std::countr_zero(a);
      for (Mask b = y; b; b &= b - 1) acc += M(p, std::countr_zero(b));
    }
    (void)n;
    return acc;
  };
  std::vector<double> pa(state.alpha_strings.size()), pb(state.beta_strings.size());
  for (std::size_t i = 0; i < pa.size(); ++i) pa[i] = quad(Jaa, state.alpha_strings[i], state.alpha_strings[i]);
  for (std::size_t j = 0; j < pb.size(); ++j) pb[j] = quad(Jbb, state.beta_strings[j], state.beta_strings[j]);
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pb.size(); ++j) {
      const double phase = pa[i] + pb[j] + quad(Jab, state.alpha_strings[i], state.beta_strings[j]);
      state.amplitudes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *= std::exp(cplx(0.0, phase));
    }
}

// ---------------------------------------------------------------------------
// LUCJ ansatz

/// One factor e^{s K} e^{i J} e^{-s K}; e^{-s K} acts first.
struct LucjLayer {
  Eigen::MatrixXcd K;
  Eigen::MatrixXd J;
  double sign = -1.0;
};

struct LucjParams {
  std::vector<LucjLayer> layers;  // layers[0] acts first on the reference
  std::optional<Eigen::MatrixXcd> final_rotation;
  double final_sign = 1.0;  // trailing e^{final_sign K}

  void validate(int n_orb) const {
    for (const auto& l : layers) {
      if (l.K.rows() != n_orb || l.K.cols() != n_orb || l.J.rows() != 2 * n_orb || l.J.cols() != 2 * n_orb)
        throw DomainError("LUCJ layer dimension mismatch");
      if ((l.K + l.K.adjoint()).cwiseAbs().maxCoeff() > 1e-10) throw DomainError("K is not anti-Hermitian");
      if ((l.J - l.J.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw DomainError("J is not symmetric");
    }
    if (final_rotation && (final_rotation->rows() != n_orb || final_rotation->cols() != n_orb))
      throw DomainError("final rotation dimension mismatch");
  }
};

inline void apply_layer(SectorState& state, const LucjLayer& layer) {
  apply_orbital_rotation(state, layer.K, -layer.sign);
  apply_jastrow(state, layer.J);
  apply_orbital_rotation(state, layer.K, layer.sign);
}

inline SectorState prepare_lucj(const LucjParams& params, const SystemShape& shape,
                                std::uint64_t budget = kDefaultSectorBudget) {
  params.validate(shape.n_orb);
  SectorState state = rhf_state(shape, budget);
  for (const auto& l : params.layers) apply_layer(state, l);
  if (params.final_rotation) apply_orbital_rotation(state, *params.final_rotation, params.final_sign);
  return state;
}

/// Sign conventions for the truncated two-layer circuit.
enum class AnsatzOrder {
  supplement,  // e^{K2} e^{-K1} e^{iJ1} e^{K1} |RHF>
  main_text,   // e^{-K2} e^{K1} e^{iJ1} e^{-K1} |RHF>
};

/// Truncated LUCJ built from two or more decomposed layers: keeps the first
/// layer's Jastrow and rotation and the second layer's rotation as trailer.
inline LucjParams truncated_ansatz(const LucjParams& full, AnsatzOrder order = AnsatzOrder::supplement) {
  if (full.layers.empty()) throw DomainError("need at least one layer");
  LucjParams out;
  LucjLayer first = full.layers.front();
  first.sign = order == AnsatzOrder::supplement ? -1.0 : 1.0;
  out.layers.push_back(first);
  if (full.layers.size() > 1) {
    out.final_rotation = full.layers[1].K;
    out.final_sign = order == AnsatzOrder::supplement ? 1.0 : -1.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// t2 decomposition

/// t2[a][i][b][j], a/b over virtual and i/j over occupied orbitals.
struct CcsdAmplitudes {
  int n_occ = 0;
  int n_virt = 0;
  Eigen::MatrixXd t1;              // n_virt x n_occ, unused by the decomposition
  std::vector<double> t2;          // ((a*no + i)*nv + b)*no + j

  double operator()(int a, int i, int b, int j) const {
    return t2[((static_cast<std::size_t>(a) * static_cast<std::size_t>(n_occ) + static_cast<std::size_t>(i)) *
                   static_cast<std::size_t>(n_virt) +
               static_cast<std::size_t>(b)) *
                  static_cast<std::size_t>(n_occ) +
              static_cast<std::size_t>(j)];
  }
  double& operator()(int a, int i, int b, int j) {
    return t2[((static_cast<std::size_t>(a) * static_cast<std::size_t>(n_occ) + static_cast<std::size_t>(i)) *
                   static_cast<std::size_t>(n_virt) +
               static_cast<std::size_t>(b)) *
                  static_cast<std::size_t>(n_occ) +
              static_cast<std::size_t>(j)];
  }

  static CcsdAmplitudes zeros(int n_occ, int n_virt) {
    CcsdAmplitudes c;
    c.n_occ = n_occ;
    c.n_virt = n_virt;
    c.t1 = Eigen::MatrixXd::Zero(n_virt, n_occ);
    c.t2.assign(static_cast<std::size_t>(n_occ) * n_occ * n_virt * n_virt, 0.0);
    return c;
  }

  /// (t2)_{ai,bj} as a (nv*no) square matrix.
  Eigen::MatrixXd reshaped() const {
    const int m = n_virt * n_occ;
    Eigen::MatrixXd T(m, m);
    for (int a = 0; a < n_virt; ++a)
      for (int i = 0; i < n_occ; ++i)
        for (int b = 0; b < n_virt; ++b)
          for (int j = 0; j < n_occ; ++j) T(a * n_occ + i, b * n_occ + j) = (*this)(a, i, b, j);
    return T;
  }
};

/// JSON {n_occ, n_virt, t1: [[...]], t2: [a][i][b][j]}.
inline CcsdAmplitudes parse_ccsd_json(const nlohmann::json& j) {
  try {
    CcsdAmplitudes c = CcsdAmplitudes::zeros(j.at("n_occ").get<int>(), j.at("n_virt").get<int>());
    if (c.n_occ < 0 || c.n_virt < 0) throw FormatError("negative orbital counts");
    if (j.contains("t1")) {
      const auto& t1 = j.at("t1");
      if (t1.size() != static_cast<std::size_t>(c.n_virt)) throw FormatError("t1 has wrong outer dimension");
      for (int a = 0; a < c.n_virt; ++a) {
        if (t1[static_cast<std::size_t>(a)].size() != static_cast<std::size_t>(c.n_occ))
          throw FormatError("t1 has wrong inner dimension");
        for (int i = 0; i < c.n_occ; ++i) c.t1(a, i) = t1[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)].get<double>();
      }
    }
    const auto& t2 = j.at("t2");
    auto need = [](const nlohmann::json& v, int n, const char* what) {
      if (!v.is_array() || v.size() != static_cast<std::size_t>(n)) throw FormatError(std::string("t2 has wrong ") + what + " dimension");
    };
    need(t2, c.n_virt, "first");
    for (int a = 0; a < c.n_virt; ++a) {
      const auto& ta = t2[static_cast<std::size_t>(a)];
      need(ta, c.n_occ, "second");
      for (int i = 0; i < c.n_occ; ++i) {
        const auto& ti = ta[static_cast<std::size_t>(i)];
        need(ti, c.n_virt, "third");
        for (int b = 0; b < c.n_virt; ++b) {
          const auto& tb = ti[static_cast<std::size_t>(b)];
          need(tb, c.n_occ, "fourth");
          for (int jj = 0; jj < c.n_occ; ++jj) c(a, i, b, jj) = tb[static_cast<std::size_t>(jj)].get<double>();
        }
      }
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("CCSD amplitude file: ") + e.what());
  }
}

struct T2Decomposition {
  Eigen::VectorXd tau;      // sorted by |tau| descending
  Eigen::MatrixXd vectors;  // column y is U_{., y}
  LucjParams params;
};

/**
 * (t2)_{ai,bj} = sum_y tau_y U_{ai,y} U_{bj,y}; for each y the n x n matrix
 * U~_y (nonzero only in the virtual-row / occupied-column block) defines
 * Hermitian X_{+-} = (1 -+ i)/2 (U~ +- i U~^T) with eigenpairs (g, V), giving
 * J_{2y} = tau g+ g+^T, K_{2y} = log V+, J_{2y+1} = -tau g- g-^T,
 * K_{2y+1} = log V-. The first `n_layers` pairs are kept. All four spin
 * blocks of J carry the same spatial matrix.
 */
inline T2Decomposition decompose_t2(const CcsdAmplitudes& amps, int n_layers, double layer_sign = -1.0) {
  const int no = amps.n_occ, nv = amps.n_virt, n = no + nv;
  const Eigen::MatrixXd T = amps.reshaped();
  if (T.size() > 0 && (T - T.transpose()).cwiseAbs().maxCoeff() > 1e-8)
    throw DomainError("reshaped t2 matrix is not symmetric: invalid amplitudes");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(T.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(es.eigenvalues()(a)) > std::abs(es.eigenvalues()(b));
  });
  T2Decomposition out;
  out.tau.resize(T.rows());
  out.vectors.resize(T.rows(), T.rows());
  for (std::size_t y = 0; y < order.size(); ++y) {
    out.tau(static_cast<Eigen::Index>(y)) = es.eigenvalues()(order[y]);
    out.vectors.col(static_cast<Eigen::Index>(y)) = es.eigenvectors().col(order[y]);
  }

  const cplx I(0.0, 1.0);
  for (Eigen::Index y = 0; y < out.tau.size() && static_cast<int>(out.params.layers.size()) < n_layers; ++y) {
    Eigen::MatrixXcd Ut = Eigen::MatrixXcd::Zero(n, n);
    for (int a = 0; a < nv; ++a)
      for (int i = 0; i < no; ++i) Ut(no + a, i) = out.vectors(a * no + i, y);
    for (int branch = 0; branch < 2 && static_cast<int>(out.params.layers.size()) < n_layers; ++branch) {
      const double s = branch == 0 ? 1.0 : -1.0;
      if (out.tau(y) == 0.0) {
        // e^{K} e^{0} e^{-K} is the identity; keep the layer trivial
        out.params.layers.push_back({Eigen::MatrixXcd::Zero(n, n), Eigen::MatrixXd::Zero(2 * n, 2 * n), layer_sign});
        continue;
      }
      const Eigen::MatrixXcd X = ((1.0 - s * I) / 2.0) * (Ut + s * I * Ut.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> xs(0.5 * (X + X.adjoint()));
      const Eigen::VectorXd g = xs.eigenvalues();
      LucjLayer layer;
      layer.sign = layer_sign;
      layer.K = logm_unitary(xs.eigenvectors());
      const Eigen::MatrixXd Jsp = s * out.tau(y) * g * g.transpose();
      layer.J.resize(2 * n, 2 * n);
      layer.J << Jsp, Jsp, Jsp, Jsp;
      out.params.layers.push_back(std::move(layer));
    }
  }
  return out;
}

/// Mask of J entries that survive heavy-hex sparsification.
inline Eigen::MatrixXd heavy_hex_mask(int n_orb, std::optional<int> max_anchor = std::nullopt) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n_orb, 2 * n_orb);
  for (int p = 0; p + 1 < n_orb; ++p) {
    m(p, p + 1) = m(p + 1, p) = 1.0;
    m(n_orb + p, n_orb + p + 1) = m(n_orb + p + 1, n_orb + p) = 1.0;
  }
  for (int p = 0; p < n_orb; p += 4) {
    if (max_anchor && p > *max_anchor) break;
    m(p, n_orb + p) = m(n_orb + p, p) = 1.0;
  }
  return m;
}

inline LucjParams sparsify_heavy_hex(const LucjParams& params, int n_orb, std::optional<int> max_anchor = std::nullopt) {
  const Eigen::MatrixXd mask = heavy_hex_mask(n_orb, max_anchor);
  LucjParams out = params;
  for (auto& l : out.layers) l.J = l.J.cwiseProduct(mask);
  return out;
}

/// Orbital permutation S with S(p_k) = 4k for the `anchors` orbitals of
/// largest |J^{ab}_{pp}| (ties to lower index); the rest fill the free slots
/// in ascending order. perm[p] = S(p).
inline std::vector<int> anchor_permutation(const Eigen::MatrixXd& J, int n_orb, int anchors) {
  const int slots = (n_orb + 3) / 4;
  anchors = std::clamp(anchors, 0, slots);
  std::vector<int> idx(static_cast<std::size_t>(n_orb));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return std::abs(J(a, n_orb + a)) > std::abs(J(b, n_orb + b)); });
  std::vector<int> perm(static_cast<std::size_t>(n_orb), -1);
  std::vector<bool> taken(static_cast<std::size_t>(n_orb), false);
  for (int k = 0; k < anchors; ++k) {
    perm[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = 4 * k;
    taken[static_cast<std::size_t>(4 * k)] = true;
  }
  int slot = 0;
  for (int p = 0; p < n_orb; ++p) {
    if (perm[static_cast<std::size_t>(p)] >= 0) continue;
    while (taken[static_cast<std::size_t>(slot)]) ++slot;
    perm[static_cast<std::size_t>(p)] = slot;
    taken[static_cast<std::size_t>(slot)] = true;
  }
  return perm;
}

/**
 * Relabels orbitals in every layer so that the `anchors` largest
 * opposite-spin diagonal couplings sit on orbitals 0, 4, 8, ...:
 * J'_{S(p),S(q)} = J_{p,q} in every spin block, and the rotation absorbs the
 * permutation, exp(s K') = exp(s K) P^T with P_{S(q),q} = 1. The prepared
 * state is unchanged.
 */
inline LucjParams permute_for_anchors(const LucjParams& params, int n_orb, int anchors = -1) {
  if (anchors < 0) anchors = (n_orb + 3) / 4;
  LucjParams out = params;
  for (auto& l : out.layers) {
    const std::vector<int> perm = anchor_permutation(l.J, n_orb, anchors);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n_orb, n_orb);
    for (int q = 0; q < n_orb; ++q) P(perm[static_cast<std::size_t>(q)], q) = 1.0;
    Eigen::MatrixXd Jp(2 * n_orb, 2 * n_orb);
    for (int a = 0; a < 2 * n_orb; ++a)
      for (int b = 0; b < 2 * n_orb; ++b) {
        const int pa = a < n_orb ? perm[static_cast<std::size_t>(a)] : n_orb + perm[static_cast<std::size_t>(a - n_orb)];
        const int pb = b < n_orb ? perm[static_cast<std::size_t>(b)] : n_orb + perm[static_cast<std::size_t>(b - n_orb)];
        Jp(pa, pb) = l.J(a, b);
      }
    const Eigen::MatrixXcd W = expm_antihermitian(l.sign * l.K) * P.transpose().cast<cplx>();
    l.K = logm_unitary(W) / l.sign;
    l.J = Jp;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

struct NoiseModel {
  enum class Kind { none, depolarizing, uniform_full_fock, uniform_sector };
  Kind kind = Kind::none;
  double alpha = 1.0;  // signal fraction for depolarizing

  static NoiseModel none() { return {Kind::none, 1.0}; }
  static NoiseModel depolarizing(double a) {
    if (!(a >= 0.0 && a <= 1.0)) throw DomainError("depolarizing alpha must lie in [0, 1]");
    return {Kind::depolarizing, a};
  }
  static NoiseModel uniform_full_fock() { return {Kind::uniform_full_fock, 0.0}; }
  static NoiseModel uniform_sector() { return {Kind::uniform_sector, 0.0}; }
};

/// Draws configurations from a noisy version of a sector distribution.
class ConfigurationSampler {
 public:
  /// `probabilities` in canonical sector order (may be empty when the model
  /// never consults the ideal distribution).
  ConfigurationSampler(const SystemShape& shape, std::vector<double> probabilities, NoiseModel noise)
      : shape_(shape), noise_(noise) {
    shape.validate();
    alpha_strings_ = enumerate_strings(shape.n_orb, shape.n_alpha);
    beta_strings_ = enumerate_strings(shape.n_orb, shape.n_beta);
    const bool needs_ideal = noise.kind == NoiseModel::Kind::none ||
                             (noise.kind == NoiseModel::Kind::depolarizing && noise.alpha > 0.0);
    if (needs_ideal) {
      if (probabilities.size() != alpha_strings_.size() * beta_strings_.size())
        throw DomainError("probability vector does not match the sector dimension");
      cum_.resize(probabilities.size());
      double acc = 0.0;
      for (std::size_t i = 0; i < probabilities.size(); ++i) cum_[i] = acc += probabilities[i];
      if (!(acc > 0.0)) throw DomainError("ideal distribution has zero total weight");
    }
  }

  ConfigurationSampler(const SectorState& state, NoiseModel noise)
      : ConfigurationSampler(state.shape, state.probabilities(), noise) {}

  Determinant draw(CounterRng& rng) const {
    switch (noise_.kind) {
      case NoiseModel::Kind::none:
        return draw_ideal(rng);
      case NoiseModel::Kind::depolarizing:
        if (noise_.alpha >= 1.0 || (noise_.alpha > 0.0 && rng.uniform() < noise_.alpha)) return draw_ideal(rng);
        return draw_full_fock(rng);
      case NoiseModel::Kind::uniform_full_fock:
        return draw_full_fock(rng);
      case NoiseModel::Kind::uniform_sector:
        return {alpha_strings_[rng.below(alpha_strings_.size())], beta_strings_[rng.below(beta_strings_.size())]};
    }
    return {};
  }

  /// `shots` draws in fixed-size chunks with per-chunk streams, so results do
  /// not depend on the worker count.
  SampleSet sample(std::uint64_t shots, const CounterRng& rng, int workers = 1) const {
    if (shots < 1) throw DomainError("shot count must be at least 1");
    constexpr std::uint64_t chunk = 1 << 16;
    const std::uint64_t n_chunks = (shots + chunk - 1) / chunk;
    std::vector<std::vector<Determinant>> parts(static_cast<std::size_t>(n_chunks));
    parallel_for(static_cast<std::size_t>(n_chunks), workers, [&](std::size_t c) {
      CounterRng r = rng.derive("shots", c);
      const std::uint64_t lo = c * chunk, hi = std::min(shots, lo + chunk);
      auto& out = parts[c];
      out.reserve(static_cast<std::size_t>(hi - lo));
      for (std::uint64_t s = lo; s < hi; ++s) out.push_back(draw(r));
    });
    SampleSet set(shape_);
    for (const auto& p : parts)
      for (const auto& d : p) set.add(d, 1);
    return set;
  }

 private:
  Determinant draw_ideal(CounterRng& rng) const {
    const double u = rng.uniform() * cum_.back();
    auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    if (it == cum_.end()) --it;
    const auto flat = static_cast<std::size_t>(it - cum_.begin());
    return {alpha_strings_[flat / beta_strings_.size()], beta_strings_[flat % beta_strings_.size()]};
  }

  Determinant draw_full_fock(CounterRng& rng) const {
    const Mask full = low_bits(shape_.n_orb);
    return {rng() & full, rng() & full};
  }

  SystemShape shape_;
  NoiseModel noise_;
  std::vector<Mask> alpha_strings_, beta_strings_;
  std::vector<double> cum_;
};

}  // namespace sqd
