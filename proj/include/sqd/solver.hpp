#pragma once

// Projection of H (and S^2) onto a determinant batch, the penalized ground
// solve, and quantities derived from the subspace eigenvector.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <vector>

#include "sqd/davidson.hpp"
#include "sqd/errors.hpp"
#include "sqd/integrals.hpp"
#include "sqd/parallel.hpp"
#include "sqd/slater_condon.hpp"
#include "sqd/system.hpp"

namespace sqd {

struct Batch {
  std::vector<Determinant> determinants;  // sorted, unique
  int index = 0;

  std::size_t size() const noexcept { return determinants.size(); }
};

/// Sorts and deduplicates.
inline Batch make_batch(std::vector<Determinant> dets, int index = 0) {
  std::sort(dets.begin(), dets.end());
  dets.erase(std::unique(dets.begin(), dets.end()), dets.end());
  return Batch{std::move(dets), index};
}

inline Batch full_sector_batch(const SystemShape& shape) { return Batch{enumerate_sector(shape), 0}; }

struct PenaltyConfig {
  double lambda = 0.2;
  double target_s = 0.0;

  double target_s2() const noexcept { return target_s * (target_s + 1.0); }
  void validate() const {
    if (!(lambda >= 0.0)) throw DomainError("penalty lambda must be non-negative");
    if (!(target_s >= 0.0)) throw DomainError("target spin must be non-negative");
  }
};

struct SolverOptions {
  DavidsonOptions davidson;
  bool compute_variance = true;
  int workers = 1;  // threads used for matrix assembly inside one solve
};

struct SubspaceSolution {
  Eigen::VectorXd amplitudes;
  double energy = 0.0;            // <psi|H|psi>, no penalty
  double penalized_energy = 0.0;  // eigenvalue of H + penalty
  double s2 = 0.0;
  double variance = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd occupancies;  // length 2 n_orb, alpha block first
  int batch_index = 0;
  int iterations = 0;
  double residual = 0.0;
};

/// Determinant -> position lookup for a batch.
class DeterminantIndex {
 public:
  explicit DeterminantIndex(const std::vector<Determinant>& dets) {
    map_.reserve(dets.size() * 2);
    for (std::size_t i = 0; i < dets.size(); ++i) map_.emplace(dets[i], static_cast<Eigen::Index>(i));
  }
  Eigen::Index find(const Determinant& d) const {
    const auto it = map_.find(d);
    return it == map_.end() ? -1 : it->second;
  }

 private:
  std::unordered_map<Determinant, Eigen::Index, DeterminantHash> map_;
};

/// Calls f(y) for each determinant coupled to x by one spin exchange
/// (orbital p alpha-only, orbital q beta-only; swap their spins).
template <class F>
void for_each_spin_exchange(const Determinant& x, F&& f) {
  const Mask a_only = x.alpha & ~x.beta, b_only = x.beta & ~x.alpha;
  for (Mask pa = a_only; pa; pa &= pa - 1) {
    const Mask p = pa & (~pa + 1);
    for (Mask qb = b_only; qb; qb &= qb - 1) {
      const Mask q = qb & (~qb + 1);
      f(Determinant{(x.alpha & ~p) | q, (x.beta & ~q) | p});
    }
  }
}

struct ProjectedOperators {
  Eigen::SparseMatrix<double> h;
  Eigen::SparseMatrix<double> s2;
};

/// <x|H|y> and <x|S^2|y> over batch members.
inline ProjectedOperators project_operators(const Batch& batch, const IntegralSet& ints, int workers = 1) {
  const auto& dets = batch.determinants;
  const auto d = static_cast<Eigen::Index>(dets.size());
  if (d == 0) throw DomainError("empty batch");
  for (const auto& x : dets)
    if (!in_sector(x, ints.shape) || !fits_shape(x, ints.shape))
      throw DomainError("batch determinant " + render_bitstring(x, ints.n_orb()) + " is outside the sector");

  using Triplet = Eigen::Triplet<double>;
  const bool doubles = !two_body_is_density_only(ints);
  const int n = ints.n_orb();
  const int na = ints.shape.n_alpha, nb = ints.shape.n_beta;
  double connected = static_cast<double>(na * (n - na) + nb * (n - nb));
  if (doubles) connected += 0.25 * na * na * (n - na) * (n - na) + 0.25 * nb * nb * (n - nb) * (n - nb) +
                            static_cast<double>(na * (n - na)) * nb * (n - nb);
  const bool pairwise = 0.5 * static_cast<double>(d) < 4.0 * connected;

  const int w = std::max(1, workers);
  const std::size_t chunks = static_cast<std::size_t>(std::min<Eigen::Index>(d, 8 * w));
  std::vector<std::vector<Triplet>> th(chunks), ts(chunks);
  DeterminantIndex index(pairwise ? std::vector<Determinant>{} : dets);

  parallel_for(chunks, w, [&](std::size_t c) {
    const Eigen::Index lo = d * static_cast<Eigen::Index>(c) / static_cast<Eigen::Index>(chunks);
    const Eigen::Index hi = d * static_cast<Eigen::Index>(c + 1) / static_cast<Eigen::Index>(chunks);
    auto& H = th[c];
    auto& S = ts[c];
    for (Eigen::Index i = lo; i < hi; ++i) {
      const Determinant& x = dets[static_cast<std::size_t>(i)];
      H.emplace_back(i, i, diagonal_element(x, ints));
      S.emplace_back(i, i, s2_element(x, x));
      if (pairwise) {
        for (Eigen::Index j = i + 1; j < d; ++j) {
          const Determinant& y = dets[static_cast<std::size_t>(j)];
          const int dist = std::popcount(x.alpha ^ y.alpha) + std::popcount(x.beta ^ y.beta);
          if (dist > 4) continue;
          const double hv = h_element(x, y, ints);
          if (hv != 0.0) {
            H.emplace_back(i, j, hv);
            H.emplace_back(j, i, hv);
          }
          if (dist == 4) {
            const double sv = s2_element(x, y);
            if (sv != 0.0) {
              S.emplace_back(i, j, sv);
              S.emplace_back(j, i, sv);
            }
          }
        }
      } else {
        for_each_connected(x, n, doubles, [&](const Determinant& y) {
          const Eigen::Index j = index.find(y);
          if (j < 0) return;
          const double hv = h_element(y, x, ints);
          if (hv != 0.0) H.emplace_back(j, i, hv);
        });
        for_each_spin_exchange(x, [&](const Determinant& y) {
          const Eigen::Index j = index.find(y);
          if (j < 0) return;
          const double sv = s2_element(y, x);
          if (sv != 0.0) S.emplace_back(j, i, sv);
        });
      }
    }
  });

  ProjectedOperators out;
  out.h.resize(d, d);
  out.s2.resize(d, d);
  std::vector<Triplet> all;
  for (auto& v : th) all.insert(all.end(), v.begin(), v.end());
  out.h.setFromTriplets(all.begin(), all.end());
  all.clear();
  for (auto& v : ts) all.insert(all.end(), v.begin(), v.end());
  out.s2.setFromTriplets(all.begin(), all.end());
  out.h.makeCompressed();
  out.s2.makeCompressed();
  return out;
}

/// H_sub + lambda (S2_sub - s(s+1))^2.
inline Eigen::SparseMatrix<double> penalized_matrix(const ProjectedOperators& ops, const PenaltyConfig& penalty) {
  penalty.validate();
  if (penalty.lambda == 0.0) return ops.h;
  Eigen::SparseMatrix<double> id(ops.s2.rows(), ops.s2.cols());
  id.setIdentity();
  const Eigen::SparseMatrix<double> shifted = ops.s2 - penalty.target_s2() * id;
  Eigen::SparseMatrix<double> sq = shifted * shifted;
  Eigen::SparseMatrix<double> out = ops.h + penalty.lambda * sq;
  out.makeCompressed();
  return out;
}

inline Eigen::SparseMatrix<double> project_hamiltonian(const Batch& batch, const IntegralSet& ints,
                                                       const PenaltyConfig& penalty, int workers = 1) {
  return penalized_matrix(project_operators(batch, ints, workers), penalty);
}

/// <n_{p sigma}> = sum_x |c_x|^2 x_{p sigma}; alpha block first.
inline Eigen::VectorXd occupancies(const Eigen::VectorXd& amplitudes, const Batch& batch, int n_orb) {
  if (amplitudes.size() != static_cast<Eigen::Index>(batch.size()))
    throw DomainError("amplitude vector does not match batch size");
  Eigen::VectorXd occ = Eigen::VectorXd::Zero(2 * n_orb);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double w = amplitudes(static_cast<Eigen::Index>(i)) * amplitudes(static_cast<Eigen::Index>(i));
    const Determinant& x = batch.determinants[i];
    for (Mask m = x.alpha; m; m &= m - 1) occ(std::countr_zero(m)) += w;
    for (Mask m = x.beta; m; m &= m - 1) occ(n_orb + std::countr_zero(m)) += w;
  }
  return occ;
}

inline Eigen::VectorXd occupancies(const SubspaceSolution& sol, const Batch& batch, int n_orb) {
  return occupancies(sol.amplitudes, batch, n_orb);
}

inline Eigen::VectorXd average_occupancies(const std::vector<Eigen::VectorXd>& per_batch) {
  if (per_batch.empty()) throw DomainError("no occupancy vectors to average");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(per_batch.front().size());
  for (const auto& v : per_batch) {
    if (v.size() != acc.size()) throw DomainError("occupancy vectors differ in length");
    acc += v;
  }
  return acc / static_cast<double>(per_batch.size());
}

/// <psi|H^2|psi> - <psi|H|psi>^2 with H applied over the full sector.
inline double hamiltonian_variance(const Eigen::VectorXd& amplitudes, const Batch& batch, const IntegralSet& ints) {
  const bool doubles = !two_body_is_density_only(ints);
  std::unordered_map<Determinant, double, DeterminantHash> hpsi;
  hpsi.reserve(batch.size() * 8);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double c = amplitudes(static_cast<Eigen::Index>(i));
    if (c == 0.0) continue;
    const Determinant& x = batch.determinants[i];
    hpsi[x] += diagonal_element(x, ints) * c;
    for_each_connected(x, ints.n_orb(), doubles, [&](const Determinant& y) {
      const double v = h_element(y, x, ints);
      if (v != 0.0) hpsi[y] += v * c;
    });
  }
  // sum in canonical order so the result is independent of hash layout
  std::vector<std::pair<Determinant, double>> terms(hpsi.begin(), hpsi.end());
  std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double h2 = 0.0;
  for (const auto& [y, v] : terms) h2 += v * v;
  double h1 = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto it = hpsi.find(batch.determinants[i]);
    if (it != hpsi.end()) h1 += amplitudes(static_cast<Eigen::Index>(i)) * it->second;
  }
  return h2 - h1 * h1;
}

inline double hamiltonian_variance(const SubspaceSolution& sol, const Batch& batch, const IntegralSet& ints) {
  return hamiltonian_variance(sol.amplitudes, batch, ints);
}

/// Penalized ground solve on one batch.
inline SubspaceSolution solve_batch(const Batch& batch, const IntegralSet& ints, const PenaltyConfig& penalty,
                                    const SolverOptions& opts = {}) {
  const ProjectedOperators ops = project_operators(batch, ints, opts.workers);
  const Eigen::SparseMatrix<double> A = penalized_matrix(ops, penalty);
  const EigenPair ep = davidson_ground(A, opts.davidson);
  SubspaceSolution sol;
  sol.amplitudes = ep.vector;
  sol.penalized_energy = ep.value;
  sol.energy = ep.vector.dot(ops.h * ep.vector);
  sol.s2 = ep.vector.dot(ops.s2 * ep.vector);
  sol.occupancies = occupancies(ep.vector, batch, ints.n_orb());
  sol.batch_index = batch.index;
  sol.iterations = ep.iterations;
  sol.residual = ep.residual;
  if (opts.compute_variance) sol.variance = hamiltonian_variance(ep.vector, batch, ints);
  return sol;
}

/// Solves every batch; `workers` threads run independent batches.
inline std::vector<SubspaceSolution> solve_batches(const std::vector<Batch>& batches, const IntegralSet& ints,
                                                   const PenaltyConfig& penalty, const SolverOptions& opts,
                                                   int workers) {
  std::vector<SubspaceSolution> out(batches.size());
  SolverOptions inner = opts;
  inner.workers = 1;
  parallel_for(batches.size(), workers, [&](std::size_t k) { out[k] = solve_batch(batches[k], ints, penalty, inner); });
  return out;
}

// ---------------------------------------------------------------------------
// Density matrices

struct DensityMatrices {
  int n_orb = 0;
  std::array<Eigen::MatrixXd, 2> one_rdm;  // [sigma](p, q) = <a+_p a_q>
  // [2*sigma + tau] at ((p*n + q)*n + r)*n + s = <a+_{p sigma} a+_{q tau} a_{s tau} a_{r sigma}>
  std::array<std::vector<double>, 4> two_rdm;

  double two(int sigma, int tau, int p, int q, int r, int s) const {
    const auto n = static_cast<std::size_t>(n_orb);
    return two_rdm[static_cast<std::size_t>(2 * sigma + tau)]
                  [((static_cast<std::size_t>(p) * n + static_cast<std::size_t>(q)) * n + static_cast<std::size_t>(r)) * n +
                   static_cast<std::size_t>(s)];
  }
};

/// RDMs of the batch state, keeping only terms that stay inside the batch.
inline DensityMatrices compute_rdms(const Eigen::VectorXd& c, const Batch& batch, const SystemShape& shape) {
  const int n = shape.n_orb;
  const auto nn = static_cast<std::size_t>(n);
  DensityMatrices out;
  out.n_orb = n;
  for (auto& m : out.one_rdm) m = Eigen::MatrixXd::Zero(n, n);
  for (auto& t : out.two_rdm) t.assign(nn * nn * nn * nn, 0.0);
  const DeterminantIndex index(batch.determinants);
  const Spin spins[2] = {Spin::alpha, Spin::beta};

  for (std::size_t iy = 0; iy < batch.size(); ++iy) {
    const double cy = c(static_cast<Eigen::Index>(iy));
    if (cy == 0.0) continue;
    const Determinant& y = batch.determinants[iy];
    for (int si = 0; si < 2; ++si) {
      const Spin s = spins[si];
      for (Mask mq = y.mask(s); mq; mq &= mq - 1) {
        const int q = std::countr_zero(mq);
        Determinant y1 = y;
        const int s1 = annihilate(y1, q, s);
        for (int p = 0; p < n; ++p) {
          Determinant x = y1;
          const int s2 = create(x, p, s);
          if (s2 == 0) continue;
          const Eigen::Index ix = index.find(x);
          if (ix < 0) continue;
          out.one_rdm[static_cast<std::size_t>(si)](p, q) += c(ix) * cy * s1 * s2;
        }
      }
    }
    for (int si = 0; si < 2; ++si)
      for (int ti = 0; ti < 2; ++ti) {
        const Spin sg = spins[si], tu = spins[ti];
        auto& T = out.two_rdm[static_cast<std::size_t>(2 * si + ti)];
        for (Mask mr = y.mask(sg); mr; mr &= mr - 1) {
          const int r = std::countr_zero(mr);
          Determinant y1 = y;
          const int f1 = annihilate(y1, r, sg);
          for (Mask ms = y1.mask(tu); ms; ms &= ms - 1) {
            const int s = std::countr_zero(ms);
            Determinant y2 = y1;
            const int f2 = annihilate(y2, s, tu);
            for (int q = 0; q < n; ++q) {
              Determinant y3 = y2;
              const int f3 = create(y3, q, tu);
              if (f3 == 0) continue;
              for (int p = 0; p < n; ++p) {
                Determinant x = y3;
                const int f4 = create(x, p, sg);
                if (f4 == 0) continue;
                const Eigen::Index ix = index.find(x);
                if (ix < 0) continue;
                T[((static_cast<std::size_t>(p) * nn + static_cast<std::size_t>(q)) * nn + static_cast<std::size_t>(r)) * nn +
                  static_cast<std::size_t>(s)] += c(ix) * cy * f1 * f2 * f3 * f4;
              }
            }
          }
        }
      }
  }
  return out;
}

inline DensityMatrices compute_rdms(const SubspaceSolution& sol, const Batch& batch, const SystemShape& shape) {
  return compute_rdms(sol.amplitudes, batch, shape);
}

/// E_0 + sum h_pq G_pq + 1/2 sum (pr|qs) G_pqrs.
inline double energy_from_rdms(const DensityMatrices& rdm, const IntegralSet& ints) {
  const int n = ints.n_orb();
  if (rdm.n_orb != n) throw DomainError("RDM dimension does not match integrals");
  double e = ints.core_energy;
  for (int s = 0; s < 2; ++s) e += (ints.one_body.array() * rdm.one_rdm[static_cast<std::size_t>(s)].array()).sum();
  double two = 0.0;
  for (int st = 0; st < 4; ++st)
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q)
        for (int r = 0; r < n; ++r)
          for (int s = 0; s < n; ++s) two += ints.two_body(p, r, q, s) * rdm.two(st / 2, st % 2, p, q, r, s);
  return e + 0.5 * two;
}

/// Mean of RDMs over batches.
inline DensityMatrices average_rdms(const std::vector<DensityMatrices>& list) {
  if (list.empty()) throw DomainError("no density matrices to average");
  DensityMatrices out = list.front();
  for (std::size_t k = 1; k < list.size(); ++k) {
    for (int s = 0; s < 2; ++s) out.one_rdm[static_cast<std::size_t>(s)] += list[k].one_rdm[static_cast<std::size_t>(s)];
    for (int st = 0; st < 4; ++st)
      for (std::size_t i = 0; i < out.two_rdm[static_cast<std::size_t>(st)].size(); ++i)
        out.two_rdm[static_cast<std::size_t>(st)][i] += list[k].two_rdm[static_cast<std::size_t>(st)][i];
  }
  const double inv = 1.0 / static_cast<double>(list.size());
  for (auto& m : out.one_rdm) m *= inv;
  for (auto& t : out.two_rdm)
    for (double& v : t) v *= inv;
  return out;
}

/// n~_t = sum_sigma (Omega^T G_sigma Omega)_tt.
inline Eigen::VectorXd localized_occupancies(const DensityMatrices& rdm, const Eigen::MatrixXd& omega) {
  if (omega.rows() != rdm.n_orb || omega.cols() != rdm.n_orb) throw DomainError("rotation dimension mismatch");
  const Eigen::MatrixXd g = omega.transpose() * (rdm.one_rdm[0] + rdm.one_rdm[1]) * omega;
  return g.diagonal();
}

// ---------------------------------------------------------------------------
// Orbital optimization

struct OrbitalOptState {
  Eigen::MatrixXd kappa;
  Eigen::MatrixXd velocity;
};

struct OrbitalOptStep {
  OrbitalOptState state;
  Eigen::MatrixXd gradient;  // antisymmetric, d E / d kappa_pq for p < q mirrored
  double energy = 0.0;       // cost at the input kappa
};

/// d E / d Omega for E(Omega) = E_0 + tr(G1 Omega^T h Omega) + 1/2 <g~, G2>.
inline Eigen::MatrixXd energy_gradient_omega(const IntegralSet& ints, const DensityMatrices& rdm,
                                             const Eigen::MatrixXd& omega) {
  const int n = ints.n_orb();
  const Eigen::MatrixXd g1 = rdm.one_rdm[0] + rdm.one_rdm[1];
  Eigen::MatrixXd grad = ints.one_body * omega * (g1 + g1.transpose());
  // chemist-ordered spin-summed 2-RDM D(p,r,q,s) = sum G(p,q,r,s), symmetrized
  TwoBodyTensor D(n);
  for (int st = 0; st < 4; ++st)
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q)
        for (int r = 0; r < n; ++r)
          for (int s = 0; s < n; ++s) D(p, r, q, s) += rdm.two(st / 2, st % 2, p, q, r, s);
  TwoBodyTensor Dsym(n);
  for (int p = 0; p < n; ++p)
    for (int r = 0; r < n; ++r)
      for (int q = 0; q < n; ++q)
        for (int s = 0; s < n; ++s)
          Dsym(p, r, q, s) = 0.125 * (D(p, r, q, s) + D(r, p, q, s) + D(p, r, s, q) + D(r, p, s, q) + D(q, s, p, r) +
                                      D(s, q, p, r) + D(q, s, r, p) + D(s, q, r, p));
  TwoBodyTensor T = ints.two_body;
  for (int axis = 1; axis < 4; ++axis) T = transform_index(T, omega, axis);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double acc = 0.0;
      for (int r = 0; r < n; ++r)
        for (int q = 0; q < n; ++q)
          for (int s = 0; s < n; ++s) acc += T(a, r, q, s) * Dsym(b, r, q, s);
      grad(a, b) += 2.0 * acc;
    }
  return grad;
}

/// Gradient of E(kappa) = energy_from_rdms(rdm, rotate(ints, exp(kappa))):
/// analytic in Omega, central differences (step `h`) for d Omega / d kappa.
inline Eigen::MatrixXd kappa_gradient(const IntegralSet& ints, const DensityMatrices& rdm, const Eigen::MatrixXd& kappa,
                                      double h = 1e-6) {
  const int n = ints.n_orb();
  const Eigen::MatrixXd omega = exponentiate_kappa(kappa).omega;
  const Eigen::MatrixXd dE = energy_gradient_omega(ints, rdm, omega);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = p + 1; q < n; ++q) {
      Eigen::MatrixXd kp = kappa, km = kappa;
      kp(p, q) += h;
      kp(q, p) -= h;
      km(p, q) -= h;
      km(q, p) += h;
      const Eigen::MatrixXd dOmega = (exponentiate_kappa(kp).omega - exponentiate_kappa(km).omega) / (2.0 * h);
      const double g = (dE.array() * dOmega.array()).sum();
      grad(p, q) = g;
      grad(q, p) = -g;
    }
  return grad;
}

/// One momentum step on the batch-averaged Rayleigh quotient:
/// v <- momentum v - lr grad, kappa <- kappa + v.
inline OrbitalOptStep orbital_opt_step(const IntegralSet& ints, const std::vector<DensityMatrices>& rdms,
                                       const OrbitalOptState& state, double lr, double momentum) {
  const int n = ints.n_orb();
  require_antisymmetric(state.kappa);
  const DensityMatrices avg = average_rdms(rdms);
  OrbitalOptStep out;
  out.energy = energy_from_rdms(avg, rotate_integrals(ints, exponentiate_kappa(state.kappa).omega));
  out.gradient = kappa_gradient(ints, avg, state.kappa);
  const Eigen::MatrixXd v0 = state.velocity.size() == 0 ? Eigen::MatrixXd::Zero(n, n) : state.velocity;
  out.state.velocity = momentum * v0 - lr * out.gradient;
  out.state.kappa = state.kappa + out.state.velocity;
  return out;
}

inline OrbitalOptStep orbital_opt_step(const IntegralSet& ints, const std::vector<Batch>& batches,
                                       const std::vector<SubspaceSolution>& solutions, const OrbitalOptState& state,
                                       double lr, double momentum) {
  if (batches.size() != solutions.size() || batches.empty()) throw DomainError("batches and solutions mismatch");
  std::vector<DensityMatrices> rdms;
  rdms.reserve(batches.size());
  for (std::size_t k = 0; k < batches.size(); ++k) rdms.push_back(compute_rdms(solutions[k], batches[k], ints.shape));
  return orbital_opt_step(ints, rdms, state, lr, momentum);
}

}  // namespace sqd
