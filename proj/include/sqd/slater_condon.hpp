#pragma once

// Slater-Condon matrix elements of H and S^2 between determinants.
//
// Mode order for fermionic signs: alpha orbitals 0..n-1, then beta orbitals
// 0..n-1. |x> = a+_{m1} a+_{m2} ... |vac> with m1 < m2 < ..., so a mode
// operator picks up (-1)^(number of occupied modes before it).

#include <array>
#include <bit>
#include <vector>

#include "sqd/errors.hpp"
#include "sqd/integrals.hpp"
#include "sqd/system.hpp"

namespace sqd {

namespace detail {

/// Parity of occupied modes strictly before (p, s) in the global order.
inline int parity_before(const Determinant& d, int p, Spin s) noexcept {
  int count = std::popcount(d.mask(s) & low_bits(p));
  if (s == Spin::beta) count += std::popcount(d.alpha);
  return count & 1;
}

}  // namespace detail

/// a_{p,s}|d>: returns 0 when the mode is empty, else the sign, and updates d.
inline int annihilate(Determinant& d, int p, Spin s) noexcept {
  if (!d.occupied(p, s)) return 0;
  const int sign = detail::parity_before(d, p, s) ? -1 : 1;
  d.mask(s) &= ~(Mask{1} << p);
  return sign;
}

/// a+_{p,s}|d>: returns 0 when the mode is occupied, else the sign, and updates d.
inline int create(Determinant& d, int p, Spin s) noexcept {
  if (d.occupied(p, s)) return 0;
  const int sign = detail::parity_before(d, p, s) ? -1 : 1;
  d.mask(s) |= Mask{1} << p;
  return sign;
}

/// Holes/particles of x relative to y (x = excitation applied to y).
struct Excitation {
  int degree_alpha = 0;
  int degree_beta = 0;
  std::array<int, 2> holes_alpha{}, parts_alpha{};
  std::array<int, 2> holes_beta{}, parts_beta{};
  int sign = 1;

  int degree() const noexcept { return degree_alpha + degree_beta; }
};

namespace detail {

inline int fill_indices(Mask m, std::array<int, 2>& out) noexcept {
  int k = 0;
  while (m && k < 2) {
    out[static_cast<std::size_t>(k++)] = std::countr_zero(m);
    m &= m - 1;
  }
  return k;
}

}  // namespace detail

/// Excitation taking y to x; degree() > 2 means no matrix element. The sign
/// is that of a+_a a+_b a_j a_i acting on y, with i < j and a < b, alpha
/// before beta when the spins differ.
inline Excitation excitation(const Determinant& x, const Determinant& y) {
  Excitation ex;
  const Mask pa = x.alpha & ~y.alpha, ha = y.alpha & ~x.alpha;
  const Mask pb = x.beta & ~y.beta, hb = y.beta & ~x.beta;
  ex.degree_alpha = std::popcount(pa);
  ex.degree_beta = std::popcount(pb);
  if (ex.degree_alpha != std::popcount(ha) || ex.degree_beta != std::popcount(hb))
    throw DomainError("determinants belong to different particle sectors");
  if (ex.degree() > 2) return ex;
  detail::fill_indices(pa, ex.parts_alpha);
  detail::fill_indices(ha, ex.holes_alpha);
  detail::fill_indices(pb, ex.parts_beta);
  detail::fill_indices(hb, ex.holes_beta);

  Determinant w = y;
  int sign = 1;
  for (int k = 0; k < ex.degree_alpha; ++k) sign *= annihilate(w, ex.holes_alpha[static_cast<std::size_t>(k)], Spin::alpha);
  for (int k = 0; k < ex.degree_beta; ++k) sign *= annihilate(w, ex.holes_beta[static_cast<std::size_t>(k)], Spin::beta);
  for (int k = ex.degree_beta - 1; k >= 0; --k) sign *= create(w, ex.parts_beta[static_cast<std::size_t>(k)], Spin::beta);
  for (int k = ex.degree_alpha - 1; k >= 0; --k) sign *= create(w, ex.parts_alpha[static_cast<std::size_t>(k)], Spin::alpha);
  ex.sign = sign;
  return ex;
}

/// <x|H|x>.
inline double diagonal_element(const Determinant& x, const IntegralSet& ints) {
  const auto oa = occupied_orbitals(x.alpha);
  const auto ob = occupied_orbitals(x.beta);
  const auto& g = ints.two_body;
  double e = ints.core_energy;
  for (int p : oa) e += ints.one_body(p, p);
  for (int p : ob) e += ints.one_body(p, p);
  auto same = [&](const std::vector<int>& occ) {
    double acc = 0.0;
    for (std::size_t i = 0; i < occ.size(); ++i)
      for (std::size_t j = 0; j < i; ++j) {
        const int p = occ[i], q = occ[j];
        acc += g(p, p, q, q) - g(p, q, q, p);
      }
    return acc;
  };
  e += same(oa) + same(ob);
  for (int p : oa)
    for (int q : ob) e += g(p, p, q, q);
  return e;
}

/// <x|H|y> for a single excitation i -> a in spin s (sign excluded).
inline double single_element(const Determinant& y, int i, int a, Spin s, const IntegralSet& ints) {
  const auto& g = ints.two_body;
  double v = ints.one_body(a, i);
  const Spin other = s == Spin::alpha ? Spin::beta : Spin::alpha;
  for (Mask m = y.mask(s); m; m &= m - 1) {
    const int j = std::countr_zero(m);
    v += g(a, i, j, j) - g(a, j, j, i);
  }
  for (Mask m = y.mask(other); m; m &= m - 1) {
    const int j = std::countr_zero(m);
    v += g(a, i, j, j);
  }
  return v;
}

/// <x|H|y>, including core energy on the diagonal; zero beyond doubles.
inline double h_element(const Determinant& x, const Determinant& y, const IntegralSet& ints) {
  if (x == y) return diagonal_element(x, ints);
  const Excitation ex = excitation(x, y);
  const auto& g = ints.two_body;
  switch (ex.degree()) {
    case 1:
      if (ex.degree_alpha == 1)
        return ex.sign * single_element(y, ex.holes_alpha[0], ex.parts_alpha[0], Spin::alpha, ints);
      return ex.sign * single_element(y, ex.holes_beta[0], ex.parts_beta[0], Spin::beta, ints);
    case 2: {
      if (ex.degree_alpha == 1) {
        const int i = ex.holes_alpha[0], a = ex.parts_alpha[0];
        const int j = ex.holes_beta[0], b = ex.parts_beta[0];
        return ex.sign * g(a, i, b, j);
      }
      const auto& h = ex.degree_alpha == 2 ? ex.holes_alpha : ex.holes_beta;
      const auto& p = ex.degree_alpha == 2 ? ex.parts_alpha : ex.parts_beta;
      const int i = h[0], j = h[1], a = p[0], b = p[1];
      return ex.sign * (g(a, i, b, j) - g(a, j, b, i));
    }
    default:
      return 0.0;
  }
}

/// <x|S^2|y> with S^2 = S- S+ + Sz (Sz + 1).
inline double s2_element(const Determinant& x, const Determinant& y) {
  const int na = std::popcount(x.alpha), nb = std::popcount(x.beta);
  if (na != std::popcount(y.alpha) || nb != std::popcount(y.beta))
    throw DomainError("determinants belong to different particle sectors");
  if (x == y) {
    const double sz = 0.5 * (na - nb);
    return static_cast<double>(std::popcount(x.beta & ~x.alpha)) + sz * (sz + 1.0);
  }
  // Off-diagonal: orbital p goes alpha -> beta and q goes beta -> alpha.
  const Mask da = x.alpha ^ y.alpha, db = x.beta ^ y.beta;
  if (da != db || std::popcount(da) != 2) return 0.0;
  const Mask p_bit = y.alpha & da, q_bit = y.beta & db;
  if (std::popcount(p_bit) != 1 || std::popcount(q_bit) != 1) return 0.0;
  const int p = std::countr_zero(p_bit), q = std::countr_zero(q_bit);
  Determinant w = y;
  int sign = annihilate(w, q, Spin::beta);
  sign *= create(w, q, Spin::alpha);
  sign *= annihilate(w, p, Spin::alpha);
  sign *= create(w, p, Spin::beta);
  return sign != 0 && w == x ? static_cast<double>(sign) : 0.0;
}

/// Calls f(y) for every sector determinant y != x connected to x by a single
/// or (if `doubles`) double excitation. Each y is visited once.
template <class F>
void for_each_connected(const Determinant& x, int n_orb, bool doubles, F&& f) {
  const Mask full = low_bits(n_orb);
  const auto oa = occupied_orbitals(x.alpha), ob = occupied_orbitals(x.beta);
  const auto va = occupied_orbitals(full & ~x.alpha), vb = occupied_orbitals(full & ~x.beta);
  auto flip = [](Mask m, int i, int a) { return (m & ~(Mask{1} << i)) | (Mask{1} << a); };
  for (int i : oa)
    for (int a : va) f(Determinant{flip(x.alpha, i, a), x.beta});
  for (int i : ob)
    for (int a : vb) f(Determinant{x.alpha, flip(x.beta, i, a)});
  if (!doubles) return;
  auto same_spin = [&](const std::vector<int>& occ, const std::vector<int>& vir, bool alpha) {
    for (std::size_t i = 0; i < occ.size(); ++i)
      for (std::size_t j = i + 1; j < occ.size(); ++j)
        for (std::size_t a = 0; a < vir.size(); ++a)
          for (std::size_t b = a + 1; b < vir.size(); ++b) {
            const Mask m = alpha ? x.alpha : x.beta;
            const Mask nm = flip(flip(m, occ[i], vir[a]), occ[j], vir[b]);
            f(alpha ? Determinant{nm, x.beta} : Determinant{x.alpha, nm});
          }
  };
  same_spin(oa, va, true);
  same_spin(ob, vb, false);
  for (int i : oa)
    for (int a : va)
      for (int j : ob)
        for (int b : vb) f(Determinant{flip(x.alpha, i, a), flip(x.beta, j, b)});
}

/// x itself followed by every single and double excitation within the sector.
inline std::vector<Determinant> connected_determinants(const Determinant& x, const SystemShape& shape) {
  if (!fits_shape(x, shape)) throw DomainError("determinant has bits above n_orb");
  std::vector<Determinant> out{x};
  for_each_connected(x, shape.n_orb, true, [&](const Determinant& y) { out.push_back(y); });
  return out;
}

}  // namespace sqd
