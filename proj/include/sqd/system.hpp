#pragma once

// Determinants, the Jordan-Wigner bitstring convention and sector counting.
//
// A determinant is a pair of spin-resolved occupation masks: bit p of
// `alpha` is x_{p,up}, bit p of `beta` is x_{p,down}. The textual form is
// the down-spin half followed by the up-spin half, each written from the
// highest orbital to orbital 0:
//
//   x_{n-1,dn} ... x_{0,dn} x_{n-1,up} ... x_{0,up}
//
// so the closed-shell reference of two electrons in two orbitals is "0101".

#include <algorithm>
#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqd/errors.hpp"

namespace sqd {

using Mask = std::uint64_t;

inline constexpr int kMaxOrbitals = 64;

enum class Spin : int { alpha = 0, beta = 1 };

struct SystemShape {
  int n_orb = 0;
  int n_alpha = 0;
  int n_beta = 0;

  constexpr int n_qubits() const noexcept { return 2 * n_orb; }
  constexpr int n_electrons() const noexcept { return n_alpha + n_beta; }
  constexpr int n_spin(Spin s) const noexcept { return s == Spin::alpha ? n_alpha : n_beta; }

  void validate() const {
    if (n_orb < 0 || n_orb > kMaxOrbitals)
      throw DomainError("n_orb must lie in [0, 64], got " + std::to_string(n_orb));
    if (n_alpha < 0 || n_alpha > n_orb || n_beta < 0 || n_beta > n_orb)
      throw DomainError("electron counts must lie in [0, n_orb]");
  }

  friend constexpr bool operator==(const SystemShape&, const SystemShape&) = default;
};

inline SystemShape make_shape(int n_orb, int n_alpha, int n_beta) {
  SystemShape s{n_orb, n_alpha, n_beta};
  s.validate();
  return s;
}

constexpr Mask low_bits(int n) noexcept {
  return n >= 64 ? ~Mask{0} : (Mask{1} << n) - 1;
}

/// One occupation-number configuration. Ordering is lexicographic on
/// (alpha, beta), the canonical order used for every determinant list.
struct Determinant {
  Mask alpha = 0;
  Mask beta = 0;

  constexpr Mask mask(Spin s) const noexcept { return s == Spin::alpha ? alpha : beta; }
  constexpr Mask& mask(Spin s) noexcept { return s == Spin::alpha ? alpha : beta; }

  constexpr bool occupied(int p, Spin s) const noexcept { return (mask(s) >> p) & 1U; }

  friend constexpr auto operator<=>(const Determinant&, const Determinant&) = default;
};

struct DeterminantHash {
  std::size_t operator()(const Determinant& d) const noexcept {
    std::uint64_t h = d.alpha * 0x9e3779b97f4a7c15ULL;
    h ^= d.beta + 0x7f4a7c159e3779b9ULL + (h << 6) + (h >> 2);
    h = (h ^ (h >> 31)) * 0xbf58476d1ce4e5b9ULL;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

struct SpinCounts {
  int up = 0;
  int dn = 0;
  constexpr int total() const noexcept { return up + dn; }
  friend constexpr bool operator==(const SpinCounts&, const SpinCounts&) = default;
};

constexpr SpinCounts hamming_weights(const Determinant& d) noexcept {
  return {std::popcount(d.alpha), std::popcount(d.beta)};
}

constexpr bool in_sector(const Determinant& d, const SystemShape& shape) noexcept {
  return std::popcount(d.alpha) == shape.n_alpha && std::popcount(d.beta) == shape.n_beta;
}

constexpr bool fits_shape(const Determinant& d, const SystemShape& shape) noexcept {
  const Mask outside = ~low_bits(shape.n_orb);
  return (d.alpha & outside) == 0 && (d.beta & outside) == 0;
}

inline Determinant rhf_determinant(const SystemShape& shape) {
  shape.validate();
  return {low_bits(shape.n_alpha), low_bits(shape.n_beta)};
}

constexpr Determinant spin_inverse(const Determinant& d) noexcept { return {d.beta, d.alpha}; }

/// Exact binomial coefficient; throws BudgetError on 64-bit overflow.
inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 acc = 1;
  for (int i = 1; i <= k; ++i) {
    acc = acc * static_cast<unsigned __int128>(n - k + i) / static_cast<unsigned __int128>(i);
    if (acc > std::numeric_limits<std::uint64_t>::max())
      throw BudgetError("binomial coefficient overflows 64 bits");
  }
  return static_cast<std::uint64_t>(acc);
}

inline std::uint64_t sector_dimension(const SystemShape& shape) {
  shape.validate();
  const unsigned __int128 d = static_cast<unsigned __int128>(binomial(shape.n_orb, shape.n_alpha)) *
                              binomial(shape.n_orb, shape.n_beta);
  if (d > std::numeric_limits<std::uint64_t>::max())
    throw BudgetError("sector dimension overflows 64 bits");
  return static_cast<std::uint64_t>(d);
}

/// Render in the down-then-up string convention; length 2*n_orb.
inline std::string render_bitstring(const Determinant& d, int n_orb) {
  std::string out(static_cast<std::size_t>(2 * n_orb), '0');
  for (int p = 0; p < n_orb; ++p) {
    if ((d.beta >> p) & 1U) out[static_cast<std::size_t>(n_orb - 1 - p)] = '1';
    if ((d.alpha >> p) & 1U) out[static_cast<std::size_t>(2 * n_orb - 1 - p)] = '1';
  }
  return out;
}

/// Inverse of render_bitstring. Only the length is checked against the
/// shape; particle counts are not, since raw samples may violate them.
inline Determinant parse_bitstring(std::string_view text, const SystemShape& shape) {
  const auto n = static_cast<std::size_t>(shape.n_orb);
  if (text.size() != 2 * n)
    throw FormatError("bitstring '" + std::string(text) + "' has length " +
                      std::to_string(text.size()) + ", expected " + std::to_string(2 * n));
  Determinant d;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    const char c = text[i];
    if (c != '0' && c != '1')
      throw FormatError("bitstring '" + std::string(text) + "' contains illegal character '" +
                        std::string(1, c) + "'");
    if (c == '0') continue;
    if (i < n)
      d.beta |= Mask{1} << (n - 1 - i);
    else
      d.alpha |= Mask{1} << (2 * n - 1 - i);
  }
  return d;
}

/// All n-orbital strings with k set bits, ascending.
inline std::vector<Mask> enumerate_strings(int n_orb, int k) {
  std::vector<Mask> out;
  if (k < 0 || k > n_orb) return out;
  out.reserve(static_cast<std::size_t>(binomial(n_orb, k)));
  if (k == 0) {
    out.push_back(0);
    return out;
  }
  Mask v = low_bits(k);
  const Mask limit = low_bits(n_orb);
  while (true) {
    out.push_back(v);
    if (v == (limit & ~low_bits(n_orb - k))) break;
    // Gosper's hack: next integer with the same popcount.
    const Mask t = v | (v - 1);
    v = (t + 1) | (((~t & (t + 1)) - 1) >> (std::countr_zero(v) + 1));
  }
  return out;
}

/// Every determinant of the sector in canonical order.
inline std::vector<Determinant> enumerate_sector(const SystemShape& shape) {
  shape.validate();
  const auto as = enumerate_strings(shape.n_orb, shape.n_alpha);
  const auto bs = enumerate_strings(shape.n_orb, shape.n_beta);
  std::vector<Determinant> out;
  out.reserve(as.size() * bs.size());
  for (Mask a : as)
    for (Mask b : bs) out.push_back({a, b});
  return out;
}

/// Occupied orbital indices of a mask, ascending.
inline std::vector<int> occupied_orbitals(Mask m) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(std::popcount(m)));
  while (m) {
    out.push_back(std::countr_zero(m));
    m &= m - 1;
  }
  return out;
}

/// Spin-orbital index used for length-2n vectors: alpha orbitals first.
constexpr int spin_orbital(int p, Spin s, int n_orb) noexcept {
  return s == Spin::alpha ? p : n_orb + p;
}

}  // namespace sqd
