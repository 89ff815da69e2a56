#pragma once

// Hamiltonian coefficients E_0, h_pr and (pr|qs) in chemist notation:
//
//   H = E_0 + sum_{pr,s} h_pr a+_ps a_rs
//           + 1/2 sum_{prqs,st} (pr|qs) a+_ps a+_qt a_st a_rs
//
// The two-body tensor is held densely with its 8-fold permutational
// symmetry expanded, so lookups in the matrix-element loops never branch on
// index order.

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "sqd/errors.hpp"
#include "sqd/random.hpp"
#include "sqd/system.hpp"

namespace sqd {

/// Dense real (pr|qs) tensor; element (p,r,q,s) at ((p*n + r)*n + q)*n + s.
class TwoBodyTensor {
 public:
  TwoBodyTensor() = default;
  explicit TwoBodyTensor(int n_orb)
      : n_(n_orb), data_(static_cast<std::size_t>(n_orb) * n_orb * n_orb * n_orb, 0.0) {}

  int n_orb() const noexcept { return n_; }

  double operator()(int p, int r, int q, int s) const noexcept { return data_[index(p, r, q, s)]; }
  double& operator()(int p, int r, int q, int s) noexcept { return data_[index(p, r, q, s)]; }

  /// Writes `value` into all eight symmetry images of (pr|qs).
  void set_symmetric(int p, int r, int q, int s, double value) noexcept {
    (*this)(p, r, q, s) = value;
    (*this)(r, p, q, s) = value;
    (*this)(p, r, s, q) = value;
    (*this)(r, p, s, q) = value;
    (*this)(q, s, p, r) = value;
    (*this)(s, q, p, r) = value;
    (*this)(q, s, r, p) = value;
    (*this)(s, q, r, p) = value;
  }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

 private:
  std::size_t index(int p, int r, int q, int s) const noexcept {
    const auto n = static_cast<std::size_t>(n_);
    return ((static_cast<std::size_t>(p) * n + static_cast<std::size_t>(r)) * n +
            static_cast<std::size_t>(q)) * n + static_cast<std::size_t>(s);
  }

  int n_ = 0;
  std::vector<double> data_;
};

struct IntegralSet {
  SystemShape shape;
  double core_energy = 0.0;
  Eigen::MatrixXd one_body;
  TwoBodyTensor two_body;

  int n_orb() const noexcept { return shape.n_orb; }

  static IntegralSet zeros(const SystemShape& shape) {
    shape.validate();
    IntegralSet out;
    out.shape = shape;
    out.one_body = Eigen::MatrixXd::Zero(shape.n_orb, shape.n_orb);
    out.two_body = TwoBodyTensor(shape.n_orb);
    return out;
  }

  /// Checks dimensions, h symmetry and 8-fold (pr|qs) symmetry.
  void validate(double tol = 1e-10) const {
    shape.validate();
    const int n = shape.n_orb;
    if (one_body.rows() != n || one_body.cols() != n || two_body.n_orb() != n)
      throw DomainError("integral dimensions do not match n_orb");
    if ((one_body - one_body.transpose()).cwiseAbs().maxCoeff() > tol)
      throw DomainError("one-body integrals are not symmetric");
    for (int p = 0; p < n; ++p)
      for (int r = 0; r < n; ++r)
        for (int q = 0; q < n; ++q)
          for (int s = 0; s < n; ++s) {
            const double v = two_body(p, r, q, s);
            if (std::abs(v - two_body(r, p, q, s)) > tol || std::abs(v - two_body(p, r, s, q)) > tol ||
                std::abs(v - two_body(q, s, p, r)) > tol)
              throw DomainError("two-body integrals lack 8-fold permutational symmetry");
          }
  }
};

/// True when every (pr|qs) with p != r or q != s vanishes (Hubbard-like
/// interactions). Double excitations then have zero matrix elements.
inline bool two_body_is_density_only(const IntegralSet& ints) {
  const int n = ints.n_orb();
  for (int p = 0; p < n; ++p)
    for (int r = 0; r < n; ++r)
      for (int q = 0; q < n; ++q)
        for (int s = 0; s < n; ++s)
          if ((p != r || q != s) && ints.two_body(p, r, q, s) != 0.0) return false;
  return true;
}

// ---------------------------------------------------------------------------
// FCIDUMP

namespace detail {

inline std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

inline bool parse_real(std::string tok, double& out) {
  for (char& c : tok)
    if (c == 'd' || c == 'D') c = 'e';
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

inline bool parse_int(const std::string& tok, int& out) {
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

inline int namelist_int(const std::string& header, const std::string& key, std::size_t line, bool required,
                        int fallback = 0) {
  const std::regex re("(^|[\\s,&])" + key + "\\s*=\\s*([+-]?\\d+)");
  std::smatch m;
  if (!std::regex_search(header, m, re)) {
    if (required) throw ParseError("namelist is missing " + key, line);
    return fallback;
  }
  return std::stoi(m[2].str());
}

}  // namespace detail

/**
 * Reads a Molpro-style FCIDUMP: a `&FCI ... &END` (or `/`) namelist carrying
 * NORB, NELEC and MS2, then records `value i j k l` with 1-based indices.
 * (ij|kl) records are symmetry-expanded; `i j 0 0` is h_ij; `0 0 0 0` is
 * E_0; `i 0 0 0` orbital energies are ignored.
 */
inline IntegralSet parse_fcidump(std::istream& in) {
  std::string header;
  std::string line;
  std::size_t lineno = 0;
  bool closed = false;
  while (!closed && std::getline(in, line)) {
    ++lineno;
    const std::string up = detail::upper(line);
    const auto end_pos = up.find("&END");
    const auto slash_pos = up.find('/');
    if (end_pos != std::string::npos || slash_pos != std::string::npos) {
      header += up.substr(0, std::min(end_pos, slash_pos));
      closed = true;
    } else {
      header += up + " ";
    }
  }
  if (!closed) throw ParseError("namelist is not terminated by &END or /", lineno);
  if (header.find("&FCI") == std::string::npos) throw ParseError("namelist does not start with &FCI", 1);

  const int norb = detail::namelist_int(header, "NORB", lineno, true);
  const int nelec = detail::namelist_int(header, "NELEC", lineno, true);
  const int ms2 = detail::namelist_int(header, "MS2", lineno, false, 0);
  if (norb <= 0 || norb > kMaxOrbitals) throw ParseError("NORB out of range", lineno);
  if (nelec < 0 || (nelec + ms2) % 2 != 0 || nelec + ms2 < 0 || nelec - ms2 < 0)
    throw ParseError("inconsistent NELEC/MS2", lineno);
  SystemShape shape{norb, (nelec + ms2) / 2, (nelec - ms2) / 2};
  try {
    shape.validate();
  } catch (const DomainError& e) {
    throw ParseError(e.what(), lineno);
  }

  IntegralSet ints = IntegralSet::zeros(shape);
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 5) throw ParseError("expected 'value i j k l', got '" + line + "'", lineno);
    double value = 0.0;
    if (!detail::parse_real(tok[0], value)) throw ParseError("non-numeric value '" + tok[0] + "'", lineno);
    int idx[4];
    for (int k = 0; k < 4; ++k) {
      if (!detail::parse_int(tok[static_cast<std::size_t>(k + 1)], idx[k]))
        throw ParseError("non-integer index '" + tok[static_cast<std::size_t>(k + 1)] + "'", lineno);
      if (idx[k] < 0 || idx[k] > norb) throw ParseError("index out of range", lineno);
    }
    const auto [i, j, k, l] = idx;
    if (i == 0 && j == 0 && k == 0 && l == 0) {
      ints.core_energy = value;
    } else if (i > 0 && j > 0 && k > 0 && l > 0) {
      ints.two_body.set_symmetric(i - 1, j - 1, k - 1, l - 1, value);
    } else if (i > 0 && j > 0 && k == 0 && l == 0) {
      ints.one_body(i - 1, j - 1) = value;
      ints.one_body(j - 1, i - 1) = value;
    } else if (i > 0 && j == 0 && k == 0 && l == 0) {
      // orbital energy; not part of the Hamiltonian
    } else {
      throw ParseError("invalid index pattern", lineno);
    }
  }
  return ints;
}

/// Writes the dialect read by parse_fcidump; values use 17 significant digits.
inline void emit_fcidump(std::ostream& out, const IntegralSet& ints) {
  const int n = ints.n_orb();
  char buf[64];
  out << "&FCI NORB=" << n << ",NELEC=" << ints.shape.n_electrons()
      << ",MS2=" << (ints.shape.n_alpha - ints.shape.n_beta) << ",\n ORBSYM=";
  for (int p = 0; p < n; ++p) out << "1,";
  out << "\n ISYM=1,\n&END\n";
  auto rec = [&](double v, int i, int j, int k, int l) {
    std::snprintf(buf, sizeof buf, "%.17e", v);
    out << buf << ' ' << i << ' ' << j << ' ' << k << ' ' << l << '\n';
  };
  for (int p = 0; p < n; ++p)
    for (int r = 0; r <= p; ++r)
      for (int q = 0; q < n; ++q)
        for (int s = 0; s <= q; ++s) {
          if (p * (p + 1) / 2 + r < q * (q + 1) / 2 + s) continue;
          const double v = ints.two_body(p, r, q, s);
          if (v != 0.0) rec(v, p + 1, r + 1, q + 1, s + 1);
        }
  for (int p = 0; p < n; ++p)
    for (int r = 0; r <= p; ++r)
      if (ints.one_body(p, r) != 0.0) rec(ints.one_body(p, r), p + 1, r + 1, 0, 0);
  rec(ints.core_energy, 0, 0, 0, 0);
}

// ---------------------------------------------------------------------------
// Disordered all-to-all Hubbard model

struct HubbardSpec {
  int n_sites = 2;
  double onsite_u = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t realization_index = 0;
};

/// Hubbard integrals from an explicit symmetric hopping matrix `t` (diagonal
/// ignored): h_pq = -t_pq / sqrt(L), (pp|pp) = U.
inline IntegralSet hubbard_from_hoppings(const Eigen::MatrixXd& t, double onsite_u, int n_alpha, int n_beta) {
  const int L = static_cast<int>(t.rows());
  if (L < 2 || t.cols() != L) throw DomainError("hopping matrix must be square with at least 2 sites");
  IntegralSet ints = IntegralSet::zeros(make_shape(L, n_alpha, n_beta));
  const double scale = 1.0 / std::sqrt(static_cast<double>(L));
  for (int p = 0; p < L; ++p)
    for (int q = 0; q < L; ++q)
      if (p != q) ints.one_body(p, q) = -scale * 0.5 * (t(p, q) + t(q, p));
  for (int p = 0; p < L; ++p) ints.two_body(p, p, p, p) = onsite_u;
  return ints;
}

/// Hopping amplitudes t_pq = t_qp ~ N(0,1) for p < q, drawn from the stream
/// derived from (seed, realization_index). Diagonal is zero.
inline Eigen::MatrixXd hubbard_hoppings(const HubbardSpec& spec) {
  if (spec.n_sites < 2) throw DomainError("Hubbard model needs at least 2 sites");
  CounterRng rng = CounterRng(spec.seed).derive("hubbard-hopping", spec.realization_index);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(spec.n_sites, spec.n_sites);
  for (int p = 0; p < spec.n_sites; ++p)
    for (int q = p + 1; q < spec.n_sites; ++q) {
      t(p, q) = rng.normal();
      t(q, p) = t(p, q);
    }
  return t;
}

/// Default filling is half filling, (L/2, L/2) rounded down.
inline IntegralSet build_hubbard(const HubbardSpec& spec, int n_alpha = -1, int n_beta = -1) {
  if (spec.n_sites < 2) throw DomainError("Hubbard model needs at least 2 sites");
  if (n_alpha < 0) n_alpha = spec.n_sites / 2;
  if (n_beta < 0) n_beta = spec.n_sites / 2;
  return hubbard_from_hoppings(hubbard_hoppings(spec), spec.onsite_u, n_alpha, n_beta);
}

// ---------------------------------------------------------------------------
// Orbital rotations

struct OrbitalRotation {
  Eigen::MatrixXd kappa;
  Eigen::MatrixXd omega;
};

inline void require_antisymmetric(const Eigen::MatrixXd& kappa, double tol = 1e-12) {
  if (kappa.rows() != kappa.cols()) throw DomainError("kappa must be square");
  if (kappa.size() > 0 && (kappa + kappa.transpose()).cwiseAbs().maxCoeff() > tol)
    throw DomainError("kappa is not antisymmetric");
}

/// Omega = exp(kappa) through the eigendecomposition of the Hermitian i*kappa.
inline OrbitalRotation exponentiate_kappa(const Eigen::MatrixXd& kappa) {
  require_antisymmetric(kappa);
  const Eigen::Index n = kappa.rows();
  OrbitalRotation rot{kappa, Eigen::MatrixXd::Identity(n, n)};
  if (n == 0 || kappa.cwiseAbs().maxCoeff() == 0.0) return rot;
  const Eigen::MatrixXcd herm = std::complex<double>(0.0, 1.0) * kappa.cast<std::complex<double>>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm);
  // kappa = -i * herm, so exp(kappa) = V diag(exp(-i w)) V^H.
  Eigen::VectorXcd phases(n);
  for (Eigen::Index k = 0; k < n; ++k) phases(k) = std::exp(std::complex<double>(0.0, -es.eigenvalues()(k)));
  const Eigen::MatrixXcd v = es.eigenvectors();
  rot.omega = (v * phases.asDiagonal() * v.adjoint()).real();
  return rot;
}

/// Applies `omega` to index `axis` of the dense tensor: out_{..p..} = sum_t in_{..t..} omega_tp.
inline TwoBodyTensor transform_index(const TwoBodyTensor& in, const Eigen::MatrixXd& omega, int axis) {
  const int n = in.n_orb();
  TwoBodyTensor out(n);
  int idx[4];
  for (idx[0] = 0; idx[0] < n; ++idx[0])
    for (idx[1] = 0; idx[1] < n; ++idx[1])
      for (idx[2] = 0; idx[2] < n; ++idx[2])
        for (idx[3] = 0; idx[3] < n; ++idx[3]) {
          int src[4] = {idx[0], idx[1], idx[2], idx[3]};
          double acc = 0.0;
          for (int t = 0; t < n; ++t) {
            src[axis] = t;
            acc += in(src[0], src[1], src[2], src[3]) * omega(t, idx[axis]);
          }
          out(idx[0], idx[1], idx[2], idx[3]) = acc;
        }
  return out;
}

/// h~_pq = h_tu W_tp W_uq and (pq|rs)~ = (tu|vw) W_tp W_uq W_vr W_ws.
inline IntegralSet rotate_integrals(const IntegralSet& ints, const Eigen::MatrixXd& omega) {
  const int n = ints.n_orb();
  if (omega.rows() != n || omega.cols() != n) throw DomainError("rotation dimension does not match n_orb");
  IntegralSet out;
  out.shape = ints.shape;
  out.core_energy = ints.core_energy;
  out.one_body = omega.transpose() * ints.one_body * omega;
  out.one_body = 0.5 * (out.one_body + out.one_body.transpose()).eval();
  TwoBodyTensor t = ints.two_body;
  for (int axis = 0; axis < 4; ++axis) t = transform_index(t, omega, axis);
  out.two_body = std::move(t);
  return out;
}

inline IntegralSet rotate_integrals(const IntegralSet& ints, const OrbitalRotation& rot) {
  return rotate_integrals(ints, rot.omega);
}

}  // namespace sqd
