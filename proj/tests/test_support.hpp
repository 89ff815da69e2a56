#pragma once

#include <gtest/gtest.h>

#include <random>

#include "oracles/oracles.hpp"
#include "sqd/sqd.hpp"

namespace testing_support {

inline oracle::Integrals to_oracle(const sqd::IntegralSet& ints) {
  oracle::Integrals o;
  o.n = ints.n_orb();
  o.e0 = ints.core_energy;
  o.h = ints.one_body;
  o.g.assign(ints.two_body.data().begin(), ints.two_body.data().end());
  return o;
}

inline oracle::State to_state(const sqd::Determinant& d, int n) { return d.alpha | (d.beta << n); }

inline sqd::Determinant from_state(oracle::State x, int n) {
  return {x & sqd::low_bits(n), x >> n};
}

/// Random real integrals with the full permutational symmetry; the two-body
/// part is built as a sum of symmetric rank-one terms so (pr|qs) is positive
/// semidefinite as a pair matrix, like physical repulsion integrals.
inline sqd::IntegralSet random_integrals(const sqd::SystemShape& shape, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int n = shape.n_orb;
  sqd::IntegralSet ints = sqd::IntegralSet::zeros(shape);
  ints.core_energy = nd(gen);
  for (int p = 0; p < n; ++p)
    for (int q = p; q < n; ++q) ints.one_body(p, q) = ints.one_body(q, p) = nd(gen);
  const int pairs = n * (n + 1) / 2;
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(pairs, pairs);
  for (int k = 0; k < pairs; ++k) {
    Eigen::VectorXd u(pairs);
    for (int i = 0; i < pairs; ++i) u(i) = nd(gen);
    V += scale * u * u.transpose() / pairs;
  }
  auto pid = [](int p, int r) {
    if (p < r) std::swap(p, r);
    return p * (p + 1) / 2 + r;
  };
  for (int p = 0; p < n; ++p)
    for (int r = 0; r <= p; ++r)
      for (int q = 0; q < n; ++q)
        for (int s = 0; s <= q; ++s) ints.two_body.set_symmetric(p, r, q, s, V(pid(p, r), pid(q, s)));
  return ints;
}

inline Eigen::MatrixXd random_antisymmetric(int n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = p + 1; q < n; ++q) {
      k(p, q) = nd(gen);
      k(q, p) = -k(p, q);
    }
  return k;
}

inline Eigen::MatrixXcd random_antihermitian(int n, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::MatrixXcd k(n, n);
  for (int p = 0; p < n; ++p) {
    k(p, p) = std::complex<double>(0.0, nd(gen));
    for (int q = p + 1; q < n; ++q) {
      k(p, q) = std::complex<double>(nd(gen), nd(gen));
      k(q, p) = -std::conj(k(p, q));
    }
  }
  return k;
}

inline Eigen::MatrixXd random_symmetric(int n, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::MatrixXd j(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = p; q < n; ++q) j(p, q) = j(q, p) = nd(gen);
  return j;
}

/// Dense sector Hamiltonian from the library's matrix elements, in the
/// library's canonical determinant order.
inline Eigen::MatrixXd library_dense(const sqd::IntegralSet& ints, const std::vector<sqd::Determinant>& dets) {
  const auto d = static_cast<Eigen::Index>(dets.size());
  Eigen::MatrixXd m(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      m(i, j) = sqd::h_element(dets[static_cast<std::size_t>(i)], dets[static_cast<std::size_t>(j)], ints);
  return m;
}

/// Oracle operator reordered into the library's determinant order.
inline Eigen::MatrixXd reorder(const oracle::DenseOperator& op, const std::vector<sqd::Determinant>& dets, int n) {
  std::unordered_map<oracle::State, Eigen::Index> where;
  for (std::size_t i = 0; i < op.basis.size(); ++i) where[op.basis[i]] = static_cast<Eigen::Index>(i);
  const auto d = static_cast<Eigen::Index>(dets.size());
  Eigen::MatrixXd m(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      m(i, j) = op.matrix(where.at(to_state(dets[static_cast<std::size_t>(i)], n)),
                          where.at(to_state(dets[static_cast<std::size_t>(j)], n)));
  return m;
}

inline std::vector<oracle::State> to_states(const std::vector<sqd::Determinant>& dets, int n) {
  std::vector<oracle::State> out;
  for (const auto& d : dets) out.push_back(to_state(d, n));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace testing_support
