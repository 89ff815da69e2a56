#pragma once

// Self-consistent configuration recovery: triage of raw samples by particle
// sector, occupancy-guided bit-flip repair, spin-closed batch construction
// and the outer loop that feeds batch occupancies back into the repair.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "sqd/errors.hpp"
#include "sqd/integrals.hpp"
#include "sqd/parallel.hpp"
#include "sqd/random.hpp"
#include "sqd/solver.hpp"
#include "sqd/system.hpp"

namespace sqd {

/// Multiset of raw configurations, kept in canonical order.
class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(const SystemShape& shape) : shape_(shape) {}

  void add(const Determinant& d, std::uint64_t count = 1) {
    if (!fits_shape(d, shape_)) throw DomainError("sample has bits above n_orb");
    if (count == 0) return;
    counts_[d] += count;
    total_ += count;
  }

  const SystemShape& shape() const noexcept { return shape_; }
  const std::map<Determinant, std::uint64_t>& entries() const noexcept { return counts_; }
  std::size_t distinct() const noexcept { return counts_.size(); }
  std::uint64_t total() const noexcept { return total_; }
  bool empty() const noexcept { return counts_.empty(); }

 private:
  SystemShape shape_;
  std::map<Determinant, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct RecoveryConfig {
  double delta = 0.01;
  double corner = -1.0;  // h; non-positive selects the filling N / M
  int batches = 10;
  std::uint64_t batch_size = 1000;
  int max_iterations = 5;
  double tolerance = 1e-3;  // on max |delta n|
  std::uint64_t seed = 0;
  std::optional<Eigen::VectorXd> warm_start;

  double corner_for(const SystemShape& shape) const {
    if (corner > 0.0) return corner;
    return static_cast<double>(shape.n_electrons()) / static_cast<double>(shape.n_qubits());
  }

  void validate(const SystemShape& shape) const {
    const double h = corner_for(shape);
    if (!(h > 0.0 && h < 1.0)) throw ValidationError("corner", "must lie in (0, 1)");
    if (!(delta >= 0.0 && delta < 1.0)) throw ValidationError("delta", "must lie in [0, 1)");
    if (batches < 1) throw ValidationError("batches", "must be at least 1");
    if (batch_size < 1) throw ValidationError("batch_size", "must be at least 1");
    if (max_iterations < 0) throw ValidationError("max_iterations", "must be non-negative");
    if (warm_start && warm_start->size() != shape.n_qubits())
      throw ValidationError("warm_start", "occupancy vector must have length 2 n_orb");
  }
};

/// w(y) = delta y / h for y <= h, else delta + (1 - delta)(y - h)/(1 - h).
inline double relu_weight(double y, double delta, double h) {
  if (!(y >= -1e-12 && y <= 1.0 + 1e-12)) throw DomainError("relu_weight argument outside [0, 1]");
  y = std::clamp(y, 0.0, 1.0);
  if (y <= h) return delta * (y / h);
  return delta + (1.0 - delta) * ((y - h) / (1.0 - h));
}

struct Triage {
  SampleSet correct;
  SampleSet wrong;
};

inline Triage triage(const SampleSet& samples) {
  Triage t{SampleSet(samples.shape()), SampleSet(samples.shape())};
  for (const auto& [d, c] : samples.entries()) (in_sector(d, samples.shape()) ? t.correct : t.wrong).add(d, c);
  return t;
}

namespace detail {

/// Picks `k` distinct positions from `cand` with probability proportional to
/// `w`, sequentially without replacement; zero total weight falls back to
/// uniform over what remains.
inline std::vector<int> weighted_pick(std::vector<int> cand, std::vector<double> w, int k, CounterRng& rng) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int step = 0; step < k && !cand.empty(); ++step) {
    double total = 0.0;
    for (double v : w) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      pick = cand.size() - 1;
      for (std::size_t i = 0; i < cand.size(); ++i) {
        acc += w[i];
        if (u < acc && w[i] > 0.0) {
          pick = i;
          break;
        }
      }
      while (w[pick] == 0.0) --pick;  // guard against round-off at the tail
    } else {
      pick = static_cast<std::size_t>(rng.below(cand.size()));
    }
    out.push_back(cand[pick]);
    cand.erase(cand.begin() + static_cast<std::ptrdiff_t>(pick));
    w.erase(w.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

}  // namespace detail

/// Repairs each spin species of `x` independently: an excess species loses
/// occupied bits, a deficient one gains empty bits, each candidate p weighted
/// by w(|x_p - n_p|).
inline Determinant recover_configuration(const Determinant& x, const Eigen::VectorXd& n_occ, const SystemShape& shape,
                                         double delta, double h, CounterRng& rng) {
  if (n_occ.size() != shape.n_qubits()) throw DomainError("occupancy vector must have length 2 n_orb");
  Determinant out = x;
  const Spin spins[2] = {Spin::alpha, Spin::beta};
  for (Spin s : spins) {
    const int have = std::popcount(x.mask(s));
    const int want = shape.n_spin(s);
    if (have == want) continue;
    const bool excess = have > want;
    std::vector<int> cand;
    std::vector<double> w;
    for (int p = 0; p < shape.n_orb; ++p) {
      const bool bit = x.occupied(p, s);
      if (bit != excess) continue;
      const double np = n_occ(spin_orbital(p, s, shape.n_orb));
      cand.push_back(p);
      w.push_back(relu_weight(std::abs((bit ? 1.0 : 0.0) - np), delta, h));
    }
    for (int p : detail::weighted_pick(cand, w, std::abs(have - want), rng)) out.mask(s) ^= Mask{1} << p;
  }
  return out;
}

inline Determinant recover_configuration(const Determinant& x, const Eigen::VectorXd& n_occ, const SystemShape& shape,
                                         const RecoveryConfig& cfg, CounterRng& rng) {
  return recover_configuration(x, n_occ, shape, cfg.delta, cfg.corner_for(shape), rng);
}

/// Number of i.i.d. draws per batch: floor(sqrt(d) / 2), at least one.
inline std::uint64_t draws_per_batch(std::uint64_t d) {
  const auto k = static_cast<std::uint64_t>(std::floor(std::sqrt(static_cast<double>(d)) / 2.0));
  return std::max<std::uint64_t>(k, 1);
}

/// Spin-closed batches: each batch draws entries proportionally to their
/// multiplicity, pools the alpha and beta halves into U and takes U x U.
/// With unequal spin counts U x U is filtered to the sector.
inline std::vector<Batch> build_batches(const SampleSet& pool, int n_batches, std::uint64_t d, CounterRng rng) {
  if (pool.empty()) throw DomainError("cannot build batches from an empty pool");
  const SystemShape& shape = pool.shape();
  std::vector<Determinant> dets;
  std::vector<double> cum;
  double total = 0.0;
  for (const auto& [det, c] : pool.entries()) {
    if (!in_sector(det, shape)) throw DomainError("batch pool contains a wrong-sector configuration");
    total += static_cast<double>(c);
    dets.push_back(det);
    cum.push_back(total);
  }
  const std::uint64_t draws = draws_per_batch(d);
  std::vector<Batch> out;
  out.reserve(static_cast<std::size_t>(n_batches));
  for (int k = 0; k < n_batches; ++k) {
    CounterRng r = rng.derive("batch", static_cast<std::uint64_t>(k));
    std::set<Mask> halves;
    for (std::uint64_t t = 0; t < draws; ++t) {
      const double u = r.uniform() * total;
      auto it = std::upper_bound(cum.begin(), cum.end(), u);
      if (it == cum.end()) --it;
      const Determinant& x = dets[static_cast<std::size_t>(it - cum.begin())];
      halves.insert(x.alpha);
      halves.insert(x.beta);
    }
    std::vector<Determinant> members;
    members.reserve(halves.size() * halves.size());
    for (Mask a : halves)
      for (Mask b : halves) {
        const Determinant y{a, b};
        if (in_sector(y, shape)) members.push_back(y);
      }
    out.push_back(make_batch(std::move(members), k));
  }
  return out;
}

struct IterationRecord {
  int iteration = 0;  // 0 is the setup phase
  Eigen::VectorXd occupancies_in;
  Eigen::VectorXd occupancies_out;
  std::vector<Batch> batches;
  std::vector<SubspaceSolution> solutions;
  std::uint64_t recovered_shots = 0;
  std::uint64_t pool_distinct = 0;

  double min_energy() const {
    double e = std::numeric_limits<double>::infinity();
    for (const auto& s : solutions) e = std::min(e, s.energy);
    return e;
  }
  double mean_energy() const {
    double e = 0.0;
    for (const auto& s : solutions) e += s.energy;
    return solutions.empty() ? e : e / static_cast<double>(solutions.size());
  }
};

struct SqdHistory {
  std::vector<IterationRecord> iterations;
  bool converged = false;

  double final_energy() const {
    if (iterations.empty()) throw DomainError("empty history");
    return iterations.back().min_energy();
  }
  double best_energy() const {
    double e = std::numeric_limits<double>::infinity();
    for (const auto& it : iterations) e = std::min(e, it.min_energy());
    return e;
  }
};

struct SqdOptions {
  SolverOptions solver;
  int workers = 1;  // concurrent batch solves
};

/**
 * Setup: batches from the correct-sector samples give the first occupancies
 * (skipped when a warm start is supplied). Each iteration then repairs every
 * wrong-sector shot with the current occupancies, pools the repaired shots
 * (weight one each) with the correct-sector samples, rebuilds batches,
 * solves and averages the batch occupancies. Stops after max_iterations or
 * once max |delta n| < tolerance.
 */
inline SqdHistory run_sqd(const SampleSet& samples, const IntegralSet& ints, const RecoveryConfig& cfg,
                          const PenaltyConfig& penalty, const SqdOptions& opts = {}) {
  const SystemShape& shape = ints.shape;
  if (!(samples.shape() == shape)) throw DomainError("sample shape does not match the Hamiltonian");
  if (samples.empty()) throw DomainError("no samples");
  cfg.validate(shape);
  penalty.validate();
  const CounterRng master(cfg.seed);
  const Triage tri = triage(samples);
  if (tri.correct.empty() && !cfg.warm_start)
    throw DomainError("no correct-sector samples and no warm-start occupancies: input is unrecoverable");

  SqdHistory hist;
  auto solve = [&](IterationRecord& rec, const SampleSet& pool, std::uint64_t stage) {
    rec.pool_distinct = pool.distinct();
    rec.batches = build_batches(pool, cfg.batches, cfg.batch_size, master.derive("batching", stage));
    rec.solutions = solve_batches(rec.batches, ints, penalty, opts.solver, opts.workers);
    std::vector<Eigen::VectorXd> occ;
    occ.reserve(rec.solutions.size());
    for (const auto& s : rec.solutions) occ.push_back(s.occupancies);
    rec.occupancies_out = average_occupancies(occ);
  };

  Eigen::VectorXd n_occ;
  if (cfg.warm_start) {
    n_occ = *cfg.warm_start;
  } else {
    IterationRecord rec;
    rec.iteration = 0;
    solve(rec, tri.correct, 0);
    n_occ = rec.occupancies_out;
    hist.iterations.push_back(std::move(rec));
    if (tri.wrong.empty()) return hist;
  }
  if (cfg.warm_start && cfg.max_iterations == 0)
    throw ValidationError("max_iterations", "a warm start needs at least one recovery iteration");

  const double h = cfg.corner_for(shape);
  for (int t = 1; t <= cfg.max_iterations; ++t) {
    IterationRecord rec;
    rec.iteration = t;
    rec.occupancies_in = n_occ;
    SampleSet pool = tri.correct;
    const CounterRng stream = master.derive("recovery", static_cast<std::uint64_t>(t));
    std::uint64_t shot = 0;
    for (const auto& [x, c] : tri.wrong.entries())
      for (std::uint64_t j = 0; j < c; ++j, ++shot) {
        CounterRng r = stream.derive("shot", shot);
        pool.add(recover_configuration(x, n_occ, shape, cfg.delta, h, r), 1);
      }
    rec.recovered_shots = shot;
    solve(rec, pool, static_cast<std::uint64_t>(t));
    const double change = (rec.occupancies_out - n_occ).cwiseAbs().maxCoeff();
    n_occ = rec.occupancies_out;
    hist.iterations.push_back(std::move(rec));
    if (change < cfg.tolerance) {
      hist.converged = true;
      break;
    }
    if (tri.wrong.empty()) break;
  }
  return hist;
}

}  // namespace sqd
