#pragma once

// End-to-end pipelines: configuration, run artifacts, the Hubbard
// concentration study and the batch-energy cost estimator.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqd/analysis.hpp"
#include "sqd/davidson.hpp"
#include "sqd/errors.hpp"
#include "sqd/integrals.hpp"
#include "sqd/io.hpp"
#include "sqd/parallel.hpp"
#include "sqd/random.hpp"
#include "sqd/recovery.hpp"
#include "sqd/sampler.hpp"
#include "sqd/solver.hpp"
#include "sqd/system.hpp"

namespace sqd {

inline constexpr const char* kVersion = "0.1.0";

/// Failure inside a named pipeline stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

struct HamiltonianSource {
  std::optional<std::string> fcidump;
  std::optional<HubbardSpec> hubbard;
  int n_alpha = -1;  // Hubbard filling; negative means half filling
  int n_beta = -1;
};

struct SamplerSettings {
  std::string source = "exact";  // file | lucj | exact
  std::string samples_path;
  std::string t2_path;
  int layers = 2;
  std::string order = "supplement";  // supplement | main_text
  bool heavy_hex = false;
  std::optional<int> max_anchor;
  std::string noise = "depolarizing";  // none | depolarizing | uniform_full_fock | uniform_sector
  double alpha = 1.0;
  std::uint64_t shots = 10000;
};

struct RunConfig {
  HamiltonianSource hamiltonian;
  SamplerSettings sampler;
  RecoveryConfig recovery;
  PenaltyConfig penalty;
  DavidsonOptions davidson;
  bool compute_variance = true;
  std::string output_dir = "sqd_out";
  int workers = 1;
  std::uint64_t seed = 0;
  nlohmann::json source_json;  // canonical form the config was read from

  void validate() const {
    namespace fs = std::filesystem;
    if (hamiltonian.fcidump.has_value() == hamiltonian.hubbard.has_value())
      throw ValidationError("hamiltonian", "exactly one of fcidump or hubbard must be given");
    if (hamiltonian.fcidump && !fs::exists(*hamiltonian.fcidump))
      throw ValidationError("hamiltonian.fcidump", "file '" + *hamiltonian.fcidump + "' does not exist");
    if (hamiltonian.hubbard && hamiltonian.hubbard->n_sites < 2)
      throw ValidationError("hamiltonian.hubbard.sites", "need at least 2 sites");
    if (sampler.source == "file") {
      if (sampler.samples_path.empty()) throw ValidationError("sampler.samples", "a sample file is required");
      if (!fs::exists(sampler.samples_path))
        throw ValidationError("sampler.samples", "file '" + sampler.samples_path + "' does not exist");
    } else if (sampler.source == "lucj") {
      if (sampler.t2_path.empty()) throw ValidationError("sampler.t2", "an amplitude file is required");
      if (!fs::exists(sampler.t2_path))
        throw ValidationError("sampler.t2", "file '" + sampler.t2_path + "' does not exist");
      if (sampler.layers < 1) throw ValidationError("sampler.layers", "must be at least 1");
    } else if (sampler.source != "exact") {
      throw ValidationError("sampler.source", "must be file, lucj or exact");
    }
    if (sampler.order != "supplement" && sampler.order != "main_text")
      throw ValidationError("sampler.order", "must be supplement or main_text");
    if (sampler.noise != "none" && sampler.noise != "depolarizing" && sampler.noise != "uniform_full_fock" &&
        sampler.noise != "uniform_sector")
      throw ValidationError("sampler.noise", "unknown noise model '" + sampler.noise + "'");
    if (!(sampler.alpha >= 0.0 && sampler.alpha <= 1.0)) throw ValidationError("sampler.alpha", "must lie in [0, 1]");
    if (sampler.shots < 1) throw ValidationError("sampler.shots", "must be at least 1");
    if (workers < 1) throw ValidationError("workers", "must be at least 1");
    if (!(penalty.lambda >= 0.0)) throw ValidationError("penalty.lambda", "must be non-negative");
    if (!(penalty.target_s >= 0.0)) throw ValidationError("penalty.target_s", "must be non-negative");
  }
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& field) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(field, e.what());
  }
}

}  // namespace detail

/**
 * Reads a run configuration. Layout:
 *   {"hamiltonian": {"fcidump": PATH} | {"hubbard": {"sites", "u", "seed", "realization"},
 *                    "n_alpha", "n_beta"},
 *    "sampler": {"source", "samples", "t2", "layers", "order", "heavy_hex", "max_anchor",
 *                "noise", "alpha", "shots"},
 *    "recovery": {"delta", "corner", "batches", "d", "iterations", "tolerance", "warm_start"},
 *    "solver": {"lambda", "target_s", "tolerance", "max_iterations", "variance"},
 *    "output": DIR, "workers": W, "seed": S}
 */
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::read_opt;
  if (!j.is_object()) throw ValidationError("config", "must be a JSON object");
  RunConfig c;
  c.source_json = j;
  if (j.contains("hamiltonian")) {
    const auto& h = j.at("hamiltonian");
    if (h.contains("fcidump")) c.hamiltonian.fcidump = h.at("fcidump").get<std::string>();
    if (h.contains("hubbard")) {
      const auto& hb = h.at("hubbard");
      HubbardSpec s;
      read_opt(hb, "sites", s.n_sites, "hamiltonian.hubbard.sites");
      read_opt(hb, "u", s.onsite_u, "hamiltonian.hubbard.u");
      read_opt(hb, "seed", s.seed, "hamiltonian.hubbard.seed");
      read_opt(hb, "realization", s.realization_index, "hamiltonian.hubbard.realization");
      c.hamiltonian.hubbard = s;
    }
    read_opt(h, "n_alpha", c.hamiltonian.n_alpha, "hamiltonian.n_alpha");
    read_opt(h, "n_beta", c.hamiltonian.n_beta, "hamiltonian.n_beta");
  }
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    auto& o = c.sampler;
    read_opt(s, "source", o.source, "sampler.source");
    read_opt(s, "samples", o.samples_path, "sampler.samples");
    read_opt(s, "t2", o.t2_path, "sampler.t2");
    read_opt(s, "layers", o.layers, "sampler.layers");
    read_opt(s, "order", o.order, "sampler.order");
    read_opt(s, "heavy_hex", o.heavy_hex, "sampler.heavy_hex");
    if (s.contains("max_anchor") && !s.at("max_anchor").is_null()) o.max_anchor = s.at("max_anchor").get<int>();
    read_opt(s, "noise", o.noise, "sampler.noise");
    read_opt(s, "alpha", o.alpha, "sampler.alpha");
    read_opt(s, "shots", o.shots, "sampler.shots");
  }
  if (j.contains("recovery")) {
    const auto& r = j.at("recovery");
    auto& o = c.recovery;
    read_opt(r, "delta", o.delta, "recovery.delta");
    read_opt(r, "corner", o.corner, "recovery.corner");
    read_opt(r, "batches", o.batches, "recovery.batches");
    read_opt(r, "d", o.batch_size, "recovery.d");
    read_opt(r, "iterations", o.max_iterations, "recovery.iterations");
    read_opt(r, "tolerance", o.tolerance, "recovery.tolerance");
    if (r.contains("warm_start") && !r.at("warm_start").is_null()) {
      const auto& w = r.at("warm_start");
      try {
        o.warm_start = w.is_string() ? read_occupancies_file(w.get<std::string>()) : vector_from_json(w);
      } catch (const std::exception& e) {
        throw ValidationError("recovery.warm_start", e.what());
      }
    }
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    read_opt(s, "lambda", c.penalty.lambda, "solver.lambda");
    read_opt(s, "target_s", c.penalty.target_s, "solver.target_s");
    read_opt(s, "tolerance", c.davidson.tolerance, "solver.tolerance");
    read_opt(s, "max_iterations", c.davidson.max_iterations, "solver.max_iterations");
    read_opt(s, "variance", c.compute_variance, "solver.variance");
  }
  read_opt(j, "output", c.output_dir, "output");
  read_opt(j, "workers", c.workers, "workers");
  read_opt(j, "seed", c.seed, "seed");
  c.recovery.seed = CounterRng(c.seed).derive("recovery").key();
  return c;
}

inline IntegralSet load_hamiltonian(const HamiltonianSource& src) {
  if (src.fcidump) return read_fcidump_file(*src.fcidump);
  if (src.hubbard) return build_hubbard(*src.hubbard, src.n_alpha, src.n_beta);
  throw ValidationError("hamiltonian", "no Hamiltonian source given");
}

inline NoiseModel noise_from_settings(const SamplerSettings& s) {
  if (s.noise == "none") return NoiseModel::none();
  if (s.noise == "depolarizing") return NoiseModel::depolarizing(s.alpha);
  if (s.noise == "uniform_full_fock") return NoiseModel::uniform_full_fock();
  if (s.noise == "uniform_sector") return NoiseModel::uniform_sector();
  throw ValidationError("sampler.noise", "unknown noise model '" + s.noise + "'");
}

/// Ground state of the full sector Hamiltonian (sparse assembly + Davidson).
struct ExactGround {
  Batch sector;
  EigenPair pair;
};

inline ExactGround exact_ground_state(const IntegralSet& ints, const DavidsonOptions& opts = {}, int workers = 1) {
  const std::uint64_t dim = sector_dimension(ints.shape);
  if (dim > kDefaultSectorBudget) throw BudgetError("sector dimension exceeds the exact-solve budget");
  ExactGround g;
  g.sector = full_sector_batch(ints.shape);
  const ProjectedOperators ops = project_operators(g.sector, ints, workers);
  g.pair = davidson_ground(ops.h, opts);
  return g;
}

/// LUCJ parameters from an amplitude file, truncated and optionally sparsified.
inline LucjParams lucj_from_settings(const SamplerSettings& s, int n_orb) {
  const CcsdAmplitudes amps = parse_ccsd_json(read_json_file(s.t2_path));
  if (amps.n_occ + amps.n_virt != n_orb)
    throw ValidationError("sampler.t2", "n_occ + n_virt does not match the number of orbitals");
  const T2Decomposition dec = decompose_t2(amps, std::max(2, s.layers));
  LucjParams p = s.layers >= 2 ? truncated_ansatz(dec.params, s.order == "main_text" ? AnsatzOrder::main_text
                                                                                       : AnsatzOrder::supplement)
                               : dec.params;
  if (s.heavy_hex) p = sparsify_heavy_hex(p, n_orb, s.max_anchor);
  return p;
}

inline SampleSet draw_samples(const RunConfig& cfg, const IntegralSet& ints) {
  const CounterRng stream = CounterRng(cfg.seed).derive("sampler");
  const SamplerSettings& s = cfg.sampler;
  if (s.source == "file") return read_samples_file(s.samples_path, ints.shape);
  const NoiseModel noise = noise_from_settings(s);
  if (s.source == "lucj") {
    const SectorState st = prepare_lucj(lucj_from_settings(s, ints.n_orb()), ints.shape);
    return ConfigurationSampler(st, noise).sample(s.shots, stream, cfg.workers);
  }
  const ExactGround g = exact_ground_state(ints, cfg.davidson, cfg.workers);
  std::vector<double> p(static_cast<std::size_t>(g.pair.vector.size()));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = g.pair.vector(static_cast<Eigen::Index>(i)) * g.pair.vector(static_cast<Eigen::Index>(i));
  return ConfigurationSampler(ints.shape, std::move(p), noise).sample(s.shots, stream, cfg.workers);
}

// ---------------------------------------------------------------------------
// Artifacts

inline std::string energies_csv(const SqdHistory& h) {
  std::ostringstream out;
  out << "iteration,k,d_effective,energy,s2,variance\n";
  for (const auto& it : h.iterations)
    for (std::size_t k = 0; k < it.solutions.size(); ++k) {
      const auto& s = it.solutions[k];
      out << it.iteration << ',' << k << ',' << it.batches[k].size() << ',' << format_double(s.energy) << ','
          << format_double(s.s2) << ',' << format_double(s.variance) << '\n';
    }
  return out.str();
}

inline std::string occupancies_csv(const SqdHistory& h, int n_orb) {
  std::ostringstream out;
  out << "iteration,spin,orbital,occupancy\n";
  for (const auto& it : h.iterations)
    for (int q = 0; q < 2 * n_orb; ++q)
      out << it.iteration << ',' << (q < n_orb ? "alpha" : "beta") << ',' << (q % n_orb) << ','
          << format_double(it.occupancies_out(q)) << '\n';
  return out.str();
}

inline nlohmann::json history_json(const SqdHistory& h) {
  nlohmann::json j;
  j["converged"] = h.converged;
  j["final_energy"] = h.final_energy();
  j["best_energy"] = h.best_energy();
  j["iterations"] = nlohmann::json::array();
  for (const auto& it : h.iterations) {
    nlohmann::json r;
    r["iteration"] = it.iteration;
    r["min_energy"] = it.min_energy();
    r["recovered_shots"] = it.recovered_shots;
    r["pool_distinct"] = it.pool_distinct;
    r["occupancies"] = to_json(it.occupancies_out);
    r["energies"] = nlohmann::json::array();
    r["batches"] = nlohmann::json::array();
    for (std::size_t k = 0; k < it.solutions.size(); ++k) {
      const auto& s = it.solutions[k];
      r["energies"].push_back(s.energy);
      r["batches"].push_back({{"k", k},
                              {"d", it.batches[k].size()},
                              {"energy", s.energy},
                              {"s2", s.s2},
                              {"variance", std::isnan(s.variance) ? nlohmann::json(nullptr) : nlohmann::json(s.variance)},
                              {"occupancies", to_json(s.occupancies)}});
    }
    j["iterations"].push_back(std::move(r));
  }
  return j;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json manifest_json(const RunConfig& cfg) {
  const std::string canonical = cfg.source_json.dump();
  nlohmann::json m;
  m["config"] = cfg.source_json;
  m["config_hash"] = hex64(detail::fnv1a(canonical));
  m["seed"] = cfg.seed;
  m["versions"] = {{"sqd", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  return m;
}

struct RunResult {
  SqdHistory history;
  double final_energy = 0.0;
  std::filesystem::path output_dir;
};

/// Full pipeline: Hamiltonian, samples, recovery loop, artifacts.
inline RunResult cmd_run(const RunConfig& cfg) {
  cfg.validate();
  const IntegralSet ints = run_stage("hamiltonian", [&] { return load_hamiltonian(cfg.hamiltonian); });
  const SampleSet samples = run_stage("sampler", [&] { return draw_samples(cfg, ints); });
  SqdOptions opts;
  opts.solver.davidson = cfg.davidson;
  opts.solver.compute_variance = cfg.compute_variance;
  opts.workers = cfg.workers;
  RunResult res;
  res.history = run_stage("recovery", [&] { return run_sqd(samples, ints, cfg.recovery, cfg.penalty, opts); });
  res.final_energy = res.history.final_energy();
  res.output_dir = cfg.output_dir;
  run_stage("output", [&] {
    std::filesystem::create_directories(res.output_dir);
    write_text_file(res.output_dir / "history.json", history_json(res.history).dump(2) + "\n");
    write_text_file(res.output_dir / "energies.csv", energies_csv(res.history));
    write_text_file(res.output_dir / "occupancies.csv", occupancies_csv(res.history, ints.n_orb()));
    write_text_file(res.output_dir / "manifest.json", manifest_json(cfg).dump(2) + "\n");
    return 0;
  });
  return res;
}

/// Mean batch energy (1/K) sum_k E^(k) over batches built from the
/// correct-sector samples, or from all samples repaired with `cfg.warm_start`
/// when one is given.
inline double cmd_cost_eval(const SampleSet& samples, const IntegralSet& ints, const RecoveryConfig& cfg,
                            const PenaltyConfig& penalty, const SolverOptions& solver = {}, int workers = 1) {
  cfg.validate(ints.shape);
  const CounterRng master(cfg.seed);
  const Triage tri = triage(samples);
  SampleSet pool = tri.correct;
  if (cfg.warm_start) {
    const CounterRng stream = master.derive("recovery", 1);
    std::uint64_t shot = 0;
    for (const auto& [x, c] : tri.wrong.entries())
      for (std::uint64_t j = 0; j < c; ++j, ++shot) {
        CounterRng r = stream.derive("shot", shot);
        pool.add(recover_configuration(x, *cfg.warm_start, ints.shape, cfg, r), 1);
      }
  }
  if (pool.empty()) throw DomainError("no usable samples for the cost estimate");
  const auto batches = build_batches(pool, cfg.batches, cfg.batch_size, master.derive("batching", 0));
  SolverOptions so = solver;
  so.compute_variance = false;
  const auto sols = solve_batches(batches, ints, penalty, so, workers);
  double acc = 0.0;
  for (const auto& s : sols) acc += s.energy;
  return acc / static_cast<double>(sols.size());
}

// ---------------------------------------------------------------------------
// Hubbard concentration study

struct StudyRow {
  double u = 0.0;
  std::uint64_t realization = 0;
  double exact_energy = 0.0;
  double subspace_energy = 0.0;
  double relative_error = 0.0;
  double entropy = 0.0;
};

struct StudySummary {
  double u = 0.0;
  double mean_relative_error = 0.0;
  double mean_entropy = 0.0;
  int count = 0;
};

struct StudyReport {
  std::vector<StudyRow> rows;
  std::vector<StudySummary> summary;
};

/// Indices of the `d` largest |c_x| (ties broken by position).
inline std::vector<std::size_t> top_amplitudes(const Eigen::VectorXd& c, std::size_t d) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(c.size()));
  std::iota(idx.begin(), idx.end(), 0);
  d = std::min(d, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(d), idx.end(), [&](std::size_t a, std::size_t b) {
    const double fa = std::abs(c(static_cast<Eigen::Index>(a))), fb = std::abs(c(static_cast<Eigen::Index>(b)));
    return fa != fb ? fa > fb : a < b;
  });
  idx.resize(d);
  return idx;
}

/// Per (U, realization): exact ground state, energy in the span of its top-d
/// determinants (no spin penalty), relative error and amplitude entropy.
inline StudyReport cmd_hubbard_study(int L, const std::vector<double>& u_grid, int realizations, std::uint64_t d,
                                     std::uint64_t seed, int workers = 1, const DavidsonOptions& dav = {}) {
  if (L < 2) throw DomainError("Hubbard study needs at least 2 sites");
  if (realizations < 1) throw DomainError("need at least one realization");
  const SystemShape shape = make_shape(L, L / 2, L / 2);
  if (sector_dimension(shape) > kDefaultSectorBudget) throw BudgetError("sector exceeds the dense-solve budget");
  StudyReport rep;
  rep.rows.resize(u_grid.size() * static_cast<std::size_t>(realizations));
  const Batch sector = full_sector_batch(shape);
  parallel_for(rep.rows.size(), workers, [&](std::size_t task) {
    const std::size_t iu = task / static_cast<std::size_t>(realizations);
    const auto r = static_cast<std::uint64_t>(task % static_cast<std::size_t>(realizations));
    HubbardSpec spec{L, u_grid[iu], seed, r};
    const IntegralSet ints = build_hubbard(spec);
    const ProjectedOperators ops = project_operators(sector, ints);
    const EigenPair exact = davidson_ground(ops.h, dav);
    std::vector<Determinant> top;
    for (std::size_t i : top_amplitudes(exact.vector, d)) top.push_back(sector.determinants[i]);
    const Batch sub = make_batch(std::move(top));
    SolverOptions so;
    so.davidson = dav;
    so.compute_variance = false;
    const SubspaceSolution sol = solve_batch(sub, ints, PenaltyConfig{0.0, 0.0}, so);
    StudyRow& row = rep.rows[task];
    row.u = u_grid[iu];
    row.realization = r;
    row.exact_energy = exact.value;
    row.subspace_energy = sol.energy;
    row.relative_error = std::abs(sol.energy - exact.value) / std::abs(exact.value);
    row.entropy = amplitude_entropy(exact.vector);
  });
  for (std::size_t iu = 0; iu < u_grid.size(); ++iu) {
    StudySummary s;
    s.u = u_grid[iu];
    for (int r = 0; r < realizations; ++r) {
      const auto& row = rep.rows[iu * static_cast<std::size_t>(realizations) + static_cast<std::size_t>(r)];
      s.mean_relative_error += row.relative_error;
      s.mean_entropy += row.entropy;
      ++s.count;
    }
    s.mean_relative_error /= s.count;
    s.mean_entropy /= s.count;
    rep.summary.push_back(s);
  }
  return rep;
}

inline std::string study_csv(const StudyReport& rep) {
  std::ostringstream out;
  out << "u,realization,exact_energy,subspace_energy,relative_error,entropy\n";
  for (const auto& r : rep.rows)
    out << format_double(r.u) << ',' << r.realization << ',' << format_double(r.exact_energy) << ','
        << format_double(r.subspace_energy) << ',' << format_double(r.relative_error) << ','
        << format_double(r.entropy) << '\n';
  return out.str();
}

inline std::string study_summary_csv(const StudyReport& rep) {
  std::ostringstream out;
  out << "u,count,mean_relative_error,mean_entropy\n";
  for (const auto& s : rep.summary)
    out << format_double(s.u) << ',' << s.count << ',' << format_double(s.mean_relative_error) << ','
        << format_double(s.mean_entropy) << '\n';
  return out.str();
}

}  // namespace sqd
