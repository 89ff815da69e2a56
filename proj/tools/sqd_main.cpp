#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sqd/sqd.hpp"

namespace {

using nlohmann::json;

// Flags shared by every subcommand that needs a Hamiltonian.
struct HamiltonianFlags {
  std::string fcidump;
  std::vector<double> hubbard;  // L, U, seed, realization
  int n_alpha = -1;
  int n_beta = -1;

  void add(CLI::App* app) {
    app->add_option("--fcidump", fcidump, "FCIDUMP integral file");
    app->add_option("--hubbard", hubbard, "Disordered Hubbard chain: L,U[,seed[,realization]]")->delimiter(',');
    app->add_option("--nalpha", n_alpha, "Alpha electrons (Hubbard; default L/2)");
    app->add_option("--nbeta", n_beta, "Beta electrons (Hubbard; default L/2)");
  }

  bool given() const { return !fcidump.empty() || !hubbard.empty(); }

  void merge(json& h) const {
    if (!fcidump.empty()) {
      h.erase("hubbard");
      h["fcidump"] = fcidump;
    }
    if (!hubbard.empty()) {
      if (hubbard.size() < 2 || hubbard.size() > 4) throw sqd::ValidationError("--hubbard", "expected L,U[,seed[,realization]]");
      h.erase("fcidump");
      json hb = {{"sites", static_cast<int>(hubbard[0])}, {"u", hubbard[1]}};
      if (hubbard.size() > 2) hb["seed"] = static_cast<std::uint64_t>(hubbard[2]);
      if (hubbard.size() > 3) hb["realization"] = static_cast<std::uint64_t>(hubbard[3]);
      h["hubbard"] = hb;
    }
    if (n_alpha >= 0) h["n_alpha"] = n_alpha;
    if (n_beta >= 0) h["n_beta"] = n_beta;
  }

  sqd::IntegralSet load() const {
    json h = json::object();
    merge(h);
    sqd::RunConfig c = sqd::run_config_from_json({{"hamiltonian", h}});
    if (c.hamiltonian.fcidump.has_value() == c.hamiltonian.hubbard.has_value())
      throw sqd::ValidationError("hamiltonian", "give exactly one of --fcidump or --hubbard");
    if (c.hamiltonian.fcidump && !std::filesystem::exists(*c.hamiltonian.fcidump))
      throw sqd::ValidationError("--fcidump", "file '" + *c.hamiltonian.fcidump + "' does not exist");
    return sqd::load_hamiltonian(c.hamiltonian);
  }
};

template <class T>
void set_if(CLI::Option* opt, json& j, const char* key, const T& value) {
  if (opt && opt->count() > 0) j[key] = value;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(sqd::parse_double(cell));
  if (out.empty()) throw sqd::ValidationError("--u", "empty grid");
  return out;
}

int workers_from(int flag) {
  if (const char* env = std::getenv("SQD_WORKERS"); env && std::atoi(env) > 0) return std::atoi(env);
  return flag > 0 ? flag : 1;
}

void print_history(const sqd::SqdHistory& h) {
  for (const auto& it : h.iterations)
    std::printf("iteration %d  min E = %.12f  mean E = %.12f  batches = %zu\n", it.iteration, it.min_energy(),
                it.mean_energy(), it.batches.size());
  std::printf("final energy %.12f%s\n", h.final_energy(), h.converged ? "  (converged)" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sample-based quantum diagonalization"};
  app.require_subcommand(1);
  int workers = 0;
  app.add_option("--workers", workers, "Worker threads (SQD_WORKERS overrides)");

  // run
  auto* run = app.add_subcommand("run", "Full pipeline from a JSON config");
  std::string config_path, out_dir, samples_path, t2_path, sampler_source, noise, warm_start;
  std::uint64_t seed = 0, shots = 0, d = 0;
  int batches = 0, iters = 0, layers = 0;
  double lambda = 0, delta = 0, alpha = 0;
  HamiltonianFlags run_h;
  run->add_option("--config", config_path, "JSON configuration");
  run_h.add(run);
  auto* o_samples = run->add_option("--samples", samples_path, "Sample file (selects the file sampler)");
  auto* o_t2 = run->add_option("--t2", t2_path, "Amplitude JSON (selects the LUCJ sampler)");
  auto* o_source = run->add_option("--sampler", sampler_source, "file | lucj | exact");
  auto* o_layers = run->add_option("--layers", layers, "LUCJ layers");
  auto* o_noise = run->add_option("--noise", noise, "none | depolarizing | uniform_full_fock | uniform_sector");
  auto* o_alpha = run->add_option("--alpha", alpha, "Depolarizing signal fraction");
  auto* o_shots = run->add_option("--shots", shots, "Shots");
  auto* o_d = run->add_option("--d", d, "Batch size d");
  auto* o_batches = run->add_option("--batches", batches, "Number of batches K");
  auto* o_iters = run->add_option("--iters", iters, "Recovery iterations");
  auto* o_delta = run->add_option("--delta", delta, "ReLU parameter delta");
  auto* o_lambda = run->add_option("--lambda", lambda, "Spin penalty lambda");
  auto* o_warm = run->add_option("--warm-start", warm_start, "Occupancy JSON for warm-start recovery");
  auto* o_seed = run->add_option("--seed", seed, "Master seed");
  auto* o_out = run->add_option("--out", out_dir, "Output directory");

  // sample
  auto* sample = app.add_subcommand("sample", "Draw configurations and write a sample file");
  HamiltonianFlags smp_h;
  smp_h.add(sample);
  std::string smp_source = "exact", smp_noise = "depolarizing", smp_t2, smp_out;
  std::string smp_order = "supplement";
  double smp_alpha = 1.0;
  std::uint64_t smp_shots = 10000, smp_seed = 0;
  int smp_layers = 2;
  bool smp_hex = false;
  sample->add_option("--sampler", smp_source, "lucj | exact");
  sample->add_option("--t2", smp_t2, "Amplitude JSON for the LUCJ sampler");
  sample->add_option("--layers", smp_layers, "LUCJ layers");
  sample->add_option("--order", smp_order, "supplement | main_text");
  sample->add_flag("--heavy-hex", smp_hex, "Restrict Jastrow couplings to the heavy-hex pattern");
  sample->add_option("--noise", smp_noise, "none | depolarizing | uniform_full_fock | uniform_sector");
  sample->add_option("--alpha", smp_alpha, "Depolarizing signal fraction");
  sample->add_option("--shots", smp_shots, "Shots");
  sample->add_option("--seed", smp_seed, "Master seed");
  sample->add_option("--out", smp_out, "Output sample file (stdout if omitted)");

  // recover
  auto* recover = app.add_subcommand("recover", "Repair wrong-sector samples with given occupancies");
  HamiltonianFlags rec_h;
  rec_h.add(recover);
  std::string rec_samples, rec_occ, rec_out;
  double rec_delta = 0.01;
  std::uint64_t rec_seed = 0;
  recover->add_option("--samples", rec_samples, "Sample file")->required();
  recover->add_option("--occupancies", rec_occ, "Occupancy JSON (2 n_orb values, alpha first)")->required();
  recover->add_option("--delta", rec_delta, "ReLU parameter delta");
  recover->add_option("--seed", rec_seed, "Seed");
  recover->add_option("--out", rec_out, "Output sample file (stdout if omitted)");

  // diagonalize
  auto* diag = app.add_subcommand("diagonalize", "Ground state in the span of a sample file or the full sector");
  HamiltonianFlags dg_h;
  dg_h.add(diag);
  std::string dg_samples;
  double dg_lambda = 0.2;
  bool dg_variance = false;
  diag->add_option("--samples", dg_samples, "Sample file; correct-sector entries, closed under spin inversion");
  diag->add_option("--lambda", dg_lambda, "Spin penalty lambda");
  diag->add_flag("--variance", dg_variance, "Also compute the Hamiltonian variance");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Diagnostics");
  analyze->require_subcommand(1);
  auto* ev = analyze->add_subcommand("ev-fit", "Energy-variance extrapolation from energies.csv");
  std::string ev_csv;
  int ev_iter = -1;
  ev->add_option("csv", ev_csv, "energies.csv")->required();
  ev->add_option("--iteration", ev_iter, "Use one iteration only");
  auto* bound = analyze->add_subcommand("bound", "Recovery probability lower bound");
  int b_m = 0, b_n = 0, b_b = 0;
  double b_eps = 0.1;
  bound->add_option("--M", b_m, "Qubits")->required();
  bound->add_option("--N", b_n, "Electrons")->required();
  bound->add_option("--b", b_b, "Half Hamming distance")->required();
  bound->add_option("--eps", b_eps, "Occupancy deviation epsilon");
  auto* sector = analyze->add_subcommand("sector", "Fraction of shots in the correct sector");
  std::string sec_samples;
  int sec_norb = 0, sec_na = 0, sec_nb = 0;
  sector->add_option("--samples", sec_samples, "Sample file")->required();
  sector->add_option("--norb", sec_norb, "Spatial orbitals")->required();
  sector->add_option("--nalpha", sec_na, "Alpha electrons")->required();
  sector->add_option("--nbeta", sec_nb, "Beta electrons")->required();
  auto* conc = analyze->add_subcommand("concentration", "Concentration bounds from a probability list");
  std::string conc_file;
  int conc_m = 1, conc_k = 1;
  double conc_eta = 0.05, conc_d = 0;
  conc->add_option("--probs", conc_file, "JSON array of probabilities, sorted descending")->required();
  conc->add_option("--m", conc_m, "Number of leading configurations")->required();
  conc->add_option("--eta", conc_eta, "Failure probability");
  conc->add_option("--d", conc_d, "Subsample size")->required();
  conc->add_option("--K", conc_k, "Number of batches");

  // hubbard-study
  auto* study = app.add_subcommand("hubbard-study", "Top-d truncation error across interaction strengths");
  int st_l = 8, st_r = 5;
  std::string st_u = "1,8,16", st_out;
  std::uint64_t st_d = 1000, st_seed = 0;
  study->add_option("--L", st_l, "Sites");
  study->add_option("--u", st_u, "Comma-separated U grid");
  study->add_option("--realizations", st_r, "Disorder realizations");
  study->add_option("--d", st_d, "Retained configurations");
  study->add_option("--seed", st_seed, "Hopping seed");
  study->add_option("--out", st_out, "Directory for study.csv and summary.csv");

  // cost-eval
  auto* cost = app.add_subcommand("cost-eval", "Mean batch energy of a sample set");
  HamiltonianFlags ce_h;
  ce_h.add(cost);
  std::string ce_samples, ce_warm;
  std::uint64_t ce_d = 1000, ce_seed = 0;
  int ce_k = 10;
  double ce_lambda = 0.2, ce_delta = 0.01;
  cost->add_option("--samples", ce_samples, "Sample file")->required();
  cost->add_option("--d", ce_d, "Batch size");
  cost->add_option("--batches", ce_k, "Number of batches");
  cost->add_option("--lambda", ce_lambda, "Spin penalty lambda");
  cost->add_option("--delta", ce_delta, "ReLU parameter delta");
  cost->add_option("--warm-start", ce_warm, "Occupancy JSON; repairs wrong-sector samples");
  cost->add_option("--seed", ce_seed, "Seed");

  CLI11_PARSE(app, argc, argv);
  const int w = workers_from(workers);

  try {
    if (*run) {
      json cfg = json::object();
      if (!config_path.empty()) cfg = sqd::read_json_file(config_path);
      if (!cfg.is_object()) throw sqd::ValidationError("config", "must be a JSON object");
      json& h = cfg["hamiltonian"];
      if (h.is_null()) h = json::object();
      run_h.merge(h);
      json& s = cfg["sampler"];
      if (s.is_null()) s = json::object();
      if (o_samples->count()) {
        s["source"] = "file";
        s["samples"] = samples_path;
      }
      if (o_t2->count()) {
        s["source"] = "lucj";
        s["t2"] = t2_path;
      }
      set_if(o_source, s, "source", sampler_source);
      set_if(o_layers, s, "layers", layers);
      set_if(o_noise, s, "noise", noise);
      set_if(o_alpha, s, "alpha", alpha);
      set_if(o_shots, s, "shots", shots);
      json& r = cfg["recovery"];
      if (r.is_null()) r = json::object();
      set_if(o_d, r, "d", d);
      set_if(o_batches, r, "batches", batches);
      set_if(o_iters, r, "iterations", iters);
      set_if(o_delta, r, "delta", delta);
      set_if(o_warm, r, "warm_start", warm_start);
      json& sv = cfg["solver"];
      if (sv.is_null()) sv = json::object();
      set_if(o_lambda, sv, "lambda", lambda);
      set_if(o_seed, cfg, "seed", seed);
      set_if(o_out, cfg, "output", out_dir);
      if (workers > 0 || std::getenv("SQD_WORKERS")) cfg["workers"] = w;
      const sqd::RunConfig rc = sqd::run_config_from_json(cfg);
      const auto res = sqd::cmd_run(rc);
      print_history(res.history);
      std::printf("artifacts written to %s\n", res.output_dir.string().c_str());
    } else if (*sample) {
      const auto ints = smp_h.load();
      sqd::RunConfig rc;
      rc.sampler.source = smp_source;
      rc.sampler.t2_path = smp_t2;
      rc.sampler.layers = smp_layers;
      rc.sampler.order = smp_order;
      rc.sampler.heavy_hex = smp_hex;
      rc.sampler.noise = smp_noise;
      rc.sampler.alpha = smp_alpha;
      rc.sampler.shots = smp_shots;
      rc.seed = smp_seed;
      rc.workers = w;
      if (smp_source == "file") throw sqd::ValidationError("--sampler", "must be lucj or exact");
      const auto set = sqd::run_stage("sampler", [&] { return sqd::draw_samples(rc, ints); });
      if (smp_out.empty()) {
        sqd::write_samples(std::cout, set);
      } else {
        std::ofstream out(smp_out);
        if (!out) throw sqd::FormatError("cannot write '" + smp_out + "'");
        sqd::write_samples(out, set);
      }
    } else if (*recover) {
      const auto ints = rec_h.load();
      const auto set = sqd::read_samples_file(rec_samples, ints.shape);
      const Eigen::VectorXd occ = sqd::read_occupancies_file(rec_occ);
      sqd::RecoveryConfig cfg;
      cfg.delta = rec_delta;
      cfg.validate(ints.shape);
      if (occ.size() != ints.shape.n_qubits()) throw sqd::ValidationError("--occupancies", "length must be 2 n_orb");
      const auto tri = sqd::triage(set);
      sqd::SampleSet out_set = tri.correct;
      const sqd::CounterRng stream = sqd::CounterRng(rec_seed).derive("recovery", 1);
      std::uint64_t shot = 0;
      for (const auto& [x, c] : tri.wrong.entries())
        for (std::uint64_t j = 0; j < c; ++j, ++shot) {
          sqd::CounterRng rr = stream.derive("shot", shot);
          out_set.add(sqd::recover_configuration(x, occ, ints.shape, cfg, rr), 1);
        }
      if (rec_out.empty()) {
        sqd::write_samples(std::cout, out_set);
      } else {
        std::ofstream out(rec_out);
        if (!out) throw sqd::FormatError("cannot write '" + rec_out + "'");
        sqd::write_samples(out, out_set);
      }
      std::fprintf(stderr, "repaired %llu of %llu shots\n", static_cast<unsigned long long>(shot),
                   static_cast<unsigned long long>(set.total()));
    } else if (*diag) {
      const auto ints = dg_h.load();
      sqd::Batch batch;
      if (dg_samples.empty()) {
        batch = sqd::full_sector_batch(ints.shape);
      } else {
        const auto set = sqd::read_samples_file(dg_samples, ints.shape);
        std::vector<sqd::Mask> a, b;
        for (const auto& [x, c] : sqd::triage(set).correct.entries()) {
          a.push_back(x.alpha);
          b.push_back(x.beta);
        }
        if (a.empty()) throw sqd::DomainError("no correct-sector samples");
        std::vector<sqd::Mask> u = a;
        u.insert(u.end(), b.begin(), b.end());
        std::sort(u.begin(), u.end());
        u.erase(std::unique(u.begin(), u.end()), u.end());
        std::vector<sqd::Determinant> dets;
        for (auto x : u)
          for (auto y : u) {
            sqd::Determinant det{x, y};
            if (sqd::in_sector(det, ints.shape)) dets.push_back(det);
          }
        batch = sqd::make_batch(std::move(dets));
      }
      sqd::SolverOptions so;
      so.compute_variance = dg_variance;
      so.workers = w;
      const auto sol = sqd::solve_batch(batch, ints, sqd::PenaltyConfig{dg_lambda, 0.0}, so);
      std::printf("dimension %zu\nenergy %.15f\ns2 %.3e\n", batch.size(), sol.energy, sol.s2);
      if (dg_variance) std::printf("variance %.6e\n", sol.variance);
    } else if (*ev) {
      auto in = sqd::open_input(ev_csv);
      const auto t = sqd::read_csv(in);
      const auto ci = t.column("iteration"), ce = t.column("energy"), cv = t.column("variance"), cd = t.column("d_effective");
      std::vector<sqd::VariancePoint> pts;
      for (const auto& row : t.rows) {
        if (ev_iter >= 0 && std::stoi(row[ci]) != ev_iter) continue;
        const double e = sqd::parse_double(row[ce]), v = sqd::parse_double(row[cv]);
        if (std::isnan(v)) continue;
        pts.push_back({v / (e * e), e, std::stoull(row[cd]), 0});
      }
      const auto fit = sqd::extrapolate_energy(pts);
      std::printf("points %zu\nintercept %.12f\nslope %.6e\nrms residual %.3e\n", pts.size(), fit.intercept, fit.slope,
                  fit.residual);
    } else if (*bound) {
      const double f = sqd::recovery_probability_bound({b_m, b_n, b_b, b_eps});
      std::printf("%.6e\n", f);
    } else if (*sector) {
      const auto shape = sqd::make_shape(sec_norb, sec_na, sec_nb);
      const auto f = sqd::sector_fraction(sqd::read_samples_file(sec_samples, shape));
      std::printf("fraction %.6e  (%llu / %llu)  95%% CI [%.6e, %.6e]\nuniform %.6e\n", f.fraction,
                  static_cast<unsigned long long>(f.in_sector), static_cast<unsigned long long>(f.shots), f.wilson95.lo,
                  f.wilson95.hi, sqd::uniform_sector_probability(shape));
    } else if (*conc) {
      const auto j = sqd::read_json_file(conc_file);
      const auto p = sqd::vector_from_json(j);
      const std::vector<double> probs(p.data(), p.data() + p.size());
      const auto r = sqd::concentration_bounds(probs, conc_m, conc_eta, conc_d, conc_k);
      std::printf("alpha_m %.6e\nbeta_m %.6e\nshots %.6e\nsubsample_fail %.6e\n", r.alpha_m, r.beta_m, r.shots_bound,
                  r.subsample_fail);
    } else if (*study) {
      const auto rep = sqd::cmd_hubbard_study(st_l, parse_grid(st_u), st_r, st_d, st_seed, w);
      for (const auto& s : rep.summary)
        std::printf("U = %-6g  mean relative error %.6e  mean entropy %.4f  (%d realizations)\n", s.u,
                    s.mean_relative_error, s.mean_entropy, s.count);
      if (!st_out.empty()) {
        std::filesystem::create_directories(st_out);
        sqd::write_text_file(std::filesystem::path(st_out) / "study.csv", sqd::study_csv(rep));
        sqd::write_text_file(std::filesystem::path(st_out) / "summary.csv", sqd::study_summary_csv(rep));
      }
    } else if (*cost) {
      const auto ints = ce_h.load();
      const auto set = sqd::read_samples_file(ce_samples, ints.shape);
      sqd::RecoveryConfig cfg;
      cfg.batch_size = ce_d;
      cfg.batches = ce_k;
      cfg.delta = ce_delta;
      cfg.seed = ce_seed;
      if (!ce_warm.empty()) cfg.warm_start = sqd::read_occupancies_file(ce_warm);
      const double e = sqd::cmd_cost_eval(set, ints, cfg, sqd::PenaltyConfig{ce_lambda, 0.0}, {}, w);
      std::printf("%.15f\n", e);
    }
  } catch (const sqd::StageError& e) {
    std::fprintf(stderr, "error [%s]\n", e.what());
    return 2;
  } catch (const sqd::ValidationError& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
