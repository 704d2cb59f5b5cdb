// Experiment harness: phase transitions of OMP/BP recovery, noisy OMP and BP
// stability studies, and the convergence comparison of the two local solvers.
// Trials run in a parallel pool but records are keyed by trial index, so
// re-running a config reproduces the CSV byte for byte (modulo wall_time).
#ifndef CONVSPARSE_EXPERIMENTS_HPP
#define CONVSPARSE_EXPERIMENTS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "convsparse/conv_dict.hpp"
#include "convsparse/io.hpp"
#include "convsparse/measures.hpp"
#include "convsparse/pursuit.hpp"
#include "convsparse/synth.hpp"

namespace convsparse {

struct TrialRecord {
  Index trial = 0;
  std::uint64_t seed = 0;
  std::string solver;
  Index cardinality = 0;
  Index l0inf = 0;
  double max_stripe_coherence = 0.0;
  double eps_local = 0.0;
  double gamma_min = 0.0;
  double ratio_epsL_gammaMin = 0.0;
  double sigma = 0.0;  // local-convergence runs only
  bool success_support = false;
  bool success = false;  // family-specific success rule, echoed in meta
  double l2_error = 0.0;
  double linf_error = 0.0;
  bool converged = false;
  Index iterations = 0;
  double wall_time = 0.0;
};

struct DictionarySpec {
  enum class Kind { random, dct, search, file };
  Kind kind = Kind::random;
  Index n = 64;
  Index m = 2;
  std::uint64_t seed = 0;
  Index candidates = 1;
  std::string path;
};

LocalDictionary realize_dictionary(const DictionarySpec& spec);

struct ExperimentConfig {
  enum class Kind { phase_transition, noisy_omp, noisy_bp, local_convergence };
  Kind kind = Kind::phase_transition;
  DictionarySpec dict;
  Index N = 640;
  std::vector<Index> cardinalities;
  Index trials = 1;  // per cardinality
  std::optional<NoiseTarget> noise;
  AmplitudeLaw law = AmplitudeLaw::gaussian();
  std::vector<double> amplitude_a_cycle;  // noisy studies: per-trial a values
  std::vector<std::string> solvers;       // "omp", "ist", "admm"
  std::uint64_t seed_base = 0;
  std::string out_dir = ".";
  double support_rel_tol = 1e-4;
  double exact_tol = 1e-4;
  int threads = 0;  // 0: hardware concurrency
  // solver knobs (lambda itself is family-determined: continuation schedule
  // for noiseless runs, 4*eps_local for the noisy BP families)
  double rho = 1.0;
  double continuation = 0.97;
  Index solver_max_iters = 0;  // 0: family default
  // local_convergence specifics
  std::vector<double> sigmas = {0.0, 0.02, 0.04, 0.06};
  Index conv_seeds = 20;

  static ExperimentConfig from_kv(const KeyValueConfig& kv);
  static ExperimentConfig from_file(const std::string& path);
};

struct ExperimentOutputs {
  std::vector<TrialRecord> records;
  std::string records_csv;
  std::string summary_csv;
  std::string traces_csv;  // local_convergence only
  nlohmann::json meta;
  std::vector<std::string> violations;  // proven-guarantee breaches
};

ExperimentOutputs phase_transition(const ExperimentConfig& cfg);
ExperimentOutputs noisy_omp_study(const ExperimentConfig& cfg);
ExperimentOutputs noisy_bp_study(const ExperimentConfig& cfg);
ExperimentOutputs local_solver_convergence(const ExperimentConfig& cfg);

ExperimentOutputs run_experiment(const ExperimentConfig& cfg);

/// Writes records.csv, summary.csv, meta.json (and traces.csv when present)
/// atomically under cfg.out_dir.
void write_outputs(const ExperimentOutputs& out, const std::string& out_dir);

/// Largest integer strictly below the threshold: the guarantee region of a
/// strict "<" hypothesis expressed on integer l0_inf values.
Index guarantee_region(double threshold);

}  // namespace convsparse

#endif  // CONVSPARSE_EXPERIMENTS_HPP
