#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "convsparse/experiments.hpp"

using namespace convsparse;

namespace {

// records.csv with the wall_time column removed (it is the one permitted
// difference between replays).
std::string strip_wall_time(const std::string& csv) {
  std::string out;
  std::size_t start = 0;
  while (start < csv.size()) {
    std::size_t end = csv.find('\n', start);
    if (end == std::string::npos) end = csv.size();
    const std::string line = csv.substr(start, end - start);
    const std::size_t comma = line.rfind(',');
    out += line.substr(0, comma);
    out += '\n';
    start = end + 1;
  }
  return out;
}

ExperimentConfig tiny_phase_config() {
  ExperimentConfig cfg;
  cfg.kind = ExperimentConfig::Kind::phase_transition;
  cfg.dict = {DictionarySpec::Kind::search, 8, 2, 7, 20, ""};
  cfg.N = 32;
  cfg.cardinalities = {1, 2};
  cfg.trials = 4;
  cfg.solvers = {"omp", "ist"};
  cfg.seed_base = 11;
  cfg.threads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("guarantee_region takes the largest integer strictly below") {
  CHECK(guarantee_region(6.0556) == 6);
  CHECK(guarantee_region(6.0) == 5);
  CHECK(guarantee_region(0.7) == 0);
}

TEST_CASE("phase transition: cardinality one always succeeds") {
  const ExperimentOutputs out = phase_transition(tiny_phase_config());
  CHECK(out.violations.empty());
  REQUIRE(out.records.size() == 16);  // 2 cards x 4 trials x 2 solvers
  for (const auto& r : out.records) {
    if (r.cardinality == 1) {
      CHECK(r.success);
      CHECK(r.success_support);
      CHECK(r.l0inf == 1);
    }
    CHECK(r.max_stripe_coherence >= 0.0);
  }
  CHECK(out.meta.contains("guarantee_l0inf"));
  CHECK(out.meta["mu_global"].get<double>() > 0.0);
}

TEST_CASE("phase transition replays bit-exactly modulo wall_time") {
  const ExperimentOutputs a = phase_transition(tiny_phase_config());
  const ExperimentOutputs b = phase_transition(tiny_phase_config());
  CHECK(strip_wall_time(a.records_csv) == strip_wall_time(b.records_csv));
  CHECK(a.summary_csv == b.summary_csv);
}

TEST_CASE("noisy OMP study: degenerate zero-noise run has no violations") {
  ExperimentConfig cfg;
  cfg.kind = ExperimentConfig::Kind::noisy_omp;
  cfg.dict = {DictionarySpec::Kind::search, 8, 2, 7, 20, ""};
  cfg.N = 32;
  cfg.cardinalities = {1, 2, 3};
  cfg.trials = 5;
  cfg.noise = NoiseTarget::global_norm(0.0);
  cfg.seed_base = 13;
  cfg.threads = 2;
  const ExperimentOutputs out = noisy_omp_study(cfg);
  CHECK(out.violations.empty());
  for (const auto& r : out.records) {
    CHECK(r.eps_local == 0.0);
    CHECK(r.ratio_epsL_gammaMin == 0.0);
  }
  CHECK(out.meta["trials_in_hypothesis"].get<Index>() > 0);
}

TEST_CASE("noisy OMP study with real noise keeps the proven region clean") {
  ExperimentConfig cfg;
  cfg.kind = ExperimentConfig::Kind::noisy_omp;
  cfg.dict = {DictionarySpec::Kind::search, 8, 2, 7, 30, ""};
  cfg.N = 40;
  cfg.cardinalities = {1, 2, 4};
  cfg.trials = 10;
  cfg.noise = NoiseTarget::global_norm(0.1);
  cfg.seed_base = 17;
  cfg.threads = 2;
  const ExperimentOutputs out = noisy_omp_study(cfg);
  CHECK(out.violations.empty());
}

TEST_CASE("noisy BP study on a tiny instance") {
  ExperimentConfig cfg;
  cfg.kind = ExperimentConfig::Kind::noisy_bp;
  cfg.dict = {DictionarySpec::Kind::search, 8, 2, 7, 30, ""};
  cfg.N = 40;
  cfg.cardinalities = {1, 2};
  cfg.trials = 5;
  cfg.noise = NoiseTarget::global_norm(0.05);
  cfg.seed_base = 19;
  cfg.threads = 2;
  const ExperimentOutputs out = noisy_bp_study(cfg);
  CHECK(out.violations.empty());
  CHECK(out.meta["lambda_rule"] == "4*eps_local per instance");
  for (const auto& r : out.records) CHECK(r.solver == "ist");
}

TEST_CASE("local solver convergence on a reduced instance") {
  // cardinality 1 keeps the noiseless run inside the recovery guarantee at
  // this tiny scale; the full-size reproduction lives in the acceptance suite
  ExperimentConfig cfg;
  cfg.kind = ExperimentConfig::Kind::local_convergence;
  cfg.dict = {DictionarySpec::Kind::search, 8, 2, 7, 30, ""};
  cfg.N = 40;
  cfg.cardinalities = {1};
  cfg.sigmas = {0.0, 0.05};
  cfg.conv_seeds = 3;
  cfg.seed_base = 23;
  cfg.threads = 2;
  const ExperimentOutputs out = local_solver_convergence(cfg);
  REQUIRE(out.records.size() == 8);  // 2 solvers x (1 + 3) runs
  CHECK_FALSE(out.traces_csv.empty());
  CHECK(out.meta["stats"].contains("max_solver_gap"));
  CHECK(out.meta["stats"]["max_solver_gap"].get<double>() < 1e-2);
  for (const auto& r : out.records)
    if (r.sigma == 0.0) CHECK(r.l2_error < 1e-3);
}

TEST_CASE("guarantee violations are reported loudly") {
  // A solver crippled to one iteration cannot recover anything, so trials
  // inside the guarantee region must surface as violations.
  ExperimentConfig cfg = tiny_phase_config();
  cfg.solvers = {"ist"};
  cfg.cardinalities = {1};
  cfg.solver_max_iters = 1;
  const ExperimentOutputs out = phase_transition(cfg);
  CHECK_FALSE(out.violations.empty());
  CHECK(out.meta["violations"].size() == out.violations.size());
}

TEST_CASE("experiment outputs land on disk atomically") {
  const std::string dir = "/tmp/convsparse_test_out";
  std::filesystem::remove_all(dir);
  ExperimentConfig cfg = tiny_phase_config();
  const ExperimentOutputs out = phase_transition(cfg);
  write_outputs(out, dir);
  CHECK(std::filesystem::exists(dir + "/records.csv"));
  CHECK(std::filesystem::exists(dir + "/summary.csv"));
  CHECK(std::filesystem::exists(dir + "/meta.json"));
  const auto meta = nlohmann::json::parse(read_text(dir + "/meta.json"));
  CHECK(meta["experiment"] == "phase_transition");
  std::filesystem::remove_all(dir);
}

TEST_CASE("config files parse into experiment configs") {
  const std::string text =
      "# comment line\n"
      "experiment = phase_transition\n"
      "dict = search\n"
      "dict_n = 8\n"
      "dict_m = 2\n"
      "dict_seed = 7\n"
      "dict_candidates = 25\n"
      "N = 32\n"
      "cardinalities = 2:2:6\n"
      "trials = 3\n"
      "solvers = omp,ist\n"
      "seed = 99\n"
      "threads = 1\n";
  const ExperimentConfig cfg =
      ExperimentConfig::from_kv(KeyValueConfig::parse(text, "inline"));
  CHECK(cfg.kind == ExperimentConfig::Kind::phase_transition);
  CHECK(cfg.dict.candidates == 25);
  CHECK(cfg.cardinalities == std::vector<Index>{2, 4, 6});
  CHECK(cfg.seed_base == 99);
  CHECK(cfg.solvers == std::vector<std::string>{"omp", "ist"});

  // the seed is mandatory: stochastic runs never default to wall clock
  const std::string no_seed = "experiment = phase_transition\nN = 32\n";
  CHECK_THROWS_AS(
      ExperimentConfig::from_kv(KeyValueConfig::parse(no_seed, "inline")),
      std::invalid_argument);

  const std::string bad_noise =
      "experiment = noisy_omp\nseed = 1\nnoise = loud\n";
  CHECK_THROWS_AS(
      ExperimentConfig::from_kv(KeyValueConfig::parse(bad_noise, "inline")),
      std::invalid_argument);
}
