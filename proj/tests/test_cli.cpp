#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "convsparse/io.hpp"
#include "convsparse/measures.hpp"
#include "convsparse/pursuit.hpp"
#include "convsparse/synth.hpp"

using namespace convsparse;
using nlohmann::json;

namespace {

const std::string kWorkDir = "/tmp/convsparse_cli_tests";

struct CliRun {
  int exit_code = -1;
  std::string out;
  json out_json;
};

CliRun run_cli(const std::string& args, const std::string& env = "") {
  std::filesystem::create_directories(kWorkDir);
  const std::string out_path = kWorkDir + "/stdout.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + CONVSPARSE_CLI_PATH +
                          " " + args + " > " + out_path + " 2> " + kWorkDir +
                          "/stderr.txt";
  const int raw = std::system(cmd.c_str());
  CliRun run;
  run.exit_code = WEXITSTATUS(raw);
  run.out = read_text(out_path);
  if (!run.out.empty()) run.out_json = json::parse(run.out, nullptr, false);
  return run;
}

std::string path_of(const std::string& name) { return kWorkDir + "/" + name; }

}  // namespace

TEST_CASE("gen-dict dct writes an orthogonal local dictionary") {
  const CliRun run =
      run_cli("gen-dict dct 25 5 --out " + path_of("dct.csv"));
  REQUIRE(run.exit_code == 0);
  CHECK(run.out_json["n"] == 25);
  CHECK(run.out_json["mu_global"].get<double>() < 1.0);
  const LocalDictionary dict = load_dictionary(path_of("dct.csv"));
  const MatrixXd gram = dict.atoms().transpose() * dict.atoms();
  CHECK((gram - MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("gen-dict random is deterministic per seed") {
  REQUIRE(run_cli("gen-dict random 16 2 --seed 7 --out " + path_of("a.csv"))
              .exit_code == 0);
  REQUIRE(run_cli("gen-dict random 16 2 --seed 7 --out " + path_of("b.csv"))
              .exit_code == 0);
  CHECK(read_text(path_of("a.csv")) == read_text(path_of("b.csv")));
  // seed is mandatory for stochastic generation
  CHECK(run_cli("gen-dict random 16 2 --out " + path_of("c.csv")).exit_code == 1);
}

TEST_CASE("gen-dict search beats a single candidate") {
  const CliRun one = run_cli("gen-dict search 16 2 --seed 5 --candidates 1 --out " +
                             path_of("s1.csv"));
  const CliRun many = run_cli(
      "gen-dict search 16 2 --seed 5 --candidates 50 --out " + path_of("s50.csv"));
  REQUIRE(one.exit_code == 0);
  REQUIRE(many.exit_code == 0);
  CHECK(many.out_json["mu_global"].get<double>() <=
        one.out_json["mu_global"].get<double>());
}

TEST_CASE("measures reports the bound arithmetic") {
  REQUIRE(run_cli("gen-dict dct 25 5 --out " + path_of("m.csv")).exit_code == 0);
  const CliRun run = run_cli("measures --dict " + path_of("m.csv") +
                             " --N 300 --profile-csv " + path_of("profile.csv"));
  REQUIRE(run.exit_code == 0);
  CHECK(run.out_json["welch_lower"].get<double>() ==
        doctest::Approx(std::sqrt(4.0 / 244.0)).epsilon(1e-12));
  CHECK(run.out_json["mu_global"].get<double>() > 0.0);
  const std::string profile = read_text(path_of("profile.csv"));
  CHECK(profile.rfind("s,mu_s", 0) == 0);

  // too-small N is a validation error with a JSON error object
  const CliRun bad = run_cli("measures --dict " + path_of("m.csv") + " --N 10");
  CHECK(bad.exit_code == 1);
  CHECK(bad.out_json.contains("error"));
}

TEST_CASE("measures with an empty code reports l0inf = 0") {
  REQUIRE(run_cli("gen-dict random 6 2 --seed 3 --out " + path_of("d6.csv"))
              .exit_code == 0);
  GlobalCode empty(24, 2);
  save_code(path_of("empty_code.csv"), empty);
  const CliRun run = run_cli("measures --dict " + path_of("d6.csv") +
                             " --N 24 --code " + path_of("empty_code.csv"));
  REQUIRE(run.exit_code == 0);
  CHECK(run.out_json["l0inf"] == 0);
}

TEST_CASE("pursue omp on a zero signal exits cleanly") {
  REQUIRE(run_cli("gen-dict random 6 2 --seed 3 --out " + path_of("dz.csv"))
              .exit_code == 0);
  save_signal(path_of("zero.csv"), VectorXd::Zero(24));
  const CliRun run = run_cli("pursue --solver omp --dict " + path_of("dz.csv") +
                             " --signal " + path_of("zero.csv") + " --stop-k 4");
  REQUIRE(run.exit_code == 0);
  CHECK(run.out_json["support_size"] == 0);
  CHECK(run.out_json["converged"] == true);
}

TEST_CASE("pursue round trip: reported residual matches a re-synthesis") {
  REQUIRE(run_cli("gen-dict random 8 2 --seed 9 --out " + path_of("dr.csv"))
              .exit_code == 0);
  const LocalDictionary dict = load_dictionary(path_of("dr.csv"));
  const ConvOperator op(dict, 32);
  const SyntheticInstance inst = make_instance(
      op, 3, AmplitudeLaw::ring(1.0, 2.0), NoiseTarget::global_norm(0.05), 77);
  save_signal(path_of("y.csv"), inst.y);

  const CliRun run = run_cli("pursue --solver omp --dict " + path_of("dr.csv") +
                             " --signal " + path_of("y.csv") +
                             " --stop-k 3 --out-code " + path_of("code.csv"));
  REQUIRE(run.exit_code == 0);
  const GlobalCode code = load_code(path_of("code.csv"));
  const double resid = (inst.y - apply(op, code)).norm();
  CHECK(resid == doctest::Approx(run.out_json["residual_l2"].get<double>())
                     .epsilon(1e-10));
}

TEST_CASE("pursue reports non-convergence with exit 2 and a partial result") {
  REQUIRE(run_cli("gen-dict random 8 2 --seed 9 --out " + path_of("dn.csv"))
              .exit_code == 0);
  const LocalDictionary dict = load_dictionary(path_of("dn.csv"));
  const ConvOperator op(dict, 32);
  Rng rng(4);
  VectorXd y(32);
  for (Index i = 0; i < 32; ++i) y[i] = rng.normal();
  save_signal(path_of("yn.csv"), y);
  const CliRun run = run_cli("pursue --solver ist --dict " + path_of("dn.csv") +
                             " --signal " + path_of("yn.csv") +
                             " --lambda 0.01 --max-iters 2");
  CHECK(run.exit_code == 2);
  CHECK(run.out_json["converged"] == false);
  CHECK(run.out_json.contains("entries"));
}

TEST_CASE("malformed input files produce line diagnostics, not crashes") {
  std::ofstream bad(path_of("bad.csv"));
  bad << "# local_dictionary n=2 m=2\n1.0,2.0\n1.0\n";
  bad.close();
  const CliRun run = run_cli("measures --dict " + path_of("bad.csv") + " --N 24");
  CHECK(run.exit_code == 1);
  REQUIRE(run.out_json.contains("error"));
  const std::string message = run.out_json["error"]["message"];
  CHECK(message.find(":3:") != std::string::npos);  // offending line
}

TEST_CASE("experiment subcommand writes replayable outputs") {
  std::ofstream cfg(path_of("exp.cfg"));
  cfg << "experiment = phase_transition\n"
         "dict = search\n"
         "dict_n = 8\n"
         "dict_m = 2\n"
         "dict_seed = 7\n"
         "dict_candidates = 20\n"
         "N = 32\n"
         "cardinalities = 1,2\n"
         "trials = 3\n"
         "solvers = omp\n"
         "seed = 5\n";
  cfg.close();
  const CliRun first = run_cli("experiment --config " + path_of("exp.cfg") +
                               " --out " + path_of("run1") + " --threads 2");
  REQUIRE(first.exit_code == 0);
  const CliRun second = run_cli("experiment --config " + path_of("exp.cfg") +
                                " --out " + path_of("run2") + " --threads 1");
  REQUIRE(second.exit_code == 0);

  auto strip_wall = [](const std::string& csv) {
    std::string out;
    std::size_t start = 0;
    while (start < csv.size()) {
      std::size_t end = csv.find('\n', start);
      if (end == std::string::npos) end = csv.size();
      const std::string line = csv.substr(start, end - start);
      out += line.substr(0, line.rfind(','));
      out += '\n';
      start = end + 1;
    }
    return out;
  };
  CHECK(strip_wall(read_text(path_of("run1/records.csv"))) ==
        strip_wall(read_text(path_of("run2/records.csv"))));
  CHECK(read_text(path_of("run1/summary.csv")) ==
        read_text(path_of("run2/summary.csv")));
}

TEST_CASE("experiment exits with code 2 when a guarantee is violated") {
  // a one-iteration solver cannot recover anything, so guarantee-region
  // trials trip the violation sentinel
  std::ofstream cfg(path_of("broken.cfg"));
  cfg << "experiment = phase_transition\n"
         "dict = search\n"
         "dict_n = 8\n"
         "dict_m = 2\n"
         "dict_seed = 7\n"
         "dict_candidates = 20\n"
         "N = 32\n"
         "cardinalities = 1\n"
         "trials = 2\n"
         "solvers = ist\n"
         "solver_max_iters = 1\n"
         "seed = 5\n";
  cfg.close();
  const CliRun run = run_cli("experiment --config " + path_of("broken.cfg") +
                             " --out " + path_of("broken_out") + " --threads 1");
  CHECK(run.exit_code == 2);
  CHECK_FALSE(run.out_json["violations"].empty());
}

TEST_CASE("verify validates a stored instance") {
  const LocalDictionary dict = random_local_dictionary(6, 2, 33);
  const ConvOperator op(dict, 24);
  const SyntheticInstance inst = make_instance(
      op, 3, AmplitudeLaw::gaussian(), NoiseTarget::global_norm(0.1), 3);
  save_dictionary(path_of("vi.csv"), dict);
  save_instance(path_of("vi.json"), op, inst, {{"seed", 3}});
  const CliRun run = run_cli("verify --dict " + path_of("vi.csv") +
                             " --N 24 --cases 5 --seed 1 --instance " +
                             path_of("vi.json"));
  REQUIRE(run.exit_code == 0);
  bool saw = false;
  for (const auto& check : run.out_json["checks"])
    if (check["name"] == "instance_invariants") saw = check["ok"] == true;
  CHECK(saw);
}

TEST_CASE("verify passes on a healthy dictionary and honors the dense cap") {
  REQUIRE(run_cli("gen-dict random 6 2 --seed 13 --out " + path_of("dv.csv"))
              .exit_code == 0);
  const CliRun ok = run_cli("verify --dict " + path_of("dv.csv") +
                            " --N 24 --cases 10 --seed 2");
  REQUIRE(ok.exit_code == 0);
  CHECK(ok.out_json["ok"] == true);
  bool saw_dense = false;
  for (const auto& check : ok.out_json["checks"])
    if (check["name"] == "dense_oracle_equivalence") saw_dense = true;
  CHECK(saw_dense);

  // shrinking the dense cap through the environment skips the dense oracle
  const CliRun capped = run_cli("verify --dict " + path_of("dv.csv") +
                                    " --N 24 --cases 10 --seed 2",
                                "CONVSPARSE_DENSE_LIMIT=10");
  REQUIRE(capped.exit_code == 0);
  for (const auto& check : capped.out_json["checks"])
    CHECK(check["name"] != "dense_oracle_equivalence");
}
