// convsparse: command-line front end for the convolutional sparse coding
// toolkit. Subcommands: gen-dict, measures, pursue, experiment, verify.
// Exit codes: 0 success, 1 validation error, 2 runtime/convergence failure.
// The data stream (stdout) stays valid JSON even on failure; diagnostics go
// to stderr.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>

#include "convsparse/experiments.hpp"
#include "convsparse/io.hpp"
#include "convsparse/measures.hpp"
#include "convsparse/pursuit.hpp"
#include "convsparse/synth.hpp"

namespace {

using nlohmann::json;
using namespace convsparse;

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

json code_entries_json(const GlobalCode& code) {
  json entries = json::array();
  for (const auto& [c, v] : code.entries())
    entries.push_back({c / code.m(), c % code.m(), v});
  return entries;
}

struct GenDictArgs {
  std::string kind;
  Index n = 0;
  Index m = 0;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  Index candidates = 1;
};

int run_gen_dict(const GenDictArgs& args) {
  LocalDictionary dict;
  if (args.kind == "dct") {
    dict = dct_local_dictionary(args.n, args.m);
  } else if (args.kind == "random") {
    if (!args.seed_given)
      throw std::invalid_argument("gen-dict random needs --seed");
    dict = random_local_dictionary(args.n, args.m, args.seed);
  } else if (args.kind == "search") {
    if (!args.seed_given)
      throw std::invalid_argument("gen-dict search needs --seed");
    dict = coherence_search(args.n, args.m, args.candidates, args.seed).dict;
  } else {
    throw std::invalid_argument("kind must be random, dct or search");
  }
  save_dictionary(args.out, dict);
  const CoherenceProfile profile = shifted_mutual_coherence(dict);
  emit(json{{"kind", args.kind},
            {"n", dict.n()},
            {"m", dict.m()},
            {"seed", args.seed},
            {"candidates", args.candidates},
            {"mu_global", profile.mu_global},
            {"mu_zero", profile.mu_zero},
            {"welch_lower", welch_bound(dict.n(), dict.m())},
            {"dictionary_hash", content_hash(dictionary_to_csv(dict))},
            {"path", args.out}});
  return 0;
}

struct MeasuresArgs {
  std::string dict_path;
  Index N = 0;
  std::string code_path;
  std::string profile_csv;
  std::string zeta_csv;
};

int run_measures(const MeasuresArgs& args) {
  const LocalDictionary dict = load_dictionary(args.dict_path);
  if (args.N < 2 * dict.n() - 1)
    throw std::invalid_argument(
        "N=" + std::to_string(args.N) + " is below 2n-1=" +
        std::to_string(2 * dict.n() - 1) +
        "; stripes would fold onto themselves");
  const ConvOperator op(dict, args.N);
  const CoherenceProfile profile = shifted_mutual_coherence(dict);
  const BoundReport report = thresholds(profile);
  json j = bound_report_to_json(report);
  j["n"] = dict.n();
  j["m"] = dict.m();
  j["N"] = args.N;
  j["dictionary_hash"] = content_hash(dictionary_to_csv(dict));
  if (!args.code_path.empty()) {
    const GlobalCode code = load_code(args.code_path);
    if (code.N() != op.N() || code.m() != op.m())
      throw std::invalid_argument("code file shape does not match dictionary/N");
    const StripeCoherence zeta = stripe_coherence(code, profile);
    j["l0inf"] = l0_inf(code, op);
    j["nnz"] = code.nnz();
    j["max_stripe_coherence"] = zeta.max_zeta;
    if (!args.zeta_csv.empty()) {
      std::string csv = "i,zeta,mu_bar\n";
      for (Index i = 0; i < op.N(); ++i)
        csv += std::to_string(i) + ',' + format_double(zeta.zeta[i]) + ',' +
               format_double(zeta.mu_bar[i]) + '\n';
      write_text_atomic(args.zeta_csv, csv);
      j["zeta_csv"] = args.zeta_csv;
    }
  }
  if (!args.profile_csv.empty()) {
    write_text_atomic(args.profile_csv, profile_to_csv(profile));
    j["profile_csv"] = args.profile_csv;
  }
  emit(j);
  return 0;
}

struct PursueArgs {
  std::string solver;
  std::string dict_path;
  std::string signal_path;
  Index stop_k = -1;
  double stop_eps = -1.0;
  double lambda = 0.1;
  double rho = 1.0;
  double c = 0.0;
  double continuation = 0.0;
  Index max_iters = 0;
  std::string mode = "soft";
  std::uint64_t seed = 0;
  std::string out_code;
};

int run_pursue(const PursueArgs& args) {
  const LocalDictionary dict = load_dictionary(args.dict_path);
  const VectorXd y = load_signal(args.signal_path);
  const ConvOperator op(dict, y.size());
  const ThresholdMode mode =
      args.mode == "hard" ? ThresholdMode::hard : ThresholdMode::soft;
  if (args.mode != "hard" && args.mode != "soft")
    throw std::invalid_argument("--mode must be soft or hard");

  PursuitResult result;
  if (args.solver == "omp") {
    if ((args.stop_k >= 0) == (args.stop_eps >= 0.0))
      throw std::invalid_argument("omp needs exactly one of --stop-k/--stop-eps");
    const OmpStop stop = args.stop_k >= 0 ? OmpStop::atoms(args.stop_k)
                                          : OmpStop::residual(args.stop_eps);
    result = omp(op, y, stop);
  } else if (args.solver == "admm") {
    AdmmConfig cfg;
    cfg.rho = args.rho;
    cfg.lambda = args.lambda;
    cfg.mode = mode;
    cfg.continuation = args.continuation;
    if (args.max_iters > 0) cfg.max_iters = args.max_iters;
    result = admm_bp(op, y, cfg);
  } else if (args.solver == "ist") {
    IstConfig cfg;
    cfg.lambda = args.lambda;
    cfg.c = args.c;
    cfg.mode = mode;
    cfg.continuation = args.continuation;
    if (args.max_iters > 0) cfg.max_iters = args.max_iters;
    result = ist_bp(op, y, cfg);
  } else {
    throw std::invalid_argument("--solver must be omp, admm or ist");
  }

  if (!args.out_code.empty()) save_code(args.out_code, result.code);
  json j{{"solver", args.solver},
         {"N", op.N()},
         {"n", op.n()},
         {"m", op.m()},
         {"seed", args.seed},
         {"converged", result.converged},
         {"iterations", result.iterations},
         {"residual_l2", result.residual_l2},
         {"support_size", static_cast<Index>(result.support.size())},
         {"entries", code_entries_json(result.code)},
         {"note", result.note}};
  if (!args.out_code.empty()) j["code_csv"] = args.out_code;
  emit(j);
  if (!result.converged) {
    std::cerr << "convsparse: solver did not converge ("
              << (result.note.empty() ? "iteration cap reached" : result.note)
              << ")" << std::endl;
    return 2;
  }
  return 0;
}

struct ExperimentArgs {
  std::string config_path;
  std::string out_override;
  int threads_override = -1;
};

int run_experiment_cmd(const ExperimentArgs& args) {
  ExperimentConfig cfg = ExperimentConfig::from_file(args.config_path);
  if (!args.out_override.empty()) cfg.out_dir = args.out_override;
  if (args.threads_override >= 0) cfg.threads = args.threads_override;
  const ExperimentOutputs out = run_experiment(cfg);
  write_outputs(out, cfg.out_dir);
  emit(json{{"out_dir", cfg.out_dir},
            {"records", static_cast<Index>(out.records.size())},
            {"violations", out.violations}});
  if (!out.violations.empty()) {
    std::cerr << "convsparse: " << out.violations.size()
              << " proven-guarantee violation(s); see meta.json" << std::endl;
    return 2;
  }
  return 0;
}

struct VerifyArgs {
  std::string dict_path;
  Index N = 0;
  std::string code_path;
  std::string instance_path;
  Index cases = 50;
  std::uint64_t seed = 1;
};

int run_verify(const VerifyArgs& args) {
  json checks = json::array();
  bool all_ok = true;
  auto check = [&](const std::string& name, bool ok, const std::string& detail) {
    checks.push_back({{"name", name}, {"ok", ok}, {"detail", detail}});
    std::cerr << (ok ? "ok      " : "FAILED  ") << name
              << (detail.empty() ? "" : " (" + detail + ")") << std::endl;
    all_ok = all_ok && ok;
  };

  const LocalDictionary dict = load_dictionary(args.dict_path);
  const Index N = args.N > 0 ? args.N : 4 * dict.n();
  const ConvOperator op(dict, N);
  const CoherenceProfile profile = shifted_mutual_coherence(dict);

  {
    double worst = 0.0;
    for (Index j = 0; j < dict.m(); ++j)
      worst = std::max(worst, std::abs(dict.atoms().col(j).norm() - 1.0));
    check("unit_columns", worst <= 1e-12, "max deviation " + format_double(worst));
  }
  {
    double worst = 0.0;
    for (Index s = 1; s < dict.n(); ++s)
      worst = std::max(worst, std::abs(profile.at(s) - profile.at(-s)));
    check("profile_symmetry", worst == 0.0, "max asymmetry " + format_double(worst));
  }
  {
    const double welch = welch_bound(dict.n(), dict.m());
    check("welch_consistency", profile.mu_global >= welch - 1e-12,
          "mu " + format_double(profile.mu_global) + " vs floor " +
              format_double(welch));
  }
  {
    Rng rng(args.seed);
    double worst_adjoint = 0.0;
    double worst_stripe = 0.0;
    double worst_triangle = 0.0;
    for (Index t = 0; t < args.cases; ++t) {
      const GlobalCode a =
          random_code(op, 1 + static_cast<Index>(rng.uniform_index(
                              std::min<Index>(op.code_length(), 24))),
                      AmplitudeLaw::gaussian(), derive_seed(args.seed, 3 * t));
      const GlobalCode b =
          random_code(op, 1 + static_cast<Index>(rng.uniform_index(
                              std::min<Index>(op.code_length(), 24))),
                      AmplitudeLaw::gaussian(), derive_seed(args.seed, 3 * t + 1));
      VectorXd ysig(op.N());
      Rng yrng(derive_seed(args.seed, 3 * t + 2));
      for (Index i = 0; i < op.N(); ++i) ysig[i] = yrng.normal();

      const VectorXd x = apply(op, a);
      worst_adjoint = std::max(
          worst_adjoint,
          std::abs(x.dot(ysig) - a.to_dense().dot(apply_adjoint(op, ysig))));
      if (op.stripes_valid()) {
        const StripeDictionary omega = build_stripe_dictionary(dict);
        for (Index i = 0; i < std::min<Index>(op.N(), 8); ++i)
          worst_stripe = std::max(
              worst_stripe,
              (extract_patch(op, x, i) -
               omega.omega() * extract_stripe(op, a, i))
                  .cwiseAbs()
                  .maxCoeff());
        GlobalCode sum(op.N(), op.m());
        for (const auto& [c, v] : a.entries()) sum.set(c, v);
        for (const auto& [c, v] : b.entries()) sum.set(c, sum.at(c) + v);
        if (l0_inf(sum, op) > l0_inf(a, op) + l0_inf(b, op))
          worst_triangle = 1.0;
      }
    }
    check("adjointness", worst_adjoint <= 1e-10,
          "max gap " + format_double(worst_adjoint));
    check("patch_stripe_identity", worst_stripe <= 1e-10,
          "max gap " + format_double(worst_stripe));
    check("l0inf_triangle_inequality", worst_triangle == 0.0, "");
  }
  if (op.N() * op.code_length() <= dense_limit()) {
    const MatrixXd dense = build_dense(op);
    Rng rng(derive_seed(args.seed, 999));
    VectorXd g(op.code_length());
    for (Index i = 0; i < g.size(); ++i) g[i] = rng.normal();
    const double gap_fwd = (apply(op, g) - dense * g).cwiseAbs().maxCoeff();
    VectorXd ysig(op.N());
    for (Index i = 0; i < op.N(); ++i) ysig[i] = rng.normal();
    const double gap_adj =
        (apply_adjoint(op, ysig) - dense.transpose() * ysig).cwiseAbs().maxCoeff();
    check("dense_oracle_equivalence", gap_fwd <= 1e-10 && gap_adj <= 1e-10,
          "forward " + format_double(gap_fwd) + ", adjoint " +
              format_double(gap_adj));
  }
  if (!args.code_path.empty()) {
    const GlobalCode code = load_code(args.code_path);
    check("code_shape", code.N() == op.N() && code.m() == op.m(), "");
    bool no_zero = true;
    for (const auto& [c, v] : code.entries()) no_zero = no_zero && v != 0.0;
    check("code_no_stored_zeros", no_zero, "");
  }
  if (!args.instance_path.empty()) {
    try {
      load_instance(args.instance_path);  // throws when invariants fail
      check("instance_invariants", true, "");
    } catch (const std::exception& e) {
      check("instance_invariants", false, e.what());
    }
  }

  emit(json{{"checks", checks}, {"ok", all_ok}});
  return all_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"convolutional sparse coding toolkit"};
  app.require_subcommand(1);

  GenDictArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-dict", "generate a local dictionary");
  gen_cmd->add_option("kind", gen.kind, "random|dct|search")->required();
  gen_cmd->add_option("n", gen.n, "patch length")->required();
  gen_cmd->add_option("m", gen.m, "filter count")->required();
  gen_cmd->add_option("--out", gen.out, "output CSV path")->required();
  gen_cmd->add_option("--seed", gen.seed, "PRNG seed (required for random/search)")
      ->each([&](const std::string&) { gen.seed_given = true; });
  gen_cmd->add_option("--candidates", gen.candidates,
                      "search: number of candidates");

  MeasuresArgs meas;
  auto* meas_cmd =
      app.add_subcommand("measures", "coherence profile and bound report");
  meas_cmd->add_option("--dict", meas.dict_path, "dictionary CSV")->required();
  meas_cmd->add_option("--N", meas.N, "global signal length")->required();
  meas_cmd->add_option("--code", meas.code_path, "optional code CSV");
  meas_cmd->add_option("--profile-csv", meas.profile_csv,
                       "write (s, mu_s) profile here");
  meas_cmd->add_option("--zeta-csv", meas.zeta_csv,
                       "write the per-stripe coherence table here");

  PursueArgs pur;
  auto* pur_cmd = app.add_subcommand("pursue", "run a pursuit solver");
  pur_cmd->add_option("--solver", pur.solver, "omp|admm|ist")->required();
  pur_cmd->add_option("--dict", pur.dict_path, "dictionary CSV")->required();
  pur_cmd->add_option("--signal", pur.signal_path, "signal CSV")->required();
  pur_cmd->add_option("--stop-k", pur.stop_k, "omp: atom budget");
  pur_cmd->add_option("--stop-eps", pur.stop_eps, "omp: residual target");
  pur_cmd->add_option("--lambda", pur.lambda, "l1 weight");
  pur_cmd->add_option("--rho", pur.rho, "admm penalty");
  pur_cmd->add_option("--c", pur.c, "ist step scalar (default: auto)");
  pur_cmd->add_option("--continuation", pur.continuation,
                      "lambda decay factor in (0,1); 0 disables");
  pur_cmd->add_option("--max-iters", pur.max_iters, "iteration cap");
  pur_cmd->add_option("--mode", pur.mode, "soft|hard");
  pur_cmd->add_option("--seed", pur.seed, "echoed into the result");
  pur_cmd->add_option("--out-code", pur.out_code, "write the code CSV here");

  ExperimentArgs exp;
  auto* exp_cmd = app.add_subcommand("experiment", "run an experiment config");
  exp_cmd->add_option("--config", exp.config_path, "key=value config file")
      ->required();
  exp_cmd->add_option("--out", exp.out_override, "override the output directory");
  exp_cmd->add_option("--threads", exp.threads_override, "cap worker threads");

  VerifyArgs ver;
  auto* ver_cmd =
      app.add_subcommand("verify", "run the invariant suite on inputs");
  ver_cmd->add_option("--dict", ver.dict_path, "dictionary CSV")->required();
  ver_cmd->add_option("--N", ver.N, "global signal length (default 4n)");
  ver_cmd->add_option("--code", ver.code_path, "optional code CSV");
  ver_cmd->add_option("--instance", ver.instance_path, "optional instance JSON");
  ver_cmd->add_option("--cases", ver.cases, "random cases per property");
  ver_cmd->add_option("--seed", ver.seed, "PRNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cout << nlohmann::json{
                     {"error",
                      {{"type", "usage"}, {"message", e.what()}}}}.dump(2)
              << std::endl;
    std::cerr << "convsparse: " << e.what() << std::endl;
    return 1;
  }

  try {
    if (gen_cmd->parsed()) return run_gen_dict(gen);
    if (meas_cmd->parsed()) return run_measures(meas);
    if (pur_cmd->parsed()) return run_pursue(pur);
    if (exp_cmd->parsed()) return run_experiment_cmd(exp);
    if (ver_cmd->parsed()) return run_verify(ver);
  } catch (const std::invalid_argument& e) {
    emit(json{{"error", {{"type", "validation"}, {"message", e.what()}}}});
    std::cerr << "convsparse: " << e.what() << std::endl;
    return 1;
  } catch (const std::out_of_range& e) {
    emit(json{{"error", {{"type", "validation"}, {"message", e.what()}}}});
    std::cerr << "convsparse: " << e.what() << std::endl;
    return 1;
  } catch (const std::domain_error& e) {
    emit(json{{"error", {{"type", "validation"}, {"message", e.what()}}}});
    std::cerr << "convsparse: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    emit(json{{"error", {{"type", "runtime"}, {"message", e.what()}}}});
    std::cerr << "convsparse: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
