#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "convsparse/io.hpp"
#include "convsparse/measures.hpp"
#include "convsparse/synth.hpp"

using namespace convsparse;

TEST_CASE("random_code: determinism, cardinality range, value laws") {
  const ConvOperator op(random_local_dictionary(4, 2, 3), 20);

  CHECK(random_code(op, 0, AmplitudeLaw::gaussian(), 5).nnz() == 0);
  CHECK(random_code(op, op.code_length(), AmplitudeLaw::gaussian(), 5).nnz() ==
        op.code_length());
  CHECK_THROWS_AS(random_code(op, op.code_length() + 1, AmplitudeLaw::gaussian(), 5),
                  std::invalid_argument);

  const GlobalCode a = random_code(op, 7, AmplitudeLaw::gaussian(), 42);
  const GlobalCode b = random_code(op, 7, AmplitudeLaw::gaussian(), 42);
  CHECK(a.entries() == b.entries());

  const GlobalCode ring = random_code(op, 15, AmplitudeLaw::ring(1.0, 2.0), 7);
  for (const auto& [c, v] : ring.entries()) {
    CHECK(std::abs(v) >= 1.0);
    CHECK(std::abs(v) <= 2.0);
  }
  const GlobalCode uni = random_code(op, 15, AmplitudeLaw::uniform(0.5), 9);
  for (const auto& [c, v] : uni.entries()) CHECK(std::abs(v) <= 0.5);
}

TEST_CASE("random_code supports are uniform across positions") {
  const ConvOperator op(random_local_dictionary(4, 2, 11), 640);
  const Index M = op.code_length();
  const Index cardinality = 50;
  const int draws = 10000;
  std::vector<int> hits(M, 0);
  for (int t = 0; t < draws; ++t)
    for (Index c :
         random_code(op, cardinality, AmplitudeLaw::gaussian(), derive_seed(1, t))
             .support())
      ++hits[c];
  // binomial(draws, cardinality/M); 5-sigma bands keep the whole-vector
  // false-alarm probability below 1e-3 (3-sigma would flag ~3 cells by chance)
  const double p = static_cast<double>(cardinality) / static_cast<double>(M);
  const double mean = draws * p;
  const double sigma = std::sqrt(draws * p * (1.0 - p));
  int out_of_band = 0;
  for (Index c = 0; c < M; ++c)
    if (hits[c] <= mean - 5.0 * sigma || hits[c] >= mean + 5.0 * sigma)
      ++out_of_band;
  CHECK(out_of_band == 0);
}

TEST_CASE("add_noise calibrates the global norm exactly") {
  const ConvOperator op(random_local_dictionary(8, 1, 13), 64);
  const VectorXd x = VectorXd::Zero(64);

  const NoiseResult zero = add_noise(op, x, NoiseTarget::global_norm(0.0), 3);
  CHECK(zero.e.cwiseAbs().maxCoeff() == 0.0);
  CHECK((zero.y - x).cwiseAbs().maxCoeff() == 0.0);

  const NoiseResult nr = add_noise(op, x, NoiseTarget::global_norm(0.1), 3);
  CHECK(nr.e.norm() == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(nr.eps_global == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(nr.eps_local <= nr.eps_global);

  const NoiseResult sg = add_noise(op, x, NoiseTarget::sigma(0.02), 3);
  CHECK(sg.eps_global == doctest::Approx(sg.e.norm()));
}

TEST_CASE("eps_local matches a brute-force patch scan") {
  const ConvOperator op(random_local_dictionary(64, 1, 17), 640);
  const VectorXd x = VectorXd::Zero(640);
  const NoiseResult nr = add_noise(op, x, NoiseTarget::global_norm(0.5), 23);
  double brute = 0.0;
  for (Index i = 0; i < op.N(); ++i) {
    double sq = 0.0;
    for (Index r = 0; r < op.n(); ++r) {
      const double v = nr.e[(i + r) % op.N()];
      sq += v * v;
    }
    brute = std::max(brute, std::sqrt(sq));
  }
  CHECK(nr.eps_local == doctest::Approx(brute).epsilon(1e-14));
}

TEST_CASE("a single noise spike makes local and global energies equal") {
  const ConvOperator op(random_local_dictionary(3, 1, 19), 12);
  VectorXd e = VectorXd::Zero(12);
  e[5] = -0.7;
  double local = 0.0;
  for (Index i = 0; i < 12; ++i)
    local = std::max(local, extract_patch(op, e, i).norm());
  CHECK(local == doctest::Approx(0.7));
  CHECK(e.norm() == doctest::Approx(0.7));
}

TEST_CASE("dct_local_dictionary: DC atom and orthogonality") {
  const LocalDictionary dict = dct_local_dictionary(25, 5);
  for (Index r = 0; r < 25; ++r)
    CHECK(dict.atoms()(r, 0) == doctest::Approx(1.0 / 5.0).epsilon(1e-14));
  const MatrixXd gram = dict.atoms().transpose() * dict.atoms();
  CHECK((gram - MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-12);
  // measured coherence of its convolutional extension is reportable
  const CoherenceProfile profile = shifted_mutual_coherence(dict);
  CHECK(profile.mu_global > 0.0);
  CHECK(profile.mu_global < 1.0);
  CHECK(profile.mu_zero <= 1e-12);
}

TEST_CASE("random_local_dictionary: determinism and Welch consistency") {
  const LocalDictionary a = random_local_dictionary(64, 8, 5);
  const LocalDictionary b = random_local_dictionary(64, 8, 5);
  CHECK((a.atoms() - b.atoms()).cwiseAbs().maxCoeff() == 0.0);
  const double mu = shifted_mutual_coherence(a).mu_global;
  CHECK(mu >= welch_bound(64, 8) - 1e-12);
}

TEST_CASE("coherence medians shrink as n grows at fixed m") {
  auto median_mu = [](Index n) {
    std::vector<double> mus;
    for (std::uint64_t s = 0; s < 31; ++s)
      mus.push_back(
          shifted_mutual_coherence(random_local_dictionary(n, 2, derive_seed(77, s)))
              .mu_global);
    std::sort(mus.begin(), mus.end());
    return mus[mus.size() / 2];
  };
  CHECK(median_mu(64) < median_mu(16));
}

TEST_CASE("coherence_search improves with more candidates") {
  const CoherenceSearchResult one = coherence_search(16, 2, 1, 99);
  const CoherenceSearchResult many = coherence_search(16, 2, 60, 99);
  CHECK(many.mu_global <= one.mu_global);
  // candidate 0 is exactly the random dictionary with the same derived seed
  const LocalDictionary direct = random_local_dictionary(16, 2, derive_seed(99, 0));
  CHECK((one.dict.atoms() - direct.atoms()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("make_instance assembles consistent fields") {
  const ConvOperator op(random_local_dictionary(6, 2, 21), 30);
  const SyntheticInstance inst = make_instance(
      op, 5, AmplitudeLaw::ring(1.0, 2.0), NoiseTarget::global_norm(0.1), 31);
  CHECK((inst.y.array() == (inst.x + inst.e).array()).all());
  CHECK((inst.x - apply(op, inst.gamma_true)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(inst.eps_local <= inst.eps_global);
  CHECK(inst.l0inf_true == l0_inf(inst.gamma_true, op));
  double gmin = std::numeric_limits<double>::infinity();
  for (const auto& [c, v] : inst.gamma_true.entries())
    gmin = std::min(gmin, std::abs(v));
  CHECK(inst.gamma_min == doctest::Approx(gmin));
  CHECK(inst.gamma_min >= 1.0);  // ring law
}

TEST_CASE("instances survive a JSON round trip with validation") {
  const ConvOperator op(random_local_dictionary(5, 2, 41), 25);
  const SyntheticInstance inst =
      make_instance(op, 4, AmplitudeLaw::gaussian(), NoiseTarget::sigma(0.05), 51);
  const nlohmann::json j = instance_to_json(op, inst, {{"seed", 51}});
  const StoredInstance back = instance_from_json(j, "roundtrip");
  CHECK(back.N == op.N());
  CHECK((back.dict.atoms() - op.local().atoms()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.instance.gamma_true.entries() == inst.gamma_true.entries());
  CHECK((back.instance.y - inst.y).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.instance.eps_local == inst.eps_local);

  // tampering must be caught on load
  nlohmann::json bad = j;
  bad["eps_global"] = inst.eps_global + 0.5;
  CHECK_THROWS_AS(instance_from_json(bad, "tampered"), std::invalid_argument);
}

TEST_CASE("derived seeds separate parallel streams") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  Rng a(derive_seed(9, 0));
  Rng b(derive_seed(9, 1));
  CHECK(a.next_u64() != b.next_u64());
}
