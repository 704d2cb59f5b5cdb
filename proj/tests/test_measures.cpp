#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "convsparse/measures.hpp"
#include "convsparse/rng.hpp"
#include "convsparse/synth.hpp"

using namespace convsparse;

namespace {

// Per-stripe summation done through the actual stripe extraction; checks the
// convolution-based implementation from the definition side.
double zeta_direct(const ConvOperator& op, const GlobalCode& code,
                   const CoherenceProfile& profile, Index i) {
  const VectorXd stripe = extract_stripe(op, code, i);
  double zeta = 0.0;
  for (Index s = -op.n() + 1; s <= op.n() - 1; ++s) {
    Index count = 0;
    for (Index j = 0; j < op.m(); ++j)
      if (stripe[(s + op.n() - 1) * op.m() + j] != 0.0) ++count;
    zeta += static_cast<double>(count) * profile.at(s);
  }
  return zeta;
}

}  // namespace

TEST_CASE("l0_inf counts the densest stripe") {
  const ConvOperator op(random_local_dictionary(2, 1, 3), 6);
  GlobalCode code(6, 1);
  CHECK(l0_inf(code, op) == 0);
  code.set(0, 0, 1.0);
  CHECK(l0_inf(code, op) == 1);
  code.set(1, 0, -2.0);
  CHECK(l0_inf(code, op) == 2);  // adjacent positions share a stripe
}

TEST_CASE("shifted_mutual_coherence: one-hot atom has a zero profile") {
  MatrixXd raw = MatrixXd::Zero(4, 1);
  raw(0, 0) = 1.0;
  const CoherenceProfile p = shifted_mutual_coherence(make_local_dictionary(raw));
  CHECK(p.mu.cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.mu_global == 0.0);
}

TEST_CASE("shifted_mutual_coherence: flat two-tap atom") {
  MatrixXd raw(2, 1);
  raw << 1.0, 1.0;
  const CoherenceProfile p = shifted_mutual_coherence(make_local_dictionary(raw));
  CHECK(p.mu_zero == 0.0);  // single filter, no pair at lag 0
  CHECK(p.at(1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.at(-1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.mu_global == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("mu_global equals the dense Gram coherence") {
  const LocalDictionary dict = random_local_dictionary(6, 3, 17);
  const ConvOperator op(dict, 24);
  const CoherenceProfile p = shifted_mutual_coherence(dict);
  const MatrixXd dense = build_dense(op);
  MatrixXd gram = dense.transpose() * dense;
  gram.diagonal().setZero();
  CHECK(p.mu_global ==
        doctest::Approx(gram.cwiseAbs().maxCoeff()).epsilon(1e-12));
  // symmetry and ordering properties
  for (Index s = 1; s < dict.n(); ++s) CHECK(p.at(s) == p.at(-s));
  CHECK(p.mu_zero <= p.mu_global);
}

TEST_CASE("stripe_coherence: zero code, single non-zero, random oracle") {
  const LocalDictionary dict = random_local_dictionary(4, 2, 23);
  const ConvOperator op(dict, 15);
  const CoherenceProfile p = shifted_mutual_coherence(dict);

  GlobalCode zero(op.N(), op.m());
  CHECK(stripe_coherence(zero, p).max_zeta == 0.0);

  GlobalCode single(op.N(), op.m());
  single.set(6, 1, 3.0);
  const StripeCoherence sc = stripe_coherence(single, p);
  CHECK(sc.zeta[6] == doctest::Approx(p.mu_zero).epsilon(1e-15));
  CHECK(sc.max_zeta == doctest::Approx(p.mu_global).epsilon(1e-15));

  const GlobalCode code = random_code(op, 9, AmplitudeLaw::gaussian(), 77);
  const StripeCoherence full = stripe_coherence(code, p);
  for (Index i = 0; i < op.N(); ++i)
    CHECK(full.zeta[i] ==
          doctest::Approx(zeta_direct(op, code, p, i)).epsilon(1e-13));
}

TEST_CASE("welch_bound values") {
  CHECK(welch_bound(64, 2) == doctest::Approx(0.0629).epsilon(1e-3));
  CHECK(welch_bound(10, 1) == 0.0);
  // large m approaches 1/sqrt(2n)
  CHECK(std::abs(welch_bound(64, 1000000) - 1.0 / std::sqrt(128.0)) < 5e-4);
}

TEST_CASE("thresholds at mu = 0.09 reproduce the reference arithmetic") {
  const BoundReport report = make_bound_report(0.09, 0.09);
  CHECK(report.uniqueness_threshold == doctest::Approx(6.0556).epsilon(1e-3));
  CHECK(report.bp_noisy_threshold == doctest::Approx(4.037).epsilon(1e-3));
  CHECK(report.stripe_spark_lower == doctest::Approx(1.0 + 1.0 / 0.09));
  CHECK(report.stability_upper(3, 0.0) == 0.0);
  CHECK(report.srip_upper(4) == doctest::Approx(3 * 0.09));
  CHECK(report.omp_error_upper(2, 0.1) ==
        doctest::Approx(0.01 / (1.0 - 0.09)).epsilon(1e-12));
  CHECK(report.noisy_omp_threshold(0.02, 1.0) ==
        doctest::Approx(6.0556 - 0.02 / 0.09).epsilon(1e-3));
}

TEST_CASE("thresholds flag a zero-coherence dictionary") {
  const BoundReport report = make_bound_report(0.0, 0.0);
  CHECK(report.mu_is_zero);
  CHECK(std::isinf(report.uniqueness_threshold));
  CHECK(std::isinf(report.bp_noisy_threshold));
  CHECK(report.stability_upper(5, 1.0) == doctest::Approx(4.0));
}

TEST_CASE("bound functions reject degenerate arguments") {
  const BoundReport report = make_bound_report(0.3, 0.3);
  CHECK_THROWS_AS(report.stability_upper(3, 1.0), std::domain_error);
  CHECK_THROWS_AS(report.omp_error_upper(5, 1.0), std::domain_error);
  CHECK_THROWS_AS(report.srip_upper(0), std::domain_error);
  CHECK_THROWS_AS(report.noisy_omp_threshold(0.1, 0.0), std::domain_error);
}

TEST_CASE("compute_erc: orthogonal dictionary and empty support") {
  const MatrixXd eye = MatrixXd::Identity(5, 5);
  CHECK(compute_erc(eye, {1, 3}).theta == doctest::Approx(1.0));
  CHECK(compute_erc(eye, {}).theta == 1.0);
  MatrixXd dup(4, 2);
  dup.col(0) = VectorXd::Ones(4).normalized();
  dup.col(1) = dup.col(0);
  CHECK_FALSE(compute_erc(dup, {0, 1}).defined);
}

TEST_CASE("ERC is positive below the l0_inf threshold") {
  const LocalDictionary dict = random_local_dictionary(3, 2, 31);
  const ConvOperator op(dict, 20);
  const MatrixXd dense = build_dense(op);
  const BoundReport report = thresholds(shifted_mutual_coherence(dict));
  Rng rng(5);
  int tested = 0;
  for (int t = 0; t < 200; ++t) {
    const Index card = 1 + static_cast<Index>(rng.uniform_index(4));
    std::vector<Index> support;
    for (std::int64_t c : rng.sample_without_replacement(op.code_length(), card))
      support.push_back(static_cast<Index>(c));
    if (static_cast<double>(l0_inf_support(op, support)) >=
        report.uniqueness_threshold)
      continue;
    const ErcResult erc = compute_erc(dense, support);
    REQUIRE(erc.defined);
    CHECK(erc.theta > 0.0);
    ++tested;
  }
  CHECK(tested > 20);
}

TEST_CASE("gram_eigen_interval") {
  const LocalDictionary dict = random_local_dictionary(3, 2, 41);
  const ConvOperator op(dict, 20);
  const MatrixXd dense = build_dense(op);
  const double mu = shifted_mutual_coherence(dict).mu_global;

  const GramInterval single = gram_eigen_interval(op, dense, {5}, mu);
  CHECK(single.lambda_min == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(single.lambda_max == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(single.bound_ok);

  // two atoms far apart do not overlap
  const GramInterval apart = gram_eigen_interval(op, dense, {0, 10 * op.m()}, mu);
  CHECK(apart.lambda_min == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(apart.lambda_max == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    const Index card = 1 + static_cast<Index>(rng.uniform_index(6));
    std::vector<Index> support;
    for (std::int64_t c : rng.sample_without_replacement(op.code_length(), card))
      support.push_back(static_cast<Index>(c));
    CHECK(gram_eigen_interval(op, dense, support, mu).bound_ok);
  }
}

TEST_CASE("stripe_spark_bruteforce: duplicated filter gives 2 with a witness") {
  const LocalDictionary base = random_local_dictionary(3, 1, 51);
  MatrixXd doubled(3, 2);
  doubled.col(0) = base.atoms().col(0);
  doubled.col(1) = base.atoms().col(0);
  const ConvOperator op(make_local_dictionary(doubled), 9);
  const StripeSparkResult result = stripe_spark_bruteforce(op, 4);
  REQUIRE(result.found);
  CHECK(result.value == 2);
  CHECK(apply(op, result.witness).cwiseAbs().maxCoeff() <= 1e-7);
  CHECK(result.witness.nnz() == 2);
}

TEST_CASE("stripe_spark_bruteforce: full-rank square case finds nothing") {
  MatrixXd raw = MatrixXd::Zero(1, 1);
  raw(0, 0) = 1.0;
  const ConvOperator op(make_local_dictionary(raw), 4);
  const StripeSparkResult result = stripe_spark_bruteforce(op, 3);
  CHECK_FALSE(result.found);
  CHECK(result.max_card == 3);
}

TEST_CASE("stripe_spark_bruteforce respects the coherence lower bound") {
  const LocalDictionary dict = random_local_dictionary(2, 2, 61);
  const ConvOperator op(dict, 5);
  const double mu = shifted_mutual_coherence(dict).mu_global;
  const StripeSparkResult result = stripe_spark_bruteforce(op, 6);
  REQUIRE(result.found);  // 10 columns in a 5-dim space
  CHECK(static_cast<double>(result.value) >= 1.0 + 1.0 / mu - 1e-9);
  CHECK(apply(op, result.witness).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("estimate_srip: exact zeros and the coherence cap") {
  MatrixXd onehot = MatrixXd::Zero(3, 1);
  onehot(0, 0) = 1.0;
  const ConvOperator ortho(make_local_dictionary(onehot), 9);
  CHECK(estimate_srip(ortho, 1, 50, 7) <= 1e-13);
  CHECK(estimate_srip(ortho, 3, 50, 7) <= 1e-13);

  const LocalDictionary dict = random_local_dictionary(4, 2, 71);
  const ConvOperator op(dict, 16);
  const double mu = shifted_mutual_coherence(dict).mu_global;
  CHECK(estimate_srip(op, 1, 100, 9) <= 1e-13);
  const double delta3 = estimate_srip(op, 3, 10000, 9);
  CHECK(delta3 <= 2.0 * mu + 1e-12);
  CHECK(delta3 > 0.0);
  CHECK_THROWS_AS(estimate_srip(op, 1000, 10, 9), std::invalid_argument);
}

TEST_CASE("l0_inf triangle inequality holds on random pairs") {
  const LocalDictionary dict = random_local_dictionary(3, 2, 81);
  const ConvOperator op(dict, 18);
  for (int t = 0; t < 100; ++t) {
    const GlobalCode a =
        random_code(op, 1 + t % 12, AmplitudeLaw::gaussian(), derive_seed(10, t));
    const GlobalCode b = random_code(op, 1 + (t * 7) % 12,
                                     AmplitudeLaw::gaussian(), derive_seed(20, t));
    GlobalCode sum(op.N(), op.m());
    for (const auto& [c, v] : a.entries()) sum.set(c, v);
    for (const auto& [c, v] : b.entries()) sum.set(c, sum.at(c) + v);
    CHECK(l0_inf(sum, op) <= l0_inf(a, op) + l0_inf(b, op));
  }
}

TEST_CASE("stripe coherence is monotone under support inclusion") {
  const LocalDictionary dict = random_local_dictionary(4, 2, 91);
  const ConvOperator op(dict, 16);
  const CoherenceProfile p = shifted_mutual_coherence(dict);
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    const GlobalCode big =
        random_code(op, 4 + t % 10, AmplitudeLaw::gaussian(), derive_seed(30, t));
    GlobalCode small(op.N(), op.m());
    for (const auto& [c, v] : big.entries())
      if (rng.uniform01() < 0.5) small.set(c, v);
    CHECK(stripe_coherence(small, p).max_zeta <=
          stripe_coherence(big, p).max_zeta + 1e-12);
  }
}

TEST_CASE("measures reject N below 2n-1") {
  const LocalDictionary dict = random_local_dictionary(4, 1, 99);
  const ConvOperator op(dict, 5);
  const GlobalCode code(op.N(), op.m());
  CHECK_THROWS_AS(l0_inf(code, op), std::invalid_argument);
  CHECK_THROWS_AS(estimate_srip(op, 2, 10, 1), std::invalid_argument);
}
