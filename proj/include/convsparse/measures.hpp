// Sparsity and coherence measures of the convolutional model, and the
// thresholds/bounds they induce: localized sparsity, shifted mutual coherence,
// stripe coherence, Welch floor, stripe spark, stripe RIP and ERC.
#ifndef CONVSPARSE_MEASURES_HPP
#define CONVSPARSE_MEASURES_HPP

#include <cstdint>
#include <functional>
#include <optional>

#include "convsparse/conv_dict.hpp"

namespace convsparse {

/// Shifted mutual coherences mu_s for s in [-n+1, n-1]. Symmetric in s; the
/// maximum over shifts equals the mutual coherence of the global dictionary
/// and the s=0 value is the coherence of the local dictionary alone.
struct CoherenceProfile {
  VectorXd mu;  // length 2n-1, index s+n-1
  Index n = 0;
  Index m = 0;
  double mu_global = 0.0;
  double mu_zero = 0.0;

  double at(Index s) const {
    if (s < -n + 1 || s > n - 1)
      throw std::out_of_range("shift out of profile range");
    return mu[s + n - 1];
  }
};

CoherenceProfile shifted_mutual_coherence(const LocalDictionary& local);

/// Maximum stripe density: the largest l0 count over all N cyclic stripes.
Index l0_inf(const GlobalCode& code, const ConvOperator& op);
/// Same, for a bare support of column indices.
Index l0_inf_support(const ConvOperator& op, const std::vector<Index>& support);

/// Per-stripe coherence zeta_i = sum_s n_{i,s} mu_s, evaluated for all i by a
/// cyclic convolution of the per-position count vector with the profile.
/// mu_bar[i] = zeta_i / n_i where the stripe is non-empty, 0 elsewhere.
struct StripeCoherence {
  VectorXd zeta;
  VectorXd mu_bar;
  double max_zeta = 0.0;
};

StripeCoherence stripe_coherence(const GlobalCode& code,
                                 const CoherenceProfile& profile);

/// Coherence floor sqrt((m-1)/(m(2n-1)-1)) for any n x m filter bank under
/// the convolutional construction.
double welch_bound(Index n, Index m);

/// Scalar thresholds and bound functions derived from a coherence profile.
/// When mu_global == 0 the coherence-based thresholds are +inf (flagged).
struct BoundReport {
  double mu_global = 0.0;
  double mu_zero = 0.0;
  double welch_lower = 0.0;
  double uniqueness_threshold = 0.0;      // (1/2)(1 + 1/mu), also OMP and BP
  double stripe_spark_lower = 0.0;        // 1 + 1/mu
  double bp_noisy_threshold = 0.0;        // (1/3)(1 + 1/mu)
  double stripe_coherence_threshold = 0.0;  // (1/2)(1 + mu_0)
  bool mu_is_zero = false;

  double srip_upper(Index k) const;                  // (k-1) mu
  double stability_upper(Index k, double eps) const;  // 4 eps^2 / (1-(2k-1)mu)
  double omp_error_upper(Index k, double eps) const;  // eps^2 / (1-(k-1)mu)
  double noisy_omp_threshold(double eps_local, double gamma_min) const;
};

BoundReport thresholds(const CoherenceProfile& profile);
BoundReport make_bound_report(double mu_global, double mu_zero,
                              double welch_lower = 0.0);

/// Exact recovery coefficient theta = 1 - max_{i not in T} ||D_T^+ d_i||_1.
/// Undefined when D_T is rank deficient.
struct ErcResult {
  bool defined = false;
  double theta = 0.0;
};

ErcResult compute_erc(const MatrixXd& dense, const std::vector<Index>& support);

/// Eigenvalue range of D_T^T D_T together with the Gershgorin-type interval
/// [1-(k-1)mu, 1+(k-1)mu] check, k being the support's l0_inf.
struct GramInterval {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  Index k = 0;
  bool bound_ok = false;
};

GramInterval gram_eigen_interval(const ConvOperator& op, const MatrixXd& dense,
                                 const std::vector<Index>& support, double mu);

/// Exhaustive search for the sparsest (in l0_inf) null-space vector among
/// supports of cardinality <= max_card, enumerated lexicographically. When
/// nothing rank deficient is found the result only certifies that every
/// null-space vector has more than max_card non-zeros.
struct StripeSparkResult {
  bool found = false;
  Index value = 0;  // l0_inf of the best witness when found
  Index max_card = 0;
  GlobalCode witness;
};

StripeSparkResult stripe_spark_bruteforce(const ConvOperator& op,
                                          Index max_card);

/// Sampled lower estimate of the stripe-RIP constant delta_k: supports with
/// l0_inf exactly k are drawn at random and the eigenvalue extremes of their
/// Gram matrices are taken (exact per sample, sharper than random test
/// vectors). Deterministic per seed.
double estimate_srip(const ConvOperator& op, Index k, Index n_samples,
                     std::uint64_t seed);

}  // namespace convsparse

#endif  // CONVSPARSE_MEASURES_HPP
