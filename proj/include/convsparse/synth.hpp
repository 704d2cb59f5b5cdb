// Ground-truth generators: dictionaries, random sparse codes, calibrated
// noise and fully assembled instances. Everything is a pure function of
// (parameters, seed); see rng.hpp for the stream contract.
#ifndef CONVSPARSE_SYNTH_HPP
#define CONVSPARSE_SYNTH_HPP

#include <cstdint>
#include <optional>
#include <string>

#include "convsparse/conv_dict.hpp"
#include "convsparse/rng.hpp"

namespace convsparse {

struct AmplitudeLaw {
  enum class Kind { gaussian_unit, uniform_symmetric, uniform_ring };
  Kind kind = Kind::gaussian_unit;
  double a = 1.0;   // uniform_symmetric: value in [-a, a]
  double lo = 1.0;  // uniform_ring: |value| in [lo, hi], random sign
  double hi = 2.0;

  static AmplitudeLaw gaussian() { return {Kind::gaussian_unit, 1.0, 0.0, 0.0}; }
  static AmplitudeLaw uniform(double a);
  static AmplitudeLaw ring(double lo, double hi);

  double draw(Rng& rng) const;
  std::string describe() const;
};

/// Support drawn uniformly without replacement, values per `law`; exact zeros
/// are redrawn so the code invariant holds.
GlobalCode random_code(const ConvOperator& op, Index cardinality,
                       const AmplitudeLaw& law, std::uint64_t seed);

struct NoiseTarget {
  enum class Kind { global_norm, per_sample_sigma };
  Kind kind = Kind::global_norm;
  double value = 0.0;

  static NoiseTarget global_norm(double eps) { return {Kind::global_norm, eps}; }
  static NoiseTarget sigma(double s) { return {Kind::per_sample_sigma, s}; }
};

struct NoiseResult {
  VectorXd y;
  VectorXd e;
  double eps_global = 0.0;
  double eps_local = 0.0;  // max l2 norm over all N cyclic n-patches of e
};

/// Gaussian noise; in global_norm mode e is rescaled so ||e||_2 hits the
/// target exactly.
NoiseResult add_noise(const ConvOperator& op,
                      const Eigen::Ref<const VectorXd>& x,
                      const NoiseTarget& target, std::uint64_t seed);

/// First m type-II DCT basis vectors on n points, column normalized. The
/// local Gram is the identity.
LocalDictionary dct_local_dictionary(Index n = 25, Index m = 5);

/// I.i.d. standard Gaussian entries, then column normalization.
LocalDictionary random_local_dictionary(Index n, Index m, std::uint64_t seed);

/// Best of n_candidates random dictionaries by smallest global coherence.
/// Candidate t uses derive_seed(seed, t), so enlarging the candidate count
/// with the same seed can only improve the result.
struct CoherenceSearchResult {
  LocalDictionary dict;
  double mu_global = 0.0;
  Index chosen_candidate = 0;
};

CoherenceSearchResult coherence_search(Index n, Index m, Index n_candidates,
                                       std::uint64_t seed);

struct SyntheticInstance {
  GlobalCode gamma_true;
  VectorXd x;  // clean signal
  VectorXd e;  // noise
  VectorXd y;  // x + e
  double eps_global = 0.0;
  double eps_local = 0.0;
  double gamma_min = 0.0;  // min |coefficient| over the support
  Index l0inf_true = 0;
};

/// Code + signal + optional noise in one deterministic package. The code and
/// the noise consume independent child streams of `seed`.
SyntheticInstance make_instance(const ConvOperator& op, Index cardinality,
                                const AmplitudeLaw& law,
                                const std::optional<NoiseTarget>& noise,
                                std::uint64_t seed);

}  // namespace convsparse

#endif  // CONVSPARSE_SYNTH_HPP
