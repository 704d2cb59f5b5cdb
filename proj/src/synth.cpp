#include "convsparse/synth.hpp"

#include <cmath>

#include "convsparse/measures.hpp"

namespace convsparse {

AmplitudeLaw AmplitudeLaw::uniform(double a) {
  if (a <= 0.0) throw std::invalid_argument("uniform range a must be positive");
  return {Kind::uniform_symmetric, a, 0.0, 0.0};
}

AmplitudeLaw AmplitudeLaw::ring(double lo, double hi) {
  if (!(lo < hi) || lo < 0.0)
    throw std::invalid_argument("ring law needs 0 <= lo < hi");
  return {Kind::uniform_ring, 0.0, lo, hi};
}

double AmplitudeLaw::draw(Rng& rng) const {
  switch (kind) {
    case Kind::gaussian_unit:
      return rng.normal();
    case Kind::uniform_symmetric:
      return rng.uniform(-a, a);
    case Kind::uniform_ring: {
      const double mag = rng.uniform(lo, hi);
      return rng.next_u64() & 1u ? mag : -mag;
    }
  }
  throw std::logic_error("unknown amplitude law");
}

std::string AmplitudeLaw::describe() const {
  switch (kind) {
    case Kind::gaussian_unit:
      return "gaussian_unit";
    case Kind::uniform_symmetric:
      return "uniform_symmetric(" + std::to_string(a) + ")";
    case Kind::uniform_ring:
      return "uniform_ring(" + std::to_string(lo) + "," + std::to_string(hi) + ")";
  }
  return "unknown";
}

GlobalCode random_code(const ConvOperator& op, Index cardinality,
                       const AmplitudeLaw& law, std::uint64_t seed) {
  if (cardinality < 0 || cardinality > op.code_length())
    throw std::invalid_argument("cardinality out of range [0, mN]");
  Rng rng(seed);
  GlobalCode code(op.N(), op.m());
  for (std::int64_t c :
       rng.sample_without_replacement(op.code_length(), cardinality)) {
    double v = law.draw(rng);
    while (v == 0.0) v = law.draw(rng);
    code.set(static_cast<Index>(c), v);
  }
  return code;
}

NoiseResult add_noise(const ConvOperator& op,
                      const Eigen::Ref<const VectorXd>& x,
                      const NoiseTarget& target, std::uint64_t seed) {
  if (x.size() != op.N())
    throw std::invalid_argument("signal length does not match N");
  if (target.value < 0.0)
    throw std::invalid_argument("noise target must be non-negative");
  Rng rng(seed);
  VectorXd e(op.N());
  for (Index i = 0; i < e.size(); ++i) e[i] = rng.normal();
  if (target.kind == NoiseTarget::Kind::global_norm) {
    const double norm = e.norm();
    e = target.value == 0.0 ? VectorXd::Zero(op.N())
                            : VectorXd(e * (target.value / norm));
  } else {
    e *= target.value;
  }
  NoiseResult out;
  out.e = e;
  out.y = x + e;
  out.eps_global = e.norm();
  out.eps_local = 0.0;
  for (Index i = 0; i < op.N(); ++i)
    out.eps_local = std::max(out.eps_local, extract_patch(op, e, i).norm());
  return out;
}

LocalDictionary dct_local_dictionary(Index n, Index m) {
  if (n < 1 || m < 1 || m > n)
    throw std::invalid_argument("DCT dictionary needs 1 <= m <= n");
  MatrixXd raw(n, m);
  const double pi = 3.141592653589793238462643383279502884;
  for (Index j = 0; j < m; ++j)
    for (Index r = 0; r < n; ++r)
      raw(r, j) = std::cos(pi * (2.0 * r + 1.0) * j / (2.0 * n));
  return make_local_dictionary(raw);
}

LocalDictionary random_local_dictionary(Index n, Index m, std::uint64_t seed) {
  if (n < 1 || m < 1) throw std::invalid_argument("need n >= 1 and m >= 1");
  Rng rng(seed);
  MatrixXd raw(n, m);
  // Column-major fill so the stream is a documented function of (n, m, seed).
  for (Index j = 0; j < m; ++j)
    for (Index r = 0; r < n; ++r) raw(r, j) = rng.normal();
  return make_local_dictionary(raw);
}

CoherenceSearchResult coherence_search(Index n, Index m, Index n_candidates,
                                       std::uint64_t seed) {
  if (n_candidates < 1)
    throw std::invalid_argument("need at least one candidate");
  CoherenceSearchResult best;
  for (Index t = 0; t < n_candidates; ++t) {
    LocalDictionary cand = random_local_dictionary(n, m, derive_seed(seed, t));
    const double mu = shifted_mutual_coherence(cand).mu_global;
    if (t == 0 || mu < best.mu_global) {
      best.dict = std::move(cand);
      best.mu_global = mu;
      best.chosen_candidate = t;
    }
  }
  return best;
}

SyntheticInstance make_instance(const ConvOperator& op, Index cardinality,
                                const AmplitudeLaw& law,
                                const std::optional<NoiseTarget>& noise,
                                std::uint64_t seed) {
  SyntheticInstance inst;
  inst.gamma_true = random_code(op, cardinality, law, derive_seed(seed, 0));
  inst.x = apply(op, inst.gamma_true);
  if (noise) {
    NoiseResult nr = add_noise(op, inst.x, *noise, derive_seed(seed, 1));
    inst.e = std::move(nr.e);
    inst.y = std::move(nr.y);
    inst.eps_global = nr.eps_global;
    inst.eps_local = nr.eps_local;
  } else {
    inst.e = VectorXd::Zero(op.N());
    inst.y = inst.x;
  }
  inst.gamma_min = 0.0;
  for (const auto& [c, v] : inst.gamma_true.entries()) {
    const double mag = std::abs(v);
    if (inst.gamma_min == 0.0 || mag < inst.gamma_min) inst.gamma_min = mag;
  }
  inst.l0inf_true =
      op.stripes_valid() ? l0_inf(inst.gamma_true, op) : inst.gamma_true.nnz();
  return inst;
}

}  // namespace convsparse
