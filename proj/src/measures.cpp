#include "convsparse/measures.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>

#include "convsparse/rng.hpp"

namespace convsparse {

namespace {

Index wrap(Index i, Index N) {
  Index r = i % N;
  return r < 0 ? r + N : r;
}

// Per-position non-zero counts v[t] = ||alpha_t||_0.
std::vector<Index> position_counts(const GlobalCode& code) {
  std::vector<Index> v(code.N(), 0);
  for (const auto& [c, value] : code.entries()) ++v[c / code.m()];
  return v;
}

Index max_window_sum(const std::vector<Index>& v, Index half_width) {
  const Index N = static_cast<Index>(v.size());
  Index best = 0;
  for (Index i = 0; i < N; ++i) {
    Index sum = 0;
    for (Index d = -half_width; d <= half_width; ++d) sum += v[wrap(i + d, N)];
    best = std::max(best, sum);
  }
  return best;
}

void require_stripes(const ConvOperator& op) {
  if (!op.stripes_valid())
    throw std::invalid_argument("measure needs N >= 2n-1 (N=" +
                                std::to_string(op.N()) + ", n=" +
                                std::to_string(op.n()) + ")");
}

MatrixXd restrict_columns(const MatrixXd& dense,
                          const std::vector<Index>& support) {
  MatrixXd sub(dense.rows(), static_cast<Index>(support.size()));
  for (std::size_t j = 0; j < support.size(); ++j) {
    if (support[j] < 0 || support[j] >= dense.cols())
      throw std::out_of_range("support column out of range");
    sub.col(static_cast<Index>(j)) = dense.col(support[j]);
  }
  return sub;
}

}  // namespace

CoherenceProfile shifted_mutual_coherence(const LocalDictionary& local) {
  const Index n = local.n();
  const Index m = local.m();
  const MatrixXd& D = local.atoms();
  CoherenceProfile profile;
  profile.n = n;
  profile.m = m;
  profile.mu = VectorXd::Zero(2 * n - 1);
  for (Index s = 0; s <= n - 1; ++s) {
    // <d^0_i, d^s_j> truncated to the physical overlap of the shifted atoms.
    const MatrixXd overlap =
        D.bottomRows(n - s).transpose() * D.topRows(n - s);
    double mu_s = 0.0;
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < m; ++j) {
        if (s == 0 && i == j) continue;
        mu_s = std::max(mu_s, std::abs(overlap(i, j)));
      }
    profile.mu[n - 1 + s] = mu_s;
    profile.mu[n - 1 - s] = mu_s;
  }
  profile.mu_zero = profile.mu[n - 1];
  profile.mu_global = profile.mu.maxCoeff();
  return profile;
}

Index l0_inf(const GlobalCode& code, const ConvOperator& op) {
  if (code.length() != op.code_length() || code.m() != op.m())
    throw std::invalid_argument("code shape does not match operator");
  require_stripes(op);
  if (code.nnz() == 0) return 0;
  return max_window_sum(position_counts(code), op.n() - 1);
}

Index l0_inf_support(const ConvOperator& op,
                     const std::vector<Index>& support) {
  require_stripes(op);
  std::vector<Index> sorted = support;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("support contains duplicate indices");
  std::vector<Index> v(op.N(), 0);
  for (Index c : sorted) {
    if (c < 0 || c >= op.code_length())
      throw std::out_of_range("support column out of range");
    ++v[c / op.m()];
  }
  return sorted.empty() ? 0 : max_window_sum(v, op.n() - 1);
}

StripeCoherence stripe_coherence(const GlobalCode& code,
                                 const CoherenceProfile& profile) {
  if (profile.mu.size() != 2 * profile.n - 1)
    throw std::invalid_argument("profile length does not match 2n-1");
  if (code.N() < 2 * profile.n - 1)
    throw std::invalid_argument("stripe coherence needs N >= 2n-1");
  const Index N = code.N();
  const Index n = profile.n;
  const std::vector<Index> v = position_counts(code);
  StripeCoherence out;
  out.zeta = VectorXd::Zero(N);
  out.mu_bar = VectorXd::Zero(N);
  for (Index i = 0; i < N; ++i) {
    double zeta = 0.0;
    Index n_i = 0;
    for (Index s = -n + 1; s <= n - 1; ++s) {
      const Index count = v[wrap(i + s, N)];
      zeta += static_cast<double>(count) * profile.mu[s + n - 1];
      n_i += count;
    }
    out.zeta[i] = zeta;
    if (n_i > 0) out.mu_bar[i] = zeta / static_cast<double>(n_i);
  }
  out.max_zeta = out.zeta.size() > 0 ? out.zeta.maxCoeff() : 0.0;
  return out;
}

double welch_bound(Index n, Index m) {
  if (n < 1 || m < 1) throw std::invalid_argument("welch_bound needs n,m >= 1");
  if (m == 1) return 0.0;
  return std::sqrt(static_cast<double>(m - 1) /
                   static_cast<double>(m * (2 * n - 1) - 1));
}

BoundReport make_bound_report(double mu_global, double mu_zero,
                              double welch_lower) {
  if (mu_global < 0.0 || mu_global >= 1.0)
    throw std::invalid_argument("mu must lie in [0, 1)");
  BoundReport report;
  report.mu_global = mu_global;
  report.mu_zero = mu_zero;
  report.welch_lower = welch_lower;
  report.stripe_coherence_threshold = 0.5 * (1.0 + mu_zero);
  if (mu_global == 0.0) {
    report.mu_is_zero = true;
    const double inf = std::numeric_limits<double>::infinity();
    report.uniqueness_threshold = inf;
    report.stripe_spark_lower = inf;
    report.bp_noisy_threshold = inf;
  } else {
    report.uniqueness_threshold = 0.5 * (1.0 + 1.0 / mu_global);
    report.stripe_spark_lower = 1.0 + 1.0 / mu_global;
    report.bp_noisy_threshold = (1.0 + 1.0 / mu_global) / 3.0;
  }
  return report;
}

BoundReport thresholds(const CoherenceProfile& profile) {
  return make_bound_report(profile.mu_global, profile.mu_zero,
                           welch_bound(profile.n, profile.m));
}

double BoundReport::srip_upper(Index k) const {
  if (k < 1) throw std::domain_error("srip_upper needs k >= 1");
  return static_cast<double>(k - 1) * mu_global;
}

double BoundReport::stability_upper(Index k, double eps) const {
  if (k < 1) throw std::domain_error("stability_upper needs k >= 1");
  if (eps < 0.0) throw std::domain_error("eps must be non-negative");
  const double denom = 1.0 - static_cast<double>(2 * k - 1) * mu_global;
  if (denom <= 0.0)
    throw std::domain_error("stability bound undefined: 1-(2k-1)mu <= 0");
  return 4.0 * eps * eps / denom;
}

double BoundReport::omp_error_upper(Index k, double eps) const {
  if (k < 1) throw std::domain_error("omp_error_upper needs k >= 1");
  if (eps < 0.0) throw std::domain_error("eps must be non-negative");
  const double denom = 1.0 - static_cast<double>(k - 1) * mu_global;
  if (denom <= 0.0)
    throw std::domain_error("OMP error bound undefined: 1-(k-1)mu <= 0");
  return eps * eps / denom;
}

double BoundReport::noisy_omp_threshold(double eps_local,
                                        double gamma_min) const {
  if (eps_local < 0.0) throw std::domain_error("eps_local must be >= 0");
  if (gamma_min <= 0.0) throw std::domain_error("gamma_min must be > 0");
  if (mu_is_zero) return std::numeric_limits<double>::infinity();
  return uniqueness_threshold - (eps_local / gamma_min) / mu_global;
}

ErcResult compute_erc(const MatrixXd& dense,
                      const std::vector<Index>& support) {
  ErcResult result;
  if (support.empty()) {
    result.defined = true;
    result.theta = 1.0;  // max over an empty set is 0
    return result;
  }
  const MatrixXd sub = restrict_columns(dense, support);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(sub);
  qr.setThreshold(1e-10);
  if (qr.rank() < sub.cols()) return result;  // theta undefined
  std::vector<bool> in_support(dense.cols(), false);
  for (Index c : support) in_support[c] = true;
  double worst = 0.0;
  for (Index c = 0; c < dense.cols(); ++c) {
    if (in_support[c]) continue;
    worst = std::max(worst, qr.solve(dense.col(c)).lpNorm<1>());
  }
  result.defined = true;
  result.theta = 1.0 - worst;
  return result;
}

GramInterval gram_eigen_interval(const ConvOperator& op, const MatrixXd& dense,
                                 const std::vector<Index>& support,
                                 double mu) {
  if (support.empty())
    throw std::invalid_argument("gram_eigen_interval needs a non-empty support");
  const MatrixXd sub = restrict_columns(dense, support);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sub.transpose() * sub,
                                              Eigen::EigenvaluesOnly);
  GramInterval out;
  out.lambda_min = eig.eigenvalues().minCoeff();
  out.lambda_max = eig.eigenvalues().maxCoeff();
  out.k = l0_inf_support(op, support);
  const double radius = static_cast<double>(out.k - 1) * mu;
  const double slack = 1e-9 * (1.0 + radius);
  out.bound_ok = out.lambda_min >= 1.0 - radius - slack &&
                 out.lambda_max <= 1.0 + radius + slack;
  return out;
}

StripeSparkResult stripe_spark_bruteforce(const ConvOperator& op,
                                          Index max_card) {
  require_stripes(op);
  if (max_card < 1 || max_card > 12)
    throw std::invalid_argument("max_card must lie in [1, 12]");
  if (op.N() * op.code_length() > dense_limit())
    throw std::invalid_argument("instance too large for brute-force search");

  StripeSparkResult result;
  result.max_card = max_card;
  const Index M = op.code_length();

  // Cardinality 1 can never be rank deficient (atoms have unit norm), and a
  // null-space vector always has l0_inf >= 2, so the search can stop early
  // once a witness of value 2 is found.
  for (Index card = 2; card <= std::min(max_card, M); ++card) {
    std::vector<Index> combo(card);
    for (Index j = 0; j < card; ++j) combo[j] = j;
    while (true) {
      MatrixXd sub(op.N(), card);
      for (Index j = 0; j < card; ++j)
        sub.col(j) = dense_column(op, combo[j]);
      Eigen::JacobiSVD<MatrixXd> svd(sub, Eigen::ComputeFullV);
      const Index sv_count = svd.singularValues().size();  // min(N, card)
      const double smax = svd.singularValues()[0];
      const bool deficient =
          card > sv_count ||
          svd.singularValues()[card - 1] <= 1e-8 * std::max(1.0, smax);
      if (deficient) {
        const VectorXd null_vec = svd.matrixV().col(card - 1);
        GlobalCode witness(op.N(), op.m());
        const double scale = null_vec.cwiseAbs().maxCoeff();
        for (Index j = 0; j < card; ++j)
          if (std::abs(null_vec[j]) > 1e-9 * scale)
            witness.set(combo[j], null_vec[j]);
        const Index value = l0_inf(witness, op);
        if (!result.found || value < result.value) {
          result.found = true;
          result.value = value;
          result.witness = witness;
          if (result.value <= 2) return result;
        }
      }
      // next lexicographic combination
      Index j = card - 1;
      while (j >= 0 && combo[j] == M - card + j) --j;
      if (j < 0) break;
      ++combo[j];
      for (Index t = j + 1; t < card; ++t) combo[t] = combo[t - 1] + 1;
    }
  }
  return result;
}

double estimate_srip(const ConvOperator& op, Index k, Index n_samples,
                     std::uint64_t seed) {
  require_stripes(op);
  const Index slots = op.stripe_length();
  if (k < 1 || k > slots || k > op.code_length())
    throw std::invalid_argument("no support with l0_inf = " +
                                std::to_string(k) + " exists");
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");

  const Index n = op.n(), m = op.m(), N = op.N();
  Rng rng(seed);
  double delta = 0.0;
  for (Index sample = 0; sample < n_samples; ++sample) {
    // k non-zeros inside one stripe window pin the l0_inf at exactly k; on
    // alternating samples extra spread-out columns are added, capped so no
    // window exceeds k.
    const Index center = static_cast<Index>(rng.uniform_index(N));
    std::vector<Index> cols;
    std::vector<Index> window_counts(N, 0);
    auto stripe_ok = [&](Index shift) {
      for (Index d = -n + 1; d <= n - 1; ++d)
        if (window_counts[wrap(shift + d, N)] >= k) return false;
      return true;
    };
    auto add_column = [&](Index c) {
      cols.push_back(c);
      const Index shift = c / m;
      for (Index d = -n + 1; d <= n - 1; ++d) ++window_counts[wrap(shift + d, N)];
    };
    for (std::int64_t slot : rng.sample_without_replacement(slots, k)) {
      const Index s = slot / m - (n - 1);
      const Index j = slot % m;
      add_column(wrap(center + s, N) * m + j);
    }
    if (sample % 2 == 1) {
      const Index extras = 1 + static_cast<Index>(rng.uniform_index(k));
      for (Index t = 0; t < extras; ++t) {
        const Index c = static_cast<Index>(rng.uniform_index(m * N));
        if (std::find(cols.begin(), cols.end(), c) != cols.end()) continue;
        if (stripe_ok(c / m)) add_column(c);
      }
    }
    MatrixXd sub(N, static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
      sub.col(static_cast<Index>(j)) = dense_column(op, cols[j]);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sub.transpose() * sub,
                                                Eigen::EigenvaluesOnly);
    delta = std::max({delta, eig.eigenvalues().maxCoeff() - 1.0,
                      1.0 - eig.eigenvalues().minCoeff()});
  }
  return delta;
}

}  // namespace convsparse
