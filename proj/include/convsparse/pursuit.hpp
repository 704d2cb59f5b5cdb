// Pursuit solvers for the convolutional model: global orthogonal matching
// pursuit, a bi-level consensus ADMM that operates on stripes, and an
// iterative soft-thresholding scheme built entirely from patch-local steps.
#ifndef CONVSPARSE_PURSUIT_HPP
#define CONVSPARSE_PURSUIT_HPP

#include <functional>
#include <optional>
#include <string>

#include "convsparse/conv_dict.hpp"

namespace convsparse {

struct TraceEntry {
  Index iter = 0;
  double objective = 0.0;
  double residual_l2 = 0.0;
  double consensus_gap = 0.0;
  double lambda = 0.0;
};

struct PursuitResult {
  GlobalCode code;
  std::vector<Index> support;  // the non-zero set of code, ascending
  double residual_l2 = 0.0;
  Index iterations = 0;
  bool converged = false;
  std::string note;
  std::vector<TraceEntry> trace;
};

/// Stopping rule for OMP: a fixed atom budget or a residual-norm target.
struct OmpStop {
  static OmpStop atoms(Index k) { return {k, std::nullopt}; }
  static OmpStop residual(double eps) { return {std::nullopt, eps}; }
  std::optional<Index> max_atoms;
  std::optional<double> residual_tol;
};

/// Greedy pursuit: repeatedly select argmax_i |<d_i, r>| (ties broken toward
/// the smallest column index) and re-fit the coefficients on the accumulated
/// support by least squares, keeping the residual orthogonal to everything
/// selected so far. A rank-deficient support system aborts with the partial
/// result and converged=false.
PursuitResult omp(const ConvOperator& op, const Eigen::Ref<const VectorXd>& y,
                  const OmpStop& stop, bool record_trace = false);

struct LeastSquaresResult {
  VectorXd coeffs;  // aligned with the support order passed in
  bool full_rank = true;
};

/// min_c ||D_T c - y||_2 over the given support columns.
LeastSquaresResult least_squares_on_support(const ConvOperator& op,
                                            const Eigen::Ref<const VectorXd>& y,
                                            const std::vector<Index>& support);

enum class ThresholdMode { soft, hard };

/// Shared solver knobs. `continuation` in (0,1) enables the noiseless mode:
/// lambda starts at 0.1*||D^T y||_inf and decays geometrically per iteration
/// down to lambda_floor. Convergence is declared on the lasso optimality
/// certificate (gradient sup-norm within lambda*(1+certificate_tol) +
/// certificate_atol, subgradient match on the support), not on iterate
/// stagnation alone.
struct AdmmConfig {
  double rho = 1.0;
  double lambda = 0.1;
  Index max_iters = 4000;
  double tol_primal = 1e-6;
  double tol_dual = 1e-6;
  ThresholdMode mode = ThresholdMode::soft;
  double continuation = 0.0;  // 0 disables
  double lambda_floor = 1e-10;
  double certificate_tol = 1e-4;
  double certificate_atol = 1e-7;
  bool record_trace = false;
};

struct IstConfig {
  double lambda = 0.1;
  double c = 0.0;  // <= 0: set to 1.05 * spectral_norm_sq(op)
  Index max_iters = 20000;
  double tol = 1e-12;  // iterate-change floor, secondary to the certificate
  double continuation = 0.0;
  double lambda_floor = 1e-10;
  ThresholdMode mode = ThresholdMode::soft;
  double certificate_tol = 1e-4;
  double certificate_atol = 1e-7;
  bool record_trace = false;
};

/// Called once per iteration with the current global iterate; used by the
/// experiment harness to record error-vs-time traces.
using IterateObserver = std::function<void(Index iter, const VectorXd& gamma)>;

/// Bi-level consensus ADMM. Per iteration: per-stripe local thresholding of
/// the center coefficients, a stripe projection through one pre-factored
/// matrix shared by all positions, global averaging of the overlapping
/// stripes (the cyclic overlap count is exactly 2n-1), and dual updates.
PursuitResult admm_bp(const ConvOperator& op,
                      const Eigen::Ref<const VectorXd>& y,
                      const AdmmConfig& cfg,
                      const IterateObserver& observer = {});

/// Iterative soft thresholding in its patch-local form: per-patch residuals,
/// D_L^T products and thresholding only, aggregated by patch averaging. The
/// iterates coincide with the dense global-gradient iteration.
PursuitResult ist_bp(const ConvOperator& op,
                     const Eigen::Ref<const VectorXd>& y, const IstConfig& cfg,
                     const IterateObserver& observer = {});

VectorXd soft_threshold(const Eigen::Ref<const VectorXd>& x, double t);
VectorXd hard_threshold(const Eigen::Ref<const VectorXd>& x, double t);

/// Lasso optimality check for a candidate code: the gradient g = D^T(y - D g)
/// must satisfy ||g||_inf <= lambda*(1+rel) + abs and match lambda*sign on
/// the support of gamma to the same tolerance.
struct LassoCertificate {
  bool ok = false;
  double gradient_inf = 0.0;
  double support_violation = 0.0;
};

LassoCertificate lasso_certificate(const ConvOperator& op,
                                   const Eigen::Ref<const VectorXd>& y,
                                   const Eigen::Ref<const VectorXd>& gamma,
                                   double lambda, double rel_tol,
                                   double abs_tol);

}  // namespace convsparse

#endif  // CONVSPARSE_PURSUIT_HPP
