#include "convsparse/pursuit.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>

namespace convsparse {

namespace {

Index wrap(Index i, Index N) {
  Index r = i % N;
  return r < 0 ? r + N : r;
}

PursuitResult finalize(const ConvOperator& op, const VectorXd& gamma,
                       double drop_tol) {
  PursuitResult result;
  result.code = GlobalCode::from_dense(op, gamma, drop_tol);
  result.support = result.code.support();
  return result;
}

struct CertificateInput {
  const VectorXd& gradient;  // D^T (y - D gamma)
  const VectorXd& gamma;
};

LassoCertificate check_certificate(const CertificateInput& in, double lambda,
                                   double rel_tol, double abs_tol,
                                   double support_eps) {
  LassoCertificate cert;
  cert.gradient_inf = in.gradient.size() ? in.gradient.cwiseAbs().maxCoeff() : 0.0;
  cert.support_violation = 0.0;
  for (Index t = 0; t < in.gamma.size(); ++t) {
    if (std::abs(in.gamma[t]) <= support_eps) continue;
    const double target = lambda * (in.gamma[t] > 0 ? 1.0 : -1.0);
    cert.support_violation =
        std::max(cert.support_violation, std::abs(in.gradient[t] - target));
  }
  cert.ok = cert.gradient_inf <= lambda * (1.0 + rel_tol) + abs_tol &&
            cert.support_violation <= lambda * rel_tol + abs_tol;
  return cert;
}

double threshold_level(ThresholdMode mode, double lambda, double weight) {
  // prox of lambda*||.||_1 (soft) or lambda*||.||_0 (hard) scaled by `weight`
  // (rho for the consensus solver, c for the gradient scheme).
  return mode == ThresholdMode::soft ? lambda / weight
                                     : std::sqrt(2.0 * lambda / weight);
}

VectorXd apply_threshold(ThresholdMode mode, const VectorXd& x, double t) {
  return mode == ThresholdMode::soft ? soft_threshold(x, t)
                                     : hard_threshold(x, t);
}

}  // namespace

VectorXd soft_threshold(const Eigen::Ref<const VectorXd>& x, double t) {
  if (t < 0.0) throw std::invalid_argument("threshold must be non-negative");
  return x.array().sign() * (x.array().abs() - t).max(0.0);
}

VectorXd hard_threshold(const Eigen::Ref<const VectorXd>& x, double t) {
  if (t < 0.0) throw std::invalid_argument("threshold must be non-negative");
  return (x.array().abs() > t).select(x, 0.0);
}

LeastSquaresResult least_squares_on_support(const ConvOperator& op,
                                            const Eigen::Ref<const VectorXd>& y,
                                            const std::vector<Index>& support) {
  if (y.size() != op.N())
    throw std::invalid_argument("signal length does not match N");
  LeastSquaresResult result;
  if (support.empty()) {
    result.coeffs = VectorXd();
    return result;
  }
  MatrixXd cols(op.N(), static_cast<Index>(support.size()));
  for (std::size_t j = 0; j < support.size(); ++j)
    cols.col(static_cast<Index>(j)) = dense_column(op, support[j]);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(cols);
  qr.setThreshold(1e-10);
  result.full_rank = qr.rank() == cols.cols();
  result.coeffs = qr.solve(y);
  return result;
}

PursuitResult omp(const ConvOperator& op, const Eigen::Ref<const VectorXd>& y,
                  const OmpStop& stop, bool record_trace) {
  if (y.size() != op.N())
    throw std::invalid_argument("signal length does not match N");
  if (!stop.max_atoms && !stop.residual_tol)
    throw std::invalid_argument("OMP needs a stopping rule");
  if (stop.max_atoms && (*stop.max_atoms < 0 || *stop.max_atoms > op.code_length()))
    throw std::invalid_argument("atom budget out of range [0, mN]");
  if (stop.residual_tol && *stop.residual_tol < 0.0)
    throw std::invalid_argument("residual target must be non-negative");

  const Index M = op.code_length();
  const double select_floor = 1e-13 * (1.0 + y.norm());

  std::vector<Index> selected;
  std::vector<char> is_selected(M, 0);
  MatrixXd cols(op.N(), 0);
  MatrixXd chol;  // lower factor of the support Gram
  VectorXd cty;   // D_T^T y
  VectorXd coeffs;
  VectorXd residual = y;
  bool use_qr = false;
  bool converged = false;
  std::string note;
  std::vector<TraceEntry> trace;

  while (true) {
    if (stop.residual_tol && residual.norm() <= *stop.residual_tol) {
      converged = true;
      break;
    }
    if (stop.max_atoms &&
        static_cast<Index>(selected.size()) >= *stop.max_atoms) {
      converged = true;
      break;
    }
    if (static_cast<Index>(selected.size()) == M) {
      converged = !stop.residual_tol;
      if (!converged) note = "support exhausted before reaching residual target";
      break;
    }

    const VectorXd corr = apply_adjoint(op, residual);
    Index best = -1;
    double best_abs = select_floor;
    for (Index c = 0; c < M; ++c) {
      if (is_selected[c]) continue;
      const double a = std::abs(corr[c]);
      if (a > best_abs) {  // strict: ties go to the smallest index
        best_abs = a;
        best = c;
      }
    }
    if (best < 0) {
      // Residual is (numerically) orthogonal to every remaining atom.
      converged = !stop.residual_tol ||
                  residual.norm() <= *stop.residual_tol + select_floor;
      if (!converged) note = "correlations vanished before residual target";
      break;
    }

    const Index card = static_cast<Index>(selected.size()) + 1;
    cols.conservativeResize(Eigen::NoChange, card);
    cols.col(card - 1) = dense_column(op, best);
    cty.conservativeResize(card);
    cty[card - 1] = cols.col(card - 1).dot(y);

    if (!use_qr) {
      // Incremental Cholesky of the support Gram; falls back to a full
      // pivoted QR re-solve when the new atom is numerically dependent.
      const double g_new = cols.col(card - 1).squaredNorm();
      if (card == 1) {
        chol.resize(1, 1);
        chol(0, 0) = std::sqrt(g_new);
      } else {
        const VectorXd b =
            cols.leftCols(card - 1).transpose() * cols.col(card - 1);
        const VectorXd w = chol.topLeftCorner(card - 1, card - 1)
                               .triangularView<Eigen::Lower>()
                               .solve(b);
        const double d2 = g_new - w.squaredNorm();
        if (d2 <= 1e-12) {
          use_qr = true;
        } else {
          chol.conservativeResizeLike(MatrixXd::Zero(card, card));
          chol.row(card - 1).head(card - 1) = w.transpose();
          chol(card - 1, card - 1) = std::sqrt(d2);
        }
      }
    }

    if (use_qr) {
      Eigen::ColPivHouseholderQR<MatrixXd> qr(cols);
      qr.setThreshold(1e-10);
      if (qr.rank() < card) {
        cols.conservativeResize(Eigen::NoChange, card - 1);
        cty.conservativeResize(card - 1);
        note = "rank-deficient support system; returning partial result";
        break;
      }
      coeffs = qr.solve(y);
    } else {
      coeffs = chol.triangularView<Eigen::Lower>().solve(cty);
      chol.triangularView<Eigen::Lower>().transpose().solveInPlace(coeffs);
    }

    selected.push_back(best);
    is_selected[best] = 1;
    residual = y - cols * coeffs;
    if (record_trace)
      trace.push_back({static_cast<Index>(selected.size()),
                       residual.squaredNorm(), residual.norm(), 0.0, 0.0});
  }

  PursuitResult result;
  result.code = GlobalCode(op.N(), op.m());
  for (std::size_t j = 0; j < selected.size(); ++j)
    if (coeffs[static_cast<Index>(j)] != 0.0)
      result.code.set(selected[j], coeffs[static_cast<Index>(j)]);
  result.support = result.code.support();
  result.residual_l2 = (y - apply(op, result.code)).norm();
  result.iterations = static_cast<Index>(selected.size());
  result.converged = converged;
  result.note = note;
  result.trace = std::move(trace);
  return result;
}

PursuitResult admm_bp(const ConvOperator& op,
                      const Eigen::Ref<const VectorXd>& y,
                      const AdmmConfig& cfg, const IterateObserver& observer) {
  if (y.size() != op.N())
    throw std::invalid_argument("signal length does not match N");
  if (!op.stripes_valid())
    throw std::invalid_argument("consensus solver needs N >= 2n-1");
  if (cfg.rho <= 0.0) throw std::invalid_argument("rho must be positive");
  if (cfg.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (cfg.tol_primal <= 0.0 || cfg.tol_dual <= 0.0)
    throw std::invalid_argument("tolerances must be positive");

  const Index n = op.n(), m = op.m(), N = op.N();
  const Index W = op.stripe_length();
  const double rho = cfg.rho;
  const Index center = (n - 1) * m;

  const MatrixXd omega = build_stripe_dictionary(op.local()).omega();
  MatrixXd Z = omega.transpose() * omega / static_cast<double>(n);
  Z.diagonal().array() += rho;
  Z.diagonal().segment(center, m).array() += rho;  // Q^T Q hits the center
  const Eigen::LLT<MatrixXd> llt(Z);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("stripe projection matrix is not positive definite");

  MatrixXd patches(n, N);
  for (Index i = 0; i < N; ++i)
    patches.col(i) = extract_patch(op, y, i);
  const MatrixXd fixed_rhs = omega.transpose() * patches / static_cast<double>(n);

  VectorXd gamma = VectorXd::Zero(m * N);
  MatrixXd stripes = MatrixXd::Zero(W, N);       // gamma_i
  MatrixXd locals = MatrixXd::Zero(m, N);        // alpha_i
  MatrixXd dual_local = MatrixXd::Zero(m, N);    // u_i
  MatrixXd dual_stripe = MatrixXd::Zero(W, N);   // u-bar_i
  MatrixXd gamma_stripes = MatrixXd::Zero(W, N);  // S_i Gamma

  auto gather_stripes = [&](const VectorXd& g, MatrixXd& out) {
    for (Index i = 0; i < N; ++i)
      for (Index s = -n + 1; s <= n - 1; ++s)
        out.col(i).segment((s + n - 1) * m, m) = g.segment(wrap(i + s, N) * m, m);
  };

  const double lambda0 =
      cfg.continuation > 0.0
          ? std::max(cfg.lambda_floor,
                     0.1 * apply_adjoint(op, y).cwiseAbs().maxCoeff())
          : cfg.lambda;
  double lambda = lambda0;

  PursuitResult result;
  bool converged = false;
  Index iter = 0;
  const double support_eps = 10.0 * cfg.tol_primal;

  for (iter = 1; iter <= cfg.max_iters; ++iter) {
    // 1. local sparse coding of the stripe centers
    const double t = threshold_level(cfg.mode, lambda, rho);
    const MatrixXd locals_prev = locals;
    {
      const MatrixXd v = stripes.middleRows(center, m) + dual_local;
      locals = cfg.mode == ThresholdMode::soft
                   ? MatrixXd((v.array().sign() * (v.array().abs() - t).max(0.0)))
                   : MatrixXd((v.array().abs() > t).select(v, 0.0));
    }

    // 2. stripe projection through the shared factorization
    gather_stripes(gamma, gamma_stripes);
    MatrixXd rhs = fixed_rhs + rho * (gamma_stripes + dual_stripe);
    rhs.middleRows(center, m) += rho * (locals - dual_local);
    stripes = llt.solve(rhs);

    // 3. global update: cyclic stripe overlap count is exactly 2n-1
    VectorXd gamma_new = VectorXd::Zero(m * N);
    {
      const MatrixXd contrib = stripes - dual_stripe;
      for (Index i = 0; i < N; ++i)
        for (Index s = -n + 1; s <= n - 1; ++s)
          gamma_new.segment(wrap(i + s, N) * m, m) +=
              contrib.col(i).segment((s + n - 1) * m, m);
      gamma_new /= static_cast<double>(2 * n - 1);
    }

    // 4. dual updates
    const MatrixXd center_gap = stripes.middleRows(center, m) - locals;
    dual_local += center_gap;
    gather_stripes(gamma_new, gamma_stripes);
    const MatrixXd stripe_gap = gamma_stripes - stripes;
    dual_stripe += stripe_gap;

    const double primal_gap = std::max(center_gap.cwiseAbs().maxCoeff(),
                                       stripe_gap.cwiseAbs().maxCoeff());
    const double dual_change =
        std::max((gamma_new - gamma).cwiseAbs().maxCoeff(),
                 (locals - locals_prev).cwiseAbs().maxCoeff());
    gamma = gamma_new;

    const VectorXd residual = y - apply(op, gamma);
    const VectorXd gradient = apply_adjoint(op, residual);
    LassoCertificate cert;
    if (cfg.mode == ThresholdMode::soft)
      cert = check_certificate({gradient, gamma}, lambda, cfg.certificate_tol,
                               cfg.certificate_atol, support_eps);

    if (observer) observer(iter, gamma);
    if (cfg.record_trace)
      result.trace.push_back({iter,
                              0.5 * residual.squaredNorm() +
                                  lambda * gamma.lpNorm<1>(),
                              residual.norm(), primal_gap, lambda});

    const bool lambda_settled =
        cfg.continuation <= 0.0 || lambda <= cfg.lambda_floor * (1.0 + 1e-12);
    if (primal_gap < cfg.tol_primal && dual_change < cfg.tol_dual &&
        lambda_settled && (cfg.mode != ThresholdMode::soft || cert.ok)) {
      converged = true;
      break;
    }
    // The decay is paced: shrinking lambda while the stripes still disagree
    // or while the current subproblem is unsolved at its own scale lets the
    // iterate drift off the sparse path, and near lambda = 0 nothing pulls
    // it back.
    if (cfg.continuation > 0.0) {
      const bool on_path =
          primal_gap <= std::max(0.1 * lambda, cfg.tol_primal) &&
          cert.gradient_inf <= 1.25 * lambda + cfg.certificate_atol &&
          cert.support_violation <= 0.25 * lambda + cfg.certificate_atol;
      if (cfg.mode != ThresholdMode::soft || on_path)
        lambda = std::max(cfg.lambda_floor, lambda * cfg.continuation);
    }
  }

  PursuitResult out = finalize(op, gamma, support_eps);
  out.residual_l2 = (y - apply(op, out.code)).norm();
  out.iterations = std::min(iter, cfg.max_iters);
  out.converged = converged;
  out.trace = std::move(result.trace);
  if (cfg.mode == ThresholdMode::hard)
    out.note = "hard-threshold variant: no convergence guarantee";
  return out;
}

PursuitResult ist_bp(const ConvOperator& op,
                     const Eigen::Ref<const VectorXd>& y, const IstConfig& cfg,
                     const IterateObserver& observer) {
  if (y.size() != op.N())
    throw std::invalid_argument("signal length does not match N");
  if (cfg.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  const double c = cfg.c > 0.0 ? cfg.c : 1.05 * spectral_norm_sq(op, 1e-6);
  if (c <= 0.0) throw std::invalid_argument("step scalar c must be positive");

  const Index n = op.n(), m = op.m(), N = op.N();
  const MatrixXd& DL = op.local().atoms();

  const double lambda0 =
      cfg.continuation > 0.0
          ? std::max(cfg.lambda_floor,
                     0.1 * apply_adjoint(op, y).cwiseAbs().maxCoeff())
          : cfg.lambda;
  double lambda = lambda0;

  VectorXd gamma = VectorXd::Zero(m * N);
  VectorXd residual = y;  // global residual; patches of it feed the local step
  PursuitResult result;
  bool converged = false;
  Index iter = 0;
  Index stagnant = 0;

  for (iter = 1; iter <= cfg.max_iters; ++iter) {
    // D^T r assembled patch by patch: block i is D_L^T (R_i residual).
    VectorXd gradient(m * N);
    VectorXd patch(n);
    for (Index i = 0; i < N; ++i) {
      for (Index r = 0; r < n; ++r) patch[r] = residual[wrap(i + r, N)];
      gradient.segment(i * m, m) = DL.transpose() * patch;
    }

    const bool lambda_settled = cfg.continuation <= 0.0 ||
                                lambda <= cfg.lambda_floor * (1.0 + 1e-12);
    if (cfg.mode == ThresholdMode::soft) {
      const LassoCertificate cert =
          check_certificate({gradient, gamma}, lambda, cfg.certificate_tol,
                            cfg.certificate_atol, 0.0);
      if (iter > 1 && cert.ok && lambda_settled) {
        converged = true;
        break;
      }
      // Continuation is paced: lambda only shrinks once the current
      // subproblem is solved at its own scale, otherwise the iterate falls
      // behind the lasso path and ends at an arbitrary least-squares point
      // when lambda reaches the floor.
      const bool on_path =
          cert.gradient_inf <= 1.25 * lambda + cfg.certificate_atol &&
          cert.support_violation <= 0.25 * lambda + cfg.certificate_atol;
      if (cfg.continuation > 0.0 && iter > 1 && on_path)
        lambda = std::max(cfg.lambda_floor, lambda * cfg.continuation);
    } else if (cfg.continuation > 0.0) {
      lambda = std::max(cfg.lambda_floor, lambda * cfg.continuation);
    }

    const double t = threshold_level(cfg.mode, lambda, c);
    const VectorXd gamma_new =
        apply_threshold(cfg.mode, gamma + gradient / c, t);
    const double change = (gamma_new - gamma).cwiseAbs().maxCoeff();
    gamma = gamma_new;
    residual = y - apply(op, gamma);

    if (observer) observer(iter, gamma);
    if (cfg.record_trace)
      result.trace.push_back({iter,
                              0.5 * residual.squaredNorm() +
                                  lambda * gamma.lpNorm<1>(),
                              residual.norm(), change, lambda});

    stagnant = change < cfg.tol ? stagnant + 1 : 0;
    if (stagnant >= 20 && (cfg.continuation <= 0.0 ||
                           lambda <= cfg.lambda_floor * (1.0 + 1e-12))) {
      // Iterates stopped moving; in hard mode this is the exit, in soft mode
      // the certificate above decides whether it counts as convergence.
      converged = cfg.mode == ThresholdMode::hard;
      break;
    }
  }

  PursuitResult out = finalize(op, gamma, 0.0);
  out.residual_l2 = (y - apply(op, out.code)).norm();
  out.iterations = std::min(iter, cfg.max_iters);
  out.converged = converged;
  out.trace = std::move(result.trace);
  if (cfg.mode == ThresholdMode::hard)
    out.note = "hard-threshold variant: no convergence guarantee";
  return out;
}

LassoCertificate lasso_certificate(const ConvOperator& op,
                                   const Eigen::Ref<const VectorXd>& y,
                                   const Eigen::Ref<const VectorXd>& gamma,
                                   double lambda, double rel_tol,
                                   double abs_tol) {
  const VectorXd gradient = apply_adjoint(op, y - apply(op, gamma));
  return check_certificate({gradient, gamma}, lambda, rel_tol, abs_tol, 0.0);
}

}  // namespace convsparse
