// Convolutional dictionary machinery: the local dictionary D_L, the implicit
// global operator built from its cyclic shifts, sparse global codes and their
// patch/stripe views.
#ifndef CONVSPARSE_CONV_DICT_HPP
#define CONVSPARSE_CONV_DICT_HPP

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace convsparse {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

/// n x m matrix of filters with unit l2 columns. Global atoms are cyclic
/// shifts of these columns, so local unit norm implies global unit norm.
class LocalDictionary {
 public:
  LocalDictionary() = default;

  Index n() const { return atoms_.rows(); }
  Index m() const { return atoms_.cols(); }
  const MatrixXd& atoms() const { return atoms_; }

  friend LocalDictionary make_local_dictionary(const MatrixXd& raw);

 private:
  explicit LocalDictionary(MatrixXd atoms) : atoms_(std::move(atoms)) {}
  MatrixXd atoms_;
};

/// Normalizes every column of `raw` to unit l2 norm. Rejects zero columns
/// (reporting the column index) and non-finite entries.
LocalDictionary make_local_dictionary(const MatrixXd& raw);

/// Implicit global dictionary of size N x mN: column c = i*m + j is filter j
/// cyclically shifted down by i samples. Immutable after construction.
class ConvOperator {
 public:
  ConvOperator(LocalDictionary local, Index signal_length);

  Index n() const { return local_.n(); }
  Index m() const { return local_.m(); }
  Index N() const { return N_; }
  Index code_length() const { return m() * N_; }
  Index stripe_length() const { return (2 * n() - 1) * m(); }
  const LocalDictionary& local() const { return local_; }

  /// Stripes concatenate 2n-1 adjacent locals; with cyclic wrap they are only
  /// well defined when the window does not fold onto itself.
  bool stripes_valid() const { return N_ >= 2 * n() - 1; }

 private:
  LocalDictionary local_;
  Index N_ = 0;
};

/// Sparse global code of length mN, keyed by column index c = shift*m + filter.
/// Stored entries are never exactly zero.
class GlobalCode {
 public:
  GlobalCode() = default;
  GlobalCode(Index signal_length, Index filters);

  Index N() const { return N_; }
  Index m() const { return m_; }
  Index length() const { return m_ * N_; }
  Index nnz() const { return static_cast<Index>(entries_.size()); }

  double at(Index c) const;
  void set(Index c, double value);  // value == 0 erases
  void set(Index shift, Index filter, double value);

  const std::map<Index, double>& entries() const { return entries_; }
  std::vector<Index> support() const;

  VectorXd to_dense() const;
  static GlobalCode from_dense(const ConvOperator& op, const VectorXd& dense,
                               double drop_tol = 0.0);

 private:
  void check_index(Index c) const;
  Index N_ = 0;
  Index m_ = 0;
  std::map<Index, double> entries_;
};

/// n x (2n-1)m matrix whose block at shift s (s in [-n+1, n-1]) is D_L moved
/// vertically by s with out-of-range rows zeroed; the s=0 block is D_L itself.
class StripeDictionary {
 public:
  StripeDictionary() = default;

  Index n() const { return n_; }
  Index m() const { return m_; }
  const MatrixXd& omega() const { return omega_; }
  Eigen::Block<const MatrixXd> block(Index s) const;  // s in [-n+1, n-1]

  friend StripeDictionary build_stripe_dictionary(const LocalDictionary& local);

 private:
  MatrixXd omega_;
  Index n_ = 0;
  Index m_ = 0;
};

StripeDictionary build_stripe_dictionary(const LocalDictionary& local);

// ---------------------------------------------------------------------------
// Operator application (all cyclic).

/// X = sum_i R_i^T D_L alpha_i. Exactly equals the dense product D*Gamma.
VectorXd apply(const ConvOperator& op, const GlobalCode& code);
VectorXd apply(const ConvOperator& op, const Eigen::Ref<const VectorXd>& code);

/// D^T * signal; block i of the result is D_L^T times the cyclic patch at i.
VectorXd apply_adjoint(const ConvOperator& op,
                       const Eigen::Ref<const VectorXd>& signal);

/// Dense N x mN realization, used as a test oracle and for support-restricted
/// computations. Capped so it cannot silently take over the fast path;
/// `dense_limit()` reads CONVSPARSE_DENSE_LIMIT, default 1e6 entries.
MatrixXd build_dense(const ConvOperator& op);
MatrixXd build_dense(const ConvOperator& op, Index entry_limit);
Index dense_limit();

/// Column c of the dense dictionary as an N-vector (no cap involved).
VectorXd dense_column(const ConvOperator& op, Index c);

/// Samples i .. i+n-1 of `signal`, wrapping cyclically.
VectorXd extract_patch(const ConvOperator& op,
                       const Eigen::Ref<const VectorXd>& signal, Index i);

/// Stripe gamma_i: locals alpha_{i-n+1} .. alpha_{i+n-1} with cyclic wrap.
/// Satisfies extract_patch(apply(code), i) = Omega * extract_stripe(code, i).
VectorXd extract_stripe(const ConvOperator& op, const GlobalCode& code, Index i);
VectorXd extract_stripe(const ConvOperator& op,
                        const Eigen::Ref<const VectorXd>& dense_code, Index i);

/// Local alpha_i (length m).
VectorXd extract_local(const GlobalCode& code, Index i);

/// Center m coefficients of a stripe; equals extract_local of the stripe's
/// center position. Rejects stripes whose length is not an odd multiple of m.
VectorXd center_of_stripe(const Eigen::Ref<const VectorXd>& stripe, Index m);

/// Largest eigenvalue of D^T D estimated by power iteration on
/// apply(apply_adjoint(.)), to relative accuracy `tol`. Throws on
/// non-convergence, reporting the last iterate in the message. Near-flat
/// spectra (heavily clustered top eigenvalues) converge slowly; the default
/// tolerance is ample for the 1.05x step-size rule.
double spectral_norm_sq(const ConvOperator& op, double tol = 1e-6,
                        int max_iters = 20000);

}  // namespace convsparse

#endif  // CONVSPARSE_CONV_DICT_HPP
