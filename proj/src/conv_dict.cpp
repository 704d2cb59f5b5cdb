#include "convsparse/conv_dict.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

namespace convsparse {

namespace {

Index wrap(Index i, Index N) {
  Index r = i % N;
  return r < 0 ? r + N : r;
}

}  // namespace

LocalDictionary make_local_dictionary(const MatrixXd& raw) {
  if (raw.rows() < 1 || raw.cols() < 1)
    throw std::invalid_argument("local dictionary must be at least 1x1");
  if (!raw.allFinite())
    throw std::invalid_argument("local dictionary has non-finite entries");
  MatrixXd atoms = raw;
  for (Index j = 0; j < atoms.cols(); ++j) {
    const double norm = atoms.col(j).norm();
    if (norm == 0.0)
      throw std::invalid_argument("local dictionary column " +
                                  std::to_string(j) + " is zero");
    atoms.col(j) /= norm;
  }
  return LocalDictionary(std::move(atoms));
}

ConvOperator::ConvOperator(LocalDictionary local, Index signal_length)
    : local_(std::move(local)), N_(signal_length) {
  if (N_ < local_.n())
    throw std::invalid_argument("signal length N=" + std::to_string(N_) +
                                " shorter than patch length n=" +
                                std::to_string(local_.n()));
}

GlobalCode::GlobalCode(Index signal_length, Index filters)
    : N_(signal_length), m_(filters) {
  if (N_ < 1 || m_ < 1)
    throw std::invalid_argument("global code needs N >= 1 and m >= 1");
}

void GlobalCode::check_index(Index c) const {
  if (c < 0 || c >= length())
    throw std::out_of_range("code index " + std::to_string(c) +
                            " out of range [0," + std::to_string(length()) + ")");
}

double GlobalCode::at(Index c) const {
  check_index(c);
  auto it = entries_.find(c);
  return it == entries_.end() ? 0.0 : it->second;
}

void GlobalCode::set(Index c, double value) {
  check_index(c);
  if (!std::isfinite(value))
    throw std::invalid_argument("code value must be finite");
  if (value == 0.0)
    entries_.erase(c);
  else
    entries_[c] = value;
}

void GlobalCode::set(Index shift, Index filter, double value) {
  if (shift < 0 || shift >= N_ || filter < 0 || filter >= m_)
    throw std::out_of_range("code position (" + std::to_string(shift) + "," +
                            std::to_string(filter) + ") out of range");
  set(shift * m_ + filter, value);
}

std::vector<Index> GlobalCode::support() const {
  std::vector<Index> s;
  s.reserve(entries_.size());
  for (const auto& [c, v] : entries_) s.push_back(c);
  return s;
}

VectorXd GlobalCode::to_dense() const {
  VectorXd dense = VectorXd::Zero(length());
  for (const auto& [c, v] : entries_) dense[c] = v;
  return dense;
}

GlobalCode GlobalCode::from_dense(const ConvOperator& op, const VectorXd& dense,
                                  double drop_tol) {
  if (dense.size() != op.code_length())
    throw std::invalid_argument("dense code length " +
                                std::to_string(dense.size()) +
                                " does not match mN=" +
                                std::to_string(op.code_length()));
  GlobalCode code(op.N(), op.m());
  for (Index c = 0; c < dense.size(); ++c)
    if (std::abs(dense[c]) > drop_tol) code.set(c, dense[c]);
  return code;
}

StripeDictionary build_stripe_dictionary(const LocalDictionary& local) {
  const Index n = local.n();
  const Index m = local.m();
  StripeDictionary sd;
  sd.n_ = n;
  sd.m_ = m;
  sd.omega_ = MatrixXd::Zero(n, (2 * n - 1) * m);
  for (Index s = -n + 1; s <= n - 1; ++s) {
    const Index col0 = (s + n - 1) * m;
    for (Index r = 0; r < n; ++r) {
      const Index src = r - s;
      if (src >= 0 && src < n)
        sd.omega_.block(r, col0, 1, m) = local.atoms().row(src);
    }
  }
  return sd;
}

Eigen::Block<const MatrixXd> StripeDictionary::block(Index s) const {
  if (s < -n_ + 1 || s > n_ - 1)
    throw std::out_of_range("stripe block shift " + std::to_string(s) +
                            " out of range");
  return omega_.block(0, (s + n_ - 1) * m_, n_, m_);
}

VectorXd apply(const ConvOperator& op, const GlobalCode& code) {
  if (code.length() != op.code_length() || code.m() != op.m())
    throw std::invalid_argument("code shape does not match operator");
  return apply(op, code.to_dense());
}

VectorXd apply(const ConvOperator& op, const Eigen::Ref<const VectorXd>& code) {
  if (code.size() != op.code_length())
    throw std::invalid_argument("code length does not match mN");
  const MatrixXd& D = op.local().atoms();
  const Index n = op.n(), m = op.m(), N = op.N();
  VectorXd x(N);
  // Sample k gathers from the atoms placed at shifts k-n+1..k. The summation
  // order (row-major over the window) does not depend on k, so cyclically
  // shifting a code shifts the output bit-exactly.
  for (Index k = 0; k < N; ++k) {
    double sum = 0.0;
    for (Index r = 0; r < n; ++r) {
      const Index base = wrap(k - r, N) * m;
      for (Index j = 0; j < m; ++j) sum += D(r, j) * code[base + j];
    }
    x[k] = sum;
  }
  return x;
}

VectorXd apply_adjoint(const ConvOperator& op,
                       const Eigen::Ref<const VectorXd>& signal) {
  if (signal.size() != op.N())
    throw std::invalid_argument("signal length does not match N");
  const MatrixXd& D = op.local().atoms();
  const Index n = op.n(), m = op.m(), N = op.N();
  VectorXd out(m * N);
  VectorXd patch(n);
  for (Index i = 0; i < N; ++i) {
    for (Index r = 0; r < n; ++r) patch[r] = signal[wrap(i + r, N)];
    out.segment(i * m, m) = D.transpose() * patch;
  }
  return out;
}

Index dense_limit() {
  if (const char* env = std::getenv("CONVSPARSE_DENSE_LIMIT")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end != env && v > 0) return static_cast<Index>(v);
  }
  return 1000000;
}

MatrixXd build_dense(const ConvOperator& op) {
  return build_dense(op, dense_limit());
}

MatrixXd build_dense(const ConvOperator& op, Index entry_limit) {
  const Index entries = op.N() * op.code_length();
  if (entries > entry_limit)
    throw std::invalid_argument(
        "dense dictionary would hold " + std::to_string(entries) +
        " entries, above the limit of " + std::to_string(entry_limit) +
        "; raise CONVSPARSE_DENSE_LIMIT to override");
  MatrixXd dense = MatrixXd::Zero(op.N(), op.code_length());
  for (Index c = 0; c < op.code_length(); ++c)
    dense.col(c) = dense_column(op, c);
  return dense;
}

VectorXd dense_column(const ConvOperator& op, Index c) {
  if (c < 0 || c >= op.code_length())
    throw std::out_of_range("column index out of range");
  const Index shift = c / op.m();
  const Index filter = c % op.m();
  VectorXd col = VectorXd::Zero(op.N());
  for (Index r = 0; r < op.n(); ++r)
    col[wrap(shift + r, op.N())] = op.local().atoms()(r, filter);
  return col;
}

VectorXd extract_patch(const ConvOperator& op,
                       const Eigen::Ref<const VectorXd>& signal, Index i) {
  if (signal.size() != op.N())
    throw std::invalid_argument("signal length does not match N");
  if (i < 0 || i >= op.N()) throw std::out_of_range("patch index out of range");
  VectorXd patch(op.n());
  for (Index r = 0; r < op.n(); ++r) patch[r] = signal[wrap(i + r, op.N())];
  return patch;
}

namespace {

void require_stripes(const ConvOperator& op) {
  if (!op.stripes_valid())
    throw std::invalid_argument("stripes need N >= 2n-1 (N=" +
                                std::to_string(op.N()) + ", n=" +
                                std::to_string(op.n()) + ")");
}

}  // namespace

VectorXd extract_stripe(const ConvOperator& op, const GlobalCode& code,
                        Index i) {
  if (code.length() != op.code_length() || code.m() != op.m())
    throw std::invalid_argument("code shape does not match operator");
  require_stripes(op);
  if (i < 0 || i >= op.N()) throw std::out_of_range("stripe index out of range");
  const Index n = op.n(), m = op.m(), N = op.N();
  VectorXd stripe = VectorXd::Zero(op.stripe_length());
  for (Index s = -n + 1; s <= n - 1; ++s) {
    const Index shift = wrap(i + s, N);
    for (Index j = 0; j < m; ++j) {
      const double v = code.at(shift * m + j);
      if (v != 0.0) stripe[(s + n - 1) * m + j] = v;
    }
  }
  return stripe;
}

VectorXd extract_stripe(const ConvOperator& op,
                        const Eigen::Ref<const VectorXd>& dense_code, Index i) {
  if (dense_code.size() != op.code_length())
    throw std::invalid_argument("code length does not match mN");
  require_stripes(op);
  if (i < 0 || i >= op.N()) throw std::out_of_range("stripe index out of range");
  const Index n = op.n(), m = op.m(), N = op.N();
  VectorXd stripe(op.stripe_length());
  for (Index s = -n + 1; s <= n - 1; ++s)
    stripe.segment((s + n - 1) * m, m) = dense_code.segment(wrap(i + s, N) * m, m);
  return stripe;
}

VectorXd extract_local(const GlobalCode& code, Index i) {
  if (i < 0 || i >= code.N()) throw std::out_of_range("local index out of range");
  VectorXd local = VectorXd::Zero(code.m());
  for (Index j = 0; j < code.m(); ++j) local[j] = code.at(i * code.m() + j);
  return local;
}

VectorXd center_of_stripe(const Eigen::Ref<const VectorXd>& stripe, Index m) {
  if (m < 1) throw std::invalid_argument("m must be positive");
  if (stripe.size() % m != 0 || (stripe.size() / m) % 2 != 1)
    throw std::invalid_argument("stripe length " + std::to_string(stripe.size()) +
                                " is not an odd multiple of m=" + std::to_string(m));
  const Index n = (stripe.size() / m + 1) / 2;
  return stripe.segment((n - 1) * m, m);
}

double spectral_norm_sq(const ConvOperator& op, double tol, int max_iters) {
  if (tol <= 0.0) throw std::invalid_argument("tol must be positive");
  // Deterministic start vector; splitmix64 keeps this reproducible without
  // touching the caller-facing seed stream.
  VectorXd v(op.code_length());
  std::uint64_t s = 0x9e3779b97f4a7c15ULL;
  for (Index i = 0; i < v.size(); ++i) {
    s += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z = z ^ (z >> 31);
    v[i] = static_cast<double>(z >> 11) * 0x1.0p-53 - 0.5;
  }
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    VectorXd w = apply_adjoint(op, apply(op, v));
    const double next = v.dot(w);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;  // v in the null space of D
    v = w / wn;
    if (it > 0 && std::abs(next - lambda) <= tol * std::abs(next)) return next;
    lambda = next;
  }
  throw std::runtime_error("power iteration did not converge after " +
                           std::to_string(max_iters) +
                           " iterations; last iterate " + std::to_string(lambda));
}

}  // namespace convsparse
