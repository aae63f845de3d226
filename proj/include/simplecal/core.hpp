#ifndef SIMPLECAL_CORE_HPP_
#define SIMPLECAL_CORE_HPP_

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace simplecal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Numerical defaults. Relative tolerances are scaled by the relevant
// matrix norm at the point of use.
inline constexpr double kDefaultRankTol = 1e-10;
inline constexpr double kDefaultPsdTol = 1e-10;
inline constexpr double kDefaultOptimalityTol = 1e-8;
inline constexpr double kDefaultStructureTol = 1e-8;
inline constexpr double kDefaultVerdictTol = 1e-8;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidMatrix : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

// Simplification matrix without full column rank.
struct RankDeficientSimplification : Error {
  using Error::Error;
};

// Innovation matrix G S G^T + R singular to working precision.
struct SingularInnovation : Error {
  using Error::Error;
};

// Filtered data matrix without full row rank, or TSVD truncation beyond rank.
struct FilterRankError : Error {
  using Error::Error;
};

struct PhysicalDomainError : Error {
  using Error::Error;
};

struct InsufficientSamples : Error {
  using Error::Error;
};

inline bool all_finite(const Matrix &m) { return m.allFinite(); }

inline void require_finite(const Matrix &m, const char *what) {
  if (!m.allFinite()) {
    throw InvalidMatrix(std::string(what) + " contains non-finite entries");
  }
}

inline void require_dims(bool ok, const std::string &what) {
  if (!ok) {
    throw DimensionMismatch(what);
  }
}

inline Matrix symmetrize(const Matrix &m) {
  return 0.5 * (m + m.transpose());
}

// Largest singular value. Zero for empty matrices.
inline double spectral_norm(const Matrix &m) {
  if (m.size() == 0) {
    return 0.0;
  }
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

struct SvdFactors {
  Matrix u;
  Vector singular_values;
  Matrix vt;
  Index numeric_rank = 0;

  Index rows() const { return u.rows(); }
  Index cols() const { return vt.cols(); }

  // Leading `k` left/right singular vectors.
  Matrix u_leading(Index k) const { return u.leftCols(k); }
  Matrix v_leading(Index k) const { return vt.topRows(k).transpose(); }
  Matrix v_trailing(Index k) const {
    return vt.bottomRows(vt.rows() - k).transpose();
  }
};

// Full SVD, m = U diag(s) V^T with square orthogonal U and V. Numeric rank
// counts singular values strictly above rank_tol * s_max.
inline SvdFactors svd(const Matrix &m, double rank_tol = kDefaultRankTol) {
  require_finite(m, "svd input");
  SvdFactors out;
  if (m.size() == 0) {
    out.u = Matrix::Identity(m.rows(), m.rows());
    out.vt = Matrix::Identity(m.cols(), m.cols());
    out.singular_values = Vector(0);
    return out;
  }
  Eigen::JacobiSVD<Matrix> decomp(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.u = decomp.matrixU();
  out.vt = decomp.matrixV().transpose();
  out.singular_values = decomp.singularValues();
  const double cutoff = rank_tol * out.singular_values(0);
  for (Index i = 0; i < out.singular_values.size(); ++i) {
    if (out.singular_values(i) > cutoff) {
      ++out.numeric_rank;
    }
  }
  return out;
}

inline Index numeric_rank(const Matrix &m, double rank_tol = kDefaultRankTol) {
  return svd(m, rank_tol).numeric_rank;
}

// Flips signs so the first entry of largest magnitude in each right singular
// vector is positive; the matching left vector flips with it. Makes V1/V2
// reproducible without changing any product.
inline void canonicalize_signs(SvdFactors &f) {
  const Index k = std::min(f.u.cols(), f.vt.rows());
  for (Index i = 0; i < f.vt.rows(); ++i) {
    Index pivot = 0;
    f.vt.row(i).cwiseAbs().maxCoeff(&pivot);
    if (f.vt(i, pivot) < 0.0) {
      f.vt.row(i) *= -1.0;
      if (i < k) {
        f.u.col(i) *= -1.0;
      }
    }
  }
}

inline Matrix pseudoinverse(const Matrix &m, double rank_tol = kDefaultRankTol) {
  const SvdFactors f = svd(m, rank_tol);
  Matrix out = Matrix::Zero(m.cols(), m.rows());
  for (Index i = 0; i < f.numeric_rank; ++i) {
    out.noalias() += (f.vt.row(i).transpose() / f.singular_values(i)) *
                     f.u.col(i).transpose();
  }
  return out;
}

// Orthonormal basis of the complement of range(c). Columns of the result are
// the trailing left singular vectors of c.
inline Matrix cokernel_basis(const Matrix &c, double rank_tol = kDefaultRankTol) {
  const SvdFactors f = svd(c, rank_tol);
  if (f.numeric_rank != c.cols()) {
    throw RankDeficientSimplification(
        "simplification matrix has numeric rank " +
        std::to_string(f.numeric_rank) + " but " + std::to_string(c.cols()) +
        " columns");
  }
  return f.u.rightCols(c.rows() - c.cols());
}

inline double min_eigenvalue(const Matrix &sym) {
  if (sym.size() == 0) {
    return 0.0;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(sym),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline bool is_psd(const Matrix &sym, double psd_tol = kDefaultPsdTol) {
  if (sym.size() == 0) {
    return true;
  }
  return min_eigenvalue(sym) >= -psd_tol * spectral_norm(sym);
}

// Factor L with L L^T = cov. Cholesky when possible; otherwise eigenvalues
// are clipped at zero, which covers semidefinite covariances.
inline Matrix sampling_factor(const Matrix &cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) {
    return llt.matrixL();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(cov));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

// Solves S X = B for a symmetric innovation matrix S. Uses Cholesky; if that
// fails but S still has full numeric rank, falls back to the pseudoinverse
// and sets `fallback_used`.
class InnovationSolver {
 public:
  explicit InnovationSolver(const Matrix &s, double rank_tol = kDefaultRankTol) {
    require_finite(s, "innovation matrix");
    llt_.compute(s);
    if (llt_.info() == Eigen::Success && s.size() > 0) {
      const Vector diag = Matrix(llt_.matrixL()).diagonal();
      const double ratio = diag.minCoeff() / diag.maxCoeff();
      // Cholesky of a matrix with condition number beyond 1/rank_tol
      // is not trusted.
      if (ratio * ratio > rank_tol) {
        return;
      }
    } else if (s.size() == 0) {
      return;
    }
    const SvdFactors f = svd(s, rank_tol);
    if (f.numeric_rank < s.rows()) {
      throw SingularInnovation("innovation matrix is singular (numeric rank " +
                               std::to_string(f.numeric_rank) + " of " +
                               std::to_string(s.rows()) + ")");
    }
    fallback_used_ = true;
    pinv_ = pseudoinverse(s, rank_tol);
  }

  Matrix solve(const Matrix &b) const {
    if (fallback_used_) {
      return pinv_ * b;
    }
    return llt_.solve(b);
  }

  bool fallback_used() const { return fallback_used_; }

 private:
  Eigen::LLT<Matrix> llt_;
  Matrix pinv_;
  bool fallback_used_ = false;
};

struct GaussianBelief {
  Vector mean;
  Matrix covariance;

  Index dim() const { return mean.size(); }
};

inline void validate(const GaussianBelief &b, double psd_tol = kDefaultPsdTol) {
  require_dims(b.covariance.rows() == b.mean.size() &&
                   b.covariance.cols() == b.mean.size(),
               "belief covariance does not match mean dimension");
  require_finite(b.mean, "belief mean");
  require_finite(b.covariance, "belief covariance");
  const double scale = std::max(b.covariance.norm(), 1.0);
  if ((b.covariance - b.covariance.transpose()).norm() > 1e-10 * scale) {
    throw InvalidMatrix("belief covariance is not symmetric");
  }
  if (!is_psd(b.covariance, psd_tol)) {
    throw InvalidMatrix("belief covariance is not positive semidefinite");
  }
}

// Bayesian update of a Gaussian prior on x from d = H x + e, e ~ N(0, R).
inline GaussianBelief condition_gaussian(const GaussianBelief &prior,
                                         const Matrix &obs_matrix,
                                         const Matrix &obs_noise_cov,
                                         const Vector &d) {
  require_dims(obs_matrix.cols() == prior.dim(),
               "observation matrix columns must match prior dimension");
  require_dims(obs_noise_cov.rows() == obs_matrix.rows() &&
                   obs_noise_cov.cols() == obs_matrix.rows() &&
                   d.size() == obs_matrix.rows(),
               "observation noise and data must match observation rows");
  require_finite(d, "data vector");
  const Matrix cross = prior.covariance * obs_matrix.transpose();
  const Matrix innovation =
      symmetrize(obs_matrix * cross + obs_noise_cov);
  const InnovationSolver solver(innovation);
  const Matrix gain = solver.solve(cross.transpose()).transpose();
  GaussianBelief post;
  post.mean = prior.mean + gain * (d - obs_matrix * prior.mean);
  post.covariance = symmetrize(prior.covariance - gain * cross.transpose());
  return post;
}

}  // namespace simplecal

#endif  // SIMPLECAL_CORE_HPP_
