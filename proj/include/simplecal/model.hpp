#ifndef SIMPLECAL_MODEL_HPP_
#define SIMPLECAL_MODEL_HPP_

#include "simplecal/core.hpp"

namespace simplecal {

// Linear-Gaussian reference model with zero prior mean:
//   x ~ N(0, prior_cov), d = data_matrix x + e_d, p = pred_matrix x + e_p.
struct HighFidelityModel {
  Matrix data_matrix;     // D_d x D_x
  Matrix pred_matrix;     // D_p x D_x
  Matrix prior_cov;       // D_x x D_x
  Matrix data_noise_cov;  // D_d x D_d
  Matrix pred_noise_cov;  // D_p x D_p

  Index n_params() const { return prior_cov.rows(); }
  Index n_data() const { return data_matrix.rows(); }
  Index n_pred() const { return pred_matrix.rows(); }

  // [data_matrix; pred_matrix]
  Matrix stacked() const {
    Matrix z(n_data() + n_pred(), n_params());
    z << data_matrix, pred_matrix;
    return z;
  }
};

inline void validate(const HighFidelityModel &m,
                     double psd_tol = kDefaultPsdTol) {
  const Index nx = m.n_params();
  require_dims(m.prior_cov.cols() == nx, "prior covariance must be square");
  require_dims(m.data_matrix.cols() == nx,
               "data matrix columns must match parameter dimension");
  require_dims(m.pred_matrix.cols() == nx,
               "prediction matrix columns must match parameter dimension");
  require_dims(m.data_noise_cov.rows() == m.n_data() &&
                   m.data_noise_cov.cols() == m.n_data(),
               "data noise covariance must be D_d x D_d");
  require_dims(m.pred_noise_cov.rows() == m.n_pred() &&
                   m.pred_noise_cov.cols() == m.n_pred(),
               "prediction noise covariance must be D_p x D_p");
  require_finite(m.data_matrix, "data matrix");
  require_finite(m.pred_matrix, "prediction matrix");
  require_finite(m.prior_cov, "prior covariance");
  require_finite(m.data_noise_cov, "data noise covariance");
  require_finite(m.pred_noise_cov, "prediction noise covariance");
  if (!is_psd(m.prior_cov, psd_tol)) {
    throw InvalidMatrix("prior covariance is not positive semidefinite");
  }
  if (!is_psd(m.data_noise_cov, psd_tol)) {
    throw InvalidMatrix("data noise covariance is not positive semidefinite");
  }
  if (!is_psd(m.pred_noise_cov, psd_tol)) {
    throw InvalidMatrix(
        "prediction noise covariance is not positive semidefinite");
  }
}

// x = embedding v + cokernel u, with cokernel orthonormal and orthogonal to
// range(embedding).
struct Simplification {
  Matrix embedding;       // C, D_x x D_v
  Matrix embedding_pinv;  // C^+
  Matrix cokernel;        // D, D_x x (D_x - D_v)
  Matrix data_matrix;     // G C
  Matrix pred_matrix;     // Y C

  Index n_params() const { return embedding.cols(); }
  Index n_unmodelled() const { return cokernel.cols(); }
};

// Maps from the unmodelled complexity u to the structural errors, and the
// prior blocks involving u.
struct ErrorDecomposition {
  Matrix eta_matrix;  // G D
  Matrix eps_matrix;  // Y D
  Matrix sigma_u;     // D^T S_x D
  Matrix sigma_vu;    // C^+ S_x D
};

inline Simplification make_simplification(const HighFidelityModel &model,
                                          const Matrix &c,
                                          double rank_tol = kDefaultRankTol) {
  require_dims(c.rows() == model.n_params(),
               "simplification matrix rows must equal D_x");
  require_finite(c, "simplification matrix");
  Simplification s;
  s.embedding = c;
  s.cokernel = cokernel_basis(c, rank_tol);
  s.embedding_pinv = pseudoinverse(c, rank_tol);
  s.data_matrix = model.data_matrix * c;
  s.pred_matrix = model.pred_matrix * c;
  return s;
}

struct OptimalityCheck {
  bool optimal = false;
  double data_residual = 0.0;  // ||G D||_F
  double pred_residual = 0.0;  // ||Y D||_F
};

inline OptimalityCheck is_optimal_simplification(
    const HighFidelityModel &model, const Simplification &simp,
    double tol = kDefaultOptimalityTol) {
  OptimalityCheck out;
  if (simp.n_unmodelled() > 0) {
    out.data_residual = (model.data_matrix * simp.cokernel).norm();
    out.pred_residual = (model.pred_matrix * simp.cokernel).norm();
  }
  out.optimal = out.data_residual <= tol * model.data_matrix.norm() &&
                out.pred_residual <= tol * model.pred_matrix.norm();
  return out;
}

// C* = leading right singular vectors of [G; Y], one per nonzero singular
// value.
inline Simplification make_optimal_simplification(
    const HighFidelityModel &model, double rank_tol = kDefaultRankTol) {
  SvdFactors f = svd(model.stacked(), rank_tol);
  canonicalize_signs(f);
  return make_simplification(model, f.v_leading(f.numeric_rank), rank_tol);
}

struct PropagatedPrior {
  Matrix sigma_v;
  ErrorDecomposition errors;
};

inline PropagatedPrior propagate_prior(const HighFidelityModel &model,
                                       const Simplification &simp) {
  PropagatedPrior out;
  const Matrix &pinv = simp.embedding_pinv;
  const Matrix &dbasis = simp.cokernel;
  out.sigma_v = symmetrize(pinv * model.prior_cov * pinv.transpose());
  out.errors.eta_matrix = model.data_matrix * dbasis;
  out.errors.eps_matrix = model.pred_matrix * dbasis;
  out.errors.sigma_u =
      symmetrize(dbasis.transpose() * model.prior_cov * dbasis);
  out.errors.sigma_vu = pinv * model.prior_cov * dbasis;
  return out;
}

// Gain of the naive update, S_v G~^T (G~ S_v G~^T + S_ed)^-1.
inline Matrix naive_estimator(const HighFidelityModel &model,
                              const Simplification &simp,
                              const Matrix &sigma_v) {
  const Matrix cross = sigma_v * simp.data_matrix.transpose();
  const InnovationSolver solver(
      symmetrize(simp.data_matrix * cross + model.data_noise_cov));
  return solver.solve(cross.transpose()).transpose();
}

// Y D - Y~ E_naive G D. Zero means the structural errors cancel in the naive
// prediction.
inline Matrix balanced_error_residual(const HighFidelityModel &model,
                                      const Simplification &simp,
                                      const Matrix &sigma_v) {
  const Matrix gain = naive_estimator(model, simp, sigma_v);
  const Matrix yd = model.pred_matrix * simp.cokernel;
  const Matrix gd = model.data_matrix * simp.cokernel;
  return yd - simp.pred_matrix * gain * gd;
}

}  // namespace simplecal

#endif  // SIMPLECAL_MODEL_HPP_
