#ifndef SIMPLECAL_SCHEMES_HPP_
#define SIMPLECAL_SCHEMES_HPP_

#include "simplecal/core.hpp"
#include "simplecal/model.hpp"

#include <string>
#include <vector>

namespace simplecal {

// Prior, data and prediction matrices of one linear-Gaussian calibration and
// prediction scheme (zero prior mean).
struct SchemeInputs {
  Matrix prior_cov;
  Matrix data_matrix;
  Matrix data_noise_cov;
  Matrix pred_matrix;
  Matrix pred_noise_cov;
};

inline SchemeInputs scheme_inputs(const HighFidelityModel &m) {
  return {m.prior_cov, m.data_matrix, m.data_noise_cov, m.pred_matrix,
          m.pred_noise_cov};
}

enum class SchemeKind { Optimal, Naive, Compensated, DataDriven };

inline const char *to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::Optimal:
      return "optimal";
    case SchemeKind::Naive:
      return "naive";
    case SchemeKind::Compensated:
      return "compensated";
    case SchemeKind::DataDriven:
      return "data-driven";
  }
  return "unknown";
}

// Data-independent part of a scheme: the gain, the induced linear map from
// data to predictive mean, and the predictive covariance.
struct PredictiveKernel {
  Matrix estimator;  // parameter gain E
  Matrix pred_map;   // pred_matrix * E
  Matrix pred_cov;
  bool fallback_used = false;
};

inline void validate(const SchemeInputs &in) {
  const Index nv = in.prior_cov.rows();
  require_dims(in.prior_cov.cols() == nv, "prior covariance must be square");
  require_dims(in.data_matrix.cols() == nv && in.pred_matrix.cols() == nv,
               "data/prediction matrices must match prior dimension");
  require_dims(in.data_noise_cov.rows() == in.data_matrix.rows() &&
                   in.data_noise_cov.cols() == in.data_matrix.rows(),
               "data noise covariance must be D_d x D_d");
  require_dims(in.pred_noise_cov.rows() == in.pred_matrix.rows() &&
                   in.pred_noise_cov.cols() == in.pred_matrix.rows(),
               "prediction noise covariance must be D_p x D_p");
}

inline PredictiveKernel predictive_kernel(const SchemeInputs &in) {
  validate(in);
  const Matrix cross = in.prior_cov * in.data_matrix.transpose();  // S G^T
  const InnovationSolver solver(
      symmetrize(in.data_matrix * cross + in.data_noise_cov));
  PredictiveKernel k;
  k.fallback_used = solver.fallback_used();
  k.estimator = solver.solve(cross.transpose()).transpose();
  k.pred_map = in.pred_matrix * k.estimator;
  const Matrix pred_cross = in.pred_matrix * cross;  // Y S G^T
  k.pred_cov = symmetrize(
      in.pred_matrix * in.prior_cov * in.pred_matrix.transpose() +
      in.pred_noise_cov -
      pred_cross * solver.solve(pred_cross.transpose()));
  return k;
}

inline GaussianBelief predict_moments(const SchemeInputs &in, const Vector &d) {
  require_dims(d.size() == in.data_matrix.rows(),
               "dataset length must equal D_d");
  const PredictiveKernel k = predictive_kernel(in);
  return {k.pred_map * d, k.pred_cov};
}

struct SchemeResult {
  SchemeKind kind = SchemeKind::Optimal;
  std::string label;
  GaussianBelief posterior;  // over predictions
  Matrix estimator;          // raw data -> parameter posterior mean
  Matrix effective_prior;    // prior covariance used (finite block only for
                             // the data-driven scheme)
  Matrix pred_map;           // raw data -> predictive mean
  // Data-driven scheme only: prior variance along `inflated_basis` is
  // unbounded and not part of `effective_prior`.
  bool prior_inflated = false;
  Matrix inflated_basis;
  bool optimality_guaranteed = false;
  std::vector<std::string> warnings;

  Vector parameter_mean(const Vector &d) const { return estimator * d; }
  Vector predictive_mean(const Vector &d) const { return pred_map * d; }
};

namespace detail {

inline SchemeResult finish(SchemeKind kind, const SchemeInputs &in,
                           const Vector &d) {
  require_dims(d.size() == in.data_matrix.rows(),
               "dataset length must equal D_d");
  const PredictiveKernel k = predictive_kernel(in);
  SchemeResult r;
  r.kind = kind;
  r.label = to_string(kind);
  r.estimator = k.estimator;
  r.pred_map = k.pred_map;
  r.effective_prior = in.prior_cov;
  r.posterior = {k.pred_map * d, k.pred_cov};
  if (k.fallback_used) {
    r.warnings.emplace_back(
        "innovation matrix not Cholesky-factorizable; used pseudoinverse");
  }
  return r;
}

}  // namespace detail

inline SchemeResult run_optimal(const HighFidelityModel &model,
                                const Vector &d) {
  SchemeResult r =
      detail::finish(SchemeKind::Optimal, scheme_inputs(model), d);
  r.optimality_guaranteed = true;
  return r;
}

inline SchemeResult run_naive(const HighFidelityModel &model,
                              const Simplification &simp, const Vector &d) {
  const Matrix sigma_v = propagate_prior(model, simp).sigma_v;
  SchemeResult r = detail::finish(
      SchemeKind::Naive,
      {sigma_v, simp.data_matrix, model.data_noise_cov, simp.pred_matrix,
       model.pred_noise_cov},
      d);
  r.optimality_guaranteed = is_optimal_simplification(model, simp).optimal;
  return r;
}

struct RankCondition {
  bool holds = false;
  Index rank_z = 0;
  Index rank_zc = 0;
};

// rank([G; Y] C) == rank([G; Y]).
inline RankCondition compensation_rank_condition(
    const HighFidelityModel &model, const Simplification &simp,
    double rank_tol = kDefaultRankTol) {
  RankCondition rc;
  const Matrix z = model.stacked();
  rc.rank_z = numeric_rank(z, rank_tol);
  rc.rank_zc = numeric_rank(z * simp.embedding, rank_tol);
  rc.holds = rc.rank_z == rc.rank_zc;
  return rc;
}

// R S_x R^T with R = (Z C)^+ Z, Z = [G; Y].
inline Matrix compensated_prior(const HighFidelityModel &model,
                                const Simplification &simp,
                                double rank_tol = kDefaultRankTol) {
  const Matrix z = model.stacked();
  const Matrix r = pseudoinverse(z * simp.embedding, rank_tol) * z;
  return symmetrize(r * model.prior_cov * r.transpose());
}

inline SchemeResult run_compensated(const HighFidelityModel &model,
                                    const Simplification &simp,
                                    const Vector &d) {
  SchemeResult r = detail::finish(
      SchemeKind::Compensated,
      {compensated_prior(model, simp), simp.data_matrix, model.data_noise_cov,
       simp.pred_matrix, model.pred_noise_cov},
      d);
  r.optimality_guaranteed = compensation_rank_condition(model, simp).holds;
  if (!r.optimality_guaranteed) {
    r.label = "compensated (optimality not guaranteed)";
  }
  return r;
}

// Minimizer of (d - A v)^T R^-1 (d - A v) + v^T P^-1 v via the regularized
// normal equations. A singular prior or noise covariance is handled through
// the equivalent gain form.
inline Vector map_estimate_wls(const Matrix &prior_cov, const Matrix &data_matrix,
                               const Matrix &data_noise_cov, const Vector &d) {
  require_dims(data_matrix.cols() == prior_cov.rows() &&
                   data_noise_cov.rows() == data_matrix.rows() &&
                   d.size() == data_matrix.rows(),
               "inconsistent dimensions for weighted least squares");
  Eigen::LLT<Matrix> prior_llt(prior_cov);
  Eigen::LLT<Matrix> noise_llt(data_noise_cov);
  if (prior_llt.info() != Eigen::Success ||
      noise_llt.info() != Eigen::Success) {
    const Matrix cross = prior_cov * data_matrix.transpose();
    const InnovationSolver solver(
        symmetrize(data_matrix * cross + data_noise_cov));
    return cross * solver.solve(d);
  }
  const Index nv = prior_cov.rows();
  const Matrix weighted = noise_llt.solve(data_matrix);  // R^-1 A
  const Matrix normal = symmetrize(
      data_matrix.transpose() * weighted +
      prior_llt.solve(Matrix::Identity(nv, nv)));
  Eigen::LDLT<Matrix> normal_ldlt(normal);
  if (normal_ldlt.info() != Eigen::Success || !normal_ldlt.isPositive()) {
    throw SingularInnovation("regularized normal equations are singular");
  }
  return normal_ldlt.solve(weighted.transpose() * d);
}

// Filtered data d' = F d with F G~ = U1 S1 V1^T (compact SVD), V2 spanning
// the null space of F G~.
struct DataFilter {
  Matrix f;
  Matrix filtered_data_matrix;  // F G~
  Matrix filtered_noise_cov;    // F S_ed F^T
  Matrix v1;
  Matrix v2;
  Matrix u1;
  Vector s1;

  Index n_filtered() const { return f.rows(); }
  // (F G~)^+ = V1 S1^-1 U1^T
  Matrix estimator() const {
    return v1 * s1.cwiseInverse().asDiagonal() * u1.transpose();
  }
};

inline DataFilter make_filter(const Simplification &simp, const Matrix &f,
                              const HighFidelityModel &model,
                              double rank_tol = kDefaultRankTol) {
  require_dims(f.cols() == simp.data_matrix.rows(),
               "filter columns must equal D_d");
  require_finite(f, "filter matrix");
  if (f.rows() > f.cols() || f.rows() == 0) {
    throw FilterRankError("filter must have between 1 and D_d rows");
  }
  DataFilter out;
  out.f = f;
  out.filtered_data_matrix = f * simp.data_matrix;
  out.filtered_noise_cov = symmetrize(f * model.data_noise_cov * f.transpose());
  SvdFactors fac = svd(out.filtered_data_matrix, rank_tol);
  if (fac.numeric_rank != f.rows()) {
    throw FilterRankError(
        "filtered data matrix has rank " + std::to_string(fac.numeric_rank) +
        " but " + std::to_string(f.rows()) +
        " rows; combine dependent data or drop insensitive data");
  }
  canonicalize_signs(fac);
  const Index k = fac.numeric_rank;
  out.u1 = fac.u_leading(k);
  out.s1 = fac.singular_values.head(k);
  out.v1 = fac.v_leading(k);
  out.v2 = fac.v_trailing(k);
  return out;
}

// F = U_t^T, the leading k left singular vectors of G~.
inline Matrix make_tsvd_filter(const Simplification &simp, Index k,
                               double rank_tol = kDefaultRankTol) {
  SvdFactors fac = svd(simp.data_matrix, rank_tol);
  if (k < 1 || k > fac.numeric_rank) {
    throw FilterRankError("truncation k=" + std::to_string(k) +
                          " outside [1, rank(G~)=" +
                          std::to_string(fac.numeric_rank) + "]");
  }
  canonicalize_signs(fac);
  return fac.u_leading(k).transpose();
}

// Closed form of the infinitely inflated rowspace prior. The limit itself is
// never evaluated.
inline SchemeResult run_data_driven(const HighFidelityModel &model,
                                    const Simplification &simp,
                                    const DataFilter &filter, const Vector &d) {
  require_dims(d.size() == model.n_data(), "dataset length must equal D_d");
  require_dims(filter.f.cols() == model.n_data() &&
                   filter.v1.rows() == simp.n_params(),
               "filter does not match model/simplification");
  const Matrix sigma_v = propagate_prior(model, simp).sigma_v;
  const Index nv = simp.n_params();
  const Matrix w = Matrix::Identity(nv, nv) - filter.v1 * filter.v1.transpose();
  const Matrix e_dat = filter.estimator();
  const Matrix y_e = simp.pred_matrix * e_dat;

  SchemeResult r;
  r.kind = SchemeKind::DataDriven;
  r.label = to_string(r.kind);
  r.estimator = e_dat * filter.f;
  r.pred_map = simp.pred_matrix * r.estimator;
  r.effective_prior = symmetrize(filter.v2 * filter.v2.transpose() * sigma_v *
                                 filter.v2 * filter.v2.transpose());
  r.prior_inflated = true;
  r.inflated_basis = filter.v1;
  r.posterior.mean = r.pred_map * d;
  r.posterior.covariance = symmetrize(
      y_e * filter.filtered_noise_cov * y_e.transpose() +
      simp.pred_matrix * w * sigma_v * w * simp.pred_matrix.transpose() +
      model.pred_noise_cov);
  return r;
}

// Finite-alpha version of the data-driven prior, alpha V1 V1^T + W S_v W.
// Only meaningful as a check on the closed form.
inline Matrix data_driven_prior(const Matrix &sigma_v, const DataFilter &filter,
                                double alpha) {
  const Matrix w2 = filter.v2 * filter.v2.transpose();
  return symmetrize(alpha * filter.v1 * filter.v1.transpose() +
                    w2 * sigma_v * w2);
}

struct StructuralCheckResult {
  bool holds = false;
  double residual_norm = 0.0;
  Matrix a_solved;
  Matrix b_solved;
};

namespace detail {

// Least-squares split Y ~= [A B] [top; bottom].
inline StructuralCheckResult rowspace_split(const Matrix &y, const Matrix &top,
                                            const Matrix &bottom, double tol) {
  Matrix k(top.rows() + bottom.rows(), y.cols());
  k << top, bottom;
  const Matrix coeffs = y * pseudoinverse(k);
  StructuralCheckResult out;
  out.residual_norm = (y - coeffs * k).norm();
  out.holds = out.residual_norm <= tol * y.norm();
  out.a_solved = coeffs.leftCols(top.rows());
  out.b_solved = coeffs.rightCols(bottom.rows());
  return out;
}

}  // namespace detail

// Tests Y = A F G + B V2^T C^+ for some A, B.
inline StructuralCheckResult check_prediction_structure(
    const HighFidelityModel &model, const Simplification &simp,
    const DataFilter &filter, double tol = kDefaultStructureTol) {
  return detail::rowspace_split(model.pred_matrix,
                                filter.f * model.data_matrix,
                                filter.v2.transpose() * simp.embedding_pinv,
                                tol);
}

// Weaker class Y = A G + B C^+ (prediction independent of u given G x and v).
inline StructuralCheckResult check_prediction_class(
    const HighFidelityModel &model, const Simplification &simp,
    double tol = kDefaultStructureTol) {
  return detail::rowspace_split(model.pred_matrix, model.data_matrix,
                                simp.embedding_pinv, tol);
}

}  // namespace simplecal

#endif  // SIMPLECAL_SCHEMES_HPP_
