#ifndef SIMPLECAL_CONSERVATIVENESS_HPP_
#define SIMPLECAL_CONSERVATIVENESS_HPP_

#include "simplecal/core.hpp"
#include "simplecal/model.hpp"
#include "simplecal/schemes.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <thread>
#include <vector>

namespace simplecal {

enum class Verdict { Conservative, Equality, NonConservative };

inline const char *to_string(Verdict v) {
  switch (v) {
    case Verdict::Conservative:
      return "conservative";
    case Verdict::Equality:
      return "equality";
    case Verdict::NonConservative:
      return "non-conservative";
  }
  return "unknown";
}

// Equality satisfies the defining inequality, so it counts as conservative.
inline bool is_conservative(Verdict v) { return v != Verdict::NonConservative; }

// Classifies a symmetric excess matrix: Equality when every eigenvalue is
// within tol*scale of zero, Conservative when none is below -tol*scale.
inline Verdict classify_excess(const Matrix &excess, double scale,
                               double tol = kDefaultVerdictTol) {
  if (excess.size() == 0) {
    return Verdict::Equality;
  }
  if (scale <= 0.0) {
    scale = 1.0;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(excess),
                                           Eigen::EigenvaluesOnly);
  const Vector &ev = es.eigenvalues();
  const double band = tol * scale;
  if (ev.cwiseAbs().maxCoeff() <= band) {
    return Verdict::Equality;
  }
  return ev(0) >= -band ? Verdict::Conservative : Verdict::NonConservative;
}

// Approximate density is conservative w.r.t. the reference when
// S_hat >= S + (mu_hat - mu)(mu_hat - mu)^T.
inline Verdict check_density(const GaussianBelief &approx,
                             const GaussianBelief &reference,
                             double tol = kDefaultVerdictTol) {
  require_dims(approx.dim() == reference.dim(),
               "densities must have the same dimension");
  const Vector diff = approx.mean - reference.mean;
  const Matrix excess =
      approx.covariance - reference.covariance - diff * diff.transpose();
  return classify_excess(excess, spectral_norm(reference.covariance), tol);
}

struct ConservativenessReport {
  Matrix omega_expected;  // E_{p(d)} Omega(d)
  double min_eigenvalue = 0.0;
  Verdict verdict = Verdict::Equality;
  std::optional<Matrix> mc_estimate;
  std::size_t mc_samples = 0;
};

// Expected Omega for a scheme whose predictive mean is approx_pred_map * d:
//   S~ - S_{p|d} - (M~ - M) S_d (M~ - M)^T,  S_d = G S_x G^T + S_ed.
inline ConservativenessReport check_scheme(const HighFidelityModel &model,
                                           const Matrix &approx_pred_map,
                                           const Matrix &approx_cov,
                                           double tol = kDefaultVerdictTol) {
  require_dims(approx_pred_map.rows() == model.n_pred() &&
                   approx_pred_map.cols() == model.n_data(),
               "approximate prediction map must be D_p x D_d");
  require_dims(approx_cov.rows() == model.n_pred() &&
                   approx_cov.cols() == model.n_pred(),
               "approximate covariance must be D_p x D_p");
  const PredictiveKernel opt = predictive_kernel(scheme_inputs(model));
  const Matrix data_cov = symmetrize(
      model.data_matrix * model.prior_cov * model.data_matrix.transpose() +
      model.data_noise_cov);
  const Matrix map_diff = approx_pred_map - opt.pred_map;
  ConservativenessReport rep;
  rep.omega_expected = symmetrize(approx_cov - opt.pred_cov -
                                  map_diff * data_cov * map_diff.transpose());
  rep.min_eigenvalue = min_eigenvalue(rep.omega_expected);
  rep.verdict =
      classify_excess(rep.omega_expected, spectral_norm(opt.pred_cov), tol);
  return rep;
}

inline ConservativenessReport check_scheme(const HighFidelityModel &model,
                                           const SchemeResult &result,
                                           double tol = kDefaultVerdictTol) {
  return check_scheme(model, result.pred_map, result.posterior.covariance,
                      tol);
}

// Omega for one dataset, S~ - S_{p|d} - (mu~(d) - mu(d))(mu~(d) - mu(d))^T.
// Only its expectation over d enters the conservativeness verdict.
inline Matrix omega_for_dataset(const HighFidelityModel &model,
                                const Matrix &approx_pred_map,
                                const Matrix &approx_cov, const Vector &d) {
  require_dims(d.size() == model.n_data(), "dataset length must equal D_d");
  const PredictiveKernel opt = predictive_kernel(scheme_inputs(model));
  const Vector diff = (approx_pred_map - opt.pred_map) * d;
  return symmetrize(approx_cov - opt.pred_cov - diff * diff.transpose());
}

// Samples drawn per independently seeded chunk. Chunk c of seed s always
// uses the stream seeded by (s, c), so results do not depend on how chunks
// are scheduled over threads, and a longer run extends a shorter one.
inline constexpr std::size_t kMcChunkSize = 4096;

// Monte Carlo estimate of E_{p(d)} Omega(d). Draws (x, e_d, e_p) from the
// reference model, forms d and p, and accumulates the squared errors of the
// approximate and optimal predictive means. The optimal-scheme term is used
// as a control variate:
//   Omega_mc = S~ - S_{p|d} - (avg[(mu~ - p)(mu~ - p)^T] - avg[(mu - p)(mu - p)^T])
inline Matrix mc_oracle(const HighFidelityModel &model,
                        const Matrix &approx_pred_map, const Matrix &approx_cov,
                        std::size_t n_samples, std::uint64_t seed,
                        unsigned n_threads = 0) {
  if (n_samples < 1) {
    throw InsufficientSamples("mc_oracle needs at least one sample");
  }
  const PredictiveKernel opt = predictive_kernel(scheme_inputs(model));
  const Matrix lx = sampling_factor(model.prior_cov);
  const Matrix ld = sampling_factor(model.data_noise_cov);
  const Matrix lp = sampling_factor(model.pred_noise_cov);
  const Index np = model.n_pred();

  const std::size_t n_chunks = (n_samples + kMcChunkSize - 1) / kMcChunkSize;
  std::vector<Matrix> partial(n_chunks, Matrix::Zero(np, np));

  auto run_chunk = [&](std::size_t c) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(c),
                      static_cast<std::uint32_t>(c >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    auto draw = [&](Index n) {
      Vector z(n);
      for (Index i = 0; i < n; ++i) {
        z(i) = normal(rng);
      }
      return z;
    };
    const std::size_t begin = c * kMcChunkSize;
    const std::size_t end = std::min(n_samples, begin + kMcChunkSize);
    Matrix acc = Matrix::Zero(np, np);
    for (std::size_t s = begin; s < end; ++s) {
      const Vector x = lx * draw(lx.cols());
      const Vector d = model.data_matrix * x + ld * draw(ld.cols());
      const Vector p = model.pred_matrix * x + lp * draw(lp.cols());
      const Vector err_approx = approx_pred_map * d - p;
      const Vector err_opt = opt.pred_map * d - p;
      acc.noalias() += err_approx * err_approx.transpose() -
                       err_opt * err_opt.transpose();
    }
    partial[c] = acc;
  };

  unsigned workers = n_threads == 0 ? std::thread::hardware_concurrency()
                                    : n_threads;
  workers = std::max(1u, std::min<unsigned>(workers,
                                            static_cast<unsigned>(n_chunks)));
  if (workers == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) {
      run_chunk(c);
    }
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < n_chunks; c += workers) {
          run_chunk(c);
        }
      });
    }
    for (auto &t : pool) {
      t.join();
    }
  }

  Matrix total = Matrix::Zero(np, np);
  for (const auto &p : partial) {
    total += p;
  }
  const Matrix mean_gap = total / static_cast<double>(n_samples);
  return symmetrize(approx_cov - opt.pred_cov - mean_gap);
}

inline ConservativenessReport check_scheme_with_mc(
    const HighFidelityModel &model, const SchemeResult &result,
    std::size_t n_samples, std::uint64_t seed,
    double tol = kDefaultVerdictTol) {
  ConservativenessReport rep = check_scheme(model, result, tol);
  rep.mc_estimate = mc_oracle(model, result.pred_map,
                              result.posterior.covariance, n_samples, seed);
  rep.mc_samples = n_samples;
  return rep;
}

// ||S_vu||_F <= tol * sqrt(||S_v|| ||S_u||)
inline bool uv_independent(const PropagatedPrior &prop, double tol = 1e-10) {
  if (prop.errors.sigma_vu.size() == 0) {
    return true;
  }
  return prop.errors.sigma_vu.norm() <=
         tol * std::sqrt(prop.sigma_v.norm() * prop.errors.sigma_u.norm());
}

// Which statement about the naive scheme applies to a simplification.
enum class NaiveClause {
  OptimalSimplification,    // naive reproduces the optimal posterior
  BalancedError,            // naive is conservative
  StrictlyNonConservative,  // independent u, v, S_u != 0, unbalanced errors
  Undetermined,             // correlated u, v with unbalanced errors
};

inline const char *to_string(NaiveClause c) {
  switch (c) {
    case NaiveClause::OptimalSimplification:
      return "optimal simplification: naive equals optimal";
    case NaiveClause::BalancedError:
      return "balanced error: naive is conservative";
    case NaiveClause::StrictlyNonConservative:
      return "independent u,v with unbalanced error: naive is "
             "non-conservative";
    case NaiveClause::Undetermined:
      return "correlated u,v with unbalanced error: no guarantee";
  }
  return "unknown";
}

struct NaiveAudit {
  NaiveClause clause = NaiveClause::Undetermined;
  OptimalityCheck optimality;
  double balanced_residual = 0.0;
  bool uv_independent = false;
};

inline NaiveAudit audit_naive(const HighFidelityModel &model,
                              const Simplification &simp,
                              double tol = kDefaultOptimalityTol) {
  NaiveAudit a;
  a.optimality = is_optimal_simplification(model, simp, tol);
  const PropagatedPrior prop = propagate_prior(model, simp);
  a.uv_independent = uv_independent(prop);
  a.balanced_residual =
      balanced_error_residual(model, simp, prop.sigma_v).norm();
  const double scale = std::max(model.pred_matrix.norm(), 1e-300);
  if (a.optimality.optimal) {
    a.clause = NaiveClause::OptimalSimplification;
  } else if (a.balanced_residual <= tol * scale) {
    a.clause = NaiveClause::BalancedError;
  } else if (a.uv_independent && prop.errors.sigma_u.norm() > 0.0) {
    a.clause = NaiveClause::StrictlyNonConservative;
  }
  return a;
}

}  // namespace simplecal

#endif  // SIMPLECAL_CONSERVATIVENESS_HPP_
