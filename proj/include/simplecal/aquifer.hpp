#ifndef SIMPLECAL_AQUIFER_HPP_
#define SIMPLECAL_AQUIFER_HPP_

#include "simplecal/core.hpp"
#include "simplecal/model.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

// 1D steady confined aquifer discharging to a fixed-head boundary on the left.
// Parameters x = [h0, log10 K_1, ..., log10 K_n]; the head at the right face
// of cell k is h0 + sum_{i<=k} q l / (b K_i).
namespace simplecal::aquifer {

struct AquiferConfig {
  Index n_cells = 10;
  double cell_length = 10.0;        // m
  double thickness = 10.0;          // m
  double flow_rate = 0.5;           // m^3/day
  double boundary_head_mean = 1.0;  // m
  double boundary_head_sd = 0.75;   // m
  double log10_k_mean = std::log10(2.5);
  double variogram_sill = 0.1;
  double variogram_range = 300.0;  // m, effective range
  double obs_noise_sd = 0.1;       // m
  Index obs_cell = 5;              // 1-based
  Index pred_cell = 10;            // 1-based
  double truth_boundary_head = 1.5;  // m, synthetic truth

  Index n_params() const { return n_cells + 1; }
};

inline void validate(const AquiferConfig &cfg) {
  if (cfg.n_cells < 2 || cfg.cell_length <= 0.0 || cfg.thickness <= 0.0 ||
      cfg.flow_rate <= 0.0 || cfg.boundary_head_sd <= 0.0 ||
      cfg.variogram_sill <= 0.0 || cfg.variogram_range <= 0.0 ||
      cfg.obs_noise_sd <= 0.0) {
    throw PhysicalDomainError("aquifer configuration must be positive");
  }
  if (!(1 <= cfg.obs_cell && cfg.obs_cell < cfg.pred_cell &&
        cfg.pred_cell <= cfg.n_cells)) {
    throw PhysicalDomainError(
        "need 1 <= obs_cell < pred_cell <= n_cells");
  }
}

struct AquiferState {
  double h0 = 0.0;
  Vector log10_k;

  static AquiferState from_vector(const Vector &x) {
    return {x(0), x.tail(x.size() - 1)};
  }

  static AquiferState from_conductivity(double h0, const Vector &k) {
    if ((k.array() <= 0.0).any() || !k.allFinite()) {
      throw PhysicalDomainError("hydraulic conductivity must be positive");
    }
    return {h0, k.array().log10().matrix()};
  }

  Vector to_vector() const {
    Vector x(log10_k.size() + 1);
    x << h0, log10_k;
    return x;
  }
};

// Head loss q l / (b K) across one cell.
inline double cell_head_loss(const AquiferConfig &cfg, double log10_k) {
  const double k = std::pow(10.0, log10_k);
  if (!(k > 0.0) || !std::isfinite(k)) {
    throw PhysicalDomainError("hydraulic conductivity must be positive");
  }
  return cfg.flow_rate * cfg.cell_length / (cfg.thickness * k);
}

// Head at the right face of `cell` (1-based).
inline double head_at(const AquiferConfig &cfg, const AquiferState &state,
                      Index cell) {
  if (state.log10_k.size() != cfg.n_cells || !std::isfinite(state.h0)) {
    throw PhysicalDomainError("state does not match the aquifer grid");
  }
  double h = state.h0;
  for (Index i = 0; i < cell; ++i) {
    h += cell_head_loss(cfg, state.log10_k(i));
  }
  return h;
}

inline double forward_data(const AquiferConfig &cfg, const AquiferState &s) {
  return head_at(cfg, s, cfg.obs_cell);
}

inline double forward_prediction(const AquiferConfig &cfg,
                                 const AquiferState &s) {
  return head_at(cfg, s, cfg.pred_cell);
}

inline AquiferState prior_mean_state(const AquiferConfig &cfg) {
  return {cfg.boundary_head_mean,
          Vector::Constant(cfg.n_cells, cfg.log10_k_mean)};
}

// Prior mean except for the boundary head.
inline AquiferState truth_state(const AquiferConfig &cfg) {
  AquiferState s = prior_mean_state(cfg);
  s.h0 = cfg.truth_boundary_head;
  return s;
}

// Noise-free observation of the synthetic truth.
inline double generate_data(const AquiferConfig &cfg) {
  return forward_data(cfg, truth_state(cfg));
}

// Exponential variogram with effective range: C(h) = sill exp(-3 h / range).
inline double variogram_covariance(const AquiferConfig &cfg, double lag) {
  return cfg.variogram_sill * std::exp(-3.0 * lag / cfg.variogram_range);
}

// Prior over x: independent boundary head, spatially correlated log10 K with
// cell centres spaced cell_length apart.
inline GaussianBelief build_prior(const AquiferConfig &cfg) {
  validate(cfg);
  const Index n = cfg.n_params();
  GaussianBelief prior;
  prior.mean = prior_mean_state(cfg).to_vector();
  prior.covariance = Matrix::Zero(n, n);
  prior.covariance(0, 0) = cfg.boundary_head_sd * cfg.boundary_head_sd;
  for (Index i = 0; i < cfg.n_cells; ++i) {
    for (Index j = 0; j < cfg.n_cells; ++j) {
      const double lag =
          cfg.cell_length * static_cast<double>(std::abs(i - j));
      prior.covariance(1 + i, 1 + j) = variogram_covariance(cfg, lag);
    }
  }
  return prior;
}

// Gradient of head_at(cell) w.r.t. x at `state`.
inline Matrix head_jacobian(const AquiferConfig &cfg, const AquiferState &state,
                            Index cell) {
  Matrix jac = Matrix::Zero(1, cfg.n_params());
  jac(0, 0) = 1.0;
  for (Index i = 0; i < cell; ++i) {
    jac(0, 1 + i) = -std::numbers::ln10 * cell_head_loss(cfg, state.log10_k(i));
  }
  return jac;
}

// First-order expansion about the prior mean, in increments
// dx = x - mu_x, dd = d - G(mu_x), dp = p - Y(mu_x).
inline HighFidelityModel linearize(const AquiferConfig &cfg) {
  validate(cfg);
  const AquiferState mean = prior_mean_state(cfg);
  HighFidelityModel m;
  m.data_matrix = head_jacobian(cfg, mean, cfg.obs_cell);
  m.pred_matrix = head_jacobian(cfg, mean, cfg.pred_cell);
  m.prior_cov = build_prior(cfg).covariance;
  m.data_noise_cov = Matrix::Constant(1, 1, cfg.obs_noise_sd * cfg.obs_noise_sd);
  m.pred_noise_cov = Matrix::Zero(1, 1);
  return m;
}

// Zone A = cells 1..n/2, zone B = the rest, boundary head fixed. With
// include_h0 the boundary head is kept as a leading third parameter.
inline Matrix build_zoning_simplification(const AquiferConfig &cfg,
                                          bool include_h0) {
  validate(cfg);
  if (cfg.n_cells % 2 != 0) {
    throw PhysicalDomainError("zoning needs an even number of cells");
  }
  const Index offset = include_h0 ? 1 : 0;
  Matrix c = Matrix::Zero(cfg.n_params(), 2 + offset);
  if (include_h0) {
    c(0, 0) = 1.0;
  }
  const Index half = cfg.n_cells / 2;
  for (Index i = 0; i < cfg.n_cells; ++i) {
    c(1 + i, offset + (i < half ? 0 : 1)) = 1.0;
  }
  return c;
}

struct McmcResult {
  Matrix samples;       // kept states, one row per iteration after burn-in
  Vector predictions;   // forward_prediction of each kept state
  double acceptance_rate = 0.0;
  Index n_burn = 0;
};

inline constexpr double kBurnInFraction = 0.2;

// Random-walk Metropolis on the nonlinear posterior
//   log p(x | d) = log N(d; G(x), s_d^2) + log N(x; mu_x, S_x) + const,
// with independent Gaussian steps per coordinate. The first 20% of the chain
// is discarded; no thinning.
inline McmcResult metropolis_nonlinear_posterior(const AquiferConfig &cfg,
                                                 double d, Index n_iter,
                                                 const Vector &proposal_sd,
                                                 std::uint64_t seed) {
  const GaussianBelief prior = build_prior(cfg);
  const Index n = cfg.n_params();
  require_dims(proposal_sd.size() == n, "proposal sd must have D_x entries");
  const Index n_burn =
      static_cast<Index>(kBurnInFraction * static_cast<double>(n_iter));
  if (n_iter < 1 || n_iter - n_burn < 1) {
    throw InsufficientSamples("chain leaves no samples after burn-in");
  }
  const Eigen::LLT<Matrix> prior_llt(prior.covariance);
  const double noise_var = cfg.obs_noise_sd * cfg.obs_noise_sd;

  auto log_post = [&](const Vector &x) {
    const Vector r = x - prior.mean;
    const double misfit = d - forward_data(cfg, AquiferState::from_vector(x));
    return -0.5 * misfit * misfit / noise_var - 0.5 * r.dot(prior_llt.solve(r));
  };

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;

  McmcResult out;
  out.n_burn = n_burn;
  out.samples.resize(n_iter - n_burn, n);
  out.predictions.resize(n_iter - n_burn);
  Vector x = prior.mean;
  double lp = log_post(x);
  Index accepted = 0;
  Vector proposal(n);
  for (Index it = 0; it < n_iter; ++it) {
    for (Index i = 0; i < n; ++i) {
      proposal(i) = x(i) + proposal_sd(i) * normal(rng);
    }
    const double lp_new = log_post(proposal);
    if (std::log(uniform(rng)) < lp_new - lp) {
      x = proposal;
      lp = lp_new;
      ++accepted;
    }
    if (it >= n_burn) {
      out.samples.row(it - n_burn) = x.transpose();
      out.predictions(it - n_burn) =
          forward_prediction(cfg, AquiferState::from_vector(x));
    }
  }
  out.acceptance_rate =
      static_cast<double>(accepted) / static_cast<double>(n_iter);
  return out;
}

// Scales the prior marginal standard deviations so that pilot chains accept
// close to `target` of proposals. Deterministic given the seed.
inline Vector tune_proposal_sd(const AquiferConfig &cfg, double d,
                               std::uint64_t seed, double target = 0.3,
                               Index pilot_iter = 20000) {
  const Vector base = build_prior(cfg).covariance.diagonal().cwiseSqrt();
  double lo = std::log(1e-4);
  double hi = std::log(10.0);
  double log_scale = std::log(0.3);
  for (int step = 0; step < 30; ++step) {
    const double rate =
        metropolis_nonlinear_posterior(cfg, d, pilot_iter,
                                       std::exp(log_scale) * base, seed + step)
            .acceptance_rate;
    if (std::abs(rate - target) < 0.02) {
      break;
    }
    if (rate > target) {
      lo = log_scale;
    } else {
      hi = log_scale;
    }
    log_scale = 0.5 * (lo + hi);
  }
  return std::exp(log_scale) * base;
}

// Standard error of the mean of a correlated series from non-overlapping
// batch means.
inline double batch_means_standard_error(const Vector &series,
                                         Index n_batches = 50) {
  const Index batch = series.size() / n_batches;
  if (batch < 1) {
    throw InsufficientSamples("series shorter than the number of batches");
  }
  Vector means(n_batches);
  for (Index b = 0; b < n_batches; ++b) {
    means(b) = series.segment(b * batch, batch).mean();
  }
  const double centre = means.mean();
  const double var =
      (means.array() - centre).square().sum() / static_cast<double>(n_batches - 1);
  return std::sqrt(var / static_cast<double>(n_batches));
}

struct Histogram {
  Vector centres;
  Vector density;  // normalized so that sum(density) * width = 1
  double width = 0.0;
};

inline Histogram histogram(const Vector &values, double lo, double hi,
                           Index bins) {
  if (bins < 1 || !(hi > lo)) {
    throw InvalidMatrix("histogram needs bins >= 1 and hi > lo");
  }
  Histogram h;
  h.width = (hi - lo) / static_cast<double>(bins);
  h.centres.resize(bins);
  h.density = Vector::Zero(bins);
  for (Index b = 0; b < bins; ++b) {
    h.centres(b) = lo + (static_cast<double>(b) + 0.5) * h.width;
  }
  for (Index i = 0; i < values.size(); ++i) {
    const double pos = (values(i) - lo) / h.width;
    if (pos >= 0.0 && pos < static_cast<double>(bins)) {
      h.density(static_cast<Index>(pos)) += 1.0;
    }
  }
  if (values.size() > 0) {
    h.density /= static_cast<double>(values.size()) * h.width;
  }
  return h;
}

}  // namespace simplecal::aquifer

#endif  // SIMPLECAL_AQUIFER_HPP_
