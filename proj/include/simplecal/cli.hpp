#ifndef SIMPLECAL_CLI_HPP_
#define SIMPLECAL_CLI_HPP_

#include "simplecal/aquifer.hpp"
#include "simplecal/conservativeness.hpp"
#include "simplecal/core.hpp"
#include "simplecal/io.hpp"
#include "simplecal/model.hpp"
#include "simplecal/schemes.hpp"

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

// Command implementations behind the simplecal executable. Each command
// returns a process exit code and never throws.
namespace simplecal::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kSuccess = 0,
  kAuditFailed = 1,
  kInputError = 2,
  kNumericalError = 3,
};

struct Options {
  fs::path spec;
  std::optional<std::string> scheme;
  std::optional<fs::path> filter;
  std::optional<long> tsvd_k;
  std::optional<std::size_t> mc_samples;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  bool strict = false;
  std::optional<fs::path> out;
};

// SIMPLECAL_LOG: 0 errors only, 1 warnings (default), 2 info.
inline int log_level() {
  const char *env = std::getenv("SIMPLECAL_LOG");
  if (env == nullptr || *env == '\0') {
    return 1;
  }
  const std::string v(env);
  if (v == "quiet" || v == "error") return 0;
  if (v == "warn" || v == "warning") return 1;
  if (v == "info" || v == "debug") return 2;
  char *end = nullptr;
  const long n = std::strtol(env, &end, 10);
  return *end == '\0' ? static_cast<int>(n) : 1;
}

inline std::string fmt_row(const Matrix &m) {
  std::ostringstream s;
  s << '[';
  for (Index i = 0; i < m.rows(); ++i) {
    if (i > 0) s << "; ";
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) s << ' ';
      s << io::format_real(m(i, j));
    }
  }
  s << ']';
  return s.str();
}

inline std::string pass_fail(bool ok) { return ok ? "PASS" : "FAIL"; }

namespace detail {

struct Context {
  io::ProblemSpec spec;
  io::Problem problem;
  double tol = kDefaultOptimalityTol;
  std::size_t mc_samples = 0;
  std::uint64_t seed = 1;
};

inline Context load(const Options &opt) {
  Context ctx;
  ctx.spec = io::read_spec(opt.spec);
  ctx.problem = io::load_problem(ctx.spec);
  const std::string where = opt.spec.string();
  if (opt.tol) {
    ctx.tol = *opt.tol;
  } else if (auto v = ctx.spec.get("tol")) {
    ctx.tol = io::parse_real(*v, where + ": tol");
  }
  if (opt.mc_samples) {
    ctx.mc_samples = *opt.mc_samples;
  } else if (auto v = ctx.spec.get("mc_samples")) {
    ctx.mc_samples =
        static_cast<std::size_t>(io::parse_count(*v, where + ": mc_samples"));
  }
  if (opt.seed) {
    ctx.seed = *opt.seed;
  } else if (auto v = ctx.spec.get("seed")) {
    ctx.seed = static_cast<std::uint64_t>(io::parse_count(*v, where + ": seed"));
  }
  return ctx;
}

inline SchemeKind parse_scheme(const std::string &name) {
  if (name == "optimal") return SchemeKind::Optimal;
  if (name == "naive") return SchemeKind::Naive;
  if (name == "compensated") return SchemeKind::Compensated;
  if (name == "data-driven") return SchemeKind::DataDriven;
  throw io::InputError("unknown scheme '" + name +
                       "' (optimal|naive|compensated|data-driven)");
}

inline std::optional<SchemeKind> requested_scheme(const Options &opt,
                                                  const Context &ctx) {
  if (opt.scheme) return parse_scheme(*opt.scheme);
  if (auto v = ctx.spec.get("scheme")) return parse_scheme(*v);
  return std::nullopt;
}

inline Simplification require_simplification(const Context &ctx) {
  if (!ctx.problem.simplification) {
    throw io::InputError(ctx.spec.source.string() +
                         ": missing required field 'simplification'");
  }
  return make_simplification(ctx.problem.model, *ctx.problem.simplification);
}

inline Vector require_data(const Context &ctx) {
  if (!ctx.problem.data) {
    throw io::InputError(ctx.spec.source.string() +
                         ": missing required field 'data'");
  }
  return *ctx.problem.data;
}

// --filter > --tsvd-k > spec filter > spec tsvd_k > identity.
inline Matrix resolve_filter(const Options &opt, const Context &ctx,
                             const Simplification &simp) {
  if (opt.filter) {
    return io::read_matrix(*opt.filter);
  }
  if (opt.tsvd_k) {
    return make_tsvd_filter(simp, *opt.tsvd_k);
  }
  if (ctx.problem.filter) {
    return *ctx.problem.filter;
  }
  if (auto v = ctx.spec.get("tsvd_k")) {
    return make_tsvd_filter(
        simp, io::parse_count(*v, ctx.spec.source.string() + ": tsvd_k"));
  }
  const Index n = ctx.problem.model.n_data();
  return Matrix::Identity(n, n);
}

inline SchemeResult run_scheme(SchemeKind kind, const Options &opt,
                               const Context &ctx, const Vector &d) {
  const HighFidelityModel &model = ctx.problem.model;
  switch (kind) {
    case SchemeKind::Optimal:
      return run_optimal(model, d);
    case SchemeKind::Naive:
      return run_naive(model, require_simplification(ctx), d);
    case SchemeKind::Compensated:
      return run_compensated(model, require_simplification(ctx), d);
    case SchemeKind::DataDriven: {
      const Simplification simp = require_simplification(ctx);
      const DataFilter filter =
          make_filter(simp, resolve_filter(opt, ctx, simp), model);
      return run_data_driven(model, simp, filter, d);
    }
  }
  throw io::InputError("unknown scheme");
}

inline double rel_diff(const Matrix &a, const Matrix &b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

inline void write_result(const fs::path &dir, const SchemeResult &r) {
  fs::create_directories(dir);
  io::write_matrix(dir / "posterior_mean.csv", Matrix(r.posterior.mean));
  io::write_matrix(dir / "posterior_cov.csv", r.posterior.covariance);
  io::write_matrix(dir / "estimator.csv", r.estimator);
  io::write_matrix(dir / "effective_prior.csv", r.effective_prior);
  io::write_matrix(dir / "pred_map.csv", r.pred_map);
  if (r.prior_inflated) {
    io::write_matrix(dir / "inflated_basis.csv", r.inflated_basis);
  }
}

template <typename Fn>
int guarded(std::ostream &err, Fn &&fn) {
  try {
    return fn();
  } catch (const io::InputError &e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const DimensionMismatch &e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const InvalidMatrix &e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const SingularInnovation &e) {
    err << "numerical error: " << e.what()
        << " (the Gaussian update needs an invertible innovation matrix)\n";
    return kNumericalError;
  } catch (const RankDeficientSimplification &e) {
    err << "numerical error: " << e.what()
        << " (simplification matrix must have full column rank)\n";
    return kNumericalError;
  } catch (const FilterRankError &e) {
    err << "numerical error: " << e.what()
        << " (data-driven scheme needs F G~ with full row rank)\n";
    return kNumericalError;
  } catch (const Error &e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kNumericalError;
  }
}

// Condition summary relevant to one scheme.
inline void describe_conditions(std::ostream &out, SchemeKind kind,
                                const Options &opt, const Context &ctx) {
  const HighFidelityModel &model = ctx.problem.model;
  switch (kind) {
    case SchemeKind::Optimal:
      break;
    case SchemeKind::Naive: {
      const Simplification simp = require_simplification(ctx);
      const NaiveAudit a = audit_naive(model, simp, ctx.tol);
      out << "condition optimal_simplification "
          << pass_fail(a.optimality.optimal)
          << " data_residual=" << io::format_real(a.optimality.data_residual)
          << " pred_residual=" << io::format_real(a.optimality.pred_residual)
          << '\n'
          << "condition balanced_error " << pass_fail(a.balanced_residual <= ctx.tol * model.pred_matrix.norm())
          << " residual=" << io::format_real(a.balanced_residual) << '\n'
          << "naive_clause " << to_string(a.clause) << '\n';
      break;
    }
    case SchemeKind::Compensated: {
      const Simplification simp = require_simplification(ctx);
      const RankCondition rc = compensation_rank_condition(model, simp);
      out << "condition compensation_rank " << pass_fail(rc.holds)
          << " rank_z=" << rc.rank_z << " rank_zc=" << rc.rank_zc << '\n';
      break;
    }
    case SchemeKind::DataDriven: {
      const Simplification simp = require_simplification(ctx);
      const DataFilter filter =
          make_filter(simp, resolve_filter(opt, ctx, simp), model);
      const StructuralCheckResult sc =
          check_prediction_structure(model, simp, filter, ctx.tol);
      out << "condition data_driven_structure " << pass_fail(sc.holds)
          << " residual=" << io::format_real(sc.residual_norm) << '\n';
      break;
    }
  }
}

}  // namespace detail

inline int cmd_run(const Options &opt, std::ostream &out, std::ostream &err) {
  return detail::guarded(err, [&] {
    const detail::Context ctx = detail::load(opt);
    const auto kind = detail::requested_scheme(opt, ctx);
    if (!kind) {
      throw io::InputError("no scheme given (--scheme or 'scheme' in spec)");
    }
    const Vector d = detail::require_data(ctx);
    const SchemeResult r = detail::run_scheme(*kind, opt, ctx, d);
    out << "scheme " << r.label << '\n'
        << "posterior_mean " << fmt_row(Matrix(r.posterior.mean.transpose()))
        << '\n'
        << "posterior_cov " << fmt_row(r.posterior.covariance) << '\n'
        << "effective_prior " << fmt_row(r.effective_prior) << '\n';
    if (r.prior_inflated) {
      out << "inflated_rowspace " << fmt_row(r.inflated_basis.transpose())
          << '\n';
    }
    detail::describe_conditions(out, *kind, opt, ctx);
    if (*kind == SchemeKind::Compensated) {
      const SchemeResult ref = run_optimal(ctx.problem.model, d);
      const double dm = detail::rel_diff(r.posterior.mean, ref.posterior.mean);
      const double dc = detail::rel_diff(r.posterior.covariance,
                                         ref.posterior.covariance);
      out << "deviation_from_optimal mean=" << io::format_real(dm)
          << " cov=" << io::format_real(dc) << " matches_optimal_1e-8="
          << (dm <= 1e-8 && dc <= 1e-8 ? "yes" : "no") << '\n';
    }
    if (log_level() >= 1) {
      for (const auto &w : r.warnings) {
        err << "warning: " << w << '\n';
      }
    }
    if (opt.out) {
      detail::write_result(*opt.out, r);
      if (log_level() >= 2) {
        err << "info: wrote results to " << opt.out->string() << '\n';
      }
    }
    return static_cast<int>(kSuccess);
  });
}

inline int cmd_audit(const Options &opt, std::ostream &out,
                     std::ostream &err) {
  return detail::guarded(err, [&] {
    const detail::Context ctx = detail::load(opt);
    const HighFidelityModel &model = ctx.problem.model;
    const Simplification simp = detail::require_simplification(ctx);
    bool all_pass = true;
    auto line = [&](const std::string &name, bool ok, const std::string &detail,
                    const std::string &licenses) {
      all_pass = all_pass && ok;
      out << name << ' ' << pass_fail(ok) << ' ' << detail
          << " licenses: " << licenses << '\n';
    };

    const NaiveAudit naive = audit_naive(model, simp, ctx.tol);
    line("optimal_simplification", naive.optimality.optimal,
         "data_residual=" + io::format_real(naive.optimality.data_residual) +
             " pred_residual=" +
             io::format_real(naive.optimality.pred_residual),
         "naive scheme reproduces optimal");
    line("balanced_error",
         naive.balanced_residual <= ctx.tol * model.pred_matrix.norm(),
         "residual=" + io::format_real(naive.balanced_residual),
         "naive scheme conservative");
    const RankCondition rc = compensation_rank_condition(model, simp);
    line("compensation_rank", rc.holds,
         "rank_z=" + std::to_string(rc.rank_z) +
             " rank_zc=" + std::to_string(rc.rank_zc),
         "compensated scheme reproduces optimal");
    try {
      const DataFilter filter = make_filter(
          simp, detail::resolve_filter(opt, ctx, simp), model);
      const StructuralCheckResult sc =
          check_prediction_structure(model, simp, filter, ctx.tol);
      line("data_driven_structure", sc.holds,
           "residual=" + io::format_real(sc.residual_norm),
           "data-driven scheme conservative");
    } catch (const FilterRankError &e) {
      line("data_driven_structure", false,
           std::string("filter_rank_error=\"") + e.what() + "\"",
           "data-driven scheme conservative");
    }
    out << "naive_clause " << to_string(naive.clause) << '\n';
    if (opt.out) {
      fs::create_directories(*opt.out);
    }
    return static_cast<int>(opt.strict && !all_pass ? kAuditFailed
                                                    : kSuccess);
  });
}

inline int cmd_conservativeness(const Options &opt, std::ostream &out,
                                std::ostream &err) {
  return detail::guarded(err, [&] {
    const detail::Context ctx = detail::load(opt);
    const HighFidelityModel &model = ctx.problem.model;
    std::vector<SchemeKind> kinds;
    if (const auto k = detail::requested_scheme(opt, ctx)) {
      kinds.push_back(*k);
    } else {
      kinds.push_back(SchemeKind::Optimal);
      if (ctx.problem.simplification) {
        kinds.insert(kinds.end(), {SchemeKind::Naive, SchemeKind::Compensated,
                                   SchemeKind::DataDriven});
      }
    }
    // The scheme maps and covariances do not depend on the dataset.
    const Vector d = Vector::Zero(model.n_data());
    const double ref_norm =
        predictive_kernel(scheme_inputs(model)).pred_cov.norm();
    for (const SchemeKind kind : kinds) {
      const SchemeResult r = detail::run_scheme(kind, opt, ctx, d);
      ConservativenessReport rep = check_scheme(model, r);
      out << "scheme " << to_string(kind) << " verdict "
          << to_string(rep.verdict)
          << " min_eigenvalue=" << io::format_real(rep.min_eigenvalue)
          << " omega=" << fmt_row(rep.omega_expected);
      if (ctx.mc_samples > 0) {
        rep.mc_estimate = mc_oracle(model, r.pred_map,
                                    r.posterior.covariance, ctx.mc_samples,
                                    ctx.seed);
        rep.mc_samples = ctx.mc_samples;
        const double gap = (*rep.mc_estimate - rep.omega_expected).norm() /
                           std::max(ref_norm, 1e-300);
        out << " mc_omega=" << fmt_row(*rep.mc_estimate)
            << " mc_samples=" << ctx.mc_samples
            << " mc_rel_discrepancy=" << io::format_real(gap);
      }
      out << '\n';
      if (opt.out) {
        fs::create_directories(*opt.out);
        io::write_matrix(*opt.out / ("omega_" + std::string(to_string(kind)) +
                                     ".csv"),
                         rep.omega_expected);
      }
    }
    return static_cast<int>(kSuccess);
  });
}

inline int cmd_filter_tsvd(const Options &opt, std::ostream &out,
                           std::ostream &err) {
  return detail::guarded(err, [&] {
    const detail::Context ctx = detail::load(opt);
    const Simplification simp = detail::require_simplification(ctx);
    long k = 0;
    if (opt.tsvd_k) {
      k = *opt.tsvd_k;
    } else if (auto v = ctx.spec.get("tsvd_k")) {
      k = io::parse_count(*v, opt.spec.string() + ": tsvd_k");
    } else {
      throw io::InputError("filter-tsvd needs --tsvd-k");
    }
    const Matrix f = make_tsvd_filter(simp, k);
    if (opt.out) {
      fs::create_directories(*opt.out);
      const fs::path path =
          *opt.out / ("filter_tsvd_k" + std::to_string(k) + ".csv");
      io::write_matrix(path, f);
      out << "wrote " << path.string() << '\n';
    } else {
      io::write_matrix(out, f);
    }
    return static_cast<int>(kSuccess);
  });
}

struct ExampleSettings {
  std::uint64_t seed = 1;
  std::size_t mc_samples = 100000;
  Index mcmc_iterations = 100000;
  Index grid_points = 401;
  Index histogram_bins = 60;
};

inline double normal_pdf(double x, double mean, double var) {
  const double z = x - mean;
  return std::exp(-0.5 * z * z / var) / std::sqrt(2.0 * M_PI * var);
}

// Groundwater example end to end: linearized reference model, zoning
// simplification, all four schemes, conservativeness, and a Metropolis run
// on the nonlinear posterior.
inline int cmd_example(const fs::path &out_dir, const ExampleSettings &set,
                       std::ostream &out, std::ostream &err) {
  return detail::guarded(err, [&] {
    namespace aq = simplecal::aquifer;
    const aq::AquiferConfig cfg;
    const HighFidelityModel model = aq::linearize(cfg);
    const aq::AquiferState mean_state = aq::prior_mean_state(cfg);
    const double data_at_mean = aq::forward_data(cfg, mean_state);
    const double pred_at_mean = aq::forward_prediction(cfg, mean_state);
    const double d_obs = aq::generate_data(cfg);
    const Vector d = Vector::Constant(1, d_obs - data_at_mean);
    const Matrix c = aq::build_zoning_simplification(cfg, false);
    const Simplification simp = make_simplification(model, c);

    fs::create_directories(out_dir);
    io::write_problem(out_dir / "problem", model, c, d);

    const PropagatedPrior prop = propagate_prior(model, simp);
    const Matrix sigma_opt = compensated_prior(model, simp);
    const DataFilter filter =
        make_filter(simp, Matrix::Identity(1, 1), model);

    const SchemeResult optimal = run_optimal(model, d);
    const SchemeResult naive = run_naive(model, simp, d);
    const SchemeResult comp = run_compensated(model, simp, d);
    const SchemeResult dd = run_data_driven(model, simp, filter, d);

    io::write_matrix(out_dir / "sigma_v.csv", prop.sigma_v);
    io::write_matrix(out_dir / "sigma_v_opt.csv", sigma_opt);
    io::write_matrix(out_dir / "sigma_v_dat.csv", dd.effective_prior);
    io::write_matrix(out_dir / "sigma_v_dat_inflated_basis.csv",
                     dd.inflated_basis);

    // Predictive densities in absolute head.
    struct Curve {
      const char *name;
      double mean;
      double var;
    };
    const double prior_var =
        (model.pred_matrix * model.prior_cov * model.pred_matrix.transpose())(0,
                                                                             0);
    const std::vector<Curve> curves = {
        {"prior", pred_at_mean, prior_var},
        {"optimal", pred_at_mean + optimal.posterior.mean(0),
         optimal.posterior.covariance(0, 0)},
        {"naive", pred_at_mean + naive.posterior.mean(0),
         naive.posterior.covariance(0, 0)},
        {"compensated", pred_at_mean + comp.posterior.mean(0),
         comp.posterior.covariance(0, 0)},
        {"data_driven", pred_at_mean + dd.posterior.mean(0),
         dd.posterior.covariance(0, 0)},
    };
    const Curve *widest = &curves[1];
    for (std::size_t i = 1; i < curves.size(); ++i) {
      if (curves[i].var > widest->var) widest = &curves[i];
    }
    const double half = 4.0 * std::sqrt(widest->var);
    {
      std::ofstream csv(out_dir / "densities.csv");
      csv << "head";
      for (const auto &cv : curves) csv << ',' << cv.name;
      csv << '\n';
      for (Index i = 0; i < set.grid_points; ++i) {
        const double h = widest->mean - half +
                         2.0 * half * static_cast<double>(i) /
                             static_cast<double>(set.grid_points - 1);
        csv << io::format_real(h);
        for (const auto &cv : curves) {
          csv << ',' << io::format_real(normal_pdf(h, cv.mean, cv.var));
        }
        csv << '\n';
      }
    }

    // Nonlinear posterior by Metropolis.
    const Vector proposal = aq::tune_proposal_sd(cfg, d_obs, set.seed);
    const aq::McmcResult chain = aq::metropolis_nonlinear_posterior(
        cfg, d_obs, set.mcmc_iterations, proposal, set.seed);
    const double lo = chain.predictions.minCoeff();
    const double hi = chain.predictions.maxCoeff();
    const aq::Histogram hist = aq::histogram(chain.predictions, lo,
                                             std::nextafter(hi, hi + 1.0),
                                             set.histogram_bins);
    {
      std::ofstream csv(out_dir / "mcmc_histogram.csv");
      csv << "head,mcmc_density,linearized_density\n";
      for (Index b = 0; b < hist.centres.size(); ++b) {
        csv << io::format_real(hist.centres(b)) << ','
            << io::format_real(hist.density(b)) << ','
            << io::format_real(normal_pdf(hist.centres(b),
                                          curves[1].mean, curves[1].var))
            << '\n';
      }
    }

    std::ostringstream report;
    report << "observed_head " << io::format_real(d_obs) << '\n'
           << "data_increment " << io::format_real(d(0)) << '\n'
           << "sigma_v " << fmt_row(prop.sigma_v) << '\n'
           << "sigma_v_opt " << fmt_row(sigma_opt) << '\n'
           << "sigma_v_dat_nullspace " << fmt_row(dd.effective_prior)
           << " inflated_direction " << fmt_row(dd.inflated_basis.transpose())
           << '\n';
    for (const auto &cv : curves) {
      report << "predictive " << cv.name << " mean=" << io::format_real(cv.mean)
             << " var=" << io::format_real(cv.var) << '\n';
    }
    for (const SchemeResult *r : {&optimal, &naive, &comp, &dd}) {
      const ConservativenessReport rep = check_scheme(model, *r);
      const Matrix mc = mc_oracle(model, r->pred_map, r->posterior.covariance,
                                  set.mc_samples, set.seed);
      report << "conservativeness " << to_string(r->kind) << ' '
             << to_string(rep.verdict)
             << " omega=" << io::format_real(rep.omega_expected(0, 0))
             << " mc_omega=" << io::format_real(mc(0, 0)) << '\n';
    }
    const NaiveAudit naive_audit = audit_naive(model, simp);
    const RankCondition rc = compensation_rank_condition(model, simp);
    const StructuralCheckResult sc =
        check_prediction_structure(model, simp, filter);
    report << "audit optimal_simplification "
           << pass_fail(naive_audit.optimality.optimal) << '\n'
           << "audit balanced_error "
           << pass_fail(naive_audit.clause == NaiveClause::BalancedError)
           << " residual=" << io::format_real(naive_audit.balanced_residual)
           << '\n'
           << "audit compensation_rank " << pass_fail(rc.holds) << '\n'
           << "audit data_driven_structure " << pass_fail(sc.holds)
           << " residual=" << io::format_real(sc.residual_norm) << '\n'
           << "mcmc iterations=" << set.mcmc_iterations
           << " acceptance_rate=" << io::format_real(chain.acceptance_rate)
           << " prediction_mean=" << io::format_real(chain.predictions.mean())
           << '\n';
    {
      std::ofstream f(out_dir / "report.txt");
      f << report.str();
    }
    out << report.str();
    return static_cast<int>(kSuccess);
  });
}

}  // namespace simplecal::cli

#endif  // SIMPLECAL_CLI_HPP_
