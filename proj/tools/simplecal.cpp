#include "simplecal/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

void add_common(CLI::App *cmd, simplecal::cli::Options &opt) {
  cmd->add_option("spec", opt.spec, "problem spec file (key = value)")
      ->required();
  cmd->add_option("--tol", opt.tol, "tolerance for condition checks");
}

void add_filter(CLI::App *cmd, simplecal::cli::Options &opt) {
  auto *filter = cmd->add_option("--filter", opt.filter, "data filter matrix");
  auto *k = cmd->add_option("--tsvd-k", opt.tsvd_k, "TSVD truncation level");
  filter->excludes(k);
}

}  // namespace

int main(int argc, char **argv) {
  namespace cli = simplecal::cli;
  CLI::App app{"Calibration and prediction with simplified linear-Gaussian models"};
  app.require_subcommand(1);

  cli::Options opt;

  auto *run = app.add_subcommand("run", "run one scheme and print the posterior");
  add_common(run, opt);
  add_filter(run, opt);
  run->add_option("--scheme", opt.scheme)
      ->check(CLI::IsMember({"optimal", "naive", "compensated", "data-driven"}));
  run->add_option("--out", opt.out, "directory for CSV results");

  auto *audit = app.add_subcommand("audit", "check the scheme conditions");
  add_common(audit, opt);
  add_filter(audit, opt);
  audit->add_flag("--strict", opt.strict, "exit 1 when any condition fails");
  audit->add_option("--out", opt.out);

  auto *cons = app.add_subcommand("conservativeness",
                                  "expected excess covariance per scheme");
  add_common(cons, opt);
  add_filter(cons, opt);
  cons->add_option("--scheme", opt.scheme)
      ->check(CLI::IsMember({"optimal", "naive", "compensated", "data-driven"}));
  cons->add_option("--mc-samples", opt.mc_samples,
                   "Monte Carlo cross-check sample count");
  cons->add_option("--seed", opt.seed);
  cons->add_option("--out", opt.out);

  auto *tsvd = app.add_subcommand("filter-tsvd", "build and save a TSVD filter");
  add_common(tsvd, opt);
  tsvd->add_option("--tsvd-k", opt.tsvd_k, "truncation level")->required();
  tsvd->add_option("--out", opt.out);

  cli::ExampleSettings example_settings;
  std::string example_out = "groundwater_example";
  auto *example =
      app.add_subcommand("example", "reproduce the groundwater example");
  example->add_option("--out", example_out, "output directory");
  example->add_option("--seed", example_settings.seed);
  example->add_option("--mc-samples", example_settings.mc_samples);
  example->add_option("--mcmc-iterations", example_settings.mcmc_iterations);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return cli::kInputError;
  }

  if (*run) return cli::cmd_run(opt, std::cout, std::cerr);
  if (*audit) return cli::cmd_audit(opt, std::cout, std::cerr);
  if (*cons) return cli::cmd_conservativeness(opt, std::cout, std::cerr);
  if (*tsvd) return cli::cmd_filter_tsvd(opt, std::cout, std::cerr);
  if (*example) {
    return cli::cmd_example(example_out, example_settings, std::cout,
                            std::cerr);
  }
  return cli::kInputError;
}
