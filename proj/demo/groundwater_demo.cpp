// Calibrates the two-zone groundwater model with each scheme and prints the
// predictive mean and variance of the head at the last cell.
#include "simplecal/aquifer.hpp"
#include "simplecal/conservativeness.hpp"
#include "simplecal/schemes.hpp"

#include <cstdio>

int main() {
  namespace aq = simplecal::aquifer;
  using simplecal::Matrix;
  using simplecal::Vector;

  const aq::AquiferConfig cfg;
  const simplecal::HighFidelityModel model = aq::linearize(cfg);
  const double head_mean = aq::forward_prediction(cfg, aq::prior_mean_state(cfg));
  const double d_obs = aq::generate_data(cfg);
  const Vector d = Vector::Constant(
      1, d_obs - aq::forward_data(cfg, aq::prior_mean_state(cfg)));

  const auto simp = simplecal::make_simplification(
      model, aq::build_zoning_simplification(cfg, false));
  const auto filter =
      simplecal::make_filter(simp, Matrix::Identity(1, 1), model);

  const simplecal::SchemeResult results[] = {
      simplecal::run_optimal(model, d),
      simplecal::run_naive(model, simp, d),
      simplecal::run_compensated(model, simp, d),
      simplecal::run_data_driven(model, simp, filter, d),
  };
  std::printf("observed head %.3f m\n", d_obs);
  std::printf("%-12s %10s %10s  %s\n", "scheme", "mean", "variance", "verdict");
  for (const auto &r : results) {
    const auto rep = simplecal::check_scheme(model, r);
    std::printf("%-12s %10.4f %10.4f  %s\n", simplecal::to_string(r.kind),
                head_mean + r.posterior.mean(0), r.posterior.covariance(0, 0),
                simplecal::to_string(rep.verdict));
  }
  return 0;
}
