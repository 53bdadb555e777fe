#include "climdiff/schedule.hpp"

#include <cmath>
#include <string>

#include "climdiff/error.hpp"

namespace climdiff {

NoiseSchedule linear_schedule(std::size_t T, double beta_start, double beta_end) {
  if (T < 1) fail(ErrorKind::Range, "schedule: timesteps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    fail(ErrorKind::Range, "schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  s.sigma.resize(T);
  double prod = 1.0;
  for (std::size_t t = 0; t < T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(T - 1);
    s.beta[t] = beta_start + frac * (beta_end - beta_start);
    s.alpha[t] = 1.0 - s.beta[t];
    prod *= s.alpha[t];
    s.alpha_bar[t] = prod;
    s.sigma[t] = std::sqrt(s.beta[t]);
  }
  return s;
}

NoiseSchedule::Entry NoiseSchedule::lookup(std::size_t t) const {
  if (t >= beta.size()) {
    fail(ErrorKind::Range, "schedule: timestep " + std::to_string(t) + " outside [0, " + std::to_string(beta.size()) + ")");
  }
  return {beta[t], alpha[t], alpha_bar[t], sigma[t]};
}

}  // namespace climdiff
