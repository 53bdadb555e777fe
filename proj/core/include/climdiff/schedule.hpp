#pragma once

#include <cstddef>
#include <vector>

namespace climdiff {

/// Precomputed diffusion schedule tables, double precision.
///
/// Index convention: internal t in [0, T-1] is timestep t+1 of the usual
/// 1-based notation, so t = 0 is the least-noised step and t = T-1 is the
/// step sampled from pure noise.
struct NoiseSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // cumulative product of alpha
  std::vector<double> sigma;      // reverse-step noise scale, sqrt(beta)

  std::size_t timesteps() const noexcept { return beta.size(); }

  struct Entry {
    double beta, alpha, alpha_bar, sigma;
  };
  /// Throws Range error for t outside [0, T).
  Entry lookup(std::size_t t) const;
};

struct ScheduleParams {
  std::size_t timesteps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

/// beta[t] = beta_start + t/(T-1) * (beta_end - beta_start).
NoiseSchedule linear_schedule(std::size_t timesteps, double beta_start = 1e-4, double beta_end = 0.02);
inline NoiseSchedule linear_schedule(const ScheduleParams& p) {
  return linear_schedule(p.timesteps, p.beta_start, p.beta_end);
}

}  // namespace climdiff
