#pragma once

#include <cstddef>

#include "forestdiff/matrix.hpp"

namespace forestdiff::process {

enum class ProcessKind { vp_diffusion, flow_matching };

// beta(T) = beta_min + T * (beta_max - beta_min)
struct NoiseSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;

  void validate() const;
  double beta(double level) const { return beta_min + level * (beta_max - beta_min); }
  // Log of the mean coefficient: x_T = e^C x_0 + sqrt(1 - e^{2C}) z.
  double log_mean_coeff(double level) const {
    return -0.25 * level * level * (beta_max - beta_min) - 0.5 * level * beta_min;
  }
};

// Levels i / n_t for i = 1..n_t; level 0 is the data.
struct TimeGrid {
  int n_t = 50;

  void validate() const;
  double level(int i) const { return static_cast<double>(i) / static_cast<double>(n_t); }
  double step() const { return 1.0 / static_cast<double>(n_t); }
};

// Noise term of the stochastic VP steps. euler_maruyama uses sqrt(beta*h)*z in
// both directions; literal uses sqrt(beta)*z for the forward jump and
// beta*sqrt(h)*z for the reverse step.
enum class NoiseScaling { euler_maruyama, literal };

struct ForwardPair {
  Matrix x_t;
  Matrix target;
};

// x_s = (1 - s) z + s x, target x - z. s = 0 is noise, s = 1 is data.
ForwardPair flow_forward(const Matrix& z, const Matrix& x, double s);

// x_T = e^C x + sqrt(1 - e^{2C}) z, target z.
ForwardPair vp_forward(const Matrix& z, const Matrix& x, double level, const NoiseSchedule& sched);

// One forward Euler-Maruyama step of dx = -beta/2 x dt + sqrt(beta) dw.
Matrix vp_forward_jump(const Matrix& z, const Matrix& x_t, double level, double h,
                       const NoiseSchedule& sched,
                       NoiseScaling scaling = NoiseScaling::euler_maruyama);

// x + h v: explicit Euler on the learned ODE, integrating from noise to data.
Matrix flow_reverse_step(const Matrix& x, const Matrix& v_pred, double h);

// One reverse-SDE step from `level` to `level - h` using the predicted
// noise. Pass a zero matrix as z for the final, noise-free step.
Matrix vp_reverse_step(const Matrix& x, const Matrix& eps_pred, double level, double h,
                       const Matrix& z, const NoiseSchedule& sched,
                       NoiseScaling scaling = NoiseScaling::euler_maruyama);

}  // namespace forestdiff::process
