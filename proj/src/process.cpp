#include "forestdiff/process.hpp"

#include <cmath>

#include "forestdiff/errors.hpp"

namespace forestdiff::process {

void NoiseSchedule::validate() const {
  if (!(beta_min > 0.0 && beta_min < beta_max))
    throw ValidationError("noise schedule needs 0 < beta_min < beta_max");
}

void TimeGrid::validate() const {
  if (n_t < 1) throw ValidationError("n_t must be >= 1");
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) throw ValidationError(std::string("shape mismatch in ") + what);
}

}  // namespace

ForwardPair flow_forward(const Matrix& z, const Matrix& x, double s) {
  require_same_shape(z, x, "flow_forward");
  ForwardPair out{Matrix(x.rows(), x.cols()), Matrix(x.rows(), x.cols())};
  auto zv = z.values();
  auto xv = x.values();
  auto xt = out.x_t.values();
  auto y = out.target.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    xt[i] = (1.0 - s) * zv[i] + s * xv[i];
    y[i] = xv[i] - zv[i];
  }
  return out;
}

ForwardPair vp_forward(const Matrix& z, const Matrix& x, double level,
                       const NoiseSchedule& sched) {
  require_same_shape(z, x, "vp_forward");
  const double c = sched.log_mean_coeff(level);
  const double mean_coeff = std::exp(c);
  const double noise_coeff = std::sqrt(1.0 - std::exp(2.0 * c));
  ForwardPair out{Matrix(x.rows(), x.cols()), z};
  auto zv = z.values();
  auto xv = x.values();
  auto xt = out.x_t.values();
  for (std::size_t i = 0; i < xv.size(); ++i) xt[i] = mean_coeff * xv[i] + noise_coeff * zv[i];
  return out;
}

Matrix vp_forward_jump(const Matrix& z, const Matrix& x_t, double level, double h,
                       const NoiseSchedule& sched, NoiseScaling scaling) {
  require_same_shape(z, x_t, "vp_forward_jump");
  if (!(h > 0.0)) throw ValidationError("vp_forward_jump needs h > 0");
  const double beta = sched.beta(level);
  const double noise = scaling == NoiseScaling::euler_maruyama ? std::sqrt(beta * h)
                                                               : std::sqrt(beta);
  Matrix out(x_t.rows(), x_t.cols());
  auto zv = z.values();
  auto xv = x_t.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i)
    ov[i] = xv[i] - h * 0.5 * beta * xv[i] + noise * zv[i];
  return out;
}

Matrix flow_reverse_step(const Matrix& x, const Matrix& v_pred, double h) {
  require_same_shape(x, v_pred, "flow_reverse_step");
  Matrix out(x.rows(), x.cols());
  auto xv = x.values();
  auto vv = v_pred.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] + h * vv[i];
  return out;
}

Matrix vp_reverse_step(const Matrix& x, const Matrix& eps_pred, double level, double h,
                       const Matrix& z, const NoiseSchedule& sched, NoiseScaling scaling) {
  require_same_shape(x, eps_pred, "vp_reverse_step");
  require_same_shape(x, z, "vp_reverse_step");
  const double c = sched.log_mean_coeff(level);
  const double var = 1.0 - std::exp(2.0 * c);
  if (!(level > 0.0) || !(var > 0.0))
    throw ValidationError("vp_reverse_step is undefined at level 0");
  const double sigma = std::sqrt(var);
  const double beta = sched.beta(level);
  const double noise = scaling == NoiseScaling::euler_maruyama ? std::sqrt(beta * h)
                                                               : beta * std::sqrt(h);
  Matrix out(x.rows(), x.cols());
  auto xv = x.values();
  auto ev = eps_pred.values();
  auto zv = z.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double score = -ev[i] / sigma;
    const double drift = -0.5 * beta * xv[i] - beta * score;
    ov[i] = xv[i] - h * drift + noise * zv[i];
  }
  return out;
}

}  // namespace forestdiff::process
