#pragma once

#include <functional>
#include <string>

#include "soundflow/rng.hpp"
#include "soundflow/tensor.hpp"

namespace soundflow {

// Interpolation schedule between noise (t=0) and data (t=1):
//   x_t = alpha(t) * x + beta(t) * eps
// with alpha(0)=0, beta(0)=1, alpha(1)=1, beta(1)=0.
class Schedule {
public:
    static Schedule linear();
    static Schedule cosine();
    static Schedule from_name(const std::string& name);

    const std::string& name() const { return name_; }
    double alpha(double t) const { return alpha_(t); }
    double beta(double t) const { return beta_(t); }
    double alpha_dot(double t) const { return alpha_dot_(t); }
    double beta_dot(double t) const { return beta_dot_(t); }

private:
    using Fn = double (*)(double);
    Schedule(std::string name, Fn a, Fn b, Fn ad, Fn bd);
    std::string name_;
    Fn alpha_, beta_, alpha_dot_, beta_dot_;
};

// x_t = alpha(t) x + beta(t) eps, elementwise. Differentiable through x/eps.
Tensor interpolate(const Tensor& x, const Tensor& eps, double t, const Schedule& schedule);

// u_t = alpha'(t) x + beta'(t) eps, the regression target for the velocity net.
Tensor target_velocity(const Tensor& x, const Tensor& eps, double t, const Schedule& schedule);

// Mean squared error between predicted and target velocity fields.
Tensor cfm_loss(const Tensor& v_pred, const Tensor& u_target);

// t ~ U[0, 1).
double sample_timestep(Rng& rng);

using VelocityFn = std::function<Tensor(const Tensor& x, double t)>;

// Explicit Euler integration of dx = v(x, t) dt from t=0 to t=1 with uniform
// steps, starting at eps; velocity evaluated at the left endpoint of each
// step. Throws if steps < 1 or the field produces non-finite values (the
// failing step index is reported).
Tensor sample_ode(const VelocityFn& velocity, const Tensor& eps, int steps);

}  // namespace soundflow
