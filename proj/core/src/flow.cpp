#include "soundflow/flow.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace soundflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

constexpr double kHalfPi = std::numbers::pi / 2.0;

double linear_alpha(double t) { return t; }
double linear_beta(double t) { return 1.0 - t; }
double linear_alpha_dot(double) { return 1.0; }
double linear_beta_dot(double) { return -1.0; }

double cosine_alpha(double t) { return std::sin(kHalfPi * t); }
// cos(pi/2) rounds to ~6e-17 rather than 0, which would break the exact
// boundary identity x_1 = x; pin the endpoint instead.
double cosine_beta(double t) { return t == 1.0 ? 0.0 : std::cos(kHalfPi * t); }
double cosine_alpha_dot(double t) { return kHalfPi * std::cos(kHalfPi * t); }
double cosine_beta_dot(double t) { return -kHalfPi * std::sin(kHalfPi * t); }

}  // namespace

Schedule::Schedule(std::string name, Fn a, Fn b, Fn ad, Fn bd)
    : name_(std::move(name)), alpha_(a), beta_(b), alpha_dot_(ad), beta_dot_(bd) {}

Schedule Schedule::linear() {
    return Schedule("linear", linear_alpha, linear_beta, linear_alpha_dot, linear_beta_dot);
}

Schedule Schedule::cosine() {
    return Schedule("cosine", cosine_alpha, cosine_beta, cosine_alpha_dot, cosine_beta_dot);
}

Schedule Schedule::from_name(const std::string& name) {
    if (name == "linear") return linear();
    if (name == "cosine") return cosine();
    fail("unknown schedule '" + name + "' (expected 'linear' or 'cosine')");
}

Tensor interpolate(const Tensor& x, const Tensor& eps, double t, const Schedule& schedule) {
    if (x.shape() != eps.shape())
        fail("interpolate: x " + shape_str(x.shape()) + " and eps " + shape_str(eps.shape()) +
             " must match");
    return add(scale(x, schedule.alpha(t)), scale(eps, schedule.beta(t)));
}

Tensor target_velocity(const Tensor& x, const Tensor& eps, double t, const Schedule& schedule) {
    if (x.shape() != eps.shape())
        fail("target_velocity: x " + shape_str(x.shape()) + " and eps " + shape_str(eps.shape()) +
             " must match");
    return add(scale(x, schedule.alpha_dot(t)), scale(eps, schedule.beta_dot(t)));
}

Tensor cfm_loss(const Tensor& v_pred, const Tensor& u_target) {
    return mse(v_pred, u_target);
}

double sample_timestep(Rng& rng) { return rng.uniform01(); }

Tensor sample_ode(const VelocityFn& velocity, const Tensor& eps, int steps) {
    if (steps < 1) fail("sample_ode: steps must be >= 1, got " + std::to_string(steps));
    const double dt = 1.0 / static_cast<double>(steps);
    std::vector<double> state = eps.values();
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        Tensor x(eps.shape(), state, /*requires_grad=*/false);
        Tensor v = velocity(x, t);
        if (v.shape() != eps.shape())
            fail("sample_ode: velocity returned shape " + shape_str(v.shape()) + ", expected " +
                 shape_str(eps.shape()));
        const std::vector<double>& dv = v.values();
        for (std::size_t i = 0; i < state.size(); ++i) {
            state[i] += dt * dv[i];
            if (!std::isfinite(state[i]))
                throw std::runtime_error("sample_ode: non-finite state at step " +
                                         std::to_string(k) + ", element " + std::to_string(i));
        }
    }
    return Tensor(eps.shape(), std::move(state), /*requires_grad=*/false);
}

}  // namespace soundflow
