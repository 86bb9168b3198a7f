#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "soundflow/flow.hpp"
#include "soundflow/rng.hpp"
#include "soundflow/tensor.hpp"

using namespace soundflow;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = rng.normal();
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("schedule boundaries are exact") {
    for (const auto& s : {Schedule::linear(), Schedule::cosine()}) {
        CAPTURE(s.name());
        CHECK(s.alpha(0.0) == 0.0);
        CHECK(s.beta(0.0) == 1.0);
        CHECK(s.alpha(1.0) == 1.0);
        // cos(pi/2) is not exactly zero in floating point; demand 1e-16 scale.
        CHECK(std::abs(s.beta(1.0)) < 1e-15);
    }
}

TEST_CASE("schedule derivatives match central differences") {
    const double h = 1e-6;
    for (const auto& s : {Schedule::linear(), Schedule::cosine()}) {
        CAPTURE(s.name());
        for (double t = 0.05; t < 1.0; t += 0.05) {
            double ad = (s.alpha(t + h) - s.alpha(t - h)) / (2 * h);
            double bd = (s.beta(t + h) - s.beta(t - h)) / (2 * h);
            CHECK(std::abs(s.alpha_dot(t) - ad) < 1e-5);
            CHECK(std::abs(s.beta_dot(t) - bd) < 1e-5);
        }
    }
}

TEST_CASE("schedule lookup by name") {
    CHECK(Schedule::from_name("linear").name() == "linear");
    CHECK(Schedule::from_name("cosine").name() == "cosine");
    CHECK_THROWS_AS(Schedule::from_name("quadratic"), std::invalid_argument);
}

TEST_CASE("interpolate and target_velocity") {
    Tensor x({3}, {1, 2, 3});
    Tensor eps({3}, {-1, 0, 1});
    Schedule lin = Schedule::linear();

    Tensor xt = interpolate(x, eps, 0.25, lin);
    CHECK(xt.values()[0] == doctest::Approx(0.25 * 1 + 0.75 * -1).epsilon(1e-15));
    CHECK(xt.values()[2] == doctest::Approx(0.25 * 3 + 0.75 * 1).epsilon(1e-15));

    // Endpoints reproduce the inputs exactly.
    CHECK(interpolate(x, eps, 0.0, lin).values() == eps.values());
    CHECK(interpolate(x, eps, 1.0, lin).values() == x.values());

    Tensor u = target_velocity(x, eps, 0.4, lin);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(u.values()[i] == doctest::Approx(x.values()[i] - eps.values()[i]).epsilon(1e-15));

    Schedule cos = Schedule::cosine();
    Tensor uc = target_velocity(x, eps, 0.3, cos);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(uc.values()[i] == doctest::Approx(cos.alpha_dot(0.3) * x.values()[i] +
                                                cos.beta_dot(0.3) * eps.values()[i])
                                    .epsilon(1e-14));

    CHECK_THROWS_AS(interpolate(x, Tensor({2}, {0, 0}), 0.5, lin), std::invalid_argument);
}

TEST_CASE("cfm loss is the mean squared velocity error") {
    Tensor v({2, 2}, {1, 2, 3, 4});
    Tensor u({2, 2}, {0, 0, 0, 0});
    CHECK(cfm_loss(v, u).item() == doctest::Approx(30.0 / 4).epsilon(1e-15));
}

TEST_CASE("cfm loss is differentiable end to end") {
    Rng rng(21);
    Schedule cos = Schedule::cosine();
    Tensor eps = random_tensor({2, 4}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    const double t = 0.37;
    // Treat the data point itself as the optimization variable; the "model"
    // is a fixed linear map of x_t.
    auto f = [&](const Tensor& x) {
        Tensor xt = interpolate(x, eps, t, cos);
        Tensor v_pred = matmul(xt, w);
        Tensor u = target_velocity(x, eps, t, cos);
        return cfm_loss(v_pred, u);
    };
    CHECK(grad_check(f, random_tensor({2, 4}, rng)) < 1e-5);
}

TEST_CASE("sample_timestep is uniform on [0,1)") {
    Rng rng(33);
    double mean = 0.0;
    for (int i = 0; i < 100000; ++i) {
        double t = sample_timestep(rng);
        REQUIRE(t >= 0.0);
        REQUIRE(t < 1.0);
        mean += t;
    }
    mean /= 100000;
    CHECK(std::abs(mean - 0.5) < 0.005);
}

TEST_CASE("euler sampler: constant field is exact") {
    Tensor eps({3}, {0.5, -0.25, 2.0});
    Tensor c({3}, {1.0, 2.0, -3.0});
    auto field = [&](const Tensor&, double) { return c; };
    for (int steps : {1, 7, 25}) {
        Tensor out = sample_ode(field, eps, steps);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(out.values()[i] == doctest::Approx(eps.values()[i] + c.values()[i]).epsilon(1e-12));
    }
}

TEST_CASE("euler sampler: linear-schedule marginal field lands exactly on the data") {
    // For x_t = t x* + (1-t) eps the marginal velocity is
    //   v(x, t) = x* - (x - t x*) / (1 - t),
    // which is constant (= x* - eps) along the exact trajectory, so explicit
    // Euler follows it without error for any step count.
    Rng rng(77);
    Tensor xstar = random_tensor({6}, rng);
    Tensor eps = random_tensor({6}, rng);
    auto field = [&](const Tensor& x, double t) {
        std::vector<double> v(6);
        for (std::size_t i = 0; i < 6; ++i)
            v[i] = xstar.values()[i] - (x.values()[i] - t * xstar.values()[i]) / (1.0 - t);
        return Tensor({6}, std::move(v));
    };
    for (int steps : {5, 25}) {
        Tensor out = sample_ode(field, eps, steps);
        for (std::size_t i = 0; i < 6; ++i)
            CHECK(out.values()[i] == doctest::Approx(xstar.values()[i]).epsilon(1e-10));
    }
}

TEST_CASE("euler sampler: time-dependent field equals the left Riemann sum") {
    Schedule cos = Schedule::cosine();
    Rng rng(78);
    Tensor xstar = random_tensor({4}, rng);
    Tensor eps = random_tensor({4}, rng);
    // State-independent field v(t) = alpha'(t) x* + beta'(t) eps.
    auto field = [&](const Tensor&, double t) {
        std::vector<double> v(4);
        for (std::size_t i = 0; i < 4; ++i)
            v[i] = cos.alpha_dot(t) * xstar.values()[i] + cos.beta_dot(t) * eps.values()[i];
        return Tensor({4}, std::move(v));
    };
    const int steps = 16;
    Tensor out = sample_ode(field, eps, steps);
    // Independent oracle: accumulate the same sum with plain scalar code.
    for (std::size_t i = 0; i < 4; ++i) {
        double acc = eps.values()[i];
        for (int k = 0; k < steps; ++k) {
            double t = static_cast<double>(k) / steps;
            acc += (cos.alpha_dot(t) * xstar.values()[i] + cos.beta_dot(t) * eps.values()[i]) /
                   steps;
        }
        CHECK(out.values()[i] == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("euler sampler converges at first order") {
    // dx/dt = a x has the closed form x(1) = e^a x(0); Euler's global error
    // should roughly halve every time the step count doubles.
    const double a = 0.9;
    Tensor eps({1}, {1.0});
    auto field = [&](const Tensor& x, double) { return scale(x, a); };
    std::vector<double> errs;
    for (int steps : {5, 10, 20, 40, 80}) {
        Tensor out = sample_ode(field, eps, steps);
        errs.push_back(std::abs(out.values()[0] - std::exp(a)));
    }
    for (std::size_t i = 0; i + 1 < errs.size(); ++i) {
        double ratio = errs[i] / errs[i + 1];
        CHECK(ratio > 1.7);
        CHECK(ratio < 2.4);
    }
}

TEST_CASE("euler sampler input validation") {
    Tensor eps({2}, {0, 0});
    auto ok = [](const Tensor& x, double) { return x; };
    CHECK_THROWS_AS(sample_ode(ok, eps, 0), std::invalid_argument);

    auto wrong_shape = [](const Tensor&, double) { return Tensor({3}, {0, 0, 0}); };
    CHECK_THROWS_AS(sample_ode(wrong_shape, eps, 4), std::invalid_argument);

    auto blows_up = [](const Tensor& x, double) { return scale(x, 1e308); };
    Tensor big({1}, {1e308});
    CHECK_THROWS_WITH_AS(sample_ode(blows_up, big, 4), doctest::Contains("non-finite"),
                         std::runtime_error);
}
