#include "scinv/control.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace scinv;
using Catch::Approx;

namespace {

/// Signed angle difference folded into (-pi, pi].
double angle_error(double a, double b) {
    double d = std::fmod(a - b, kTwoPi);
    if (d > std::numbers::pi) d -= kTwoPi;
    if (d <= -std::numbers::pi) d += kTwoPi;
    return d;
}

}  // namespace

// -----------------------------------------------------------------------------
// PI
// -----------------------------------------------------------------------------

TEST_CASE("pi_step integrates and clamps", "[control][oracle]") {
    PiState s;
    s.kp = 2.0;
    s.ki = 10.0;
    auto [u, n] = pi_step(s, 1.0, 0.1);
    CHECK(u == Approx(3.0));  // 2*1 + 10*1*0.1
    CHECK(n.integ == Approx(1.0));
    std::tie(u, n) = pi_step(n, -0.5, 0.1);
    CHECK(u == Approx(-1.0 + 0.5));
    CHECK(n.integ == Approx(0.5));
    CHECK_THROWS_AS(pi_step(s, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("pi_step freezes the integrator while saturated", "[control][property]") {
    PiState s;
    s.kp = 1.0;
    s.ki = 100.0;
    s.u_min = -1.0;
    s.u_max = 1.0;
    for (int k = 0; k < 1000; ++k) {
        auto [u, n] = pi_step(s, 5.0, 1e-3);
        CHECK(u <= 1.0);
        s = n;
    }
    CHECK(s.integ <= 1.0);
    // Recovery is immediate once the error reverses.
    const auto [u, n] = pi_step(s, -0.5, 1e-3);
    CHECK(u < 1.0);
    (void)n;
}

// -----------------------------------------------------------------------------
// Frames
// -----------------------------------------------------------------------------

TEST_CASE("park transform examples", "[control][oracle]") {
    auto dq = park(1.0, 0.0, 0.0);
    CHECK(dq.d == Approx(1.0));
    CHECK(dq.q == Approx(0.0).margin(1e-15));
    dq = park(0.0, 1.0, std::numbers::pi / 2);
    CHECK(dq.d == Approx(1.0));
    CHECK(dq.q == Approx(0.0).margin(1e-15));
    dq = park(1.0, 0.0, std::numbers::pi / 2);
    CHECK(dq.d == Approx(0.0).margin(1e-15));
    CHECK(dq.q == Approx(-1.0));
}

TEST_CASE("park and inverse park round-trip", "[control][property]") {
    for (int k = 0; k < 200; ++k) {
        const double th = 0.0731 * k - 3.0;
        const double a = std::sin(1.7 * k), b = std::cos(0.3 * k) * 5.0;
        const auto back = inverse_park(park(a, b, th), th);
        CHECK(back.alpha == Approx(a).margin(1e-12));
        CHECK(back.beta == Approx(b).margin(1e-12));
    }
}

TEST_CASE("wrap_angle stays in [0, 2 pi)", "[control][property]") {
    for (double th : {-100.0, -kTwoPi, -1e-12, 0.0, 3.0, kTwoPi, 1e4}) {
        const double w = wrap_angle(th);
        CHECK(w >= 0.0);
        CHECK(w < kTwoPi);
        CHECK(std::abs(angle_error(w, th)) < 1e-9);
    }
}

// -----------------------------------------------------------------------------
// Orthogonal signal generator and PLL
// -----------------------------------------------------------------------------

TEST_CASE("SOGI produces an in-phase and a quadrature signal", "[control][property]") {
    const double w = kTwoPi * 50.0, dt = 20e-6;
    SogiState s;
    double worst_alpha = 0.0, worst_beta = 0.0;
    for (int k = 1; k <= 10000; ++k) {  // ten cycles
        const double t = k * dt;
        const auto ab = osg_step(s, std::sin(w * t), w, dt);
        if (t > 0.1) {
            worst_alpha = std::max(worst_alpha, std::abs(ab.alpha - std::sin(w * t)));
            worst_beta = std::max(worst_beta, std::abs(ab.beta + std::cos(w * t)));
        }
    }
    CHECK(worst_alpha < 0.01);
    CHECK(worst_beta < 0.01);
}

TEST_CASE("SOGI with zero input stays at zero", "[control]") {
    SogiState s;
    for (int k = 0; k < 1000; ++k) {
        const auto ab = osg_step(s, 0.0, kTwoPi * 50.0, 20e-6);
        CHECK(ab.alpha == 0.0);
        CHECK(ab.beta == 0.0);
    }
    CHECK_THROWS_AS(osg_step(s, 1.0, 0.0, 20e-6), std::invalid_argument);
}

TEST_CASE("SOGI follows an amplitude step within a few cycles", "[control]") {
    const double w = kTwoPi * 50.0, dt = 20e-6;
    SogiState s;
    double amp = 0.0;
    for (int k = 1; k <= 15000; ++k) {
        const double t = k * dt;
        const double v = (t < 0.1 ? 325.0 : 162.5) * std::sin(w * t);
        const auto ab = osg_step(s, v, w, dt);
        amp = std::hypot(ab.alpha, ab.beta);
    }
    CHECK(amp == Approx(162.5).epsilon(0.01));
}

TEST_CASE("PLL pulls in from a 30 degree error", "[control]") {
    const double dt = 20e-6;
    PllState s = PllState::tuned(50.0);
    s.theta = 0.0;
    const double offset = std::numbers::pi / 6;
    double err = 0.0;
    for (int k = 1; k <= 10000; ++k) {  // 0.2 s
        const double phi = kTwoPi * 50.0 * k * dt + offset;
        const auto out = pll_step({std::cos(phi), std::sin(phi)}, s, dt);
        err = angle_error(out.theta, phi + kTwoPi * 50.0 * dt);
        CHECK(out.theta >= 0.0);
        CHECK(out.theta < kTwoPi);
    }
    CHECK(std::abs(err) < 1.0 * std::numbers::pi / 180.0);
}

TEST_CASE("locked PLL stays locked", "[control]") {
    const double dt = 20e-6;
    PllState s = PllState::tuned(50.0);
    double worst = 0.0;
    for (int k = 0; k < 5000; ++k) {
        const double phi = kTwoPi * 50.0 * k * dt;
        const auto out = pll_step({std::cos(phi), std::sin(phi)}, s, dt);
        worst = std::max(worst, std::abs(angle_error(out.theta, phi + kTwoPi * 50.0 * dt)));
    }
    CHECK(worst < 0.01 * std::numbers::pi / 180.0);
}

TEST_CASE("PLL relocks after a frequency step", "[control]") {
    const double dt = 20e-6;
    PllState s = PllState::tuned(50.0);
    double phi = 0.0;
    double err = 0.0;
    for (int k = 0; k < 20000; ++k) {  // 0.4 s at 49.5 Hz
        const auto out = pll_step({std::cos(phi), std::sin(phi)}, s, dt);
        phi += kTwoPi * 49.5 * dt;
        if (k * dt > 0.3) err = std::max(err, std::abs(angle_error(out.theta, phi)));
    }
    CHECK(err < 0.5 * std::numbers::pi / 180.0);
    CHECK(s.omega / kTwoPi == Approx(49.5).epsilon(1e-3));
}

// -----------------------------------------------------------------------------
// Loops
// -----------------------------------------------------------------------------

TEST_CASE("current loop reduces to decoupling plus feedforward at zero error", "[control][oracle]") {
    const PiState pi = tuned_current_pi(20e-3, 500.0, 400.0);
    const double w = kTwoPi * 50.0;
    const auto out = grid_current_loop({10.0, 2.0}, {10.0, 2.0}, {325.0, 0.0}, w, 20e-3, pi, pi, 20e-6);
    CHECK(out.v_cmd.d == Approx(325.0 - w * 20e-3 * 2.0));
    CHECK(out.v_cmd.q == Approx(w * 20e-3 * 10.0));
    CHECK(out.d.integ == 0.0);
    CHECK(out.q.integ == 0.0);
}

TEST_CASE("tuned current PI gains", "[control][oracle]") {
    const PiState pi = tuned_current_pi(20e-3, 500.0, 400.0);
    CHECK(pi.kp == Approx(kTwoPi * 500.0 * 20e-3));
    CHECK(pi.ki == Approx(pi.kp * kTwoPi * 50.0));
    CHECK(pi.u_max == 400.0);
    CHECK(pi.u_min == -400.0);
}

TEST_CASE("standalone voltage loop holds m at zero error", "[control]") {
    const double f0 = 50.0, dt = 20e-6, v_rms = 230.0;
    StandaloneVoltageLoop loop(f0, dt, 0.6);
    for (int k = 0; k < 5000; ++k) {
        const double theta = loop.advance_theta();
        standalone_voltage_loop(loop, v_rms * std::numbers::sqrt2 * std::sin(theta), v_rms);
    }
    CHECK(loop.rms() == Approx(v_rms).epsilon(1e-3));
    CHECK(loop.m_index() == Approx(0.6).margin(2e-3));
}

TEST_CASE("standalone voltage loop raises m when the output is low", "[control]") {
    StandaloneVoltageLoop loop(50.0, 20e-6, 0.6);
    for (int k = 0; k < 2000; ++k) {
        const double theta = loop.advance_theta();
        loop.step(200.0 * std::numbers::sqrt2 * std::sin(theta), 230.0);
    }
    CHECK(loop.m_index() > 0.6);
    CHECK(loop.m_index() <= 1.0);
    CHECK_THROWS_AS(loop.step(1.0, 0.0), std::invalid_argument);
}
