#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "nvmag/sequences.hpp"

using namespace nvmag;
using Catch::Approx;

namespace {

constexpr double half_pi = std::numbers::pi / 2;

// Independent oracle: gamma * int B(t) s(t) dt with s = +1 before and -1
// after the refocusing instant, by composite Simpson on the in-phase sine.
double echo_phase_oracle(double b_ac, double t_phi, double gamma_hz_per_t) {
    const int n = 20000;
    const double h = t_phi / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double t = i * h;
        const double b = b_ac * std::sin(two_pi * t / t_phi);
        const double s = t < 0.5 * t_phi ? 1.0 : (t > 0.5 * t_phi ? -1.0 : 0.0);
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        sum += w * b * s;
    }
    return two_pi * gamma_hz_per_t * sum * h / 3.0;
}

SimulationOptions single_block() {
    SimulationOptions o;
    o.nuclear_projections = {0};
    return o;
}

AcField locked_field(double amplitude, double t_phi) { return AcField{amplitude, 1.0 / t_phi, 0.0, 0.0}; }

// phase recovered from p = (1 + cos(phi + phase)) / 2 at phase = pi/2
double phase_from_population(double p) { return std::asin(1.0 - 2.0 * p); }

}  // namespace

TEST_CASE("Hahn echo layout", "[sequences]") {
    const auto seq = hahn_echo(50e-6, 5e6, half_pi);
    REQUIRE(seq.elements.size() == 5);
    CHECK(seq.elements[0].duration_s == Approx(50e-9));
    CHECK(seq.elements[2].duration_s == Approx(100e-9));
    CHECK(seq.elements[4].duration_s == Approx(50e-9));
    CHECK(seq.elements[1].duration_s == Approx(25e-6));
    CHECK(seq.elements[3].duration_s == Approx(25e-6));
    CHECK(seq.elements[0].phase_rad == 0.0);
    CHECK(seq.elements[2].phase_rad == 0.0);
    CHECK(seq.elements[4].phase_rad == half_pi);
    CHECK(seq.elements[2].rotation_rad == Approx(std::numbers::pi));

    const auto padded = with_readout(seq, 100e-6, 160e-6);
    CHECK(padded.sequence_time_s == 160e-6);
    CHECK(padded.total_duration() == Approx(160e-6).epsilon(1e-12));
    CHECK(padded.total_of(ElementKind::laser) == Approx(100e-6));
    CHECK_NOTHROW(padded.validate());

    CHECK_THROWS_AS(hahn_echo(0.0, 5e6, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(hahn_echo(50e-6, 0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(hahn_echo(150e-9, 5e6, 0.0), std::invalid_argument);  // pi pulse longer than T_phi/2
    CHECK_THROWS_AS(with_readout(seq, 150e-6, 160e-6), std::invalid_argument);
}

TEST_CASE("analytic echo phase", "[sequences]") {
    CHECK(analytic_echo_phase(0.0, 50e-6, 28.7e9) == 0.0);
    const double one = analytic_echo_phase(1e-9, 50e-6, 28.7e9);
    CHECK(analytic_echo_phase(2e-9, 50e-6, 28.7e9) == Approx(2.0 * one).epsilon(1e-15));
    CHECK(one == Approx(5.74e-3).epsilon(1e-3));
    for (double b : {1e-10, 1e-9, 3e-8})
        CHECK(analytic_echo_phase(b, 50e-6, 28.7e9) == Approx(echo_phase_oracle(b, 50e-6, 28.7e9)).epsilon(1e-9));
}

TEST_CASE("population from phase", "[sequences]") {
    CHECK(population_from_phase(0.0, 0.0) == 1.0);
    CHECK(population_from_phase(0.0, half_pi) == Approx(0.5).margin(1e-15));
    CHECK(population_from_phase(std::numbers::pi, 0.0) == Approx(0.0).margin(1e-15));
}

TEST_CASE("ideal echo refocuses", "[sequences]") {
    const HamiltonianParams p;
    const auto seq = hahn_echo(50e-6, 5e6, 0.0);
    CHECK(simulate_sequence(seq, p, 5e6, {}, {}, {}, single_block()) == Approx(1.0).margin(1e-12));

    // any static offset during free evolution is refocused
    for (double offset : {1e-9, 1e-7, 3e-6}) {
        AcField f;
        f.static_offset_t = offset;
        CHECK(simulate_sequence(seq, p, 5e6, {}, f, {}, single_block()) == Approx(1.0).margin(1e-9));
    }
    // and so is a static offset on top of the locked sine
    const auto wp = hahn_echo(50e-6, 5e6, half_pi);
    AcField f = locked_field(2e-9, 50e-6);
    const double base = simulate_sequence(wp, p, 5e6, {}, f, {}, single_block());
    f.static_offset_t = 5e-7;
    CHECK(simulate_sequence(wp, p, 5e6, {}, f, {}, single_block()) == Approx(base).margin(1e-9));
}

TEST_CASE("simulated echo phase matches the analytic phase", "[sequences]") {
    const HamiltonianParams p;
    const auto seq = hahn_echo(50e-6, 5e6, half_pi);
    for (double b : {1e-10, 1e-9, 5e-9, 2e-8, 4e-8}) {
        const double expected = analytic_echo_phase(b, 50e-6, p.gamma_e_hz_per_t);
        REQUIRE(expected < 0.3);
        const double pop = simulate_sequence(seq, p, 5e6, {}, locked_field(b, 50e-6), {}, single_block());
        CHECK(pop == Approx(population_from_phase(expected, half_pi)).epsilon(1e-3));
        CHECK(phase_from_population(pop) == Approx(expected).epsilon(1e-2));
    }
}

TEST_CASE("free-evolution quadrature is converged", "[sequences]") {
    const HamiltonianParams p;
    const auto seq = hahn_echo(50e-6, 5e6, half_pi);
    SimulationOptions coarse = single_block(), fine = single_block();
    coarse.substeps_per_period = 64;
    fine.substeps_per_period = 128;
    const AcField f = locked_field(2e-8, 50e-6);
    const double phi_c = phase_from_population(simulate_sequence(seq, p, 5e6, {}, f, {}, coarse));
    const double phi_f = phase_from_population(simulate_sequence(seq, p, 5e6, {}, f, {}, fine));
    CHECK(std::abs(phi_c - phi_f) / phi_f < 1e-4);

    coarse.substeps_per_period = 32;
    CHECK_THROWS_AS(simulate_sequence(seq, p, 5e6, {}, f, {}, coarse), std::invalid_argument);
}

TEST_CASE("working point maximizes the slope", "[sequences]") {
    const HamiltonianParams p;
    const AcField f = locked_field(1e-10, 50e-6);
    const double dphi = analytic_echo_phase(1e-10, 50e-6, p.gamma_e_hz_per_t);
    auto slope = [&](double final_phase) {
        const auto seq = hahn_echo(50e-6, 5e6, final_phase);
        const double p0 = simulate_sequence(seq, p, 5e6, {}, {}, {}, single_block());
        const double p1 = simulate_sequence(seq, p, 5e6, {}, f, {}, single_block());
        return std::abs(p1 - p0) / dphi;
    };
    const double best = slope(half_pi);
    CHECK(best == Approx(0.5).epsilon(1e-3));
    for (double ph : {0.0, 0.3, 1.0, 1.4, 1.75, 2.2, 3.0}) CHECK(slope(ph) < best);
}

TEST_CASE("coherence decay scales the interference term", "[sequences]") {
    const HamiltonianParams p;
    const auto seq = hahn_echo(50e-6, 5e6, 0.0);
    const CoherenceDecay decay{100e-6, 1.0};
    CHECK(decay.delta(50e-6) == Approx(0.5));
    const double pop = simulate_sequence(seq, p, 5e6, {}, {}, decay, single_block());
    CHECK(pop == Approx(0.5 * (1.0 + std::exp(-0.5))).epsilon(1e-12));
    const CoherenceDecay gaussian{100e-6, 2.0};
    CHECK(gaussian.delta(50e-6) == Approx(0.25));
    CHECK(CoherenceDecay{}.envelope(1.0) == 1.0);
}

TEST_CASE("fast path agrees with the 9-dim model", "[sequences]") {
    const HamiltonianParams p;
    const auto seq = hahn_echo(50e-6, 5e6, half_pi);
    SimulationOptions fast = single_block();
    SimulationOptions full = single_block();
    full.full_hilbert_space = true;
    const AcField f = locked_field(1e-8, 50e-6);
    CHECK(simulate_sequence(seq, p, 5e6, {}, f, {}, full) ==
          Approx(simulate_sequence(seq, p, 5e6, {}, f, {}, fast)).margin(1e-6));

    SimulationOptions fast_all, full_all;
    full_all.full_hilbert_space = true;
    for (PulseErrors err : {PulseErrors{0.0, 0.0}, PulseErrors{0.01, 0.0}, PulseErrors{0.0, 3e3}, PulseErrors{-0.02, -5e4}}) {
        CHECK(simulate_sequence(seq, p, 5e6, err, {}, {}, full_all) ==
              Approx(simulate_sequence(seq, p, 5e6, err, {}, {}, fast_all)).margin(1e-6));
    }
}

TEST_CASE("pulse error response", "[sequences]") {
    const HamiltonianParams p;
    EchoConfig cfg;
    CHECK(pulse_error_delta_z(p, cfg, {}) == 0.0);

    const auto table = pulse_error_response({1e-4, 1e-3}, {10.0, 100.0}, p, cfg);
    auto slope = [](const std::vector<ErrorScanRow>& rows) {
        return std::log10(rows[1].delta_z / rows[0].delta_z) / std::log10(rows[1].error / rows[0].error);
    };
    CHECK(slope(table.amplitude_scan) == Approx(1.0).margin(0.05));
    CHECK(slope(table.frequency_scan) == Approx(1.0).margin(0.05));

    // amplitude errors shift both working points the same way, frequency errors do not
    EchoConfig mirrored = cfg;
    mirrored.final_phase_rad = -half_pi;
    const auto seq_p = hahn_echo(50e-6, 5e6, half_pi);
    const auto seq_m = hahn_echo(50e-6, 5e6, -half_pi);
    auto shift = [&](const PulseSequence& s, PulseErrors e) {
        return simulate_sequence(s, p, 5e6, e, {}, {}) - simulate_sequence(s, p, 5e6, {}, {}, {});
    };
    CHECK(shift(seq_p, {1e-3, 0.0}) == Approx(shift(seq_m, {1e-3, 0.0})).epsilon(1e-9));
    CHECK(shift(seq_p, {0.0, 100.0}) == Approx(-shift(seq_m, {0.0, 100.0})).epsilon(0.05));
}
