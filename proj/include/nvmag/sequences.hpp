#ifndef NVMAG_SEQUENCES_HPP
#define NVMAG_SEQUENCES_HPP

// Pulsed measurement sequences: the phase-locked Hahn echo, its analytic
// phase, and a propagator that runs a sequence through the spin model with
// constant microwave amplitude/frequency errors.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvmag/spin_model.hpp"

namespace nvmag {

enum class ElementKind { pulse, delay, laser };

struct SequenceElement {
    ElementKind kind = ElementKind::delay;
    double duration_s = 0.0;
    double phase_rad = 0.0;        // pulse only
    double rotation_rad = 0.0;     // pulse only, nominal rotation at the configured Rabi frequency
    double amplitude_scale = 1.0;  // pulse only
    std::string role;              // laser only, e.g. "readout"

    static SequenceElement pulse(double duration_s, double rotation_rad, double phase_rad) {
        return {ElementKind::pulse, duration_s, phase_rad, rotation_rad, 1.0, {}};
    }
    static SequenceElement delay(double duration_s) { return {ElementKind::delay, duration_s, 0.0, 0.0, 1.0, {}}; }
    static SequenceElement laser(double duration_s, std::string role) {
        return {ElementKind::laser, duration_s, 0.0, 0.0, 1.0, std::move(role)};
    }
};

struct PulseSequence {
    std::vector<SequenceElement> elements;
    double phase_time_s = 0.0;     // T_phi, total free evolution
    double sequence_time_s = 0.0;  // T_seq

    double total_duration() const {
        double t = 0.0;
        for (const auto& e : elements) t += e.duration_s;
        return t;
    }

    double total_of(ElementKind kind) const {
        double t = 0.0;
        for (const auto& e : elements)
            if (e.kind == kind) t += e.duration_s;
        return t;
    }

    void validate() const {
        for (const auto& e : elements) {
            if (!(e.duration_s > 0.0)) throw std::invalid_argument("PulseSequence: element duration must be > 0");
            if (e.kind == ElementKind::pulse && !(e.rotation_rad > 0.0 && e.rotation_rad <= two_pi + 1e-12))
                throw std::invalid_argument("PulseSequence: pulse rotation must be in (0, 2pi]");
        }
        const double required = phase_time_s + total_of(ElementKind::pulse) + total_of(ElementKind::laser);
        if (sequence_time_s < required * (1.0 - 1e-12))
            throw std::invalid_argument("PulseSequence: T_seq shorter than its contents");
    }
};

/// Oscillating test field along the NV axis. Its zero crossing (falling edge)
/// is locked to the centre of the refocusing pulse; phase_offset shifts it.
struct AcField {
    double amplitude_t = 0.0;
    double frequency_hz = 0.0;
    double phase_offset_rad = 0.0;
    double static_offset_t = 0.0;  // constant extra field during free evolution

    /// Field at time t measured from the refocusing pulse centre.
    double value(double t_from_refocus) const {
        return static_offset_t +
               amplitude_t * std::sin(two_pi * frequency_hz * t_from_refocus + std::numbers::pi + phase_offset_rad);
    }

    /// Exact mean of value() over [t0, t1].
    double mean(double t0, double t1) const {
        if (t1 <= t0) return value(t0);
        if (frequency_hz == 0.0 || amplitude_t == 0.0) return value(0.5 * (t0 + t1));
        const double w = two_pi * frequency_hz;
        const double phase = std::numbers::pi + phase_offset_rad;
        const double integral = (std::cos(w * t0 + phase) - std::cos(w * t1 + phase)) / w;
        return static_offset_t + amplitude_t * integral / (t1 - t0);
    }
};

/// Stretched-exponential coherence envelope exp(-(T_phi/T2)^k).
struct CoherenceDecay {
    double t2_s = 0.0;  // <= 0 disables decay
    double exponent = 1.0;

    double delta(double phase_time_s) const {
        if (t2_s <= 0.0) return 0.0;
        return std::pow(phase_time_s / t2_s, exponent);
    }
    double envelope(double phase_time_s) const { return std::exp(-delta(phase_time_s)); }
};

struct PulseErrors {
    double amplitude = 0.0;     // relative, Delta g
    double frequency_hz = 0.0;  // carrier offset, Delta f
};

/// (pi/2)_x - T_phi/2 - (pi)_x - T_phi/2 - (pi/2)_final_phase.
inline PulseSequence hahn_echo(double phase_time_s, double rabi_hz, double final_phase_rad) {
    if (!(phase_time_s > 0.0)) throw std::invalid_argument("hahn_echo: T_phi must be > 0");
    if (!(rabi_hz > 0.0)) throw std::invalid_argument("hahn_echo: rabi must be > 0");
    const double half_pi_s = 1.0 / (4.0 * rabi_hz);
    const double pi_s = 1.0 / (2.0 * rabi_hz);
    if (pi_s > 0.5 * phase_time_s) throw std::invalid_argument("hahn_echo: pulses longer than T_phi/2");

    PulseSequence seq;
    seq.phase_time_s = phase_time_s;
    seq.elements = {
        SequenceElement::pulse(half_pi_s, std::numbers::pi / 2, 0.0),
        SequenceElement::delay(0.5 * phase_time_s),
        SequenceElement::pulse(pi_s, std::numbers::pi, 0.0),
        SequenceElement::delay(0.5 * phase_time_s),
        SequenceElement::pulse(half_pi_s, std::numbers::pi / 2, final_phase_rad),
    };
    seq.sequence_time_s = seq.total_duration();
    return seq;
}

/// Appends a readout laser pulse and pads with a delay so the sequence lasts T_seq.
inline PulseSequence with_readout(PulseSequence seq, double laser_s, double sequence_time_s) {
    seq.elements.push_back(SequenceElement::laser(laser_s, "readout"));
    const double pad = sequence_time_s - seq.total_duration();
    if (pad < -1e-15) throw std::invalid_argument("with_readout: T_seq shorter than pulses plus laser");
    if (pad > 1e-15) seq.elements.push_back(SequenceElement::delay(pad));
    seq.sequence_time_s = sequence_time_s;
    seq.validate();
    return seq;
}

/// Closed-form echo phase for a phase-locked sine of period T_phi,
/// phi = (2/pi) * (2 pi gamma_e) * B_ac * T_phi.
inline double analytic_echo_phase(double b_ac_t, double phase_time_s, double gamma_e_hz_per_t) {
    return 2.0 / std::numbers::pi * two_pi * gamma_e_hz_per_t * b_ac_t * phase_time_s;
}

inline double population_from_phase(double phi_rad, double final_phase_rad) {
    return 0.5 * (1.0 + std::cos(phi_rad + final_phase_rad));
}

struct SimulationOptions {
    std::vector<int> nuclear_projections{-1, 0, 1};  // ensemble average, equal weights
    bool full_hilbert_space = false;                 // 9-dim model instead of the per-block fast path
    int substeps_per_period = 128;                   // free-evolution quadrature for the AC field
};

namespace detail {

// Time of the refocusing pulse centre: the first pulse with rotation pi, or
// the sequence midpoint when there is none.
inline double refocus_time(const PulseSequence& seq) {
    double t = 0.0;
    for (const auto& e : seq.elements) {
        if (e.kind == ElementKind::pulse && std::abs(e.rotation_rad - std::numbers::pi) < 1e-9)
            return t + 0.5 * e.duration_s;
        t += e.duration_s;
    }
    return 0.5 * seq.total_duration();
}

inline int substep_count(double duration_s, const AcField& field, int per_period) {
    if (field.amplitude_t == 0.0 || field.frequency_hz == 0.0) return 1;
    const double periods = duration_s * field.frequency_hz;
    return std::max(1, static_cast<int>(std::ceil(periods * per_period)));
}

inline double block_population(const PulseSequence& seq, const HamiltonianParams& p, double rabi_hz,
                               const PulseErrors& err, const AcField& field, int m_i,
                               const SimulationOptions& opt, double t_refocus) {
    DriveParams drive{rabi_hz, err.frequency_hz, err.amplitude, 0.0};
    const double detuning = block_detuning_hz(p, drive, m_i);
    const double gamma = p.gamma_e_hz_per_t;
    Vector2 psi(1.0, 0.0);
    double t = 0.0;
    for (const auto& e : seq.elements) {
        if (e.kind == ElementKind::pulse) {
            const double half_rabi = 0.5 * rabi_hz * e.amplitude_scale * (1.0 + err.amplitude);
            psi = two_level_propagator(half_rabi, e.phase_rad, detuning, e.duration_s) * psi;
        } else if (e.kind == ElementKind::delay) {
            // m_S = -1 picks up -gamma_e B(t) on top of the block detuning.
            const int steps = substep_count(e.duration_s, field, opt.substeps_per_period);
            const double h = e.duration_s / steps;
            double phase = 0.0;
            for (int k = 0; k < steps; ++k) {
                const double t0 = t + k * h - t_refocus;
                phase += (detuning - gamma * field.mean(t0, t0 + h)) * h;
            }
            psi(1) *= std::polar(1.0, -two_pi * phase);
        }
        t += e.duration_s;
    }
    return std::norm(psi(0));
}

inline double block_population_full(const PulseSequence& seq, const HamiltonianParams& p, double rabi_hz,
                                    const PulseErrors& err, const AcField& field, int m_i,
                                    const SimulationOptions& opt, double t_refocus) {
    const auto ops = build_operators();
    const Matrix9 zeeman = two_pi * (p.gamma_e_hz_per_t * ops.s_z + p.gamma_n_hz_per_t * ops.i_z);
    const Matrix9 free_h =
        drive_hamiltonian_rotating(p, {rabi_hz, err.frequency_hz, 0.0, 0.0}).diagonal().asDiagonal();
    Vector9 psi = basis_state(0, m_i);
    double t = 0.0;
    for (const auto& e : seq.elements) {
        if (e.kind == ElementKind::pulse) {
            const DriveParams d{rabi_hz * e.amplitude_scale, err.frequency_hz, err.amplitude, e.phase_rad};
            psi = evolve(psi, drive_hamiltonian_rotating(p, d), e.duration_s);
        } else if (e.kind == ElementKind::delay) {
            const int steps = substep_count(e.duration_s, field, opt.substeps_per_period);
            const double h = e.duration_s / steps;
            for (int k = 0; k < steps; ++k) {
                const double t0 = t + k * h - t_refocus;
                psi = evolve(psi, free_h + field.mean(t0, t0 + h) * zeeman, h);
            }
        }
        t += e.duration_s;
    }
    return std::norm(psi(basis_index(0, m_i)));
}

}  // namespace detail

/// Population of m_S = 0 after the microwave part of the sequence, averaged
/// over the configured nuclear projections, with the coherence envelope
/// applied to the interference term: p = 1/2 + e^{-delta} (p_coherent - 1/2).
inline double simulate_sequence(const PulseSequence& seq, const HamiltonianParams& p, double rabi_hz,
                                const PulseErrors& err, const AcField& field, const CoherenceDecay& decay,
                                const SimulationOptions& opt = {}) {
    p.validate();
    if (opt.nuclear_projections.empty()) throw std::invalid_argument("simulate_sequence: no nuclear projections");
    if (opt.substeps_per_period < 64) throw std::invalid_argument("simulate_sequence: need >= 64 substeps per period");
    const double t_refocus = detail::refocus_time(seq);
    double sum = 0.0;
    for (int m_i : opt.nuclear_projections) {
        if (m_i < -1 || m_i > 1) throw std::invalid_argument("simulate_sequence: m_I must be in {-1, 0, 1}");
        sum += opt.full_hilbert_space
                   ? detail::block_population_full(seq, p, rabi_hz, err, field, m_i, opt, t_refocus)
                   : detail::block_population(seq, p, rabi_hz, err, field, m_i, opt, t_refocus);
    }
    const double coherent = sum / static_cast<double>(opt.nuclear_projections.size());
    return 0.5 + decay.envelope(seq.phase_time_s) * (coherent - 0.5);
}

struct EchoConfig {
    double phase_time_s = 50e-6;
    double rabi_hz = 5e6;
    double final_phase_rad = std::numbers::pi / 2;
    CoherenceDecay decay{};
    SimulationOptions options{};
};

/// |p(Delta g, Delta f) - p(0, 0)| at zero AC field for the echo in cfg.
inline double pulse_error_delta_z(const HamiltonianParams& p, const EchoConfig& cfg, const PulseErrors& err) {
    const auto seq = hahn_echo(cfg.phase_time_s, cfg.rabi_hz, cfg.final_phase_rad);
    const double ideal = simulate_sequence(seq, p, cfg.rabi_hz, {}, {}, cfg.decay, cfg.options);
    const double actual = simulate_sequence(seq, p, cfg.rabi_hz, err, {}, cfg.decay, cfg.options);
    return std::abs(actual - ideal);
}

struct ErrorScanRow {
    double error;  // Delta g (relative) or Delta f (Hz)
    double delta_z;
};

struct PulseErrorTable {
    std::vector<ErrorScanRow> amplitude_scan;  // Delta f = 0
    std::vector<ErrorScanRow> frequency_scan;  // Delta g = 0
};

/// The two limiting scans of the pulse-error response.
inline PulseErrorTable pulse_error_response(const std::vector<double>& amplitude_errors,
                                            const std::vector<double>& frequency_errors_hz,
                                            const HamiltonianParams& p, const EchoConfig& cfg) {
    for (double g : amplitude_errors)
        if (!std::isfinite(g)) throw std::invalid_argument("pulse_error_response: non-finite amplitude error");
    for (double f : frequency_errors_hz)
        if (!std::isfinite(f)) throw std::invalid_argument("pulse_error_response: non-finite frequency error");

    const auto seq = hahn_echo(cfg.phase_time_s, cfg.rabi_hz, cfg.final_phase_rad);
    const double ideal = simulate_sequence(seq, p, cfg.rabi_hz, {}, {}, cfg.decay, cfg.options);
    PulseErrorTable table;
    for (double g : amplitude_errors) {
        const double z = simulate_sequence(seq, p, cfg.rabi_hz, {g, 0.0}, {}, cfg.decay, cfg.options);
        table.amplitude_scan.push_back({g, std::abs(z - ideal)});
    }
    for (double f : frequency_errors_hz) {
        const double z = simulate_sequence(seq, p, cfg.rabi_hz, {0.0, f}, {}, cfg.decay, cfg.options);
        table.frequency_scan.push_back({f, std::abs(z - ideal)});
    }
    return table;
}

}  // namespace nvmag

#endif
