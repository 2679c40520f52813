#ifndef NVMAG_EXPERIMENTS_HPP
#define NVMAG_EXPERIMENTS_HPP

// Scenario runners: AC sweep, scaling experiment, pulse-error scan, noise
// budget, plus table output and run manifests.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <openssl/evp.h>

#include "nvmag/analysis.hpp"
#include "nvmag/readout.hpp"
#include "nvmag/scenario.hpp"
#include "nvmag/sequences.hpp"

namespace nvmag {

inline constexpr const char* tool_version = "0.3.0";

// ---------------------------------------------------------------------------
// Seeds and parallel loops
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for a sub-stream; channel 0 is the per-sequence readout stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t channel, std::uint64_t index = 0) {
    return splitmix64(splitmix64(master ^ (channel * 0xd1b54a32d192ed03ULL)) + index);
}

enum SeedChannel : std::uint64_t { seed_readout = 0, seed_laser = 1, seed_mw_amplitude = 2, seed_mw_frequency = 3 };

/// Runs body(i) for i in [0, n) over contiguous blocks on `threads` workers.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                const std::size_t lo = t * chunk;
                const std::size_t hi = std::min(n, lo + chunk);
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Sequence pieces
// ---------------------------------------------------------------------------

inline PulseSequence scenario_sequence(const Scenario& s, double final_phase_rad) {
    return with_readout(hahn_echo(s.sequence.phase_time_s, s.sequence.rabi_hz, final_phase_rad), s.readout.laser_s,
                        s.sequence.sequence_time_s);
}

/// Offset of the readout laser pulse from the start of the sequence.
inline double laser_offset(const PulseSequence& seq) {
    double t = 0.0;
    for (const auto& e : seq.elements) {
        if (e.kind == ElementKind::laser) return t;
        t += e.duration_s;
    }
    throw std::invalid_argument("laser_offset: sequence has no laser pulse");
}

inline double sequence_population(const Scenario& s, double final_phase_rad, const PulseErrors& err,
                                  const AcField& field) {
    const auto seq = hahn_echo(s.sequence.phase_time_s, s.sequence.rabi_hz, final_phase_rad);
    return simulate_sequence(seq, s.hamiltonian, s.sequence.rabi_hz, err, field, s.sequence.decay, s.sequence.options);
}

/// Signals of one sequence: S_A on raw counts, S_A and S_B on the detector output.
struct SequenceSignals {
    double a_raw = 0.0;
    double a_ref = 0.0;
    double b = 0.0;
};

inline SequenceSignals signals_from_record(const ReadoutRecord& rec, const ReadoutConfig& cfg) {
    const auto net = detector_output(rec, cfg);
    return {extract_signal(rec.signal, Scheme::A, cfg), extract_signal(net, Scheme::A, cfg),
            extract_signal(net, Scheme::B, cfg)};
}

inline SequenceSignals noiseless_signals(double p_bright, const ReadoutConfig& cfg) {
    auto quiet = cfg;
    quiet.shot_noise = false;
    std::mt19937_64 unused(0);
    return signals_from_record(simulate_record(p_bright, quiet, {}, unused), quiet);
}

/// d S / d B_ac for a scheme, by central difference of the noiseless
/// pipeline around zero field. For C and D the second sequence uses the
/// reference final phase.
inline double signal_response_per_tesla(const Scenario& s, Scheme scheme) {
    const double phi = 1e-3;
    const double b = phi / (4.0 * s.hamiltonian.gamma_e_hz_per_t * s.sequence.phase_time_s);
    auto value = [&](double amplitude) {
        AcField field = s.ac_field;
        field.amplitude_t = amplitude;
        const auto one = noiseless_signals(sequence_population(s, s.sequence.final_phase_rad, {}, field), s.readout);
        if (!spans_two_sequences(scheme)) return scheme == Scheme::A ? one.a_raw : one.b;
        const auto two =
            noiseless_signals(sequence_population(s, s.sequence.reference_final_phase_rad, {}, field), s.readout);
        return scheme == Scheme::C ? one.a_ref - two.a_ref : one.b - two.b;
    };
    return (value(b) - value(-b)) / (2.0 * b);
}

// ---------------------------------------------------------------------------
// Noise inputs
// ---------------------------------------------------------------------------

/// Per-sequence MW errors and the laser intensity trace for n sequences,
/// generated up front from the master seed.
struct NoiseInputs {
    std::vector<double> amplitude_error;  // Delta g per sequence
    std::vector<double> frequency_error;  // Delta f per sequence (Hz)
    NoiseTrace laser;
    bool mw_active = false;
};

inline NoiseInputs generate_noise(const Scenario& s, std::size_t n_sequences, std::uint64_t seed) {
    NoiseInputs out;
    const double t_seq = s.sequence.sequence_time_s;
    const double duration = static_cast<double>(std::max<std::size_t>(n_sequences, 2)) * t_seq;
    auto per_sequence = [&](const ChannelNoise& ch, NoiseChannel c, std::uint64_t channel) {
        if (ch.is_zero()) return std::vector<double>(n_sequences, 0.0);
        auto trace = synthesize_trace(ch, duration, t_seq, derive_seed(seed, channel), c).samples;
        trace.resize(n_sequences);
        return trace;
    };
    out.amplitude_error = per_sequence(s.noise.mw_amplitude, NoiseChannel::mw_amplitude, seed_mw_amplitude);
    out.frequency_error = per_sequence(s.noise.mw_frequency, NoiseChannel::mw_frequency, seed_mw_frequency);
    out.mw_active = !s.noise.mw_amplitude.is_zero() || !s.noise.mw_frequency.is_zero();
    if (!s.noise.laser.is_zero()) {
        const double dt = s.noise.laser_dt_s;
        out.laser = synthesize_trace(s.noise.laser, duration + dt, dt, derive_seed(seed, seed_laser),
                                     NoiseChannel::laser_intensity);
    }
    return out;
}

/// Relative laser intensity per bin of the laser pulse of sequence i
/// (zero-order hold of the trace). Empty when there is no laser noise.
inline std::vector<double> laser_noise_for(const NoiseInputs& noise, const ReadoutConfig& cfg, double t_pulse_start) {
    if (noise.laser.samples.empty()) return {};
    const std::size_t bins = cfg.bins_per_sequence();
    std::vector<double> eps(bins);
    const auto& tr = noise.laser;
    for (std::size_t b = 0; b < bins; ++b) {
        const double t = t_pulse_start + (static_cast<double>(b) + 0.5) * cfg.bin_width_s;
        const auto k = std::min(tr.samples.size() - 1, static_cast<std::size_t>(t / tr.dt_s));
        eps[b] = tr.samples[k];
    }
    return eps;
}

// ---------------------------------------------------------------------------
// Sequence Monte Carlo
// ---------------------------------------------------------------------------

/// Raw per-sequence signals. Even sequences use the final phase, odd ones the
/// reference final phase, so pairs (2j, 2j+1) form the C and D signals.
struct SequenceRun {
    std::vector<SequenceSignals> signals;
    std::vector<double> population;
    bool clipped = false;
};

inline SequenceRun run_sequences(const Scenario& s, std::size_t n, std::uint64_t seed, const AcField& field,
                                 unsigned threads) {
    const auto noise = generate_noise(s, n, seed);
    const double phases[2] = {s.sequence.final_phase_rad, s.sequence.reference_final_phase_rad};
    double cached[2] = {0.0, 0.0};
    if (!noise.mw_active)
        for (int k = 0; k < 2; ++k) cached[k] = sequence_population(s, phases[k], {}, field);
    const double offset = laser_offset(scenario_sequence(s, phases[0]));

    SequenceRun run;
    run.signals.resize(n);
    run.population.resize(n);
    std::vector<char> clipped(n, 0);
    parallel_for(n, threads, [&](std::size_t i) {
        const int k = static_cast<int>(i % 2);
        double p = cached[k];
        if (noise.mw_active)
            p = sequence_population(s, phases[k], {noise.amplitude_error[i], noise.frequency_error[i]}, field);
        p = std::clamp(p, 0.0, 1.0);
        const double t0 = static_cast<double>(i) * s.sequence.sequence_time_s + offset;
        const auto eps = laser_noise_for(noise, s.readout, t0);
        std::mt19937_64 rng(derive_seed(seed, seed_readout, i));
        bool flag = false;
        const auto rec = simulate_record(p, s.readout, eps, rng, &flag);
        run.signals[i] = signals_from_record(rec, s.readout);
        run.population[i] = p;
        clipped[i] = flag;
    });
    run.clipped = std::any_of(clipped.begin(), clipped.end(), [](char c) { return c != 0; });
    return run;
}

struct SchemeSeries {
    Scheme scheme = Scheme::A;
    double spacing_s = 0.0;
    std::vector<double> values;
};

/// S_A and S_B use every sequence (spacing T_seq); S_C and S_D use the pairs
/// (spacing 2 T_seq).
inline SchemeSeries series_for(const SequenceRun& run, Scheme scheme, double t_seq) {
    SchemeSeries out{scheme, spans_two_sequences(scheme) ? 2.0 * t_seq : t_seq, {}};
    const auto& sg = run.signals;
    switch (scheme) {
        case Scheme::A:
            for (const auto& v : sg) out.values.push_back(v.a_raw);
            break;
        case Scheme::B:
            for (const auto& v : sg) out.values.push_back(v.b);
            break;
        case Scheme::C:
            for (std::size_t j = 0; j + 1 < sg.size(); j += 2) out.values.push_back(sg[j].a_ref - sg[j + 1].a_ref);
            break;
        case Scheme::D:
            for (std::size_t j = 0; j + 1 < sg.size(); j += 2) out.values.push_back(sg[j].b - sg[j + 1].b);
            break;
    }
    return out;
}

inline double sample_std(const std::vector<double>& x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

inline double mean_of(const std::vector<double>& x) {
    double sum = 0.0;
    for (double v : x) sum += v;
    return sum / static_cast<double>(x.size());
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct SchemeScaling {
    SchemeSeries series;
    double response_per_t = 0.0;
    ScalingCurve allan;
    ScalingCurve std_dev;
};

struct ScalingResult {
    std::vector<SchemeScaling> schemes;
    std::vector<double> a_referenced;  // S_A on the detector output, every sequence
    bool clipped = false;

    const SchemeScaling& get(Scheme s) const {
        for (const auto& x : schemes)
            if (x.series.scheme == s) return x;
        throw std::invalid_argument(std::string("scheme not in result: ") + to_char(s));
    }
};

/// n_sequences consecutive evaluations at the working point with the AC field
/// switched off.
inline ScalingResult run_scaling_experiment(const Scenario& s, unsigned threads = 1) {
    AcField off = s.ac_field;
    off.amplitude_t = 0.0;
    off.static_offset_t = 0.0;
    const auto run = run_sequences(s, s.n_sequences, s.seed, off, threads);
    ScalingResult out;
    out.clipped = run.clipped;
    for (const auto& v : run.signals) out.a_referenced.push_back(v.a_ref);
    for (Scheme sc : s.schemes) {
        SchemeScaling x;
        x.series = series_for(run, sc, s.sequence.sequence_time_s);
        x.response_per_t = signal_response_per_tesla(s, sc);
        const auto grid = block_time_grid(x.series.values.size(), x.series.spacing_s, 10);
        x.allan = allan_deviation(x.series.values, x.series.spacing_s, grid);
        x.std_dev = std_vs_time(x.series.values, x.series.spacing_s, grid);
        out.schemes.push_back(std::move(x));
    }
    return out;
}

struct SweepRow {
    double amplitude_t = 0.0;
    double phase_rad = 0.0;   // analytic echo phase
    double population = 0.0;  // simulated, first sequence, noiseless
    std::vector<double> mean_signal;  // per scheme, same order as Scenario::schemes
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<double> modulation_amplitude;  // fitted S = c + a sin(phi), per scheme
};

inline SweepResult run_ac_sweep(const Scenario& s, const std::vector<double>& amplitudes_t, unsigned threads = 1) {
    if (amplitudes_t.empty()) throw ConfigError("sweep.amplitudes_T is empty");
    if (s.sweep.n_sequences < 2) throw ConfigError("sweep.n_sequences must be >= 2 for the paired schemes");
    SweepResult out;
    for (double amp : amplitudes_t) {
        AcField field = s.ac_field;
        field.amplitude_t = amp;
        const auto run = run_sequences(s, s.sweep.n_sequences, s.seed, field, threads);
        SweepRow row;
        row.amplitude_t = amp;
        row.phase_rad = analytic_echo_phase(amp, s.sequence.phase_time_s, s.hamiltonian.gamma_e_hz_per_t);
        row.population = sequence_population(s, s.sequence.final_phase_rad, {}, field);
        for (Scheme sc : s.schemes) {
            if (spans_two_sequences(sc)) {
                row.mean_signal.push_back(mean_of(series_for(run, sc, s.sequence.sequence_time_s).values));
            } else {
                // first-phase sequences only
                std::vector<double> v;
                for (std::size_t i = 0; i < run.signals.size(); i += 2)
                    v.push_back(sc == Scheme::A ? run.signals[i].a_raw : run.signals[i].b);
                row.mean_signal.push_back(mean_of(v));
            }
        }
        out.rows.push_back(std::move(row));
    }
    // linear least squares in sin(phi)
    for (std::size_t k = 0; k < s.schemes.size(); ++k) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(out.rows.size());
        for (const auto& r : out.rows) {
            const double x = std::sin(r.phase_rad);
            sx += x;
            sy += r.mean_signal[k];
            sxx += x * x;
            sxy += x * r.mean_signal[k];
        }
        const double denom = n * sxx - sx * sx;
        out.modulation_amplitude.push_back(denom > 0.0 ? (n * sxy - sx * sy) / denom : 0.0);
    }
    return out;
}

struct ErrorScalingResult {
    PulseErrorTable table;
    std::optional<double> amplitude_slope;
    std::optional<double> frequency_slope;
    double delta_z_at_zero = 0.0;
};

inline std::optional<double> table_slope(const std::vector<ErrorScanRow>& rows) {
    ScalingCurve c;
    for (const auto& r : rows) {
        if (r.error > 0.0 && r.delta_z > 0.0) {
            c.tau_s.push_back(r.error);
            c.deviation.push_back(r.delta_z);
        }
    }
    if (c.tau_s.size() < 3) return std::nullopt;
    return fit_log_slope(c, c.tau_s.front(), c.tau_s.back()).slope;
}

inline ErrorScalingResult run_error_scaling(const Scenario& s, const std::vector<double>& dg,
                                            const std::vector<double>& df) {
    EchoConfig cfg{s.sequence.phase_time_s, s.sequence.rabi_hz, s.sequence.final_phase_rad, s.sequence.decay,
                   s.sequence.options};
    ErrorScalingResult out;
    out.table = pulse_error_response(dg, df, s.hamiltonian, cfg);
    out.amplitude_slope = table_slope(out.table.amplitude_scan);
    out.frequency_slope = table_slope(out.table.frequency_scan);
    out.delta_z_at_zero = pulse_error_delta_z(s.hamiltonian, cfg, {});
    return out;
}

/// Sensitivity of S_B to the per-sequence MW errors, by one-sided difference.
struct NoiseCoefficients {
    double laser = 0.0;         // S_A raw per unit relative intensity
    double laser_referenced = 0.0;  // S_B per unit relative intensity with the reference on
    double mw_amplitude = 0.0;  // S_B per unit Delta g
    double mw_frequency = 0.0;  // S_B per Hz of Delta f
};

inline NoiseCoefficients noise_coefficients(const Scenario& s) {
    NoiseCoefficients k;
    const double phase = s.sequence.final_phase_rad;
    const double p0 = sequence_population(s, phase, {}, {});
    const auto base = noiseless_signals(p0, s.readout);
    k.laser = std::abs(base.a_raw);
    k.laser_referenced = s.readout.reference_enabled ? std::abs(base.b) : std::abs(base.a_raw);
    const double dg = 1e-4, df = 10.0;
    k.mw_amplitude = std::abs(noiseless_signals(sequence_population(s, phase, {dg, 0.0}, {}), s.readout).b - base.b) / dg;
    k.mw_frequency = std::abs(noiseless_signals(sequence_population(s, phase, {0.0, df}, {}), s.readout).b - base.b) / df;
    return k;
}

struct BudgetResult {
    std::vector<double> freq_hz;
    // cumulative RSS from 1/T_seq downward, native units
    std::vector<double> laser_native, mw_amplitude_native, mw_frequency_native;
    // the same in S_B signal units
    std::vector<double> laser_signal, mw_amplitude_signal, mw_frequency_signal;
    // scheme-D filtered, S_D signal units
    std::vector<double> laser_filtered, mw_amplitude_filtered, mw_frequency_filtered, total_filtered;
    double sigma1_b = 0.0;
    double sigma1_d = 0.0;
    NoiseCoefficients coefficients;
};

inline BudgetResult run_noise_budget(const Scenario& s, unsigned threads = 1) {
    BudgetResult out;
    const double t_seq = s.sequence.sequence_time_s;
    const double f_ref = 1.0 / t_seq;
    out.freq_hz = log_grid(s.budget.f_low_hz, f_ref, s.budget.points);
    out.coefficients = noise_coefficients(s);
    const auto& k = out.coefficients;

    const auto window = window_for_signal(Scheme::D, s.readout.laser_s, s.readout.window_s, t_seq);
    auto laser_filter = [&](double w) { return normalized_filter(window, s.readout.window_s, w); };
    // MW errors are constant over a sequence, so only the pair difference filters them
    auto pair_filter = [&](double w) { return 2.0 * std::abs(std::sin(0.5 * w * t_seq)); };

    auto density_of = [](const ChannelNoise& ch) { return [&ch](double x) { return ch.density(x); }; };
    auto exact_or_quadrature = [&](const ChannelNoise& ch, std::vector<double>& native, std::vector<double>& signal,
                                   double coeff) {
        if (!ch.table) {
            for (double f : out.freq_hz) {
                const double v = cumulative_rss(ch.model, f, f_ref);
                native.push_back(v);
                signal.push_back(coeff * v);
            }
        } else {
            for (double f : out.freq_hz) {
                const double v = cumulative_rss(*ch.table, f, f_ref);
                native.push_back(v);
                signal.push_back(coeff * v);
            }
        }
    };
    exact_or_quadrature(s.noise.laser, out.laser_native, out.laser_signal, k.laser);
    exact_or_quadrature(s.noise.mw_amplitude, out.mw_amplitude_native, out.mw_amplitude_signal, k.mw_amplitude);
    exact_or_quadrature(s.noise.mw_frequency, out.mw_frequency_native, out.mw_frequency_signal, k.mw_frequency);

    for (double f : out.freq_hz) {
        const double l = k.laser_referenced * std::sqrt(filtered_variance(density_of(s.noise.laser), laser_filter, f, f_ref));
        const double a = k.mw_amplitude * std::sqrt(filtered_variance(density_of(s.noise.mw_amplitude), pair_filter, f, f_ref));
        const double q = k.mw_frequency * std::sqrt(filtered_variance(density_of(s.noise.mw_frequency), pair_filter, f, f_ref));
        out.laser_filtered.push_back(l);
        out.mw_amplitude_filtered.push_back(a);
        out.mw_frequency_filtered.push_back(q);
        out.total_filtered.push_back(std::sqrt(l * l + a * a + q * q));
    }

    // sigma_1 from a short shot-noise-only run
    Scenario quiet = s;
    quiet.noise.laser = ChannelNoise{{NoiseChannel::laser_intensity}};
    quiet.noise.mw_amplitude = ChannelNoise{{NoiseChannel::mw_amplitude}};
    quiet.noise.mw_frequency = ChannelNoise{{NoiseChannel::mw_frequency}};
    const std::size_t n = s.budget.sigma1_sequences + s.budget.sigma1_sequences % 2;
    const auto run = run_sequences(quiet, std::max<std::size_t>(n, 4), derive_seed(s.seed, 7), AcField{}, threads);
    out.sigma1_b = sample_std(series_for(run, Scheme::B, t_seq).values);
    out.sigma1_d = sample_std(series_for(run, Scheme::D, t_seq).values);
    return out;
}

// ---------------------------------------------------------------------------
// Photon-rate calibration
// ---------------------------------------------------------------------------

/// Shot-noise-limited sensitivity (T/sqrt(Hz)) of a scheme at the configured
/// photon rates, from the Poisson variance of the window sums.
inline double shot_noise_floor(const Scenario& s, Scheme scheme) {
    const auto& cfg = s.readout;
    const double p0 = sequence_population(s, s.sequence.final_phase_rad, {}, {});
    const auto rates = rate_trajectory(p0, cfg);
    const auto bins = static_cast<std::size_t>(std::llround(cfg.window_s / cfg.bin_width_s));
    double first = 0.0, last = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        first += rates[b] * cfg.bin_width_s;
        last += rates[rates.size() - bins + b] * cfg.bin_width_s;
    }
    const bool ref = cfg.reference_enabled;
    const double ref_counts = ref ? cfg.reference_ratio * cfg.reference_ratio * cfg.reference_rate_hz * cfg.window_s : 0.0;
    const double norm = cfg.window_s * cfg.photon_rate_hz;
    double var = 0.0;
    switch (scheme) {
        case Scheme::A: var = first; break;
        case Scheme::B: var = first + last + 2.0 * ref_counts; break;
        case Scheme::C: var = 2.0 * (first + ref_counts); break;
        case Scheme::D: var = 2.0 * (first + last + 2.0 * ref_counts); break;
    }
    const double sigma = std::sqrt(var) / norm;
    const double spacing = spans_two_sequences(scheme) ? 2.0 * s.sequence.sequence_time_s : s.sequence.sequence_time_s;
    return sigma * std::sqrt(spacing) / std::abs(signal_response_per_tesla(s, scheme));
}

/// Photon rate (signal and reference channel) giving the target shot-noise
/// floor for the scheme. The floor scales as R0^{-1/2}.
inline double calibrated_photon_rate(const Scenario& s, Scheme scheme, double target_t_per_sqrt_hz) {
    if (!(target_t_per_sqrt_hz > 0.0)) throw std::invalid_argument("calibrated_photon_rate: target must be > 0");
    const double floor = shot_noise_floor(s, scheme);
    const double ratio = floor / target_t_per_sqrt_hz;
    return s.readout.photon_rate_hz * ratio * ratio;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Comma-separated table with a header row.
class Table {
public:
    explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<std::string> row) {
        if (row.size() != header_.size()) throw std::logic_error("Table: column count mismatch");
        rows_.push_back(std::move(row));
    }
    void add_numbers(const std::vector<double>& row) {
        std::vector<std::string> cells;
        for (double v : row) cells.push_back(format_number(v));
        add(std::move(cells));
    }

    std::string str() const {
        std::string out;
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ',';
                out += cells[i];
            }
            out += '\n';
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

struct ManifestEntry {
    std::string file;
    std::string sha256;
    std::size_t bytes = 0;
};

struct RunManifest {
    std::string command;
    std::string scenario_name;
    std::string scenario_sha256;
    std::uint64_t seed = 0;
    std::string version = tool_version;
    std::string started_utc;
    std::string finished_utc;
    std::vector<ManifestEntry> files;

    nlohmann::json to_json() const {
        nlohmann::json f = nlohmann::json::array();
        for (const auto& e : files) f.push_back({{"file", e.file}, {"sha256", e.sha256}, {"bytes", e.bytes}});
        return {{"command", command},         {"scenario", scenario_name}, {"scenario_sha256", scenario_sha256},
                {"seed", seed},               {"version", version},        {"started_utc", started_utc},
                {"finished_utc", finished_utc}, {"files", f}};
    }
};

inline std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Collects output files in one directory and writes manifest.json last.
class OutputWriter {
public:
    OutputWriter(std::filesystem::path dir, const Scenario& s, std::string command) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
        manifest_.command = std::move(command);
        manifest_.scenario_name = s.name;
        manifest_.scenario_sha256 = sha256_hex(serialize_scenario(s));
        manifest_.seed = s.seed;
        manifest_.started_utc = utc_now();
    }

    void write(const std::string& name, const std::string& content) {
        std::ofstream out(dir_ / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
        out << content;
        if (!out) throw std::runtime_error("write failed: " + (dir_ / name).string());
        manifest_.files.push_back({name, sha256_hex(content), content.size()});
    }

    const RunManifest& finish() {
        manifest_.finished_utc = utc_now();
        std::ofstream out(dir_ / "manifest.json");
        out << manifest_.to_json().dump(2) << "\n";
        return manifest_;
    }

    const RunManifest& manifest() const { return manifest_; }

private:
    std::filesystem::path dir_;
    RunManifest manifest_;
};

inline std::string scheme_name(Scheme s) { return std::string("S_") + to_char(s); }

inline void write_scaling(OutputWriter& w, const ScalingResult& r) {
    Table curves({"scheme", "estimator", "tau_s", "deviation", "deviation_T"});
    Table fits({"scheme", "response_per_T", "sigma1", "slope_first_decade", "slope_last_decade"});
    for (const auto& x : r.schemes) {
        Table series({"index", "time_s", "value"});
        for (std::size_t i = 0; i < x.series.values.size(); ++i)
            series.add({std::to_string(i), format_number(static_cast<double>(i) * x.series.spacing_s),
                        format_number(x.series.values[i])});
        w.write(std::string("series_") + to_char(x.series.scheme) + ".csv", series.str());
        for (const auto* c : {&x.allan, &x.std_dev})
            for (std::size_t i = 0; i < c->tau_s.size(); ++i)
                curves.add({scheme_name(x.series.scheme), std::string(to_string(c->estimator)),
                            format_number(c->tau_s[i]), format_number(c->deviation[i]),
                            format_number(c->deviation[i] / std::abs(x.response_per_t))});
        auto slope = [&](bool last) -> std::string {
            const auto& t = x.std_dev.tau_s;
            if (t.size() < 3) return "nan";
            const double lo = last ? t.back() / 10.0 : t.front();
            const double hi = last ? t.back() : t.front() * 10.0;
            try {
                return format_number(fit_log_slope(x.std_dev, lo, hi).slope);
            } catch (const std::invalid_argument&) {
                return "nan";
            }
        };
        fits.add({scheme_name(x.series.scheme), format_number(x.response_per_t),
                  format_number(x.std_dev.deviation.empty() ? 0.0 : x.std_dev.deviation.front()), slope(false),
                  slope(true)});
    }
    w.write("scaling.csv", curves.str());
    w.write("scaling_fits.csv", fits.str());
}

inline void write_sweep(OutputWriter& w, const Scenario& s, const SweepResult& r) {
    std::vector<std::string> header{"amplitude_T", "phase_rad", "population"};
    for (Scheme sc : s.schemes) header.push_back(scheme_name(sc));
    Table t(header);
    for (const auto& row : r.rows) {
        std::vector<double> v{row.amplitude_t, row.phase_rad, row.population};
        v.insert(v.end(), row.mean_signal.begin(), row.mean_signal.end());
        t.add_numbers(v);
    }
    w.write("sweep.csv", t.str());
    Table fit({"scheme", "modulation_amplitude"});
    for (std::size_t k = 0; k < s.schemes.size(); ++k)
        fit.add({scheme_name(s.schemes[k]), format_number(r.modulation_amplitude[k])});
    w.write("sweep_fit.csv", fit.str());
}

inline void write_error_scaling(OutputWriter& w, const ErrorScalingResult& r) {
    Table a({"delta_g", "delta_z"});
    for (const auto& row : r.table.amplitude_scan) a.add_numbers({row.error, row.delta_z});
    w.write("error_scaling_amplitude.csv", a.str());
    Table f({"delta_f_Hz", "delta_z"});
    for (const auto& row : r.table.frequency_scan) f.add_numbers({row.error, row.delta_z});
    w.write("error_scaling_frequency.csv", f.str());
    Table fits({"quantity", "value"});
    auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("nan"); };
    fits.add({"slope_delta_g", opt(r.amplitude_slope)});
    fits.add({"slope_delta_f", opt(r.frequency_slope)});
    fits.add({"delta_z_at_zero", format_number(r.delta_z_at_zero)});
    w.write("error_scaling_fits.csv", fits.str());
}

inline void write_budget(OutputWriter& w, const BudgetResult& r) {
    Table u({"f_Hz", "laser_rel", "mw_amplitude_rel", "mw_frequency_Hz", "laser_signal", "mw_amplitude_signal",
             "mw_frequency_signal"});
    for (std::size_t i = 0; i < r.freq_hz.size(); ++i)
        u.add_numbers({r.freq_hz[i], r.laser_native[i], r.mw_amplitude_native[i], r.mw_frequency_native[i],
                       r.laser_signal[i], r.mw_amplitude_signal[i], r.mw_frequency_signal[i]});
    w.write("budget_unfiltered.csv", u.str());
    Table d({"f_Hz", "laser_signal", "mw_amplitude_signal", "mw_frequency_signal", "total_signal", "sigma1_D"});
    for (std::size_t i = 0; i < r.freq_hz.size(); ++i)
        d.add_numbers({r.freq_hz[i], r.laser_filtered[i], r.mw_amplitude_filtered[i], r.mw_frequency_filtered[i],
                       r.total_filtered[i], r.sigma1_d});
    w.write("budget_filtered_D.csv", d.str());
    Table c({"quantity", "value"});
    c.add({"sigma1_B", format_number(r.sigma1_b)});
    c.add({"sigma1_D", format_number(r.sigma1_d)});
    c.add({"coeff_laser_per_rel", format_number(r.coefficients.laser)});
    c.add({"coeff_laser_referenced_per_rel", format_number(r.coefficients.laser_referenced)});
    c.add({"coeff_mw_amplitude_per_rel", format_number(r.coefficients.mw_amplitude)});
    c.add({"coeff_mw_frequency_per_Hz", format_number(r.coefficients.mw_frequency)});
    w.write("budget_summary.csv", c.str());
}

}  // namespace nvmag

#endif
