#ifndef NVMAG_READOUT_HPP
#define NVMAG_READOUT_HPP

// Photon-level readout: spin-dependent fluorescence during the laser pulse,
// Poisson counting with multiplicative laser noise, the reference-beam
// difference detector, and extraction of the S_A..S_D signals.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "nvmag/noise_filters.hpp"

namespace nvmag {

struct ReadoutConfig {
    double photon_rate_hz = 1e12;  // steady-state rate R0 on the signal channel
    double contrast = 0.04;        // fluorescence dip of m_S = -1 relative to m_S = 0
    double repol_time_s = 1e-6;
    double bin_width_s = 1e-6;
    bool reference_enabled = true;
    double reference_rate_hz = 1e12;  // rate on the reference channel
    double reference_ratio = 1.0;     // weight of the reference in the subtraction
    double laser_s = 100e-6;
    double window_s = 10e-6;
    double sequence_s = 160e-6;
    bool shot_noise = true;

    std::size_t bins_per_sequence() const {
        return static_cast<std::size_t>(std::llround(laser_s / bin_width_s));
    }

    void validate() const {
        if (!(photon_rate_hz > 0.0)) throw std::invalid_argument("ReadoutConfig: photon rate must be > 0");
        if (!(contrast > 0.0 && contrast < 1.0)) throw std::invalid_argument("ReadoutConfig: contrast must be in (0, 1)");
        if (!(repol_time_s > 0.0)) throw std::invalid_argument("ReadoutConfig: repolarization time must be > 0");
        if (!(bin_width_s > 0.0)) throw std::invalid_argument("ReadoutConfig: bin width must be > 0");
        if (!(window_s > 0.0 && window_s < laser_s && laser_s <= sequence_s))
            throw std::invalid_argument("ReadoutConfig: need 0 < window < laser pulse <= T_seq");
        auto multiple = [&](double t) {
            const double k = t / bin_width_s;
            return std::abs(k - std::round(k)) < 1e-6;
        };
        if (!multiple(window_s) || !multiple(laser_s))
            throw std::invalid_argument("ReadoutConfig: window and laser pulse must be multiples of the bin width");
        if (reference_enabled && !(reference_rate_hz > 0.0 && reference_ratio >= 0.0))
            throw std::invalid_argument("ReadoutConfig: reference rate must be > 0 and ratio >= 0");
    }
};

/// R0 [1 - A_c (1 - p) e^{-t / tau}], t from the start of the laser pulse.
inline double fluorescence_expectation(double p_bright, const ReadoutConfig& cfg, double t_s) {
    if (!(p_bright >= 0.0 && p_bright <= 1.0))
        throw std::invalid_argument("fluorescence_expectation: population must be in [0, 1]");
    return cfg.photon_rate_hz * (1.0 - cfg.contrast * (1.0 - p_bright) * std::exp(-t_s / cfg.repol_time_s));
}

/// Bin-averaged fluorescence rates over one laser pulse.
inline std::vector<double> rate_trajectory(double p_bright, const ReadoutConfig& cfg) {
    if (!(p_bright >= 0.0 && p_bright <= 1.0))
        throw std::invalid_argument("rate_trajectory: population must be in [0, 1]");
    const std::size_t bins = cfg.bins_per_sequence();
    std::vector<double> rates(bins);
    const double tau = cfg.repol_time_s;
    const double b = cfg.bin_width_s;
    for (std::size_t i = 0; i < bins; ++i) {
        const double t0 = static_cast<double>(i) * b;
        const double mean_decay = tau / b * (std::exp(-t0 / tau) - std::exp(-(t0 + b) / tau));
        rates[i] = cfg.photon_rate_hz * (1.0 - cfg.contrast * (1.0 - p_bright) * mean_decay);
    }
    return rates;
}

struct SampledCounts {
    std::vector<double> counts;
    bool clipped = false;  // some modulated rate was negative and set to zero
};

/// Counts per bin with mean rate (1 + laser_noise) * bin. laser_noise may be
/// empty (no intensity noise). With shot_noise off the expectation is returned.
template <typename Rng>
SampledCounts sample_counts(std::span<const double> rates, std::span<const double> laser_noise, double bin_width_s,
                            Rng& rng, bool shot_noise = true) {
    if (!laser_noise.empty() && laser_noise.size() != rates.size())
        throw std::invalid_argument("sample_counts: laser noise length must match the rates");
    SampledCounts out;
    out.counts.resize(rates.size());
    for (std::size_t i = 0; i < rates.size(); ++i) {
        if (rates[i] < 0.0) throw std::invalid_argument("sample_counts: negative rate");
        double mean = rates[i] * (1.0 + (laser_noise.empty() ? 0.0 : laser_noise[i])) * bin_width_s;
        if (mean < 0.0) {
            mean = 0.0;
            out.clipped = true;
        }
        if (!shot_noise || mean == 0.0) {
            out.counts[i] = mean;
        } else {
            std::poisson_distribution<std::int64_t> poisson(mean);
            out.counts[i] = static_cast<double>(poisson(rng));
        }
    }
    return out;
}

inline SampledCounts sample_counts(std::span<const double> rates, std::span<const double> laser_noise,
                                   double bin_width_s, std::uint64_t seed, bool shot_noise = true) {
    std::mt19937_64 rng(seed);
    return sample_counts(rates, laser_noise, bin_width_s, rng, shot_noise);
}

struct ReadoutRecord {
    std::vector<double> signal;     // counts per bin, one or two laser pulses back to back
    std::vector<double> reference;  // empty when the reference beam is off
    std::uint64_t sequence_index = 0;
    double timestamp_s = 0.0;
};

/// signal - ratio * reference, bin by bin.
inline std::vector<double> difference_detector(std::span<const double> signal, std::span<const double> reference,
                                               double ratio) {
    if (signal.size() != reference.size()) throw std::invalid_argument("difference_detector: bin grids differ");
    std::vector<double> net(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) net[i] = signal[i] - ratio * reference[i];
    return net;
}

/// Per-bin values the signal extraction works on: net counts when the
/// reference beam is on, raw signal counts otherwise.
inline std::vector<double> detector_output(const ReadoutRecord& rec, const ReadoutConfig& cfg) {
    if (cfg.reference_enabled && !rec.reference.empty())
        return difference_detector(rec.signal, rec.reference, cfg.reference_ratio);
    return rec.signal;
}

/// Window-weighted sum of per-bin values, normalized by window * R0. For
/// schemes C and D the values must cover two laser pulses back to back.
inline double extract_signal(std::span<const double> values, Scheme scheme, const ReadoutConfig& cfg) {
    const std::size_t per_seq = cfg.bins_per_sequence();
    const std::size_t needed = per_seq * (spans_two_sequences(scheme) ? 2 : 1);
    if (values.size() < needed) throw std::invalid_argument("extract_signal: record too short for scheme");

    const auto window = window_for_signal(scheme, cfg.laser_s, cfg.window_s, cfg.sequence_s);
    double sum = 0.0;
    for (const auto& seg : window.segments) {
        const auto seq = static_cast<std::size_t>(std::floor(seg.t_start_s / cfg.sequence_s + 1e-9));
        const double local0 = seg.t_start_s - static_cast<double>(seq) * cfg.sequence_s;
        const double local1 = seg.t_end_s - static_cast<double>(seq) * cfg.sequence_s;
        const auto b0 = static_cast<std::size_t>(std::llround(local0 / cfg.bin_width_s));
        const auto b1 = static_cast<std::size_t>(std::llround(local1 / cfg.bin_width_s));
        double part = 0.0;
        for (std::size_t b = b0; b < b1; ++b) part += values[seq * per_seq + b];
        sum += seg.weight * part;
    }
    return sum / (cfg.window_s * cfg.photon_rate_hz);
}

/// Generates the record for one laser pulse after a sequence ending in
/// population p_bright. laser_noise holds the relative intensity per bin.
template <typename Rng>
ReadoutRecord simulate_record(double p_bright, const ReadoutConfig& cfg, std::span<const double> laser_noise, Rng& rng,
                              bool* clipped = nullptr) {
    ReadoutRecord rec;
    const auto rates = rate_trajectory(p_bright, cfg);
    auto sig = sample_counts(rates, laser_noise, cfg.bin_width_s, rng, cfg.shot_noise);
    rec.signal = std::move(sig.counts);
    bool flag = sig.clipped;
    if (cfg.reference_enabled) {
        const std::vector<double> ref_rates(rates.size(), cfg.reference_rate_hz);
        auto ref = sample_counts(ref_rates, laser_noise, cfg.bin_width_s, rng, cfg.shot_noise);
        rec.reference = std::move(ref.counts);
        flag = flag || ref.clipped;
    }
    if (clipped) *clipped = *clipped || flag;
    return rec;
}

/// Mean of the fluorescence decay over the first integration window.
inline double mean_decay_first_window(const ReadoutConfig& cfg) {
    const double tau = cfg.repol_time_s;
    return tau / cfg.window_s * (1.0 - std::exp(-cfg.window_s / tau));
}

}  // namespace nvmag

#endif
