#ifndef NVMAG_NOISE_FILTERS_HPP
#define NVMAG_NOISE_FILTERS_HPP

// Colored-noise synthesis from one-sided PSDs, averaged-periodogram
// estimation, cumulative noise budgets and the transfer functions of the
// signal integration windows.

#include <algorithm>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <istream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <unsupported/Eigen/FFT>

#include "nvmag/spin_model.hpp"

namespace nvmag {

enum class NoiseChannel { laser_intensity, mw_amplitude, mw_frequency };

inline std::string_view to_string(NoiseChannel c) {
    switch (c) {
        case NoiseChannel::laser_intensity: return "laser_intensity";
        case NoiseChannel::mw_amplitude: return "mw_amplitude";
        case NoiseChannel::mw_frequency: return "mw_frequency";
    }
    return "unknown";
}

inline NoiseChannel channel_from_string(std::string_view s) {
    if (s == "laser_intensity") return NoiseChannel::laser_intensity;
    if (s == "mw_amplitude") return NoiseChannel::mw_amplitude;
    if (s == "mw_frequency") return NoiseChannel::mw_frequency;
    throw std::invalid_argument("unknown noise channel: " + std::string(s));
}

template <typename T>
concept SpectralDensity = requires(const T& s, double f) {
    { s.density(f) } -> std::convertible_to<double>;
};

struct FlickerTerm {
    double amplitude = 0.0;  // c in c / f^alpha
    double exponent = 1.0;   // alpha
};

/// One-sided PSD S(f) = white + sum c_i / f^alpha_i on [f_min, f_max], zero outside.
struct PsdModel {
    NoiseChannel channel = NoiseChannel::laser_intensity;
    double white = 0.0;
    std::vector<FlickerTerm> flicker;
    double f_min_hz = 1e-6;
    double f_max_hz = 1e9;

    double density(double f) const {
        if (f < f_min_hz || f > f_max_hz || f <= 0.0) return 0.0;
        double s = white;
        for (const auto& term : flicker) s += term.amplitude / std::pow(f, term.exponent);
        return s;
    }

    bool is_zero() const {
        if (white != 0.0) return false;
        return std::all_of(flicker.begin(), flicker.end(), [](const FlickerTerm& t) { return t.amplitude == 0.0; });
    }

    void validate() const {
        if (!(white >= 0.0)) throw std::invalid_argument("PsdModel: white level must be >= 0");
        for (const auto& t : flicker) {
            if (!(t.amplitude >= 0.0)) throw std::invalid_argument("PsdModel: flicker amplitude must be >= 0");
            if (!(t.exponent >= 0.0 && t.exponent <= 2.0))
                throw std::invalid_argument("PsdModel: flicker exponent must be in [0, 2]");
        }
        if (!(f_min_hz > 0.0 && f_min_hz < f_max_hz)) throw std::invalid_argument("PsdModel: need 0 < f_min < f_max");
    }
};

/// Tabulated one-sided PSD, linear interpolation between points, zero outside.
struct SampledSpectrum {
    std::vector<double> freq_hz;
    std::vector<double> values;

    double density(double f) const {
        if (freq_hz.empty() || f < freq_hz.front() || f > freq_hz.back()) return 0.0;
        const auto it = std::upper_bound(freq_hz.begin(), freq_hz.end(), f);
        if (it == freq_hz.end()) return values.back();
        const auto i = static_cast<std::size_t>(it - freq_hz.begin());
        if (i == 0) return values.front();
        const double t = (f - freq_hz[i - 1]) / (freq_hz[i] - freq_hz[i - 1]);
        return values[i - 1] + t * (values[i] - values[i - 1]);
    }

    void validate() const {
        if (freq_hz.size() != values.size()) throw std::invalid_argument("SampledSpectrum: size mismatch");
        for (std::size_t i = 0; i < freq_hz.size(); ++i) {
            if (!(values[i] >= 0.0)) throw std::invalid_argument("SampledSpectrum: negative density");
            if (i > 0 && !(freq_hz[i] > freq_hz[i - 1]))
                throw std::invalid_argument("SampledSpectrum: frequencies must be strictly increasing");
        }
    }
};

template <SpectralDensity S>
SampledSpectrum sample_spectrum(const S& s, const std::vector<double>& freq_hz) {
    SampledSpectrum out{freq_hz, {}};
    out.values.reserve(freq_hz.size());
    for (double f : freq_hz) out.values.push_back(s.density(f));
    return out;
}

inline std::vector<double> log_grid(double f_lo, double f_hi, std::size_t points) {
    if (!(f_lo > 0.0 && f_hi > f_lo) || points < 2) throw std::invalid_argument("log_grid: bad range");
    std::vector<double> g(points);
    const double step = std::log(f_hi / f_lo) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) g[i] = f_lo * std::exp(step * static_cast<double>(i));
    g.back() = f_hi;
    return g;
}

/// Two-column (frequency, density) text: comma, tab or space separated,
/// '#' comments and a non-numeric header line allowed.
inline SampledSpectrum read_spectrum(std::istream& in) {
    SampledSpectrum s;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::replace(line.begin(), line.end(), '\t', ' ');
        std::istringstream fields(line);
        double f = 0.0, d = 0.0;
        if (!(fields >> f)) continue;
        if (!(fields >> d)) throw std::invalid_argument("spectrum file: expected two columns in '" + line + "'");
        s.freq_hz.push_back(f);
        s.values.push_back(d);
    }
    s.validate();
    return s;
}

inline SampledSpectrum read_spectrum_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open spectrum file: " + path);
    return read_spectrum(in);
}

namespace detail {

inline std::size_t next_smooth_size(std::size_t n) {
    for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
        std::size_t r = m;
        for (std::size_t f : {2u, 3u, 5u})
            while (r % f == 0) r /= f;
        if (r == 1) return m;
    }
}

}  // namespace detail

struct NoiseTrace {
    std::vector<double> samples;
    double dt_s = 0.0;
    NoiseChannel channel = NoiseChannel::laser_intensity;
    std::uint64_t seed = 0;
};

/// Stationary Gaussian trace shaped in the frequency domain. Each positive
/// bin k gets a complex Gaussian amplitude with E|X_k|^2 = S(f_k) df / 2, so
/// bin k adds S(f_k) df to the variance and the total follows the PSD
/// integral over [1/duration, 1/(2 dt)]. Components below 1/duration are
/// dropped.
template <SpectralDensity S>
NoiseTrace synthesize_trace(const S& model, double duration_s, double dt_s, std::uint64_t seed,
                            NoiseChannel channel = NoiseChannel::laser_intensity) {
    if (!(dt_s > 0.0)) throw std::invalid_argument("synthesize_trace: dt must be > 0");
    if (!(duration_s >= 2.0 * dt_s)) throw std::invalid_argument("synthesize_trace: duration must be >= 2 dt");
    const auto samples = static_cast<std::size_t>(std::llround(duration_s / dt_s));
    NoiseTrace trace{std::vector<double>(samples, 0.0), dt_s, channel, seed};
    // synthesize on a 5-smooth length and keep the first `samples` values
    const std::size_t n = detail::next_smooth_size(samples);

    const double df = 1.0 / (static_cast<double>(n) * dt_s);
    const std::size_t half = n / 2;
    std::vector<double> sigma(half + 1, 0.0);
    bool any = false;
    for (std::size_t k = 1; k <= half; ++k) {
        double var = model.density(static_cast<double>(k) * df) * df / 2.0;
        if (k == half && n % 2 == 0) var /= 2.0;  // Nyquist bin is real, half weight
        sigma[k] = std::sqrt(std::max(var, 0.0));
        any = any || sigma[k] > 0.0;
    }
    if (!any) return trace;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<cplx> spectrum(n, cplx{0.0, 0.0});
    for (std::size_t k = 1; k <= half; ++k) {
        const double re = normal(rng);
        const double im = normal(rng);
        if (k == half && n % 2 == 0) {
            spectrum[k] = cplx{sigma[k] * re * std::sqrt(2.0), 0.0};
        } else {
            spectrum[k] = cplx{re, im} * (sigma[k] / std::sqrt(2.0));
            spectrum[n - k] = std::conj(spectrum[k]);
        }
    }
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::Unscaled);
    std::vector<cplx> time(n);
    fft.inv(time, spectrum);
    for (std::size_t i = 0; i < samples; ++i) trace.samples[i] = time[i].real();
    return trace;
}

/// Averaged Hann-windowed periodogram over non-overlapping segments. Returns
/// the one-sided density on f_k = k / (segment * dt), k = 0..segment/2.
inline SampledSpectrum estimate_psd(const NoiseTrace& trace, std::size_t segment) {
    if (segment < 2) throw std::invalid_argument("estimate_psd: segment too short");
    const std::size_t segments = trace.samples.size() / segment;
    if (segments < 2) throw std::invalid_argument("estimate_psd: trace shorter than two segments");

    std::vector<double> window(segment);
    double power = 0.0;
    for (std::size_t i = 0; i < segment; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(two_pi * static_cast<double>(i) / static_cast<double>(segment));
        power += window[i] * window[i];
    }

    const std::size_t bins = segment / 2 + 1;
    SampledSpectrum out;
    out.freq_hz.resize(bins);
    out.values.assign(bins, 0.0);
    const double df = 1.0 / (static_cast<double>(segment) * trace.dt_s);
    for (std::size_t k = 0; k < bins; ++k) out.freq_hz[k] = static_cast<double>(k) * df;

    Eigen::FFT<double> fft;
    std::vector<cplx> buf(segment), spec(segment);
    for (std::size_t s = 0; s < segments; ++s) {
        for (std::size_t i = 0; i < segment; ++i) buf[i] = trace.samples[s * segment + i] * window[i];
        fft.fwd(spec, buf);
        for (std::size_t k = 0; k < bins; ++k) {
            const bool edge = k == 0 || (segment % 2 == 0 && k == segment / 2);
            out.values[k] += (edge ? 1.0 : 2.0) * std::norm(spec[k]) * trace.dt_s / power;
        }
    }
    for (auto& v : out.values) v /= static_cast<double>(segments);
    return out;
}

/// Integral of the density over [f_lo, f_hi].
inline double integrate_density(const SampledSpectrum& s, double f_lo, double f_hi) {
    if (f_hi <= f_lo || s.freq_hz.empty()) return 0.0;
    const double lo = std::max(f_lo, s.freq_hz.front());
    const double hi = std::min(f_hi, s.freq_hz.back());
    if (hi <= lo) return 0.0;
    double sum = 0.0;
    double prev_f = lo, prev_v = s.density(lo);
    auto it = std::upper_bound(s.freq_hz.begin(), s.freq_hz.end(), lo);
    for (; it != s.freq_hz.end() && *it < hi; ++it) {
        const double v = s.values[static_cast<std::size_t>(it - s.freq_hz.begin())];
        sum += 0.5 * (prev_v + v) * (*it - prev_f);
        prev_f = *it;
        prev_v = v;
    }
    sum += 0.5 * (prev_v + s.density(hi)) * (hi - prev_f);
    return sum;
}

inline double integrate_density(const PsdModel& m, double f_lo, double f_hi) {
    const double lo = std::max({f_lo, m.f_min_hz, 0.0});
    const double hi = std::min(f_hi, m.f_max_hz);
    if (hi <= lo) return 0.0;
    double sum = m.white * (hi - lo);
    for (const auto& t : m.flicker) {
        if (t.amplitude == 0.0) continue;
        if (std::abs(t.exponent - 1.0) < 1e-12) {
            sum += t.amplitude * std::log(hi / lo);
        } else {
            const double e = 1.0 - t.exponent;
            sum += t.amplitude * (std::pow(hi, e) - std::pow(lo, e)) / e;
        }
    }
    return sum;
}

/// sqrt of the PSD integral from f_low to f.
template <typename S>
double cumulative_rss(const S& spectrum, double f_low_hz, double f_hz) {
    if (f_hz < f_low_hz) throw std::invalid_argument("cumulative_rss: f must be >= f_low");
    return std::sqrt(integrate_density(spectrum, f_low_hz, f_hz));
}

// ---------------------------------------------------------------------------
// Integration windows and their filter functions
// ---------------------------------------------------------------------------

enum class Scheme { A, B, C, D };

inline char to_char(Scheme s) { return static_cast<char>('A' + static_cast<int>(s)); }

inline Scheme scheme_from_char(char c) {
    if (c >= 'A' && c <= 'D') return static_cast<Scheme>(c - 'A');
    if (c >= 'a' && c <= 'd') return static_cast<Scheme>(c - 'a');
    throw std::invalid_argument(std::string("unknown scheme: ") + c);
}

/// Schemes C and D compare two consecutive sequences.
inline bool spans_two_sequences(Scheme s) { return s == Scheme::C || s == Scheme::D; }

struct WindowSegment {
    double t_start_s;
    double t_end_s;
    double weight;  // +1 or -1
};

struct IntegrationWindow {
    std::vector<WindowSegment> segments;
    double span_s = 0.0;
    // > 0 when the second half of segments is the first half shifted by
    // this much with opposite sign.
    double mirror_shift_s = 0.0;

    /// Integral of C(t) dt.
    double area() const {
        double a = 0.0;
        for (const auto& s : segments) a += s.weight * (s.t_end_s - s.t_start_s);
        return a;
    }

    void validate() const {
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const auto& s = segments[i];
            if (!(s.t_end_s > s.t_start_s)) throw std::invalid_argument("IntegrationWindow: empty segment");
            if (s.weight != 1.0 && s.weight != -1.0) throw std::invalid_argument("IntegrationWindow: weight must be +-1");
            if (i > 0 && s.t_start_s < segments[i - 1].t_end_s)
                throw std::invalid_argument("IntegrationWindow: overlapping or unordered segments");
        }
    }
};

/// Weight C(t) of the four readout schemes, time measured from the start of
/// the first readout laser pulse. The second sequence of C and D starts at T_seq.
inline IntegrationWindow window_for_signal(Scheme scheme, double laser_s, double window_s, double sequence_s) {
    if (!(window_s > 0.0)) throw std::invalid_argument("window_for_signal: integration time must be > 0");
    if (!(window_s < laser_s)) throw std::invalid_argument("window_for_signal: need integration time < laser pulse");
    if (!(laser_s <= sequence_s)) throw std::invalid_argument("window_for_signal: laser pulse longer than T_seq");

    const WindowSegment first{0.0, window_s, 1.0};
    const WindowSegment last{laser_s - window_s, laser_s, -1.0};
    auto shifted = [&](WindowSegment s) {
        return WindowSegment{s.t_start_s + sequence_s, s.t_end_s + sequence_s, -s.weight};
    };
    IntegrationWindow w;
    switch (scheme) {
        case Scheme::A: w = {{first}, sequence_s}; break;
        case Scheme::B: w = {{first, last}, sequence_s}; break;
        case Scheme::C: w = {{first, shifted(first)}, 2.0 * sequence_s, sequence_s}; break;
        case Scheme::D: w = {{first, last, shifted(first), shifted(last)}, 2.0 * sequence_s, sequence_s}; break;
    }
    w.validate();
    return w;
}

/// |sum_k w_k int_{a_k}^{b_k} e^{i omega t} dt|, each segment integral in
/// closed form e^{i omega m} (b - a) sinc(omega (b - a) / 2). Phases are
/// taken as e^{i theta} - 1 = 2i sin(theta / 2) e^{i theta / 2} plus the
/// window area, and a mirrored second sequence contributes the factor
/// |1 - e^{i omega T}| = 2 |sin(omega T / 2)|, so low-frequency zeros of the
/// filter are resolved without cancellation.
inline double filter_transmission_numeric(const IntegrationWindow& window, double omega) {
    const bool mirrored = window.mirror_shift_s > 0.0;
    const std::size_t count = mirrored ? window.segments.size() / 2 : window.segments.size();
    cplx sum{0.0, 0.0};
    double area = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
        const auto& s = window.segments[k];
        const double width = s.t_end_s - s.t_start_s;
        const double mid = 0.5 * (s.t_start_s + s.t_end_s);
        const double x = 0.5 * omega * width;
        const double sinc = x == 0.0 ? 1.0 : std::sin(x) / x;
        const double a = s.weight * width * sinc;
        const double half = 0.5 * omega * mid;
        sum += a * cplx{0.0, 2.0 * std::sin(half)} * std::polar(1.0, half);
        area += a;
    }
    double x = std::abs(sum + area);
    if (mirrored) x *= 2.0 * std::abs(std::sin(0.5 * omega * window.mirror_shift_s));
    return x;
}

/// Closed form of X_B. The bracket
///   2 - 2 cos(w dt) + cos w(tL - 2dt) + cos(w tL) - 2 cos w(tL - dt)
/// factors into 8 sin^2(w dt / 2) sin^2(w (tL - dt) / 2), which is what is
/// evaluated here to avoid cancellation at small w.
inline double filter_transmission_analytic_B(double omega, double laser_s, double window_s) {
    if (omega == 0.0) return 0.0;
    const double w = std::abs(omega);
    return 4.0 / w * std::abs(std::sin(0.5 * w * window_s) * std::sin(0.5 * w * (laser_s - window_s)));
}

/// The same expression evaluated term by term, as written. Loses precision
/// once w * t_L drops below ~1e-3.
inline double filter_transmission_analytic_B_expanded(double omega, double laser_s, double window_s) {
    const double w = omega;
    const double bracket = 2.0 - 2.0 * std::cos(w * window_s) + std::cos(w * (laser_s - 2.0 * window_s)) +
                           std::cos(w * laser_s) - 2.0 * std::cos(w * (laser_s - window_s));
    return std::sqrt(std::abs(2.0 / (w * w) * bracket));
}

/// Filter normalized to the scheme-A passband gain (the integration time).
inline double normalized_filter(const IntegrationWindow& window, double window_s, double omega) {
    return filter_transmission_numeric(window, omega) / window_s;
}

/// int_{f_lo}^{f_hi} S(f) X(2 pi f)^2 df for callables S and X, with 15-point
/// Gauss rules on log-spaced pieces. Zero when f_hi <= f_lo.
template <typename Density, typename Filter>
double filtered_variance(const Density& density, const Filter& filter, double f_lo, double f_hi,
                         int pieces_per_decade = 64) {
    if (f_hi <= f_lo) return 0.0;
    if (!(f_lo > 0.0)) throw std::invalid_argument("filtered_variance: lower frequency must be > 0");
    auto integrand = [&](double f) {
        const double x = filter(two_pi * f);
        return density(f) * x * x;
    };
    const double decades = std::log10(f_hi / f_lo);
    const auto pieces = std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(decades * pieces_per_decade)));
    const auto edges = log_grid(f_lo, f_hi, pieces + 1);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
        total += boost::math::quadrature::gauss<double, 15>::integrate(integrand, edges[i], edges[i + 1]);
    return total;
}

/// sqrt(int_{f_low}^{f} S(f') Xn(2 pi f')^2 df') with Xn the normalized filter.
template <SpectralDensity S>
double filtered_cumulative_noise(const S& spectrum, const IntegrationWindow& window, double window_s,
                                 double f_low_hz, double f_hz, int pieces_per_decade = 64) {
    if (f_hz < f_low_hz) throw std::invalid_argument("filtered_cumulative_noise: f must be >= f_low");
    if (f_hz == f_low_hz) return 0.0;
    if (!(f_low_hz > 0.0)) throw std::invalid_argument("filtered_cumulative_noise: f_low must be > 0");
    return std::sqrt(filtered_variance([&](double f) { return spectrum.density(f); },
                                       [&](double w) { return normalized_filter(window, window_s, w); }, f_low_hz,
                                       f_hz, pieces_per_decade));
}

/// Budget curve evaluated on a grid: value at g[i] is the cumulative noise
/// between g[i] and f_ref (f_ref >= all grid points), i.e. accumulated from
/// f_ref downwards.
template <typename S>
std::vector<double> cumulative_from_reference(const S& spectrum, const std::vector<double>& grid, double f_ref_hz) {
    std::vector<double> out;
    out.reserve(grid.size());
    for (double f : grid) out.push_back(cumulative_rss(spectrum, f, f_ref_hz));
    return out;
}

template <SpectralDensity S>
std::vector<double> filtered_from_reference(const S& spectrum, const IntegrationWindow& window, double window_s,
                                            const std::vector<double>& grid, double f_ref_hz) {
    // Accumulate interval by interval, walking down from f_ref.
    std::vector<double> out(grid.size(), 0.0);
    double acc = 0.0;
    double upper = f_ref_hz;
    for (std::size_t j = grid.size(); j-- > 0;) {
        const double lower = grid[j];
        if (lower > upper) throw std::invalid_argument("filtered_from_reference: grid above reference");
        if (lower < upper) {
            const double piece = filtered_cumulative_noise(spectrum, window, window_s, lower, upper);
            acc += piece * piece;
        }
        out[j] = std::sqrt(acc);
        upper = lower;
    }
    return out;
}

}  // namespace nvmag

#endif
