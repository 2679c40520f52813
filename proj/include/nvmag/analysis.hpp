#ifndef NVMAG_ANALYSIS_HPP
#define NVMAG_ANALYSIS_HPP

// Scaling estimators (non-overlapping Allan deviation, standard deviation of
// block means) and the closed-form sensitivity limits.

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "nvmag/sequences.hpp"

namespace nvmag {

enum class Estimator { allan, std_dev };

inline std::string_view to_string(Estimator e) { return e == Estimator::allan ? "allan" : "std"; }

struct ScalingCurve {
    std::vector<double> tau_s;
    std::vector<double> deviation;
    Estimator estimator = Estimator::allan;
    double spacing_s = 0.0;
};

namespace detail {

inline std::size_t block_length(double tau_s, double spacing_s) {
    const double m = tau_s / spacing_s;
    const double rounded = std::round(m);
    if (rounded < 1.0 || std::abs(m - rounded) > 1e-9 * std::max(1.0, m))
        throw std::invalid_argument("tau must be a positive multiple of the sample spacing");
    return static_cast<std::size_t>(rounded);
}

inline std::vector<double> block_means(std::span<const double> samples, std::size_t m) {
    const std::size_t blocks = samples.size() / m;
    std::vector<double> means(blocks);
    for (std::size_t i = 0; i < blocks; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < m; ++j) sum += samples[i * m + j];
        means[i] = sum / static_cast<double>(m);
    }
    return means;
}

inline void check_grid(std::span<const double> tau_s) {
    for (std::size_t i = 1; i < tau_s.size(); ++i)
        if (!(tau_s[i] > tau_s[i - 1])) throw std::invalid_argument("tau grid must be strictly increasing");
}

}  // namespace detail

/// Non-overlapping Allan deviation sigma_A^2 = <(x_{i+1} - x_i)^2> / 2 over
/// block means x_i of m = tau / spacing samples. A trailing partial block is
/// dropped.
inline ScalingCurve allan_deviation(std::span<const double> samples, double spacing_s, std::span<const double> tau_s) {
    detail::check_grid(tau_s);
    ScalingCurve curve{{}, {}, Estimator::allan, spacing_s};
    for (double tau : tau_s) {
        const std::size_t m = detail::block_length(tau, spacing_s);
        const auto x = detail::block_means(samples, m);
        if (x.size() < 2) throw std::invalid_argument("allan_deviation: fewer than two blocks for tau");
        double sum = 0.0;
        for (std::size_t i = 0; i + 1 < x.size(); ++i) {
            const double d = x[i + 1] - x[i];
            sum += d * d;
        }
        curve.tau_s.push_back(tau);
        curve.deviation.push_back(std::sqrt(0.5 * (sum / static_cast<double>(x.size() - 1))));
    }
    return curve;
}

/// Sample standard deviation (n - 1) of block means for each block length.
inline ScalingCurve std_vs_time(std::span<const double> samples, double spacing_s, std::span<const double> t_s) {
    detail::check_grid(t_s);
    ScalingCurve curve{{}, {}, Estimator::std_dev, spacing_s};
    for (double t : t_s) {
        const std::size_t m = detail::block_length(t, spacing_s);
        const auto x = detail::block_means(samples, m);
        if (x.size() < 2) throw std::invalid_argument("std_vs_time: fewer than two blocks for t");
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(x.size());
        double ss = 0.0;
        for (double v : x) ss += (v - mean) * (v - mean);
        curve.tau_s.push_back(t);
        curve.deviation.push_back(std::sqrt(ss / static_cast<double>(x.size() - 1)));
    }
    return curve;
}

/// Roughly log-spaced block lengths 1..n/min_blocks, as multiples of spacing.
inline std::vector<double> block_time_grid(std::size_t n_samples, double spacing_s, std::size_t min_blocks = 10,
                                           int per_decade = 10) {
    std::vector<double> grid;
    if (n_samples < 2 * min_blocks) return grid;
    const double max_m = static_cast<double>(n_samples / min_blocks);
    std::size_t last = 0;
    for (int k = 0;; ++k) {
        const double m_real = std::pow(10.0, static_cast<double>(k) / per_decade);
        if (m_real > max_m) break;
        const auto m = static_cast<std::size_t>(std::llround(m_real));
        if (m != last) grid.push_back(static_cast<double>(m) * spacing_s);
        last = m;
    }
    return grid;
}

struct LogFit {
    double slope = 0.0;
    double intercept = 0.0;  // log10 value at log10 tau = 0
};

/// Unweighted least squares in log10-log10 over tau in [tau_lo, tau_hi].
inline LogFit fit_log_slope(const ScalingCurve& curve, double tau_lo, double tau_hi) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < curve.tau_s.size(); ++i) {
        const double t = curve.tau_s[i];
        if (t < tau_lo * (1.0 - 1e-12) || t > tau_hi * (1.0 + 1e-12)) continue;
        if (!(curve.deviation[i] > 0.0)) throw std::invalid_argument("fit_log_slope: non-positive value in range");
        const double x = std::log10(t);
        const double y = std::log10(curve.deviation[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 3) throw std::invalid_argument("fit_log_slope: need at least three points in range");
    const double dn = static_cast<double>(n);
    const double denom = dn * sxx - sx * sx;
    LogFit fit;
    fit.slope = (dn * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / dn;
    return fit;
}

// ---------------------------------------------------------------------------
// Closed-form sensitivity
// ---------------------------------------------------------------------------

struct SensitivityInputs {
    double sigma1 = 0.0;               // deviation of a single readout
    double modulation_amplitude = 0.0; // A, signal per unit phase
    double phase_time_s = 50e-6;
    double sequence_time_s = 160e-6;
    double total_time_s = 1.0;
    double n_centres = 1.4e11;
    double gamma_e_hz_per_t = 28.7e9;
    CoherenceDecay decay{100e-6, 1.0};

    double evaluations() const { return total_time_s / sequence_time_s; }
};

/// B_min = sigma1 / (gamma A T_phi sqrt(t / T_seq)), gamma in rad/(s T).
inline double sensitivity_eq1(const SensitivityInputs& in) {
    if (!(in.evaluations() >= 1.0)) throw std::invalid_argument("sensitivity_eq1: need t >= T_seq");
    const double gamma = two_pi * in.gamma_e_hz_per_t;
    return in.sigma1 / (gamma * in.modulation_amplitude * in.phase_time_s * std::sqrt(in.evaluations()));
}

/// B_QPN = 1 / (gamma sqrt(N) sqrt(t / T_seq) T_phi e^{-delta(T_phi)}).
inline double projection_limit_eq2(const SensitivityInputs& in) {
    const double gamma = two_pi * in.gamma_e_hz_per_t;
    return 1.0 / (gamma * std::sqrt(in.n_centres) * std::sqrt(in.evaluations()) * in.phase_time_s *
                  in.decay.envelope(in.phase_time_s));
}

/// sqrt(2e) / (gamma sqrt(N t T2)), the projection limit at T_seq = T_phi = T2/2.
inline double projection_limit_optimal(double n_centres, double total_time_s, double t2_s, double gamma_e_hz_per_t) {
    return std::sqrt(2.0 * std::numbers::e) /
           (two_pi * gamma_e_hz_per_t * std::sqrt(n_centres * total_time_s * t2_s));
}

/// Coefficient sqrt(2e) / gamma in T sqrt(s).
inline double projection_limit_coefficient(double gamma_e_hz_per_t) {
    return std::sqrt(2.0 * std::numbers::e) / (two_pi * gamma_e_hz_per_t);
}

/// Phase time minimizing the projection limit when T_seq = T_phi, i.e. the
/// minimizer of e^{(T/T2)^k} / sqrt(T).
inline double optimal_phase_time(double t2_s, double exponent = 1.0) {
    if (!(t2_s > 0.0)) throw std::invalid_argument("optimal_phase_time: T2 must be > 0");
    if (!(exponent > 0.0)) throw std::invalid_argument("optimal_phase_time: exponent must be > 0");
    if (exponent == 1.0) return t2_s / 2.0;
    // log of the objective in units of T2, minimized over log(T / T2).
    auto objective = [exponent](double log_x) { return std::pow(std::exp(log_x), exponent) - 0.5 * log_x; };
    const auto [log_x, value] = boost::math::tools::brent_find_minima(objective, -20.0, 5.0, 40);
    (void)value;
    return t2_s * std::exp(log_x);
}

}  // namespace nvmag

#endif
