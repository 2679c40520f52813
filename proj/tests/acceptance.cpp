// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nvmag/cli.hpp"
#include "nvmag/experiments.hpp"

using namespace nvmag;

namespace {

const std::filesystem::path source_dir = NVMAG_SOURCE_DIR;
const std::filesystem::path reference_scenario = source_dir / "scenarios" / "reference.json";

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("nvmag_acceptance_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

int run_cli(const std::vector<std::string>& args, std::string* captured = nullptr) {
    std::vector<const char*> argv{"nvmag"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    if (captured) *captured = out.str() + err.str();
    return code;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& csv) {
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string k, v;
        std::getline(ss, k, ',');
        std::getline(ss, v, ',');
        kv[k] = v;
    }
    return kv;
}

Outcome projection_limit() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = scratch("c1");
    std::string text;
    const int code = run_cli({"sensitivity", "--config", reference_scenario.string(), "--out", out.string()}, &text);
    const double elapsed = seconds_since(t0);
    if (code != 0) return {false, "sensitivity exited with " + std::to_string(code) + ": " + text};
    const double b = std::stod(read_key_values(out / "sensitivity.csv").at("B_QPN"));
    const bool ok = std::abs(b / 6e-15 - 1.0) <= 0.10 && elapsed < 1.0;
    return {ok, "B_QPN = " + fmt(b) + " T/sqrt(Hz) (target 6e-15 +-10%), " + fmt(elapsed, 2) + " s"};
}

Outcome projection_coefficient() {
    const auto t0 = std::chrono::steady_clock::now();
    const double c = projection_limit_coefficient(28.7e9);
    const double elapsed = seconds_since(t0);
    const bool ok = std::abs(c / 1.3e-11 - 1.0) <= 0.01 && elapsed < 1.0;
    return {ok, "sqrt(2e)/gamma = " + fmt(c) + " (target 1.3e-11 +-1%)"};
}

Outcome optimum() {
    bool exact = true;
    for (double t2 : {1e-6, 100e-6, 2e-3, 0.37, 5.0}) exact = exact && optimal_phase_time(t2, 1.0) == t2 / 2.0;
    // brute-force grid oracle on e^{T/T2}/sqrt(T) for k = 1 and 2, refined once around the coarse minimum
    double worst = 0.0;
    const double t2 = 2e-3;
    for (double k : {1.0, 2.0}) {
        auto objective = [&](double t) { return std::exp(std::pow(t / t2, k)) / std::sqrt(t); };
        auto grid_min = [&](double lo, double hi) {
            double best_t = lo, best = objective(lo);
            for (int i = 0; i <= 10000; ++i) {
                const double t = lo + (hi - lo) * i / 10000.0;
                if (objective(t) < best) {
                    best = objective(t);
                    best_t = t;
                }
            }
            return best_t;
        };
        const double coarse = grid_min(0.01 * t2, 3.0 * t2);
        const double step = 2.99 * t2 / 10000.0;
        const double refined = grid_min(coarse - step, coarse + step);
        worst = std::max(worst, std::abs(optimal_phase_time(t2, k) / refined - 1.0));
    }
    return {exact && worst <= 1e-6,
            std::string("k=1 exact T2/2: ") + (exact ? "yes" : "no") + ", grid oracle max rel diff " + fmt(worst, 3)};
}

Outcome filter_closed_form() {
    const double t_l = 100e-6, dt = 10e-6;
    const auto a = window_for_signal(Scheme::A, t_l, dt, 160e-6);
    const auto b = window_for_signal(Scheme::B, t_l, dt, 160e-6);
    double worst = 0.0;
    std::size_t zeros = 0;
    for (double f : log_grid(1.0, 1e6, 1000)) {
        const double w = two_pi * f;
        const double analytic = filter_transmission_analytic_B(w, t_l, dt);
        const double numeric = filter_transmission_numeric(b, w);
        const double envelope = std::min(2.0 * dt, 4.0 / w);
        // exact zeros of the filter fall on the grid; compare those on the envelope scale
        if (numeric < 1e-9 * envelope) {
            ++zeros;
            worst = std::max(worst, std::abs(analytic - numeric) / envelope);
        } else {
            worst = std::max(worst, std::abs(analytic / numeric - 1.0));
        }
    }
    const double xb0 = filter_transmission_numeric(b, 1e-6);
    const double xa0 = filter_transmission_numeric(a, 1e-6);
    // X_B vanishes linearly: X_B(w) / w -> dt (t_L - dt)
    const double slope0 = xb0 / 1e-6 / (dt * (t_l - dt));
    const bool limits = xb0 < 1e-9 * dt && std::abs(slope0 - 1.0) < 1e-9 &&
                        std::abs(filter_transmission_analytic_B(1e-6, t_l, dt) / xb0 - 1.0) < 1e-9 &&
                        std::abs(xa0 / dt - 1.0) < 1e-12;
    return {worst <= 1e-9 && limits, "max rel diff " + fmt(worst, 3) + " over 1000 frequencies (" +
                                         std::to_string(zeros) + " exact zeros), X_B(1e-6 rad/s) = " + fmt(xb0, 3) +
                                         ", X_A(0)/dt = " + fmt(xa0 / dt, 12)};
}

Outcome error_scaling(const Scenario& reference) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_error_scaling(reference, log_grid(1e-4, 1e-3, 11), log_grid(10.0, 100.0, 11));
    const double elapsed = seconds_since(t0);
    const bool ok = r.amplitude_slope && r.frequency_slope && std::abs(*r.amplitude_slope - 1.0) <= 0.05 &&
                    std::abs(*r.frequency_slope - 1.0) <= 0.05 && r.delta_z_at_zero <= 1e-12 && elapsed < 60.0;
    return {ok, "slope(dg) " + fmt(r.amplitude_slope.value_or(NAN)) + ", slope(df) " +
                    fmt(r.frequency_slope.value_or(NAN)) + ", dz(0,0) " + fmt(r.delta_z_at_zero, 3) + ", " +
                    fmt(elapsed, 2) + " s"};
}

Outcome echo_phase(const Scenario& reference) {
    // ideal pulses: the m_I = 0 block of the 9-level model, no decay
    Scenario s = reference;
    s.sequence.options.full_hilbert_space = true;
    s.sequence.options.nuclear_projections = {0};
    s.sequence.decay = {};
    const double t_phi = s.sequence.phase_time_s;
    const double gamma = s.hamiltonian.gamma_e_hz_per_t;
    const double b_max = 0.3 / (4.0 * gamma * t_phi);
    double worst = 0.0;
    for (int i = 1; i <= 10; ++i) {
        AcField field = s.ac_field;
        field.amplitude_t = b_max * i / 10.0;
        const double p = sequence_population(s, s.sequence.final_phase_rad, {}, field);
        // p = (1 + cos(phi + pi/2)) / 2
        const double phi = std::asin(std::clamp(1.0 - 2.0 * p, -1.0, 1.0));
        const double expected = analytic_echo_phase(field.amplitude_t, t_phi, gamma);
        worst = std::max(worst, std::abs(phi / expected - 1.0));
    }
    return {worst <= 0.01, "max rel phase error " + fmt(worst, 3) + " over 10 amplitudes, phi <= 0.3 rad"};
}

Outcome allan_checks() {
    std::vector<double> alt(10000);
    for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 ? -0.5 : 0.5;
    const std::vector<double> one{1.0};
    const bool exact = allan_deviation(alt, 1.0, one).deviation[0] == 0.5 * std::sqrt(2.0);

    std::mt19937_64 rng(31337);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> white(1000000);
    for (auto& v : white) v = normal(rng);
    const auto grid = block_time_grid(white.size(), 1.0, 1000);
    const double slope = fit_log_slope(allan_deviation(white, 1.0, grid), 1.0, 1e3).slope;

    // independent block-mean evaluation on 10^4-sample inputs
    bool identical = true;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> x(10000);
        for (auto& v : x) v = normal(rng) + 0.1 * trial;
        const auto g = block_time_grid(x.size(), 1.0, 2);
        const auto curve = allan_deviation(x, 1.0, g);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const auto m = static_cast<std::size_t>(g[k]);
            std::vector<double> means;
            for (std::size_t start = 0; start + m <= x.size(); start += m) {
                double sum = 0.0;
                for (std::size_t j = start; j < start + m; ++j) sum += x[j];
                means.push_back(sum / static_cast<double>(m));
            }
            double acc = 0.0;
            for (std::size_t i = 1; i < means.size(); ++i) acc += (means[i] - means[i - 1]) * (means[i] - means[i - 1]);
            identical = identical && curve.deviation[k] == std::sqrt(0.5 * (acc / static_cast<double>(means.size() - 1)));
        }
    }
    const bool ok = exact && std::abs(slope + 0.5) <= 0.05 && identical;
    return {ok, std::string("alternating exact: ") + (exact ? "yes" : "no") + ", white slope " + fmt(slope) +
                    ", oracle bit-identical: " + (identical ? "yes" : "no")};
}

Scenario shot_noise_only(Scenario s) {
    s.noise.laser = ChannelNoise{{NoiseChannel::laser_intensity}};
    s.noise.mw_amplitude = ChannelNoise{{NoiseChannel::mw_amplitude}};
    s.noise.mw_frequency = ChannelNoise{{NoiseChannel::mw_frequency}};
    return s;
}

Outcome referencing_penalty(const Scenario& reference) {
    const auto t0 = std::chrono::steady_clock::now();
    Scenario s = shot_noise_only(reference);
    s.n_sequences = 100000;
    const auto r = run_scaling_experiment(s, 1);
    const double t_seq = s.sequence.sequence_time_s;
    const double a = sample_std(r.get(Scheme::A).series.values) * std::sqrt(t_seq);
    const double a_ref = sample_std(r.a_referenced) * std::sqrt(t_seq);
    const double b = sample_std(r.get(Scheme::B).series.values) * std::sqrt(t_seq);
    const double d_seq = sample_std(r.get(Scheme::D).series.values);
    const double d = d_seq * std::sqrt(2.0 * t_seq);
    const double elapsed = seconds_since(t0);
    const double steps[3] = {a_ref / a, b / a_ref, d / b / std::sqrt(2.0)};
    bool ok = std::abs(d / a / 4.0 - 1.0) <= 0.10 && elapsed < 300.0;
    for (double st : steps) ok = ok && std::abs(st / std::sqrt(2.0) - 1.0) <= 0.05;
    return {ok, "D/A per unit time " + fmt(d / a) + " (target 4 +-10%); steps reference " + fmt(steps[0]) +
                    ", second window " + fmt(steps[1]) + ", second sequence " + fmt(steps[2]) + " (target 1.414 +-5%), " +
                    fmt(elapsed, 2) + " s"};
}

Outcome scaling_recovery(const Scenario& reference) {
    const auto t0 = std::chrono::steady_clock::now();
    Scenario s = reference;
    s.schemes = {Scheme::B, Scheme::D};
    const auto r = run_scaling_experiment(s, std::max(1u, std::thread::hardware_concurrency()));
    const auto& b = r.get(Scheme::B);
    const auto& d = r.get(Scheme::D);
    const double tb_max = b.std_dev.tau_s.back();
    const double slope_b = fit_log_slope(b.std_dev, tb_max / 10.0, tb_max).slope;
    const double td0 = d.series.spacing_s;
    const double slope_d = fit_log_slope(d.std_dev, td0, td0 * 1e3).slope;
    // plateau of S_B over its last decade vs the final S_D value, both in tesla
    double plateau = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < b.std_dev.tau_s.size(); ++i) {
        if (b.std_dev.tau_s[i] >= tb_max / 10.0) {
            plateau += b.std_dev.deviation[i] / std::abs(b.response_per_t);
            ++count;
        }
    }
    plateau /= static_cast<double>(count);
    const double floor_d = d.std_dev.deviation.back() / std::abs(d.response_per_t);

    // the unfiltered MW amplitude budget in S_B units crosses sigma_1 near 1 Hz
    const auto k = noise_coefficients(s);
    const double budget_1hz = k.mw_amplitude * cumulative_rss(s.noise.mw_amplitude.model, 1.0, 1.0 / s.sequence.sequence_time_s);
    const double sigma1 = sample_std(b.series.values);
    const double elapsed = seconds_since(t0);

    const bool ok = slope_b > -0.2 && std::abs(slope_d + 0.5) <= 0.05 && plateau >= 5.0 * floor_d && elapsed < 900.0;
    return {ok, "S_B last-decade slope " + fmt(slope_b) + ", S_D slope over 3 decades " + fmt(slope_d) +
                    ", S_B plateau / S_D floor " + fmt(plateau / floor_d) + " (" + fmt(plateau, 3) + " T vs " +
                    fmt(floor_d, 3) + " T), MW budget at 1 Hz / sigma1 " + fmt(budget_1hz / sigma1, 3) + ", " +
                    std::to_string(s.n_sequences) + " sequences, " + fmt(elapsed, 2) + " s"};
}

std::map<std::string, std::string> digests(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    const auto j = nlohmann::json::parse(in);
    std::map<std::string, std::string> out;
    for (const auto& f : j.at("files")) out[f.at("file").get<std::string>()] = f.at("sha256").get<std::string>();
    return out;
}

Outcome determinism(const Scenario& reference) {
    Scenario s = reference;
    s.n_sequences = 6000;
    s.sweep.n_sequences = 50;
    s.sweep.amplitudes_t = {0.0, 5e-8, 1e-7};
    const auto dir = scratch("c10");
    std::filesystem::create_directories(dir);
    const auto cfg = dir / "scenario.json";
    std::ofstream(cfg) << serialize_scenario(s);

    std::vector<std::string> failures;
    std::size_t compared = 0;
    for (const std::string cmd : {"scaling", "sweep", "budget"}) {
        std::map<std::string, std::string> first;
        for (const std::string threads : {"1", "2", "3", "8", "1"}) {
            const auto out = dir / (cmd + "_" + threads + "_" + std::to_string(compared));
            const int code = run_cli({cmd, "--config", cfg.string(), "--out", out.string(), "--threads", threads});
            if (code != 0) {
                failures.push_back(cmd + " exit " + std::to_string(code));
                continue;
            }
            const auto d = digests(out);
            if (first.empty()) first = d;
            else if (d != first) failures.push_back(cmd + " threads=" + threads);
            ++compared;
        }
    }
    std::string detail = std::to_string(compared) + " runs over scaling/sweep/budget with 1, 2, 3, 8 threads";
    if (!failures.empty()) {
        detail += "; mismatches:";
        for (const auto& f : failures) detail += " " + f;
    } else {
        detail += ", all digests identical";
    }
    return {failures.empty() && compared == 15, detail};
}

}  // namespace

int main() {
    Scenario reference;
    try {
        reference = load_scenario(reference_scenario);
    } catch (const std::exception& e) {
        std::cout << "FAIL  setup: " << e.what() << "\n";
        return 1;
    }

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 projection limit", projection_limit},
        {"2 simplified coefficient", projection_coefficient},
        {"3 optimal phase time", optimum},
        {"4 X_B closed form", filter_closed_form},
        {"5 pulse error scaling", [&] { return error_scaling(reference); }},
        {"6 echo phase oracle", [&] { return echo_phase(reference); }},
        {"7 Allan estimator", allan_checks},
        {"8 referencing penalty", [&] { return referencing_penalty(reference); }},
        {"9 scaling recovery", [&] { return scaling_recovery(reference); }},
        {"10 determinism", [&] { return determinism(reference); }},
    };

    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (o.pass ? "PASS  " : "FAIL  ") << name << ": " << o.detail << std::endl;
        failed += o.pass ? 0 : 1;
    }
    std::cout << (10 - failed) << "/10 criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
