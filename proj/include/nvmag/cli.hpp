#ifndef NVMAG_CLI_HPP
#define NVMAG_CLI_HPP

// Command-line front end. Exit codes: 0 success, 1 usage or configuration
// error, 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nvmag/experiments.hpp"

namespace nvmag {

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_runtime = 2 };

struct CommonOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
};

namespace detail {

inline Scenario load_for_cli(const CommonOptions& o) {
    auto s = load_scenario(o.config);
    if (o.seed) s.seed = *o.seed;
    return s;
}

inline std::filesystem::path output_dir(const CommonOptions& o, const Scenario& s) {
    return o.out.empty() ? std::filesystem::path(s.output_dir) : std::filesystem::path(o.out);
}

inline std::string sci(double v, int digits = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*e", digits - 1, v);
    return buf;
}

inline int cmd_validate(const CommonOptions& o, std::ostream& out) {
    const auto s = load_for_cli(o);
    out << "ok: " << s.name << " (" << s.n_sequences << " sequences, seed " << s.seed << ")\n";
    return exit_ok;
}

inline int cmd_sensitivity(const CommonOptions& o, std::ostream& out) {
    const auto s = load_for_cli(o);
    SensitivityInputs in;
    in.phase_time_s = s.sequence.phase_time_s;
    in.sequence_time_s = s.sequence.sequence_time_s;
    in.total_time_s = s.sensor.total_time_s;
    in.n_centres = s.sensor.n_centres;
    in.gamma_e_hz_per_t = s.hamiltonian.gamma_e_hz_per_t;
    in.decay = s.sequence.decay;

    OutputWriter w(output_dir(o, s), s, "sensitivity");
    Table t({"quantity", "value", "unit"});
    const double qpn = projection_limit_eq2(in);
    const double coeff = projection_limit_coefficient(s.hamiltonian.gamma_e_hz_per_t);
    out << "B_QPN = " << sci(qpn) << " T/sqrt(Hz) (" << qpn * 1e15 << " fT/sqrt(Hz))\n";
    out << "sqrt(2e)/gamma = " << sci(coeff) << " T sqrt(s)\n";
    t.add({"B_QPN", format_number(qpn), "T/sqrt(Hz)"});
    t.add({"projection_coefficient", format_number(coeff), "T*sqrt(s)"});
    if (s.sequence.decay.t2_s > 0.0) {
        const double t_opt = optimal_phase_time(s.sequence.decay.t2_s, s.sequence.decay.exponent);
        out << "optimal T_phi = " << sci(t_opt) << " s\n";
        t.add({"optimal_phase_time", format_number(t_opt), "s"});
        if (s.sequence.decay.exponent == 1.0) {
            const double b_opt = projection_limit_optimal(in.n_centres, in.total_time_s, s.sequence.decay.t2_s,
                                                          s.hamiltonian.gamma_e_hz_per_t);
            out << "B_QPN at T_seq = T_phi = T2/2: " << sci(b_opt) << " T/sqrt(Hz)\n";
            t.add({"B_QPN_optimal", format_number(b_opt), "T/sqrt(Hz)"});
        }
    }
    if (s.sensor.sigma1 && s.sensor.modulation_amplitude) {
        in.sigma1 = *s.sensor.sigma1;
        in.modulation_amplitude = *s.sensor.modulation_amplitude;
        const double b1 = sensitivity_eq1(in);
        out << "B_min = " << sci(b1) << " T (sigma1 " << in.sigma1 << ", A " << in.modulation_amplitude << ")\n";
        t.add({"B_min", format_number(b1), "T"});
    }
    w.write("sensitivity.csv", t.str());
    w.finish();
    return exit_ok;
}

inline int cmd_error_scaling(const CommonOptions& o, std::ostream& out) {
    const auto s = load_for_cli(o);
    auto dg = s.error_scaling.amplitude_errors;
    auto df = s.error_scaling.frequency_errors_hz;
    if (dg.empty()) dg = log_grid(1e-4, 1e-3, 11);
    if (df.empty()) df = log_grid(10.0, 100.0, 11);
    const auto r = run_error_scaling(s, dg, df);
    OutputWriter w(output_dir(o, s), s, "error-scaling");
    write_error_scaling(w, r);
    w.finish();
    auto show = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("n/a"); };
    out << "slope vs delta_g: " << show(r.amplitude_slope) << "\n";
    out << "slope vs delta_f: " << show(r.frequency_slope) << "\n";
    return exit_ok;
}

inline int cmd_sweep(const CommonOptions& o, std::ostream& out) {
    const auto s = load_for_cli(o);
    const auto r = run_ac_sweep(s, s.sweep.amplitudes_t, o.threads);
    OutputWriter w(output_dir(o, s), s, "sweep");
    write_sweep(w, s, r);
    w.finish();
    for (std::size_t k = 0; k < s.schemes.size(); ++k)
        out << scheme_name(s.schemes[k]) << " modulation amplitude: " << sci(r.modulation_amplitude[k]) << "\n";
    return exit_ok;
}

inline int cmd_scaling(const CommonOptions& o, std::ostream& out) {
    const auto s = load_for_cli(o);
    const auto r = run_scaling_experiment(s, o.threads);
    OutputWriter w(output_dir(o, s), s, "scaling");
    write_scaling(w, r);
    w.finish();
    if (r.clipped) out << "warning: negative modulated rates were clipped to zero\n";
    for (const auto& x : r.schemes)
        out << scheme_name(x.series.scheme) << ": sigma1 " << sci(sample_std(x.series.values)) << ", "
            << x.series.values.size() << " values\n";
    return exit_ok;
}

inline int cmd_budget(const CommonOptions& o, std::ostream& out) {
    const auto s = load_for_cli(o);
    const auto r = run_noise_budget(s, o.threads);
    OutputWriter w(output_dir(o, s), s, "budget");
    write_budget(w, r);
    w.finish();
    out << "sigma1(S_B) = " << sci(r.sigma1_b) << ", sigma1(S_D) = " << sci(r.sigma1_d) << "\n";
    return exit_ok;
}

inline int cmd_calibrate(const CommonOptions& o, const std::string& scheme, double target, std::ostream& out) {
    const auto s = load_for_cli(o);
    if (scheme.size() != 1) throw ConfigError("--scheme must be one of A, B, C, D");
    Scheme sc;
    try {
        sc = scheme_from_char(scheme[0]);
    } catch (const std::invalid_argument&) {
        throw ConfigError("--scheme must be one of A, B, C, D");
    }
    out << "current floor " << sci(shot_noise_floor(s, sc)) << " T/sqrt(Hz)\n";
    out << "photon_rate_Hz for " << sci(target) << " T/sqrt(Hz): " << sci(calibrated_photon_rate(s, sc, target), 6)
        << "\n";
    return exit_ok;
}

}  // namespace detail

/// Entry point shared by the tool and the tests.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"NV-ensemble pulsed magnetometer simulator", "nvmag"};
    app.require_subcommand(1);
    CommonOptions o;
    std::string scheme = "A";
    double target = 0.9e-12 / 5.3;

    auto add_common = [&](CLI::App* sub, bool threads) {
        sub->add_option("--config", o.config, "scenario file")->required();
        sub->add_option("--out", o.out, "output directory (default: the scenario's output_dir)");
        sub->add_option("--seed", o.seed, "override the master seed");
        if (threads) sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    };
    auto* validate = app.add_subcommand("validate", "check a scenario file");
    add_common(validate, false);
    auto* sensitivity = app.add_subcommand("sensitivity", "closed-form sensitivity limits");
    add_common(sensitivity, false);
    auto* error_scaling = app.add_subcommand("error-scaling", "population error vs pulse amplitude/frequency error");
    add_common(error_scaling, false);
    auto* sweep = app.add_subcommand("sweep", "signal response vs AC amplitude");
    add_common(sweep, true);
    auto* scaling = app.add_subcommand("scaling", "readout series and Allan/std scaling");
    add_common(scaling, true);
    auto* budget = app.add_subcommand("budget", "cumulative noise budgets");
    add_common(budget, true);
    auto* calibrate = app.add_subcommand("calibrate", "photon rate for a target shot-noise floor");
    add_common(calibrate, false);
    calibrate->add_option("--scheme", scheme, "signal scheme (A-D)");
    calibrate->add_option("--target", target, "target floor in T/sqrt(Hz)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return exit_config;
    }

    try {
        if (validate->parsed()) return detail::cmd_validate(o, out);
        if (sensitivity->parsed()) return detail::cmd_sensitivity(o, out);
        if (error_scaling->parsed()) return detail::cmd_error_scaling(o, out);
        if (sweep->parsed()) return detail::cmd_sweep(o, out);
        if (scaling->parsed()) return detail::cmd_scaling(o, out);
        if (budget->parsed()) return detail::cmd_budget(o, out);
        if (calibrate->parsed()) return detail::cmd_calibrate(o, scheme, target, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    return exit_config;
}

}  // namespace nvmag

#endif
