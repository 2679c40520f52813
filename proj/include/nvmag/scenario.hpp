#ifndef NVMAG_SCENARIO_HPP
#define NVMAG_SCENARIO_HPP

// Scenario files: JSON with unit-suffixed keys. Every key is optional and
// falls back to the defaults below; unknown keys are rejected.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nvmag/noise_filters.hpp"
#include "nvmag/readout.hpp"
#include "nvmag/sequences.hpp"

namespace nvmag {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SequenceSettings {
    double phase_time_s = 50e-6;
    double sequence_time_s = 160e-6;
    double rabi_hz = 5e6;
    double final_phase_rad = std::numbers::pi / 2;
    double reference_final_phase_rad = -std::numbers::pi / 2;  // second sequence of C and D
    CoherenceDecay decay{100e-6, 1.0};
    SimulationOptions options{};
};

/// PSD of one channel: the parametric model, or a table when psd_file is set.
/// Units: relative intensity and relative amplitude in 1/Hz, frequency in Hz^2/Hz.
struct ChannelNoise {
    PsdModel model;
    std::string psd_file;
    std::optional<SampledSpectrum> table;

    double density(double f) const { return table ? table->density(f) : model.density(f); }
    bool is_zero() const {
        if (!table) return model.is_zero();
        return std::all_of(table->values.begin(), table->values.end(), [](double v) { return v == 0.0; });
    }
};

struct NoiseSettings {
    double laser_dt_s = 10e-6;
    ChannelNoise laser{{NoiseChannel::laser_intensity}};
    ChannelNoise mw_amplitude{{NoiseChannel::mw_amplitude}};
    ChannelNoise mw_frequency{{NoiseChannel::mw_frequency}};
};

struct SweepSettings {
    std::vector<double> amplitudes_t;
    std::size_t n_sequences = 200;
};

struct ErrorScalingSettings {
    std::vector<double> amplitude_errors;
    std::vector<double> frequency_errors_hz;
};

struct BudgetSettings {
    double f_low_hz = 1e-3;
    std::size_t points = 121;
    std::size_t sigma1_sequences = 2000;
};

struct SensorSettings {
    double n_centres = 1.4e11;
    double total_time_s = 1.0;
    std::optional<double> sigma1;
    std::optional<double> modulation_amplitude;
};

struct Scenario {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    std::size_t n_sequences = 1000;
    std::string output_dir = "out";
    std::vector<Scheme> schemes{Scheme::A, Scheme::B, Scheme::C, Scheme::D};
    SequenceSettings sequence;
    HamiltonianParams hamiltonian;
    ReadoutConfig readout;
    NoiseSettings noise;
    AcField ac_field{0.0, 1.0 / 50e-6, 0.0, 0.0};
    SweepSettings sweep;
    ErrorScalingSettings error_scaling;
    BudgetSettings budget;
    SensorSettings sensor;
    std::filesystem::path base_dir;  // directory of the scenario file, for relative psd_file paths

    void validate() const;
};

namespace detail {

using json = nlohmann::json;

// Reads keys out of one JSON object and rejects leftovers.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    template <typename T>
    void get_optional(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        T v{};
        get(key, v);
        out = v;
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string path(const char* key) const { return path_ + "." + key; }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void parse_channel(const json& j, const std::string& path, ChannelNoise& ch) {
    ObjectReader r(j, path);
    r.get("white_per_Hz", ch.model.white);
    r.get("f_min_Hz", ch.model.f_min_hz);
    r.get("f_max_Hz", ch.model.f_max_hz);
    r.get("psd_file", ch.psd_file);
    if (const auto* fl = r.child("flicker")) {
        if (!fl->is_array()) throw ConfigError(r.path("flicker") + ": expected an array");
        ch.model.flicker.clear();
        for (std::size_t i = 0; i < fl->size(); ++i) {
            ObjectReader t((*fl)[i], r.path("flicker") + "[" + std::to_string(i) + "]");
            FlickerTerm term;
            t.get("amplitude", term.amplitude);
            t.get("exponent", term.exponent);
            t.finish();
            ch.model.flicker.push_back(term);
        }
    }
    r.finish();
}

inline json channel_json(const ChannelNoise& ch) {
    json fl = json::array();
    for (const auto& t : ch.model.flicker) fl.push_back({{"amplitude", t.amplitude}, {"exponent", t.exponent}});
    json j{{"white_per_Hz", ch.model.white},
           {"flicker", fl},
           {"f_min_Hz", ch.model.f_min_hz},
           {"f_max_Hz", ch.model.f_max_hz}};
    if (!ch.psd_file.empty()) j["psd_file"] = ch.psd_file;
    return j;
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    using detail::ObjectReader;
    Scenario s;
    s.base_dir = base_dir;
    ObjectReader r(j, "scenario");
    r.get("name", s.name);
    r.get("seed", s.seed);
    r.get("n_sequences", s.n_sequences);
    r.get("output_dir", s.output_dir);

    if (const auto* sc = r.child("schemes")) {
        std::vector<std::string> names;
        try {
            names = sc->get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("scenario.schemes: ") + e.what());
        }
        s.schemes.clear();
        for (const auto& n : names) {
            if (n.size() != 1) throw ConfigError("scenario.schemes: unknown scheme '" + n + "'");
            try {
                s.schemes.push_back(scheme_from_char(n[0]));
            } catch (const std::invalid_argument&) {
                throw ConfigError("scenario.schemes: unknown scheme '" + n + "'");
            }
        }
    }

    if (const auto* q = r.child("sequence")) {
        ObjectReader t(*q, "scenario.sequence");
        auto& v = s.sequence;
        t.get("phase_time_s", v.phase_time_s);
        t.get("sequence_time_s", v.sequence_time_s);
        t.get("rabi_Hz", v.rabi_hz);
        t.get("final_phase_rad", v.final_phase_rad);
        t.get("reference_final_phase_rad", v.reference_final_phase_rad);
        t.get("decay_T2_s", v.decay.t2_s);
        t.get("decay_exponent", v.decay.exponent);
        t.get("nuclear_projections", v.options.nuclear_projections);
        t.get("full_hilbert_space", v.options.full_hilbert_space);
        t.get("substeps_per_period", v.options.substeps_per_period);
        t.finish();
    }
    // the readout shares the sequence length unless told otherwise
    s.readout.sequence_s = s.sequence.sequence_time_s;

    if (const auto* h = r.child("hamiltonian")) {
        ObjectReader t(*h, "scenario.hamiltonian");
        auto& v = s.hamiltonian;
        t.get("zero_field_Hz", v.zero_field_hz);
        t.get("gamma_e_Hz_per_T", v.gamma_e_hz_per_t);
        t.get("gamma_n_Hz_per_T", v.gamma_n_hz_per_t);
        t.get("hyperfine_Hz", v.hyperfine_hz);
        t.get("B_z_T", v.b_z_t);
        t.finish();
    }

    if (const auto* o = r.child("readout")) {
        ObjectReader t(*o, "scenario.readout");
        auto& v = s.readout;
        t.get("photon_rate_Hz", v.photon_rate_hz);
        t.get("contrast", v.contrast);
        t.get("repol_time_s", v.repol_time_s);
        t.get("bin_width_s", v.bin_width_s);
        t.get("reference_enabled", v.reference_enabled);
        t.get("reference_rate_Hz", v.reference_rate_hz);
        t.get("reference_ratio", v.reference_ratio);
        t.get("laser_s", v.laser_s);
        t.get("window_s", v.window_s);
        t.get("shot_noise", v.shot_noise);
        t.finish();
    }

    if (const auto* n = r.child("noise")) {
        ObjectReader t(*n, "scenario.noise");
        t.get("laser_dt_s", s.noise.laser_dt_s);
        if (const auto* c = t.child("laser_intensity")) detail::parse_channel(*c, t.path("laser_intensity"), s.noise.laser);
        if (const auto* c = t.child("mw_amplitude")) detail::parse_channel(*c, t.path("mw_amplitude"), s.noise.mw_amplitude);
        if (const auto* c = t.child("mw_frequency")) detail::parse_channel(*c, t.path("mw_frequency"), s.noise.mw_frequency);
        t.finish();
    }

    s.ac_field.frequency_hz = 1.0 / s.sequence.phase_time_s;
    if (const auto* a = r.child("ac_field")) {
        ObjectReader t(*a, "scenario.ac_field");
        t.get("amplitude_T", s.ac_field.amplitude_t);
        t.get("frequency_Hz", s.ac_field.frequency_hz);
        t.get("phase_offset_rad", s.ac_field.phase_offset_rad);
        t.get("static_offset_T", s.ac_field.static_offset_t);
        t.finish();
    }

    if (const auto* w = r.child("sweep")) {
        ObjectReader t(*w, "scenario.sweep");
        t.get("amplitudes_T", s.sweep.amplitudes_t);
        t.get("n_sequences", s.sweep.n_sequences);
        t.finish();
    }

    if (const auto* e = r.child("error_scaling")) {
        ObjectReader t(*e, "scenario.error_scaling");
        t.get("amplitude_errors", s.error_scaling.amplitude_errors);
        t.get("frequency_errors_Hz", s.error_scaling.frequency_errors_hz);
        t.finish();
    }

    if (const auto* b = r.child("budget")) {
        ObjectReader t(*b, "scenario.budget");
        t.get("f_low_Hz", s.budget.f_low_hz);
        t.get("points", s.budget.points);
        t.get("sigma1_sequences", s.budget.sigma1_sequences);
        t.finish();
    }

    if (const auto* x = r.child("sensor")) {
        ObjectReader t(*x, "scenario.sensor");
        t.get("n_centres", s.sensor.n_centres);
        t.get("total_time_s", s.sensor.total_time_s);
        t.get_optional("sigma1", s.sensor.sigma1);
        t.get_optional("modulation_amplitude", s.sensor.modulation_amplitude);
        t.finish();
    }
    r.finish();

    for (auto* ch : {&s.noise.laser, &s.noise.mw_amplitude, &s.noise.mw_frequency}) {
        if (ch->psd_file.empty()) continue;
        const auto path = std::filesystem::path(ch->psd_file).is_absolute() ? std::filesystem::path(ch->psd_file)
                                                                           : base_dir / ch->psd_file;
        try {
            ch->table = read_spectrum_file(path.string());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    s.validate();
    return s;
}

inline nlohmann::json to_json(const Scenario& s) {
    nlohmann::json schemes = nlohmann::json::array();
    for (auto sc : s.schemes) schemes.push_back(std::string(1, to_char(sc)));
    const auto& q = s.sequence;
    const auto& h = s.hamiltonian;
    const auto& o = s.readout;
    nlohmann::json j{
        {"name", s.name},
        {"seed", s.seed},
        {"n_sequences", s.n_sequences},
        {"output_dir", s.output_dir},
        {"schemes", schemes},
        {"sequence",
         {{"phase_time_s", q.phase_time_s},
          {"sequence_time_s", q.sequence_time_s},
          {"rabi_Hz", q.rabi_hz},
          {"final_phase_rad", q.final_phase_rad},
          {"reference_final_phase_rad", q.reference_final_phase_rad},
          {"decay_T2_s", q.decay.t2_s},
          {"decay_exponent", q.decay.exponent},
          {"nuclear_projections", q.options.nuclear_projections},
          {"full_hilbert_space", q.options.full_hilbert_space},
          {"substeps_per_period", q.options.substeps_per_period}}},
        {"hamiltonian",
         {{"zero_field_Hz", h.zero_field_hz},
          {"gamma_e_Hz_per_T", h.gamma_e_hz_per_t},
          {"gamma_n_Hz_per_T", h.gamma_n_hz_per_t},
          {"hyperfine_Hz", h.hyperfine_hz},
          {"B_z_T", h.b_z_t}}},
        {"readout",
         {{"photon_rate_Hz", o.photon_rate_hz},
          {"contrast", o.contrast},
          {"repol_time_s", o.repol_time_s},
          {"bin_width_s", o.bin_width_s},
          {"reference_enabled", o.reference_enabled},
          {"reference_rate_Hz", o.reference_rate_hz},
          {"reference_ratio", o.reference_ratio},
          {"laser_s", o.laser_s},
          {"window_s", o.window_s},
          {"shot_noise", o.shot_noise}}},
        {"noise",
         {{"laser_dt_s", s.noise.laser_dt_s},
          {"laser_intensity", detail::channel_json(s.noise.laser)},
          {"mw_amplitude", detail::channel_json(s.noise.mw_amplitude)},
          {"mw_frequency", detail::channel_json(s.noise.mw_frequency)}}},
        {"ac_field",
         {{"amplitude_T", s.ac_field.amplitude_t},
          {"frequency_Hz", s.ac_field.frequency_hz},
          {"phase_offset_rad", s.ac_field.phase_offset_rad},
          {"static_offset_T", s.ac_field.static_offset_t}}},
        {"sweep", {{"amplitudes_T", s.sweep.amplitudes_t}, {"n_sequences", s.sweep.n_sequences}}},
        {"error_scaling",
         {{"amplitude_errors", s.error_scaling.amplitude_errors},
          {"frequency_errors_Hz", s.error_scaling.frequency_errors_hz}}},
        {"budget",
         {{"f_low_Hz", s.budget.f_low_hz},
          {"points", s.budget.points},
          {"sigma1_sequences", s.budget.sigma1_sequences}}},
        {"sensor", {{"n_centres", s.sensor.n_centres}, {"total_time_s", s.sensor.total_time_s}}},
    };
    if (s.sensor.sigma1) j["sensor"]["sigma1"] = *s.sensor.sigma1;
    if (s.sensor.modulation_amplitude) j["sensor"]["modulation_amplitude"] = *s.sensor.modulation_amplitude;
    return j;
}

inline std::string serialize_scenario(const Scenario& s) { return to_json(s).dump(2) + "\n"; }

inline Scenario parse_scenario_text(const std::string& text, const std::filesystem::path& base_dir = {}) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("malformed scenario: ") + e.what());
    }
    return parse_scenario(j, base_dir);
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_scenario_text(buf.str(), path.parent_path());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline void Scenario::validate() const {
    auto check = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    auto wrap = [](auto&& fn) {
        try {
            fn();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        } catch (const std::domain_error& e) {
            throw ConfigError(e.what());
        }
    };
    check(!name.empty(), "name must be nonempty");
    check(n_sequences >= 2, "n_sequences must be >= 2");
    check(!schemes.empty(), "at least one scheme is required");
    check(sequence.phase_time_s > 0.0, "sequence.phase_time_s must be > 0");
    check(sequence.rabi_hz > 0.0, "sequence.rabi_Hz must be > 0");
    check(sequence.decay.exponent > 0.0, "sequence.decay_exponent must be > 0");
    check(sequence.options.substeps_per_period >= 64, "sequence.substeps_per_period must be >= 64");
    check(!sequence.options.nuclear_projections.empty(), "sequence.nuclear_projections must be nonempty");
    for (int m : sequence.options.nuclear_projections) check(m >= -1 && m <= 1, "nuclear projections must be -1, 0 or 1");
    check(std::abs(readout.sequence_s - sequence.sequence_time_s) < 1e-15, "readout and sequence T_seq differ");
    check(noise.laser_dt_s > 0.0, "noise.laser_dt_s must be > 0");
    check(budget.f_low_hz > 0.0 && budget.f_low_hz < 1.0 / sequence.sequence_time_s,
          "budget.f_low_Hz must be in (0, 1/T_seq)");
    check(budget.points >= 2, "budget.points must be >= 2");
    check(budget.sigma1_sequences >= 2, "budget.sigma1_sequences must be >= 2");
    check(sweep.n_sequences >= 1, "sweep.n_sequences must be >= 1");
    check(sensor.n_centres > 0.0 && sensor.total_time_s > 0.0, "sensor values must be > 0");
    for (double g : error_scaling.amplitude_errors) check(g > -1.0, "amplitude errors must be > -1");
    wrap([&] {
        hamiltonian.validate();
        readout.validate();
        for (const auto* ch : {&noise.laser, &noise.mw_amplitude, &noise.mw_frequency}) {
            ch->model.validate();
            if (ch->table) ch->table->validate();
        }
        const auto seq = with_readout(hahn_echo(sequence.phase_time_s, sequence.rabi_hz, sequence.final_phase_rad),
                                      readout.laser_s, sequence.sequence_time_s);
        seq.validate();
    });
}

}  // namespace nvmag

#endif
