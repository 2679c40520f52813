#ifndef NVMAG_SPIN_MODEL_HPP
#define NVMAG_SPIN_MODEL_HPP

// NV ground-state spin model: electron spin-1 tensored with the 14N nuclear
// spin-1. Basis ordering is (m_S, m_I) with m_S, m_I in {+1, 0, -1}, index
// 3 * electron_slot + nuclear_slot where slot(+1) = 0, slot(0) = 1,
// slot(-1) = 2. All Hamiltonians are returned in rad/s.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nvmag {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

using cplx = std::complex<double>;
using Matrix9 = Eigen::Matrix<cplx, 9, 9>;
using Vector9 = Eigen::Matrix<cplx, 9, 1>;
using Matrix2 = Eigen::Matrix<cplx, 2, 2>;
using Vector2 = Eigen::Matrix<cplx, 2, 1>;

struct HamiltonianParams {
    double zero_field_hz = 2.87e9;
    double gamma_e_hz_per_t = 28.7e9;
    double gamma_n_hz_per_t = 3.08e6;
    double hyperfine_hz = 2.16e6;
    double b_z_t = 4.6e-3;

    void validate() const {
        auto finite = [](double x) { return std::isfinite(x); };
        if (!(finite(zero_field_hz) && finite(gamma_e_hz_per_t) && finite(gamma_n_hz_per_t) &&
              finite(hyperfine_hz) && finite(b_z_t)))
            throw std::invalid_argument("HamiltonianParams: non-finite value");
        if (zero_field_hz <= 0.0) throw std::invalid_argument("HamiltonianParams: D must be > 0");
        if (hyperfine_hz <= 0.0) throw std::invalid_argument("HamiltonianParams: A_hf must be > 0");
    }
};

struct DriveParams {
    double rabi_hz = 5e6;
    double carrier_detuning_hz = 0.0;  // carrier minus the m_I = 0 target line
    double amplitude_error = 0.0;      // relative, drive amplitude is rabi * (1 + error)
    double phase_rad = 0.0;

    void validate() const {
        if (!(rabi_hz >= 0.0) || !std::isfinite(rabi_hz))
            throw std::invalid_argument("DriveParams: rabi must be >= 0");
        if (!(amplitude_error > -1.0))
            throw std::invalid_argument("DriveParams: amplitude_error must be > -1");
    }
};

struct SpinOperatorSet {
    Matrix9 s_x, s_y, s_z, i_z;
};

inline constexpr std::array<int, 3> spin_projections{+1, 0, -1};

constexpr int projection_slot(int m) { return 1 - m; }
constexpr int basis_index(int m_s, int m_i) { return 3 * projection_slot(m_s) + projection_slot(m_i); }

namespace detail {

inline Eigen::Matrix3cd spin1_x() {
    const double r = 1.0 / std::numbers::sqrt2;
    Eigen::Matrix3cd m = Eigen::Matrix3cd::Zero();
    m(0, 1) = m(1, 0) = m(1, 2) = m(2, 1) = r;
    return m;
}

inline Eigen::Matrix3cd spin1_y() {
    const cplx r{0.0, 1.0 / std::numbers::sqrt2};
    Eigen::Matrix3cd m = Eigen::Matrix3cd::Zero();
    m(0, 1) = -r;
    m(1, 0) = r;
    m(1, 2) = -r;
    m(2, 1) = r;
    return m;
}

inline Eigen::Matrix3cd spin1_z() {
    Eigen::Matrix3cd m = Eigen::Matrix3cd::Zero();
    m(0, 0) = 1.0;
    m(2, 2) = -1.0;
    return m;
}

inline Matrix9 kron(const Eigen::Matrix3cd& a, const Eigen::Matrix3cd& b) {
    Matrix9 out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.block<3, 3>(3 * i, 3 * j) = a(i, j) * b;
    return out;
}

}  // namespace detail

inline SpinOperatorSet build_operators() {
    const Eigen::Matrix3cd id = Eigen::Matrix3cd::Identity();
    return {detail::kron(detail::spin1_x(), id), detail::kron(detail::spin1_y(), id),
            detail::kron(detail::spin1_z(), id), detail::kron(id, detail::spin1_z())};
}

/// Energy of basis state (m_S, m_I) in Hz.
inline double level_energy_hz(const HamiltonianParams& p, int m_s, int m_i) {
    return p.zero_field_hz * m_s * m_s + p.b_z_t * (p.gamma_e_hz_per_t * m_s + p.gamma_n_hz_per_t * m_i) +
           p.hyperfine_hz * m_s * m_i;
}

/// H = D S_z^2 + B_z (gamma_e S_z + gamma_n I_z) + A S_z I_z, in rad/s.
inline Matrix9 static_hamiltonian(const HamiltonianParams& p) {
    p.validate();
    const auto ops = build_operators();
    const Matrix9 h = p.zero_field_hz * ops.s_z * ops.s_z +
                      p.b_z_t * (p.gamma_e_hz_per_t * ops.s_z + p.gamma_n_hz_per_t * ops.i_z) +
                      p.hyperfine_hz * ops.s_z * ops.i_z;
    return two_pi * h;
}

struct Transition {
    int m_s;  // upper electron level reached from m_S = 0
    int m_i;
    double frequency_hz;
};

/// Single-quantum electron transitions |0, m_I> -> |+-1, m_I>.
inline std::vector<Transition> transition_frequencies(const HamiltonianParams& p) {
    p.validate();
    Eigen::SelfAdjointEigenSolver<Matrix9> solver(static_hamiltonian(p));
    std::array<double, 9> energy{};
    for (int k = 0; k < 9; ++k) {
        Eigen::Index label = 0;
        solver.eigenvectors().col(k).cwiseAbs().maxCoeff(&label);
        energy[static_cast<std::size_t>(label)] = solver.eigenvalues()(k);
    }
    std::vector<Transition> out;
    for (int m_s : {+1, -1}) {
        for (int m_i : spin_projections) {
            const double upper = energy[static_cast<std::size_t>(basis_index(m_s, m_i))];
            const double lower = energy[static_cast<std::size_t>(basis_index(0, m_i))];
            out.push_back({m_s, m_i, std::abs(upper - lower) / two_pi});
        }
    }
    return out;
}

/// m_S = 0 -> -1 line for a given nuclear projection, in Hz.
inline double lower_transition_hz(const HamiltonianParams& p, int m_i) {
    return level_energy_hz(p, -1, m_i) - level_energy_hz(p, 0, m_i);
}

/// Rotating-frame, rotating-wave Hamiltonian for a drive near the m_S 0 -> -1
/// line. The frame rotates the m_S = -1 manifold at the carrier frequency,
/// which sits carrier_detuning above the m_I = 0 line. The m_S = +1 levels are
/// left uncoupled.
inline Matrix9 drive_hamiltonian_rotating(const HamiltonianParams& p, const DriveParams& d) {
    p.validate();
    d.validate();
    if (std::abs(d.carrier_detuning_hz) > d.rabi_hz * 1e3)
        throw std::domain_error("drive_hamiltonian_rotating: carrier detuning outside modeled regime");

    const double carrier_hz = lower_transition_hz(p, 0) + d.carrier_detuning_hz;
    const double half_rabi = 0.5 * d.rabi_hz * (1.0 + d.amplitude_error);
    const cplx coupling = half_rabi * std::polar(1.0, -d.phase_rad);

    Matrix9 h = Matrix9::Zero();
    for (int m_s : spin_projections) {
        for (int m_i : spin_projections) {
            const int k = basis_index(m_s, m_i);
            h(k, k) = level_energy_hz(p, m_s, m_i) - (m_s == -1 ? carrier_hz : 0.0);
        }
    }
    for (int m_i : spin_projections) {
        const int up = basis_index(0, m_i);
        const int down = basis_index(-1, m_i);
        h(up, down) = coupling;
        h(down, up) = std::conj(coupling);
    }
    return two_pi * h;
}

/// exp(-i H dt) for a Hermitian H, via eigendecomposition. Construct once
/// and apply for many steps.
template <int N>
class Propagator {
public:
    using Matrix = Eigen::Matrix<cplx, N, N>;
    using Vector = Eigen::Matrix<cplx, N, 1>;

    explicit Propagator(const Matrix& h) : solver_(h) {
        if (solver_.info() != Eigen::Success) throw std::runtime_error("Propagator: eigendecomposition failed");
    }

    Matrix unitary(double dt) const {
        if (dt < 0.0) throw std::invalid_argument("Propagator: dt must be >= 0");
        const auto& v = solver_.eigenvectors();
        Eigen::Matrix<cplx, N, 1> phases;
        for (int i = 0; i < N; ++i) phases(i) = std::polar(1.0, -solver_.eigenvalues()(i) * dt);
        return v * phases.asDiagonal() * v.adjoint();
    }

    Vector apply(const Vector& state, double dt) const {
        if (dt < 0.0) throw std::invalid_argument("Propagator: dt must be >= 0");
        const auto& v = solver_.eigenvectors();
        Vector coeffs = v.adjoint() * state;
        for (int i = 0; i < N; ++i) coeffs(i) *= std::polar(1.0, -solver_.eigenvalues()(i) * dt);
        return v * coeffs;
    }

private:
    Eigen::SelfAdjointEigenSolver<Matrix> solver_;
};

inline Vector9 evolve(const Vector9& state, const Matrix9& h, double dt) {
    return Propagator<9>(h).apply(state, dt);
}

inline Vector9 basis_state(int m_s, int m_i) {
    Vector9 v = Vector9::Zero();
    v(basis_index(m_s, m_i)) = 1.0;
    return v;
}

// Reduced two-level model for one nuclear projection: component 0 is
// |m_S = 0>, component 1 is |m_S = -1>, in the same rotating frame as
// drive_hamiltonian_rotating (global phases dropped).

/// Detuning of the addressed m_I block, line minus carrier, in Hz.
inline double block_detuning_hz(const HamiltonianParams& p, const DriveParams& d, int m_i) {
    return lower_transition_hz(p, m_i) - lower_transition_hz(p, 0) - d.carrier_detuning_hz;
}

/// exp(-i H dt) for H = 2 pi [ (Omega/2)(cos phi sx + sin phi sy) + detuning |1><1| ].
inline Matrix2 two_level_propagator(double half_rabi_hz, double phase_rad, double detuning_hz, double dt) {
    // H = c0 I + a . sigma with a = 2 pi (h cos phi, h sin phi, -delta/2), c0 = pi delta.
    const double ax = two_pi * half_rabi_hz * std::cos(phase_rad);
    const double ay = two_pi * half_rabi_hz * std::sin(phase_rad);
    const double az = -std::numbers::pi * detuning_hz;
    const double norm = std::sqrt(ax * ax + ay * ay + az * az);
    const cplx global = std::polar(1.0, -std::numbers::pi * detuning_hz * dt);
    const double c = std::cos(norm * dt);
    const double s = norm > 0.0 ? std::sin(norm * dt) / norm : dt;
    const cplx i{0.0, 1.0};
    Matrix2 u;
    u(0, 0) = c - i * s * az;
    u(1, 1) = c + i * s * az;
    u(0, 1) = -i * s * (ax - i * ay);
    u(1, 0) = -i * s * (ax + i * ay);
    return global * u;
}

}  // namespace nvmag

#endif
