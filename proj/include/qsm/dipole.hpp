#pragma once

#include "qsm/fft.hpp"
#include "qsm/types.hpp"

namespace qsm {

/// Default gyromagnetic ratio for protons, Hz/T.
inline constexpr double kDefaultGammaHzPerT = 42.577478e6;

/// Dipole kernel D(k) = 1/3 - (k.H)^2/|k|^2, with D(DC) = 0. The DC pin makes
/// the mean susceptibility unobservable by construction (zero-mean gauge).
/// Samples are conjugate-bin averaged; only even-N Nyquist planes under a
/// tilted H differ from the raw formula (see field_coefficients_sym).
KSpaceKernel dipole_kernel(const Grid3& grid, const FieldDirection& H);

/// Per-k multipliers of the six tensor channels (xx,xy,xz,yy,yz,zz) in the
/// field model: F(dB) = sum_c coeff_c * F(chi_c). Shared by the forward
/// simulation and the multi-orientation fit so the two stay consistent.
std::array<double, 6> field_coefficients(double kx, double ky, double kz, double ksq,
                                         const FieldDirection& H);

/// field_coefficients averaged with the conjugate-partner bin (kxc,kyc,kzc)
/// from conj_k_axes. The cross terms k_a*k_b are odd across an even-N Nyquist
/// plane, so the raw row would break the Hermitian symmetry of multiplied real
/// spectra there; averaging restores it and equals taking the real part of the
/// naive evaluation. ksq is shared (the partner bin has the same |k|).
std::array<double, 6> field_coefficients_sym(double kx, double ky, double kz, double kxc,
                                             double kyc, double kzc, double ksq,
                                             const FieldDirection& H);

/// Field perturbation from the off-diagonal channels:
/// dB' = F^-1[ -(kz/|k|^2) (kx F(chi_xz) + ky F(chi_yz)) ], DC multiplier 0.
RealVolume offdiag_field(const RealVolume& chi13, const RealVolume& chi23);

/// Two-channel forward operator: A X = F^-1(D F(chi33)) + dB'.
RealVolume apply_A(const ReconState& X, const KSpaceKernel& D);
RealVolume apply_A(const ReconState& X, const FieldDirection& H = FieldDirection::z());

/// Adjoint: A^H b = [F^-1(D F(b)); b]. D is a real even multiplier, so the
/// scalar branch is self-adjoint; the identity branch passes b through.
ReconState apply_AH(const RealVolume& b, const KSpaceKernel& D);
ReconState apply_AH(const RealVolume& b, const FieldDirection& H = FieldDirection::z());

/// One explicit gradient step on g(X) = 1/2 |AX - b|^2:
/// returns X - t A^H (A X - b). Requires t > 0.
ReconState gradient_step(const ReconState& X, const RealVolume& b, double t,
                         const KSpaceKernel& D);
ReconState gradient_step(const ReconState& X, const RealVolume& b, double t,
                         const FieldDirection& H = FieldDirection::z());

/// Full tensor forward model: per-k contraction of the six channels with
/// field_coefficients for direction H. DC term is set to 0; output is real.
RealVolume simulate_field_sti(const TensorField& chi, const FieldDirection& H);

/// Multi-echo phase normalization: one tissue phase volume per echo.
struct EchoSet {
    std::vector<RealVolume> phases;     // radians
    std::vector<double> echo_times_s;   // one per phase volume, > 0
    double b0_tesla = 3.0;
    double gamma_hz_per_t = kDefaultGammaHzPerT;
};

/// Normalized field map in ppm: 1e6 * mean_e[ phase_e / (2 pi gamma TE_e B0) ].
RealVolume echo_combine(const EchoSet& echoes);

// ---- ReconState vector helpers (used by the solvers) ----------------------

double state_dot(const ReconState& a, const ReconState& b);
double state_norm(const ReconState& a);
/// y += alpha * x
void state_axpy(ReconState& y, double alpha, const ReconState& x);
void state_scale(ReconState& x, double alpha);

} // namespace qsm
