#include "qsm/dipole.hpp"

#include <cmath>
#include <numbers>

namespace qsm {

KSpaceKernel dipole_kernel(const Grid3& grid, const FieldDirection& H) {
    // The value is averaged with the conjugate-partner bin (only the even-N
    // Nyquist planes differ, and only for tilted H); a real field then maps
    // to a real field through this multiplier.
    KSpaceKernel kernel(grid);
    const KCoordAxes ax = k_axes(grid);
    const KCoordAxes cx = conj_k_axes(grid);
    std::size_t i = 0;
    for (int z = 0; z < grid.dims[2]; ++z) {
        const double kz = ax.kz[static_cast<std::size_t>(z)];
        const double kzc = cx.kz[static_cast<std::size_t>(z)];
        for (int y = 0; y < grid.dims[1]; ++y) {
            const double ky = ax.ky[static_cast<std::size_t>(y)];
            const double kyc = cx.ky[static_cast<std::size_t>(y)];
            for (int x = 0; x < grid.dims[0]; ++x, ++i) {
                const double kx = ax.kx[static_cast<std::size_t>(x)];
                const double kxc = cx.kx[static_cast<std::size_t>(x)];
                const double ksq = kx * kx + ky * ky + kz * kz;
                if (ksq == 0.0) {
                    kernel.values[i] = 0.0;
                    continue;
                }
                const double kh = kx * H[0] + ky * H[1] + kz * H[2];
                const double khc = kxc * H[0] + kyc * H[1] + kzc * H[2];
                kernel.values[i] = 1.0 / 3.0 - (kh * kh + khc * khc) / (2.0 * ksq);
            }
        }
    }
    return kernel;
}

std::array<double, 6> field_coefficients(double kx, double ky, double kz, double ksq,
                                         const FieldDirection& H) {
    const double h1 = H[0], h2 = H[1], h3 = H[2];
    const double c = (kx * h1 + ky * h2 + kz * h3) / ksq;
    return {h1 * h1 / 3.0 - c * kx * h1,
            2.0 * h1 * h2 / 3.0 - c * (kx * h2 + ky * h1),
            2.0 * h1 * h3 / 3.0 - c * (kx * h3 + kz * h1),
            h2 * h2 / 3.0 - c * ky * h2,
            2.0 * h2 * h3 / 3.0 - c * (ky * h3 + kz * h2),
            h3 * h3 / 3.0 - c * kz * h3};
}

std::array<double, 6> field_coefficients_sym(double kx, double ky, double kz, double kxc,
                                             double kyc, double kzc, double ksq,
                                             const FieldDirection& H) {
    const auto a = field_coefficients(kx, ky, kz, ksq, H);
    const auto b = field_coefficients(kxc, kyc, kzc, ksq, H);
    std::array<double, 6> out;
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = 0.5 * (a[c] + b[c]);
    return out;
}

RealVolume offdiag_field(const RealVolume& chi13, const RealVolume& chi23) {
    require_same_grid(chi13.grid, chi23.grid, "offdiag_field");
    const Grid3& g = chi13.grid;
    const double scale = std::max(max_abs(chi13.data), max_abs(chi23.data));

    ComplexVolume f13 = fft_of_real(chi13);
    ComplexVolume f23 = fft_of_real(chi23);

    const KCoordAxes ax = k_axes(g);
    const KCoordAxes cx = conj_k_axes(g);
    ComplexVolume spec(g);
    std::size_t i = 0;
    for (int z = 0; z < g.dims[2]; ++z) {
        const double kz = ax.kz[static_cast<std::size_t>(z)];
        const double kzc = cx.kz[static_cast<std::size_t>(z)];
        for (int y = 0; y < g.dims[1]; ++y) {
            const double ky = ax.ky[static_cast<std::size_t>(y)];
            const double kyc = cx.ky[static_cast<std::size_t>(y)];
            for (int x = 0; x < g.dims[0]; ++x, ++i) {
                const double kx = ax.kx[static_cast<std::size_t>(x)];
                const double kxc = cx.kx[static_cast<std::size_t>(x)];
                const double ksq = kx * kx + ky * ky + kz * kz;
                if (ksq == 0.0) {
                    spec.data[i] = 0.0;
                    continue;
                }
                // per-channel multipliers, conjugate-bin averaged like the kernel
                const double m13 = -(kz * kx + kzc * kxc) / (2.0 * ksq);
                const double m23 = -(kz * ky + kzc * kyc) / (2.0 * ksq);
                spec.data[i] = m13 * f13.data[i] + m23 * f23.data[i];
            }
        }
    }
    return ifft_to_real(spec, Unit::ppm, scale);
}

namespace {

RealVolume kernel_multiply(const RealVolume& x, const KSpaceKernel& D) {
    require_same_grid(x.grid, D.grid, "kernel_multiply");
    ComplexVolume spec = fft_of_real(x);
    for (std::size_t i = 0; i < spec.data.size(); ++i) spec.data[i] *= D.values[i];
    return ifft_to_real(spec, Unit::ppm, max_abs(x.data));
}

} // namespace

RealVolume apply_A(const ReconState& X, const KSpaceKernel& D) {
    require_same_grid(X.chi33.grid, X.db_prime.grid, "apply_A");
    RealVolume out = kernel_multiply(X.chi33, D);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += X.db_prime.data[i];
    return out;
}

RealVolume apply_A(const ReconState& X, const FieldDirection& H) {
    return apply_A(X, dipole_kernel(X.grid(), H));
}

ReconState apply_AH(const RealVolume& b, const KSpaceKernel& D) {
    ReconState out(b.grid);
    out.chi33 = kernel_multiply(b, D);
    out.db_prime = b;
    out.db_prime.unit = Unit::ppm;
    return out;
}

ReconState apply_AH(const RealVolume& b, const FieldDirection& H) {
    return apply_AH(b, dipole_kernel(b.grid, H));
}

ReconState gradient_step(const ReconState& X, const RealVolume& b, double t,
                         const KSpaceKernel& D) {
    if (!(t > 0.0))
        throw invalid_argument("gradient_step: step size must be positive");
    require_same_grid(X.chi33.grid, b.grid, "gradient_step");

    RealVolume residual = apply_A(X, D);
    for (std::size_t i = 0; i < residual.data.size(); ++i) residual.data[i] -= b.data[i];
    ReconState grad = apply_AH(residual, D);

    ReconState out = X;
    state_axpy(out, -t, grad);
    return out;
}

ReconState gradient_step(const ReconState& X, const RealVolume& b, double t,
                         const FieldDirection& H) {
    return gradient_step(X, b, t, dipole_kernel(X.grid(), H));
}

RealVolume simulate_field_sti(const TensorField& chi, const FieldDirection& H) {
    const Grid3& g = chi.grid;
    std::array<ComplexVolume, 6> spectra;
    double scale = 0.0;
    for (int c = 0; c < TensorField::kChannels; ++c) {
        RealVolume ch = chi.channel_volume(c);
        scale = std::max(scale, max_abs(ch.data));
        spectra[static_cast<std::size_t>(c)] = fft_of_real(ch);
    }

    const KCoordAxes ax = k_axes(g);
    const KCoordAxes cx = conj_k_axes(g);
    ComplexVolume out(g);
    std::size_t i = 0;
    for (int z = 0; z < g.dims[2]; ++z) {
        const double kz = ax.kz[static_cast<std::size_t>(z)];
        const double kzc = cx.kz[static_cast<std::size_t>(z)];
        for (int y = 0; y < g.dims[1]; ++y) {
            const double ky = ax.ky[static_cast<std::size_t>(y)];
            const double kyc = cx.ky[static_cast<std::size_t>(y)];
            for (int x = 0; x < g.dims[0]; ++x, ++i) {
                const double kx = ax.kx[static_cast<std::size_t>(x)];
                const double kxc = cx.kx[static_cast<std::size_t>(x)];
                const double ksq = kx * kx + ky * ky + kz * kz;
                if (ksq == 0.0) {
                    out.data[i] = 0.0;
                    continue;
                }
                const auto coeff = field_coefficients_sym(kx, ky, kz, kxc, kyc, kzc, ksq, H);
                std::complex<double> acc = 0.0;
                for (int c = 0; c < TensorField::kChannels; ++c)
                    acc += coeff[static_cast<std::size_t>(c)] *
                           spectra[static_cast<std::size_t>(c)].data[i];
                out.data[i] = acc;
            }
        }
    }
    return ifft_to_real(out, Unit::ppm, scale);
}

RealVolume echo_combine(const EchoSet& echoes) {
    if (echoes.phases.empty())
        throw invalid_argument("echo_combine: echo list is empty");
    if (echoes.phases.size() != echoes.echo_times_s.size())
        throw invalid_argument("echo_combine: one echo time required per phase volume");
    if (!(echoes.b0_tesla > 0.0))
        throw invalid_argument("echo_combine: B0 must be positive");
    if (!(echoes.gamma_hz_per_t > 0.0))
        throw invalid_argument("echo_combine: gamma must be positive");

    const Grid3& g = echoes.phases.front().grid;
    RealVolume out(g, Unit::ppm);
    const double inv_count = 1.0 / static_cast<double>(echoes.phases.size());
    for (std::size_t e = 0; e < echoes.phases.size(); ++e) {
        const double te = echoes.echo_times_s[e];
        if (!(te > 0.0))
            throw invalid_argument("echo_combine: echo times must be positive");
        require_same_grid(echoes.phases[e].grid, g, "echo_combine");
        const double w =
            1e6 / (2.0 * std::numbers::pi * echoes.gamma_hz_per_t * te * echoes.b0_tesla) *
            inv_count;
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] += w * echoes.phases[e].data[i];
    }
    return out;
}

double state_dot(const ReconState& a, const ReconState& b) {
    return dot(a.chi33.data, b.chi33.data) + dot(a.db_prime.data, b.db_prime.data);
}

double state_norm(const ReconState& a) { return std::sqrt(state_dot(a, a)); }

void state_axpy(ReconState& y, double alpha, const ReconState& x) {
    for (std::size_t i = 0; i < y.chi33.data.size(); ++i) {
        y.chi33.data[i] += alpha * x.chi33.data[i];
        y.db_prime.data[i] += alpha * x.db_prime.data[i];
    }
}

void state_scale(ReconState& x, double alpha) {
    for (double& v : x.chi33.data) v *= alpha;
    for (double& v : x.db_prime.data) v *= alpha;
}

} // namespace qsm
