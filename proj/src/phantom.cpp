#include "qsm/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qsm/fft.hpp"
#include "qsm/parallel.hpp"
#include "qsm/rng.hpp"

namespace qsm {

namespace {

constexpr int kSupersample = 8;

double sq(double v) { return v * v; }

} // namespace

void SpherePhantom::validate(const Grid3& grid) const {
    grid.validate();
    if (!std::isfinite(radius_mm) || radius_mm <= 0.0)
        throw invalid_argument("SpherePhantom: radius must be positive");
    if (!std::isfinite(delta_chi_ppm))
        throw invalid_argument("SpherePhantom: delta_chi must be finite");
    for (int a = 0; a < 3; ++a) {
        const double margin = 2.0 * grid.voxel_mm[a];
        const double extent = grid.dims[a] * grid.voxel_mm[a];
        if (!std::isfinite(center_mm[a]) || center_mm[a] - radius_mm < margin ||
            center_mm[a] + radius_mm > extent - margin)
            throw invalid_argument(
                "SpherePhantom: sphere must fit inside the grid with a 2-voxel margin "
                "(axis " + std::to_string(a) + ")");
    }
}

RealVolume sphere_chi(const Grid3& grid, const SpherePhantom& spec) {
    spec.validate(grid);
    RealVolume out(grid, Unit::ppm);
    const double r2 = sq(spec.radius_mm);
    // half-diagonal of a voxel: beyond radius + this, a voxel cannot intersect
    const double half_diag = 0.5 * std::sqrt(sq(grid.voxel_mm[0]) + sq(grid.voxel_mm[1]) +
                                             sq(grid.voxel_mm[2]));
    parallel_chunks(static_cast<std::size_t>(grid.dims[2]), [&](std::size_t zlo, std::size_t zhi) {
    for (int z = static_cast<int>(zlo); z < static_cast<int>(zhi); ++z)
        for (int y = 0; y < grid.dims[1]; ++y)
            for (int x = 0; x < grid.dims[0]; ++x) {
                const double cx = (x + 0.5) * grid.voxel_mm[0] - spec.center_mm[0];
                const double cy = (y + 0.5) * grid.voxel_mm[1] - spec.center_mm[1];
                const double cz = (z + 0.5) * grid.voxel_mm[2] - spec.center_mm[2];
                const double dist = std::sqrt(sq(cx) + sq(cy) + sq(cz));
                if (dist >= spec.radius_mm + half_diag) continue;
                if (dist + half_diag <= spec.radius_mm) {
                    out.at(x, y, z) = spec.delta_chi_ppm;
                    continue;
                }
                // surface voxel: fraction of subcell centers inside
                int inside = 0;
                for (int sz = 0; sz < kSupersample; ++sz)
                    for (int sy = 0; sy < kSupersample; ++sy)
                        for (int sx = 0; sx < kSupersample; ++sx) {
                            const double px =
                                cx + ((sx + 0.5) / kSupersample - 0.5) * grid.voxel_mm[0];
                            const double py =
                                cy + ((sy + 0.5) / kSupersample - 0.5) * grid.voxel_mm[1];
                            const double pz =
                                cz + ((sz + 0.5) / kSupersample - 0.5) * grid.voxel_mm[2];
                            if (sq(px) + sq(py) + sq(pz) <= r2) ++inside;
                        }
                out.at(x, y, z) = spec.delta_chi_ppm * inside /
                                  (kSupersample * kSupersample * kSupersample);
            }
    });
    return out;
}

RealVolume sphere_field_analytic(const Grid3& grid, const SpherePhantom& spec,
                                 const FieldDirection& H) {
    spec.validate(grid);
    RealVolume out(grid, Unit::ppm);
    const double a3 = spec.radius_mm * sq(spec.radius_mm);
    for (int z = 0; z < grid.dims[2]; ++z)
        for (int y = 0; y < grid.dims[1]; ++y)
            for (int x = 0; x < grid.dims[0]; ++x) {
                const double rx = (x + 0.5) * grid.voxel_mm[0] - spec.center_mm[0];
                const double ry = (y + 0.5) * grid.voxel_mm[1] - spec.center_mm[1];
                const double rz = (z + 0.5) * grid.voxel_mm[2] - spec.center_mm[2];
                const double rho2 = sq(rx) + sq(ry) + sq(rz);
                if (rho2 <= sq(spec.radius_mm)) continue; // Lorentz convention: 0 inside
                const double rho = std::sqrt(rho2);
                const double cos_t = (rx * H[0] + ry * H[1] + rz * H[2]) / rho;
                out.at(x, y, z) = (spec.delta_chi_ppm / 3.0) * (a3 / (rho2 * rho)) *
                                  (3.0 * sq(cos_t) - 1.0);
            }
    return out;
}

void RandomTensorSpec::validate(const Grid3& grid) const {
    grid.validate();
    if (!std::isfinite(amplitude_ppm) || amplitude_ppm < 0.0)
        throw invalid_argument("RandomTensorSpec: amplitude must be >= 0");
    const double max_voxel = std::max({grid.voxel_mm[0], grid.voxel_mm[1], grid.voxel_mm[2]});
    if (!std::isfinite(correlation_length_mm) || correlation_length_mm < max_voxel)
        throw invalid_argument("RandomTensorSpec: correlation length must be >= 1 voxel");
    if (!std::isfinite(anisotropy_fraction) || anisotropy_fraction < 0.0 ||
        anisotropy_fraction > 1.0)
        throw invalid_argument("RandomTensorSpec: anisotropy fraction must be in [0, 1]");
}

namespace {

/// One smooth unit field: white noise -> Gaussian low-pass -> exact zero mean
/// -> population std rescaled to 1. Distinct salts give independent fields.
std::vector<double> smooth_unit_field(const Grid3& grid, std::uint64_t seed, std::uint64_t salt,
                                      double sigma_mm) {
    const std::size_t n = grid.voxel_count();
    RandomStream rng(seed, salt);
    ComplexVolume noise(grid);
    double noise_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = rng.normal();
        noise.data[i] = v;
        noise_max = std::max(noise_max, std::abs(v));
    }
    ComplexVolume spec = fft3(noise, FftDirection::forward);
    const KCoordAxes ax = k_axes(grid);
    const double gauss = 2.0 * sq(std::numbers::pi) * sq(sigma_mm);
    std::size_t idx = 0;
    for (int z = 0; z < grid.dims[2]; ++z)
        for (int y = 0; y < grid.dims[1]; ++y)
            for (int x = 0; x < grid.dims[0]; ++x, ++idx) {
                const double ksq = sq(ax.kx[static_cast<std::size_t>(x)]) +
                                   sq(ax.ky[static_cast<std::size_t>(y)]) +
                                   sq(ax.kz[static_cast<std::size_t>(z)]);
                spec.data[idx] *= std::exp(-gauss * ksq);
            }
    RealVolume field = ifft_to_real(spec, Unit::dimensionless, noise_max);

    const double m = mean(field.data);
    for (double& v : field.data) v -= m;
    double var = 0.0;
    for (double v : field.data) var += v * v;
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (sd > 0.0)
        for (double& v : field.data) v /= sd;
    return std::move(field.data);
}

} // namespace

TensorField random_tensor(const Grid3& grid, const RandomTensorSpec& spec) {
    spec.validate(grid);
    TensorField out(grid);
    if (spec.amplitude_ppm == 0.0) return out;

    const double a = spec.anisotropy_fraction;
    const double iso_w = std::sqrt(1.0 - a * a) * spec.amplitude_ppm;
    const double dev_w = a * spec.amplitude_ppm;

    std::vector<double> iso;
    if (iso_w != 0.0) iso = smooth_unit_field(grid, spec.seed, 0, spec.correlation_length_mm);

    const std::size_t n = grid.voxel_count();
    for (int c = 0; c < TensorField::kChannels; ++c) {
        auto chan = out.channel(c);
        const bool diagonal = TensorField::kChannelIndex[static_cast<std::size_t>(c)][0] ==
                              TensorField::kChannelIndex[static_cast<std::size_t>(c)][1];
        if (diagonal && iso_w != 0.0)
            for (std::size_t i = 0; i < n; ++i) chan[i] = iso_w * iso[i];
        if (dev_w != 0.0) {
            const std::vector<double> dev =
                smooth_unit_field(grid, spec.seed, static_cast<std::uint64_t>(c) + 1,
                                  spec.correlation_length_mm);
            for (std::size_t i = 0; i < n; ++i) chan[i] += dev_w * dev[i];
        }
    }
    return out;
}

std::vector<RotationMatrix> orientation_set(int n, double max_tilt_deg, std::uint64_t seed) {
    if (n < 1) throw invalid_argument("orientation_set: n must be >= 1");
    if (!std::isfinite(max_tilt_deg) || max_tilt_deg <= 0.0 || max_tilt_deg > 90.0)
        throw invalid_argument("orientation_set: max tilt must be in (0, 90] degrees");

    std::vector<RotationMatrix> out;
    out.reserve(static_cast<std::size_t>(n));
    out.push_back(RotationMatrix::identity());

    RandomStream rng(seed);
    const double azimuth0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    constexpr double golden_angle = 2.0 * std::numbers::pi * (1.0 - 1.0 / std::numbers::phi);
    for (int i = 1; i < n; ++i) {
        const double tilt = (max_tilt_deg * i / (n - 1)) * std::numbers::pi / 180.0;
        const double azimuth = azimuth0 + golden_angle * i;
        // tilt about an in-plane axis; the azimuth walks the axis around z
        out.push_back(RotationMatrix::axis_angle({std::cos(azimuth), std::sin(azimuth), 0.0},
                                                 tilt));
    }
    return out;
}

RealVolume add_noise(const RealVolume& vol, double sigma, std::uint64_t seed) {
    if (!std::isfinite(sigma) || sigma < 0.0)
        throw invalid_argument("add_noise: sigma must be >= 0");
    RealVolume out = vol;
    if (sigma == 0.0) return out;
    RandomStream rng(seed);
    for (double& v : out.data) v += sigma * rng.normal();
    return out;
}

} // namespace qsm
