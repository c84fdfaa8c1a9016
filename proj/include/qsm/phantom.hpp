#pragma once

#include "qsm/sti.hpp"
#include "qsm/types.hpp"

namespace qsm {

// Spatial convention used by the phantoms: voxel (x,y,z) is the cube
// [x*dx,(x+1)*dx) x ... with its center at ((x+0.5)dx, (y+0.5)dy, (z+0.5)dz),
// so the grid covers [0, nx*dx] x [0, ny*dy] x [0, nz*dz] in mm.

/// Homogeneous sphere of susceptibility contrast delta_chi against a zero
/// background. Must fit inside the grid with at least a 2-voxel margin.
struct SpherePhantom {
    std::array<double, 3> center_mm{0.0, 0.0, 0.0};
    double radius_mm = 1.0;
    double delta_chi_ppm = 1.0;

    void validate(const Grid3& grid) const;
};

/// Rasterize the sphere. Voxels cut by the surface get the partial-volume
/// fraction of the voxel cube inside the sphere, estimated by 8x8x8
/// supersampling of subcell centers.
RealVolume sphere_chi(const Grid3& grid, const SpherePhantom& spec);

/// Closed-form field of the sphere in ppm (Lorentz-corrected convention,
/// matching the 1/3 in the dipole kernel): outside,
/// dB(r) = (delta_chi/3) (a/|r-c|)^3 (3 cos^2 theta - 1) with theta measured
/// from H; identically 0 inside. Sampled at voxel centers.
RealVolume sphere_field_analytic(const Grid3& grid, const SpherePhantom& spec,
                                 const FieldDirection& H);

/// Smooth random tensor field: per-channel seeded white noise, Gaussian
/// low-pass with the given correlation length, exactly zero-mean, rescaled to
/// the requested standard deviation. Diagonal channels share one isotropic
/// component: diag_c = sqrt(1-a^2) iso + a dev_c, offdiag_c = a dev_c, with
/// a the anisotropy fraction, so a = 0 gives chi11 = chi22 = chi33 bitwise
/// and zero off-diagonals while the diagonal std stays at `amplitude`.
struct RandomTensorSpec {
    std::uint64_t seed = 0;
    double correlation_length_mm = 4.0;
    double amplitude_ppm = 0.05;
    double anisotropy_fraction = 0.3;

    void validate(const Grid3& grid) const;
};

TensorField random_tensor(const Grid3& grid, const RandomTensorSpec& spec);

/// Deterministic scan-orientation protocol: n rotations, first one identity
/// (supine), tilt angles max_tilt*i/(n-1), azimuths stepped by the golden
/// angle from a seeded offset.
std::vector<RotationMatrix> orientation_set(int n, double max_tilt_deg, std::uint64_t seed);

/// Add seeded i.i.d. Gaussian noise. sigma = 0 returns the input bit-exactly.
RealVolume add_noise(const RealVolume& vol, double sigma, std::uint64_t seed);

} // namespace qsm
