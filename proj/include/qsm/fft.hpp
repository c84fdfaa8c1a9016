#pragma once

#include "qsm/types.hpp"

namespace qsm {

enum class FftDirection { forward, inverse };

/// 3D DFT with the convention fixed project-wide: forward is the plain
/// unnormalized sum, inverse carries the 1/(nx*ny*nz) factor, so
/// fft3(fft3(v, forward), inverse) == v up to rounding.
ComplexVolume fft3(const ComplexVolume& vol, FftDirection direction);

/// Forward transform of a real volume.
ComplexVolume fft_of_real(const RealVolume& vol);

/// Inverse transform that returns the real part. The imaginary residue is
/// checked against 1e-10 * max(|output|, scale) and discarded; a larger
/// residue means a kernel lost its Hermitian symmetry and throws.
/// `scale` should be the max-abs of the real data that entered the pipeline.
RealVolume ifft_to_real(const ComplexVolume& spectrum, Unit unit, double scale);

/// Signed FFT sample frequencies for one axis, in cycles/mm: index n maps to
/// f(n)/(N*d) with f the standard layout 0,1,...,floor((N-1)/2),-ceil...,-1.
std::vector<double> fft_freq(int n, double voxel_mm);

struct KCoordAxes {
    std::vector<double> kx, ky, kz; // per-axis, cycles/mm
};

/// Per-axis k coordinates for a grid; the cheap form used by kernel builders.
KCoordAxes k_axes(const Grid3& grid);

/// Frequencies of the conjugate-partner bins: entry i holds the frequency of
/// bin (N - i) mod N, the bin carrying the conjugate spectrum of real data.
/// Equals -f(i) except at DC and the even-N Nyquist bin, which partner with
/// themselves. Kernel builders average a multiplier over (k, conj k) so the
/// multiplied spectrum of a real volume stays Hermitian on even grids.
KCoordAxes conj_k_axes(const Grid3& grid);

/// Full k-coordinate volumes (kx, ky, kz), broadcast from k_axes.
/// Index (0,0,0) is DC with k = 0.
std::array<RealVolume, 3> k_coords(const Grid3& grid);

} // namespace qsm
