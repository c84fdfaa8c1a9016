#include "qsm/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

namespace qsm {

namespace {

// FFTW planning is not thread safe; execution on distinct buffers is.
std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

struct FftwBuffer {
    fftw_complex* p = nullptr;
    explicit FftwBuffer(std::size_t n) {
        p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
        if (!p) throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(p); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
};

} // namespace

ComplexVolume fft3(const ComplexVolume& vol, FftDirection direction) {
    const auto& g = vol.grid;
    const std::size_t n = g.voxel_count();
    FftwBuffer in(n), out(n);
    // fftw_complex is double[2], layout compatible with std::complex<double>
    static_assert(sizeof(fftw_complex) == sizeof(std::complex<double>));
    std::copy_n(vol.data.data(), n, reinterpret_cast<std::complex<double>*>(in.p));

    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(plan_mutex());
        // x-fastest layout: FFTW's row-major (n0,n1,n2) maps to (nz,ny,nx)
        plan = fftw_plan_dft_3d(g.dims[2], g.dims[1], g.dims[0], in.p, out.p,
                                direction == FftDirection::forward ? FFTW_FORWARD
                                                                   : FFTW_BACKWARD,
                                FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(plan_mutex());
        fftw_destroy_plan(plan);
    }

    ComplexVolume result(g);
    std::copy_n(reinterpret_cast<const std::complex<double>*>(out.p), n, result.data.data());
    if (direction == FftDirection::inverse) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (auto& c : result.data) c *= inv_n;
    }
    return result;
}

ComplexVolume fft_of_real(const RealVolume& vol) {
    ComplexVolume c(vol.grid);
    for (std::size_t i = 0; i < vol.data.size(); ++i) c.data[i] = vol.data[i];
    return fft3(c, FftDirection::forward);
}

RealVolume ifft_to_real(const ComplexVolume& spectrum, Unit unit, double scale) {
    ComplexVolume inv = fft3(spectrum, FftDirection::inverse);
    RealVolume out(spectrum.grid, unit);
    double max_im = 0.0, max_re = 0.0;
    for (std::size_t i = 0; i < inv.data.size(); ++i) {
        out.data[i] = inv.data[i].real();
        max_re = std::max(max_re, std::abs(inv.data[i].real()));
        max_im = std::max(max_im, std::abs(inv.data[i].imag()));
    }
    if (max_im > 1e-10 * std::max(max_re, scale))
        throw numeric_error("ifft_to_real: imaginary residue " + std::to_string(max_im) +
                            " exceeds tolerance; k-space multiplier lost Hermitian symmetry");
    return out;
}

std::vector<double> fft_freq(int n, double voxel_mm) {
    std::vector<double> f(static_cast<std::size_t>(n));
    const double extent = static_cast<double>(n) * voxel_mm;
    const int half = (n - 1) / 2; // last index with a nonnegative frequency
    for (int i = 0; i < n; ++i) {
        const int fi = (i <= half) ? i : i - n;
        f[static_cast<std::size_t>(i)] = static_cast<double>(fi) / extent;
    }
    return f;
}

KCoordAxes k_axes(const Grid3& grid) {
    return {fft_freq(grid.dims[0], grid.voxel_mm[0]),
            fft_freq(grid.dims[1], grid.voxel_mm[1]),
            fft_freq(grid.dims[2], grid.voxel_mm[2])};
}

namespace {

std::vector<double> conj_reindex(const std::vector<double>& f) {
    const std::size_t n = f.size();
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = f[(n - i) % n];
    return c;
}

} // namespace

KCoordAxes conj_k_axes(const Grid3& grid) {
    const KCoordAxes ax = k_axes(grid);
    return {conj_reindex(ax.kx), conj_reindex(ax.ky), conj_reindex(ax.kz)};
}

std::array<RealVolume, 3> k_coords(const Grid3& grid) {
    KCoordAxes ax = k_axes(grid);
    std::array<RealVolume, 3> out{RealVolume(grid, Unit::dimensionless),
                                  RealVolume(grid, Unit::dimensionless),
                                  RealVolume(grid, Unit::dimensionless)};
    std::size_t i = 0;
    for (int z = 0; z < grid.dims[2]; ++z)
        for (int y = 0; y < grid.dims[1]; ++y)
            for (int x = 0; x < grid.dims[0]; ++x, ++i) {
                out[0].data[i] = ax.kx[static_cast<std::size_t>(x)];
                out[1].data[i] = ax.ky[static_cast<std::size_t>(y)];
                out[2].data[i] = ax.kz[static_cast<std::size_t>(z)];
            }
    return out;
}

} // namespace qsm
