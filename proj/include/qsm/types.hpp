#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qsm/errors.hpp"

namespace qsm {

/// Regular 3D sampling grid. Voxel sizes are in millimetres and may be
/// anisotropic. Linear data order is x-fastest: index = x + nx*(y + ny*z).
struct Grid3 {
    std::array<int, 3> dims{1, 1, 1};
    std::array<double, 3> voxel_mm{1.0, 1.0, 1.0};

    Grid3() = default;
    Grid3(int nx, int ny, int nz, double dx = 1.0, double dy = 1.0, double dz = 1.0)
        : dims{nx, ny, nz}, voxel_mm{dx, dy, dz} {
        validate();
    }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] < 1)
                throw invalid_argument("Grid3: dims must be >= 1 in every axis");
            if (!std::isfinite(voxel_mm[a]) || voxel_mm[a] <= 0.0)
                throw invalid_argument("Grid3: voxel sizes must be finite and positive");
        }
    }

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
    }

    bool operator==(const Grid3& o) const { return dims == o.dims && voxel_mm == o.voxel_mm; }
    bool operator!=(const Grid3& o) const { return !(*this == o); }
};

enum class Unit { ppm, radians, dimensionless };

std::string unit_name(Unit u);
Unit unit_from_name(const std::string& name);

/// Scalar field on a Grid3, stored as double for computation; serialized as f32.
struct RealVolume {
    Grid3 grid;
    Unit unit = Unit::dimensionless;
    std::vector<double> data;

    RealVolume() = default;
    RealVolume(const Grid3& g, Unit u, double fill = 0.0)
        : grid(g), unit(u), data(g.voxel_count(), fill) {}

    double& at(int x, int y, int z) { return data[grid.index(x, y, z)]; }
    double at(int x, int y, int z) const { return data[grid.index(x, y, z)]; }
};

struct ComplexVolume {
    Grid3 grid;
    std::vector<std::complex<double>> data;

    ComplexVolume() = default;
    explicit ComplexVolume(const Grid3& g) : grid(g), data(g.voxel_count()) {}

    std::complex<double>& at(int x, int y, int z) { return data[grid.index(x, y, z)]; }
    const std::complex<double>& at(int x, int y, int z) const { return data[grid.index(x, y, z)]; }
};

/// Boolean companion volume (brain masks, ROI masks, interior masks).
struct Mask {
    Grid3 grid;
    std::vector<std::uint8_t> data;

    Mask() = default;
    explicit Mask(const Grid3& g, bool fill = false)
        : grid(g), data(g.voxel_count(), fill ? 1 : 0) {}

    bool at(int x, int y, int z) const { return data[grid.index(x, y, z)] != 0; }
    void set(int x, int y, int z, bool v) { data[grid.index(x, y, z)] = v ? 1 : 0; }
    std::size_t count() const;
};

/// Symmetric second-order susceptibility tensor per voxel, six stored channels
/// in the fixed order (xx, xy, xz, yy, yz, zz), ppm, channel-major layout.
struct TensorField {
    Grid3 grid;
    std::vector<double> data; // size 6 * voxel_count, channel-major

    static constexpr int kChannels = 6;
    // (row, col) of each stored channel in the 3x3 tensor
    static constexpr std::array<std::array<int, 2>, 6> kChannelIndex{
        {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}}};

    TensorField() = default;
    explicit TensorField(const Grid3& g) : grid(g), data(g.voxel_count() * kChannels, 0.0) {}

    std::span<double> channel(int c) {
        return {data.data() + static_cast<std::size_t>(c) * grid.voxel_count(),
                grid.voxel_count()};
    }
    std::span<const double> channel(int c) const {
        return {data.data() + static_cast<std::size_t>(c) * grid.voxel_count(),
                grid.voxel_count()};
    }

    RealVolume channel_volume(int c, Unit unit = Unit::ppm) const;

    /// Assemble the symmetric 3x3 tensor at one voxel.
    std::array<double, 9> tensor_at(std::size_t i) const {
        const std::size_t n = grid.voxel_count();
        const double xx = data[i], xy = data[n + i], xz = data[2 * n + i];
        const double yy = data[3 * n + i], yz = data[4 * n + i], zz = data[5 * n + i];
        return {xx, xy, xz, xy, yy, yz, xz, yz, zz};
    }
    void set_tensor_at(std::size_t i, const std::array<double, 9>& m) {
        const std::size_t n = grid.voxel_count();
        data[i] = m[0];
        data[n + i] = m[1];
        data[2 * n + i] = m[2];
        data[3 * n + i] = m[4];
        data[4 * n + i] = m[5];
        data[5 * n + i] = m[8];
    }
};

/// Unit direction of the main field. Must already have unit norm.
struct FieldDirection {
    std::array<double, 3> h{0.0, 0.0, 1.0};

    FieldDirection() = default;
    FieldDirection(double hx, double hy, double hz) : h{hx, hy, hz} {
        const double n = std::sqrt(hx * hx + hy * hy + hz * hz);
        if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-12)
            throw invalid_argument("FieldDirection: vector must have unit norm");
    }

    static FieldDirection z() { return FieldDirection(0.0, 0.0, 1.0); }

    /// Normalize an arbitrary nonzero vector (CLI convenience).
    static FieldDirection normalized(double x, double y, double z);

    double operator[](int i) const { return h[i]; }
};

/// Real k-space multiplier sampled on the FFT grid of `grid`.
struct KSpaceKernel {
    Grid3 grid;
    std::vector<double> values;

    KSpaceKernel() = default;
    explicit KSpaceKernel(const Grid3& g) : grid(g), values(g.voxel_count(), 0.0) {}
};

/// Two-channel unknown of the dipole model: [chi33; dB'] on a shared grid.
struct ReconState {
    RealVolume chi33;
    RealVolume db_prime;

    ReconState() = default;
    ReconState(const Grid3& g)
        : chi33(g, Unit::ppm), db_prime(g, Unit::ppm) {}
    ReconState(RealVolume c, RealVolume d);

    const Grid3& grid() const { return chi33.grid; }
};

// ---- small volume arithmetic helpers -------------------------------------

void require_same_grid(const Grid3& a, const Grid3& b, const char* what);

double max_abs(std::span<const double> v);
double l2_norm(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);
double mean(std::span<const double> v);
bool all_finite(std::span<const double> v);

} // namespace qsm
