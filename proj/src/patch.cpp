#include "qsm/patch.hpp"

#include <algorithm>
#include <cmath>

namespace qsm {

namespace {

std::vector<int> axis_origin_list(int dim, int patch, int stride) {
    std::vector<int> origins;
    if (dim <= patch) {
        origins.push_back(0);
        return origins;
    }
    int p = 0;
    while (true) {
        if (p + patch >= dim) {
            const int last = dim - patch;
            if (origins.empty() || origins.back() != last) origins.push_back(last);
            break;
        }
        origins.push_back(p);
        p += stride;
    }
    return origins;
}

} // namespace

PatchLayout make_patch_layout(const Grid3& grid, int patch_size, double overlap_fraction) {
    if (patch_size <= 0)
        throw invalid_argument("make_patch_layout: patch size must be positive");
    if (!(overlap_fraction >= 0.0) || overlap_fraction >= 1.0)
        throw invalid_argument("make_patch_layout: overlap fraction must be in [0, 1)");

    PatchLayout layout;
    layout.patch_size = patch_size;
    layout.overlap_fraction = overlap_fraction;
    const int stride = std::max(
        1, static_cast<int>(std::llround(patch_size * (1.0 - overlap_fraction))));

    for (int a = 0; a < 3; ++a) {
        layout.padded_dims[a] = std::max(grid.dims[a], patch_size);
        layout.axis_origins[a] = axis_origin_list(layout.padded_dims[a], patch_size, stride);
    }
    for (int oz : layout.axis_origins[2])
        for (int oy : layout.axis_origins[1])
            for (int ox : layout.axis_origins[0])
                layout.origins.push_back({ox, oy, oz});
    return layout;
}

std::vector<RealVolume> patch_split(const RealVolume& vol, const PatchLayout& layout) {
    const Grid3& g = vol.grid;
    const int p = layout.patch_size;
    const Grid3 patch_grid(p, p, p, g.voxel_mm[0], g.voxel_mm[1], g.voxel_mm[2]);

    std::vector<RealVolume> patches;
    patches.reserve(layout.patch_count());
    for (const auto& o : layout.origins) {
        RealVolume patch(patch_grid, vol.unit);
        for (int z = 0; z < p; ++z) {
            const int vz = o[2] + z;
            if (vz >= g.dims[2]) continue; // padded region stays zero
            for (int y = 0; y < p; ++y) {
                const int vy = o[1] + y;
                if (vy >= g.dims[1]) continue;
                for (int x = 0; x < p; ++x) {
                    const int vx = o[0] + x;
                    if (vx >= g.dims[0]) continue;
                    patch.at(x, y, z) = vol.at(vx, vy, vz);
                }
            }
        }
        patches.push_back(std::move(patch));
    }
    return patches;
}

RealVolume patch_stitch(const std::vector<RealVolume>& patches, const PatchLayout& layout,
                        const Grid3& grid) {
    if (patches.size() != layout.patch_count())
        throw invalid_argument("patch_stitch: patch count does not match layout");
    const int p = layout.patch_size;
    for (const auto& patch : patches)
        if (patch.grid.dims != std::array<int, 3>{p, p, p})
            throw invalid_argument("patch_stitch: patch dims do not match layout");

    // Mean accumulated as base + sum of deltas, so that voxels covered by
    // identical values come back bit-exact regardless of the coverage count.
    const Grid3 padded(layout.padded_dims[0], layout.padded_dims[1], layout.padded_dims[2],
                       grid.voxel_mm[0], grid.voxel_mm[1], grid.voxel_mm[2]);
    std::vector<double> base(padded.voxel_count(), 0.0);
    std::vector<double> delta_sum(padded.voxel_count(), 0.0);
    std::vector<int> count(padded.voxel_count(), 0);

    for (std::size_t pi = 0; pi < patches.size(); ++pi) {
        const auto& o = layout.origins[pi];
        const auto& patch = patches[pi];
        for (int z = 0; z < p; ++z)
            for (int y = 0; y < p; ++y)
                for (int x = 0; x < p; ++x) {
                    const std::size_t vi = padded.index(o[0] + x, o[1] + y, o[2] + z);
                    const double v = patch.at(x, y, z);
                    if (count[vi] == 0)
                        base[vi] = v;
                    else
                        delta_sum[vi] += v - base[vi];
                    ++count[vi];
                }
    }

    RealVolume out(grid, patches.empty() ? Unit::dimensionless : patches.front().unit);
    for (int z = 0; z < grid.dims[2]; ++z)
        for (int y = 0; y < grid.dims[1]; ++y)
            for (int x = 0; x < grid.dims[0]; ++x) {
                const std::size_t vi = padded.index(x, y, z);
                if (count[vi] == 0)
                    throw invalid_argument("patch_stitch: layout leaves a voxel uncovered");
                out.at(x, y, z) = base[vi] + delta_sum[vi] / count[vi];
            }
    return out;
}

} // namespace qsm
