#pragma once

#include "qsm/types.hpp"

namespace qsm {

/// Overlapping patch tiling. Stride is patch_size*(1-overlap_fraction); the
/// final patch on each axis is clamped to the boundary. Volumes smaller than
/// the patch size are zero-padded up to it and cropped again after stitching.
struct PatchLayout {
    int patch_size = 48;
    double overlap_fraction = 1.0 / 3.0;
    std::array<int, 3> padded_dims{};            // >= patch_size on every axis
    std::array<std::vector<int>, 3> axis_origins; // origin lists per axis
    std::vector<std::array<int, 3>> origins;      // cartesian product, z-major

    std::size_t patch_count() const { return origins.size(); }
};

PatchLayout make_patch_layout(const Grid3& grid, int patch_size = 48,
                              double overlap_fraction = 1.0 / 3.0);

std::vector<RealVolume> patch_split(const RealVolume& vol, const PatchLayout& layout);

RealVolume patch_stitch(const std::vector<RealVolume>& patches, const PatchLayout& layout,
                        const Grid3& grid);

} // namespace qsm
