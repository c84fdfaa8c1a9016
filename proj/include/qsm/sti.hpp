#pragma once

#include <string>

#include "qsm/dipole.hpp"
#include "qsm/types.hpp"

namespace qsm {

/// Proper rotation, validated on construction: R^T R = I and det R = +1
/// within 1e-10. Maps lab-frame vectors to the subject frame, v_sub = R v_lab.
struct RotationMatrix {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1}; // row-major

    RotationMatrix() = default;
    explicit RotationMatrix(const std::array<double, 9>& rows);

    static RotationMatrix identity() { return {}; }
    static RotationMatrix axis_angle(const std::array<double, 3>& axis, double angle_rad);

    double operator()(int r, int c) const { return m[static_cast<std::size_t>(r) * 3 + c]; }
    RotationMatrix transpose() const;
    RotationMatrix operator*(const RotationMatrix& o) const;
};

/// One scan: normalized field map on the shared subject-frame grid plus the
/// field direction in that frame (given directly or derived from R).
struct OrientationSample {
    RealVolume field; // ppm
    FieldDirection h_sub;
};

/// Field direction in the subject frame implied by a rotation: H_sub = R z.
FieldDirection h_from_rotation(const RotationMatrix& R);

/// Per-voxel congruence transform chi_lab = R^T chi_sub R.
TensorField rotate_tensor(const TensorField& chi_sub, const RotationMatrix& R);

/// The (chi33, dB') pair used as reconstruction targets.
ReconState extract_labels(const TensorField& chi_lab);

struct StiFitResult {
    TensorField tensor;
    std::size_t degenerate_k_count = 0; // k-samples that needed the ridge fallback
};

/// Per-k linear least squares over >= 6 orientations for the six symmetric
/// tensor channels. DC components are pinned to zero (zero-mean gauge).
/// Throws numeric_error if more than 1% of k-samples are rank deficient.
StiFitResult sti_fit(const std::vector<OrientationSample>& samples);

/// Per-k scalar least squares over >= 3 orientations:
/// chi(k) = sum_n D_n F(b_n) / sum_n D_n^2, zeroed where the denominator
/// falls below 1e-6 (the DC sample always does).
RealVolume cosmos_fit(const std::vector<OrientationSample>& samples);

/// Orientation manifest: JSON list of {"field_volume_path": ..., "H_sub":[3]}
/// or {"field_volume_path": ..., "rotation_matrix":[9 row-major]} entries.
/// Volume paths are resolved relative to the manifest directory.
std::vector<OrientationSample> load_orientation_manifest(const std::string& path);

} // namespace qsm
