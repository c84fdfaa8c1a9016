#pragma once

#include <string>
#include <variant>

#include "qsm/types.hpp"

namespace qsm {

// QVOL on-disk format: a JSON header at <path> plus raw little-endian float32
// samples at <path>.raw (x-fastest; 6-channel tensors channel-major in the
// order xx,xy,xz,yy,yz,zz). Header fields: dims, voxel_size_mm, dtype:"f32",
// order:"x-fastest", channels:1|6, unit.

void write_qvol(const RealVolume& vol, const std::string& path);
void write_qvol(const TensorField& field, const std::string& path);

using QVolContent = std::variant<RealVolume, TensorField>;

QVolContent read_qvol(const std::string& path);

/// Read and require a scalar volume (throws io_error on a tensor file).
RealVolume read_qvol_real(const std::string& path);
/// Read and require a 6-channel tensor field.
TensorField read_qvol_tensor(const std::string& path);

std::string qvol_data_path(const std::string& header_path);

} // namespace qsm
