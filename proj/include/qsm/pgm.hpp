#pragma once

#include <string>

#include "qsm/types.hpp"

namespace qsm {

/// Write one slice as an 8-bit binary PGM (P5). Values are clipped to
/// [window_lo, window_hi] and mapped linearly to 0..255, rounding half up.
/// axis: 0=x, 1=y, 2=z; the remaining two axes become image columns/rows.
void export_slice(const RealVolume& vol, int axis, int index, double window_lo,
                  double window_hi, const std::string& path);

} // namespace qsm
