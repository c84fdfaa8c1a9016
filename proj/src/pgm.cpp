#include "qsm/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace qsm {

void export_slice(const RealVolume& vol, int axis, int index, double window_lo,
                  double window_hi, const std::string& path) {
    if (axis < 0 || axis > 2)
        throw invalid_argument("export_slice: axis must be 0, 1 or 2");
    if (index < 0 || index >= vol.grid.dims[axis])
        throw invalid_argument("export_slice: slice index out of range");
    if (!(window_lo < window_hi))
        throw invalid_argument("export_slice: window must satisfy lo < hi");

    const int a0 = (axis == 0) ? 1 : 0;        // image columns
    const int a1 = (axis == 2) ? 1 : 2;        // image rows
    const int width = vol.grid.dims[a0];
    const int height = vol.grid.dims[a1];

    std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * height);
    const double span = window_hi - window_lo;
    std::array<int, 3> c{};
    c[axis] = index;
    for (int r = 0; r < height; ++r) {
        c[a1] = r;
        for (int col = 0; col < width; ++col) {
            c[a0] = col;
            double v = vol.at(c[0], c[1], c[2]);
            v = std::clamp(v, window_lo, window_hi);
            const double mapped = (v - window_lo) / span * 255.0;
            const int byte = std::clamp(static_cast<int>(std::floor(mapped + 0.5)), 0, 255);
            pixels[static_cast<std::size_t>(r) * width + col] =
                static_cast<unsigned char>(byte);
        }
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("export_slice: cannot open '" + path + "' for writing");
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
    if (!f) throw io_error("export_slice: short write to '" + path + "'");
}

} // namespace qsm
