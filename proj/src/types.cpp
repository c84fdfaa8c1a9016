#include "qsm/types.hpp"

#include <algorithm>
#include <numeric>

namespace qsm {

std::string unit_name(Unit u) {
    switch (u) {
    case Unit::ppm: return "ppm";
    case Unit::radians: return "radians";
    case Unit::dimensionless: return "dimensionless";
    }
    return "dimensionless";
}

Unit unit_from_name(const std::string& name) {
    if (name == "ppm") return Unit::ppm;
    if (name == "radians") return Unit::radians;
    if (name == "dimensionless") return Unit::dimensionless;
    throw io_error("unknown unit tag '" + name + "'");
}

std::size_t Mask::count() const {
    std::size_t n = 0;
    for (auto v : data) n += (v != 0);
    return n;
}

RealVolume TensorField::channel_volume(int c, Unit unit) const {
    RealVolume out(grid, unit);
    auto ch = channel(c);
    std::copy(ch.begin(), ch.end(), out.data.begin());
    return out;
}

FieldDirection FieldDirection::normalized(double x, double y, double z) {
    const double n = std::sqrt(x * x + y * y + z * z);
    if (!(n > 0.0) || !std::isfinite(n))
        throw invalid_argument("FieldDirection: cannot normalize zero or non-finite vector");
    FieldDirection d;
    d.h = {x / n, y / n, z / n};
    // renormalize once more; x/n etc. are within an ulp of unit norm already
    const double m = std::sqrt(d.h[0] * d.h[0] + d.h[1] * d.h[1] + d.h[2] * d.h[2]);
    d.h = {d.h[0] / m, d.h[1] / m, d.h[2] / m};
    return d;
}

ReconState::ReconState(RealVolume c, RealVolume d)
    : chi33(std::move(c)), db_prime(std::move(d)) {
    require_same_grid(chi33.grid, db_prime.grid, "ReconState");
}

void require_same_grid(const Grid3& a, const Grid3& b, const char* what) {
    if (a != b)
        throw invalid_argument(std::string(what) + ": grid mismatch");
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double l2_norm(std::span<const double> v) {
    return std::sqrt(dot(v, v));
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = std::accumulate(v.begin(), v.end(), 0.0);
    return s / static_cast<double>(v.size());
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace qsm
