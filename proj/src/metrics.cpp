#include "qsm/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "qsm/dipole.hpp"
#include "qsm/parallel.hpp"

namespace qsm {

namespace {

Mask full_mask(const Grid3& grid) { return Mask(grid, true); }

void require_mask(const Grid3& grid, const Mask& mask, const char* what) {
    require_same_grid(grid, mask.grid, what);
    if (mask.count() == 0) throw invalid_argument(std::string(what) + ": mask is empty");
}

/// Correlate one axis with an arbitrary tap vector, zero padding outside.
std::vector<double> filter_axis(const std::vector<double>& in, const Grid3& grid, int axis,
                                const std::vector<double>& taps) {
    const int radius = static_cast<int>(taps.size()) / 2;
    const int n = grid.dims[axis];
    std::vector<double> out(in.size(), 0.0);
    const auto& dims = grid.dims;
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x) {
                const int pos = (axis == 0) ? x : (axis == 1) ? y : z;
                const int lo = std::max(0, pos - radius) - pos;
                const int hi = std::min(n - 1, pos + radius) - pos;
                double acc = 0.0;
                for (int t = lo; t <= hi; ++t) {
                    const std::size_t j =
                        (axis == 0) ? grid.index(x + t, y, z)
                        : (axis == 1) ? grid.index(x, y + t, z)
                                      : grid.index(x, y, z + t);
                    acc += taps[static_cast<std::size_t>(t + radius)] * in[j];
                }
                out[grid.index(x, y, z)] = acc;
            }
    return out;
}

std::vector<double> filter_separable(std::vector<double> v, const Grid3& grid,
                                     const std::vector<double>& taps) {
    for (int axis = 0; axis < 3; ++axis) v = filter_axis(v, grid, axis, taps);
    return v;
}

} // namespace

double nrmse(const RealVolume& x, const RealVolume& ref) {
    return nrmse(x, ref, full_mask(x.grid));
}

double nrmse(const RealVolume& x, const RealVolume& ref, const Mask& mask) {
    require_same_grid(x.grid, ref.grid, "nrmse");
    require_mask(x.grid, mask, "nrmse");
    double err = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        if (!mask.data[i]) continue;
        const double d = x.data[i] - ref.data[i];
        err += d * d;
        den += ref.data[i] * ref.data[i];
    }
    if (den <= 0.0) throw invalid_argument("nrmse: reference norm is zero within the mask");
    return 100.0 * std::sqrt(err / den);
}

double rmse(const RealVolume& x, const RealVolume& ref) {
    return rmse(x, ref, full_mask(x.grid));
}

double rmse(const RealVolume& x, const RealVolume& ref, const Mask& mask) {
    require_same_grid(x.grid, ref.grid, "rmse");
    require_mask(x.grid, mask, "rmse");
    double err = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        if (!mask.data[i]) continue;
        const double d = x.data[i] - ref.data[i];
        err += d * d;
        ++n;
    }
    return std::sqrt(err / static_cast<double>(n));
}

void SsimParams::validate() const {
    if (window < 1 || window % 2 == 0)
        throw invalid_argument("SsimParams: window must be a positive odd size");
    if (!std::isfinite(sigma) || sigma <= 0.0)
        throw invalid_argument("SsimParams: sigma must be positive");
    if (!std::isfinite(k1) || k1 <= 0.0 || !std::isfinite(k2) || k2 <= 0.0)
        throw invalid_argument("SsimParams: k1, k2 must be positive");
}

double ssim3(const RealVolume& x, const RealVolume& ref, const SsimParams& params) {
    return ssim3(x, ref, params, full_mask(x.grid));
}

double ssim3(const RealVolume& x, const RealVolume& ref, const SsimParams& params,
             const Mask& mask) {
    require_same_grid(x.grid, ref.grid, "ssim3");
    require_mask(x.grid, mask, "ssim3");
    params.validate();
    const Grid3& grid = x.grid;
    const std::size_t n = grid.voxel_count();

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.data[i]) continue;
        lo = std::min(lo, ref.data[i]);
        hi = std::max(hi, ref.data[i]);
    }
    const double L = hi - lo;
    if (!(L > 0.0)) throw invalid_argument("ssim3: reference dynamic range is zero");
    const double c1 = (params.k1 * L) * (params.k1 * L);
    const double c2 = (params.k2 * L) * (params.k2 * L);

    // Unnormalized Gaussian taps; dividing every filtered field by the
    // filtered ones-volume renormalizes each truncated boundary window,
    // because separable weight sums factor per axis.
    std::vector<double> taps(static_cast<std::size_t>(params.window));
    const int c = params.window / 2;
    for (int i = 0; i < params.window; ++i)
        taps[static_cast<std::size_t>(i)] =
            std::exp(-0.5 * (i - c) * (i - c) / (params.sigma * params.sigma));

    std::vector<double> xy(n), xx(n), yy(n);
    for (std::size_t i = 0; i < n; ++i) {
        xy[i] = x.data[i] * ref.data[i];
        xx[i] = x.data[i] * x.data[i];
        yy[i] = ref.data[i] * ref.data[i];
    }
    const std::vector<double> w = filter_separable(std::vector<double>(n, 1.0), grid, taps);
    const std::vector<double> fx = filter_separable(x.data, grid, taps);
    const std::vector<double> fy = filter_separable(ref.data, grid, taps);
    const std::vector<double> fxx = filter_separable(std::move(xx), grid, taps);
    const std::vector<double> fyy = filter_separable(std::move(yy), grid, taps);
    const std::vector<double> fxy = filter_separable(std::move(xy), grid, taps);

    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.data[i]) continue;
        const double mx = fx[i] / w[i];
        const double my = fy[i] / w[i];
        const double sxx = fxx[i] / w[i] - mx * mx;
        const double syy = fyy[i] / w[i] - my * my;
        const double sxy = fxy[i] / w[i] - mx * my;
        const double num = (2.0 * mx * my + c1) * (2.0 * sxy + c2);
        const double den = (mx * mx + my * my + c1) * (sxx + syy + c2);
        acc += num / den;
        ++count;
    }
    return acc / static_cast<double>(count);
}

void HfenParams::validate() const {
    if (kernel_size < 3 || kernel_size % 2 == 0)
        throw invalid_argument("HfenParams: kernel size must be odd and >= 3");
    if (!std::isfinite(sigma) || sigma <= 0.0)
        throw invalid_argument("HfenParams: sigma must be positive");
}

namespace {

/// 3D Laplacian-of-Gaussian taps: normalized Gaussian times (r^2 - 3 sigma^2)
/// / sigma^4, then mean subtracted so a constant input maps to zero away from
/// the zero-padded boundary.
std::vector<double> log_kernel(const HfenParams& params) {
    const int k = params.kernel_size;
    const int c = k / 2;
    const double s2 = params.sigma * params.sigma;
    std::vector<double> kern(static_cast<std::size_t>(k) * k * k);
    double gauss_sum = 0.0;
    std::size_t i = 0;
    for (int z = -c; z <= c; ++z)
        for (int y = -c; y <= c; ++y)
            for (int x = -c; x <= c; ++x, ++i) {
                const double r2 = double(x) * x + double(y) * y + double(z) * z;
                kern[i] = std::exp(-0.5 * r2 / s2);
                gauss_sum += kern[i];
            }
    i = 0;
    double mean_val = 0.0;
    for (int z = -c; z <= c; ++z)
        for (int y = -c; y <= c; ++y)
            for (int x = -c; x <= c; ++x, ++i) {
                const double r2 = double(x) * x + double(y) * y + double(z) * z;
                kern[i] = kern[i] / gauss_sum * (r2 - 3.0 * s2) / (s2 * s2);
                mean_val += kern[i];
            }
    mean_val /= static_cast<double>(kern.size());
    for (double& v : kern) v -= mean_val;
    return kern;
}

} // namespace

RealVolume log_filter(const RealVolume& vol, const HfenParams& params) {
    params.validate();
    const std::vector<double> kern = log_kernel(params);
    const int c = params.kernel_size / 2;
    const Grid3& grid = vol.grid;
    RealVolume out(grid, vol.unit);
    parallel_chunks(static_cast<std::size_t>(grid.dims[2]), [&](std::size_t zlo, std::size_t zhi) {
    for (int z = static_cast<int>(zlo); z < static_cast<int>(zhi); ++z)
        for (int y = 0; y < grid.dims[1]; ++y)
            for (int x = 0; x < grid.dims[0]; ++x) {
                double acc = 0.0;
                std::size_t ki = 0;
                for (int dz = -c; dz <= c; ++dz) {
                    const int zz = z + dz;
                    if (zz < 0 || zz >= grid.dims[2]) {
                        ki += static_cast<std::size_t>(params.kernel_size) * params.kernel_size;
                        continue;
                    }
                    for (int dy = -c; dy <= c; ++dy) {
                        const int yy = y + dy;
                        if (yy < 0 || yy >= grid.dims[1]) {
                            ki += static_cast<std::size_t>(params.kernel_size);
                            continue;
                        }
                        for (int dx = -c; dx <= c; ++dx, ++ki) {
                            const int xx = x + dx;
                            if (xx < 0 || xx >= grid.dims[0]) continue;
                            acc += kern[ki] * vol.at(xx, yy, zz);
                        }
                    }
                }
                out.at(x, y, z) = acc;
            }
    });
    return out;
}

double hfen(const RealVolume& x, const RealVolume& ref, const HfenParams& params) {
    return hfen(x, ref, params, full_mask(x.grid));
}

double hfen(const RealVolume& x, const RealVolume& ref, const HfenParams& params,
            const Mask& mask) {
    require_same_grid(x.grid, ref.grid, "hfen");
    require_mask(x.grid, mask, "hfen");
    const RealVolume lx = log_filter(x, params);
    const RealVolume lref = log_filter(ref, params);
    double err = 0.0, den = 0.0;
    for (std::size_t i = 0; i < lx.data.size(); ++i) {
        if (!mask.data[i]) continue;
        const double d = lx.data[i] - lref.data[i];
        err += d * d;
        den += lref.data[i] * lref.data[i];
    }
    if (den <= 0.0) throw invalid_argument("hfen: filtered reference is zero within the mask");
    return 100.0 * std::sqrt(err / den);
}

Mask interior_mask(const Grid3& grid, int border) {
    if (border < 0) throw invalid_argument("interior_mask: border must be >= 0");
    Mask m(grid);
    for (int z = border; z < grid.dims[2] - border; ++z)
        for (int y = border; y < grid.dims[1] - border; ++y)
            for (int x = border; x < grid.dims[0] - border; ++x) m.set(x, y, z, true);
    return m;
}

std::vector<RoiStat> roi_stats(const RealVolume& vol,
                               const std::vector<std::pair<std::string, Mask>>& rois) {
    std::vector<RoiStat> out;
    out.reserve(rois.size());
    for (const auto& [label, mask] : rois) {
        require_same_grid(vol.grid, mask.grid, "roi_stats");
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < vol.data.size(); ++i)
            if (mask.data[i]) {
                sum += vol.data[i];
                ++n;
            }
        if (n == 0) throw invalid_argument("roi_stats: ROI '" + label + "' is empty");
        const double m = sum / static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < vol.data.size(); ++i)
            if (mask.data[i]) var += (vol.data[i] - m) * (vol.data[i] - m);
        out.push_back({label, m, std::sqrt(var / static_cast<double>(n)), n});
    }
    return out;
}

double phase_consistency(const ReconState& X, const RealVolume& b_measured,
                         const FieldDirection& H) {
    return phase_consistency(X, b_measured, full_mask(b_measured.grid), H);
}

double phase_consistency(const ReconState& X, const RealVolume& b_measured, const Mask& mask,
                         const FieldDirection& H) {
    require_same_grid(X.grid(), b_measured.grid, "phase_consistency");
    require_mask(b_measured.grid, mask, "phase_consistency");
    const RealVolume sim = apply_A(X, H);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < sim.data.size(); ++i) {
        if (!mask.data[i]) continue;
        acc += std::abs(sim.data[i] - b_measured.data[i]);
        ++n;
    }
    return acc / static_cast<double>(n);
}

MetricReport evaluate_metrics(const RealVolume& x, const RealVolume& ref, const SsimParams& sp,
                              const HfenParams& hp) {
    return evaluate_metrics(x, ref, full_mask(x.grid), sp, hp);
}

MetricReport evaluate_metrics(const RealVolume& x, const RealVolume& ref, const Mask& mask,
                              const SsimParams& sp, const HfenParams& hp) {
    MetricReport r;
    r.ssim_params = sp;
    r.hfen_params = hp;
    r.rmse_percent = nrmse(x, ref, mask);
    r.ssim = ssim3(x, ref, sp, mask);
    r.hfen_percent = hfen(x, ref, hp, mask);
    return r;
}

std::string metric_report_json(const MetricReport& report) {
    nlohmann::json j;
    j["rmse"] = {{"value_percent", report.rmse_percent},
                 {"normalization", "percent_of_reference_norm"}};
    j["ssim"] = {{"value", report.ssim},
                 {"k1", report.ssim_params.k1},
                 {"k2", report.ssim_params.k2},
                 {"window", report.ssim_params.window},
                 {"sigma", report.ssim_params.sigma}};
    j["hfen"] = {{"value_percent", report.hfen_percent},
                 {"kernel_size", report.hfen_params.kernel_size},
                 {"sigma", report.hfen_params.sigma},
                 {"boundary", "zero_padding"}};
    return j.dump(2);
}

} // namespace qsm
