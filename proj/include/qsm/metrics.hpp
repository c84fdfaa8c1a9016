#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qsm/types.hpp"

namespace qsm {

/// Percent normalized error: 100 * |x - ref|_2 / |ref|_2 over masked voxels.
double nrmse(const RealVolume& x, const RealVolume& ref);
double nrmse(const RealVolume& x, const RealVolume& ref, const Mask& mask);

/// Plain root-mean-square error over masked voxels (same units as the data).
double rmse(const RealVolume& x, const RealVolume& ref);
double rmse(const RealVolume& x, const RealVolume& ref, const Mask& mask);

struct SsimParams {
    double k1 = 0.01;
    double k2 = 0.03;
    double sigma = 1.5; // Gaussian window std, voxels
    int window = 11;    // window size per axis, odd

    void validate() const;
};

/// Mean structural similarity over masked voxels. Local means, variances and
/// covariance use Gaussian window weights renormalized over the in-bounds
/// part of each window; the dynamic range L = max(ref) - min(ref) is taken
/// over the masked reference and must be positive.
double ssim3(const RealVolume& x, const RealVolume& ref, const SsimParams& params = {});
double ssim3(const RealVolume& x, const RealVolume& ref, const SsimParams& params,
             const Mask& mask);

struct HfenParams {
    int kernel_size = 15; // odd
    double sigma = 1.5;   // voxels

    void validate() const;
};

/// High-frequency error norm: 100 * |LoG(x) - LoG(ref)|_2 / |LoG(ref)|_2,
/// LoG applied by direct convolution with zero padding; the masked variant
/// restricts both norms to the mask.
double hfen(const RealVolume& x, const RealVolume& ref, const HfenParams& params = {});
double hfen(const RealVolume& x, const RealVolume& ref, const HfenParams& params,
            const Mask& mask);

/// Laplacian-of-Gaussian response (exposed for oracle tests and inspection).
RealVolume log_filter(const RealVolume& vol, const HfenParams& params = {});

/// Mask of voxels at least `border` voxels away from every face; pairs with
/// hfen to exclude the zero-padding halo (border = kernel_size/2).
Mask interior_mask(const Grid3& grid, int border);

struct RoiStat {
    std::string label;
    double mean_ppm = 0.0;
    double std_ppm = 0.0; // population standard deviation
    std::size_t count = 0;
};

std::vector<RoiStat> roi_stats(const RealVolume& vol,
                               const std::vector<std::pair<std::string, Mask>>& rois);

/// Mean absolute forward-model residual: mean over masked voxels of
/// |A X - b_measured| for field direction H.
double phase_consistency(const ReconState& X, const RealVolume& b_measured,
                         const FieldDirection& H = FieldDirection::z());
double phase_consistency(const ReconState& X, const RealVolume& b_measured, const Mask& mask,
                         const FieldDirection& H = FieldDirection::z());

/// One evaluation bundle with the parameters that produced it.
struct MetricReport {
    double rmse_percent = 0.0;
    double ssim = 0.0;
    double hfen_percent = 0.0;
    SsimParams ssim_params;
    HfenParams hfen_params;
};

MetricReport evaluate_metrics(const RealVolume& x, const RealVolume& ref,
                              const SsimParams& sp = {}, const HfenParams& hp = {});
MetricReport evaluate_metrics(const RealVolume& x, const RealVolume& ref, const Mask& mask,
                              const SsimParams& sp = {}, const HfenParams& hp = {});

/// JSON document with parameters embedded alongside each value.
std::string metric_report_json(const MetricReport& report);

} // namespace qsm
