#include "qsm/sti.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "qsm/fft.hpp"
#include "qsm/parallel.hpp"
#include "qsm/qvol.hpp"

namespace qsm {

namespace {

std::array<double, 9> mat_mul(const std::array<double, 9>& a, const std::array<double, 9>& b) {
    std::array<double, 9> r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
            r[i * 3 + j] = s;
        }
    return r;
}

void check_samples(const std::vector<OrientationSample>& samples, std::size_t min_count,
                   bool require_distinct, const char* what) {
    if (samples.size() < min_count)
        throw invalid_argument(std::string(what) + ": need at least " +
                               std::to_string(min_count) + " orientations, got " +
                               std::to_string(samples.size()));
    const Grid3& grid = samples[0].field.grid;
    for (const auto& s : samples) require_same_grid(grid, s.field.grid, what);
    if (!require_distinct) return;
    // The design row is even in H, so antiparallel directions duplicate too.
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            const auto& a = samples[i].h_sub.h;
            const auto& b = samples[j].h_sub.h;
            const double d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            if (std::abs(d) > 1.0 - 1e-12)
                throw invalid_argument(std::string(what) + ": field directions " +
                                       std::to_string(i) + " and " + std::to_string(j) +
                                       " are not distinct");
        }
}

} // namespace

RotationMatrix::RotationMatrix(const std::array<double, 9>& rows) : m(rows) {
    // R^T R = I
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += m[k * 3 + i] * m[k * 3 + j];
            const double expect = (i == j) ? 1.0 : 0.0;
            if (!std::isfinite(s) || std::abs(s - expect) > 1e-10)
                throw invalid_argument("RotationMatrix: matrix is not orthonormal");
        }
    const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) -
                       m[1] * (m[3] * m[8] - m[5] * m[6]) +
                       m[2] * (m[3] * m[7] - m[4] * m[6]);
    if (std::abs(det - 1.0) > 1e-10)
        throw invalid_argument("RotationMatrix: determinant must be +1 (no reflections)");
}

RotationMatrix RotationMatrix::axis_angle(const std::array<double, 3>& axis, double angle_rad) {
    const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    if (!std::isfinite(n) || n == 0.0)
        throw invalid_argument("RotationMatrix::axis_angle: axis must be nonzero");
    const double ux = axis[0] / n, uy = axis[1] / n, uz = axis[2] / n;
    const double c = std::cos(angle_rad), s = std::sin(angle_rad), v = 1.0 - c;
    return RotationMatrix({c + ux * ux * v, ux * uy * v - uz * s, ux * uz * v + uy * s,
                           uy * ux * v + uz * s, c + uy * uy * v, uy * uz * v - ux * s,
                           uz * ux * v - uy * s, uz * uy * v + ux * s, c + uz * uz * v});
}

RotationMatrix RotationMatrix::transpose() const {
    RotationMatrix r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[static_cast<std::size_t>(i) * 3 + j] = m[static_cast<std::size_t>(j) * 3 + i];
    return r;
}

RotationMatrix RotationMatrix::operator*(const RotationMatrix& o) const {
    return RotationMatrix(mat_mul(m, o.m));
}

FieldDirection h_from_rotation(const RotationMatrix& R) {
    // Third column of R; renormalized because R itself is only validated to 1e-10.
    return FieldDirection::normalized(R(0, 2), R(1, 2), R(2, 2));
}

TensorField rotate_tensor(const TensorField& chi_sub, const RotationMatrix& R) {
    TensorField out(chi_sub.grid);
    const std::array<double, 9> rt = R.transpose().m;
    const std::size_t n = chi_sub.grid.voxel_count();
    for (std::size_t i = 0; i < n; ++i)
        out.set_tensor_at(i, mat_mul(mat_mul(rt, chi_sub.tensor_at(i)), R.m));
    return out;
}

ReconState extract_labels(const TensorField& chi_lab) {
    ReconState labels(chi_lab.grid);
    labels.chi33 = chi_lab.channel_volume(5, Unit::ppm);
    labels.db_prime = offdiag_field(chi_lab.channel_volume(2, Unit::ppm),
                                    chi_lab.channel_volume(4, Unit::ppm));
    return labels;
}

StiFitResult sti_fit(const std::vector<OrientationSample>& samples) {
    check_samples(samples, 6, true, "sti_fit");
    const Grid3& grid = samples[0].field.grid;
    const std::size_t ns = samples.size();

    std::vector<ComplexVolume> spectra;
    spectra.reserve(ns);
    double scale = 0.0;
    for (const auto& s : samples) {
        spectra.push_back(fft_of_real(s.field));
        scale = std::max(scale, max_abs(s.field.data));
    }

    const KCoordAxes ax = k_axes(grid);
    const KCoordAxes cx = conj_k_axes(grid);
    std::array<ComplexVolume, 6> chan_spec;
    for (auto& cs : chan_spec) cs = ComplexVolume(grid);

    std::atomic<std::size_t> degenerate{0};
    const std::size_t nx = static_cast<std::size_t>(grid.dims[0]);
    const std::size_t ny = static_cast<std::size_t>(grid.dims[1]);
    parallel_chunks(grid.voxel_count(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t idx = std::max<std::size_t>(lo, 1); idx < hi; ++idx) {
            // idx 0 is DC and stays zero: zero-mean gauge
            const std::size_t x = idx % nx;
            const std::size_t y = (idx / nx) % ny;
            const std::size_t z = idx / (nx * ny);
            const double kx = ax.kx[x];
            const double ky = ax.ky[y];
            const double kz = ax.kz[z];
            const double ksq = kx * kx + ky * ky + kz * kz;

            Eigen::Matrix<double, 6, 6> M = Eigen::Matrix<double, 6, 6>::Zero();
            Eigen::Matrix<double, 6, 1> rhs_re = Eigen::Matrix<double, 6, 1>::Zero();
            Eigen::Matrix<double, 6, 1> rhs_im = Eigen::Matrix<double, 6, 1>::Zero();
            for (std::size_t n = 0; n < ns; ++n) {
                // same symmetrized rows as the forward simulation
                const auto a = field_coefficients_sym(kx, ky, kz, cx.kx[x], cx.ky[y],
                                                      cx.kz[z], ksq, samples[n].h_sub);
                const Eigen::Map<const Eigen::Matrix<double, 6, 1>> av(a.data());
                M.selfadjointView<Eigen::Lower>().rankUpdate(av);
                const std::complex<double> yv = spectra[n].data[idx];
                rhs_re += av * yv.real();
                rhs_im += av * yv.imag();
            }
            M = Eigen::Matrix<double, 6, 6>(M.selfadjointView<Eigen::Lower>());

            Eigen::LLT<Eigen::Matrix<double, 6, 6>> llt(M);
            if (llt.info() != Eigen::Success) {
                degenerate.fetch_add(1, std::memory_order_relaxed);
                const double ridge = 1e-12 * (1.0 + M.trace());
                llt.compute(M + ridge * Eigen::Matrix<double, 6, 6>::Identity());
                if (llt.info() != Eigen::Success) continue; // leave this k at zero
            }
            const Eigen::Matrix<double, 6, 1> x_re = llt.solve(rhs_re);
            const Eigen::Matrix<double, 6, 1> x_im = llt.solve(rhs_im);
            for (int c = 0; c < 6; ++c)
                chan_spec[static_cast<std::size_t>(c)].data[idx] = {x_re(c), x_im(c)};
        }
    });

    if (degenerate.load() * 100 > grid.voxel_count())
        throw numeric_error("sti_fit: " + std::to_string(degenerate.load()) +
                            " of " + std::to_string(grid.voxel_count()) +
                            " k-samples rank deficient (limit is 1%); add orientations or "
                            "spread the tilt angles");

    StiFitResult result;
    result.tensor = TensorField(grid);
    result.degenerate_k_count = degenerate.load();
    for (int c = 0; c < 6; ++c) {
        const RealVolume ch = ifft_to_real(chan_spec[static_cast<std::size_t>(c)], Unit::ppm, scale);
        std::copy(ch.data.begin(), ch.data.end(), result.tensor.channel(c).begin());
    }
    return result;
}

RealVolume cosmos_fit(const std::vector<OrientationSample>& samples) {
    // Repeated directions are allowed here: the fit degrades gracefully (the
    // shared zero cone falls below the denominator cutoff and is zeroed).
    check_samples(samples, 3, false, "cosmos_fit");
    const Grid3& grid = samples[0].field.grid;
    const std::size_t nv = grid.voxel_count();

    std::vector<double> num_re(nv, 0.0), num_im(nv, 0.0), den(nv, 0.0);
    double scale = 0.0;
    for (const auto& s : samples) {
        scale = std::max(scale, max_abs(s.field.data));
        const KSpaceKernel D = dipole_kernel(grid, s.h_sub);
        const ComplexVolume spec = fft_of_real(s.field);
        for (std::size_t i = 0; i < nv; ++i) {
            const double d = D.values[i];
            num_re[i] += d * spec.data[i].real();
            num_im[i] += d * spec.data[i].imag();
            den[i] += d * d;
        }
    }

    ComplexVolume chi_spec(grid);
    for (std::size_t i = 0; i < nv; ++i) {
        // Below the cutoff every orientation is blind to this k; report zero
        // rather than amplifying noise. DC always lands here (D(0) = 0).
        if (den[i] < 1e-6) continue;
        chi_spec.data[i] = {num_re[i] / den[i], num_im[i] / den[i]};
    }
    return ifft_to_real(chi_spec, Unit::ppm, scale);
}

std::vector<OrientationSample> load_orientation_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("orientation manifest: cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw io_error("orientation manifest '" + path + "': " + e.what());
    }
    if (!doc.is_array() || doc.empty())
        throw io_error("orientation manifest '" + path + "': expected a non-empty JSON array");

    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    std::vector<OrientationSample> samples;
    samples.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& e = doc[i];
        const std::string where = "orientation manifest '" + path + "' entry " + std::to_string(i);
        if (!e.is_object() || !e.contains("field_volume_path") ||
            !e["field_volume_path"].is_string())
            throw io_error(where + ": missing \"field_volume_path\"");
        const bool has_h = e.contains("H_sub");
        const bool has_r = e.contains("rotation_matrix");
        if (has_h == has_r)
            throw io_error(where + ": give exactly one of \"H_sub\" or \"rotation_matrix\"");

        FieldDirection h;
        try {
            if (has_h) {
                const auto v = e["H_sub"].get<std::vector<double>>();
                if (v.size() != 3) throw io_error(where + ": \"H_sub\" must have 3 components");
                const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
                if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6)
                    throw io_error(where + ": \"H_sub\" must be a unit vector");
                h = FieldDirection::normalized(v[0], v[1], v[2]);
            } else {
                const auto v = e["rotation_matrix"].get<std::vector<double>>();
                if (v.size() != 9)
                    throw io_error(where + ": \"rotation_matrix\" must have 9 row-major entries");
                std::array<double, 9> rows;
                std::copy(v.begin(), v.end(), rows.begin());
                h = h_from_rotation(RotationMatrix(rows));
            }
        } catch (const nlohmann::json::exception& ex) {
            throw io_error(where + ": " + ex.what());
        } catch (const invalid_argument& ex) {
            throw io_error(where + ": " + ex.what());
        }

        std::filesystem::path vol_path(e["field_volume_path"].get<std::string>());
        if (vol_path.is_relative()) vol_path = base / vol_path;
        samples.push_back({read_qvol_real(vol_path.string()), h});
    }
    return samples;
}

} // namespace qsm
