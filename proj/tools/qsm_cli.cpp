// qsm: command-line surface for the dipole-model toolkit. Subcommands chain
// into the full synthetic pipeline: phantom -> forward -> invert -> metrics,
// plus multi-orientation fits, slice export, and a self-checking demo.
//
// Exit codes: 0 success, 2 usage or precondition, 3 numeric failure, 4 I/O.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "qsm/dipole.hpp"
#include "qsm/fft.hpp"
#include "qsm/inversion.hpp"
#include "qsm/metrics.hpp"
#include "qsm/parallel.hpp"
#include "qsm/patch.hpp"
#include "qsm/pgm.hpp"
#include "qsm/phantom.hpp"
#include "qsm/qvol.hpp"
#include "qsm/rng.hpp"
#include "qsm/sti.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool g_verbose = false;

void vlog(const std::string& msg) {
    if (g_verbose) std::cerr << "qsm: " << msg << "\n";
}

qsm::Grid3 grid_from_flags(std::vector<int> dims, std::vector<double> voxel) {
    if (dims.size() == 1) dims = {dims[0], dims[0], dims[0]};
    if (voxel.size() == 1) voxel = {voxel[0], voxel[0], voxel[0]};
    return qsm::Grid3(dims[0], dims[1], dims[2], voxel[0], voxel[1], voxel[2]);
}

qsm::FieldDirection direction_from_flags(const std::vector<double>& h,
                                         const std::vector<double>& r) {
    if (!r.empty()) {
        std::array<double, 9> rows{};
        std::copy(r.begin(), r.end(), rows.begin());
        return qsm::h_from_rotation(qsm::RotationMatrix(rows));
    }
    if (!h.empty()) return qsm::FieldDirection::normalized(h[0], h[1], h[2]);
    return qsm::FieldDirection::z();
}

qsm::Mask load_mask(const std::string& path, const qsm::Grid3& grid) {
    const qsm::RealVolume v = qsm::read_qvol_real(path);
    qsm::require_same_grid(grid, v.grid, "mask");
    qsm::Mask m(v.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i) m.data[i] = v.data[i] != 0.0 ? 1 : 0;
    return m;
}

void write_text(const std::string& text, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << text << "\n";
        return;
    }
    std::ofstream f(out, std::ios::trunc);
    if (!f) throw qsm::io_error("cannot open '" + out + "' for writing");
    f << text << "\n";
    if (!f) throw qsm::io_error("short write to '" + out + "'");
}

void write_volume(const qsm::RealVolume& vol, const std::string& path) {
    qsm::write_qvol(vol, path);
    std::cout << "wrote " << path << " dims=" << vol.grid.dims[0] << "x" << vol.grid.dims[1]
              << "x" << vol.grid.dims[2] << " unit=" << qsm::unit_name(vol.unit) << "\n";
}

void write_tensor(const qsm::TensorField& field, const std::string& path) {
    qsm::write_qvol(field, path);
    std::cout << "wrote " << path << " dims=" << field.grid.dims[0] << "x"
              << field.grid.dims[1] << "x" << field.grid.dims[2] << " channels=6\n";
}

// ---- phantom ---------------------------------------------------------------

struct PhantomArgs {
    std::string kind;
    std::vector<int> dims;
    std::vector<double> voxel{1.0};
    std::string out_dir = ".";
    double radius = 8.0;
    double dchi = 1.0;
    std::vector<double> center;
    std::uint64_t seed = 1;
    double corr = 4.0;
    double amplitude = 0.05;
    double anisotropy = 0.3;
    int orientations = 0;
    double max_tilt = 45.0;
};

int cmd_phantom(const PhantomArgs& a) {
    const qsm::Grid3 grid = grid_from_flags(a.dims, a.voxel);
    fs::create_directories(a.out_dir);
    const fs::path out(a.out_dir);

    if (a.kind == "sphere") {
        qsm::SpherePhantom spec;
        spec.radius_mm = a.radius;
        spec.delta_chi_ppm = a.dchi;
        if (a.center.empty())
            for (int ax = 0; ax < 3; ++ax)
                spec.center_mm[ax] = 0.5 * grid.dims[ax] * grid.voxel_mm[ax];
        else
            spec.center_mm = {a.center[0], a.center[1], a.center[2]};
        vlog("rasterizing sphere phantom");
        write_volume(qsm::sphere_chi(grid, spec), (out / "chi.qvol").string());
        write_volume(qsm::sphere_field_analytic(grid, spec, qsm::FieldDirection::z()),
                     (out / "field_analytic.qvol").string());
    } else {
        qsm::RandomTensorSpec spec;
        spec.seed = a.seed;
        spec.correlation_length_mm = a.corr;
        spec.amplitude_ppm = a.amplitude;
        spec.anisotropy_fraction = a.anisotropy;
        vlog("synthesizing random tensor field");
        write_tensor(qsm::random_tensor(grid, spec), (out / "tensor.qvol").string());
    }

    if (a.orientations > 0) {
        const auto rotations = qsm::orientation_set(a.orientations, a.max_tilt, a.seed);
        json doc = json::array();
        for (const auto& R : rotations)
            doc.push_back({{"rotation_matrix", std::vector<double>(R.m.begin(), R.m.end())}});
        const std::string path = (out / "rotations.json").string();
        write_text(doc.dump(2), path);
        std::cout << "wrote " << path << " rotations=" << rotations.size() << "\n";
    }
    return 0;
}

// ---- forward ---------------------------------------------------------------

struct ForwardArgs {
    std::string in;
    std::string dbprime;
    std::vector<double> h, r;
    std::string out = "field.qvol";
};

int cmd_forward(const ForwardArgs& a) {
    const qsm::FieldDirection H = direction_from_flags(a.h, a.r);
    const qsm::QVolContent content = qsm::read_qvol(a.in);

    qsm::RealVolume field;
    if (std::holds_alternative<qsm::TensorField>(content)) {
        if (!a.dbprime.empty())
            throw qsm::invalid_argument(
                "forward: --dbprime applies to the scalar two-channel path, not tensor input");
        vlog("tensor forward model");
        field = qsm::simulate_field_sti(std::get<qsm::TensorField>(content), H);
    } else {
        qsm::ReconState X(std::get<qsm::RealVolume>(content).grid);
        X.chi33 = std::get<qsm::RealVolume>(content);
        if (!a.dbprime.empty()) {
            X.db_prime = qsm::read_qvol_real(a.dbprime);
            qsm::require_same_grid(X.chi33.grid, X.db_prime.grid, "forward");
        }
        vlog("two-channel forward model");
        field = qsm::apply_A(X, H);
    }
    write_volume(field, a.out);
    return 0;
}

// ---- invert ----------------------------------------------------------------

struct InvertArgs {
    std::string in;
    std::string method = "pgd";
    std::vector<double> h, r;
    double threshold = 0.2;
    int iters = 3;
    bool iters_given = false;
    std::string prox = "identity";
    std::string step = "auto";
    int lipschitz_iters = 100;
    double tol = 1e-10;
    double lambda = 1e-8;
    int patch = 0;
    double overlap = 1.0 / 3.0;
    std::string out_chi33 = "chi33.qvol";
    std::string out_dbprime = "db_prime.qvol";
    std::string report = "-";
};

qsm::ProxOperator parse_prox(const std::string& text) {
    if (text == "identity") return qsm::ProxOperator::identity();
    if (text.rfind("soft:", 0) == 0) {
        const std::string num = text.substr(5);
        std::size_t used = 0;
        double lambda = 0.0;
        try {
            lambda = std::stod(num, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != num.size())
            throw qsm::invalid_argument("invert: bad prox weight in '" + text + "'");
        return qsm::ProxOperator::soft(lambda);
    }
    throw qsm::invalid_argument("invert: --prox must be 'identity' or 'soft:<lambda>'");
}

int cmd_invert(const InvertArgs& a) {
    const qsm::FieldDirection H = direction_from_flags(a.h, a.r);
    const qsm::RealVolume b = qsm::read_qvol_real(a.in);

    json report;
    report["method"] = a.method;
    json params;

    // Optional patch-then-stitch: invert each overlapping tile independently
    // and average the overlaps. Default is the full volume.
    std::vector<qsm::RealVolume> tiles{b};
    qsm::PatchLayout layout;
    const bool patched = a.patch > 0;
    if (patched) {
        layout = qsm::make_patch_layout(b.grid, a.patch, a.overlap);
        tiles = qsm::patch_split(b, layout);
        params["patch"] = {{"size", a.patch},
                           {"overlap", a.overlap},
                           {"count", tiles.size()}};
        vlog("patched inversion over " + std::to_string(tiles.size()) + " tiles");
    }

    std::vector<qsm::RealVolume> chi_tiles, db_tiles;
    chi_tiles.reserve(tiles.size());
    db_tiles.reserve(tiles.size());

    if (a.method == "tkd") {
        params["threshold"] = a.threshold;
        for (const auto& tile : tiles) chi_tiles.push_back(qsm::tkd_invert(tile, H, a.threshold));
    } else if (a.method == "pgd") {
        qsm::SolveConfig cfg;
        cfg.iterations = a.iters;
        cfg.prox = parse_prox(a.prox);
        cfg.lipschitz_iterations = a.lipschitz_iters;
        if (a.step != "auto") {
            std::size_t used = 0;
            double t = 0.0;
            try {
                t = std::stod(a.step, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != a.step.size())
                throw qsm::invalid_argument("invert: --step must be 'auto' or a number");
            cfg.step_sizes = {t};
        } else if (patched) {
            // all tiles share one grid, so one power iteration serves them all
            const double L =
                qsm::lipschitz_estimate(tiles[0].grid, H, a.lipschitz_iters);
            cfg.step_sizes = {1.0 / L};
            report["lipschitz"] = L;
            std::cout << "lipschitz estimate: " << L << "\n";
        }
        params["iterations"] = a.iters;
        params["prox"] = a.prox;
        params["step"] = a.step;
        bool first = true;
        for (const auto& tile : tiles) {
            qsm::SolveReport rep = qsm::pgd_solve(tile, H, cfg);
            if (first) {
                report["residual_history"] = rep.residual_history;
                report["objective_history"] = rep.objective_history;
                report["steps_used"] = rep.steps_used;
                if (rep.lipschitz) {
                    report["lipschitz"] = *rep.lipschitz;
                    std::cout << "lipschitz estimate: " << *rep.lipschitz << "\n";
                }
                first = false;
            }
            chi_tiles.push_back(std::move(rep.state.chi33));
            db_tiles.push_back(std::move(rep.state.db_prime));
        }
        if (patched) report["note"] = "histories are for the first tile";
    } else if (a.method == "cg") {
        const int iters = a.iters_given ? a.iters : 200;
        params["iterations"] = iters;
        params["tol"] = a.tol;
        params["lambda"] = a.lambda;
        bool first = true;
        for (const auto& tile : tiles) {
            qsm::CgResult res = qsm::cg_least_squares(tile, H, iters, a.tol, a.lambda);
            if (first) {
                report["converged"] = res.converged;
                report["iterations_used"] = res.iterations;
                report["relative_residual"] = res.relative_residual;
                first = false;
            }
            chi_tiles.push_back(std::move(res.state.chi33));
            db_tiles.push_back(std::move(res.state.db_prime));
        }
    } else {
        throw qsm::invalid_argument("invert: --method must be tkd, pgd, or cg");
    }
    report["parameters"] = params;

    qsm::RealVolume chi33;
    if (patched) {
        chi33 = qsm::patch_stitch(chi_tiles, layout, b.grid);
        chi33.unit = qsm::Unit::ppm;
    } else {
        chi33 = std::move(chi_tiles[0]);
    }
    write_volume(chi33, a.out_chi33);

    if (!db_tiles.empty()) {
        qsm::RealVolume db;
        if (patched) {
            db = qsm::patch_stitch(db_tiles, layout, b.grid);
            db.unit = qsm::Unit::ppm;
        } else {
            db = std::move(db_tiles[0]);
        }
        write_volume(db, a.out_dbprime);
    }
    write_text(report.dump(2), a.report);
    return 0;
}

// ---- sti -------------------------------------------------------------------

struct StiArgs {
    std::string manifest;
    bool cosmos = false;
    std::string out = "cosmos.qvol";
    std::string out_tensor = "tensor.qvol";
    std::string out_chi33 = "chi33.qvol";
    std::string out_dbprime = "db_prime.qvol";
    std::string report;
};

int cmd_sti(const StiArgs& a) {
    const auto samples = qsm::load_orientation_manifest(a.manifest);
    vlog("loaded " + std::to_string(samples.size()) + " orientation samples");

    if (a.cosmos) {
        write_volume(qsm::cosmos_fit(samples), a.out);
        if (!a.report.empty())
            write_text(json{{"mode", "cosmos"}, {"orientations", samples.size()}}.dump(2),
                       a.report);
        return 0;
    }

    const qsm::StiFitResult fit = qsm::sti_fit(samples);
    write_tensor(fit.tensor, a.out_tensor);
    const qsm::ReconState labels = qsm::extract_labels(fit.tensor);
    write_volume(labels.chi33, a.out_chi33);
    write_volume(labels.db_prime, a.out_dbprime);
    std::cout << "degenerate k-samples: " << fit.degenerate_k_count << "\n";
    if (!a.report.empty())
        write_text(json{{"mode", "sti"},
                        {"orientations", samples.size()},
                        {"degenerate_k_count", fit.degenerate_k_count}}
                       .dump(2),
                   a.report);
    return 0;
}

// ---- metrics ---------------------------------------------------------------

struct MetricsArgs {
    std::string x, ref, mask;
    bool plain_rmse = false;
    std::vector<std::string> rois;
    bool consistency = false;
    std::string chi33, dbprime, field;
    std::vector<double> h, r;
    std::string out = "-";
};

int cmd_metrics(const MetricsArgs& a) {
    json doc;
    bool did_something = false;

    qsm::RealVolume x;
    if (!a.x.empty()) x = qsm::read_qvol_real(a.x);

    if (!a.ref.empty()) {
        if (a.x.empty()) throw qsm::invalid_argument("metrics: --ref requires --x");
        const qsm::RealVolume ref = qsm::read_qvol_real(a.ref);
        const qsm::Mask mask =
            a.mask.empty() ? qsm::Mask(x.grid, true) : load_mask(a.mask, x.grid);
        const qsm::MetricReport rep = qsm::evaluate_metrics(x, ref, mask);
        doc = json::parse(qsm::metric_report_json(rep));
        if (a.plain_rmse) doc["rmse"]["plain"] = qsm::rmse(x, ref, mask);
        did_something = true;
    }

    if (!a.rois.empty()) {
        if (a.x.empty()) throw qsm::invalid_argument("metrics: --roi requires --x");
        std::vector<std::pair<std::string, qsm::Mask>> rois;
        for (const auto& spec : a.rois) {
            const auto eq = spec.find('=');
            if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
                throw qsm::invalid_argument("metrics: --roi expects label=path, got '" + spec +
                                            "'");
            rois.emplace_back(spec.substr(0, eq), load_mask(spec.substr(eq + 1), x.grid));
        }
        json out = json::array();
        for (const auto& s : qsm::roi_stats(x, rois))
            out.push_back({{"label", s.label},
                           {"mean_ppm", s.mean_ppm},
                           {"std_ppm", s.std_ppm},
                           {"count", s.count}});
        doc["roi"] = out;
        did_something = true;
    }

    if (a.consistency) {
        if (a.chi33.empty() || a.field.empty())
            throw qsm::invalid_argument("metrics: --consistency needs --chi33 and --field");
        qsm::RealVolume c = qsm::read_qvol_real(a.chi33);
        qsm::ReconState X(c.grid);
        X.chi33 = std::move(c);
        if (!a.dbprime.empty()) {
            X.db_prime = qsm::read_qvol_real(a.dbprime);
            qsm::require_same_grid(X.chi33.grid, X.db_prime.grid, "metrics");
        }
        const qsm::RealVolume b = qsm::read_qvol_real(a.field);
        const qsm::FieldDirection H = direction_from_flags(a.h, a.r);
        const qsm::Mask mask =
            a.mask.empty() ? qsm::Mask(b.grid, true) : load_mask(a.mask, b.grid);
        doc["phase_consistency"] = qsm::phase_consistency(X, b, mask, H);
        did_something = true;
    }

    if (!did_something)
        throw qsm::invalid_argument(
            "metrics: nothing to do; give --x/--ref, --roi, or --consistency");
    write_text(doc.dump(2), a.out);
    return 0;
}

// ---- slice -----------------------------------------------------------------

struct SliceArgs {
    std::string in;
    std::string axis = "z";
    int index = 0;
    int channel = -1;
    double lo = 0.0, hi = 0.0;
    bool window_given = false;
    std::string out;
};

int cmd_slice(const SliceArgs& a) {
    const qsm::QVolContent content = qsm::read_qvol(a.in);
    qsm::RealVolume vol;
    if (std::holds_alternative<qsm::TensorField>(content)) {
        if (a.channel < 0 || a.channel > 5)
            throw qsm::invalid_argument("slice: tensor input needs --channel 0..5");
        vol = std::get<qsm::TensorField>(content).channel_volume(a.channel);
    } else {
        if (a.channel >= 0)
            throw qsm::invalid_argument("slice: --channel only applies to tensor input");
        vol = std::get<qsm::RealVolume>(content);
    }

    const int axis = a.axis == "x" ? 0 : a.axis == "y" ? 1 : a.axis == "z" ? 2 : -1;
    if (axis < 0) throw qsm::invalid_argument("slice: --axis must be x, y, or z");

    double lo = a.lo, hi = a.hi;
    if (!a.window_given) {
        lo = *std::min_element(vol.data.begin(), vol.data.end());
        hi = *std::max_element(vol.data.begin(), vol.data.end());
        if (lo == hi) { // constant volume: render flat mid-gray
            lo -= 0.5;
            hi += 0.5;
        }
    }
    qsm::export_slice(vol, axis, a.index, lo, hi, a.out);
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

// ---- demo ------------------------------------------------------------------

struct DemoArgs {
    std::string dir = "demo_out";
    int size = 64;
    std::uint64_t seed = 1;
};

struct Assertion {
    std::string name;
    double value;
    double limit;
    bool less_equal; // false: strictly less
    bool pass;
};

void check(std::vector<Assertion>& list, const std::string& name, double value, double limit,
           bool less_equal = true) {
    const bool pass = less_equal ? (value <= limit) : (value < limit);
    list.push_back({name, value, limit, less_equal, pass});
    std::cout << (pass ? "[ok]   " : "[FAIL] ") << name << ": " << value
              << (less_equal ? " <= " : " < ") << limit << "\n";
}

int cmd_demo(const DemoArgs& a) {
    fs::create_directories(a.dir);
    const fs::path out(a.dir);
    std::vector<Assertion> checks;
    const auto z = qsm::FieldDirection::z();

    // sphere phantom with its closed-form external field
    const qsm::Grid3 grid(a.size, a.size, a.size);
    qsm::SpherePhantom sphere;
    sphere.radius_mm = 8.0;
    sphere.delta_chi_ppm = 1.0;
    sphere.center_mm = {0.5 * a.size, 0.5 * a.size, 0.5 * a.size};
    vlog("phantom");
    const qsm::RealVolume chi = qsm::sphere_chi(grid, sphere);
    const qsm::RealVolume field_true = qsm::sphere_field_analytic(grid, sphere, z);
    qsm::write_qvol(chi, (out / "chi.qvol").string());
    qsm::write_qvol(field_true, (out / "field_analytic.qvol").string());

    vlog("forward");
    qsm::ReconState truth(grid);
    truth.chi33 = chi;
    const qsm::RealVolume field_sim = qsm::apply_A(truth, z);
    qsm::write_qvol(field_sim, (out / "field_sim.qvol").string());

    // FFT dipole field vs analytic formula away from the discretized surface.
    // The analytic oracle is the isolated sphere in open space, so the
    // simulation runs on a 2x grid and is cropped: that suppresses the
    // periodic wrap-around images, which are a property of the box, not of
    // the dipole model under test.
    qsm::Mask shell(grid);
    for (int zz = 0; zz < a.size; ++zz)
        for (int yy = 0; yy < a.size; ++yy)
            for (int xx = 0; xx < a.size; ++xx) {
                const double dx = (xx + 0.5) - sphere.center_mm[0];
                const double dy = (yy + 0.5) - sphere.center_mm[1];
                const double dz = (zz + 0.5) - sphere.center_mm[2];
                const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
                shell.set(xx, yy, zz, std::abs(dist - sphere.radius_mm) > 2.0);
            }
    {
        const int pad = 2 * a.size, off = a.size / 2;
        const qsm::Grid3 gp(pad, pad, pad);
        qsm::SpherePhantom sp = sphere;
        sp.center_mm = {0.5 * pad, 0.5 * pad, 0.5 * pad};
        qsm::ReconState Xp(gp);
        Xp.chi33 = qsm::sphere_chi(gp, sp);
        const qsm::RealVolume big = qsm::apply_A(Xp, z);
        qsm::RealVolume crop(grid, qsm::Unit::ppm);
        for (int zz = 0; zz < a.size; ++zz)
            for (int yy = 0; yy < a.size; ++yy)
                for (int xx = 0; xx < a.size; ++xx)
                    crop.at(xx, yy, zz) = big.at(xx + off, yy + off, zz + off);
        check(checks, "sphere_field_nrmse_percent", qsm::nrmse(crop, field_true, shell), 5.0);
    }

    // forward determinism: a rerun is bit-identical
    {
        const qsm::RealVolume again = qsm::apply_A(truth, z);
        double diff = 0.0;
        for (std::size_t i = 0; i < again.data.size(); ++i)
            diff = std::max(diff, std::abs(again.data[i] - field_sim.data[i]));
        check(checks, "forward_rerun_max_abs_diff", diff, 0.0);
    }

    // adjoint identity on a random 32-cube instance
    {
        const qsm::Grid3 g32(32, 32, 32);
        qsm::RandomStream rng(a.seed, 11);
        qsm::ReconState X(g32);
        qsm::RealVolume y(g32, qsm::Unit::ppm);
        for (auto& v : X.chi33.data) v = rng.normal();
        for (auto& v : X.db_prime.data) v = rng.normal();
        for (auto& v : y.data) v = rng.normal();
        const qsm::RealVolume ax = qsm::apply_A(X, z);
        const qsm::ReconState ahy = qsm::apply_AH(y, z);
        const double lhs = qsm::dot(ax.data, y.data);
        const double rhs = qsm::state_dot(X, ahy);
        const double scale = qsm::l2_norm(ax.data) * qsm::l2_norm(y.data);
        check(checks, "adjoint_identity_rel", std::abs(lhs - rhs) / scale, 1e-10);
    }

    // tensor forward model splits exactly into the two-channel state
    {
        const qsm::Grid3 g32(32, 32, 32);
        qsm::RandomTensorSpec tspec;
        tspec.seed = a.seed + 2;
        tspec.anisotropy_fraction = 0.5;
        const qsm::TensorField tensor = qsm::random_tensor(g32, tspec);
        const qsm::RealVolume whole = qsm::simulate_field_sti(tensor, z);
        const qsm::RealVolume split = qsm::apply_A(qsm::extract_labels(tensor), z);
        double diff = 0.0;
        for (std::size_t i = 0; i < whole.data.size(); ++i)
            diff = std::max(diff, std::abs(whole.data[i] - split.data[i]));
        check(checks, "decomposition_max_abs", diff, 1e-12);

        // the off-diagonal field is load-bearing: dropping it hurts consistency
        const qsm::ReconState labels = qsm::extract_labels(tensor);
        qsm::ReconState chi33_only(g32);
        chi33_only.chi33 = labels.chi33;
        const double pc_two = qsm::phase_consistency(labels, whole, z);
        const double pc_one = qsm::phase_consistency(chi33_only, whole, z);
        check(checks, "consistency_two_channel_minus_one", pc_two - pc_one, 0.0, false);
    }

    // thresholded k-space division: exact where the kernel is safe
    vlog("tkd");
    const qsm::RealVolume chi_tkd = qsm::tkd_invert(field_sim, z, 0.2);
    qsm::write_qvol(chi_tkd, (out / "chi_tkd.qvol").string());
    {
        const qsm::KSpaceKernel D = qsm::dipole_kernel(grid, z);
        const qsm::ComplexVolume spec_true = qsm::fft_of_real(chi);
        const qsm::ComplexVolume spec_tkd = qsm::fft_of_real(chi_tkd);
        double scale = 0.0, diff = 0.0;
        for (std::size_t i = 0; i < D.values.size(); ++i) {
            if (std::abs(D.values[i]) < 0.2) continue;
            scale = std::max(scale, std::abs(spec_true.data[i]));
            diff = std::max(diff, std::abs(spec_tkd.data[i] - spec_true.data[i]));
        }
        check(checks, "tkd_passband_spectrum_rel", diff / scale, 1e-10);
    }

    // three unrolled gradient steps at the analytic 1/L step size
    vlog("pgd");
    qsm::SolveConfig cfg;
    cfg.iterations = 3;
    cfg.step_sizes = {9.0 / 13.0};
    const qsm::SolveReport pgd = qsm::pgd_solve(field_sim, z, cfg);
    qsm::write_qvol(pgd.state.chi33, (out / "chi_pgd.qvol").string());
    qsm::write_qvol(pgd.state.db_prime, (out / "db_prime_pgd.qvol").string());
    {
        double worst = 0.0;
        for (std::size_t k = 1; k < pgd.objective_history.size(); ++k)
            worst = std::max(worst, pgd.objective_history[k] - pgd.objective_history[k - 1]);
        check(checks, "pgd_objective_max_increase", worst, 0.0);
        check(checks, "pgd_residual_final_minus_initial",
              pgd.residual_history.back() - pgd.residual_history.front(), 0.0, false);
    }

    // power iteration reaches the analytic Gram bound 13/9
    vlog("lipschitz");
    {
        const double L = qsm::lipschitz_estimate(qsm::Grid3(16, 16, 16), z, 800);
        check(checks, "lipschitz_abs_error", std::abs(L - 13.0 / 9.0), 1e-3);
    }

    // overlapping patches reassemble the exact volume
    {
        const qsm::PatchLayout layout = qsm::make_patch_layout(grid, 48, 1.0 / 3.0);
        const qsm::RealVolume stitched =
            qsm::patch_stitch(qsm::patch_split(field_sim, layout), layout, grid);
        double diff = 0.0;
        for (std::size_t i = 0; i < stitched.data.size(); ++i)
            diff = std::max(diff, std::abs(stitched.data[i] - field_sim.data[i]));
        check(checks, "patch_roundtrip_max_abs", diff, 0.0);
    }

    // metric fixed points
    vlog("metrics");
    check(checks, "nrmse_self", qsm::nrmse(chi, chi), 0.0);
    check(checks, "ssim_self_minus_one", std::abs(qsm::ssim3(chi, chi) - 1.0), 0.0);
    check(checks, "hfen_self", qsm::hfen(chi, chi), 0.0);

    const qsm::MetricReport m_tkd = qsm::evaluate_metrics(chi_tkd, chi);
    const qsm::MetricReport m_pgd = qsm::evaluate_metrics(pgd.state.chi33, chi);
    std::cout << "tkd vs truth: rmse " << m_tkd.rmse_percent << "% ssim " << m_tkd.ssim
              << " hfen " << m_tkd.hfen_percent << "%\n";
    std::cout << "pgd vs truth: rmse " << m_pgd.rmse_percent << "% ssim " << m_pgd.ssim
              << " hfen " << m_pgd.hfen_percent << "%\n";

    qsm::export_slice(chi_tkd, 2, a.size / 2, -0.2, 1.0, (out / "chi_tkd_mid.pgm").string());

    bool all_pass = true;
    json jchecks = json::array();
    for (const auto& c : checks) {
        all_pass = all_pass && c.pass;
        jchecks.push_back({{"name", c.name},
                           {"value", c.value},
                           {"limit", c.limit},
                           {"comparison", c.less_equal ? "le" : "lt"},
                           {"pass", c.pass}});
    }
    json report;
    report["grid"] = {a.size, a.size, a.size};
    report["seed"] = a.seed;
    report["assertions"] = jchecks;
    report["metrics"] = {{"tkd", json::parse(qsm::metric_report_json(m_tkd))},
                         {"pgd", json::parse(qsm::metric_report_json(m_pgd))}};
    report["pass"] = all_pass;
    write_text(report.dump(2), (out / "demo_report.json").string());
    std::cout << "wrote " << (out / "demo_report.json").string() << "\n"
              << (all_pass ? "demo: all assertions passed\n" : "demo: ASSERTIONS FAILED\n");
    return all_pass ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dipole field simulation and susceptibility inversion toolkit"};
    app.require_subcommand(1);

    int threads = 1;
    app.add_option("--threads", threads, "worker thread cap for volume loops")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_flag("--verbose", g_verbose, "progress logging on stderr");

    PhantomArgs pa;
    auto* ph = app.add_subcommand("phantom", "generate synthetic volumes and rotation sets");
    ph->add_option("--kind", pa.kind, "phantom kind: sphere or tensor")
        ->required()
        ->check(CLI::IsMember({"sphere", "tensor"}));
    ph->add_option("--dims", pa.dims, "grid size, one value or three")->required()->expected(1, 3);
    ph->add_option("--voxel", pa.voxel, "voxel size in mm, one value or three")
        ->expected(1, 3)
        ->capture_default_str();
    ph->add_option("--out", pa.out_dir, "output directory")->capture_default_str();
    ph->add_option("--radius", pa.radius, "sphere radius in mm")->capture_default_str();
    ph->add_option("--dchi", pa.dchi, "sphere susceptibility contrast in ppm")
        ->capture_default_str();
    ph->add_option("--center", pa.center, "sphere center in mm (default: grid center)")
        ->expected(3);
    ph->add_option("--seed", pa.seed, "random seed (tensor kind and --orientations)")
        ->capture_default_str();
    ph->add_option("--corr", pa.corr, "tensor correlation length in mm")->capture_default_str();
    ph->add_option("--amplitude", pa.amplitude, "tensor channel standard deviation in ppm")
        ->capture_default_str();
    ph->add_option("--anisotropy", pa.anisotropy, "tensor anisotropy fraction in [0,1]")
        ->capture_default_str();
    ph->add_option("--orientations", pa.orientations,
                   "also write rotations.json with this many scan rotations")
        ->capture_default_str();
    ph->add_option("--max-tilt", pa.max_tilt, "largest tilt in degrees for --orientations")
        ->capture_default_str();

    ForwardArgs fa;
    auto* fw = app.add_subcommand("forward", "simulate the field of a susceptibility volume");
    fw->add_option("--in", fa.in, "input volume: 6-channel tensor, or scalar chi33")
        ->required();
    fw->add_option("--dbprime", fa.dbprime, "optional second channel for scalar input");
    auto* fwh = fw->add_option("--H", fa.h, "field direction (3 components, normalized)")
                    ->expected(3);
    fw->add_option("--R", fa.r, "rotation matrix (9 row-major values); H = R z")
        ->expected(9)
        ->excludes(fwh);
    fw->add_option("--out", fa.out, "output field path")->capture_default_str();

    InvertArgs ia;
    auto* iv = app.add_subcommand("invert", "reconstruct susceptibility from a field map");
    iv->add_option("--in", ia.in, "measured field volume (ppm)")->required();
    iv->add_option("--method", ia.method, "tkd, pgd, or cg")->capture_default_str();
    auto* ivh = iv->add_option("--H", ia.h, "field direction (3 components, normalized)")
                    ->expected(3);
    iv->add_option("--R", ia.r, "rotation matrix (9 row-major values); H = R z")
        ->expected(9)
        ->excludes(ivh);
    iv->add_option("--threshold", ia.threshold, "tkd kernel threshold")->capture_default_str();
    auto* iters_opt =
        iv->add_option("--iters", ia.iters, "pgd unrolled depth; cg max iterations (cg default 200)")
            ->capture_default_str();
    iv->add_option("--prox", ia.prox, "pgd proximal operator: identity or soft:<lambda>")
        ->capture_default_str();
    iv->add_option("--step", ia.step, "pgd step size: auto (1/L by power iteration) or a number")
        ->capture_default_str();
    iv->add_option("--lipschitz-iters", ia.lipschitz_iters, "power iterations for --step auto")
        ->capture_default_str();
    iv->add_option("--tol", ia.tol, "cg relative residual tolerance")->capture_default_str();
    iv->add_option("--lambda", ia.lambda, "cg ridge weight")->capture_default_str();
    iv->add_option("--patch", ia.patch, "patch size for patch-then-stitch; 0 = full volume")
        ->capture_default_str();
    iv->add_option("--overlap", ia.overlap, "patch overlap fraction")->capture_default_str();
    iv->add_option("--out-chi33", ia.out_chi33, "chi33 output path")->capture_default_str();
    iv->add_option("--out-dbprime", ia.out_dbprime, "dB' output path (pgd and cg)")
        ->capture_default_str();
    iv->add_option("--report", ia.report, "JSON report path ('-' = stdout)")
        ->capture_default_str();

    StiArgs sa;
    auto* st = app.add_subcommand("sti", "multi-orientation tensor or COSMOS fit");
    st->add_option("--manifest", sa.manifest, "orientation manifest JSON")->required();
    st->add_flag("--cosmos", sa.cosmos, "scalar COSMOS fit (needs >= 3 orientations)");
    st->add_option("--out", sa.out, "cosmos output path")->capture_default_str();
    st->add_option("--out-tensor", sa.out_tensor, "tensor output path")->capture_default_str();
    st->add_option("--out-chi33", sa.out_chi33, "chi33 label output path")
        ->capture_default_str();
    st->add_option("--out-dbprime", sa.out_dbprime, "dB' label output path")
        ->capture_default_str();
    st->add_option("--report", sa.report, "optional JSON report path");

    MetricsArgs ma;
    auto* mt = app.add_subcommand("metrics", "compare volumes and report quality metrics");
    mt->add_option("--x", ma.x, "volume under test");
    mt->add_option("--ref", ma.ref, "reference volume");
    mt->add_option("--mask", ma.mask, "evaluation mask volume (nonzero = included)");
    mt->add_flag("--plain-rmse", ma.plain_rmse, "also report unnormalized RMSE");
    mt->add_option("--roi", ma.rois, "ROI stats, label=mask_path (repeatable)");
    mt->add_flag("--consistency", ma.consistency, "forward-model L1 consistency check");
    mt->add_option("--chi33", ma.chi33, "state chi33 for --consistency");
    mt->add_option("--dbprime", ma.dbprime, "state dB' for --consistency");
    mt->add_option("--field", ma.field, "measured field for --consistency");
    auto* mth = mt->add_option("--H", ma.h, "field direction for --consistency")->expected(3);
    mt->add_option("--R", ma.r, "rotation matrix for --consistency")->expected(9)->excludes(mth);
    mt->add_option("--out", ma.out, "report path ('-' = stdout)")->capture_default_str();

    SliceArgs sla;
    auto* sl = app.add_subcommand("slice", "export one slice as an 8-bit PGM image");
    sl->add_option("--in", sla.in, "input volume")->required();
    sl->add_option("--axis", sla.axis, "slice axis: x, y, or z")->capture_default_str();
    sl->add_option("--index", sla.index, "slice index along the axis")->required();
    sl->add_option("--channel", sla.channel, "tensor channel 0..5 (tensor input only)");
    auto* lo_opt = sl->add_option("--lo", sla.lo, "window low (default: data min)");
    auto* hi_opt = sl->add_option("--hi", sla.hi, "window high (default: data max)");
    lo_opt->needs(hi_opt);
    hi_opt->needs(lo_opt);
    sl->add_option("--out", sla.out, "output PGM path")->required();

    DemoArgs da;
    auto* dm = app.add_subcommand("demo", "run the self-checking synthetic pipeline");
    dm->add_option("--dir", da.dir, "output directory")->capture_default_str();
    dm->add_option("--size", da.size, "cube size")->check(CLI::Range(48, 128))
        ->capture_default_str();
    dm->add_option("--seed", da.seed, "random seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help and friends
        app.exit(e);
        return 2;
    }
    sla.window_given = lo_opt->count() > 0;
    ia.iters_given = iters_opt->count() > 0;
    qsm::set_max_threads(threads);

    try {
        if (*ph) return cmd_phantom(pa);
        if (*fw) return cmd_forward(fa);
        if (*iv) return cmd_invert(ia);
        if (*st) return cmd_sti(sa);
        if (*mt) return cmd_metrics(ma);
        if (*sl) return cmd_slice(sla);
        if (*dm) return cmd_demo(da);
    } catch (const qsm::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const qsm::numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const qsm::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
