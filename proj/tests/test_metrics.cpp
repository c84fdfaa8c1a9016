#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>

#include "qsm/dipole.hpp"
#include "qsm/metrics.hpp"
#include "qsm/phantom.hpp"
#include "qsm/sti.hpp"

#include "oracles.hpp"

namespace {

/// Cyclic shift by one voxel along every axis: out(p) = in(p - 1 mod n).
qsm::RealVolume shift_by_one(const qsm::RealVolume& v) {
    qsm::RealVolume out(v.grid, v.unit);
    const auto& d = v.grid.dims;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x)
                out.at(x, y, z) =
                    v.at((x + d[0] - 1) % d[0], (y + d[1] - 1) % d[1], (z + d[2] - 1) % d[2]);
    return out;
}

qsm::Mask shifted_mask(const qsm::Mask& m) {
    qsm::Mask out(m.grid);
    const auto& d = m.grid.dims;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x)
                if (m.at(x, y, z)) out.set((x + 1) % d[0], (y + 1) % d[1], (z + 1) % d[2], true);
    return out;
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("nrmse pins its scale") {
    const qsm::Grid3 g(6, 6, 6);
    const qsm::RealVolume ref = oracle::random_volume(g, 301);

    CHECK(qsm::nrmse(ref, ref) == 0.0);

    qsm::RealVolume twice = ref;
    for (double& v : twice.data) v *= 2.0; // error equals the reference
    CHECK(qsm::nrmse(twice, ref) == 100.0);
    CHECK(qsm::nrmse(qsm::RealVolume(g, qsm::Unit::ppm), ref) == 100.0);

    CHECK_THROWS_AS(qsm::nrmse(ref, qsm::RealVolume(g, qsm::Unit::ppm)), qsm::invalid_argument);

    SUBCASE("masked variant ignores voxels outside the mask") {
        qsm::RealVolume corrupted = ref;
        corrupted.at(0, 0, 0) += 100.0;
        const qsm::Mask interior = qsm::interior_mask(g, 1);
        CHECK(qsm::nrmse(corrupted, ref, interior) == 0.0);
        CHECK(qsm::nrmse(corrupted, ref) > 0.0);
        CHECK_THROWS_AS(qsm::nrmse(ref, ref, qsm::Mask(g)), qsm::invalid_argument);
    }

    SUBCASE("voxel order does not matter") {
        qsm::RealVolume xr = ref, rr = ref;
        qsm::RealVolume x = oracle::random_volume(g, 302);
        qsm::RealVolume xp = x;
        std::reverse(xp.data.begin(), xp.data.end());
        std::reverse(rr.data.begin(), rr.data.end());
        CHECK(qsm::nrmse(x, ref) ==
              doctest::Approx(qsm::nrmse(xp, rr)).epsilon(1e-12));
    }
}

TEST_CASE("rmse reports absolute error in data units") {
    const qsm::Grid3 g(6, 6, 6);
    const qsm::RealVolume ref = oracle::random_volume(g, 303);
    qsm::RealVolume off = ref;
    for (double& v : off.data) v += 0.5;
    CHECK(qsm::rmse(off, ref) == 0.5);
    CHECK(qsm::rmse(ref, ref) == 0.0);

    // rmse of a zero reference is legal (unlike nrmse)
    CHECK(qsm::rmse(off, qsm::RealVolume(g, qsm::Unit::ppm)) > 0.0);

    qsm::RealVolume corrupted = off;
    corrupted.at(0, 0, 0) = 1e6;
    CHECK(qsm::rmse(corrupted, ref, qsm::interior_mask(g, 1)) == 0.5);
}

TEST_CASE("ssim3 matches the direct-window oracle") {
    const qsm::SsimParams p; // default 11-voxel window exceeds these grids

    SUBCASE("cubic grid") {
        const qsm::Grid3 g(5, 5, 5);
        const qsm::RealVolume ref = oracle::random_volume(g, 304);
        const qsm::RealVolume x = qsm::add_noise(ref, 0.2, 9);
        CHECK(qsm::ssim3(x, ref, p) ==
              doctest::Approx(oracle::ssim3_direct(x, ref, p)).epsilon(1e-10));
    }

    SUBCASE("anisotropic grid, masked") {
        const qsm::Grid3 g(7, 6, 5);
        const qsm::RealVolume ref = oracle::random_volume(g, 305);
        const qsm::RealVolume x = qsm::add_noise(ref, 0.3, 10);
        CHECK(qsm::ssim3(x, ref, p) ==
              doctest::Approx(oracle::ssim3_direct(x, ref, p)).epsilon(1e-10));
        const qsm::Mask m = qsm::interior_mask(g, 1);
        CHECK(qsm::ssim3(x, ref, p, m) ==
              doctest::Approx(oracle::ssim3_direct(x, ref, p, m)).epsilon(1e-10));
    }
}

TEST_CASE("ssim3 fixed points and bounds") {
    const qsm::Grid3 g(10, 10, 10);
    const qsm::RealVolume ref = oracle::random_volume(g, 306);

    CHECK(qsm::ssim3(ref, ref) == 1.0);

    // inverted structure scores negative. The pattern must keep local window
    // means near zero (fast oscillation does); negating slowly varying data
    // flips the luminance term too and the product turns positive again.
    qsm::RealVolume checker(g, qsm::Unit::ppm);
    for (int z = 0; z < 10; ++z)
        for (int y = 0; y < 10; ++y)
            for (int x = 0; x < 10; ++x) checker.at(x, y, z) = ((x + y + z) % 2) ? 1.0 : -1.0;
    qsm::RealVolume neg = checker;
    for (double& v : neg.data) v = -v;
    const double anti = qsm::ssim3(neg, checker);
    CHECK(anti < 0.0);
    CHECK(anti >= -1.0);

    const double noisy = qsm::ssim3(qsm::add_noise(ref, 0.5, 4), ref);
    CHECK(noisy < 1.0);
    CHECK(noisy > -1.0);

    CHECK_THROWS_AS(qsm::ssim3(ref, qsm::RealVolume(g, qsm::Unit::ppm, 3.0)),
                    qsm::invalid_argument);

    qsm::SsimParams bad;
    bad.window = 10;
    CHECK_THROWS_AS(qsm::ssim3(ref, ref, bad), qsm::invalid_argument);
    bad = {};
    bad.sigma = 0.0;
    CHECK_THROWS_AS(qsm::ssim3(ref, ref, bad), qsm::invalid_argument);
    bad = {};
    bad.k1 = 0.0;
    CHECK_THROWS_AS(qsm::ssim3(ref, ref, bad), qsm::invalid_argument);
}

TEST_CASE("hfen matches the direct-convolution oracle") {
    qsm::HfenParams p;
    p.kernel_size = 7; // keep the direct convolution cheap
    p.sigma = 1.2;

    const qsm::Grid3 g(9, 8, 7);
    const qsm::RealVolume ref = oracle::random_volume(g, 307);
    const qsm::RealVolume x = qsm::add_noise(ref, 0.2, 11);

    SUBCASE("the LoG response itself") {
        const qsm::RealVolume got = qsm::log_filter(ref, p);
        const qsm::RealVolume want =
            oracle::convolve_direct(ref, oracle::log_kernel_direct(p), p.kernel_size);
        CHECK(oracle::max_abs_diff(got.data, want.data) <= 1e-12 * qsm::max_abs(want.data));
    }

    SUBCASE("full and masked scores") {
        CHECK(qsm::hfen(x, ref, p) ==
              doctest::Approx(oracle::hfen_direct(x, ref, p)).epsilon(1e-10));
        const qsm::Mask m = qsm::interior_mask(g, 2);
        CHECK(qsm::hfen(x, ref, p, m) ==
              doctest::Approx(oracle::hfen_direct(x, ref, p, m)).epsilon(1e-10));
    }
}

TEST_CASE("hfen sees structure, not offsets") {
    const qsm::Grid3 g(18, 18, 18);
    const qsm::RealVolume ref = oracle::random_volume(g, 308);
    const qsm::HfenParams p; // kernel 15, radius 7

    CHECK(qsm::hfen(ref, ref, p) == 0.0);

    // the mean-subtracted kernel kills constants wherever its support is
    // fully inside the volume
    const qsm::Mask interior = qsm::interior_mask(g, p.kernel_size / 2 + 1);
    qsm::RealVolume lifted = ref;
    for (double& v : lifted.data) v += 3.0;
    CHECK(qsm::hfen(lifted, ref, p, interior) <= 1e-10);

    const qsm::RealVolume log_ones =
        qsm::log_filter(qsm::RealVolume(g, qsm::Unit::ppm, 1.0), p);
    for (int z = 8; z < 10; ++z)
        for (int y = 8; y < 10; ++y)
            for (int x = 8; x < 10; ++x) CHECK(std::abs(log_ones.at(x, y, z)) <= 1e-15);

    CHECK_THROWS_AS(qsm::hfen(ref, qsm::RealVolume(g, qsm::Unit::ppm), p),
                    qsm::invalid_argument);

    qsm::HfenParams bad;
    bad.kernel_size = 4;
    CHECK_THROWS_AS(qsm::hfen(ref, ref, bad), qsm::invalid_argument);
    bad.kernel_size = 1;
    CHECK_THROWS_AS(qsm::hfen(ref, ref, bad), qsm::invalid_argument);
    bad = {};
    bad.sigma = -1.0;
    CHECK_THROWS_AS(qsm::hfen(ref, ref, bad), qsm::invalid_argument);
}

TEST_CASE("windowed metrics are translation invariant away from faces") {
    const qsm::Grid3 g(16, 16, 16);
    const qsm::RealVolume ref = oracle::random_volume(g, 309);
    const qsm::RealVolume x = qsm::add_noise(ref, 0.25, 12);
    const qsm::RealVolume refs = shift_by_one(ref);
    const qsm::RealVolume xs = shift_by_one(x);

    SUBCASE("ssim") {
        const qsm::SsimParams p; // radius 5
        const qsm::Mask m = qsm::interior_mask(g, 6);
        CHECK(qsm::ssim3(x, ref, p, m) ==
              doctest::Approx(qsm::ssim3(xs, refs, p, shifted_mask(m))).epsilon(1e-12));
    }

    SUBCASE("hfen") {
        qsm::HfenParams p;
        p.kernel_size = 9; // radius 4
        const qsm::Mask m = qsm::interior_mask(g, 5);
        CHECK(qsm::hfen(x, ref, p, m) ==
              doctest::Approx(qsm::hfen(xs, refs, p, shifted_mask(m))).epsilon(1e-12));
    }
}

TEST_CASE("interior_mask counts shrink with the border") {
    const qsm::Grid3 g(6, 5, 4);
    CHECK(qsm::interior_mask(g, 0).count() == g.voxel_count());
    CHECK(qsm::interior_mask(g, 1).count() == 4u * 3u * 2u);
    CHECK(qsm::interior_mask(g, 2).count() == 2u * 1u * 0u);
    CHECK_THROWS_AS(qsm::interior_mask(g, -1), qsm::invalid_argument);
}

TEST_CASE("roi_stats reduces labeled regions") {
    const qsm::Grid3 g(4, 4, 4);
    qsm::RealVolume vol(g, qsm::Unit::ppm, 0.75);
    vol.at(0, 0, 0) = 0.0;
    vol.at(1, 0, 0) = 2.0;

    qsm::Mask pair(g);
    pair.set(0, 0, 0, true);
    pair.set(1, 0, 0, true);
    qsm::Mask rest(g, true);
    rest.set(0, 0, 0, false);
    rest.set(1, 0, 0, false);

    const auto stats = qsm::roi_stats(vol, {{"pair", pair}, {"rest", rest}});
    REQUIRE(stats.size() == 2);
    CHECK(stats[0].label == "pair");
    CHECK(stats[0].mean_ppm == 1.0);
    CHECK(stats[0].std_ppm == 1.0); // population std of {0, 2}
    CHECK(stats[0].count == 2);
    CHECK(stats[1].label == "rest");
    CHECK(stats[1].mean_ppm == 0.75);
    CHECK(stats[1].std_ppm == 0.0);
    CHECK(stats[1].count == g.voxel_count() - 2);

    SUBCASE("agrees with direct accumulation on random data") {
        const qsm::RealVolume r = oracle::random_volume(g, 310);
        const qsm::Mask m = qsm::interior_mask(g, 1);
        const auto s = qsm::roi_stats(r, {{"roi", m}});
        double sum = 0.0;
        for (std::size_t i = 0; i < r.data.size(); ++i)
            if (m.data[i]) sum += r.data[i];
        const double mean = sum / double(m.count());
        double var = 0.0;
        for (std::size_t i = 0; i < r.data.size(); ++i)
            if (m.data[i]) var += (r.data[i] - mean) * (r.data[i] - mean);
        CHECK(s[0].mean_ppm == doctest::Approx(mean).epsilon(1e-12));
        CHECK(s[0].std_ppm == doctest::Approx(std::sqrt(var / double(m.count()))).epsilon(1e-12));
    }

    SUBCASE("empty ROI names the offender") {
        try {
            qsm::roi_stats(vol, {{"void", qsm::Mask(g)}});
            FAIL("expected invalid_argument");
        } catch (const qsm::invalid_argument& e) {
            CHECK(std::string(e.what()).find("void") != std::string::npos);
        }
    }
}

TEST_CASE("phase_consistency measures forward-model residual") {
    const qsm::Grid3 g(16, 16, 16);

    SUBCASE("zero everywhere is exactly consistent") {
        CHECK(qsm::phase_consistency(qsm::ReconState(g), qsm::RealVolume(g, qsm::Unit::ppm)) ==
              0.0);
    }

    SUBCASE("true labels explain their own field") {
        qsm::RandomTensorSpec spec;
        spec.seed = 40;
        const qsm::TensorField chi = qsm::random_tensor(g, spec);
        const qsm::ReconState labels = qsm::extract_labels(chi);
        const qsm::RealVolume b = qsm::simulate_field_sti(chi, qsm::FieldDirection::z());
        CHECK(qsm::phase_consistency(labels, b) <= 1e-12 * qsm::max_abs(b.data));
    }

    SUBCASE("dropping the off-resonance channel always hurts") {
        for (std::uint64_t seed : {41, 42, 43, 44, 45}) {
            qsm::RandomTensorSpec spec;
            spec.seed = seed;
            spec.anisotropy_fraction = 0.5; // strong off-diagonals
            const qsm::TensorField chi = qsm::random_tensor(qsm::Grid3(16, 16, 16), spec);
            const qsm::ReconState labels = qsm::extract_labels(chi);
            const qsm::RealVolume b = qsm::simulate_field_sti(chi, qsm::FieldDirection::z());

            qsm::ReconState chi_only = labels;
            std::fill(chi_only.db_prime.data.begin(), chi_only.db_prime.data.end(), 0.0);

            const double both = qsm::phase_consistency(labels, b);
            const double one = qsm::phase_consistency(chi_only, b);
            CHECK(one > 0.0);
            CHECK(both < one);
        }
    }

    SUBCASE("mask excludes known-bad voxels") {
        const qsm::RealVolume b(g, qsm::Unit::ppm);
        qsm::ReconState X(g);
        X.db_prime.at(0, 0, 0) = 5.0; // identity channel: residual lands there
        CHECK(qsm::phase_consistency(X, b) > 0.0);
        const qsm::Mask m = qsm::interior_mask(g, 1);
        CHECK(qsm::phase_consistency(X, b, m) == 0.0);
        CHECK_THROWS_AS(qsm::phase_consistency(X, b, qsm::Mask(g)), qsm::invalid_argument);
    }
}

TEST_CASE("evaluate_metrics bundles the individual scores verbatim") {
    const qsm::Grid3 g(12, 12, 12);
    const qsm::RealVolume ref = oracle::random_volume(g, 311);
    const qsm::RealVolume x = qsm::add_noise(ref, 0.3, 13);
    qsm::HfenParams hp;
    hp.kernel_size = 7;

    const qsm::MetricReport r = qsm::evaluate_metrics(x, ref, {}, hp);
    CHECK(r.rmse_percent == qsm::nrmse(x, ref));
    CHECK(r.ssim == qsm::ssim3(x, ref));
    CHECK(r.hfen_percent == qsm::hfen(x, ref, hp));

    const qsm::Mask m = qsm::interior_mask(g, 2);
    const qsm::MetricReport rm = qsm::evaluate_metrics(x, ref, m, {}, hp);
    CHECK(rm.rmse_percent == qsm::nrmse(x, ref, m));
    CHECK(rm.hfen_percent == qsm::hfen(x, ref, hp, m));

    SUBCASE("json report round-trips values and parameters") {
        const nlohmann::json j = nlohmann::json::parse(qsm::metric_report_json(r));
        CHECK(j["rmse"]["value_percent"].get<double>() == r.rmse_percent);
        CHECK(j["ssim"]["value"].get<double>() == r.ssim);
        CHECK(j["ssim"]["window"].get<int>() == r.ssim_params.window);
        CHECK(j["hfen"]["value_percent"].get<double>() == r.hfen_percent);
        CHECK(j["hfen"]["kernel_size"].get<int>() == hp.kernel_size);
    }
}

} // TEST_SUITE
