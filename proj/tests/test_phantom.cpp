#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "qsm/dipole.hpp"
#include "qsm/phantom.hpp"

#include "oracles.hpp"

namespace {

constexpr double kPi = std::numbers::pi;

double sphere_volume(double r) { return 4.0 / 3.0 * kPi * r * r * r; }

double channel_mean(const qsm::TensorField& t, int c) {
    const auto ch = t.channel(c);
    double s = 0.0;
    for (double v : ch) s += v;
    return s / double(ch.size());
}

double channel_std(const qsm::TensorField& t, int c) {
    const double m = channel_mean(t, c);
    const auto ch = t.channel(c);
    double s = 0.0;
    for (double v : ch) s += (v - m) * (v - m);
    return std::sqrt(s / double(ch.size()));
}

} // namespace

TEST_SUITE("phantom") {

TEST_CASE("sphere specs must fit the grid with a two-voxel margin") {
    const qsm::Grid3 g(16, 16, 16);

    qsm::SpherePhantom ok;
    ok.center_mm = {8.0, 8.0, 8.0};
    ok.radius_mm = 5.0;
    CHECK_NOTHROW(ok.validate(g));

    qsm::SpherePhantom big = ok;
    big.radius_mm = 6.5; // 8 + 6.5 > 16 - 2
    CHECK_THROWS_AS(big.validate(g), qsm::invalid_argument);

    qsm::SpherePhantom shifted = ok;
    shifted.center_mm = {3.0, 8.0, 8.0}; // 3 - 5 < 2
    CHECK_THROWS_AS(shifted.validate(g), qsm::invalid_argument);

    qsm::SpherePhantom flat = ok;
    flat.radius_mm = 0.0;
    CHECK_THROWS_AS(flat.validate(g), qsm::invalid_argument);

    // anisotropic voxels scale the margin per axis
    const qsm::Grid3 thick(16, 16, 8, 1.0, 1.0, 2.0);
    qsm::SpherePhantom edge = ok;
    edge.center_mm = {8.0, 8.0, 8.0};
    edge.radius_mm = 4.5; // z: 8 + 4.5 > 16 - 4
    CHECK_THROWS_AS(edge.validate(thick), qsm::invalid_argument);
}

TEST_CASE("rasterized spheres integrate to the analytic volume") {
    const qsm::Grid3 g(16, 16, 16);

    SUBCASE("sub-voxel sphere, partial volumes only") {
        qsm::SpherePhantom tiny;
        tiny.center_mm = {8.3, 7.6, 8.1};
        tiny.radius_mm = 0.4;
        tiny.delta_chi_ppm = 2.0;
        const qsm::RealVolume chi = qsm::sphere_chi(g, tiny);
        double total = 0.0;
        for (double v : chi.data) total += v;
        const double want = sphere_volume(0.4) * 2.0;
        CHECK(std::abs(total - want) <= 0.05 * want);
    }

    SUBCASE("resolved sphere integrates tightly and clamps its values") {
        qsm::SpherePhantom spec;
        spec.center_mm = {8.3, 7.6, 8.1};
        spec.radius_mm = 3.3;
        spec.delta_chi_ppm = 1.5;
        const qsm::RealVolume chi = qsm::sphere_chi(g, spec);
        double total = 0.0;
        bool partial_seen = false;
        for (double v : chi.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.5);
            if (v > 0.0 && v < 1.5) partial_seen = true;
            total += v;
        }
        CHECK(partial_seen); // the surface cuts voxels somewhere
        const double want = sphere_volume(3.3) * 1.5;
        CHECK(std::abs(total - want) <= 0.01 * want);

        // deep interior and far exterior are exact
        CHECK(chi.at(8, 8, 8) == 1.5);
        CHECK(chi.at(1, 1, 1) == 0.0);
    }

    SUBCASE("zero contrast gives a zero volume") {
        qsm::SpherePhantom spec;
        spec.center_mm = {8.0, 8.0, 8.0};
        spec.radius_mm = 4.0;
        spec.delta_chi_ppm = 0.0;
        CHECK(qsm::max_abs(qsm::sphere_chi(g, spec).data) == 0.0);
    }
}

TEST_CASE("the closed-form sphere field hits its textbook values") {
    const qsm::Grid3 g(32, 32, 32);
    qsm::SpherePhantom spec;
    spec.center_mm = {16.5, 16.5, 16.5}; // a voxel center, so offsets are integers
    spec.radius_mm = 4.0;
    spec.delta_chi_ppm = 0.8;
    const qsm::RealVolume f = qsm::sphere_field_analytic(g, spec, qsm::FieldDirection::z());

    // on-axis, two radii out: (dchi/3)(1/2)^3 (3 - 1) = dchi/12
    CHECK(f.at(16, 16, 24) == doctest::Approx(0.8 / 12.0).epsilon(1e-14));
    // equatorial at the same distance: cos = 0 gives -dchi/24
    CHECK(f.at(24, 16, 16) == doctest::Approx(-0.8 / 24.0).epsilon(1e-14));
    // the magic angle (1,1,1) direction: 3cos^2 - 1 = 0
    CHECK(std::abs(f.at(22, 22, 22)) <= 1e-15);
    // Lorentz convention: identically zero inside
    CHECK(f.at(16, 17, 16) == 0.0);
    CHECK(f.at(15, 15, 17) == 0.0);

    // field direction only enters through the angle: x-oriented H swaps roles
    const qsm::RealVolume fx =
        qsm::sphere_field_analytic(g, spec, qsm::FieldDirection::normalized(1.0, 0.0, 0.0));
    CHECK(fx.at(24, 16, 16) == doctest::Approx(0.8 / 12.0).epsilon(1e-14));
    CHECK(fx.at(16, 16, 24) == doctest::Approx(-0.8 / 24.0).epsilon(1e-14));
}

TEST_CASE("periodic forward field of a padded sphere matches the closed form") {
    // compute on a 2x padded grid so wraparound is negligible, then compare
    // the central region against the aperiodic analytic answer
    const int n = 32;
    const qsm::Grid3 roi(n, n, n);
    const qsm::Grid3 pad(2 * n, 2 * n, 2 * n);
    const double r = 5.0;

    qsm::SpherePhantom inner;
    inner.center_mm = {double(n) / 2, double(n) / 2, double(n) / 2};
    inner.radius_mm = r;
    qsm::SpherePhantom outer = inner;
    outer.center_mm = {double(n), double(n), double(n)};

    qsm::ReconState X(pad);
    X.chi33 = qsm::sphere_chi(pad, outer);
    const qsm::RealVolume field_pad = qsm::apply_A(X);
    const qsm::RealVolume want = qsm::sphere_field_analytic(roi, inner, qsm::FieldDirection::z());

    const int off = n / 2;
    double num = 0.0, den = 0.0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double dx = (x + 0.5) - inner.center_mm[0];
                const double dy = (y + 0.5) - inner.center_mm[1];
                const double dz = (z + 0.5) - inner.center_mm[2];
                const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
                if (std::abs(dist - r) <= 2.0) continue; // skip the rasterized shell
                const double got = field_pad.at(x + off, y + off, z + off);
                const double ref = want.at(x, y, z);
                num += (got - ref) * (got - ref);
                den += ref * ref;
            }
    REQUIRE(den > 0.0);
    CHECK(std::sqrt(num / den) <= 0.05);
}

TEST_CASE("random_tensor is deterministic with documented channel structure") {
    const qsm::Grid3 g(12, 12, 12);
    qsm::RandomTensorSpec spec;
    spec.seed = 77;
    spec.correlation_length_mm = 3.0;

    const qsm::TensorField a = qsm::random_tensor(g, spec);
    const qsm::TensorField b = qsm::random_tensor(g, spec);
    for (int c = 0; c < qsm::TensorField::kChannels; ++c)
        CHECK(std::equal(a.channel(c).begin(), a.channel(c).end(), b.channel(c).begin()));

    SUBCASE("zero anisotropy collapses to a shared isotropic component") {
        spec.anisotropy_fraction = 0.0;
        const qsm::TensorField iso = qsm::random_tensor(g, spec);
        CHECK(std::equal(iso.channel(0).begin(), iso.channel(0).end(), iso.channel(3).begin()));
        CHECK(std::equal(iso.channel(0).begin(), iso.channel(0).end(), iso.channel(5).begin()));
        for (int c : {1, 2, 4})
            for (double v : iso.channel(c)) CHECK(v == 0.0);
    }

    SUBCASE("zero amplitude gives the zero tensor") {
        spec.amplitude_ppm = 0.0;
        const qsm::TensorField zero = qsm::random_tensor(g, spec);
        for (int c = 0; c < qsm::TensorField::kChannels; ++c)
            for (double v : zero.channel(c)) CHECK(v == 0.0);
    }

    SUBCASE("different seeds decorrelate") {
        spec.seed = 78;
        const qsm::TensorField other = qsm::random_tensor(g, spec);
        CHECK(oracle::max_abs_diff(std::vector<double>(a.channel(5).begin(), a.channel(5).end()),
                                   std::vector<double>(other.channel(5).begin(),
                                                       other.channel(5).end())) > 1e-3);
    }
}

TEST_CASE("random_tensor statistics follow the requested knobs") {
    const qsm::Grid3 g(48, 48, 48);
    qsm::RandomTensorSpec spec;
    spec.seed = 21;
    spec.correlation_length_mm = 4.0;
    spec.amplitude_ppm = 0.05;
    spec.anisotropy_fraction = 0.3;
    const qsm::TensorField t = qsm::random_tensor(g, spec);

    for (int c : {0, 3, 5}) {
        CHECK(std::abs(channel_mean(t, c)) <= 1e-12 * spec.amplitude_ppm);
        CHECK(channel_std(t, c) == doctest::Approx(spec.amplitude_ppm).epsilon(0.10));
    }
    // off-diagonals carry exactly the deviatoric share: their generator is
    // rescaled to unit sample std, so this is tight
    for (int c : {1, 2, 4})
        CHECK(channel_std(t, c) ==
              doctest::Approx(spec.anisotropy_fraction * spec.amplitude_ppm).epsilon(1e-10));
}

TEST_CASE("random_tensor validates its knobs") {
    const qsm::Grid3 g(8, 8, 8);
    qsm::RandomTensorSpec spec;

    spec.correlation_length_mm = 0.5; // below one voxel
    CHECK_THROWS_AS(qsm::random_tensor(g, spec), qsm::invalid_argument);

    spec = {};
    spec.amplitude_ppm = -0.1;
    CHECK_THROWS_AS(qsm::random_tensor(g, spec), qsm::invalid_argument);

    spec = {};
    spec.anisotropy_fraction = 1.5;
    CHECK_THROWS_AS(qsm::random_tensor(g, spec), qsm::invalid_argument);
}

TEST_CASE("orientation_set implements the tilt protocol") {
    const auto rots = qsm::orientation_set(12, 40.0, 11);
    REQUIRE(rots.size() == 12);

    // first scan is supine
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(rots[0](i, j) == (i == j ? 1.0 : 0.0));

    for (std::size_t i = 0; i < rots.size(); ++i) {
        const qsm::RotationMatrix rt = rots[i].transpose();
        const qsm::RotationMatrix should_be_identity = rots[i] * rt;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                CHECK(std::abs(should_be_identity(r, c) - (r == c ? 1.0 : 0.0)) <= 1e-12);

        // tilt schedule is linear in the scan index
        const qsm::FieldDirection h = qsm::h_from_rotation(rots[i]);
        const double want_tilt = 40.0 * double(i) / 11.0 * kPi / 180.0;
        CHECK(std::abs(std::acos(std::clamp(h[2], -1.0, 1.0)) - want_tilt) <= 1e-12);
    }

    // directions are pairwise distinct, so the set feeds sti_fit directly
    for (std::size_t i = 0; i < rots.size(); ++i)
        for (std::size_t j = i + 1; j < rots.size(); ++j) {
            const qsm::FieldDirection a = qsm::h_from_rotation(rots[i]);
            const qsm::FieldDirection b = qsm::h_from_rotation(rots[j]);
            CHECK(std::abs(a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) < 1.0 - 1e-12);
        }

    SUBCASE("seeded azimuths are reproducible") {
        const auto again = qsm::orientation_set(12, 40.0, 11);
        for (std::size_t i = 0; i < rots.size(); ++i) CHECK(again[i].m == rots[i].m);
        const auto other = qsm::orientation_set(12, 40.0, 12);
        CHECK(other[1].m != rots[1].m);
    }

    SUBCASE("single-orientation set is just the identity") {
        const auto one = qsm::orientation_set(1, 30.0, 0);
        REQUIRE(one.size() == 1);
        CHECK(one[0].m == qsm::RotationMatrix::identity().m);
    }

    SUBCASE("validation") {
        CHECK_THROWS_AS(qsm::orientation_set(0, 30.0, 0), qsm::invalid_argument);
        CHECK_THROWS_AS(qsm::orientation_set(6, 0.0, 0), qsm::invalid_argument);
        CHECK_THROWS_AS(qsm::orientation_set(6, 91.0, 0), qsm::invalid_argument);
    }
}

TEST_CASE("the 12-scan protocol yields a well-conditioned tensor design") {
    const auto rots = qsm::orientation_set(12, 40.0, 11);

    // design rows at a generic k direction
    const double kx = 1.0, ky = 2.0, kz = 3.0, ksq = 14.0;
    Eigen::Matrix<double, Eigen::Dynamic, 6> M(12, 6);
    for (std::size_t n = 0; n < rots.size(); ++n) {
        const auto row =
            qsm::field_coefficients(kx, ky, kz, ksq, qsm::h_from_rotation(rots[n]));
        for (int c = 0; c < 6; ++c) M(int(n), c) = row[static_cast<std::size_t>(c)];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const double cond = svd.singularValues()(0) / svd.singularValues()(5);
    CHECK(cond < 100.0);
}

TEST_CASE("add_noise is seeded, unbiased, and exact at sigma zero") {
    const qsm::Grid3 g(48, 48, 48);
    const qsm::RealVolume base = oracle::random_volume(g, 90);

    const qsm::RealVolume same = qsm::add_noise(base, 0.0, 1);
    CHECK(same.data == base.data);

    const qsm::RealVolume a = qsm::add_noise(base, 0.1, 7);
    const qsm::RealVolume b = qsm::add_noise(base, 0.1, 7);
    CHECK(a.data == b.data);
    CHECK(qsm::add_noise(base, 0.1, 8).data != a.data);

    CHECK_THROWS_AS(qsm::add_noise(base, -0.1, 0), qsm::invalid_argument);

    // statistics on a zero volume: pure noise
    const qsm::RealVolume pure = qsm::add_noise(qsm::RealVolume(g, qsm::Unit::ppm), 0.1, 3);
    CHECK(std::abs(qsm::mean(pure.data)) <= 2e-3 * 0.1);
    double var = 0.0;
    for (double v : pure.data) var += v * v;
    const double sd = std::sqrt(var / double(g.voxel_count()));
    CHECK(sd == doctest::Approx(0.1).epsilon(0.05));
}

} // TEST_SUITE
