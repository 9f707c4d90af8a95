#include <doctest.h>

#include <cmath>
#include <vector>

#include "cbctcad/errors.hpp"
#include "cbctcad/fdk.hpp"
#include "cbctcad/metrics.hpp"
#include "cbctcad/phantom.hpp"
#include "cbctcad/projector.hpp"

using namespace cbctcad;

namespace {

Volume make_ball(std::array<int, 3> dims, double spacing, double radius, double density) {
    Volume v = Volume::centered(dims, {spacing, spacing, spacing});
    const int ss = 4;
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x) {
                const Vec3 c = v.voxel_center(x, y, z);
                int inside = 0;
                for (int a = 0; a < ss; ++a)
                    for (int b = 0; b < ss; ++b)
                        for (int d = 0; d < ss; ++d) {
                            const double px = c.x + (a + 0.5) / ss * spacing - spacing / 2;
                            const double py = c.y + (b + 0.5) / ss * spacing - spacing / 2;
                            const double pz = c.z + (d + 0.5) / ss * spacing - spacing / 2;
                            if (px * px + py * py + pz * pz <= radius * radius) ++inside;
                        }
                v.at(x, y, z) = static_cast<float>(density * inside / (ss * ss * ss));
            }
    return v;
}

ConeBeamGeometry small_detector_geometry(std::vector<double> angles) {
    ConeBeamGeometry g = make_default_geometry();
    g.detector_px = 96;
    g.angles_deg = std::move(angles);
    return g;
}

double interior_mean(const Volume& v, double radius_frac, double radius) {
    double sum = 0.0;
    int n = 0;
    for (int z = 0; z < v.dims[2]; ++z)
        for (int y = 0; y < v.dims[1]; ++y)
            for (int x = 0; x < v.dims[0]; ++x) {
                const Vec3 c = v.voxel_center(x, y, z);
                if (c.norm() <= radius_frac * radius) {
                    sum += v.at(x, y, z);
                    ++n;
                }
            }
    return sum / n;
}

}  // namespace

TEST_SUITE("fdk") {

TEST_CASE("ramp kernel closed form") {
    CHECK(ramp_kernel(0, 4.0) == doctest::Approx(0.015625).epsilon(1e-12));
    CHECK(ramp_kernel(1, 4.0) == doctest::Approx(-0.006332573977646111).epsilon(1e-12));
    CHECK(ramp_kernel(-1, 4.0) == doctest::Approx(-0.006332573977646111).epsilon(1e-12));
    CHECK(ramp_kernel(2, 4.0) == 0.0);
    CHECK(ramp_kernel(4, 4.0) == 0.0);
    CHECK(ramp_kernel(3, 4.0) == doctest::Approx(-0.0007036193308495678).epsilon(1e-12));
    CHECK(ramp_kernel(0, 2.0) == doctest::Approx(1.0 / 16.0).epsilon(1e-12));
}

TEST_CASE("row filtering reproduces the kernel on an impulse") {
    Image img(64, 1, 0.0f);
    img.at(0, 40) = 1.0f;
    ramp_filter_rows(img, 2.0, FilterWindow::RamLak);
    const double tol = 1e-6 * ramp_kernel(0, 2.0);
    for (int c = 0; c < 64; ++c) {
        CHECK(std::abs(img.at(0, c) - ramp_kernel(c - 40, 2.0)) < tol);
    }
}

TEST_CASE("row filtering is linear and kills constants") {
    Image a(128, 2, 0.0f), b(128, 2, 0.0f);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 128; ++c) {
            a.at(r, c) = static_cast<float>(std::sin(0.3 * c + r));
            b.at(r, c) = static_cast<float>(std::cos(0.11 * c));
        }
    Image sum(128, 2, 0.0f);
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] = a.data[i] + b.data[i];

    Image fa = a, fb = b, fsum = sum;
    ramp_filter_rows(fa, 2.0, FilterWindow::RamLak);
    ramp_filter_rows(fb, 2.0, FilterWindow::RamLak);
    ramp_filter_rows(fsum, 2.0, FilterWindow::RamLak);
    for (std::size_t i = 0; i < sum.data.size(); ++i) {
        CHECK(fsum.data[i] == doctest::Approx(fa.data[i] + fb.data[i]).epsilon(1e-5));
    }

    Image flat(128, 1, 1.0f);
    ramp_filter_rows(flat, 2.0, FilterWindow::RamLak);
    for (const float f : flat.data) CHECK(std::abs(f) < 1e-3);
}

TEST_CASE("hann window damps the response") {
    Image rl(64, 1, 0.0f), hn(64, 1, 0.0f);
    rl.at(0, 32) = 1.0f;
    hn.at(0, 32) = 1.0f;
    ramp_filter_rows(rl, 2.0, FilterWindow::RamLak);
    ramp_filter_rows(hn, 2.0, FilterWindow::Hann);
    CHECK(hn.at(0, 32) > 0.0f);
    CHECK(hn.at(0, 32) < rl.at(0, 32));
    CHECK(filter_window_from_name("hann") == FilterWindow::Hann);
    CHECK(filter_window_from_name("ram-lak") == FilterWindow::RamLak);
    CHECK_THROWS_AS(filter_window_from_name("boxcar"), std::invalid_argument);
}

TEST_CASE("cosine weights follow the ray obliquity") {
    const ConeBeamGeometry g = make_default_geometry();  // 256 px, pitch 2
    Image view(256, 256, 1.0f);
    cosine_weight_view(view, g);
    CHECK(view.at(127, 127) == doctest::Approx(0.9999994897963088).epsilon(1e-12));
    CHECK(view.at(0, 0) == doctest::Approx(0.9683886658853017).epsilon(1e-12));
    CHECK(view.at(0, 0) == doctest::Approx(view.at(255, 255)).epsilon(1e-12));
    CHECK(view.at(127, 127) > view.at(0, 127));
}

TEST_CASE("reconstruction requires angular coverage") {
    ConeBeamGeometry g = small_detector_geometry(half_scan_angles(2.0, 90.0));
    ProjectionSet p;
    p.geom = g;
    for (std::size_t i = 0; i < g.angles_deg.size(); ++i)
        p.views.emplace_back(g.detector_px, g.detector_px, 0.0f);
    FdkOptions opt;
    opt.dims = {32, 32, 32};
    opt.spacing_mm = {4, 4, 4};
    CHECK_THROWS_AS(fdk_reconstruct(p, opt), InsufficientCoverageError);
}

TEST_CASE("zero projections reconstruct to zero") {
    ConeBeamGeometry g = small_detector_geometry(half_scan_angles(2.0));
    ProjectionSet p;
    p.geom = g;
    for (std::size_t i = 0; i < g.angles_deg.size(); ++i)
        p.views.emplace_back(g.detector_px, g.detector_px, 0.0f);
    FdkOptions opt;
    opt.dims = {32, 32, 32};
    opt.spacing_mm = {4, 4, 4};
    const Volume v = fdk_reconstruct(p, opt);
    for (const float f : v.data) CHECK(f == 0.0f);
}

TEST_CASE("full scans beat sparse half scans on the ball") {
    const double radius = 30.0, density = 0.5;
    const Volume ball = make_ball({48, 48, 48}, 2.5, radius, density);
    FdkOptions opt;
    opt.dims = ball.dims;
    opt.spacing_mm = ball.spacing_mm;
    opt.window = FilterWindow::Hann;

    const ProjectionSet full =
        forward_project(ball, small_detector_geometry(half_scan_angles(1.0, 360.0)));
    const Volume recon_full = fdk_reconstruct(full, opt);

    const ProjectionSet sparse =
        forward_project(ball, small_detector_geometry(half_scan_angles(2.0, 180.0)));
    const Volume recon_sparse = fdk_reconstruct(sparse, opt);

    const double mean_full = interior_mean(recon_full, 0.6, radius);
    CHECK(mean_full == doctest::Approx(density).epsilon(0.05));

    const double rmse_full = volume_rmse(recon_full, ball);
    const double rmse_sparse = volume_rmse(recon_sparse, ball);
    CHECK(rmse_sparse > 1.2 * rmse_full);
}

TEST_CASE("more views never hurt") {
    const auto c = generate_case(3, DiagnosisLabel::Chronic, DiagnosisLabel::FungalBall,
                                 {48, 48, 48});
    const Volume& truth = c.labeled.volume;
    FdkOptions opt;
    opt.dims = truth.dims;
    opt.spacing_mm = truth.spacing_mm;

    std::vector<double> rmse;
    for (const int n_views : {30, 90, 180, 360}) {
        const double step = 360.0 / n_views;
        const ProjectionSet p =
            forward_project(truth, small_detector_geometry(half_scan_angles(step, 360.0)));
        rmse.push_back(volume_rmse(fdk_reconstruct(p, opt), truth));
    }
    for (std::size_t i = 1; i < rmse.size(); ++i) {
        CHECK(rmse[i] <= rmse[i - 1] * 1.01);  // weak monotonicity, 1% slack
    }
}

TEST_CASE("parker weights pair up to unity") {
    ConeBeamGeometry g = make_default_geometry();
    g.detector_px = 64;
    g.angles_deg = half_scan_angles(2.0, 220.0);
    const auto w = parker_weights(g);
    REQUIRE(w.size() == g.angles_deg.size());
    REQUIRE(w[0].size() == static_cast<std::size_t>(g.detector_px));

    int pairs = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        for (int col = 0; col < g.detector_px; ++col) {
            const double weight = w[i][col];
            CHECK(weight >= -1e-9);
            CHECK(weight <= 2.0 + 1e-9);
            const double u = g.detector_coords(0, col)[0];
            const double gamma = std::atan2(u, g.sdd_mm());
            const double beta = g.angles_deg[i];
            const double beta_pair = beta + 180.0 - 2.0 * gamma * 180.0 / 3.14159265358979;
            const double fidx = (beta_pair - g.angles_deg.front()) / 2.0;
            const auto j = static_cast<std::ptrdiff_t>(std::llround(fidx));
            if (j < 0 || j >= static_cast<std::ptrdiff_t>(w.size())) continue;
            if (std::abs(fidx - static_cast<double>(j)) > 0.26) continue;
            const int col_pair = g.detector_px - 1 - col;
            CHECK(weight + w[static_cast<std::size_t>(j)][col_pair] ==
                  doctest::Approx(1.0).epsilon(0.08));
            ++pairs;
        }
    }
    CHECK(pairs > 500);
}

TEST_CASE("pcbct synthesis is deterministic and keeps the grid") {
    const auto c = generate_case(6, DiagnosisLabel::Healthy, DiagnosisLabel::Chronic,
                                 {48, 48, 48});
    ConeBeamGeometry g = make_default_geometry();
    g.detector_px = 128;
    const Volume a = synthesize_pcbct(c.labeled.volume, g);
    const Volume b = synthesize_pcbct(c.labeled.volume, g);
    CHECK(a.data == b.data);
    CHECK(a.dims == c.labeled.volume.dims);
    CHECK(a.spacing_mm == c.labeled.volume.spacing_mm);
    CHECK(volume_rmse(a, c.labeled.volume) > 0.0);
}

}  // TEST_SUITE
