#include <doctest.h>

#include <map>
#include <stdexcept>

#include "cbctcad/phantom.hpp"

using namespace cbctcad;

namespace {
constexpr std::array<int, 3> kDims{48, 48, 48};
}

TEST_SUITE("phantom") {

TEST_CASE("label names round-trip") {
    CHECK(label_from_name("healthy") == DiagnosisLabel::Healthy);
    CHECK(label_from_name("chronic") == DiagnosisLabel::Chronic);
    CHECK(label_from_name("fungal_ball") == DiagnosisLabel::FungalBall);
    CHECK(label_name(DiagnosisLabel::Chronic) == std::string("chronic"));
    CHECK_THROWS_AS(label_from_name("nope"), std::invalid_argument);
}

TEST_CASE("generation is deterministic in the seed") {
    const auto a = generate_case(77, DiagnosisLabel::Chronic, DiagnosisLabel::Healthy, kDims);
    const auto b = generate_case(77, DiagnosisLabel::Chronic, DiagnosisLabel::Healthy, kDims);
    CHECK(a.labeled.volume.data == b.labeled.volume.data);
    CHECK(a.labeled.key_slice_range == b.labeled.key_slice_range);

    const auto c = generate_case(78, DiagnosisLabel::Chronic, DiagnosisLabel::Healthy, kDims);
    CHECK(a.labeled.volume.data != c.labeled.volume.data);
}

TEST_CASE("labels change contents but not the anatomy") {
    const auto hc = generate_case(5, DiagnosisLabel::Healthy, DiagnosisLabel::Healthy, kDims);
    const auto dis = generate_case(5, DiagnosisLabel::FungalBall, DiagnosisLabel::Chronic, kDims);
    for (int side = 0; side < 2; ++side) {
        for (int i = 0; i < 3; ++i) {
            CHECK(hc.layout.cavity[side].center[i] ==
                  doctest::Approx(dis.layout.cavity[side].center[i]));
            CHECK(hc.layout.cavity[side].semi[i] ==
                  doctest::Approx(dis.layout.cavity[side].semi[i]));
        }
    }
    CHECK(hc.labeled.key_slice_range == dis.labeled.key_slice_range);
}

TEST_CASE("cavity placement is mirrored about the x midplane") {
    const auto c = generate_case(11, DiagnosisLabel::Healthy, DiagnosisLabel::Healthy, kDims);
    const double mid2 = kDims[0] - 1.0;  // centers must sum to 2 * midplane
    CHECK(c.layout.cavity[0].center[0] + c.layout.cavity[1].center[0] ==
          doctest::Approx(mid2).epsilon(1e-12));
    CHECK(c.layout.cavity[0].center[1] == doctest::Approx(c.layout.cavity[1].center[1]));
    CHECK(c.layout.cavity[0].center[2] == doctest::Approx(c.layout.cavity[1].center[2]));
    for (int i = 0; i < 3; ++i) {
        CHECK(c.layout.cavity[0].semi[i] == doctest::Approx(c.layout.cavity[1].semi[i]));
    }
    CHECK(c.layout.cavity[0].center[0] < c.layout.cavity[1].center[0]);
}

TEST_CASE("healthy cavities read as air, diseased ones as content") {
    // Same anatomy example as the CLI default: left fungal ball, right chronic.
    const auto d = generate_case(1, DiagnosisLabel::FungalBall, DiagnosisLabel::Chronic, kDims);
    const CavityStats mfb = cavity_stats(d.labeled.volume, d.layout, 0);
    const CavityStats crs = cavity_stats(d.labeled.volume, d.layout, 1);
    CHECK(mfb.voxels > 100);
    CHECK(crs.voxels > 100);
    CHECK(mfb.max > 0.7);   // hyperdense core present
    CHECK(crs.max < 0.5);   // homogeneous opacification only
    CHECK(crs.mean > 0.05); // some fill
    CHECK(mfb.mean > crs.mean);

    const auto h = generate_case(1, DiagnosisLabel::Healthy, DiagnosisLabel::Healthy, kDims);
    for (int side = 0; side < 2; ++side) {
        const CavityStats s = cavity_stats(h.labeled.volume, h.layout, side);
        CHECK(s.mean < 0.1);
    }
}

TEST_CASE("fungal core occupies a plausible share of the cavity") {
    // The voxel share above the core/fill midpoint should sit near the
    // configured 10-30% volume fraction; antialiased boundaries widen it.
    for (const std::uint64_t seed : {2ull, 3ull, 4ull, 9ull}) {
        const auto c =
            generate_case(seed, DiagnosisLabel::FungalBall, DiagnosisLabel::Healthy, kDims);
        const auto& cav = c.layout.cavity[0];
        std::int64_t core = 0, total = 0;
        for (int z = 0; z < kDims[2]; ++z)
            for (int y = 0; y < kDims[1]; ++y)
                for (int x = 0; x < kDims[0]; ++x) {
                    if (!cav.contains(x, y, z)) continue;
                    ++total;
                    if (c.labeled.volume.at(x, y, z) > 0.7f) ++core;
                }
        REQUIRE(total > 0);
        const double frac = static_cast<double>(core) / static_cast<double>(total);
        CHECK(frac > 0.05);
        CHECK(frac < 0.40);
    }
}

TEST_CASE("key slice range brackets the cavities") {
    const auto c = generate_case(21, DiagnosisLabel::Chronic, DiagnosisLabel::Chronic, kDims);
    const auto [k0, k1] = c.labeled.key_slice_range;
    REQUIRE(k0 <= k1);
    CHECK(k0 >= 0);
    CHECK(k1 < kDims[1]);
    const double cy = c.layout.cavity[0].center[1];
    const double sy = c.layout.cavity[0].semi[1];
    CHECK(k0 <= cy - sy + 1.0);
    CHECK(k1 >= cy + sy - 1.0);
    CHECK(k0 >= cy - sy - 1.0);
    CHECK(k1 <= cy + sy + 1.0);
}

TEST_CASE("volume values look like a head") {
    const auto c = generate_case(2, DiagnosisLabel::Healthy, DiagnosisLabel::Healthy, kDims);
    const Volume& v = c.labeled.volume;
    CHECK(v.at(0, 0, 0) < 0.05f);  // outside the head: air
    // Midpoint between the cavities: soft tissue.
    const int mx = kDims[0] / 2, my = kDims[1] / 2, mz = kDims[2] / 2;
    CHECK(v.at(mx, my, mz) == doctest::Approx(0.3).epsilon(0.15));
    // Somewhere on the shell there must be bone-bright voxels.
    float mx_val = 0.0f;
    for (const float f : v.data) mx_val = std::max(mx_val, f);
    CHECK(mx_val > 0.7f);
    CHECK(mx_val < 1.3f);
    CHECK(v.spacing_mm[0] == doctest::Approx(180.0 / kDims[0]));
}

TEST_CASE("generation rejects tiny grids and bad extents") {
    CHECK_THROWS_AS(
        generate_case(1, DiagnosisLabel::Healthy, DiagnosisLabel::Healthy, {16, 48, 48}),
        std::invalid_argument);
    CHECK_THROWS_AS(
        generate_case(1, DiagnosisLabel::Healthy, DiagnosisLabel::Healthy, kDims, -5.0),
        std::invalid_argument);
}

TEST_CASE("datasets honor per-side label counts") {
    DatasetSpec spec;
    spec.n_cases = 12;
    spec.side_counts = {3, 3, 6};
    spec.dims = {32, 32, 32};
    spec.seed = 99;
    const auto cases = generate_dataset(spec);
    REQUIRE(cases.size() == 12);

    std::map<std::string, int> ids;
    std::array<std::map<DiagnosisLabel, int>, 2> counts;
    for (const auto& c : cases) {
        ids[c.labeled.id]++;
        counts[0][c.labeled.labels[0]]++;
        counts[1][c.labeled.labels[1]]++;
    }
    CHECK(ids.size() == 12);  // unique ids
    for (int side = 0; side < 2; ++side) {
        CHECK(counts[side][DiagnosisLabel::Healthy] == 3);
        CHECK(counts[side][DiagnosisLabel::Chronic] == 3);
        CHECK(counts[side][DiagnosisLabel::FungalBall] == 6);
    }
    // Sides are shuffled independently: pairings should not be all-equal.
    int mismatched = 0;
    for (const auto& c : cases) mismatched += c.labeled.labels[0] != c.labeled.labels[1];
    CHECK(mismatched > 0);

    DatasetSpec bad = spec;
    bad.side_counts = {3, 3, 5};
    CHECK_THROWS_AS(generate_dataset(bad), std::invalid_argument);
}

TEST_CASE("dataset generation is deterministic") {
    DatasetSpec spec;
    spec.n_cases = 4;
    spec.side_counts = {2, 1, 1};
    spec.dims = {32, 32, 32};
    spec.seed = 7;
    const auto a = generate_dataset(spec);
    const auto b = generate_dataset(spec);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].labeled.seed == b[i].labeled.seed);
        CHECK(a[i].labeled.volume.data == b[i].labeled.volume.data);
    }
}

}  // TEST_SUITE
