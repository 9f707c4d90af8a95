#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "cbctcad/denoise.hpp"
#include "cbctcad/diagnosis.hpp"
#include "cbctcad/errors.hpp"
#include "cbctcad/phantom.hpp"
#include "cbctcad/rng.hpp"

using namespace cbctcad;

namespace {

StandardScaler unit_scaler(std::size_t dim) {
    StandardScaler s;
    s.mean.assign(dim, 0.0);
    s.sd.assign(dim, 1.0);
    return s;
}

// A classifier that ignores its input: zero weights, chosen biases.
SideClassifier constant_classifier(std::array<double, 3> bias = {0.0, 0.0, 0.0}) {
    return SideClassifier(unit_scaler(kSideFeatureCount),
                          std::vector<double>(3 * kSideFeatureCount, 0.0),
                          {bias[0], bias[1], bias[2]}, 0.6);
}

// Synthetic side sub-volume with controlled sinus-region content. The region
// ellipsoid for these dims (32 x 20 x 32) is centered at (19.2, 10, 15.68)
// with semi-axes (5.12, 6.4, 1.92).
Volume make_side(DiagnosisLabel label, Rng& rng) {
    Volume v = Volume::centered({32, 20, 32}, {2, 2, 2}, 0.1f);
    const double cx = 0.5 * (kSinusBoxX0 + kSinusBoxX1) * 32;
    const double cy = 0.5 * (kSinusBoxY0 + kSinusBoxY1) * 20;
    const double cz = 0.5 * (kSinusBoxZ0 + kSinusBoxZ1) * 32;
    const double rx = 0.5 * (kSinusBoxX1 - kSinusBoxX0) * 32;
    const double ry = 0.5 * (kSinusBoxY1 - kSinusBoxY0) * 20;
    const double rz = 0.5 * (kSinusBoxZ1 - kSinusBoxZ0) * 32;
    for (int z = 0; z < 32; ++z)
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 32; ++x) {
                const double ux = (x - cx) / rx, uy = (y - cy) / ry, uz = (z - cz) / rz;
                if (ux * ux + uy * uy + uz * uz > 1.0) continue;
                float val = label == DiagnosisLabel::Healthy ? 0.04f : 0.4f;
                if (label == DiagnosisLabel::FungalBall) {
                    const double d2 = (x - 19.0) * (x - 19.0) + (y - 10.0) * (y - 10.0) +
                                      (z - 16.0) * (z - 16.0);
                    if (d2 <= 4.0) val = 0.9f;
                }
                v.at(x, y, z) = val + static_cast<float>(rng.uniform(-0.01, 0.01));
            }
    return v;
}

std::vector<Volume> side_bank(int per_class, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Volume> bank;
    for (int i = 0; i < per_class; ++i)
        for (const auto l :
             {DiagnosisLabel::Healthy, DiagnosisLabel::Chronic, DiagnosisLabel::FungalBall})
            bank.push_back(make_side(l, rng));
    return bank;
}

DiagnosisLabel bank_label(std::size_t i) { return static_cast<DiagnosisLabel>(i % 3); }

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_SUITE("diagnosis") {

TEST_CASE("slice features: frozen ordering on constant and checkerboard slices") {
    const auto zero = slice_features(Image(8, 8, 0.0f));
    REQUIRE(zero.size() == 20);
    CHECK(zero[0] == 1.0);  // histogram bin 0
    for (int b = 1; b < 16; ++b) CHECK(zero[b] == 0.0);
    CHECK(zero[16] == 0.0);  // mean
    CHECK(zero[17] == 0.0);  // variance
    CHECK(zero[18] == 1.0);  // fraction below 0.1
    CHECK(zero[19] == 0.0);  // mean gradient magnitude

    Image checker(8, 8);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) checker.at(r, c) = (r + c) % 2 ? 1.0f : 0.0f;
    const auto f = slice_features(checker);
    CHECK(f[0] == doctest::Approx(0.5));   // zeros
    CHECK(f[15] == doctest::Approx(0.5));  // ones clamp into the top bin
    CHECK(f[16] == doctest::Approx(0.5));
    CHECK(f[17] == doctest::Approx(0.25));
    CHECK(f[18] == doctest::Approx(0.5));
    // Central differences skip one pixel, so the period-2 pattern cancels.
    CHECK(f[19] == doctest::Approx(0.0));

    CHECK_THROWS_AS(slice_features(Image(2, 8, 0.0f)), std::invalid_argument);
    CHECK_THROWS_AS(slice_features(Image(8, 2, 0.0f)), std::invalid_argument);
}

TEST_CASE("slice features are exactly mirror invariant") {
    Rng rng(77);
    Image img(11, 9);
    for (auto& p : img.data) p = static_cast<float>(rng.uniform01());
    Image mirrored(11, 9);
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 11; ++c) mirrored.at(r, c) = img.at(r, 10 - c);
    CHECK(slice_features(img) == slice_features(mirrored));
}

TEST_CASE("side features read the sinus ellipsoid, not the surrounding box") {
    Volume empty = Volume::centered({32, 32, 32}, {2, 2, 2});
    const auto base = side_features(empty, 0.6);
    REQUIRE(base.size() == 20);
    CHECK(base[0] == 0.0);  // mean
    CHECK(base[1] == 0.0);  // variance
    CHECK(base[2] == 0.0);  // max
    CHECK(base[3] == 0.0);  // high fraction
    CHECK(base[4] == 1.0);  // histogram bin 0
    for (int b = 5; b < 20; ++b) CHECK(base[b] == 0.0);

    // A bright voxel at the region center is seen by max/highfrac/histogram.
    Volume inside = empty;
    inside.at(19, 16, 16) = 0.95f;
    const auto fin = side_features(inside, 0.6);
    CHECK(fin[2] == doctest::Approx(0.95));
    CHECK(fin[3] > 0.0);
    CHECK(fin[19] > 0.0);  // top histogram bin

    // Far outside the region: invisible.
    Volume outside = empty;
    outside.at(2, 2, 2) = 0.95f;
    CHECK(side_features(outside, 0.6) == base);

    // Inside the bounding box but outside the inscribed ellipsoid (a box
    // corner, where the bony wall lives): also invisible.
    Volume corner = empty;
    corner.at(15, 7, 14) = 0.95f;
    CHECK(side_features(corner, 0.6) == base);

    // high_threshold is honored.
    Volume filled = empty;
    for (int z = 14; z <= 17; ++z)
        for (int y = 12; y <= 20; ++y)
            for (int x = 17; x <= 21; ++x) filled.at(x, y, z) = 0.7f;
    CHECK(side_features(filled, 0.6)[3] > 0.0);
    CHECK(side_features(filled, 0.8)[3] == 0.0);

    CHECK_THROWS_AS(side_features(Volume::centered({1, 5, 5}, {1, 1, 1}), 0.6),
                    std::invalid_argument);
}

TEST_CASE("standard scaler: population statistics with a floor") {
    StandardScaler s;
    s.fit({{0.0, 10.0, 3.0}, {2.0, 20.0, 3.0}});
    CHECK(s.mean == std::vector<double>{1.0, 15.0, 3.0});
    CHECK(s.sd[0] == doctest::Approx(1.0));
    CHECK(s.sd[1] == doctest::Approx(5.0));
    CHECK(s.sd[2] == doctest::Approx(1e-8));  // constant feature is floored
    const auto z = s.transform({3.0, 25.0, 3.0});
    CHECK(z[0] == doctest::Approx(2.0));
    CHECK(z[1] == doctest::Approx(2.0));
    CHECK(z[2] == doctest::Approx(0.0));

    CHECK_THROWS_AS(s.transform({1.0}), std::invalid_argument);
    StandardScaler bad;
    CHECK_THROWS_AS(bad.fit({}), std::invalid_argument);
    CHECK_THROWS_AS(bad.fit({{1.0, 2.0}, {1.0}}), std::invalid_argument);
}

TEST_CASE("softmax loss gradient matches finite differences") {
    Rng rng(99);
    const int dim = 5, n_classes = 3;
    std::vector<std::vector<double>> feats;
    std::vector<int> labels;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> x(dim);
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        feats.push_back(x);
        labels.push_back(static_cast<int>(rng.uniform_int(0, n_classes - 1)));
    }
    std::vector<double> params(n_classes * dim + n_classes);
    for (auto& p : params) p = rng.uniform(-0.5, 0.5);

    std::vector<double> grad;
    softmax_loss_and_gradient(feats, labels, n_classes, params, 0.01, grad);
    REQUIRE(grad.size() == params.size());

    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t j = 0; j < params.size(); ++j) {
        std::vector<double> dummy, p2 = params;
        p2[j] = params[j] + h;
        const double lp = softmax_loss_and_gradient(feats, labels, n_classes, p2, 0.01, dummy);
        p2[j] = params[j] - h;
        const double lm = softmax_loss_and_gradient(feats, labels, n_classes, p2, 0.01, dummy);
        const double fd = (lp - lm) / (2.0 * h);
        worst = std::max(worst,
                         std::abs(fd - grad[j]) / std::max({std::abs(fd), std::abs(grad[j]), 1e-8}));
    }
    CHECK(worst < 1e-4);

    std::vector<double> g;
    CHECK_THROWS_AS(softmax_loss_and_gradient({}, {}, 3, params, 0.0, g),
                    std::invalid_argument);
    CHECK_THROWS_AS(softmax_loss_and_gradient(feats, labels, 3, {1.0, 2.0}, 0.0, g),
                    std::invalid_argument);
    std::vector<int> bad_labels = labels;
    bad_labels[0] = 3;
    CHECK_THROWS_AS(softmax_loss_and_gradient(feats, bad_labels, 3, params, 0.0, g),
                    std::invalid_argument);
}

TEST_CASE("extract_substack copies the y interval and shifts the origin") {
    Volume vol = Volume::centered({4, 6, 4}, {1, 2, 3});
    for (int z = 0; z < 4; ++z)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 4; ++x) vol.at(x, y, z) = static_cast<float>(100 * z + 10 * y + x);

    const Volume sub = extract_substack(vol, {2, 4});
    CHECK(sub.dims == std::array<int, 3>{4, 3, 4});
    CHECK(sub.origin_mm[0] == vol.origin_mm[0]);
    CHECK(sub.origin_mm[1] == doctest::Approx(vol.origin_mm[1] + 2 * 2.0));
    CHECK(sub.at(1, 0, 2) == vol.at(1, 2, 2));
    CHECK(sub.at(3, 2, 1) == vol.at(3, 4, 1));

    CHECK_THROWS_AS(extract_substack(vol, {-1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(extract_substack(vol, {3, 2}), std::invalid_argument);
    CHECK_THROWS_AS(extract_substack(vol, {0, 6}), std::invalid_argument);
}

TEST_CASE("split_sides mirrors the right half and re-centers origins") {
    Volume vol = Volume::centered({8, 4, 6}, {2, 2, 2});
    for (int z = 0; z < 6; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 8; ++x) vol.at(x, y, z) = static_cast<float>(100 * z + 10 * y + x);

    const auto [left, right] = split_sides(vol);
    CHECK(left.dims == std::array<int, 3>{4, 4, 6});
    CHECK(right.dims == std::array<int, 3>{4, 4, 6});
    CHECK(left.at(0, 1, 2) == vol.at(0, 1, 2));
    CHECK(left.at(3, 1, 2) == vol.at(3, 1, 2));
    CHECK(right.at(0, 1, 2) == vol.at(7, 1, 2));  // x = 0 is the lateral edge
    CHECK(right.at(3, 1, 2) == vol.at(4, 1, 2));  // largest x touches the midline
    CHECK(left.origin_mm[0] == doctest::Approx(-3.0));  // (4 - 1) * 2 / 2
    CHECK(right.origin_mm[0] == doctest::Approx(-3.0));
    CHECK(left.origin_mm[1] == vol.origin_mm[1]);
    CHECK(left.origin_mm[2] == vol.origin_mm[2]);

    // Mirroring the input swaps the halves bitwise (even width).
    Volume mirrored = vol;
    for (int z = 0; z < 6; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 8; ++x) mirrored.at(x, y, z) = vol.at(7 - x, y, z);
    const auto [ml, mr] = split_sides(mirrored);
    CHECK(ml.data == right.data);
    CHECK(mr.data == left.data);

    // Odd width: the extra midline column goes to the left half.
    Volume odd = Volume::centered({9, 4, 4}, {1, 1, 1});
    for (int z = 0; z < 4; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 9; ++x) odd.at(x, y, z) = static_cast<float>(100 * z + 10 * y + x);
    const auto [ol, orr] = split_sides(odd);
    CHECK(ol.dims[0] == 5);
    CHECK(orr.dims[0] == 4);
    CHECK(ol.at(4, 0, 0) == odd.at(4, 0, 0));
    CHECK(orr.at(0, 0, 0) == odd.at(8, 0, 0));
    CHECK(orr.at(3, 0, 0) == odd.at(5, 0, 0));

    CHECK_THROWS_AS(split_sides(Volume::centered({3, 6, 6}, {1, 1, 1})),
                    std::invalid_argument);
}

TEST_CASE("side classifier separates synthetic sinus contents") {
    const std::vector<Volume> train = side_bank(6, 21);
    std::vector<SideSample> samples;
    for (std::size_t i = 0; i < train.size(); ++i)
        samples.push_back({&train[i], bank_label(i)});

    const SideClassifier clf = train_side_classifier(samples, SideClassifierConfig{});

    const std::vector<Volume> held = side_bank(3, 22);
    int correct = 0;
    for (std::size_t i = 0; i < held.size(); ++i) {
        const auto probs = clf.predict_proba(held[i]);
        REQUIRE(probs.size() == 3);
        CHECK(std::abs(probs[0] + probs[1] + probs[2] - 1.0) < 1e-9);
        if (clf.predict(held[i]) == bank_label(i)) ++correct;
    }
    CHECK(correct == static_cast<int>(held.size()));
}

TEST_CASE("side classifier training is invariant to sample order") {
    const std::vector<Volume> train = side_bank(3, 31);
    std::vector<SideSample> fwd, rev;
    for (std::size_t i = 0; i < train.size(); ++i)
        fwd.push_back({&train[i], bank_label(i)});
    rev.assign(fwd.rbegin(), fwd.rend());

    const SideClassifier a = train_side_classifier(fwd, SideClassifierConfig{});
    const SideClassifier b = train_side_classifier(rev, SideClassifierConfig{});
    CHECK(a.weights() == b.weights());
    CHECK(a.bias() == b.bias());
    CHECK(a.scaler().mean == b.scaler().mean);
}

TEST_CASE("side classifier requires every class") {
    const std::vector<Volume> train = side_bank(2, 41);
    std::vector<SideSample> samples;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (bank_label(i) == DiagnosisLabel::FungalBall) continue;
        samples.push_back({&train[i], bank_label(i)});
    }
    CHECK_THROWS_AS(train_side_classifier(samples, SideClassifierConfig{}),
                    TrainingFailureError);
    CHECK_THROWS_AS(train_side_classifier({}, SideClassifierConfig{}), std::invalid_argument);
}

TEST_CASE("probability ties resolve toward the severer label") {
    const SideClassifier clf = constant_classifier();
    const Volume probe = Volume::centered({8, 8, 8}, {1, 1, 1}, 0.2f);
    const auto probs = clf.predict_proba(probe);
    CHECK(probs[0] == doctest::Approx(probs[2]));
    CHECK(clf.predict(probe) == DiagnosisLabel::FungalBall);
}

TEST_CASE("key-slice selector learns real phantom anatomy") {
    std::vector<GeneratedCase> cases;
    const std::array<std::pair<DiagnosisLabel, DiagnosisLabel>, 6> labels{{
        {DiagnosisLabel::Healthy, DiagnosisLabel::Chronic},
        {DiagnosisLabel::FungalBall, DiagnosisLabel::Healthy},
        {DiagnosisLabel::Chronic, DiagnosisLabel::FungalBall},
        {DiagnosisLabel::Healthy, DiagnosisLabel::Healthy},
        {DiagnosisLabel::FungalBall, DiagnosisLabel::FungalBall},
        {DiagnosisLabel::Chronic, DiagnosisLabel::Healthy},
    }};
    for (std::uint64_t s = 0; s < labels.size(); ++s) {
        cases.push_back(generate_case(500 + s, labels[s].first, labels[s].second,
                                      {48, 48, 48}));
    }
    std::vector<SelectorCase> train, held;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const SelectorCase sc{&cases[i].labeled.volume, cases[i].labeled.key_slice_range};
        (i < 4 ? train : held).push_back(sc);
    }
    const KeySliceSelector sel = train_key_slice_selector(train);
    CHECK(selector_slice_accuracy(sel, held) > 0.85);
    for (const auto& sc : held) {
        const auto interval = sel.select(*sc.volume);
        CHECK(interval[0] <= sc.key_range[1]);  // overlaps the true range
        CHECK(interval[1] >= sc.key_range[0]);
    }
}

TEST_CASE("selector rejects degenerate training input") {
    CHECK_THROWS_AS(train_key_slice_selector({}), std::invalid_argument);

    Volume vol = Volume::centered({8, 6, 8}, {1, 1, 1}, 0.5f);
    CHECK_THROWS_AS(train_key_slice_selector({{&vol, {2, 6}}}), std::invalid_argument);
    CHECK_THROWS_AS(train_key_slice_selector({{&vol, {4, 2}}}), std::invalid_argument);
    // All slices positive -> single class.
    CHECK_THROWS_AS(train_key_slice_selector({{&vol, {0, 5}}}), TrainingFailureError);
}

TEST_CASE("selector reports no sinus when nothing clears the threshold") {
    const KeySliceSelector sel(unit_scaler(kSliceFeatureCount),
                               std::vector<double>(kSliceFeatureCount, 0.0), -10.0, 0.5);
    const Volume vol = Volume::centered({16, 8, 16}, {1, 1, 1}, 0.3f);
    CHECK_THROWS_AS(sel.select(vol), NoSinusFoundError);
    CHECK(sel.slice_probability(coronal_slice(vol, 0)) < 1e-3);
}

TEST_CASE("diagnose runs the full two-stage pipeline on clean phantoms") {
    std::vector<GeneratedCase> cases;
    const std::array<std::pair<DiagnosisLabel, DiagnosisLabel>, 12> labels{{
        {DiagnosisLabel::Healthy, DiagnosisLabel::Chronic},
        {DiagnosisLabel::FungalBall, DiagnosisLabel::Healthy},
        {DiagnosisLabel::Chronic, DiagnosisLabel::FungalBall},
        {DiagnosisLabel::Healthy, DiagnosisLabel::FungalBall},
        {DiagnosisLabel::Chronic, DiagnosisLabel::Healthy},
        {DiagnosisLabel::FungalBall, DiagnosisLabel::Chronic},
        {DiagnosisLabel::Healthy, DiagnosisLabel::Healthy},
        {DiagnosisLabel::Chronic, DiagnosisLabel::Chronic},
        {DiagnosisLabel::FungalBall, DiagnosisLabel::FungalBall},
        {DiagnosisLabel::Healthy, DiagnosisLabel::Chronic},
        // Held out:
        {DiagnosisLabel::FungalBall, DiagnosisLabel::Healthy},
        {DiagnosisLabel::Chronic, DiagnosisLabel::FungalBall},
    }};
    for (std::uint64_t s = 0; s < labels.size(); ++s) {
        cases.push_back(generate_case(900 + s, labels[s].first, labels[s].second,
                                      {48, 48, 48}));
    }

    std::vector<SelectorCase> sel_cases;
    std::vector<Volume> sides;
    std::vector<DiagnosisLabel> side_labels;
    for (std::size_t i = 0; i < 10; ++i) {
        const auto& lc = cases[i].labeled;
        sel_cases.push_back({&lc.volume, lc.key_slice_range});
        auto [l, r] = split_sides(extract_substack(lc.volume, lc.key_slice_range));
        sides.push_back(std::move(l));
        side_labels.push_back(lc.labels[0]);
        sides.push_back(std::move(r));
        side_labels.push_back(lc.labels[1]);
    }
    std::vector<SideSample> samples;
    for (std::size_t i = 0; i < sides.size(); ++i) samples.push_back({&sides[i], side_labels[i]});

    const KeySliceSelector sel = train_key_slice_selector(sel_cases);
    const SideClassifier clf = train_side_classifier(samples, SideClassifierConfig{});

    int correct = 0, total = 0;
    for (std::size_t i = 10; i < cases.size(); ++i) {
        const Diagnosis d = diagnose(sel, clf, cases[i].labeled.volume);
        CHECK(d.slice_interval[0] <= d.slice_interval[1]);
        for (int s = 0; s < 2; ++s) {
            ++total;
            if (d.sides[s].label == cases[i].labeled.labels[s]) ++correct;
        }
    }
    CHECK(total == 4);
    CHECK(correct >= 3);  // clean volumes, distinct contents
}

TEST_CASE("occlusion saliency peaks on the evidence and handles flat input") {
    // Flat input with an input-blind classifier: every occlusion drop is
    // zero, so the normalized map is all zeros.
    const SideClassifier flat_clf = constant_classifier({0.0, 0.0, 0.5});
    const Volume flat = Volume::centered({12, 12, 12}, {1, 1, 1}, 0.3f);
    const Volume zmap = occlusion_saliency(flat_clf, flat, 4, 2);
    CHECK(zmap.dims == flat.dims);
    for (const float v : zmap.data) CHECK(v == 0.0f);

    CHECK_THROWS_AS(occlusion_saliency(flat_clf, flat, 16, 4), std::invalid_argument);
    CHECK_THROWS_AS(occlusion_saliency(flat_clf, flat, 0, 4), std::invalid_argument);
    CHECK_THROWS_AS(occlusion_saliency(flat_clf, flat, 4, 0), std::invalid_argument);

    // A trained classifier on a fungal side: the strongest evidence is the
    // hyperdense core at (19, 10, 16).
    const std::vector<Volume> train = side_bank(4, 51);
    std::vector<SideSample> samples;
    for (std::size_t i = 0; i < train.size(); ++i)
        samples.push_back({&train[i], bank_label(i)});
    const SideClassifier clf = train_side_classifier(samples, SideClassifierConfig{});

    Rng rng(52);
    const Volume fungal = make_side(DiagnosisLabel::FungalBall, rng);
    REQUIRE(clf.predict(fungal) == DiagnosisLabel::FungalBall);
    const Volume sal = occlusion_saliency(clf, fungal, 8, 4);
    float best = -1.0f;
    std::array<int, 3> arg{0, 0, 0};
    for (int z = 0; z < sal.dims[2]; ++z)
        for (int y = 0; y < sal.dims[1]; ++y)
            for (int x = 0; x < sal.dims[0]; ++x) {
                const float v = sal.at(x, y, z);
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
                if (v > best) {
                    best = v;
                    arg = {x, y, z};
                }
            }
    CHECK(best == 1.0f);
    // Patch averaging smears the peak, but it must stay in the core's
    // neighborhood (the volume is 32 voxels across).
    const double d2 = (arg[0] - 19.0) * (arg[0] - 19.0) + (arg[1] - 10.0) * (arg[1] - 10.0) +
                      (arg[2] - 16.0) * (arg[2] - 16.0);
    CHECK(d2 <= 12.0 * 12.0);
}

TEST_CASE("diagnosis model round-trips through its file format") {
    // Structured toy selector data: slices in the key range are brighter.
    Rng rng(61);
    std::vector<Volume> vols;
    for (int c = 0; c < 2; ++c) {
        Volume v = Volume::centered({16, 12, 16}, {1, 1, 1});
        for (int y = 0; y < 12; ++y) {
            const float base = (y >= 5 && y <= 7) ? 0.6f : 0.1f;
            for (int z = 0; z < 16; ++z)
                for (int x = 0; x < 16; ++x)
                    v.at(x, y, z) = base + static_cast<float>(rng.uniform(-0.05, 0.05));
        }
        vols.push_back(std::move(v));
    }
    std::vector<SelectorCase> sel_cases;
    for (const auto& v : vols) sel_cases.push_back({&v, {5, 7}});

    const std::vector<Volume> train = side_bank(2, 62);
    std::vector<SideSample> samples;
    for (std::size_t i = 0; i < train.size(); ++i)
        samples.push_back({&train[i], bank_label(i)});

    DiagnosisModel model;
    model.selector = train_key_slice_selector(sel_cases);
    model.classifier = train_side_classifier(samples, SideClassifierConfig{});

    const auto path = temp_file("cbctcad_test_diagnosis.cbm");
    save_diagnosis_model(path, model);
    const DiagnosisModel loaded = load_diagnosis_model(path);

    CHECK(loaded.selector.weights() == model.selector.weights());
    CHECK(loaded.selector.bias() == model.selector.bias());
    CHECK(loaded.selector.threshold() == model.selector.threshold());
    CHECK(loaded.selector.scaler().mean == model.selector.scaler().mean);
    CHECK(loaded.selector.scaler().sd == model.selector.scaler().sd);
    CHECK(loaded.classifier.weights() == model.classifier.weights());
    CHECK(loaded.classifier.bias() == model.classifier.bias());
    CHECK(loaded.classifier.high_threshold() == model.classifier.high_threshold());
    CHECK(loaded.classifier.predict_proba(train[0]) == model.classifier.predict_proba(train[0]));
    std::filesystem::remove(path);

    // A model file of the wrong kind is rejected.
    const auto bad = temp_file("cbctcad_test_wrong_kind.cbm");
    save_denoiser(bad, Denoiser::identity());
    CHECK_THROWS_AS(load_diagnosis_model(bad), IoError);
    std::filesystem::remove(bad);

    CHECK_THROWS_AS(load_diagnosis_model(temp_file("cbctcad_nope.cbm")), IoError);
}

}  // TEST_SUITE
