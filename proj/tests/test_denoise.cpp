#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "cbctcad/denoise.hpp"
#include "cbctcad/errors.hpp"
#include "cbctcad/metrics.hpp"
#include "cbctcad/rng.hpp"

using namespace cbctcad;

namespace {

Image random_image(int w, int h, Rng& rng, float lo = 0.0f, float hi = 1.0f) {
    Image img(w, h);
    for (auto& p : img.data)
        p = static_cast<float>(rng.uniform(lo, hi));
    return img;
}

Image smooth_image(int w, int h) {
    Image img(w, h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            img.at(r, c) = static_cast<float>(0.5 + 0.4 * std::sin(0.4 * r) * std::cos(0.3 * c));
    return img;
}

// Isotropic total variation with forward differences (the quantity the
// Chambolle scheme decreases).
double total_variation(const Image& img) {
    double tv = 0.0;
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            const double dx = c + 1 < img.width ? img.at(r, c + 1) - img.at(r, c) : 0.0;
            const double dy = r + 1 < img.height ? img.at(r + 1, c) - img.at(r, c) : 0.0;
            tv += std::sqrt(dx * dx + dy * dy);
        }
    return tv;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_SUITE("denoise") {

TEST_CASE("reference training defaults") {
    const ConvDenoiserConfig cfg;
    CHECK(cfg.epochs == 20);
    CHECK(cfg.batch_size == 18);
    CHECK(cfg.learning_rate == doctest::Approx(1e-4));
}

TEST_CASE("parameter count follows the architecture") {
    // conv1 1->C, conv2 C->C, conv3 2C->C, conv4 C->1, all 3x3 with bias.
    CHECK(ConvDenoiser(1).parameter_count() == 49);
    CHECK(ConvDenoiser(8).parameter_count() == 1897);
}

TEST_CASE("analytic gradients match finite differences") {
    ConvDenoiser net(1);
    net.init_weights(123);
    Rng rng(5);
    std::vector<Image> noisy{random_image(8, 8, rng)};
    std::vector<Image> clean{random_image(8, 8, rng)};

    std::vector<double> grad;
    net.loss_and_gradient(noisy, clean, grad);
    REQUIRE(grad.size() == net.parameter_count());

    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        std::vector<double> dummy;
        const double saved = net.parameters()[i];
        net.parameters()[i] = saved + h;
        const double lp = net.loss_and_gradient(noisy, clean, dummy);
        net.parameters()[i] = saved - h;
        const double lm = net.loss_and_gradient(noisy, clean, dummy);
        net.parameters()[i] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
        worst = std::max(worst, std::abs(fd - grad[i]) / denom);
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("apply validates slice shapes") {
    const ConvDenoiser net(2);
    CHECK_THROWS_AS(net.apply(Image(7, 8, 0.0f)), std::invalid_argument);   // odd width
    CHECK_THROWS_AS(net.apply(Image(8, 2, 0.0f)), std::invalid_argument);   // too small
    CHECK_NOTHROW(ConvDenoiser(2).apply(Image(8, 8, 0.0f)));
}

TEST_CASE("training on identical pairs stays near the identity") {
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 6; ++i) {
        Image img = smooth_image(16, 16);
        for (auto& p : img.data) p += 0.01f * i;
        pairs.push_back({img, img});
    }
    ConvDenoiserConfig cfg;
    cfg.channels = 4;
    cfg.epochs = 30;
    cfg.learning_rate = 1e-3;
    const DenoiserTrainingResult r = train_denoiser(pairs, cfg);
    REQUIRE(r.history.size() == 30);
    CHECK(r.history.back().mean_loss <= r.history.front().mean_loss);

    const Image out = r.model.apply(pairs[0].noisy);
    double rmse = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double d = out.data[i] - pairs[0].noisy.data[i];
        rmse += d * d;
    }
    rmse = std::sqrt(rmse / out.data.size());
    CHECK(rmse < 0.02);
}

TEST_CASE("training reduces the loss on noisy pairs and is deterministic") {
    Rng rng(9);
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 10; ++i) {
        const Image clean = smooth_image(16, 16);
        Image noisy = clean;
        for (auto& p : noisy.data) p += static_cast<float>(rng.normal(0.0, 0.08));
        pairs.push_back({noisy, clean});
    }
    ConvDenoiserConfig cfg;
    cfg.channels = 4;
    cfg.epochs = 20;
    cfg.learning_rate = 1e-3;
    const DenoiserTrainingResult a = train_denoiser(pairs, cfg);
    CHECK(a.history.back().mean_loss < a.history.front().mean_loss);
    for (const auto& e : a.history) CHECK(std::isfinite(e.mean_loss));

    const DenoiserTrainingResult b = train_denoiser(pairs, cfg);
    CHECK(a.model.parameters() == b.model.parameters());
}

TEST_CASE("training rejects bad input") {
    CHECK_THROWS_AS(train_denoiser({}, ConvDenoiserConfig{}), std::invalid_argument);
    std::vector<TrainingPair> bad{{Image(8, 8, 0.0f), Image(16, 16, 0.0f)}};
    CHECK_THROWS_AS(train_denoiser(bad, ConvDenoiserConfig{}), std::invalid_argument);
}

TEST_CASE("tv with zero weight is the data term") {
    Rng rng(3);
    const Image noisy = random_image(24, 24, rng);
    const Image out = tv_denoise(noisy, TvConfig{0.0, 30, 0.125});
    for (std::size_t i = 0; i < out.data.size(); ++i)
        CHECK(std::abs(out.data[i] - noisy.data[i]) < 1e-6);
}

TEST_CASE("tv preserves flat images and denoises steps") {
    const Image flat(20, 20, 0.4f);
    const Image out = tv_denoise(flat, TvConfig{0.2, 40, 0.125});
    for (const float f : out.data) CHECK(f == doctest::Approx(0.4f).epsilon(1e-6));

    // Two-level step plus seeded noise: the estimate must move toward the
    // clean image and lower the total variation.
    Image clean(32, 32);
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) clean.at(r, c) = c < 16 ? 0.2f : 0.8f;
    Rng rng(17);
    Image noisy = clean;
    for (auto& p : noisy.data) p += static_cast<float>(rng.normal(0.0, 0.05));

    const Image den = tv_denoise(noisy, TvConfig{0.1, 60, 0.125});
    CHECK(mse(den, clean) < mse(noisy, clean));
    CHECK(total_variation(den) < total_variation(noisy));
}

TEST_CASE("identity denoiser is bit-exact and deterministic") {
    Rng rng(31);
    Volume vol = Volume::centered({16, 6, 16}, {2, 2, 2});
    for (auto& f : vol.data) f = static_cast<float>(rng.uniform01());
    const Denoiser id = Denoiser::identity();
    const Volume out = id.denoise_volume(vol);
    CHECK(out.data == vol.data);
    CHECK(out.dims == vol.dims);
    CHECK(out.spacing_mm == vol.spacing_mm);
    CHECK(out.origin_mm == vol.origin_mm);
}

TEST_CASE("learned denoiser round-trips through its file format") {
    std::vector<TrainingPair> pairs{{smooth_image(8, 8), smooth_image(8, 8)}};
    ConvDenoiserConfig cfg;
    cfg.channels = 2;
    cfg.epochs = 2;
    const Denoiser d = Denoiser::learned(train_denoiser(pairs, cfg).model);

    const auto path = temp_file("cbctcad_test_denoiser.cbm");
    save_denoiser(path, d);
    const Denoiser loaded = load_denoiser(path);
    CHECK(loaded.kind == DenoiserKind::Learned);
    CHECK(loaded.net.parameters() == d.net.parameters());

    const Denoiser tv = Denoiser::make_tv(TvConfig{0.07, 25, 0.125});
    save_denoiser(path, tv);
    const Denoiser tv2 = load_denoiser(path);
    CHECK(tv2.kind == DenoiserKind::Tv);
    CHECK(tv2.tv.weight == doctest::Approx(0.07));
    CHECK(tv2.tv.iterations == 25);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_denoiser(temp_file("cbctcad_missing.cbm")), IoError);
}

TEST_CASE("denoiser kind names round-trip") {
    CHECK(denoiser_kind_from_name("identity") == DenoiserKind::Identity);
    CHECK(denoiser_kind_from_name("tv") == DenoiserKind::Tv);
    CHECK(denoiser_kind_from_name("learned") == DenoiserKind::Learned);
    CHECK_THROWS_AS(denoiser_kind_from_name("magic"), std::invalid_argument);
    CHECK(std::string(denoiser_kind_name(DenoiserKind::Tv)) == "tv");
}

TEST_CASE("evaluate_denoiser reports psnr/ssim statistics") {
    Rng rng(41);
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 3; ++i) {
        const Image clean = smooth_image(16, 16);
        Image noisy = clean;
        for (auto& p : noisy.data) p += static_cast<float>(rng.normal(0.0, 0.1));
        pairs.push_back({noisy, clean});
    }
    const DenoiseQuality q = evaluate_denoiser(Denoiser::identity(), pairs);
    CHECK(q.n_slices == 3);
    CHECK(q.psnr_mean > 5.0);
    CHECK(q.psnr_mean < 40.0);
    CHECK(q.ssim_mean > 0.0);
    CHECK(q.ssim_mean < 1.0);
    CHECK(q.psnr_sd >= 0.0);

    const DenoiseQuality one = evaluate_denoiser(Denoiser::identity(), {pairs[0]});
    CHECK(one.psnr_sd == 0.0);
    CHECK(one.ssim_sd == 0.0);

    CHECK_THROWS_AS(evaluate_denoiser(Denoiser::identity(), {}), std::invalid_argument);
}

}  // TEST_SUITE
