#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cbctcad/geometry.hpp"

namespace cbctcad {

// ---------------------------------------------------------------------------
// Learned slice denoiser: a small two-scale convolutional encoder-decoder
// that predicts the residual (artifact) image, trained with MSE against
// clean slices. All math is double precision and fully deterministic.
// ---------------------------------------------------------------------------

struct ConvDenoiserConfig {
    int channels = 8;         // feature channels per scale
    int epochs = 20;
    int batch_size = 18;
    double learning_rate = 1e-4;
    std::uint64_t seed = 7;
    // Adam moments.
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Parameter layout (all 3x3 convolutions, zero padded, stride 1):
//   conv1: 1 -> C, ReLU
//   pool:  2x2 mean
//   conv2: C -> C, ReLU
//   up:    nearest 2x
//   conv3: concat(conv1, up) = 2C -> C, ReLU
//   conv4: C -> 1, linear; output = input + conv4 (residual prediction)
class ConvDenoiser {
public:
    explicit ConvDenoiser(int channels = 8);

    int channels() const { return channels_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::vector<double>& parameters() { return params_; }
    const std::vector<double>& parameters() const { return params_; }

    void init_weights(std::uint64_t seed);

    // Input sizes must be even (for the 2x pooling) and >= 4.
    Image apply(const Image& noisy) const;

    // Mean-squared-error over the batch plus the gradient with respect to
    // every parameter. Exposed so gradients can be checked by finite
    // differences. noisy/clean are parallel arrays of same-shaped slices.
    double loss_and_gradient(const std::vector<Image>& noisy,
                             const std::vector<Image>& clean,
                             std::vector<double>& gradient) const;

private:
    int channels_;
    std::vector<double> params_;
};

struct TrainingPair {
    Image noisy;
    Image clean;
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
};

struct DenoiserTrainingResult {
    ConvDenoiser model;
    std::vector<EpochStats> history;
};

// Trains with shuffled mini-batches (seeded) and Adam under a cosine
// learning-rate decay (from learning_rate to ~0 across epochs). Throws
// std::invalid_argument on an empty/mismatched training set and
// TrainingFailureError (naming the epoch) if the loss goes non-finite.
DenoiserTrainingResult train_denoiser(const std::vector<TrainingPair>& pairs,
                                      const ConvDenoiserConfig& config);

// ---------------------------------------------------------------------------
// Total-variation baseline (Chambolle dual projection) and the common
// denoiser interface used by the diagnosis pipeline.
// ---------------------------------------------------------------------------

struct TvConfig {
    double weight = 0.1;  // lambda in ||x - f||^2 + lambda * TV(x)
    int iterations = 40;
    double tau = 0.125;
};
Image tv_denoise(const Image& noisy, const TvConfig& config);

enum class DenoiserKind { Identity, Tv, Learned };
DenoiserKind denoiser_kind_from_name(const std::string& name);
const char* denoiser_kind_name(DenoiserKind k);

// Polymorphic denoiser handle: identity, fixed-parameter TV, or a trained
// convolutional model.
struct Denoiser {
    DenoiserKind kind = DenoiserKind::Identity;
    TvConfig tv;
    ConvDenoiser net{8};

    static Denoiser identity();
    static Denoiser make_tv(const TvConfig& config);
    static Denoiser learned(ConvDenoiser net);

    Image denoise_slice(const Image& slice) const;
    // Applies the slice denoiser to every coronal slice. Throws
    // std::invalid_argument when slice dimensions are incompatible with the
    // model (learned kind needs even width/height).
    Volume denoise_volume(const Volume& vol) const;
};

void save_denoiser(const std::filesystem::path& path, const Denoiser& d);
Denoiser load_denoiser(const std::filesystem::path& path);

struct DenoiseQuality {
    double psnr_mean = 0.0;
    double psnr_sd = 0.0;
    double ssim_mean = 0.0;
    double ssim_sd = 0.0;
    int n_slices = 0;
};
// PSNR/SSIM of denoised slices against clean references (data range 1.0).
// Infinite PSNR values (exact matches) are excluded from the mean/sd and
// counted separately upstream; they cannot occur for real reconstructions.
DenoiseQuality evaluate_denoiser(const Denoiser& d, const std::vector<TrainingPair>& pairs);

}  // namespace cbctcad
